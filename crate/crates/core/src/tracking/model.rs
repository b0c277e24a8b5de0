use std::fmt;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub type State = Vector4<f64>;
pub type StateCov = Matrix4<f64>;

/// Model order, selected by the number of available reference nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    M1,
    M2,
    M3,
}

impl Model {
    /// `j = min(count, 3)`; `None` for an empty set.
    pub fn from_count(count: usize) -> Option<Model> {
        match count {
            0 => None,
            1 => Some(Model::M1),
            2 => Some(Model::M2),
            _ => Some(Model::M3),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Model::M1 => 1,
            Model::M2 => 2,
            Model::M3 => 3,
        }
    }

    pub fn from_index(j: u8) -> Option<Model> {
        Model::from_count(j as usize).filter(|_| (1..=3).contains(&j))
    }

    /// Divisor applied to the measurement variance.
    fn precision_factor(&self) -> f64 {
        match self {
            Model::M1 => 1.0,
            Model::M2 => 2.0,
            Model::M3 => 4.0,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Transition, process noise, measurement matrix and the per-model
/// measurement covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    pub dt: f64,
    /// Velocity spectral density, m²/s³.
    pub q: f64,
    pub sigma_m2: f64,
    pub a: Matrix4<f64>,
    pub process: Matrix4<f64>,
    pub h: Matrix2x4<f64>,
    r: [Matrix2<f64>; 3],
}

impl ModelBank {
    pub fn new(dt: f64, q: f64, sigma_m: f64) -> Self {
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let (t3, t2) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0);
        #[rustfmt::skip]
        let process = Matrix4::new(
            t3, 0.0, t2, 0.0,
            0.0, t3, 0.0, t2,
            t2, 0.0, dt, 0.0,
            0.0, t2, 0.0, dt,
        ) * q;
        #[rustfmt::skip]
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        let sigma_m2 = sigma_m * sigma_m;
        let r = [Model::M1, Model::M2, Model::M3].map(|m| Matrix2::identity() * (sigma_m2 / m.precision_factor()));
        ModelBank { dt, q, sigma_m2, a, process, h, r }
    }

    pub fn r(&self, model: Model) -> &Matrix2<f64> {
        &self.r[model.index() as usize - 1]
    }
}
