use nalgebra::{Matrix2, Matrix4x2, Vector2};

use crate::geometry::Point;

use super::model::{Model, ModelBank, State, StateCov};

/// Intermediate quantities of one predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanStep {
    pub predicted_mean: State,
    pub predicted_cov: StateCov,
    pub innovation: Vector2<f64>,
    pub innovation_cov: Matrix2<f64>,
    pub gain: Matrix4x2<f64>,
    pub mean: State,
    pub cov: StateCov,
}

/// `m⁻ = A m`, `U⁻ = A U Aᵀ + Q`.
pub fn predict(mean: &State, cov: &StateCov, bank: &ModelBank) -> (State, StateCov) {
    (bank.a * mean, bank.a * cov * bank.a.transpose() + bank.process)
}

pub fn symmetrize(cov: &StateCov) -> StateCov {
    (cov + cov.transpose()) * 0.5
}

/// Standard measurement update with the model's measurement covariance.
/// Returns `None` when the innovation covariance cannot be inverted.
pub fn update(predicted_mean: &State, predicted_cov: &StateCov, bank: &ModelBank, model: Model, y: &Point) -> Option<KalmanStep> {
    let h = &bank.h;
    let innovation = y - h * predicted_mean;
    let innovation_cov = h * predicted_cov * h.transpose() + bank.r(model);
    let s_inv = innovation_cov.try_inverse()?;
    let gain = predicted_cov * h.transpose() * s_inv;
    let mean = predicted_mean + gain * innovation;
    let cov = symmetrize(&(predicted_cov - gain * innovation_cov * gain.transpose()));
    if !mean.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(KalmanStep {
        predicted_mean: *predicted_mean,
        predicted_cov: *predicted_cov,
        innovation,
        innovation_cov,
        gain,
        mean,
        cov,
    })
}

/// Scales the velocity components down to `v_max` when exceeded.
pub fn clamp_speed(mean: &mut State, v_max: f64) {
    let speed = mean[2].hypot(mean[3]);
    if speed > v_max {
        let k = v_max / speed;
        mean[2] *= k;
        mean[3] *= k;
    }
}
