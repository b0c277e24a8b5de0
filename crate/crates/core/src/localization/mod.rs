//! Per-window position estimates from the available representative RSS set.
//!
//! The estimator depends on how many reference nodes heard the device and on
//! which channel parameters are known:
//!
//! | available | no prior track | prior track            |
//! |-----------|----------------|------------------------|
//! | 1         | H1 (coverage)  | Model-1 (toward prior) |
//! | 2         | H2 (segment)   | Model-2 (H2 ⊕ prior)   |
//! | 3         | LLS            | LLS                    |
//! | ≥ 4       | LLS, or NLS when P0/n are unknown       ||

mod channel;
mod dispatch;
mod gtrs;
mod heuristics;
mod lls;

pub use channel::{range_from_rss, rss_from_range, ChannelAux, ChannelParams};
pub use dispatch::{Localizer, LocalizerConfig};
pub use gtrs::{
    build_gtrs, locate_nls, solve_gtrs, solve_quadratic_constrained, ConstrainedSolution, GtrsProblem,
    GtrsSolution, GtrsTuning, GtrsVariant, N0_STARTS,
};
pub use heuristics::{locate_one_node, locate_two_nodes, toward, H1_GRID_SPACING};
pub use lls::{locate_lls, LlsError};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Which estimator produced a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    H1,
    H2,
    H3Lls,
    NlsV1,
    NlsV2,
    NlsV3,
    /// Single-node range projected toward the predicted position.
    Model1,
    /// Two-node estimate averaged with the predicted position.
    Model2,
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::H1 => "H1",
            Estimator::H2 => "H2",
            Estimator::H3Lls => "H3_LLS",
            Estimator::NlsV1 => "NLS_v1",
            Estimator::NlsV2 => "NLS_v2",
            Estimator::NlsV3 => "NLS_v3",
            Estimator::Model1 => "M1",
            Estimator::Model2 => "M2",
        }
    }

    pub fn is_nls(&self) -> bool {
        matches!(self, Estimator::NlsV1 | Estimator::NlsV2 | Estimator::NlsV3)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "H1" => Estimator::H1,
            "H2" => Estimator::H2,
            "H3_LLS" => Estimator::H3Lls,
            "NLS_v1" => Estimator::NlsV1,
            "NLS_v2" => Estimator::NlsV2,
            "NLS_v3" => Estimator::NlsV3,
            "M1" => Estimator::Model1,
            "M2" => Estimator::Model2,
            other => return Err(format!("unknown estimator tag {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quality {
    Good,
    /// A lower-order estimator was substituted (e.g. collinear nodes).
    Fallback,
    /// The constrained solver found no bracket and returned the unconstrained fit.
    LowQuality,
}

impl Quality {
    pub fn tag(&self) -> &'static str {
        match self {
            Quality::Good => "good",
            Quality::Fallback => "fallback",
            Quality::LowQuality => "low_quality",
        }
    }
}

impl FromStr for Quality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "good" => Quality::Good,
            "fallback" => Quality::Fallback,
            "low_quality" => Quality::LowQuality,
            other => return Err(format!("unknown quality tag {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub position: Point,
    pub estimator: Estimator,
    pub num_nodes_used: usize,
    pub aux: Option<ChannelAux>,
    pub quality: Quality,
}
