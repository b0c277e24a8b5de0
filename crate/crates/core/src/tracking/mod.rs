//! Per-device IMM tracking over sampling windows.
//!
//! Every model shares the Wiener-velocity motion model; they differ in how
//! the position measurement is constructed and in its covariance, which
//! shrinks as more reference nodes are available. Model probabilities are
//! degenerate (the model is fixed by the availability count), so the IMM
//! output at each window is exactly the selected model's filter output.

mod imm;
mod kalman;
mod model;

pub use imm::{
    imm_step, init_track, measure_model1, measure_model2, model_select, DeviceTracker, StepKind, StepOutcome,
    TrackRecord, TrackerConfig,
};
pub use kalman::{clamp_speed, predict, symmetrize, update, KalmanStep};
pub use model::{Model, ModelBank, State, StateCov};

use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;

/// Kalman mean `(x, y, vx, vy)` and covariance for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub device_id: DeviceId,
    pub mean: State,
    pub cov: StateCov,
    /// Model used at the latest window; `None` after a coasting window.
    pub model: Option<Model>,
    pub last_fresh_window: i64,
    pub window: i64,
}

impl TrackState {
    pub fn position(&self) -> crate::geometry::Point {
        crate::geometry::Point::new(self.mean[0], self.mean[1])
    }

    pub fn speed(&self) -> f64 {
        self.mean[2].hypot(self.mean[3])
    }
}
