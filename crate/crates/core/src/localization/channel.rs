use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-distance path-loss parameters as seen by the estimator.
///
/// When a parameter is flagged unknown its value is the current working
/// estimate (calibration default, refined by NLS as windows go by).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// RSS at the reference distance, dBm.
    pub p0: f64,
    /// Path-loss exponent.
    pub n: f64,
    /// Reference distance, meters.
    pub d0: f64,
    pub p0_known: bool,
    pub n_known: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { p0: -35.0, n: 3.0, d0: 1.0, p0_known: true, n_known: true }
    }
}

impl ChannelParams {
    pub fn known(p0: f64, n: f64) -> Self {
        ChannelParams { p0, n, d0: 1.0, p0_known: true, n_known: true }
    }

    pub fn all_known(&self) -> bool {
        self.p0_known && self.n_known
    }

    /// Blends NLS channel estimates into the working values of the unknown
    /// parameters with an exponential moving average.
    pub fn absorb(&mut self, aux: &ChannelAux, weight: f64) {
        if !self.p0_known {
            if let Some(p0) = aux.p0.filter(|v| v.is_finite()) {
                self.p0 = (1.0 - weight) * self.p0 + weight * p0;
            }
        }
        if !self.n_known {
            if let Some(n) = aux.n.filter(|v| v.is_finite() && *v > 0.0) {
                self.n = (1.0 - weight) * self.n + weight * n;
            }
        }
    }
}

/// Channel quantities recovered alongside an NLS position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelAux {
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    /// Decoded P0 estimate, dBm.
    pub p0: Option<f64>,
    /// Decoded path-loss exponent estimate.
    pub n: Option<f64>,
}

/// Inverts the log-distance model: `d = d0 · 10^((P0 − p) / (10 n))`.
pub fn range_from_rss(p: f64, ch: &ChannelParams) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::NonFinite("rss"));
    }
    Ok(ch.d0 * 10f64.powf((ch.p0 - p) / (10.0 * ch.n)))
}

/// Mean RSS at distance `d` (no shadowing).
pub fn rss_from_range(d: f64, ch: &ChannelParams) -> f64 {
    ch.p0 - 10.0 * ch.n * (d / ch.d0).log10()
}
