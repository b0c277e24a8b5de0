use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::localization::ChannelParams;
use crate::measurement::ProbeRecord;
use crate::deployment::DeviceId;

/// Tapped perturbation added to the flat path in linear power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultipathProfile {
    pub taps: usize,
    /// Power of tap k relative to the direct path is `decay^k · Exp(1)`.
    pub decay: f64,
}

impl Default for MultipathProfile {
    fn default() -> Self {
        MultipathProfile { taps: 3, decay: 0.5 }
    }
}

/// Logistic detection probability in the margin above threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionModel {
    /// Margin (dB) at which detection is 50% likely.
    pub offset_db: f64,
    /// Logistic scale, dB.
    pub scale_db: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel { offset_db: 3.0, scale_db: 2.0 }
    }
}

impl DetectionModel {
    pub fn probability(&self, rss: f64, threshold: f64) -> f64 {
        if rss < threshold {
            return 0.0;
        }
        1.0 / (1.0 + (-(rss - threshold - self.offset_db) / self.scale_db).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimChannelConfig {
    pub p0: f64,
    pub n: f64,
    pub d0: f64,
    pub shadowing_sigma: f64,
    pub noise_floor: f64,
    pub detection_threshold: f64,
    pub multipath: Option<MultipathProfile>,
    pub detection: DetectionModel,
    /// Forces the detection probability to this value when set (testing).
    pub detection_override: Option<f64>,
}

impl Default for SimChannelConfig {
    fn default() -> Self {
        SimChannelConfig {
            p0: -35.0,
            n: 4.8,
            d0: 1.0,
            shadowing_sigma: 6.0,
            noise_floor: -90.0,
            detection_threshold: -90.0,
            multipath: None,
            detection: DetectionModel::default(),
            detection_override: None,
        }
    }
}

impl SimChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shadowing_sigma >= 0.0) {
            return Err(Error::Config("shadowing_sigma must be >= 0".into()));
        }
        if !(self.detection_threshold >= self.noise_floor) {
            return Err(Error::Config("detection_threshold must be >= noise_floor".into()));
        }
        if !(self.n > 0.0 && self.d0 > 0.0) {
            return Err(Error::Config("path-loss exponent and d0 must be > 0".into()));
        }
        if let Some(p) = self.detection_override {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("detection_override must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// The same channel as seen by an estimator that knows P0 and n.
    pub fn known_params(&self) -> ChannelParams {
        ChannelParams { p0: self.p0, n: self.n, d0: self.d0, p0_known: true, n_known: true }
    }

    /// Noise-free received power at distance `d` (clamped below at d0).
    pub fn mean_rss(&self, d: f64) -> f64 {
        self.p0 - 10.0 * self.n * (d.max(self.d0) / self.d0).log10()
    }

    /// Distance at which the mean RSS sits at the 50% detection point.
    pub fn nominal_range(&self) -> f64 {
        let p = self.detection_threshold + self.detection.offset_db;
        self.d0 * 10f64.powf((self.p0 - p) / (10.0 * self.n))
    }

    /// One RSS draw at distance `d`.
    pub fn sample_rss<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> f64 {
        let mut rss = self.mean_rss(d);
        if self.shadowing_sigma > 0.0 {
            let normal = Normal::new(0.0, self.shadowing_sigma).expect("sigma >= 0");
            rss += normal.sample(rng);
        }
        if let Some(mp) = &self.multipath {
            let direct = 10f64.powf(rss / 10.0);
            let mut total = direct;
            for k in 1..=mp.taps {
                let e: f64 = Exp1.sample(rng);
                total += direct * mp.decay.powi(k as i32) * e;
            }
            rss = 10.0 * total.log10();
        }
        rss
    }

    pub fn detection_probability(&self, rss: f64) -> f64 {
        if rss < self.detection_threshold {
            return 0.0;
        }
        match self.detection_override {
            Some(p) => p,
            None => self.detection.probability(rss, self.detection_threshold),
        }
    }
}

/// Per-node RSS draws and detection for one emission. Nodes are visited in
/// table order so the draw sequence is fixed for a given RNG state.
pub fn observe<R: Rng + ?Sized>(
    t: f64,
    position: &Point,
    device: &DeviceId,
    deployment: &Deployment,
    ch: &SimChannelConfig,
    rng: &mut R,
) -> Vec<ProbeRecord> {
    let mut out = Vec::new();
    for node in deployment.nodes() {
        let d = (node.position - position).norm();
        let rss = ch.sample_rss(d, rng);
        let u: f64 = rng.random();
        let threshold = ch.detection_threshold.max(node.detection_threshold);
        if rss >= threshold && u < ch.detection_probability(rss) {
            out.push(ProbeRecord { timestamp: t, sniffer_id: node.id.clone(), device_id: device.clone(), rss });
        }
    }
    out
}
