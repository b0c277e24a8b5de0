use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BurstSize {
    Fixed { size: u32 },
    /// `1 + Poisson(mean_extra)`, capped at `max`.
    Poisson { mean_extra: f64, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapDistribution {
    Fixed { seconds: f64 },
    Uniform { low: f64, high: f64 },
    /// Log-normal with the given median and log-space sigma, capped.
    LogNormal { median: f64, sigma: f64, max: f64 },
}

impl GapDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            GapDistribution::Fixed { seconds } => seconds,
            GapDistribution::Uniform { low, high } => rng.random_range(low..high),
            GapDistribution::LogNormal { median, sigma, max } => {
                let d = LogNormal::new(median.ln(), sigma).expect("validated");
                d.sample(rng).min(max)
            }
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            GapDistribution::Fixed { seconds } => seconds > 0.0,
            GapDistribution::Uniform { low, high } => low > 0.0 && high > low,
            GapDistribution::LogNormal { median, sigma, max } => median > 0.0 && sigma >= 0.0 && max > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{what}: gaps must be positive")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeProcessConfig {
    pub burst_size: BurstSize,
    pub intra_burst_gap: GapDistribution,
    pub inter_burst_gap: GapDistribution,
}

impl Default for ProbeProcessConfig {
    fn default() -> Self {
        ProbeProcessConfig {
            burst_size: BurstSize::Poisson { mean_extra: 3.0, max: 10 },
            intra_burst_gap: GapDistribution::Uniform { low: 0.02, high: 0.3 },
            inter_burst_gap: GapDistribution::LogNormal { median: 45.0, sigma: 1.0, max: 600.0 },
        }
    }
}

impl ProbeProcessConfig {
    pub fn validate(&self) -> Result<()> {
        self.intra_burst_gap.validate("intra_burst_gap")?;
        self.inter_burst_gap.validate("inter_burst_gap")?;
        match self.burst_size {
            BurstSize::Fixed { size: 0 } => Err(Error::Config("burst size must be >= 1".into())),
            BurstSize::Poisson { mean_extra, max } if !(mean_extra >= 0.0) || max == 0 => {
                Err(Error::Config("invalid burst size distribution".into()))
            }
            _ => Ok(()),
        }
    }

    fn burst_len<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self.burst_size {
            BurstSize::Fixed { size } => size,
            BurstSize::Poisson { mean_extra, max } => {
                let extra = if mean_extra > 0.0 { Poisson::new(mean_extra).expect("validated").sample(rng) as u32 } else { 0 };
                (1 + extra).min(max)
            }
        }
    }
}

/// Emission times in `[start, end)` from an alternating burst/idle renewal
/// process. The first burst starts a uniform fraction of one idle gap after
/// `start`.
pub fn gen_probes<R: Rng + ?Sized>(start: f64, end: f64, cfg: &ProbeProcessConfig, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if !(end > start) {
        return out;
    }
    let first: f64 = rng.random();
    let mut t = start + first * cfg.inter_burst_gap.sample(rng);
    while t < end {
        let n = cfg.burst_len(rng);
        let mut tb = t;
        for i in 0..n {
            if i > 0 {
                tb += cfg.intra_burst_gap.sample(rng);
            }
            if tb >= end {
                break;
            }
            out.push(tb);
        }
        t = tb + cfg.inter_burst_gap.sample(rng);
    }
    out
}
