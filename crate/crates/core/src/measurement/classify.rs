use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::NodeId;

use super::ProbeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierThresholds {
    /// Minimum probe count for a static device.
    pub static_min_probes: u64,
    /// Maximum RSS variance (dB²) at the dominant sniffer for a static device.
    pub static_max_variance: f64,
    pub pass_max_probes: u64,
    pub pass_max_dwell_s: f64,
    pub pass_max_rss: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        ClassifierThresholds {
            static_min_probes: 1000,
            static_max_variance: 1.0,
            pass_max_probes: 5,
            pass_max_dwell_s: 60.0,
            pass_max_rss: -80.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Tracked,
    Static,
    PassingBy,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Statistics of one device over its whole observation span.
#[derive(Debug, Clone, Default)]
pub struct DeviceEvidence {
    per_sniffer: BTreeMap<NodeId, Welford>,
    probe_count: u64,
    first_seen: f64,
    last_seen: f64,
    max_rss: f64,
}

impl DeviceEvidence {
    pub fn new() -> Self {
        DeviceEvidence {
            first_seen: f64::INFINITY,
            last_seen: f64::NEG_INFINITY,
            max_rss: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ProbeRecord>) -> Self {
        let mut ev = DeviceEvidence::new();
        for r in records {
            ev.push(r);
        }
        ev
    }

    pub fn push(&mut self, r: &ProbeRecord) {
        self.probe_count += 1;
        self.first_seen = self.first_seen.min(r.timestamp);
        self.last_seen = self.last_seen.max(r.timestamp);
        self.max_rss = self.max_rss.max(r.rss);
        self.per_sniffer.entry(r.sniffer_id.clone()).or_default().push(r.rss);
    }

    pub fn probe_count(&self) -> u64 {
        self.probe_count
    }

    pub fn dwell_span(&self) -> f64 {
        if self.probe_count == 0 {
            0.0
        } else {
            self.last_seen - self.first_seen
        }
    }

    pub fn max_rss(&self) -> f64 {
        self.max_rss
    }

    pub fn sniffer_count(&self) -> usize {
        self.per_sniffer.len()
    }

    /// RSS sample variance at the sniffer that heard the most probes.
    pub fn dominant_variance(&self) -> f64 {
        self.per_sniffer
            .values()
            .max_by_key(|w| w.n)
            .map(Welford::variance)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub class: DeviceClass,
    pub evidence: DeviceEvidence,
}

/// Static: many probes with near-constant RSS at the dominant sniffer.
/// Passing-by: few, weak probes over a short span. Anything else is tracked.
pub fn classify_device(ev: &DeviceEvidence, th: &ClassifierThresholds) -> DeviceClass {
    if ev.probe_count() >= th.static_min_probes && ev.dominant_variance() <= th.static_max_variance {
        DeviceClass::Static
    } else if ev.probe_count() <= th.pass_max_probes
        && ev.dwell_span() <= th.pass_max_dwell_s
        && ev.max_rss() <= th.pass_max_rss
    {
        DeviceClass::PassingBy
    } else {
        DeviceClass::Tracked
    }
}
