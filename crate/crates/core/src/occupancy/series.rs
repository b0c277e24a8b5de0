use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;
use crate::error::Result;

use super::presence::{OccupancySnapshot, PresenceTable};

/// A device's zone at a point in time, from a measured or coasted window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneObservation {
    pub device_id: DeviceId,
    pub time: f64,
    pub zone: usize,
    /// Measured windows refresh `last_seen`; coasted ones only move the zone.
    pub measured: bool,
}

/// Snapshots every `resolution` seconds over `[start, end)`:
/// `ceil((end − start)/resolution)` of them, the first at `start`.
/// Observations are merged in `(time, device)` order.
pub fn occupancy_series(
    observations: &[ZoneObservation],
    num_zones: usize,
    grace: f64,
    start: f64,
    end: f64,
    resolution: f64,
) -> Result<Vec<OccupancySnapshot>> {
    let mut obs: Vec<&ZoneObservation> = observations.iter().collect();
    obs.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| a.device_id.cmp(&b.device_id)));
    let n = if end > start && resolution > 0.0 { ((end - start) / resolution).ceil() as usize } else { 0 };
    let mut table = PresenceTable::new(num_zones, grace);
    let mut out = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let t = start + i as f64 * resolution;
        while next < obs.len() && obs[next].time <= t {
            let o = obs[next];
            if o.measured {
                table.update_presence(&o.device_id, o.zone, o.time)?;
            } else {
                table.coast_to(&o.device_id, o.zone, o.time)?;
            }
            next += 1;
        }
        out.push(table.snapshot(t));
    }
    Ok(out)
}

/// Continuous presence interval of one device: from its first measurement
/// to `grace` after its last, splitting where a gap exceeds `grace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub device_id: DeviceId,
    pub start: f64,
    pub end: f64,
}

impl Episode {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

pub fn presence_episodes(observations: &[ZoneObservation], grace: f64) -> Vec<Episode> {
    let mut by_device: BTreeMap<&DeviceId, Vec<f64>> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.measured) {
        by_device.entry(&o.device_id).or_default().push(o.time);
    }
    let mut out = Vec::new();
    for (dev, mut times) in by_device {
        times.sort_by(f64::total_cmp);
        let mut first = times[0];
        let mut last = times[0];
        for &t in &times[1..] {
            if t - last > grace {
                out.push(Episode { device_id: dev.clone(), start: first, end: last + grace });
                first = t;
            }
            last = t;
        }
        out.push(Episode { device_id: dev.clone(), start: first, end: last + grace });
    }
    out
}

pub fn dwell_durations(observations: &[ZoneObservation], grace: f64) -> Vec<f64> {
    presence_episodes(observations, grace).iter().map(Episode::duration).collect()
}

/// One-hour bin of the dwell histogram; `upper_h = None` for the open
/// last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellBin {
    pub lower_h: u32,
    pub upper_h: Option<u32>,
    pub count: usize,
    pub percent: f64,
}

impl DwellBin {
    pub fn label(&self) -> String {
        match self.upper_h {
            Some(u) => format!("{}-{}h", self.lower_h, u),
            None => format!("{}+h", self.lower_h),
        }
    }
}

/// Hour bins `[0,1) … [11,12)` and `12+`.
pub fn dwell_histogram(durations_s: &[f64]) -> Vec<DwellBin> {
    const OPEN: u32 = 12;
    let mut counts = [0usize; OPEN as usize + 1];
    for &d in durations_s {
        let h = (d / 3600.0).floor().max(0.0) as usize;
        counts[h.min(OPEN as usize)] += 1;
    }
    let total = durations_s.len();
    counts
        .iter()
        .enumerate()
        .map(|(i, &count)| DwellBin {
            lower_h: i as u32,
            upper_h: (i < OPEN as usize).then_some(i as u32 + 1),
            count,
            percent: if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 },
        })
        .collect()
}
