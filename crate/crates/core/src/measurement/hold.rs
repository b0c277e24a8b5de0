use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;

use super::{MeasurementEntry, WindowedMeasurement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldValue {
    pub rss: f64,
    pub hold_age: u32,
}

/// Sample-and-hold over one sniffer's window sequence.
///
/// `fresh[k]` is the representative RSS of window `k` when at least one
/// probe arrived, `None` otherwise. A gap of `l <= hold` windows repeats the
/// last fresh value with `hold_age = l`; longer gaps yield `None`.
pub fn hold_sequence(fresh: &[Option<f64>], hold: usize) -> Vec<Option<HeldValue>> {
    let mut last: Option<(usize, f64)> = None;
    fresh
        .iter()
        .enumerate()
        .map(|(k, f)| match f {
            Some(v) => {
                last = Some((k, *v));
                Some(HeldValue { rss: *v, hold_age: 0 })
            }
            None => match last {
                Some((j, v)) if k - j <= hold => Some(HeldValue { rss: v, hold_age: (k - j) as u32 }),
                _ => None,
            },
        })
        .collect()
}

/// Builds the per-window available sets for one device.
///
/// `fresh` maps window index → node index → fresh representative RSS.
/// Windows whose available set is empty are not emitted.
pub fn apply_sample_and_hold(
    device: &DeviceId,
    fresh: &BTreeMap<i64, BTreeMap<usize, f64>>,
    hold: usize,
) -> Vec<WindowedMeasurement> {
    let (Some(&first), Some(&last)) = (fresh.keys().next(), fresh.keys().next_back()) else {
        return Vec::new();
    };
    let mut latest: BTreeMap<usize, (i64, f64)> = BTreeMap::new();
    let mut out = Vec::new();
    for k in first..=last + hold as i64 {
        if let Some(fresh_k) = fresh.get(&k) {
            for (&node, &rss) in fresh_k {
                latest.insert(node, (k, rss));
            }
        }
        latest.retain(|_, (j, _)| k - *j <= hold as i64);
        if latest.is_empty() {
            continue;
        }
        let entries = latest
            .iter()
            .map(|(&node, &(j, rss))| MeasurementEntry { node, rss, hold_age: (k - j) as u32 })
            .collect();
        out.push(WindowedMeasurement { device_id: device.clone(), window: k, entries });
    }
    out
}
