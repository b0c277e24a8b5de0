//! Probe log to per-device track records.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deployment::{Deployment, DeviceId};
use crate::error::Result;
use crate::localization::{ChannelParams, Localizer, LocalizerConfig};
use crate::measurement::{
    apply_sample_and_hold, assign_windows, classify_device, representative_rss, ClassifierThresholds, DeviceClass,
    DeviceEvidence, Diagnostics, ProbeRecord, SamplingWindowConfig,
};
use crate::occupancy::{ZoneMap, ZoneObservation};
use crate::tracking::{DeviceTracker, StepKind, TrackRecord, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window: SamplingWindowConfig,
    pub tracker: TrackerConfig,
    pub localizer: LocalizerConfig,
    pub classifier: ClassifierThresholds,
    /// Drop static and passing-by devices before tracking.
    pub classify: bool,
    /// Window origin, seconds. Defaults to 0, so window indices are absolute
    /// and comparable across logs; earlier records move it back along the grid.
    pub t0: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: SamplingWindowConfig::default(),
            tracker: TrackerConfig::default(),
            localizer: LocalizerConfig::default(),
            classifier: ClassifierThresholds::default(),
            classify: true,
            t0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub t0: f64,
    pub window_length: f64,
    /// Sorted by device, then window.
    pub records: Vec<TrackRecord>,
    pub classes: BTreeMap<DeviceId, DeviceClass>,
    pub diagnostics: Diagnostics,
}

impl PipelineOutput {
    /// Center time of window `k`.
    pub fn window_time(&self, k: i64) -> f64 {
        window_center(self.t0, self.window_length, k)
    }
}

pub fn window_center(t0: f64, window_length: f64, k: i64) -> f64 {
    t0 + (k as f64 + 0.5) * window_length
}

/// Drops records that cannot be used and counts why.
pub fn validate_records<'a>(
    records: &'a [ProbeRecord],
    deployment: &Deployment,
    diag: &mut Diagnostics,
) -> Vec<(&'a ProbeRecord, usize)> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        diag.records_in += 1;
        if !r.timestamp.is_finite() || !r.rss.is_finite() {
            diag.rejected_non_finite += 1;
            continue;
        }
        let Some(idx) = deployment.index_of(&r.sniffer_id) else {
            diag.rejected_unknown_sniffer += 1;
            continue;
        };
        if r.rss < deployment.node(idx).detection_threshold {
            diag.rejected_below_threshold += 1;
            continue;
        }
        out.push((r, idx));
    }
    out
}

/// Classifies, windows, holds and tracks every device in the log.
pub fn run_pipeline(
    records: &[ProbeRecord],
    deployment: &Deployment,
    channel: &ChannelParams,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let mut diagnostics = Diagnostics::default();
    let valid = validate_records(records, deployment, &mut diagnostics);
    let t_len = cfg.window.window_length;
    let t0 = cfg.t0.unwrap_or_else(|| {
        let first = valid.iter().map(|(r, _)| r.timestamp).fold(f64::INFINITY, f64::min);
        if first.is_finite() {
            ((first / t_len).floor() * t_len).min(0.0)
        } else {
            0.0
        }
    });

    let mut by_device: BTreeMap<&DeviceId, Vec<(&ProbeRecord, usize)>> = BTreeMap::new();
    for (r, idx) in valid {
        by_device.entry(&r.device_id).or_default().push((r, idx));
    }
    let mut classes = BTreeMap::new();
    let mut tracked = Vec::new();
    for (dev, recs) in by_device {
        let class = if cfg.classify {
            classify_device(&DeviceEvidence::from_records(recs.iter().map(|(r, _)| *r)), &cfg.classifier)
        } else {
            DeviceClass::Tracked
        };
        match class {
            DeviceClass::Tracked => diagnostics.devices_tracked += 1,
            DeviceClass::Static => diagnostics.devices_static += 1,
            DeviceClass::PassingBy => diagnostics.devices_passing_by += 1,
        }
        classes.insert(dev.clone(), class);
        if class == DeviceClass::Tracked {
            tracked.push((dev, recs));
        }
    }

    let localizer = Localizer::new(deployment.clone(), cfg.localizer);
    let bank = cfg.tracker.bank(t_len);
    let per_device: Vec<Result<(Vec<TrackRecord>, u64)>> = tracked
        .par_iter()
        .map(|(dev, recs)| {
            let (raw, _) = assign_windows(recs.iter().map(|(r, _)| *r), &cfg.window, t0);
            let node_of: BTreeMap<_, usize> = recs.iter().map(|(r, i)| (&r.sniffer_id, *i)).collect();
            let mut fresh: BTreeMap<i64, BTreeMap<usize, f64>> = BTreeMap::new();
            for (k, cells) in raw {
                for ((_, sniffer), samples) in cells {
                    if let Some(v) = representative_rss(&samples) {
                        fresh.entry(k).or_default().insert(node_of[&sniffer], v);
                    }
                }
            }
            let windows = apply_sample_and_hold(dev, &fresh, cfg.window.hold_length);
            let mut tracker = DeviceTracker::new((*dev).clone(), &localizer, &bank, &cfg.tracker, *channel);
            let out = tracker.run(&windows)?;
            Ok((out, tracker.skipped_updates()))
        })
        .collect();
    let mut out_records = Vec::new();
    for r in per_device {
        let (recs, skipped) = r?;
        diagnostics.skipped_updates += skipped;
        out_records.extend(recs);
    }
    Ok(PipelineOutput { t0, window_length: t_len, records: out_records, classes, diagnostics })
}

/// Zone observations for the occupancy series: measured windows refresh
/// presence, coasted ones only move the zone.
pub fn zone_observations(
    records: &[TrackRecord],
    map: &ZoneMap,
    t0: f64,
    window_length: f64,
    diag: &mut Diagnostics,
) -> Vec<ZoneObservation> {
    zone_observations_at(records.iter().map(|r| (window_center(t0, window_length, r.window), r)), map, diag)
}

/// As [`zone_observations`], with the time of each record given explicitly.
pub fn zone_observations_at<'a>(
    records: impl IntoIterator<Item = (f64, &'a TrackRecord)>,
    map: &ZoneMap,
    diag: &mut Diagnostics,
) -> Vec<ZoneObservation> {
    let mut out = Vec::new();
    for (time, r) in records {
        if r.kind == StepKind::Untracked {
            continue;
        }
        let Some(p) = r.position() else { continue };
        let lookup = map.lookup(&map.floor().clamp(&p));
        if lookup.fallback {
            diag.zone_fallbacks += 1;
        }
        out.push(ZoneObservation { device_id: r.device_id.clone(), time, zone: lookup.index, measured: r.is_sighting() });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::{NodeId, ReferenceNode};
    use crate::geometry::Rect;

    fn dep() -> Deployment {
        let nodes = vec![
            ReferenceNode::new("a", 5.0, 5.0, 15.0, -90.0),
            ReferenceNode::new("b", 35.0, 5.0, 15.0, -90.0),
            ReferenceNode::new("c", 20.0, 30.0, 15.0, -85.0),
        ];
        Deployment::new(nodes, Rect::floor(40.0, 40.0)).unwrap()
    }

    fn rec(t: f64, s: &str, d: &str, rss: f64) -> ProbeRecord {
        ProbeRecord { timestamp: t, sniffer_id: NodeId::from(s), device_id: DeviceId::from(d), rss }
    }

    #[test]
    fn invalid_records_are_counted() {
        let recs = vec![
            rec(0.0, "a", "x", -60.0),
            rec(f64::NAN, "a", "x", -60.0),
            rec(1.0, "zz", "x", -60.0),
            rec(2.0, "c", "x", -88.0),
        ];
        let mut d = Diagnostics::default();
        let v = validate_records(&recs, &dep(), &mut d);
        assert_eq!(v.len(), 1);
        assert_eq!((d.records_in, d.rejected_non_finite, d.rejected_unknown_sniffer, d.rejected_below_threshold), (4, 1, 1, 1));
    }

    #[test]
    fn default_origin_is_on_the_window_grid() {
        let recs: Vec<_> = (0..10).map(|i| rec(100.5 + i as f64 * 2.0, "a", "x", -60.0)).collect();
        let cfg = PipelineConfig { classify: false, ..Default::default() };
        let out = run_pipeline(&recs, &dep(), &ChannelParams::default(), &cfg).unwrap();
        assert_eq!(out.t0, 0.0);
        assert_eq!(out.records[0].window, 33);
        assert_eq!(out.window_time(33), 100.5);
        let early: Vec<_> = recs.iter().map(|r| ProbeRecord { timestamp: r.timestamp - 200.0, ..r.clone() }).collect();
        let out = run_pipeline(&early, &dep(), &ChannelParams::default(), &cfg).unwrap();
        assert_eq!(out.t0, -102.0);
    }

    #[test]
    fn static_devices_are_not_tracked() {
        let mut recs: Vec<_> = (0..1500).map(|i| rec(i as f64, "a", "printer", -50.0)).collect();
        recs.extend((0..40).map(|i| rec(i as f64 * 10.0, ["a", "b", "c"][i % 3], "phone", -70.0)));
        let out = run_pipeline(&recs, &dep(), &ChannelParams::default(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.classes[&DeviceId::from("printer")], DeviceClass::Static);
        assert!(out.records.iter().all(|r| r.device_id == DeviceId::from("phone")));
        assert_eq!(out.diagnostics.devices_static, 1);
        assert_eq!(out.diagnostics.devices_tracked, 1);
    }
}
