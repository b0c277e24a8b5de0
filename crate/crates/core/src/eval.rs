//! Comparing track output with ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;
use crate::error::{Error, Result};
use crate::geometry::{median, Point};
use crate::occupancy::ZoneMap;
use crate::tracking::{StepKind, TrackRecord};

/// True position of one device at the center of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub run: u32,
    pub device_id: DeviceId,
    pub window: i64,
    pub time_s: f64,
    pub x: f64,
    pub y: f64,
    pub zone: String,
}

impl TruthRow {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: u32,
    /// Truth windows in the run.
    pub windows: u64,
    /// Windows with a raw estimate; both errors are taken over these.
    pub evaluated: u64,
    pub rmse_raw: f64,
    pub rmse_imm: f64,
    pub zone_acc_raw: f64,
    pub zone_acc_imm: f64,
    /// `availability[m]` counts truth windows where m nodes held a value.
    pub availability: Vec<u64>,
}

/// Scores one run. Every record must belong to a device-window in `truth`.
pub fn evaluate_run(
    run: u32,
    truth: &[&TruthRow],
    records: &[&TrackRecord],
    map: &ZoneMap,
    num_nodes: usize,
) -> Result<RunMetrics> {
    let index: BTreeMap<(&DeviceId, i64), &TruthRow> = truth.iter().map(|t| ((&t.device_id, t.window), *t)).collect();
    let mut availability = vec![0u64; num_nodes + 1];
    let mut seen = BTreeSet::new();
    let (mut n, mut se_raw, mut se_imm, mut hit_raw, mut hit_imm) = (0u64, 0.0, 0.0, 0u64, 0u64);
    for r in records {
        let Some(t) = index.get(&(&r.device_id, r.window)) else {
            return Err(Error::Misaligned(format!("run {run}: no truth for {} window {}", r.device_id, r.window)));
        };
        seen.insert((&r.device_id, r.window));
        availability[r.n_avail.min(num_nodes)] += 1;
        let (Some(raw), Some(imm)) = (r.raw.as_ref(), r.position()) else { continue };
        if r.kind == StepKind::Untracked {
            continue;
        }
        let truth_p = t.position();
        n += 1;
        se_raw += (raw.position - truth_p).norm_squared();
        se_imm += (imm - truth_p).norm_squared();
        let zone = |p: &Point| map.zones()[map.lookup(&map.floor().clamp(p)).index].id.as_str();
        hit_raw += (zone(&raw.position) == t.zone) as u64;
        hit_imm += (zone(&imm) == t.zone) as u64;
    }
    availability[0] += (truth.len() - seen.len()) as u64;
    let nf = n as f64;
    let rate = |x: f64| if n == 0 { f64::NAN } else { x };
    Ok(RunMetrics {
        run,
        windows: truth.len() as u64,
        evaluated: n,
        rmse_raw: rate((se_raw / nf).sqrt()),
        rmse_imm: rate((se_imm / nf).sqrt()),
        zone_acc_raw: rate(hit_raw as f64 / nf),
        zone_acc_imm: rate(hit_imm as f64 / nf),
        availability,
    })
}

/// Scores every run present in `truth`. Records are matched to runs by device.
pub fn evaluate(truth: &[TruthRow], records: &[TrackRecord], map: &ZoneMap, num_nodes: usize) -> Result<Vec<RunMetrics>> {
    let mut run_of: BTreeMap<&DeviceId, u32> = BTreeMap::new();
    let mut truth_by_run: BTreeMap<u32, Vec<&TruthRow>> = BTreeMap::new();
    for t in truth {
        if let Some(r) = run_of.insert(&t.device_id, t.run) {
            if r != t.run {
                return Err(Error::Misaligned(format!("device {} appears in runs {r} and {}", t.device_id, t.run)));
            }
        }
        truth_by_run.entry(t.run).or_default().push(t);
    }
    let mut recs_by_run: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in records {
        let Some(run) = run_of.get(&r.device_id) else {
            return Err(Error::Misaligned(format!("device {} has no truth", r.device_id)));
        };
        recs_by_run.entry(*run).or_default().push(r);
    }
    truth_by_run
        .into_iter()
        .map(|(run, rows)| {
            let recs = recs_by_run.remove(&run).unwrap_or_default();
            evaluate_run(run, &rows, &recs, map, num_nodes)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub median_rmse_raw: f64,
    pub median_rmse_imm: f64,
    pub median_zone_acc_raw: f64,
    pub median_zone_acc_imm: f64,
    /// Device-windows with a raw estimate, over all runs.
    pub localizable_windows: u64,
    pub availability: Vec<u64>,
    /// Share of windows with exactly one node among windows with at least one.
    pub single_node_share: f64,
}

fn finite_median(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    median(&v).unwrap_or(f64::NAN)
}

pub fn summarize(runs: &[RunMetrics]) -> Summary {
    let width = runs.iter().map(|r| r.availability.len()).max().unwrap_or(1);
    let mut availability = vec![0u64; width];
    for r in runs {
        for (a, b) in availability.iter_mut().zip(&r.availability) {
            *a += b;
        }
    }
    let detected: u64 = availability.iter().skip(1).sum();
    Summary {
        runs: runs.len(),
        median_rmse_raw: finite_median(runs.iter().map(|r| r.rmse_raw)),
        median_rmse_imm: finite_median(runs.iter().map(|r| r.rmse_imm)),
        median_zone_acc_raw: finite_median(runs.iter().map(|r| r.zone_acc_raw)),
        median_zone_acc_imm: finite_median(runs.iter().map(|r| r.zone_acc_imm)),
        localizable_windows: runs.iter().map(|r| r.evaluated).sum(),
        single_node_share: if detected == 0 { f64::NAN } else { availability.get(1).copied().unwrap_or(0) as f64 / detected as f64 },
        availability,
    }
}

/// Empirical CDF: sorted finite values paired with `i / len`.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}
