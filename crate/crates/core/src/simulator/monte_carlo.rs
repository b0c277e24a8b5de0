use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gen_probes, gen_trajectory, observe, Trajectory};
use crate::deployment::{Deployment, DeviceId};
use crate::error::Result;
use crate::eval::{evaluate_run, summarize, RunMetrics, Summary, TruthRow};
use crate::measurement::{Diagnostics, ProbeRecord};
use crate::occupancy::ZoneMap;
use crate::pipeline::{run_pipeline, window_center, PipelineOutput};
use crate::scenario::Scenario;

/// One simulated run: the sniffer log and the matching ground truth.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub run: u32,
    pub seed: u64,
    pub trajectories: Vec<(DeviceId, Trajectory)>,
    /// Sorted by time, then sniffer, then device.
    pub records: Vec<ProbeRecord>,
    pub truth: Vec<TruthRow>,
}

/// Everything in the run is drawn from a single ChaCha8 stream seeded with
/// `seed`, device by device.
pub fn simulate_run(sc: &Scenario, deployment: &Deployment, map: &ZoneMap, run: u32, seed: u64) -> SimRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = sc.floor.rect();
    let t_len = sc.pipeline.window.window_length;
    let t0 = sc.pipeline.t0.unwrap_or(0.0);
    // Held values can outlive the last probe by L windows, so the truth
    // (and the walk) extend that far past the probing span.
    let hold = sc.pipeline.window.hold_length;
    let n_windows = (sc.duration_s / t_len).ceil() as i64 + hold as i64;
    let walk = sc.duration_s + hold as f64 * t_len;
    let mut trajectories = Vec::new();
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for j in 0..sc.devices_per_run {
        let device = DeviceId(format!("r{run}d{j}"));
        let traj = gen_trajectory(&mut rng, &floor, &sc.trajectory, t0, walk);
        for t in gen_probes(t0, t0 + sc.duration_s, &sc.probes, &mut rng) {
            records.extend(observe(t, &traj.position_at(t), &device, deployment, &sc.channel, &mut rng));
        }
        for k in 0..n_windows {
            let time_s = window_center(t0, t_len, k);
            let p = traj.position_at(time_s);
            let zone = map.zones()[map.lookup(&p).index].id.clone();
            truth.push(TruthRow { run, device_id: device.clone(), window: k, time_s, x: p.x, y: p.y, zone });
        }
        trajectories.push((device, traj));
    }
    records.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then_with(|| a.sniffer_id.cmp(&b.sniffer_id))
            .then_with(|| a.device_id.cmp(&b.device_id))
    });
    SimRun { run, seed, trajectories, records, truth }
}

/// Runs the pipeline on a simulated log and scores it.
pub fn evaluate_sim_run(
    sc: &Scenario,
    deployment: &Deployment,
    map: &ZoneMap,
    sim: &SimRun,
) -> Result<(RunMetrics, PipelineOutput)> {
    let out = run_pipeline(&sim.records, deployment, &sc.estimator_channel(), &sc.pipeline)?;
    let truth: Vec<&TruthRow> = sim.truth.iter().collect();
    let recs: Vec<_> = out.records.iter().collect();
    let metrics = evaluate_run(sim.run, &truth, &recs, map, deployment.len())?;
    Ok((metrics, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: Vec<RunMetrics>,
    pub summary: Summary,
    pub diagnostics: Diagnostics,
}

/// Simulates and scores every seed of the scenario, in parallel. The
/// report is ordered by run index whatever the thread count.
pub fn run_monte_carlo(sc: &Scenario) -> Result<MonteCarloReport> {
    sc.validate()?;
    let deployment = sc.deployment()?;
    let (map, _) = sc.zone_map()?;
    let seeds = sc.seed_list();
    let results: Vec<Result<(RunMetrics, Diagnostics)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let sim = simulate_run(sc, &deployment, &map, i as u32, seed);
            let (m, out) = evaluate_sim_run(sc, &deployment, &map, &sim)?;
            Ok((m, out.diagnostics))
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut diagnostics = Diagnostics::default();
    for r in results {
        let (m, d) = r?;
        diagnostics.merge(&d);
        runs.push(m);
    }
    let summary = summarize(&runs);
    Ok(MonteCarloReport { runs, summary, diagnostics })
}
