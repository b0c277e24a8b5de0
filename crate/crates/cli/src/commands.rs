use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use occusense::eval::{evaluate, summarize, RunMetrics, TruthRow};
use occusense::io;
use occusense::occupancy::{dwell_durations, dwell_histogram, occupancy_series, ZoneMap};
use occusense::pipeline::{run_pipeline, zone_observations_at};
use occusense::scenario::Scenario;
use occusense::simulator::{run_monte_carlo, simulate_run};
use occusense::tracking::TrackRecord;

use crate::{Cli, Command, Global};

/// Share of unreadable log lines above which tracking refuses to run.
const MAX_UNPARSEABLE: f64 = 0.10;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

trait OrExit<T> {
    fn input(self, ctx: impl FnOnce() -> String) -> Result<T, Failure>;
    fn runtime(self, ctx: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn input(self, ctx: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_INPUT, error: e.into().context(ctx()) })
    }

    fn runtime(self, ctx: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_RUNTIME, error: e.into().context(ctx()) })
    }
}

/// Library errors caused by bad inputs map to the validation exit code.
fn lib_error(e: occusense::Error, ctx: &str) -> Failure {
    use occusense::Error::*;
    let code = match e {
        Parse { .. } | Config(_) | ZoneMap(_) | Misaligned(_) | CoincidentNodes(..) | InsufficientNodes { .. } => EXIT_INPUT,
        _ => EXIT_RUNTIME,
    };
    Failure { code, error: anyhow::Error::new(e).context(ctx.to_string()) }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if g.resolution_s.is_nan() || g.resolution_s <= 0.0 {
        return Err(Failure { code: EXIT_INPUT, error: anyhow!("--resolution-s must be > 0") });
    }
    let mut sc = load_scenario(g)?;
    match &cli.command {
        Command::Simulate { runs } => {
            if let Some(r) = runs {
                sc.runs = *r;
                sc.seeds.clear();
            }
            simulate(&sc, g)
        }
        Command::Track { log, nodes, salt } => {
            if let Some(p) = nodes {
                sc.nodes = io::read_nodes(open(p)?).map_err(|e| lib_error(e, &format!("reading {}", p.display())))?;
                apply_overrides(&mut sc, g)?;
            }
            track(&sc, g, log, salt)
        }
        Command::Count { tracks, zones, start_s, end_s } => {
            let map = zone_map(&sc, zones.as_deref())?;
            count(&sc, g, tracks, &map, *start_s, *end_s)
        }
        Command::Eval { truth, tracks, zones, nodes } => {
            let map = zone_map(&sc, zones.as_deref())?;
            let num_nodes = match nodes {
                Some(p) => io::read_nodes(open(p)?).map_err(|e| lib_error(e, &format!("reading {}", p.display())))?.len(),
                None => sc.nodes.len(),
            };
            eval(g, truth, tracks, &map, num_nodes)
        }
        Command::Mc { runs } => {
            if let Some(r) = runs {
                sc.runs = *r;
                sc.seeds.clear();
            }
            monte_carlo(&sc, g)
        }
    }
}

fn load_scenario(g: &Global) -> Result<Scenario, Failure> {
    let mut sc = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).input(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).input(|| format!("parsing {}", p.display()))?
        }
        None => Scenario::default(),
    };
    apply_overrides(&mut sc, g)?;
    Ok(sc)
}

fn apply_overrides(sc: &mut Scenario, g: &Global) -> Result<(), Failure> {
    if let Some(s) = g.seed {
        sc.seed = s;
        sc.seeds.clear();
    }
    if let Some(n) = g.n_min {
        sc.pipeline.tracker.n_min = n;
    }
    if let Some(v) = g.grace_s {
        sc.pipeline.tracker.grace_s = v;
    }
    if let Some(l) = g.hold_l {
        sc.pipeline.window.hold_length = l;
    }
    if let Some(t) = g.window_t {
        sc.pipeline.window.window_length = t;
    }
    sc.validate().map_err(|e| lib_error(e, "invalid scenario"))
}

fn zone_map(sc: &Scenario, path: Option<&Path>) -> Result<ZoneMap, Failure> {
    let specs = match path {
        Some(p) => {
            let text = fs::read_to_string(p).input(|| format!("reading {}", p.display()))?;
            io::read_zones(&text).map_err(|e| lib_error(e, &format!("parsing {}", p.display())))?
        }
        None => sc.zones.clone(),
    };
    let zones = specs.iter().map(Into::into).collect();
    let (map, warnings) = ZoneMap::new(zones, sc.floor.rect()).map_err(|e| lib_error(e, "zone map validation failed"))?;
    for w in warnings {
        log::warn!("zone map: {w}");
    }
    Ok(map)
}

fn open(p: &Path) -> Result<File, Failure> {
    File::open(p).input(|| format!("opening {}", p.display()))
}

fn create(g: &Global, name: &str) -> Result<(BufWriter<File>, PathBuf), Failure> {
    fs::create_dir_all(&g.out_dir).runtime(|| format!("creating {}", g.out_dir.display()))?;
    let path = g.out_dir.join(name);
    let f = File::create(&path).runtime(|| format!("creating {}", path.display()))?;
    Ok((BufWriter::new(f), path))
}

fn write_with<F>(g: &Global, name: &str, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> occusense::Result<()>,
{
    let (mut w, path) = create(g, name)?;
    f(&mut w).runtime(|| format!("writing {}", path.display()))?;
    std::io::Write::flush(&mut w).runtime(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_text(g: &Global, name: &str, text: &str) -> Result<(), Failure> {
    write_with(g, name, |w| Ok(std::io::Write::write_all(w, text.as_bytes())?))
}

fn simulate(sc: &Scenario, g: &Global) -> Result<(), Failure> {
    let deployment = sc.deployment().map_err(|e| lib_error(e, "invalid deployment"))?;
    let map = zone_map(sc, None)?;
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (i, seed) in sc.seed_list().into_iter().enumerate() {
        let run = simulate_run(sc, &deployment, &map, i as u32, seed);
        records.extend(run.records);
        truth.extend(run.truth);
    }
    records.sort_by(|a, b| {
        a.timestamp.total_cmp(&b.timestamp).then_with(|| a.sniffer_id.cmp(&b.sniffer_id)).then_with(|| a.device_id.cmp(&b.device_id))
    });
    write_with(g, "log.csv", |w| io::write_log(w, &records))?;
    write_with(g, "truth.csv", |w| io::write_truth(w, &truth))?;
    write_with(g, "nodes.csv", |w| io::write_nodes(w, &sc.nodes))?;
    write_text(g, "zones.toml", &io::zones_to_toml(&sc.zones))?;
    Ok(())
}

fn track(sc: &Scenario, g: &Global, log: &Path, salt: &str) -> Result<(), Failure> {
    let parsed = io::read_log(open(log)?, salt).map_err(|e| lib_error(e, &format!("reading {}", log.display())))?;
    if parsed.unparseable > 0 {
        log::warn!("{} of {} log lines could not be parsed", parsed.unparseable, parsed.lines);
    }
    if parsed.unparseable_fraction() > MAX_UNPARSEABLE {
        return Err(Failure {
            code: EXIT_INPUT,
            error: anyhow!(
                "{} of {} lines in {} are unparseable (limit {:.0}%)",
                parsed.unparseable,
                parsed.lines,
                log.display(),
                MAX_UNPARSEABLE * 100.0
            ),
        });
    }
    let deployment = sc.deployment().map_err(|e| lib_error(e, "invalid deployment"))?;
    let mut out = run_pipeline(&parsed.records, &deployment, &sc.estimator_channel(), &sc.pipeline)
        .map_err(|e| lib_error(e, "tracking failed"))?;
    out.diagnostics.unparseable_lines = parsed.unparseable;
    let rows = out.records.iter().map(|r| (out.window_time(r.window), r));
    write_with(g, "tracks.csv", |w| io::write_tracks(w, rows))?;
    write_text(g, "diagnostics.txt", &out.diagnostics.to_text())
}

fn read_dump(path: &Path) -> Result<Vec<(f64, TrackRecord)>, Failure> {
    io::read_tracks(open(path)?).map_err(|e| lib_error(e, &format!("reading {}", path.display())))
}

fn count(
    sc: &Scenario,
    g: &Global,
    tracks: &Path,
    map: &ZoneMap,
    start: Option<f64>,
    end: Option<f64>,
) -> Result<(), Failure> {
    let dump = read_dump(tracks)?;
    let mut diag = Default::default();
    let obs = zone_observations_at(dump.iter().map(|(t, r)| (*t, r)), map, &mut diag);
    let start = start.unwrap_or(0.0);
    let end = end.unwrap_or_else(|| dump.iter().map(|(t, _)| *t).fold(start, f64::max));
    let grace = sc.pipeline.tracker.grace_s;
    let series = occupancy_series(&obs, map.len(), grace, start, end, g.resolution_s)
        .map_err(|e| lib_error(e, "occupancy series"))?;
    let dwell = dwell_histogram(&dwell_durations(&obs, grace));
    write_with(g, "occupancy.csv", |w| io::write_occupancy(w, &map.ids(), &series))?;
    write_with(g, "dwell.csv", |w| io::write_dwell(w, &dwell))
}

fn write_metrics(g: &Global, runs: &[RunMetrics]) -> Result<(), Failure> {
    let summary = summarize(runs);
    write_with(g, "metrics.csv", |w| io::write_run_metrics(w, runs))?;
    write_with(g, "availability.csv", |w| io::write_availability(w, &summary.availability))?;
    write_with(g, "rmse_cdf.csv", |w| io::write_rmse_cdf(w, runs))?;
    write_text(g, "summary.json", &io::summary_to_json(&summary))
}

fn eval(g: &Global, truth: &Path, tracks: &Path, map: &ZoneMap, num_nodes: usize) -> Result<(), Failure> {
    let truth: Vec<TruthRow> =
        io::read_truth(open(truth)?).map_err(|e| lib_error(e, &format!("reading {}", truth.display())))?;
    let records: Vec<TrackRecord> = read_dump(tracks)?.into_iter().map(|(_, r)| r).collect();
    let runs = evaluate(&truth, &records, map, num_nodes).map_err(|e| lib_error(e, "evaluation failed"))?;
    write_metrics(g, &runs)
}

fn monte_carlo(sc: &Scenario, g: &Global) -> Result<(), Failure> {
    let report = run_monte_carlo(sc).map_err(|e| lib_error(e, "monte carlo failed"))?;
    write_metrics(g, &report.runs)?;
    write_text(g, "diagnostics.txt", &report.diagnostics.to_text())
}
