//! Flat-file formats: probe logs, node and zone files, track dumps, truth
//! tables and the plot-ready outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so the same
//! values always produce the same bytes.

use std::io::{BufRead, Read, Write};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::deployment::{DeviceId, NodeId};
use crate::error::{Error, Result};
use crate::eval::{RunMetrics, Summary, TruthRow};
use crate::localization::{Estimator, PositionEstimate, Quality};
use crate::measurement::ProbeRecord;
use crate::occupancy::{DwellBin, OccupancySnapshot};
use crate::geometry::Point;
use crate::scenario::{NodeSpec, ZoneSpec};
use crate::tracking::{Model, State, StepKind, TrackRecord};

/// Parsed probe log. Lines that cannot be read are counted, not fatal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRead {
    pub records: Vec<ProbeRecord>,
    /// Data lines seen, excluding the header and blank lines.
    pub lines: u64,
    pub unparseable: u64,
}

impl LogRead {
    pub fn unparseable_fraction(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.unparseable as f64 / self.lines as f64
        }
    }
}

const TIME_COLS: [&str; 2] = ["timestamp_s", "timestamp"];
const SNIFFER_COLS: [&str; 1] = ["sniffer_id"];
const DEVICE_COLS: [&str; 2] = ["mac_or_hash", "device_id"];
const RSS_COLS: [&str; 2] = ["rss_dbm", "rss"];

#[derive(Deserialize)]
struct JsonProbe {
    #[serde(alias = "timestamp")]
    timestamp_s: f64,
    sniffer_id: String,
    #[serde(alias = "device_id")]
    mac_or_hash: String,
    #[serde(alias = "rss")]
    rss_dbm: f64,
}

/// Reads a probe log: comma-separated with a header row, or JSON lines
/// (detected by a leading `{`). MAC addresses are salted and hashed.
pub fn read_log<R: Read>(reader: R, salt: &str) -> Result<LogRead> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    match first {
        None => Ok(LogRead::default()),
        Some(l) if l.starts_with('{') => Ok(read_json_lines(text.as_bytes(), salt)),
        Some(_) => read_csv_log(text.as_bytes(), salt),
    }
}

fn read_json_lines<R: BufRead>(reader: R, salt: &str) -> LogRead {
    let mut out = LogRead::default();
    for line in reader.lines() {
        let Ok(line) = line else {
            out.lines += 1;
            out.unparseable += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        match serde_json::from_str::<JsonProbe>(&line) {
            Ok(p) => out.records.push(ProbeRecord {
                timestamp: p.timestamp_s,
                sniffer_id: NodeId(p.sniffer_id),
                device_id: DeviceId::from_log_field(&p.mac_or_hash, salt),
                rss: p.rss_dbm,
            }),
            Err(_) => out.unparseable += 1,
        }
    }
    out
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| names.contains(&h.trim()))
        .ok_or_else(|| Error::Parse { line: 1, msg: format!("header has no {} column", names[0]) })
}

fn read_csv_log(bytes: &[u8], salt: &str) -> Result<LogRead> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let cols = [
        column(&headers, &TIME_COLS)?,
        column(&headers, &SNIFFER_COLS)?,
        column(&headers, &DEVICE_COLS)?,
        column(&headers, &RSS_COLS)?,
    ];
    let mut out = LogRead::default();
    for row in rdr.records() {
        out.lines += 1;
        let parsed = row.ok().and_then(|row| {
            let get = |i: usize| row.get(cols[i]).filter(|s| !s.is_empty());
            Some(ProbeRecord {
                timestamp: get(0)?.parse().ok()?,
                sniffer_id: NodeId(get(1)?.to_string()),
                device_id: DeviceId::from_log_field(get(2)?, salt),
                rss: get(3)?.parse().ok()?,
            })
        });
        match parsed {
            Some(r) => out.records.push(r),
            None => out.unparseable += 1,
        }
    }
    Ok(out)
}

pub fn write_log<W: Write>(writer: W, records: &[ProbeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_s", "sniffer_id", "mac_or_hash", "rss_dbm"])?;
    for r in records {
        w.write_record([r.timestamp.to_string(), r.sniffer_id.0.clone(), r.device_id.0.clone(), r.rss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: String,
    x_m: f64,
    y_m: f64,
    coverage_radius_m: Option<f64>,
    detection_threshold_dbm: Option<f64>,
}

/// Reference-node file. Empty radius or threshold cells take the scenario defaults.
pub fn read_nodes<R: Read>(reader: R) -> Result<Vec<NodeSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<NodeRow>() {
        let r = row?;
        out.push(NodeSpec {
            id: r.id,
            x: r.x_m,
            y: r.y_m,
            coverage_radius: r.coverage_radius_m,
            detection_threshold: r.detection_threshold_dbm,
        });
    }
    Ok(out)
}

pub fn write_nodes<W: Write>(writer: W, nodes: &[NodeSpec]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for n in nodes {
        w.serialize(NodeRow {
            id: n.id.clone(),
            x_m: n.x,
            y_m: n.y,
            coverage_radius_m: n.coverage_radius,
            detection_threshold_dbm: n.detection_threshold,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ZoneFile {
    zones: Vec<ZoneSpec>,
}

/// Zone map file: `[[zones]]` tables with `id` and `polygon = [[x, y], ...]`.
pub fn read_zones(text: &str) -> Result<Vec<ZoneSpec>> {
    let f: ZoneFile = toml::from_str(text)?;
    Ok(f.zones)
}

pub fn zones_to_toml(zones: &[ZoneSpec]) -> String {
    toml::to_string(&ZoneFile { zones: zones.to_vec() }).expect("zone specs serialize")
}

/// One line of a track dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub device_id: String,
    pub window: i64,
    pub time_s: f64,
    pub segment: u32,
    pub kind: String,
    pub model: Option<u8>,
    pub n_avail: usize,
    pub n_fresh: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub vx: Option<f64>,
    pub vy: Option<f64>,
    pub var_x: Option<f64>,
    pub var_y: Option<f64>,
    pub var_vx: Option<f64>,
    pub var_vy: Option<f64>,
    pub raw_x: Option<f64>,
    pub raw_y: Option<f64>,
    pub estimator: Option<String>,
    pub quality: Option<String>,
    pub raw_nodes: Option<usize>,
}

impl TrackRow {
    pub fn from_record(r: &TrackRecord, time_s: f64) -> TrackRow {
        let m = r.mean.as_ref();
        let c = r.cov_diag.as_ref();
        let raw = r.raw.as_ref();
        TrackRow {
            device_id: r.device_id.0.clone(),
            window: r.window,
            time_s,
            segment: r.segment,
            kind: r.kind.tag().to_string(),
            model: r.model.map(|m| m.index()),
            n_avail: r.n_avail,
            n_fresh: r.n_fresh,
            x: m.map(|m| m[0]),
            y: m.map(|m| m[1]),
            vx: m.map(|m| m[2]),
            vy: m.map(|m| m[3]),
            var_x: c.map(|c| c[0]),
            var_y: c.map(|c| c[1]),
            var_vx: c.map(|c| c[2]),
            var_vy: c.map(|c| c[3]),
            raw_x: raw.map(|e| e.position.x),
            raw_y: raw.map(|e| e.position.y),
            estimator: raw.map(|e| e.estimator.tag().to_string()),
            quality: raw.map(|e| e.quality.tag().to_string()),
            raw_nodes: raw.map(|e| e.num_nodes_used),
        }
    }

    /// Rebuilds the record. Channel side outputs are not part of the dump.
    pub fn to_record(&self) -> std::result::Result<TrackRecord, String> {
        let kind: StepKind = self.kind.parse()?;
        let model = match self.model {
            None => None,
            Some(j) => Some(Model::from_index(j).ok_or_else(|| format!("bad model index {j}"))?),
        };
        let mean = match (self.x, self.y, self.vx, self.vy) {
            (Some(x), Some(y), Some(vx), Some(vy)) => Some(State::new(x, y, vx, vy)),
            (None, None, None, None) => None,
            _ => return Err("partial state".into()),
        };
        let cov_diag = match (self.var_x, self.var_y, self.var_vx, self.var_vy) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(Vector4::new(a, b, c, d)),
            (None, None, None, None) => None,
            _ => return Err("partial covariance".into()),
        };
        let raw = match (self.raw_x, self.raw_y) {
            (Some(x), Some(y)) => {
                let estimator: Estimator = self.estimator.as_deref().ok_or("raw estimate without estimator")?.parse()?;
                let quality: Quality = match self.quality.as_deref() {
                    Some(q) => q.parse()?,
                    None => Quality::Good,
                };
                Some(PositionEstimate {
                    position: Point::new(x, y),
                    estimator,
                    num_nodes_used: self.raw_nodes.unwrap_or(self.n_avail),
                    aux: None,
                    quality,
                })
            }
            (None, None) => None,
            _ => return Err("partial raw estimate".into()),
        };
        Ok(TrackRecord {
            device_id: DeviceId(self.device_id.clone()),
            window: self.window,
            kind,
            model,
            n_avail: self.n_avail,
            n_fresh: self.n_fresh,
            mean,
            cov_diag,
            raw,
            segment: self.segment,
        })
    }
}

/// Writes `(time, record)` pairs as a track dump.
pub fn write_tracks<'a, W: Write>(writer: W, rows: impl IntoIterator<Item = (f64, &'a TrackRecord)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut any = false;
    for (t, r) in rows {
        w.serialize(TrackRow::from_record(r, t))?;
        any = true;
    }
    if !any {
        w.write_record(TRACK_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

const TRACK_HEADER: [&str; 21] = [
    "device_id", "window", "time_s", "segment", "kind", "model", "n_avail", "n_fresh", "x", "y", "vx", "vy", "var_x",
    "var_y", "var_vx", "var_vy", "raw_x", "raw_y", "estimator", "quality", "raw_nodes",
];

/// Reads a track dump into `(time, record)` pairs. Any bad row is an error.
pub fn read_tracks<R: Read>(reader: R) -> Result<Vec<(f64, TrackRecord)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TrackRow>().enumerate() {
        let row = row?;
        let rec = row.to_record().map_err(|msg| Error::Parse { line: i + 2, msg })?;
        out.push((row.time_s, rec));
    }
    Ok(out)
}

pub fn write_truth<W: Write>(writer: W, rows: &[TruthRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["run", "device_id", "window", "time_s", "x", "y", "zone"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<Vec<TruthRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// `timestamp_s`, one column per zone, `total`.
pub fn write_occupancy<W: Write>(writer: W, zone_ids: &[&str], series: &[OccupancySnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp_s".to_string()];
    header.extend(zone_ids.iter().map(|z| z.to_string()));
    header.push("total".into());
    w.write_record(&header)?;
    for s in series {
        let mut row = vec![s.timestamp.to_string()];
        row.extend(s.counts.iter().map(u32::to_string));
        row.push(s.total.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dwell<W: Write>(writer: W, bins: &[DwellBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin", "count", "percent"])?;
    for b in bins {
        w.write_record([b.label(), b.count.to_string(), b.percent.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-run metrics, one row per run.
pub fn write_run_metrics<W: Write>(writer: W, runs: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run", "windows", "evaluated", "rmse_raw", "rmse_imm", "zone_acc_raw", "zone_acc_imm"])?;
    for r in runs {
        w.write_record([
            r.run.to_string(),
            r.windows.to_string(),
            r.evaluated.to_string(),
            r.rmse_raw.to_string(),
            r.rmse_imm.to_string(),
            r.zone_acc_raw.to_string(),
            r.zone_acc_imm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Device-windows by number of available nodes.
pub fn write_availability<W: Write>(writer: W, histogram: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n_avail", "windows"])?;
    for (m, c) in histogram.iter().enumerate() {
        w.write_record([m.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF points of the per-run RMSE, raw and tracked.
pub fn write_rmse_cdf<W: Write>(writer: W, runs: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series", "rmse_m", "cdf"])?;
    let raw: Vec<f64> = runs.iter().map(|r| r.rmse_raw).collect();
    let imm: Vec<f64> = runs.iter().map(|r| r.rmse_imm).collect();
    for (name, values) in [("raw", raw), ("imm", imm)] {
        for (v, p) in crate::eval::cdf(&values) {
            w.write_record([name.to_string(), v.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn summary_to_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}
