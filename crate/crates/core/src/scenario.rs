//! Run configuration: deployment, zones, channel, probe process, walks and
//! pipeline settings in one TOML document. Every key is optional.

use serde::{Deserialize, Serialize};

use crate::deployment::{Deployment, ReferenceNode};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::localization::ChannelParams;
use crate::occupancy::{Zone, ZoneMap};
use crate::pipeline::PipelineConfig;
use crate::simulator::{ProbeProcessConfig, SimChannelConfig, TrajectoryModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorSpec {
    /// Extent along x, meters.
    pub width: f64,
    /// Extent along y, meters.
    pub length: f64,
}

impl Default for FloorSpec {
    fn default() -> Self {
        FloorSpec { width: 40.0, length: 90.0 }
    }
}

impl FloorSpec {
    pub fn rect(&self) -> Rect {
        Rect::floor(self.width, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Defaults to the channel's 50%-detection range.
    pub coverage_radius: Option<f64>,
    /// Defaults to the channel detection threshold.
    pub detection_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub id: String,
    pub polygon: Vec<[f64; 2]>,
}

impl From<&ZoneSpec> for Zone {
    fn from(z: &ZoneSpec) -> Zone {
        Zone { id: z.id.clone(), polygon: z.polygon.iter().map(|p| crate::geometry::Point::new(p[0], p[1])).collect() }
    }
}

/// What the estimator is told about the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorChannel {
    pub p0_known: bool,
    pub n_known: bool,
    /// Starting value when P0 is unknown, dBm.
    pub p0_guess: f64,
    /// Starting value when n is unknown.
    pub n_guess: f64,
}

impl Default for EstimatorChannel {
    fn default() -> Self {
        EstimatorChannel { p0_known: true, n_known: true, p0_guess: -40.0, n_guess: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub floor: FloorSpec,
    pub nodes: Vec<NodeSpec>,
    pub zones: Vec<ZoneSpec>,
    pub channel: SimChannelConfig,
    pub estimator: EstimatorChannel,
    pub probes: ProbeProcessConfig,
    pub trajectory: TrajectoryModel,
    /// Length of each simulated walk, seconds.
    pub duration_s: f64,
    pub devices_per_run: usize,
    pub runs: usize,
    /// Run `r` uses `seed + r` unless `seeds` lists them explicitly.
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub pipeline: PipelineConfig,
}

fn node(id: &str, x: f64, y: f64) -> NodeSpec {
    NodeSpec { id: id.into(), x, y, coverage_radius: None, detection_threshold: None }
}

fn rect_zone(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> ZoneSpec {
    ZoneSpec { id: id.into(), polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]] }
}

/// Seven sniffers on a staggered two-column grid over the 40 × 90 m floor.
pub fn default_nodes() -> Vec<NodeSpec> {
    (0..7)
        .map(|i| {
            let x = if i % 2 == 0 { 10.0 } else { 30.0 };
            node(&format!("R{}", i + 1), x, 11.25 * (i + 1) as f64)
        })
        .collect()
}

/// Eight zones in two columns. Left-column zones are centered on R1, R3,
/// R5 and R7; the right column is cut halfway between R2, R4 and R6.
pub fn default_zones() -> Vec<ZoneSpec> {
    let left = [0.0, 22.5, 45.0, 67.5, 90.0];
    let right = [0.0, 11.25, 33.75, 56.25, 90.0];
    let ids = ["A", "B", "C", "D", "E", "F", "G", "H"];
    let mut out = Vec::new();
    for (col, cuts) in [left, right].iter().enumerate() {
        let x0 = 20.0 * col as f64;
        for r in 0..4 {
            out.push(rect_zone(ids[col * 4 + r], x0, cuts[r], x0 + 20.0, cuts[r + 1]));
        }
    }
    out
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            floor: FloorSpec::default(),
            nodes: default_nodes(),
            zones: default_zones(),
            channel: SimChannelConfig::default(),
            estimator: EstimatorChannel::default(),
            probes: ProbeProcessConfig::default(),
            trajectory: TrajectoryModel::default(),
            duration_s: 1800.0,
            devices_per_run: 1,
            runs: 200,
            seed: 1,
            seeds: Vec::new(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.probes.validate()?;
        self.trajectory.validate(&self.floor.rect())?;
        if !(self.duration_s >= 0.0) {
            return Err(Error::Config("duration_s must be >= 0".into()));
        }
        if !(self.pipeline.window.window_length > 0.0) {
            return Err(Error::Config("window length must be > 0".into()));
        }
        let n = self.nodes.len();
        if self.pipeline.tracker.n_min == 0 || (n > 0 && self.pipeline.tracker.n_min > n) {
            return Err(Error::Config(format!("n_min must be in 1..={n}")));
        }
        if !(self.pipeline.tracker.grace_s >= 0.0) {
            return Err(Error::Config("grace_s must be >= 0".into()));
        }
        self.deployment()?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.runs as u64).map(|r| self.seed.wrapping_add(r)).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn deployment(&self) -> Result<Deployment> {
        let radius = self.channel.nominal_range();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                ReferenceNode::new(
                    &n.id,
                    n.x,
                    n.y,
                    n.coverage_radius.unwrap_or(radius),
                    n.detection_threshold.unwrap_or(self.channel.detection_threshold),
                )
            })
            .collect();
        Deployment::new(nodes, self.floor.rect())
    }

    pub fn zone_map(&self) -> Result<(ZoneMap, Vec<String>)> {
        ZoneMap::new(self.zones.iter().map(Zone::from).collect(), self.floor.rect())
    }

    /// Channel parameters handed to the estimator.
    pub fn estimator_channel(&self) -> ChannelParams {
        let e = &self.estimator;
        ChannelParams {
            p0: if e.p0_known { self.channel.p0 } else { e.p0_guess },
            n: if e.n_known { self.channel.n } else { e.n_guess },
            d0: self.channel.d0,
            p0_known: e.p0_known,
            n_known: e.n_known,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let sc = Scenario::default();
        sc.validate().unwrap();
        let (map, warnings) = sc.zone_map().unwrap();
        assert_eq!(map.len(), 8);
        assert!(warnings.is_empty());
        assert_eq!(sc.deployment().unwrap().len(), 7);
        assert_eq!(sc.floor.rect().area(), 3600.0);
        assert_eq!(sc.pipeline.window.window_length, 3.0);
        assert_eq!(sc.pipeline.tracker.grace_s, 300.0);
        assert_eq!((sc.channel.p0, sc.channel.d0, sc.channel.noise_floor, sc.channel.detection_threshold), (-35.0, 1.0, -90.0, -90.0));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let sc = Scenario::default();
        let back = Scenario::from_toml(&sc.to_toml()).unwrap();
        assert_eq!(back, sc);
        let partial = Scenario::from_toml("runs = 3\n[channel]\nn = 2.5\n").unwrap();
        assert_eq!(partial.runs, 3);
        assert_eq!(partial.channel.n, 2.5);
        assert_eq!(partial.channel.p0, -35.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Scenario::from_toml("[channel]\nshadowing_sigma = -1.0\n").is_err());
        assert!(Scenario::from_toml("[pipeline.tracker]\nn_min = 9\n").is_err());
        assert!(Scenario::from_toml("bogus = [").is_err());
    }

    #[test]
    fn seeds() {
        let sc = Scenario { runs: 3, seed: 10, ..Default::default() };
        assert_eq!(sc.seed_list(), vec![10, 11, 12]);
        let sc = Scenario { seeds: vec![5, 2], ..Default::default() };
        assert_eq!(sc.seed_list(), vec![5, 2]);
    }
}
