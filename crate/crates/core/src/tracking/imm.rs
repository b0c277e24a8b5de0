use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::deployment::DeviceId;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::localization::{
    locate_two_nodes, range_from_rss, toward, ChannelParams, Estimator, Localizer, PositionEstimate, Quality,
};
use crate::measurement::WindowedMeasurement;

use super::kalman::{clamp_speed, predict, update};
use super::model::{Model, ModelBank, State, StateCov};
use super::TrackState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Process noise spectral density, m²/s³.
    pub q: f64,
    /// Measurement error standard deviation for a single node, meters.
    pub sigma_m: f64,
    pub v_max: f64,
    pub sigma_init_h1: f64,
    pub sigma_init_h2: f64,
    pub sigma_init_h3: f64,
    pub sigma_v: f64,
    /// Windows with fewer available nodes are treated as absent.
    pub n_min: usize,
    /// A track with no measurement for longer than this is dropped, seconds.
    pub grace_s: f64,
    /// EMA weight for folding NLS channel estimates into unknown parameters.
    pub channel_ema: f64,
    /// One- and two-node windows use the prediction only while its position
    /// standard deviation is at most this, meters; otherwise they fall back
    /// to the prior-free H1/H2 estimates.
    pub prior_max_sigma: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            q: 0.5,
            sigma_m: 12.0,
            v_max: 3.0,
            sigma_init_h1: 10.0,
            sigma_init_h2: 6.0,
            sigma_init_h3: 3.0,
            sigma_v: 1.5,
            n_min: 1,
            grace_s: 300.0,
            channel_ema: 0.2,
            prior_max_sigma: 5.0,
        }
    }
}

impl TrackerConfig {
    pub fn bank(&self, window_length: f64) -> ModelBank {
        ModelBank::new(window_length, self.q, self.sigma_m)
    }

    fn sigma_init(&self, est: Estimator) -> f64 {
        match est {
            Estimator::H1 | Estimator::Model1 => self.sigma_init_h1,
            Estimator::H2 | Estimator::Model2 => self.sigma_init_h2,
            _ => self.sigma_init_h3,
        }
    }
}

/// `j = min(|P_k|, 3)`; `None` for an empty measurement.
pub fn model_select(meas: &WindowedMeasurement) -> Option<Model> {
    Model::from_count(meas.len())
}

/// Range from the node projected toward the predicted position. Falls back
/// to the last updated mean, then to the +x axis, when the direction is
/// undefined.
pub fn measure_model1(node: &Point, range: f64, predicted: &Point, last_mean: Option<&Point>) -> Point {
    toward(node, range, predicted)
        .or_else(|| last_mean.and_then(|m| toward(node, range, m)))
        .unwrap_or_else(|| node + Point::new(range, 0.0))
}

/// Midpoint of the two-node estimate and the predicted position. `xi` is
/// the stronger node; coincident nodes fall back to Model-1 on it.
pub fn measure_model2(
    xi: &Point,
    xu: &Point,
    d_i: f64,
    d_u: f64,
    predicted: &Point,
    last_mean: Option<&Point>,
) -> Point {
    match locate_two_nodes(xi, xu, d_i, d_u) {
        Ok(h2) => (h2 + predicted) * 0.5,
        Err(_) => measure_model1(xi, d_i, predicted, last_mean),
    }
}

/// Fresh track at the first estimate: zero velocity, prior width by
/// estimator class.
pub fn init_track(device_id: DeviceId, est: &PositionEstimate, window: i64, cfg: &TrackerConfig) -> TrackState {
    let s = cfg.sigma_init(est.estimator);
    let v = cfg.sigma_v;
    TrackState {
        device_id,
        mean: State::new(est.position.x, est.position.y, 0.0, 0.0),
        cov: StateCov::from_diagonal(&Vector4::new(s * s, s * s, v * v, v * v)),
        model: None,
        last_fresh_window: window,
        window,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Measurements present but below `n_min`, and no active track.
    Untracked,
    Init,
    Update,
    Coast,
}

impl StepKind {
    pub fn tag(&self) -> &'static str {
        match self {
            StepKind::Untracked => "none",
            StepKind::Init => "init",
            StepKind::Update => "update",
            StepKind::Coast => "coast",
        }
    }
}

impl FromStr for StepKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "none" => StepKind::Untracked,
            "init" => StepKind::Init,
            "update" => StepKind::Update,
            "coast" => StepKind::Coast,
            other => return Err(format!("unknown step kind {other:?}")),
        })
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Result of one IMM step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: TrackState,
    /// Position measurement fed to the filter, when an update happened.
    pub measurement: Option<PositionEstimate>,
    /// The innovation covariance was singular and the prediction was kept.
    pub skipped_update: bool,
}

/// Advances `state` by one window.
///
/// Without a measurement the output is the prediction. Otherwise the model
/// is fixed by the number of available nodes, its position measurement is
/// built around the prediction, and the output is that model's update.
pub fn imm_step(
    state: &TrackState,
    meas: Option<&WindowedMeasurement>,
    loc: &Localizer,
    ch: &ChannelParams,
    bank: &ModelBank,
    cfg: &TrackerConfig,
) -> Result<StepOutcome> {
    let (m_pred, u_pred) = predict(&state.mean, &state.cov, bank);
    let window = state.window + 1;
    let coast = |skipped| StepOutcome {
        state: TrackState { mean: m_pred, cov: u_pred, model: None, window, ..state.clone() },
        measurement: None,
        skipped_update: skipped,
    };
    let Some(meas) = meas.filter(|m| !m.is_empty()) else {
        return Ok(coast(false));
    };
    let model = model_select(meas).expect("non-empty");
    let predicted = Point::new(m_pred[0], m_pred[1]);
    let last_mean = state.position();
    let prior_sigma = u_pred[(0, 0)].max(u_pred[(1, 1)]).sqrt();
    let est = match model {
        Model::M1 | Model::M2 if prior_sigma > cfg.prior_max_sigma => loc.localize(meas, ch, None)?,
        Model::M1 | Model::M2 => {
            let predicted = loc.confine(predicted);
            let s = meas.strongest_first();
            let xi = loc.node_position(s[0].node);
            let d_i = range_from_rss(s[0].rss, ch)?;
            let position = if model == Model::M1 {
                measure_model1(&xi, d_i, &predicted, Some(&last_mean))
            } else {
                let d_u = range_from_rss(s[1].rss, ch)?;
                measure_model2(&xi, &loc.node_position(s[1].node), d_i, d_u, &predicted, Some(&last_mean))
            };
            let position = loc.confine(position);
            let estimator = if model == Model::M1 { Estimator::Model1 } else { Estimator::Model2 };
            PositionEstimate { position, estimator, num_nodes_used: meas.len(), aux: None, quality: Quality::Good }
        }
        Model::M3 => loc.localize(meas, ch, Some(predicted))?,
    };
    if !(est.position.x.is_finite() && est.position.y.is_finite()) {
        return Err(Error::NonFinite("position measurement"));
    }
    let Some(step) = update(&m_pred, &u_pred, bank, model, &est.position) else {
        return Ok(coast(true));
    };
    let mut mean = step.mean;
    clamp_speed(&mut mean, cfg.v_max);
    let last_fresh_window = if meas.fresh_count() > 0 { window } else { state.last_fresh_window };
    Ok(StepOutcome {
        state: TrackState { mean, cov: step.cov, model: Some(model), window, last_fresh_window, ..state.clone() },
        measurement: Some(est),
        skipped_update: false,
    })
}

/// One row of a track dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub device_id: DeviceId,
    pub window: i64,
    pub kind: StepKind,
    pub model: Option<Model>,
    pub n_avail: usize,
    /// Entries with a sample inside this window (hold age 0).
    pub n_fresh: usize,
    /// Filter mean after the step; `None` for untracked windows.
    pub mean: Option<State>,
    pub cov_diag: Option<Vector4<f64>>,
    /// Stand-alone estimate from the window alone (no prior).
    pub raw: Option<PositionEstimate>,
    /// Track segment counter; increments on every (re)initialization.
    pub segment: u32,
}

impl TrackRecord {
    pub fn position(&self) -> Option<Point> {
        self.mean.map(|m| Point::new(m[0], m[1]))
    }

    /// A fresh sample reached the filter in this window.
    pub fn is_sighting(&self) -> bool {
        self.n_fresh > 0 && matches!(self.kind, StepKind::Init | StepKind::Update)
    }
}

/// Lifecycle of one device's track: initialization, IMM steps, coasting,
/// termination after a gap longer than the grace period, and adaptation of
/// unknown channel parameters.
#[derive(Debug, Clone)]
pub struct DeviceTracker<'a> {
    device_id: DeviceId,
    loc: &'a Localizer,
    bank: &'a ModelBank,
    cfg: &'a TrackerConfig,
    channel: ChannelParams,
    state: Option<TrackState>,
    last_measured: Option<i64>,
    segment: u32,
    skipped_updates: u64,
}

impl<'a> DeviceTracker<'a> {
    pub fn new(device_id: DeviceId, loc: &'a Localizer, bank: &'a ModelBank, cfg: &'a TrackerConfig, channel: ChannelParams) -> Self {
        DeviceTracker { device_id, loc, bank, cfg, channel, state: None, last_measured: None, segment: 0, skipped_updates: 0 }
    }

    pub fn state(&self) -> Option<&TrackState> {
        self.state.as_ref()
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }

    /// Starts a track. Errors if one is already active for this device.
    pub fn init_track(&mut self, est: &PositionEstimate, window: i64) -> Result<&TrackState> {
        if self.state.is_some() {
            return Err(Error::AlreadyTracked(self.device_id.to_string()));
        }
        self.segment += 1;
        self.last_measured = Some(window);
        Ok(self.state.insert(init_track(self.device_id.clone(), est, window, self.cfg)))
    }

    pub fn terminate(&mut self) {
        self.state = None;
    }

    fn expired(&self, window: i64) -> bool {
        match self.last_measured {
            Some(last) => (window - last) as f64 * self.bank.dt > self.cfg.grace_s,
            None => true,
        }
    }

    /// Processes the next window. Windows must be fed in increasing order;
    /// skipped windows are coasted through (or end the track when the gap
    /// exceeds the grace period).
    pub fn process(&mut self, window: i64, meas: Option<&WindowedMeasurement>) -> Result<Option<TrackRecord>> {
        if let Some(s) = &self.state {
            if window <= s.window {
                return Err(Error::TimeRegression {
                    device: self.device_id.to_string(),
                    t: window as f64,
                    last_seen: s.window as f64,
                });
            }
        }
        let n_avail = meas.map_or(0, |m| m.len());
        let n_fresh = meas.map_or(0, |m| m.fresh_count());
        let usable = meas.filter(|m| !m.is_empty() && m.len() >= self.cfg.n_min);
        if self.state.is_some() && self.expired(window) {
            self.terminate();
        }
        // coast through windows the caller skipped
        while let Some(s) = &self.state {
            if s.window + 1 >= window {
                break;
            }
            let out = imm_step(s, None, self.loc, &self.channel, self.bank, self.cfg)?;
            self.state = Some(out.state);
        }

        let raw = match usable {
            Some(m) => Some(self.loc.localize(m, &self.channel, None)?),
            None => None,
        };
        if let Some(aux) = raw.as_ref().filter(|r| r.estimator.is_nls() && r.quality == Quality::Good).and_then(|r| r.aux) {
            self.channel.absorb(&aux, self.cfg.channel_ema);
        }

        let kind = match (&self.state, &raw) {
            (None, None) if n_avail == 0 => return Ok(None),
            (None, None) => StepKind::Untracked,
            (None, Some(est)) => {
                self.init_track(est, window)?;
                StepKind::Init
            }
            (Some(s), _) => {
                let out = imm_step(s, usable, self.loc, &self.channel, self.bank, self.cfg)?;
                if out.skipped_update {
                    self.skipped_updates += 1;
                }
                let kind = if out.state.model.is_some() { StepKind::Update } else { StepKind::Coast };
                self.state = Some(out.state);
                kind
            }
        };
        if usable.is_some() {
            self.last_measured = Some(window);
        }
        let s = self.state.as_ref();
        Ok(Some(TrackRecord {
            device_id: self.device_id.clone(),
            window,
            kind,
            model: s.and_then(|s| s.model),
            n_avail,
            n_fresh,
            mean: s.map(|s| s.mean),
            cov_diag: s.map(|s| s.cov.diagonal()),
            raw,
            segment: self.segment,
        }))
    }

    /// Runs the device's measurement sequence window by window, emitting a
    /// record for every measured window and for coasting windows inside an
    /// active track.
    pub fn run(&mut self, measurements: &[WindowedMeasurement]) -> Result<Vec<TrackRecord>> {
        let by_window: BTreeMap<i64, &WindowedMeasurement> = measurements.iter().map(|m| (m.window, m)).collect();
        let (Some(&first), Some(&last)) = (by_window.keys().next(), by_window.keys().next_back()) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for w in first..=last {
            let meas = by_window.get(&w).copied();
            if meas.is_none() && (self.state.is_none() || self.expired(w)) {
                continue;
            }
            if let Some(r) = self.process(w, meas)? {
                out.push(r);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::{Deployment, ReferenceNode};
    use crate::geometry::Rect;
    use crate::localization::{rss_from_range, LocalizerConfig};
    use crate::measurement::MeasurementEntry;

    fn localizer() -> Localizer {
        let nodes = vec![
            ReferenceNode::new("a", 5.0, 5.0, 20.0, -90.0),
            ReferenceNode::new("b", 35.0, 5.0, 20.0, -90.0),
            ReferenceNode::new("c", 5.0, 45.0, 20.0, -90.0),
            ReferenceNode::new("d", 35.0, 40.0, 20.0, -90.0),
        ];
        Localizer::new(Deployment::new(nodes, Rect::floor(40.0, 50.0)).unwrap(), LocalizerConfig::default())
    }

    fn meas_at(loc: &Localizer, window: i64, t: Point, nodes: &[usize], ch: &ChannelParams) -> WindowedMeasurement {
        let entries = nodes
            .iter()
            .map(|&i| MeasurementEntry { node: i, rss: rss_from_range((loc.node_position(i) - t).norm(), ch), hold_age: 0 })
            .collect();
        WindowedMeasurement { device_id: DeviceId::from("dev"), window, entries }
    }

    #[test]
    fn model1_examples() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(measure_model1(&o, 5.0, &Point::new(10.0, 0.0), None), Point::new(5.0, 0.0));
        assert_eq!(measure_model1(&o, 5.0, &Point::new(0.0, 7.0), None), Point::new(0.0, 5.0));
        assert_eq!(measure_model1(&o, 0.0, &Point::new(3.0, 4.0), None), o);
        // undefined direction: last mean, then +x
        assert_eq!(measure_model1(&o, 2.0, &o, Some(&Point::new(0.0, -9.0))), Point::new(0.0, -2.0));
        assert_eq!(measure_model1(&o, 2.0, &o, Some(&o)), Point::new(2.0, 0.0));
    }

    #[test]
    fn model2_is_a_midpoint() {
        // nodes 10 m apart, ranges 4 and 6: H2 lands on (4, 0)
        let xi = Point::new(0.0, 0.0);
        let xu = Point::new(10.0, 0.0);
        let p = measure_model2(&xi, &xu, 4.0, 6.0, &Point::new(6.0, 2.0), None);
        assert!((p - Point::new(5.0, 1.0)).norm() < 1e-12);
        let p = measure_model2(&xi, &xu, 4.0, 6.0, &Point::new(4.0, 0.0), None);
        assert!((p - Point::new(4.0, 0.0)).norm() < 1e-12);
        // coincident nodes use Model-1 on the stronger one
        let p = measure_model2(&xi, &xi, 3.0, 6.0, &Point::new(0.0, 10.0), None);
        assert_eq!(p, Point::new(0.0, 3.0));
    }

    #[test]
    fn init_widths_follow_estimator_class() {
        let cfg = TrackerConfig::default();
        let est = |e| PositionEstimate { position: Point::new(5.0, 5.0), estimator: e, num_nodes_used: 1, aux: None, quality: Quality::Good };
        let h1 = init_track(DeviceId::from("x"), &est(Estimator::H1), 0, &cfg);
        let h3 = init_track(DeviceId::from("x"), &est(Estimator::H3Lls), 0, &cfg);
        assert_eq!(h1.mean, State::new(5.0, 5.0, 0.0, 0.0));
        assert!(h1.cov[(0, 0)] > h3.cov[(0, 0)]);
    }

    #[test]
    fn reinit_on_active_track_is_an_error() {
        let loc = localizer();
        let cfg = TrackerConfig::default();
        let bank = cfg.bank(3.0);
        let mut tr = DeviceTracker::new(DeviceId::from("dev"), &loc, &bank, &cfg, ChannelParams::default());
        let est = PositionEstimate { position: Point::new(1.0, 1.0), estimator: Estimator::H1, num_nodes_used: 1, aux: None, quality: Quality::Good };
        tr.init_track(&est, 0).unwrap();
        assert!(matches!(tr.init_track(&est, 1), Err(Error::AlreadyTracked(_))));
    }

    #[test]
    fn coasting_is_prediction() {
        let loc = localizer();
        let cfg = TrackerConfig::default();
        let bank = cfg.bank(3.0);
        let est = PositionEstimate { position: Point::new(10.0, 10.0), estimator: Estimator::H3Lls, num_nodes_used: 3, aux: None, quality: Quality::Good };
        let mut s = init_track(DeviceId::from("dev"), &est, 0, &cfg);
        s.mean[2] = 0.5;
        let mut trace = s.cov.trace();
        for k in 1..=3 {
            let (mp, up) = predict(&s.mean, &s.cov, &bank);
            let out = imm_step(&s, None, &loc, &ChannelParams::default(), &bank, &cfg).unwrap();
            assert_eq!(out.state.mean, mp);
            assert_eq!(out.state.cov, up);
            assert_eq!(out.state.mean[0], 10.0 + 1.5 * k as f64);
            assert!(out.state.cov.trace() > trace);
            trace = out.state.cov.trace();
            s = out.state;
        }
    }

    #[test]
    fn stale_prior_falls_back_to_prior_free_estimate() {
        let loc = localizer();
        let cfg = TrackerConfig::default();
        let bank = cfg.bank(3.0);
        let ch = ChannelParams::default();
        let est = PositionEstimate { position: Point::new(20.0, 20.0), estimator: Estimator::H3Lls, num_nodes_used: 3, aux: None, quality: Quality::Good };
        let mut s = init_track(DeviceId::from("dev"), &est, 0, &cfg);
        s.cov = StateCov::identity();
        let m = meas_at(&loc, 1, Point::new(12.0, 12.0), &[0], &ch);
        let fresh = imm_step(&s, Some(&m), &loc, &ch, &bank, &cfg).unwrap();
        assert_eq!(fresh.measurement.unwrap().estimator, Estimator::Model1);
        s.cov = StateCov::identity() * (cfg.prior_max_sigma * 2.0).powi(2);
        let stale = imm_step(&s, Some(&m), &loc, &ch, &bank, &cfg).unwrap();
        assert_eq!(stale.measurement.unwrap().estimator, Estimator::H1);
        assert_eq!(stale.state.model, Some(Model::M1));
    }

    #[test]
    fn alternating_availability_switches_models() {
        let loc = localizer();
        let cfg = TrackerConfig::default();
        let bank = cfg.bank(3.0);
        let ch = ChannelParams::default();
        let mut tr = DeviceTracker::new(DeviceId::from("dev"), &loc, &bank, &cfg, ch);
        let truth = Point::new(20.0, 20.0);
        let mut models = Vec::new();
        for w in 0..8 {
            let nodes: &[usize] = if w % 2 == 0 { &[0, 1, 2] } else { &[1] };
            let r = tr.process(w, Some(&meas_at(&loc, w, truth, nodes, &ch))).unwrap().unwrap();
            models.push(r.model);
        }
        assert_eq!(models[0], None); // init
        for (w, m) in models.iter().enumerate().skip(1) {
            assert_eq!(*m, Some(if w % 2 == 0 { Model::M3 } else { Model::M1 }));
        }
    }

    #[test]
    fn long_gap_restarts_the_track() {
        let loc = localizer();
        let cfg = TrackerConfig::default();
        let bank = cfg.bank(3.0);
        let ch = ChannelParams::default();
        let p = Point::new(20.0, 20.0);
        let seq = vec![
            meas_at(&loc, 0, p, &[0, 1, 2], &ch),
            meas_at(&loc, 100, p, &[0, 1, 2], &ch), // 300 s later: still the same track
            meas_at(&loc, 201, p, &[0, 1, 2], &ch), // 303 s later: new track
        ];
        let mut tr = DeviceTracker::new(DeviceId::from("dev"), &loc, &bank, &cfg, ch);
        let recs = tr.run(&seq).unwrap();
        let at = |w| recs.iter().find(|r| r.window == w).unwrap();
        assert_eq!(at(100).kind, StepKind::Update);
        assert_eq!(at(100).segment, 1);
        assert_eq!(at(201).kind, StepKind::Init);
        assert_eq!(at(201).segment, 2);
        // 101..=200 coast inside the grace period, then 201 restarts
        assert_eq!(recs.len(), 202);
        assert_eq!(recs.iter().filter(|r| r.kind == StepKind::Coast).count(), 199);
    }

    #[test]
    fn below_n_min_is_untracked_or_coasted() {
        let loc = localizer();
        let cfg = TrackerConfig { n_min: 3, ..Default::default() };
        let bank = cfg.bank(3.0);
        let ch = ChannelParams::default();
        let p = Point::new(20.0, 20.0);
        let mut tr = DeviceTracker::new(DeviceId::from("dev"), &loc, &bank, &cfg, ch);
        let r = tr.process(0, Some(&meas_at(&loc, 0, p, &[0], &ch))).unwrap().unwrap();
        assert_eq!((r.kind, r.n_avail, r.raw.is_none()), (StepKind::Untracked, 1, true));
        let r = tr.process(1, Some(&meas_at(&loc, 1, p, &[0, 1, 2], &ch))).unwrap().unwrap();
        assert_eq!(r.kind, StepKind::Init);
        let r = tr.process(2, Some(&meas_at(&loc, 2, p, &[0, 1], &ch))).unwrap().unwrap();
        assert_eq!(r.kind, StepKind::Coast);
    }

    #[test]
    fn velocity_is_clamped() {
        let loc = localizer();
        let cfg = TrackerConfig { v_max: 0.5, ..Default::default() };
        let bank = cfg.bank(3.0);
        let ch = ChannelParams::default();
        let mut tr = DeviceTracker::new(DeviceId::from("dev"), &loc, &bank, &cfg, ch);
        tr.process(0, Some(&meas_at(&loc, 0, Point::new(5.0, 10.0), &[0, 1, 2, 3], &ch))).unwrap();
        for w in 1..6 {
            let r = tr.process(w, Some(&meas_at(&loc, w, Point::new(5.0 + 8.0 * w as f64, 10.0), &[0, 1, 2, 3], &ch))).unwrap().unwrap();
            let m = r.mean.unwrap();
            assert!(m[2].hypot(m[3]) <= 0.5 + 1e-12);
        }
    }
}
