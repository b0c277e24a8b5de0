use serde::{Deserialize, Serialize};

use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measurement::{MeasurementEntry, WindowedMeasurement};
use crate::tracking::{measure_model1, measure_model2};

use super::gtrs::{locate_nls, GtrsTuning, GtrsVariant};
use super::heuristics::{locate_one_node, locate_two_nodes, H1_GRID_SPACING};
use super::lls::locate_lls;
use super::{range_from_rss, ChannelParams, Estimator, PositionEstimate, Quality};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub h1_spacing: f64,
    pub clamp_to_floor: bool,
    pub gtrs: GtrsTuning,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig { h1_spacing: H1_GRID_SPACING, clamp_to_floor: true, gtrs: GtrsTuning::default() }
    }
}

/// Estimator dispatch over a fixed deployment.
///
/// Single-node coverage estimates depend only on the deployment, so they
/// are computed once up front.
#[derive(Debug, Clone)]
pub struct Localizer {
    deployment: Deployment,
    cfg: LocalizerConfig,
    h1: Vec<Point>,
}

impl Localizer {
    pub fn new(deployment: Deployment, cfg: LocalizerConfig) -> Self {
        let h1 = deployment
            .nodes()
            .iter()
            .map(|n| locate_one_node(n, deployment.nodes(), Some(deployment.floor()), cfg.h1_spacing))
            .collect();
        Localizer { deployment, cfg, h1 }
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.cfg
    }

    pub fn node_position(&self, idx: usize) -> Point {
        self.deployment.node(idx).position
    }

    /// Cached single-node coverage estimate for node `idx`.
    pub fn coverage_estimate(&self, idx: usize) -> Point {
        self.h1[idx]
    }

    /// Projects `p` onto the floor when clamping is enabled.
    pub fn confine(&self, p: Point) -> Point {
        if self.cfg.clamp_to_floor {
            self.deployment.floor().clamp(&p)
        } else {
            p
        }
    }

    fn estimate(&self, position: Point, estimator: Estimator, used: usize, quality: Quality) -> PositionEstimate {
        PositionEstimate { position, estimator, num_nodes_used: used, aux: None, quality }
    }

    /// Estimate for one window.
    ///
    /// Without a prior this is the initialization path (H1/H2/LLS/NLS). With
    /// a predicted position, one- and two-node windows use the prior-corrected
    /// constructions; three or more nodes use LLS, or NLS when a channel
    /// parameter is unknown and at least four nodes are available.
    pub fn localize(&self, meas: &WindowedMeasurement, ch: &ChannelParams, prior: Option<Point>) -> Result<PositionEstimate> {
        let count = meas.len();
        let strongest = meas.strongest_first();
        match count {
            0 => Err(Error::EmptyMeasurement),
            1 => {
                let e = strongest[0];
                match prior {
                    None => Ok(self.estimate(self.h1[e.node], Estimator::H1, 1, Quality::Good)),
                    Some(pred) => {
                        let d = range_from_rss(e.rss, ch)?;
                        let p = measure_model1(&self.node_position(e.node), d, &self.confine(pred), None);
                        Ok(self.estimate(self.confine(p), Estimator::Model1, 1, Quality::Good))
                    }
                }
            }
            2 => self.two_node(&strongest[0], &strongest[1], ch, prior, 2, Quality::Good),
            _ => self.multi_node(meas, &strongest, ch, prior),
        }
    }

    fn two_node(
        &self,
        i: &MeasurementEntry,
        u: &MeasurementEntry,
        ch: &ChannelParams,
        prior: Option<Point>,
        used: usize,
        quality: Quality,
    ) -> Result<PositionEstimate> {
        let d_i = range_from_rss(i.rss, ch)?;
        let d_u = range_from_rss(u.rss, ch)?;
        let xi = self.node_position(i.node);
        let xu = self.node_position(u.node);
        Ok(match prior {
            None => self.estimate(self.confine(locate_two_nodes(&xi, &xu, d_i, d_u)?), Estimator::H2, used, quality),
            Some(pred) => {
                let p = measure_model2(&xi, &xu, d_i, d_u, &self.confine(pred), None);
                self.estimate(self.confine(p), Estimator::Model2, used, quality)
            }
        })
    }

    fn multi_node(
        &self,
        meas: &WindowedMeasurement,
        strongest: &[MeasurementEntry],
        ch: &ChannelParams,
        prior: Option<Point>,
    ) -> Result<PositionEstimate> {
        let count = meas.len();
        let nodes: Vec<Point> = meas.entries.iter().map(|e| self.node_position(e.node)).collect();
        let rss: Vec<f64> = meas.entries.iter().map(|e| e.rss).collect();

        if count >= 4 {
            if let Some(variant) = GtrsVariant::for_knowledge(ch.p0_known, ch.n_known) {
                let sol = locate_nls(variant, &nodes, &rss, ch, &self.cfg.gtrs)?;
                if sol.quality == Quality::Good {
                    return Ok(PositionEstimate {
                        position: self.confine(sol.position),
                        estimator: variant.estimator(),
                        num_nodes_used: count,
                        aux: Some(sol.aux),
                        quality: Quality::Good,
                    });
                }
                return self.lls(&nodes, &rss, strongest, ch, prior, Quality::LowQuality);
            }
        }
        self.lls(&nodes, &rss, strongest, ch, prior, Quality::Good)
    }

    fn lls(
        &self,
        nodes: &[Point],
        rss: &[f64],
        strongest: &[MeasurementEntry],
        ch: &ChannelParams,
        prior: Option<Point>,
        quality: Quality,
    ) -> Result<PositionEstimate> {
        let ranges = rss.iter().map(|&p| range_from_rss(p, ch)).collect::<Result<Vec<_>>>()?;
        match locate_lls(nodes, &ranges) {
            Ok(p) => Ok(self.estimate(self.confine(p), Estimator::H3Lls, nodes.len(), quality)),
            Err(_) => self.two_node(&strongest[0], &strongest[1], ch, prior, nodes.len(), Quality::Fallback),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::{DeviceId, ReferenceNode};
    use crate::geometry::Rect;
    use crate::localization::rss_from_range;

    fn deployment() -> Deployment {
        let nodes = vec![
            ReferenceNode::new("a", 5.0, 5.0, 15.0, -90.0),
            ReferenceNode::new("b", 35.0, 5.0, 15.0, -90.0),
            ReferenceNode::new("c", 5.0, 45.0, 15.0, -90.0),
            ReferenceNode::new("d", 35.0, 45.0, 15.0, -90.0),
            ReferenceNode::new("e", 20.0, 80.0, 15.0, -90.0),
        ];
        Deployment::new(nodes, Rect::floor(40.0, 90.0)).unwrap()
    }

    fn meas(target: Point, nodes: &[usize], ch: &ChannelParams, dep: &Deployment) -> WindowedMeasurement {
        let entries = nodes
            .iter()
            .map(|&i| MeasurementEntry { node: i, rss: rss_from_range((dep.node(i).position - target).norm(), ch), hold_age: 0 })
            .collect();
        WindowedMeasurement { device_id: DeviceId::from("d"), window: 0, entries }
    }

    #[test]
    fn dispatch_follows_availability_and_knowledge() {
        let dep = deployment();
        let loc = Localizer::new(dep.clone(), LocalizerConfig::default());
        let ch = ChannelParams::known(-35.0, 3.0);
        let t = Point::new(18.0, 20.0);
        assert_eq!(loc.localize(&meas(t, &[0], &ch, &dep), &ch, None).unwrap().estimator, Estimator::H1);
        assert_eq!(loc.localize(&meas(t, &[0, 1], &ch, &dep), &ch, None).unwrap().estimator, Estimator::H2);
        assert_eq!(loc.localize(&meas(t, &[0, 1, 2], &ch, &dep), &ch, None).unwrap().estimator, Estimator::H3Lls);
        assert_eq!(loc.localize(&meas(t, &[0, 1, 2, 3, 4], &ch, &dep), &ch, None).unwrap().estimator, Estimator::H3Lls);
        assert_eq!(loc.localize(&meas(t, &[0], &ch, &dep), &ch, Some(t)).unwrap().estimator, Estimator::Model1);
        assert_eq!(loc.localize(&meas(t, &[0, 1], &ch, &dep), &ch, Some(t)).unwrap().estimator, Estimator::Model2);

        let unknown = ChannelParams { p0_known: false, n_known: false, p0: -40.0, n: 3.0, ..ch };
        let est = loc.localize(&meas(t, &[0, 1, 2, 3, 4], &ch, &dep), &unknown, None).unwrap();
        assert_eq!(est.estimator, Estimator::NlsV3);
        assert!((est.position - t).norm() < 1e-5);
        // three nodes never trigger NLS
        let est3 = loc.localize(&meas(t, &[0, 1, 2], &ch, &dep), &unknown, None).unwrap();
        assert_eq!(est3.estimator, Estimator::H3Lls);

        let p0_unknown = ChannelParams { p0_known: false, p0: -45.0, ..ch };
        assert_eq!(loc.localize(&meas(t, &[0, 1, 2, 3], &ch, &dep), &p0_unknown, None).unwrap().estimator, Estimator::NlsV1);
        let n_unknown = ChannelParams { n_known: false, n: 2.5, ..ch };
        assert_eq!(loc.localize(&meas(t, &[0, 1, 2, 3], &ch, &dep), &n_unknown, None).unwrap().estimator, Estimator::NlsV2);
    }

    #[test]
    fn empty_measurement_is_an_error() {
        let dep = deployment();
        let loc = Localizer::new(dep, LocalizerConfig::default());
        let m = WindowedMeasurement { device_id: DeviceId::from("d"), window: 0, entries: vec![] };
        assert!(matches!(loc.localize(&m, &ChannelParams::default(), None), Err(Error::EmptyMeasurement)));
    }

    #[test]
    fn collinear_falls_back_to_two_strongest() {
        let nodes = vec![
            ReferenceNode::new("a", 0.0, 0.0, 15.0, -90.0),
            ReferenceNode::new("b", 5.0, 0.0, 15.0, -90.0),
            ReferenceNode::new("c", 10.0, 0.0, 15.0, -90.0),
        ];
        let dep = Deployment::new(nodes, Rect::floor(40.0, 40.0)).unwrap();
        let loc = Localizer::new(dep.clone(), LocalizerConfig::default());
        let ch = ChannelParams::known(-35.0, 3.0);
        let est = loc.localize(&meas(Point::new(2.0, 0.0), &[0, 1, 2], &ch, &dep), &ch, None).unwrap();
        assert_eq!(est.estimator, Estimator::H2);
        assert_eq!(est.quality, Quality::Fallback);
        assert_eq!(est.num_nodes_used, 3);
    }

    #[test]
    fn model1_handles_prior_on_node() {
        let dep = deployment();
        let loc = Localizer::new(dep.clone(), LocalizerConfig::default());
        let ch = ChannelParams::known(-35.0, 3.0);
        let node = dep.node(0).position;
        let m = WindowedMeasurement {
            device_id: DeviceId::from("d"),
            window: 0,
            entries: vec![MeasurementEntry { node: 0, rss: rss_from_range(4.0, &ch), hold_age: 0 }],
        };
        let est = loc.localize(&m, &ch, Some(node)).unwrap();
        assert!((est.position - (node + Point::new(4.0, 0.0))).norm() < 1e-9);
    }

    #[test]
    fn dispatch_is_total() {
        let dep = deployment();
        let loc = Localizer::new(dep.clone(), LocalizerConfig::default());
        let truth = ChannelParams::known(-35.0, 3.0);
        let t = Point::new(20.0, 30.0);
        for count in 1..=5 {
            let idx: Vec<usize> = (0..count).collect();
            let m = meas(t, &idx, &truth, &dep);
            for p0_known in [true, false] {
                for n_known in [true, false] {
                    let ch = ChannelParams { p0_known, n_known, ..truth };
                    for prior in [None, Some(Point::new(10.0, 10.0))] {
                        let est = loc.localize(&m, &ch, prior).unwrap();
                        assert!(est.position.x.is_finite() && est.position.y.is_finite());
                        assert_eq!(est.num_nodes_used, count);
                    }
                }
            }
        }
    }
}
