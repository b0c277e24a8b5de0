use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryModel {
    RandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause_min: f64,
        pause_max: f64,
        /// Waypoints keep this distance from the walls, meters.
        margin: f64,
    },
    /// Walks the vertex list at constant speed, looping back to the first
    /// vertex when `closed`.
    Scripted { vertices: Vec<(f64, f64)>, speed: f64, closed: bool },
}

impl Default for TrajectoryModel {
    fn default() -> Self {
        TrajectoryModel::RandomWaypoint { speed_min: 0.5, speed_max: 1.5, pause_min: 30.0, pause_max: 300.0, margin: 1.0 }
    }
}

impl TrajectoryModel {
    pub fn validate(&self, floor: &Rect) -> Result<()> {
        match self {
            TrajectoryModel::RandomWaypoint { speed_min, speed_max, pause_min, pause_max, margin } => {
                if !(*speed_min > 0.0 && speed_max >= speed_min) {
                    return Err(Error::Config("random waypoint speeds must satisfy 0 < min <= max".into()));
                }
                if !(*pause_min >= 0.0 && pause_max >= pause_min) {
                    return Err(Error::Config("random waypoint pauses must satisfy 0 <= min <= max".into()));
                }
                if !(*margin >= 0.0 && 2.0 * margin < floor.width().min(floor.height())) {
                    return Err(Error::Config("random waypoint margin too large for the floor".into()));
                }
            }
            TrajectoryModel::Scripted { vertices, speed, .. } => {
                if vertices.is_empty() || !(*speed > 0.0) {
                    return Err(Error::Config("scripted path needs vertices and a positive speed".into()));
                }
                if vertices.iter().any(|&(x, y)| !floor.contains(&Point::new(x, y))) {
                    return Err(Error::Config("scripted path leaves the floor".into()));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear path through timed waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(time, position)`, strictly increasing in time.
    pub waypoints: Vec<(f64, Point)>,
}

impl Trajectory {
    pub fn start(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.0)
    }

    pub fn end(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.0)
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Position at time `t`, held constant outside the covered span.
    pub fn position_at(&self, t: f64) -> Point {
        let w = &self.waypoints;
        if w.is_empty() {
            return Point::zeros();
        }
        if t <= w[0].0 {
            return w[0].1;
        }
        let i = w.partition_point(|(ti, _)| *ti <= t);
        if i >= w.len() {
            return w[w.len() - 1].1;
        }
        let (t0, p0) = w[i - 1];
        let (t1, p1) = w[i];
        p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
    }

    /// Largest segment speed.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|s| (s[1].1 - s[0].1).norm() / (s[1].0 - s[0].0))
            .fold(0.0, f64::max)
    }
}

/// Trajectory over `[start, start + duration]`.
pub fn gen_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    floor: &Rect,
    model: &TrajectoryModel,
    start: f64,
    duration: f64,
) -> Trajectory {
    let end = start + duration.max(0.0);
    match model {
        TrajectoryModel::RandomWaypoint { speed_min, speed_max, pause_min, pause_max, margin } => {
            let pick = |rng: &mut R| {
                Point::new(
                    rng.random_range(floor.min_x + margin..=floor.max_x - margin),
                    rng.random_range(floor.min_y + margin..=floor.max_y - margin),
                )
            };
            let mut t = start;
            let mut p = pick(rng);
            let mut waypoints = vec![(t, p)];
            while t < end {
                let pause = if pause_max > pause_min { rng.random_range(*pause_min..*pause_max) } else { *pause_min };
                if pause > 0.0 {
                    t += pause;
                    waypoints.push((t, p));
                    if t >= end {
                        break;
                    }
                }
                let q = pick(rng);
                let v = if speed_max > speed_min { rng.random_range(*speed_min..*speed_max) } else { *speed_min };
                let dist = (q - p).norm();
                if dist > 0.0 {
                    t += dist / v;
                    waypoints.push((t, q));
                }
                p = q;
            }
            truncate(Trajectory { waypoints }, end)
        }
        TrajectoryModel::Scripted { vertices, speed, closed } => {
            let mut pts: Vec<Point> = vertices.iter().map(|&(x, y)| Point::new(x, y)).collect();
            if *closed && pts.len() > 1 {
                pts.push(pts[0]);
            }
            let mut t = start;
            let mut waypoints = vec![(t, pts[0])];
            if pts.len() == 1 {
                waypoints.push((end.max(start + f64::EPSILON), pts[0]));
                return Trajectory { waypoints };
            }
            let mut i = 0;
            loop {
                let (a, b) = (pts[i], pts[i + 1]);
                let dist = (b - a).norm();
                if dist > 0.0 {
                    t += dist / speed;
                    waypoints.push((t, b));
                }
                if t >= end {
                    break;
                }
                i += 1;
                if i + 1 >= pts.len() {
                    if !*closed {
                        waypoints.push((end, b));
                        break;
                    }
                    i = 0;
                }
            }
            truncate(Trajectory { waypoints }, end)
        }
    }
}

fn truncate(mut traj: Trajectory, end: f64) -> Trajectory {
    if traj.end() > end {
        let p = traj.position_at(end);
        traj.waypoints.retain(|(t, _)| *t < end);
        traj.waypoints.push((end, p));
    }
    traj.waypoints.dedup_by(|b, a| b.0 <= a.0);
    traj
}
