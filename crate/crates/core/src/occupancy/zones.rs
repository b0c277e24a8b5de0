use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// Vertices in order, meters. The closing edge is implicit.
    pub polygon: Vec<Point>,
}

impl Zone {
    pub fn new(id: &str, vertices: &[(f64, f64)]) -> Self {
        Zone { id: id.to_string(), polygon: vertices.iter().map(|&(x, y)| Point::new(x, y)).collect() }
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon).abs()
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| (self.polygon[i], self.polygon[(i + 1) % n]))
    }

    pub fn centroid(&self) -> Point {
        let a = polygon_area(&self.polygon);
        if a.abs() < f64::EPSILON {
            let n = self.polygon.len().max(1) as f64;
            return self.polygon.iter().sum::<Point>() / n;
        }
        let mut c = Point::zeros();
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            c += (p + q) * cross;
        }
        c / (6.0 * a)
    }
}

/// Signed shoelace area (positive for counter-clockwise vertices).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        p.x * q.y - q.x * p.y
    })
    .sum::<f64>()
        * 0.5
}

const BOUNDARY_EPS: f64 = 1e-9;

fn on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    let ab = b - a;
    let len = ab.norm();
    if len == 0.0 {
        return (p - a).norm() <= BOUNDARY_EPS;
    }
    let t = ((p - a).dot(&ab) / (len * len)).clamp(0.0, 1.0);
    (a + ab * t - p).norm() <= BOUNDARY_EPS * len.max(1.0)
}

fn on_boundary(p: &Point, poly: &[Point]) -> bool {
    let n = poly.len();
    (0..n).any(|i| on_segment(p, &poly[i], &poly[(i + 1) % n]))
}

/// Crossing-number test; points on an edge count as inside.
pub fn point_in_polygon(p: &Point, poly: &[Point]) -> bool {
    if on_boundary(p, poly) {
        return true;
    }
    strictly_inside(p, poly)
}

fn strictly_inside(p: &Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside && !on_boundary(p, poly)
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b - a).perp(&(c - a))
}

/// Proper crossing: the segments cut through each other's interiors.
fn segments_cross(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let scale = ((p2 - p1).norm() * (q2 - q1).norm()).max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// Result of a zone lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneLookup {
    pub index: usize,
    /// The point was in no zone and the nearest centroid was used.
    pub fallback: bool,
}

/// Validated zone layout over a floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    zones: Vec<Zone>,
    floor: Rect,
    centroids: Vec<Point>,
}

impl ZoneMap {
    /// Validates and builds the map. Overlapping or malformed zones are
    /// errors; a coverage gap larger than 0.1% of the floor is returned as a
    /// warning.
    pub fn new(zones: Vec<Zone>, floor: Rect) -> Result<(ZoneMap, Vec<String>)> {
        if zones.is_empty() {
            return Err(Error::ZoneMap("no zones".into()));
        }
        if !floor.is_valid() {
            return Err(Error::ZoneMap(format!("invalid floor bounds {floor:?}")));
        }
        let mut seen = std::collections::HashSet::new();
        for z in &zones {
            if !seen.insert(z.id.as_str()) {
                return Err(Error::ZoneMap(format!("duplicate zone id {}", z.id)));
            }
            validate_polygon(z)?;
        }
        for (i, a) in zones.iter().enumerate() {
            for b in &zones[i + 1..] {
                if overlaps(a, b) {
                    return Err(Error::ZoneMap(format!("zones {} and {} overlap", a.id, b.id)));
                }
            }
        }
        let mut warnings = Vec::new();
        if let Some(z) = zones.iter().find(|z| z.polygon.iter().any(|p| !floor.contains(p))) {
            warnings.push(format!("zone {} extends beyond the floor", z.id));
        }
        let covered: f64 = zones.iter().map(Zone::area).sum();
        let gap = (floor.area() - covered).abs() / floor.area();
        if gap > 1e-3 {
            warnings.push(format!(
                "zones cover {covered:.3} m² of a {:.3} m² floor ({:.2}% mismatch); uncovered points use the nearest zone",
                floor.area(),
                gap * 100.0
            ));
        }
        let centroids = zones.iter().map(Zone::centroid).collect();
        Ok((ZoneMap { zones, floor, centroids }, warnings))
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn floor(&self) -> &Rect {
        &self.floor
    }

    pub fn ids(&self) -> Vec<&str> {
        self.zones.iter().map(|z| z.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    /// Lowest-indexed zone containing `p` (boundaries inclusive), or the
    /// zone with the nearest centroid.
    pub fn lookup(&self, p: &Point) -> ZoneLookup {
        if let Some(index) = self.zones.iter().position(|z| point_in_polygon(p, &z.polygon)) {
            return ZoneLookup { index, fallback: false };
        }
        let index = self
            .centroids
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - p).norm_squared().total_cmp(&(b.1 - p).norm_squared()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        ZoneLookup { index, fallback: true }
    }
}

/// Index of the zone containing `position`.
pub fn zone_of(position: &Point, map: &ZoneMap) -> usize {
    map.lookup(position).index
}

fn validate_polygon(z: &Zone) -> Result<()> {
    let n = z.polygon.len();
    if n < 3 {
        return Err(Error::ZoneMap(format!("zone {} has fewer than 3 vertices", z.id)));
    }
    if z.polygon.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::ZoneMap(format!("zone {} has a non-finite vertex", z.id)));
    }
    if z.area() <= 0.0 {
        return Err(Error::ZoneMap(format!("zone {} has zero area", z.id)));
    }
    let edges: Vec<_> = z.edges().collect();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if !adjacent && segments_cross(&edges[i].0, &edges[i].1, &edges[j].0, &edges[j].1) {
                return Err(Error::ZoneMap(format!("zone {} is self-intersecting", z.id)));
            }
        }
    }
    Ok(())
}

/// Interior overlap: crossing edges, a vertex strictly inside the other
/// polygon, or a shared interior sample point.
fn overlaps(a: &Zone, b: &Zone) -> bool {
    for (p1, p2) in a.edges() {
        for (q1, q2) in b.edges() {
            if segments_cross(&p1, &p2, &q1, &q2) {
                return true;
            }
        }
    }
    if a.polygon.iter().any(|p| strictly_inside(p, &b.polygon)) || b.polygon.iter().any(|p| strictly_inside(p, &a.polygon)) {
        return true;
    }
    // coincident or nested-with-shared-edges layouts
    if strictly_inside(&a.centroid(), &b.polygon) && strictly_inside(&a.centroid(), &a.polygon) {
        return true;
    }
    if strictly_inside(&b.centroid(), &a.polygon) && strictly_inside(&b.centroid(), &b.polygon) {
        return true;
    }
    let bbox = |z: &Zone| {
        z.polygon.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, p| {
            (acc.0.min(p.x), acc.1.min(p.y), acc.2.max(p.x), acc.3.max(p.y))
        })
    };
    let (ax0, ay0, ax1, ay1) = bbox(a);
    let (bx0, by0, bx1, by1) = bbox(b);
    let (x0, y0, x1, y1) = (ax0.max(bx0), ay0.max(by0), ax1.min(bx1), ay1.min(by1));
    if x0 >= x1 || y0 >= y1 {
        return false;
    }
    const N: usize = 64;
    for i in 0..N {
        for j in 0..N {
            let p = Point::new(x0 + (x1 - x0) * (i as f64 + 0.5) / N as f64, y0 + (y1 - y0) * (j as f64 + 0.5) / N as f64);
            if strictly_inside(&p, &a.polygon) && strictly_inside(&p, &b.polygon) {
                return true;
            }
        }
    }
    false
}
