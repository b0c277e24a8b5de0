use crate::deployment::ReferenceNode;
use crate::error::{Error, Result};
use crate::geometry::{median, Point, Rect};

/// Grid spacing for the single-node coverage estimate, meters.
pub const H1_GRID_SPACING: f64 = 0.25;

/// Single-node estimate: component-wise median of grid points inside the
/// detecting node's coverage disc and outside every other node's disc.
///
/// Grid points outside `floor` are not candidates. When the exclusion leaves
/// nothing the node position is returned.
pub fn locate_one_node(node: &ReferenceNode, all_nodes: &[ReferenceNode], floor: Option<&Rect>, spacing: f64) -> Point {
    let r = node.coverage_radius;
    let steps = (r / spacing).floor() as i64;
    // grid offsets that can land on the floor
    let span = |lo: f64, hi: f64, c: f64| match floor {
        Some(_) => (((lo - c) / spacing).ceil() as i64).max(-steps)..=(((hi - c) / spacing).floor() as i64).min(steps),
        None => -steps..=steps,
    };
    let (xr, yr) = match floor {
        Some(f) => (span(f.min_x, f.max_x, node.position.x), span(f.min_y, f.max_y, node.position.y)),
        None => (span(0.0, 0.0, 0.0), span(0.0, 0.0, 0.0)),
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in xr {
        for j in yr.clone() {
            let off = Point::new(i as f64 * spacing, j as f64 * spacing);
            if off.norm() > r {
                continue;
            }
            let p = node.position + off;
            if floor.is_some_and(|f| !f.contains(&p)) {
                continue;
            }
            let excluded = all_nodes.iter().any(|o| o.id != node.id && o.covers(&p));
            if !excluded {
                xs.push(p.x);
                ys.push(p.y);
            }
        }
    }
    match (median(&xs), median(&ys)) {
        (Some(x), Some(y)) => Point::new(x, y),
        _ => node.position,
    }
}

/// Two-node estimate on the line through `xi` and `xu`:
/// `xi + (d_i + (d_i + d_u − d_iu)/2) · (xu − xi)/‖xu − xi‖`.
pub fn locate_two_nodes(xi: &Point, xu: &Point, d_i: f64, d_u: f64) -> Result<Point> {
    let delta = xu - xi;
    let d_iu = delta.norm();
    if !(d_iu > 0.0) {
        return Err(Error::CoincidentNodes(format!("{xi:?}"), format!("{xu:?}")));
    }
    let along = d_i + 0.5 * (d_i + d_u - d_iu);
    Ok(xi + delta * (along / d_iu))
}

/// Point at distance `d` from `from` in the direction of `target`.
/// `None` when the direction is undefined.
pub fn toward(from: &Point, d: f64, target: &Point) -> Option<Point> {
    let delta = target - from;
    let norm = delta.norm();
    if norm > 0.0 && norm.is_finite() {
        Some(from + delta * (d / norm))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lone_node_disc_is_symmetric() {
        let a = ReferenceNode::new("a", 10.0, 10.0, 15.0, -90.0);
        let p = locate_one_node(&a, std::slice::from_ref(&a), None, H1_GRID_SPACING);
        assert_eq!(p, Point::new(10.0, 10.0));
    }

    #[test]
    fn disjoint_discs_do_not_exclude() {
        let a = ReferenceNode::new("a", 0.0, 0.0, 10.0, -90.0);
        let b = ReferenceNode::new("b", 20.0, 0.0, 10.0, -90.0);
        let p = locate_one_node(&a, &[a.clone(), b], None, H1_GRID_SPACING);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn overlap_pushes_estimate_away() {
        let a = ReferenceNode::new("a", 0.0, 0.0, 10.0, -90.0);
        let b = ReferenceNode::new("b", 10.0, 0.0, 10.0, -90.0);
        let p = locate_one_node(&a, &[a.clone(), b.clone()], None, H1_GRID_SPACING);
        assert!(p.x < 0.0);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);

        // independent oracle: fine grid with a phase offset
        let mut xs = Vec::new();
        let h = 0.05;
        let mut x = -10.0 + 0.013;
        while x <= 10.0 {
            let mut y = -10.0 + 0.029;
            while y <= 10.0 {
                let q = Point::new(x, y);
                if q.norm() <= 10.0 && (q - b.position).norm() > 10.0 {
                    xs.push(x);
                }
                y += h;
            }
            x += h;
        }
        let oracle = median(&xs).unwrap();
        assert!((p.x - oracle).abs() < 0.5, "grid {} vs oracle {}", p.x, oracle);
    }

    #[test]
    fn full_exclusion_returns_node() {
        let a = ReferenceNode::new("a", 0.0, 0.0, 5.0, -90.0);
        let b = ReferenceNode::new("b", 1.0, 0.0, 20.0, -90.0);
        let p = locate_one_node(&a, &[a.clone(), b], None, H1_GRID_SPACING);
        assert_eq!(p, a.position);
    }

    #[test]
    fn floor_restricts_candidates() {
        let a = ReferenceNode::new("a", 1.0, 10.0, 8.0, -90.0);
        let floor = Rect::floor(40.0, 90.0);
        let p = locate_one_node(&a, std::slice::from_ref(&a), Some(&floor), H1_GRID_SPACING);
        assert!(p.x > 1.0);
        assert!(floor.contains(&p));
    }

    #[test]
    fn grid_phase_moves_median_little() {
        let a = ReferenceNode::new("a", 0.0, 0.0, 15.0, -90.0);
        let b = ReferenceNode::new("b", 18.0, 4.0, 12.0, -90.0);
        let base = locate_one_node(&a, &[a.clone(), b.clone()], None, H1_GRID_SPACING);
        for shift in [0.05, 0.11, 0.17] {
            let a2 = ReferenceNode::new("a", shift, shift, 15.0, -90.0);
            let b2 = ReferenceNode::new("b", 18.0 + shift, 4.0 + shift, 12.0, -90.0);
            let p = locate_one_node(&a2, &[a2.clone(), b2], None, H1_GRID_SPACING) - Point::new(shift, shift);
            assert!((p - base).norm() < 0.5);
        }
    }

    #[test]
    fn two_node_examples() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(locate_two_nodes(&a, &b, 5.0, 5.0).unwrap(), Point::new(5.0, 0.0));
        assert_eq!(locate_two_nodes(&a, &b, 2.0, 8.0).unwrap(), Point::new(2.0, 0.0));
        assert_eq!(locate_two_nodes(&a, &b, 4.0, 8.0).unwrap(), Point::new(5.0, 0.0));
        assert!(locate_two_nodes(&a, &a, 4.0, 8.0).is_err());
    }

    #[test]
    fn toward_examples() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(toward(&o, 5.0, &Point::new(10.0, 0.0)), Some(Point::new(5.0, 0.0)));
        assert_eq!(toward(&o, 5.0, &Point::new(0.0, 7.0)), Some(Point::new(0.0, 5.0)));
        assert_eq!(toward(&o, 0.0, &Point::new(3.0, 7.0)), Some(o));
        assert_eq!(toward(&o, 5.0, &o), None);
    }

    proptest! {
        #[test]
        fn h2_lies_on_node_line(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, bx in -50.0f64..50.0, by in -50.0f64..50.0,
            di in 0.0f64..60.0, du in 0.0f64..60.0,
        ) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            prop_assume!((b - a).norm() > 1e-3);
            let p = locate_two_nodes(&a, &b, di, du).unwrap();
            let u = p - a;
            let v = b - a;
            let cross = u.x * v.y - u.y * v.x;
            prop_assert!(cross.abs() <= 1e-9 * (1.0 + u.norm() * v.norm()));
        }

        #[test]
        fn toward_lands_at_range(d in 0.0f64..50.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
            let node = Point::new(3.0, -2.0);
            let t = Point::new(tx, ty);
            prop_assume!((t - node).norm() > 1e-6);
            let p = toward(&node, d, &t).unwrap();
            prop_assert!(((p - node).norm() - d).abs() < 1e-9);
        }
    }
}
