use nalgebra::{Matrix2, Vector2};

use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlsError {
    TooFewNodes,
    RankDeficient,
}

/// Linear least-squares trilateration on mean-centered coordinates.
///
/// Each row is `(a_i − ā)ᵀ x = ½[(‖a_i‖² − mean ‖a‖²) − (d_i² − mean d²)]`;
/// the estimate is `(MᵀM)⁻¹ Mᵀ b`.
pub fn locate_lls(nodes: &[Point], ranges: &[f64]) -> Result<Point, LlsError> {
    let n = nodes.len();
    if n < 3 || ranges.len() != n {
        return Err(LlsError::TooFewNodes);
    }
    let inv = 1.0 / n as f64;
    let mean: Vector2<f64> = nodes.iter().sum::<Vector2<f64>>() * inv;
    let mean_sq = nodes.iter().map(|a| a.norm_squared()).sum::<f64>() * inv;
    let mean_d2 = ranges.iter().map(|d| d * d).sum::<f64>() * inv;

    let mut mtm = Matrix2::zeros();
    let mut mtb = Vector2::zeros();
    for (a, d) in nodes.iter().zip(ranges) {
        let row = a - mean;
        let b = 0.5 * ((a.norm_squared() - mean_sq) - (d * d - mean_d2));
        mtm += row * row.transpose();
        mtb += row * b;
    }
    let scale = mtm.trace();
    if !(scale > 0.0) || mtm.determinant() <= 1e-10 * scale * scale {
        return Err(LlsError::RankDeficient);
    }
    let inv_mtm = mtm.try_inverse().ok_or(LlsError::RankDeficient)?;
    Ok(inv_mtm * mtb)
}
