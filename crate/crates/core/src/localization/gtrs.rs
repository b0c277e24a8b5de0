//! NLS localization with unknown channel parameters, posed as a generalized
//! trust-region subproblem:
//!
//! ```text
//! minimize ‖Z y − b‖²   subject to   yᵀ D y + 2 fᵀ y = 0
//! ```
//!
//! The stationarity condition gives `y(ν) = (ZᵀZ + νD)⁻¹ (Zᵀb − ν f)` for a
//! scalar multiplier ν. On the interval where `ZᵀZ + νD` is positive
//! definite the constraint value `φ(ν)` is strictly decreasing, so its root
//! is bracketed and found by bisection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

use super::{ChannelAux, ChannelParams, Estimator, Quality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GtrsVariant {
    /// P0 unknown, n known. Unknowns `[‖x‖², x, y, α]`.
    UnknownP0,
    /// n unknown, P0 known. Unknowns `[‖x‖², x, y, δ]`.
    UnknownN,
    /// Both unknown. Unknowns `[‖x‖², x, y, γ, γδ]`.
    UnknownBoth,
}

impl GtrsVariant {
    pub fn index(&self) -> u8 {
        match self {
            GtrsVariant::UnknownP0 => 1,
            GtrsVariant::UnknownN => 2,
            GtrsVariant::UnknownBoth => 3,
        }
    }

    pub fn from_index(v: u8) -> Option<Self> {
        match v {
            1 => Some(GtrsVariant::UnknownP0),
            2 => Some(GtrsVariant::UnknownN),
            3 => Some(GtrsVariant::UnknownBoth),
            _ => None,
        }
    }

    pub fn min_nodes(&self) -> usize {
        match self {
            GtrsVariant::UnknownP0 | GtrsVariant::UnknownN => 3,
            GtrsVariant::UnknownBoth => 4,
        }
    }

    pub fn columns(&self) -> usize {
        match self {
            GtrsVariant::UnknownP0 | GtrsVariant::UnknownN => 4,
            GtrsVariant::UnknownBoth => 5,
        }
    }

    pub fn estimator(&self) -> Estimator {
        match self {
            GtrsVariant::UnknownP0 => Estimator::NlsV1,
            GtrsVariant::UnknownN => Estimator::NlsV2,
            GtrsVariant::UnknownBoth => Estimator::NlsV3,
        }
    }

    /// Variant for the given knowledge flags; `None` when both are known.
    pub fn for_knowledge(p0_known: bool, n_known: bool) -> Option<Self> {
        match (p0_known, n_known) {
            (true, true) => None,
            (false, true) => Some(GtrsVariant::UnknownP0),
            (true, false) => Some(GtrsVariant::UnknownN),
            (false, false) => Some(GtrsVariant::UnknownBoth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GtrsTuning {
    /// Linearization point for the path-loss exponent.
    pub n0: f64,
    /// Linearization point for P0, dBm.
    pub p0_bar: f64,
    /// Re-linearization passes at the previous estimate (0 = single solve).
    pub refine_iterations: usize,
    pub max_bisections: usize,
    pub max_expansions: usize,
    /// Also refine from the seeds in [`N0_STARTS`] and keep the best fit.
    pub multi_start: bool,
}

impl Default for GtrsTuning {
    fn default() -> Self {
        GtrsTuning {
            n0: 3.0,
            p0_bar: -40.0,
            refine_iterations: 40,
            max_bisections: 200,
            max_expansions: 10,
            multi_start: true,
        }
    }
}

/// Extra path-loss exponent seeds for the unknown-exponent variants.
pub const N0_STARTS: [f64; 9] = [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsProblem {
    pub variant: GtrsVariant,
    pub z: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Diagonal of the selector matrix D.
    pub d: DVector<f64>,
    pub f: DVector<f64>,
    pub n0: f64,
    pub p0_bar: f64,
    /// Channel values the build relied on (n for v=1, P0 for v=2) and d0.
    pub channel: ChannelParams,
}

impl GtrsProblem {
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }
}

/// Populates `Z, b, D, f` for the variant. Coordinates are expressed in
/// units of `d0` so that the reference distance drops out.
pub fn build_gtrs(
    variant: GtrsVariant,
    nodes: &[Point],
    rss: &[f64],
    ch: &ChannelParams,
    tuning: &GtrsTuning,
) -> Result<GtrsProblem> {
    let n_nodes = nodes.len();
    if n_nodes < variant.min_nodes() {
        return Err(Error::InsufficientNodes { needed: variant.min_nodes(), got: n_nodes });
    }
    if rss.len() != n_nodes {
        return Err(Error::Config(format!("{} nodes but {} RSS values", n_nodes, rss.len())));
    }
    if rss.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("rss"));
    }
    let cols = variant.columns();
    let mut z = DMatrix::zeros(n_nodes, cols);
    let mut b = DVector::zeros(n_nodes);
    for (i, (node, &p)) in nodes.iter().zip(rss).enumerate() {
        let a = node / ch.d0;
        let a2 = a.norm_squared();
        match variant {
            GtrsVariant::UnknownP0 => {
                let lambda = 10f64.powf(p / (5.0 * ch.n));
                z[(i, 0)] = lambda;
                z[(i, 1)] = -2.0 * lambda * a.x;
                z[(i, 2)] = -2.0 * lambda * a.y;
                z[(i, 3)] = -1.0;
                b[i] = -lambda * a2;
            }
            GtrsVariant::UnknownN => {
                let q = 10f64.powf((ch.p0 - p) / (5.0 * tuning.n0));
                z[(i, 0)] = 1.0;
                z[(i, 1)] = -2.0 * a.x;
                z[(i, 2)] = -2.0 * a.y;
                z[(i, 3)] = q * q.ln();
                b[i] = q - a2;
            }
            GtrsVariant::UnknownBoth => {
                let g = 10f64.powf((tuning.p0_bar - p) / (5.0 * tuning.n0));
                z[(i, 0)] = 1.0;
                z[(i, 1)] = -2.0 * a.x;
                z[(i, 2)] = -2.0 * a.y;
                z[(i, 3)] = -g;
                z[(i, 4)] = g * g.ln();
                b[i] = -a2;
            }
        }
    }
    let mut d = DVector::zeros(cols);
    d[1] = 1.0;
    d[2] = 1.0;
    let mut f = DVector::zeros(cols);
    f[0] = -0.5;
    Ok(GtrsProblem { variant, z, b, d, f, n0: tuning.n0, p0_bar: tuning.p0_bar, channel: *ch })
}

/// Result of the constrained least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub y: DVector<f64>,
    /// Lagrange multiplier at the returned point (NaN for the fallback).
    pub nu: f64,
    /// `yᵀDy + 2fᵀy` at the returned point.
    pub constraint: f64,
    pub bisections: usize,
    /// False when no bracket was found and the unconstrained fit was returned.
    pub converged: bool,
}

fn constraint_value(y: &DVector<f64>, d: &DVector<f64>, f: &DVector<f64>) -> f64 {
    y.dot(&d.component_mul(y)) + 2.0 * f.dot(y)
}

fn constraint_tol(y: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + y.norm_squared())
}

fn min_max_eigen(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Minimizes `‖Z y − b‖²` subject to `yᵀ diag(d) y + 2 fᵀ y = 0` (d ≥ 0).
pub fn solve_quadratic_constrained(
    z: &DMatrix<f64>,
    b: &DVector<f64>,
    d: &DVector<f64>,
    f: &DVector<f64>,
    max_bisections: usize,
    max_expansions: usize,
) -> ConstrainedSolution {
    let m = z.ncols();
    // Column equilibration: y = S ỹ keeps the constraint's form.
    let s = DVector::from_iterator(
        m,
        (0..m).map(|j| {
            let c = z.column(j).norm();
            if c > 0.0 && c.is_finite() {
                1.0 / c
            } else {
                1.0
            }
        }),
    );
    let zs = z * DMatrix::from_diagonal(&s);
    let ds = d.component_mul(&s).component_mul(&s);
    let fs = f.component_mul(&s);
    let a = zs.transpose() * &zs;
    let g = zs.transpose() * b;

    let solve_at = |nu: f64| -> Option<DVector<f64>> {
        let mat = &a + DMatrix::from_diagonal(&(&ds * nu));
        let chol = mat.cholesky()?;
        let y = chol.solve(&(&g - &fs * nu)).component_mul(&s);
        y.iter().all(|v| v.is_finite()).then_some(y)
    };
    let fallback = || {
        let yt = match a.clone().cholesky() {
            Some(c) if min_max_eigen(&a).0 > 1e-13 * min_max_eigen(&a).1 => c.solve(&g),
            _ => zs
                .clone()
                .svd(true, true)
                .solve(b, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(m)),
        };
        let y = yt.component_mul(&s);
        let c = constraint_value(&y, d, f);
        ConstrainedSolution { y, nu: f64::NAN, constraint: c, bisections: 0, converged: false }
    };

    let trace_d = ds.sum();
    if !(trace_d > 0.0) {
        return fallback();
    }

    // Find ν₁ with ZᵀZ + ν₁D well inside the positive-definite cone.
    let pd = |nu: f64| {
        let (lo, hi) = min_max_eigen(&(&a + DMatrix::from_diagonal(&(&ds * nu))));
        lo > 1e-12 * hi.max(f64::MIN_POSITIVE)
    };
    let mut nu1 = 0.0;
    if !pd(nu1) {
        nu1 = 1e-6 * a.trace() / trace_d;
        let mut found = false;
        for _ in 0..40 {
            if pd(nu1) {
                found = true;
                break;
            }
            nu1 *= 10.0;
        }
        if !found {
            return fallback();
        }
    }

    // Lower end of the definite interval from the generalized eigenvalue of
    // (D, ZᵀZ + ν₁D): ZᵀZ + νD ≻ 0  ⇔  ν > ν₁ − 1/μ_max.
    let Some(chol) = (&a + DMatrix::from_diagonal(&(&ds * nu1))).cholesky() else {
        return fallback();
    };
    let Some(linv) = chol.l().try_inverse() else {
        return fallback();
    };
    let pencil = &linv * DMatrix::from_diagonal(&ds) * linv.transpose();
    let mu_max = min_max_eigen(&pencil).1;
    if !(mu_max > 0.0) {
        return fallback();
    }
    let width = 1.0 / mu_max;
    let nu_low = nu1 - width;

    let eval = |nu: f64| solve_at(nu).map(|y| (constraint_value(&y, d, f), y));

    let mut hi = nu_low + 2.0 * width;
    let mut at_hi = eval(hi);
    let mut expansions = 0;
    while let Some((phi, _)) = &at_hi {
        if *phi <= 0.0 || expansions >= max_expansions {
            break;
        }
        hi = nu_low + 2.0 * (hi - nu_low);
        at_hi = eval(hi);
        expansions += 1;
    }
    let Some((phi_hi, y_hi)) = at_hi else {
        return fallback();
    };
    if phi_hi > constraint_tol(&y_hi) {
        return fallback();
    }

    let mut lo = nu1;
    let mut at_lo = eval(lo);
    for _ in 0..60 {
        match &at_lo {
            Some((phi, _)) if *phi >= 0.0 => break,
            _ => {
                lo = nu_low + 0.5 * (lo - nu_low);
                at_lo = eval(lo);
            }
        }
    }
    let Some((phi_lo, y_lo)) = at_lo else {
        return fallback();
    };
    if phi_lo < -constraint_tol(&y_lo) {
        // No root inside the definite interval: the minimizer sits at ν_low
        // and is completed along the null direction of ZᵀZ + ν_low D.
        return match hard_case(&a, &g, &ds, &fs, nu_low) {
            Some(yt) => {
                let y = yt.component_mul(&s);
                let c = constraint_value(&y, d, f);
                let converged = c.abs() <= constraint_tol(&y);
                ConstrainedSolution { y, nu: nu_low, constraint: c, bisections: 0, converged }
            }
            None => fallback(),
        };
    }

    // The tolerance only decides convergence; bisection continues until the
    // bracket collapses so the returned point is as close to the root as the
    // arithmetic allows.
    let mut best = if phi_lo.abs() < phi_hi.abs() { (phi_lo, y_lo, lo) } else { (phi_hi, y_hi, hi) };
    let mut bisections = 0;
    while bisections < max_bisections && best.0 != 0.0 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        bisections += 1;
        let Some((phi, y)) = eval(mid) else {
            lo = mid;
            continue;
        };
        let go_up = phi > 0.0;
        if phi.abs() <= best.0.abs() {
            best = (phi, y, mid);
        }
        if go_up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (phi, y, nu) = best;
    let converged = phi.abs() <= constraint_tol(&y);
    if !converged {
        // A near-singular ZᵀZ puts a roundoff pole next to ν_low that the
        // bisection mistakes for a sign change.
        if let Some(yt) = hard_case(&a, &g, &ds, &fs, nu_low) {
            let yh = yt.component_mul(&s);
            let c = constraint_value(&yh, d, f);
            if c.abs() <= constraint_tol(&yh) {
                return ConstrainedSolution { y: yh, nu: nu_low, constraint: c, bisections, converged: true };
            }
        }
    }
    ConstrainedSolution { y, nu, constraint: phi, bisections, converged }
}

fn hard_case(a: &DMatrix<f64>, g: &DVector<f64>, ds: &DVector<f64>, fs: &DVector<f64>, nu: f64) -> Option<DVector<f64>> {
    let m = a + DMatrix::from_diagonal(&(ds * nu));
    let rhs = g - fs * nu;
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let k = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(k).into_owned();
    // particular solution on the complement of v
    let mut yp = DVector::zeros(a.nrows());
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if j == k || lam.abs() <= 1e-13 * scale {
            continue;
        }
        let u = eig.eigenvectors.column(j);
        yp += u * (u.dot(&rhs) / lam);
    }
    let qa = v.dot(&ds.component_mul(&v));
    let qb = 2.0 * (yp.dot(&ds.component_mul(&v)) + fs.dot(&v));
    let qc = constraint_value(&yp, ds, fs);
    let roots: Vec<f64> = if qa.abs() <= f64::EPSILON * (qb.abs() + qc.abs()).max(1.0) {
        if qb == 0.0 {
            return None;
        }
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // stable quadratic roots
        let q = -0.5 * (qb + qb.signum() * sq);
        if q == 0.0 {
            vec![0.0]
        } else {
            vec![q / qa, qc / q]
        }
    };
    let objective = |y: &DVector<f64>| y.dot(&(a * y)) - 2.0 * g.dot(y);
    roots
        .into_iter()
        .map(|t| &yp + &v * t)
        .filter(|y| y.iter().all(|x| x.is_finite()))
        .min_by(|x, y| objective(x).total_cmp(&objective(y)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsSolution {
    pub y: DVector<f64>,
    pub position: Point,
    pub aux: ChannelAux,
    pub quality: Quality,
    pub nu: f64,
    pub constraint: f64,
}

/// Solves the problem and decodes position and channel quantities.
pub fn solve_gtrs(prob: &GtrsProblem) -> GtrsSolution {
    let sol = solve_quadratic_constrained(
        &prob.z,
        &prob.b,
        &prob.d,
        &prob.f,
        GtrsTuning::default().max_bisections,
        GtrsTuning::default().max_expansions,
    );
    decode(prob, sol)
}

fn solve_with(prob: &GtrsProblem, tuning: &GtrsTuning) -> GtrsSolution {
    let sol = solve_quadratic_constrained(&prob.z, &prob.b, &prob.d, &prob.f, tuning.max_bisections, tuning.max_expansions);
    decode(prob, sol)
}

fn decode(prob: &GtrsProblem, sol: ConstrainedSolution) -> GtrsSolution {
    let y = &sol.y;
    let d0 = prob.channel.d0;
    let position = Point::new(y[1], y[2]) * d0;
    let mut aux = ChannelAux::default();
    match prob.variant {
        GtrsVariant::UnknownP0 => {
            let alpha = y[3];
            aux.alpha = Some(alpha);
            aux.n = Some(prob.channel.n);
            aux.p0 = (alpha > 0.0).then(|| 5.0 * prob.channel.n * alpha.log10());
        }
        GtrsVariant::UnknownN => {
            let delta = y[3];
            aux.delta = Some(delta);
            aux.n = Some(prob.n0 * (1.0 + delta));
            aux.p0 = Some(prob.channel.p0);
        }
        GtrsVariant::UnknownBoth => {
            let gamma = y[3];
            aux.gamma = Some(gamma);
            if gamma != 0.0 {
                let delta = y[4] / gamma;
                let n = prob.n0 * (1.0 + delta);
                aux.delta = Some(delta);
                aux.n = Some(n);
                aux.p0 = (gamma > 0.0).then(|| prob.p0_bar + 5.0 * n * gamma.log10());
            }
        }
    }
    // α and γ are powers of ten; a non-positive value has no channel reading.
    let physical = match prob.variant {
        GtrsVariant::UnknownP0 => aux.p0.is_some(),
        GtrsVariant::UnknownN => true,
        GtrsVariant::UnknownBoth => aux.p0.is_some(),
    };
    let quality = if sol.converged && physical && position.x.is_finite() && position.y.is_finite() {
        Quality::Good
    } else {
        Quality::LowQuality
    };
    GtrsSolution { y: sol.y, position, aux, quality, nu: sol.nu, constraint: sol.constraint }
}

/// Builds and solves, then re-linearizes at the recovered channel
/// parameters up to `tuning.refine_iterations` times. The linearization is
/// exact when the tuning point equals the true parameters, so on clean data
/// the passes converge to the exact solution.
///
/// A distant linearization point can stall the passes on a poor solution,
/// so with `multi_start` the unknown-exponent variants are also refined from
/// each seed in [`N0_STARTS`] (P0 seeded by the known-exponent solve). The
/// good solution whose decoded parameters best reproduce the RSS wins.
pub fn locate_nls(
    variant: GtrsVariant,
    nodes: &[Point],
    rss: &[f64],
    ch: &ChannelParams,
    tuning: &GtrsTuning,
) -> Result<GtrsSolution> {
    if variant == GtrsVariant::UnknownP0 {
        return Ok(solve_with(&build_gtrs(variant, nodes, rss, ch, tuning)?, tuning));
    }
    let mut best = refine(variant, nodes, rss, ch, tuning)?;
    if !tuning.multi_start {
        return Ok(best);
    }
    let mut best_fit = fit_residual(&best, nodes, rss, ch.d0);
    // a fit exact to round-off cannot be improved on
    let exact = 1e-20 * rss.iter().map(|p| p * p).sum::<f64>();
    for n0 in N0_STARTS {
        if best_fit <= exact {
            break;
        }
        let mut t = GtrsTuning { n0, ..*tuning };
        if variant == GtrsVariant::UnknownBoth {
            let seed_ch = ChannelParams { n: n0, n_known: true, ..*ch };
            let v1 = solve_with(&build_gtrs(GtrsVariant::UnknownP0, nodes, rss, &seed_ch, &t)?, &t);
            if let Some(p0) = v1.aux.p0.filter(|p| p.is_finite()) {
                t.p0_bar = p0.clamp(-120.0, 20.0);
            }
        }
        let sol = refine(variant, nodes, rss, ch, &t)?;
        let fit = fit_residual(&sol, nodes, rss, ch.d0);
        if fit < best_fit {
            best = sol;
            best_fit = fit;
        }
    }
    Ok(best)
}

fn refine(variant: GtrsVariant, nodes: &[Point], rss: &[f64], ch: &ChannelParams, tuning: &GtrsTuning) -> Result<GtrsSolution> {
    let mut t = *tuning;
    let mut best = solve_with(&build_gtrs(variant, nodes, rss, ch, &t)?, &t);
    for _ in 0..tuning.refine_iterations {
        if best.quality != Quality::Good {
            break;
        }
        let (Some(n_hat), p0_hat) = (best.aux.n, best.aux.p0) else { break };
        let next_n0 = n_hat.clamp(1.0, 10.0);
        let next_p0 = match variant {
            GtrsVariant::UnknownBoth => match p0_hat {
                Some(p) => p.clamp(-120.0, 20.0),
                None => break,
            },
            _ => t.p0_bar,
        };
        if (next_n0 - t.n0).abs() <= 1e-12 * t.n0 && (next_p0 - t.p0_bar).abs() <= 1e-10 {
            break;
        }
        t.n0 = next_n0;
        t.p0_bar = next_p0;
        let sol = solve_with(&build_gtrs(variant, nodes, rss, ch, &t)?, &t);
        if sol.quality != Quality::Good {
            break;
        }
        best = sol;
    }
    Ok(best)
}

/// Sum of squared RSS errors of the decoded position and channel; infinite
/// for solutions that are not good.
fn fit_residual(sol: &GtrsSolution, nodes: &[Point], rss: &[f64], d0: f64) -> f64 {
    let (Some(p0), Some(n)) = (sol.aux.p0, sol.aux.n) else { return f64::INFINITY };
    if sol.quality != Quality::Good || !(n > 0.0) {
        return f64::INFINITY;
    }
    let r: f64 = nodes
        .iter()
        .zip(rss)
        .map(|(a, p)| {
            let d = (a - sol.position).norm().max(1e-9 * d0);
            let e = p - (p0 - 10.0 * n * (d / d0).log10());
            e * e
        })
        .sum();
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}
