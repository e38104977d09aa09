//! Pinching-cone optimization constants and curvature inequality checks.
//!
//! The central objects are three extremal constants of a speed function
//! over the compact slice {kappa in the pinching cone, |kappa| = 1}:
//!
//! * M0 = sup (|kappa| / f) |grad f|^2,
//! * M1 = inf over components of grad f,
//! * M2 = sup |D^2 f(xi, xi)| over unit xi (the Hessian spectral radius),
//!
//! combined into Q(eps) = sqrt(n(n-1)/2) [(1-eps) M2 + c M0]
//! - ((n-1)/(2n^2)) eps^2 M1. A negative Q certifies that gradient terms
//! can be absorbed in the curvature-pinching argument; the weakest ratio
//! with Q <= 0 is found by bisection.
//!
//! The module also machine-checks the pointwise curvature inequalities
//! used alongside Q: pinched-curvature slacks, convexity sign checks, the
//! axisymmetric roundness-contraction identity, and the explicit pinching
//! bound induced by a modifier.

use crate::error::{Error, Result};
use crate::phi::PhiFunction;
use crate::smallmat;
use crate::symfunc::{Convexity, CurvatureVector, Speed, SpeedFunction};
use rand::Rng;

/// Inequality slacks may dip this far below zero, relative to their
/// natural scale, before counting as violations.
pub const SLACK_REL_TOL: f64 = 1e-12;

/// Bisection resolution for the weakest admissible pinching ratio.
pub const THRESHOLD_RESOLUTION: f64 = 1e-4;

/// Smallest pinching ratio probed; the slice constants degenerate as the
/// cone opens up, so the search stops here rather than at zero.
pub const EPSILON_FLOOR: f64 = 1e-4;

const GRID_N2: usize = 10_000;
const GRID_N3: usize = 200;
const REFINE_ROUNDS: usize = 3;

/// The slice extremal constants at one pinching ratio.
#[derive(Debug, Clone)]
pub struct PinchingConstants {
    pub epsilon: f64,
    /// The gradient-absorption constant from the modifier (condition-d).
    pub c: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub q: f64,
}

/// Q assembled from the constants; kept in one place so every caller and
/// test agrees on the formula.
pub fn q_from_constants(n: usize, epsilon: f64, c: f64, m0: f64, m1: f64, m2: f64) -> f64 {
    let nf = n as f64;
    ((nf * (nf - 1.0)) / 2.0).sqrt() * ((1.0 - epsilon) * m2 + c * m0)
        - (nf - 1.0) / (2.0 * nf * nf) * epsilon * epsilon * m1
}

/// Pointwise integrands on the unit slice.
fn slice_terms(f: &dyn Speed, kappa: &[f64]) -> Result<(f64, f64, f64)> {
    let n = kappa.len();
    let value = f.value(kappa);
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::ConeViolation(format!(
            "speed not positive and finite at {kappa:?}: {value}"
        )));
    }
    let mut grad = vec![0.0; n];
    f.gradient(kappa, &mut grad);
    let mut hess = vec![0.0; n * n];
    f.hessian(kappa, &mut hess);
    let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
    let grad2: f64 = grad.iter().map(|g| g * g).sum();
    let m0 = norm / value * grad2;
    let m1 = grad.iter().fold(f64::MAX, |a, &b| a.min(b));
    let m2 = smallmat::spectral_radius(&hess, n);
    if !(m0.is_finite() && m1.is_finite() && m2.is_finite()) {
        return Err(Error::ConeViolation(format!(
            "speed derivatives not finite at {kappa:?}"
        )));
    }
    Ok((m0, m1, m2))
}

/// Unit-slice point for n = 2, parameterized by the ratio
/// x = kappa_min / kappa_max in [eps, 1].
fn slice_point_2(x: f64) -> [f64; 2] {
    let norm = (1.0 + x * x).sqrt();
    [x / norm, 1.0 / norm]
}

/// Unit-slice point for n = 3 in the sorted sector, parameterized by
/// ratios x = kappa_1/kappa_3 <= y = kappa_2/kappa_3 in [eps, 1].
fn slice_point_3(x: f64, y: f64) -> [f64; 3] {
    let y = y.clamp(x, 1.0);
    let norm = (1.0 + x * x + y * y).sqrt();
    [x / norm, y / norm, 1.0 / norm]
}

/// One-dimensional refinement: walk 21-point windows around the incumbent,
/// shrinking the spacing tenfold per round. Boundary extrema stay pinned
/// exactly because every probe is clamped to the domain.
fn refine_1d(
    mut eval: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    mut x: f64,
    d0: f64,
    maximize: bool,
) -> Result<(f64, f64)> {
    let mut best = eval(x)?;
    let mut d = d0;
    for _ in 0..REFINE_ROUNDS {
        d *= 0.1;
        for j in -10..=10i32 {
            let probe = (x + j as f64 * d).clamp(lo, hi);
            let v = eval(probe)?;
            if (maximize && v > best) || (!maximize && v < best) {
                best = v;
                x = probe;
            }
        }
    }
    Ok((x, best))
}

struct SliceScan {
    m0: f64,
    m1: f64,
    m2: f64,
    arg_m0: (f64, f64),
    arg_m1: (f64, f64),
    arg_m2: (f64, f64),
}

fn scan_slice(f: &dyn Speed, epsilon: f64) -> Result<SliceScan> {
    let n = f.dim();
    let mut scan = SliceScan {
        m0: f64::MIN,
        m1: f64::MAX,
        m2: f64::MIN,
        arg_m0: (epsilon, epsilon),
        arg_m1: (epsilon, epsilon),
        arg_m2: (epsilon, epsilon),
    };
    let mut take = |terms: (f64, f64, f64), at: (f64, f64)| {
        if terms.0 > scan.m0 {
            scan.m0 = terms.0;
            scan.arg_m0 = at;
        }
        if terms.1 < scan.m1 {
            scan.m1 = terms.1;
            scan.arg_m1 = at;
        }
        if terms.2 > scan.m2 {
            scan.m2 = terms.2;
            scan.arg_m2 = at;
        }
    };
    match n {
        2 => {
            let d = (1.0 - epsilon) / (GRID_N2 - 1) as f64;
            for i in 0..GRID_N2 {
                let x = (epsilon + i as f64 * d).min(1.0);
                take(slice_terms(f, &slice_point_2(x))?, (x, x));
            }
        }
        3 => {
            let d = (1.0 - epsilon) / (GRID_N3 - 1) as f64;
            for i in 0..GRID_N3 {
                let x = (epsilon + i as f64 * d).min(1.0);
                let dy = (1.0 - x) / (GRID_N3 - 1) as f64;
                for j in 0..GRID_N3 {
                    let y = (x + j as f64 * dy).min(1.0);
                    take(slice_terms(f, &slice_point_3(x, y))?, (x, y));
                }
            }
        }
        other => {
            return Err(Error::Domain(format!(
                "slice optimization covers dimensions 2 and 3, got {other}"
            )))
        }
    }
    Ok(scan)
}

/// Compute the slice constants at one pinching ratio by a dense
/// deterministic grid over the sorted sector of the unit slice, followed
/// by local refinement around each incumbent (coordinate descent for
/// n = 3). The result is bit-reproducible.
pub fn cone_constants(f: &dyn Speed, epsilon: f64, c: f64) -> Result<PinchingConstants> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!(
            "pinching ratio must lie in (0, 1], got {epsilon}"
        )));
    }
    let n = f.dim();
    let scan = scan_slice(f, epsilon)?;
    let (m0, m1, m2);
    match n {
        2 => {
            let d0 = (1.0 - epsilon) / (GRID_N2 - 1) as f64;
            m0 = refine_1d(
                |x| slice_terms(f, &slice_point_2(x)).map(|t| t.0),
                epsilon,
                1.0,
                scan.arg_m0.0,
                d0,
                true,
            )?
            .1;
            m1 = refine_1d(
                |x| slice_terms(f, &slice_point_2(x)).map(|t| t.1),
                epsilon,
                1.0,
                scan.arg_m1.0,
                d0,
                false,
            )?
            .1;
            m2 = refine_1d(
                |x| slice_terms(f, &slice_point_2(x)).map(|t| t.2),
                epsilon,
                1.0,
                scan.arg_m2.0,
                d0,
                true,
            )?
            .1;
        }
        _ => {
            let d0 = (1.0 - epsilon) / (GRID_N3 - 1) as f64;
            let descend = |start: (f64, f64), pick: fn((f64, f64, f64)) -> f64, maximize: bool| -> Result<f64> {
                let (mut x, mut y) = start;
                let mut best = pick(slice_terms(f, &slice_point_3(x, y))?);
                let mut d = d0;
                for _ in 0..REFINE_ROUNDS {
                    d *= 0.1;
                    for j in -10..=10i32 {
                        let probe = (x + j as f64 * d).clamp(epsilon, 1.0);
                        let v = pick(slice_terms(f, &slice_point_3(probe, y))?);
                        if (maximize && v > best) || (!maximize && v < best) {
                            best = v;
                            x = probe;
                        }
                    }
                    for j in -10..=10i32 {
                        let probe = (y + j as f64 * d).clamp(x, 1.0);
                        let v = pick(slice_terms(f, &slice_point_3(x, probe))?);
                        if (maximize && v > best) || (!maximize && v < best) {
                            best = v;
                            y = probe;
                        }
                    }
                }
                Ok(best)
            };
            m0 = descend(scan.arg_m0, |t| t.0, true)?;
            m1 = descend(scan.arg_m1, |t| t.1, false)?;
            m2 = descend(scan.arg_m2, |t| t.2, true)?;
        }
    }
    let q = q_from_constants(n, epsilon, c, m0, m1, m2);
    Ok(PinchingConstants {
        epsilon,
        c,
        m0,
        m1,
        m2,
        q,
    })
}

/// Constants tabulated over an evenly spaced grid of pinching ratios
/// (i / count for i = 1..=count).
pub fn threshold_table(f: &dyn Speed, c: f64, count: usize) -> Result<Vec<PinchingConstants>> {
    if count < 2 {
        return Err(Error::Domain(format!("ratio grid needs >= 2 points, got {count}")));
    }
    (1..=count)
        .map(|i| cone_constants(f, i as f64 / count as f64, c))
        .collect()
}

/// Weakest pinching ratio with Q <= 0, located by bisection. Q is
/// nonincreasing in the ratio, so {Q <= 0} is an interval ending at 1;
/// the returned value is certified nonpositive and accurate to
/// [`THRESHOLD_RESOLUTION`].
pub fn weakest_pinching(f: &dyn Speed, c: f64) -> Result<f64> {
    let q1 = cone_constants(f, 1.0, c)?.q;
    if q1 >= 0.0 {
        return Err(Error::NotAchievable { q1 });
    }
    let mut lo = EPSILON_FLOOR;
    if cone_constants(f, lo, c)?.q <= 0.0 {
        return Ok(lo);
    }
    let mut hi = 1.0;
    while hi - lo > THRESHOLD_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if cone_constants(f, mid, c)?.q <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A pointwise second-fundamental-form sample in the principal frame:
/// the diagonal curvature vector plus a totally symmetric 3-tensor of
/// covariant curvature derivatives.
#[derive(Debug, Clone)]
pub struct SecondFundamentalSample {
    kappa: CurvatureVector,
    /// Dense n^3 row-major tensor, symmetric in all index pairs.
    grad_a: Vec<f64>,
}

impl SecondFundamentalSample {
    pub fn new(kappa: CurvatureVector, grad_a: Vec<f64>) -> Result<Self> {
        let n = kappa.dim();
        if grad_a.len() != n * n * n {
            return Err(Error::Domain(format!(
                "derivative tensor needs {} entries, got {}",
                n * n * n,
                grad_a.len()
            )));
        }
        let at = |i: usize, j: usize, k: usize| grad_a[(i * n + j) * n + k];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = at(i, j, k);
                    if t != at(i, k, j) || t != at(j, i, k) {
                        return Err(Error::Domain(
                            "derivative tensor must be totally symmetric".into(),
                        ));
                    }
                }
            }
        }
        Ok(SecondFundamentalSample { kappa, grad_a })
    }

    /// Totally symmetric tensor with free entries uniform in [-1, 1].
    pub fn random(kappa: CurvatureVector, rng: &mut impl Rng) -> Self {
        let n = kappa.dim();
        let mut grad_a = vec![0.0; n * n * n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let u: f64 = rng.random_range(-1.0..=1.0);
                    let mut assign = |a: usize, b: usize, c: usize| {
                        grad_a[(a * n + b) * n + c] = u;
                    };
                    assign(i, j, k);
                    assign(i, k, j);
                    assign(j, i, k);
                    assign(j, k, i);
                    assign(k, i, j);
                    assign(k, j, i);
                }
            }
        }
        SecondFundamentalSample { kappa, grad_a }
    }

    pub fn kappa(&self) -> &CurvatureVector {
        &self.kappa
    }

    pub fn grad_entry(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.kappa.dim();
        self.grad_a[(i * n + j) * n + k]
    }

    pub fn mean_sum(&self) -> f64 {
        self.kappa.as_slice().iter().sum()
    }

    pub fn a_norm2(&self) -> f64 {
        self.kappa.as_slice().iter().map(|k| k * k).sum()
    }

    /// Squared norm of the trace-free part, |A|^2 - H^2/n.
    pub fn traceless_norm2(&self) -> f64 {
        let n = self.kappa.dim() as f64;
        let h = self.mean_sum();
        (self.a_norm2() - h * h / n).max(0.0)
    }

    pub fn cube_sum(&self) -> f64 {
        self.kappa.as_slice().iter().map(|k| k * k * k).sum()
    }

    pub fn grad_norm2(&self) -> f64 {
        self.grad_a.iter().map(|t| t * t).sum()
    }

    /// i-th component of the derivative of the curvature trace,
    /// contracting the last two tensor indices.
    pub fn grad_trace(&self, i: usize) -> f64 {
        let n = self.kappa.dim();
        (0..n).map(|j| self.grad_entry(i, j, j)).sum()
    }
}

/// Slacks of the three pinched-curvature inequalities, each paired with
/// its natural scale for relative tolerance tests.
#[derive(Debug, Clone)]
pub struct CurvatureSlacks {
    /// ((n-1)/2)(1-eps)^2 H^2 - |A0|^2, scale H^2.
    pub traceless_gap: f64,
    /// H sum(k^3) - (|A|^2)^2 - (eps^2/n) H^2 |A0|^2, scale H^4.
    pub cube_gap: f64,
    /// |H grad A - A grad H|^2 - ((n-1)/(2n^2)) eps^2 H^2 |grad A|^2,
    /// scale H^2 |grad A|^2.
    pub gradient_gap: f64,
    pub scales: [f64; 3],
}

impl CurvatureSlacks {
    pub fn values(&self) -> [f64; 3] {
        [self.traceless_gap, self.cube_gap, self.gradient_gap]
    }

    /// All slacks nonnegative up to relative roundoff.
    pub fn pass(&self) -> bool {
        self.values()
            .iter()
            .zip(&self.scales)
            .all(|(v, s)| *v >= -SLACK_REL_TOL * s)
    }
}

/// Evaluate the three pinched-curvature inequalities at a sample.
pub fn pinched_curvature_slacks(
    sample: &SecondFundamentalSample,
    epsilon: f64,
) -> Result<CurvatureSlacks> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!(
            "pinching ratio must lie in (0, 1], got {epsilon}"
        )));
    }
    if !sample.kappa.in_pinching_cone(epsilon) {
        return Err(Error::ConeViolation(format!(
            "{:?} violates the pinching hypothesis at ratio {epsilon}",
            sample.kappa.as_slice()
        )));
    }
    let n = sample.kappa.dim();
    let nf = n as f64;
    let h = sample.mean_sum();
    let a2 = sample.a_norm2();
    let a0 = sample.traceless_norm2();
    let c3 = sample.cube_sum();
    let grad2 = sample.grad_norm2();

    let traceless_gap = (nf - 1.0) / 2.0 * (1.0 - epsilon).powi(2) * h * h - a0;
    let cube_gap = h * c3 - a2 * a2 - epsilon * epsilon / nf * h * h * a0;

    let kappa = sample.kappa.as_slice();
    let mut commutator = 0.0;
    for i in 0..n {
        let gh = sample.grad_trace(i);
        for j in 0..n {
            for k in 0..n {
                let hjk = if j == k { kappa[j] } else { 0.0 };
                let w = h * sample.grad_entry(i, j, k) - hjk * gh;
                commutator += w * w;
            }
        }
    }
    let gradient_gap =
        commutator - (nf - 1.0) / (2.0 * nf * nf) * epsilon * epsilon * h * h * grad2;

    Ok(CurvatureSlacks {
        traceless_gap,
        cube_gap,
        gradient_gap,
        scales: [h * h, h * h * h * h, h * h * grad2],
    })
}

/// The two signed quantities whose signs are pinned down by convexity or
/// concavity of the speed.
#[derive(Debug, Clone)]
pub struct ConvexitySignChecks {
    /// |A|^2 F - H sum_i grad_i kappa_i^2: nonpositive for convex speeds,
    /// nonnegative for concave ones.
    pub quadratic: f64,
    /// F H - n sum_i grad_i kappa_i^2: nonpositive for convex speeds.
    pub trace: f64,
    /// Natural scale of both quantities for relative tolerances.
    pub scale: f64,
}

impl ConvexitySignChecks {
    pub fn satisfies(&self, class: Convexity) -> bool {
        let tol = SLACK_REL_TOL * self.scale;
        match class {
            Convexity::Convex => self.quadratic <= tol && self.trace <= tol,
            Convexity::Concave => self.quadratic >= -tol,
            Convexity::Neither => false,
        }
    }
}

/// Evaluate the convexity-locked sign checks at one curvature vector.
/// The caller supplies the classification (from
/// [`classify_convexity`](crate::symfunc::classify_convexity)); a speed
/// that is neither convex nor concave admits no sign conclusion.
pub fn convexity_sign_checks(
    f: &SpeedFunction,
    kappa: &CurvatureVector,
    class: Convexity,
) -> Result<ConvexitySignChecks> {
    if class == Convexity::Neither {
        return Err(Error::Unclassified(
            "sign checks need a convex or concave speed".into(),
        ));
    }
    let bundle = f.derivatives(kappa)?;
    let ks = kappa.as_slice();
    let h: f64 = ks.iter().sum();
    let a2: f64 = ks.iter().map(|k| k * k).sum();
    let weighted: f64 = bundle
        .gradient
        .iter()
        .zip(ks)
        .map(|(g, k)| g * k * k)
        .sum();
    let n = kappa.dim() as f64;
    let quadratic = a2 * bundle.value - h * weighted;
    let trace = bundle.value * h - n * weighted;
    let scale = a2 * bundle.value + h * weighted;
    Ok(ConvexitySignChecks {
        quadratic,
        trace,
        scale,
    })
}

/// Both sides of the axisymmetric contraction identity for the roundness
/// ratio G = n |A0|^2 / H^2, evaluated independently.
#[derive(Debug, Clone)]
pub struct RoundnessIdentity {
    /// Coefficient form: g1 kappa1^2 + (n-1) g2 kappa2^2.
    pub lhs: f64,
    /// Closed form: 2 n (n-1) kappa1 kappa2 (kappa1 - kappa2)^2 / H^3.
    pub rhs: f64,
    pub difference: f64,
    /// The roundness ratio G itself.
    pub g: f64,
}

/// Evaluate the contraction identity at an axisymmetric curvature point
/// (kappa1 once, kappa2 with multiplicity n - 1).
pub fn roundness_contraction_identity(
    n: usize,
    kappa1: f64,
    kappa2: f64,
) -> Result<RoundnessIdentity> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
    }
    if !(kappa1 > 0.0 && kappa2 > 0.0) {
        return Err(Error::Domain(format!(
            "curvatures must be positive, got ({kappa1}, {kappa2})"
        )));
    }
    let nf = n as f64;
    let h = kappa1 + (nf - 1.0) * kappa2;
    if h == 0.0 {
        return Err(Error::Domain("vanishing curvature trace".into()));
    }
    let h3 = h * h * h;
    let g1 = 2.0 * nf * (nf - 1.0) * kappa2 * (kappa1 - kappa2) / h3;
    let g2 = 2.0 * nf * kappa1 * (kappa2 - kappa1) / h3;
    let lhs = g1 * kappa1 * kappa1 + (nf - 1.0) * g2 * kappa2 * kappa2;
    let rhs = 2.0 * nf * (nf - 1.0) * kappa1 * kappa2 * (kappa1 - kappa2).powi(2) / h3;
    let a2 = kappa1 * kappa1 + (nf - 1.0) * kappa2 * kappa2;
    let a0 = (a2 - h * h / nf).max(0.0);
    Ok(RoundnessIdentity {
        lhs,
        rhs,
        difference: lhs - rhs,
        g: nf * a0 / (h * h),
    })
}

/// The explicit curvature-ratio bound induced by a modifier at scale psi.
#[derive(Debug, Clone)]
pub struct PinchingBoundReport {
    /// Argument z = F(kappa) / psi handed to the modifier.
    pub z: f64,
    pub ratio: f64,
    pub bound: f64,
    pub ok: bool,
}

/// ratio = kappa_max / kappa_min against the bound
/// 1 + 2 Phi'(z) / (Phi''(z) F(kappa)); a linear modifier imposes no
/// bound at all.
pub fn pinching_bound(
    kappa: &CurvatureVector,
    f: &SpeedFunction,
    phi: &PhiFunction,
    psi: f64,
) -> Result<PinchingBoundReport> {
    if !kappa.in_positive_cone() {
        return Err(Error::Domain(format!(
            "curvatures must be positive, got {:?}",
            kappa.as_slice()
        )));
    }
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {psi}")));
    }
    let value = f.eval(kappa)?;
    let z = value / psi;
    let (_, d1, d2) = phi.eval(z)?;
    let bound = if d2 > 0.0 {
        1.0 + 2.0 * d1 / (d2 * value)
    } else {
        f64::INFINITY
    };
    let ks = kappa.as_slice();
    let ratio = ks.iter().fold(f64::MIN, |a, &b| a.max(b))
        / ks.iter().fold(f64::MAX, |a, &b| a.min(b));
    Ok(PinchingBoundReport {
        z,
        ratio,
        bound,
        ok: ratio <= bound,
    })
}
