//! Symmetric speed functions of principal curvatures.
//!
//! A speed function f maps a principal-curvature vector to a scalar speed.
//! Every built-in is symmetric under coordinate permutations, positively
//! homogeneous of degree one, strictly monotone (positive gradient) on the
//! positive cone, and normalized so that f(1, ..., 1) = 1. Homogeneity has
//! two consequences the rest of the crate leans on:
//!
//! * Euler identity: sum_i kappa_i df/dkappa_i = f;
//! * the Hessian annihilates the radial direction: (D^2 f) kappa = 0.
//!
//! Both are enforced by tests for every built-in.

use crate::error::{Error, Result};
use crate::smallmat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative tolerance for the scalar condition checks (symmetry,
/// homogeneity, normalization). The closed forms are exact up to roundoff,
/// so anything beyond a few ulps indicates a real defect.
pub const CONDITION_REL_TOL: f64 = 1e-12;

/// Eigenvalue threshold (scaled by |kappa|) separating a genuine sign from
/// numerical zero when classifying convexity.
pub const CLASSIFY_EIG_TOL: f64 = 1e-8;

/// A vector of principal curvatures, dimension >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureVector {
    kappa: Vec<f64>,
}

impl CurvatureVector {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.len() < 2 {
            return Err(Error::Domain(format!(
                "curvature vector needs dimension >= 2, got {}",
                kappa.len()
            )));
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::Domain("non-finite curvature entry".into()));
        }
        Ok(CurvatureVector { kappa })
    }

    pub fn dim(&self) -> usize {
        self.kappa.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }

    /// Strictly positive principal curvatures.
    pub fn in_positive_cone(&self) -> bool {
        self.kappa.iter().all(|&k| k > 0.0)
    }

    /// kappa_i >= eps * kappa_j for all pairs, with a relative slack of
    /// 1e-12 so boundary samples are not rejected for roundoff.
    pub fn in_pinching_cone(&self, eps: f64) -> bool {
        if !self.in_positive_cone() {
            return false;
        }
        let max = self.kappa.iter().fold(f64::MIN, |a, &b| a.max(b));
        let min = self.kappa.iter().fold(f64::MAX, |a, &b| a.min(b));
        min >= eps * max * (1.0 - 1e-12)
    }

    pub fn norm(&self) -> f64 {
        self.kappa.iter().map(|k| k * k).sum::<f64>().sqrt()
    }
}

/// Value, gradient, and Hessian of a speed function at one point.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major n x n symmetric matrix.
    pub hessian: Vec<f64>,
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn hessian_at(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.dim() + j]
    }

    /// |sum_i kappa_i grad_i - value|, the Euler identity residual.
    pub fn euler_residual(&self, kappa: &[f64]) -> f64 {
        let dot: f64 = kappa.iter().zip(&self.gradient).map(|(k, g)| k * g).sum();
        (dot - self.value).abs()
    }

    /// |Hessian * kappa| (homogeneity makes this zero in exact arithmetic).
    pub fn radial_hessian_residual(&self, kappa: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.hessian[i * n + j] * kappa[j]).sum();
            acc += row * row;
        }
        acc.sqrt()
    }

    pub fn hessian_frobenius(&self) -> f64 {
        self.hessian.iter().map(|h| h * h).sum::<f64>().sqrt()
    }
}

/// Anything that can serve as a speed function. Built-ins override the
/// derivative methods with closed forms; the defaults fall back to central
/// finite differences with step h = 1e-6 * |kappa|.
pub trait Speed {
    fn dim(&self) -> usize;

    fn value(&self, kappa: &[f64]) -> f64;

    /// Membership in the cone the speed is defined on (the open positive
    /// cone for every built-in).
    fn in_cone(&self, kappa: &[f64]) -> bool {
        kappa.iter().all(|&k| k > 0.0)
    }

    fn gradient(&self, kappa: &[f64], out: &mut [f64]) {
        let h = fd_step(kappa);
        let mut probe = kappa.to_vec();
        for i in 0..kappa.len() {
            probe[i] = kappa[i] + h;
            let fp = self.value(&probe);
            probe[i] = kappa[i] - h;
            let fm = self.value(&probe);
            probe[i] = kappa[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
    }

    fn hessian(&self, kappa: &[f64], out: &mut [f64]) {
        let n = kappa.len();
        let h = fd_step(kappa);
        let f0 = self.value(kappa);
        let mut probe = kappa.to_vec();
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    probe[i] = kappa[i] + h;
                    let fp = self.value(&probe);
                    probe[i] = kappa[i] - h;
                    let fm = self.value(&probe);
                    probe[i] = kappa[i];
                    (fp - 2.0 * f0 + fm) / (h * h)
                } else {
                    probe[i] = kappa[i] + h;
                    probe[j] = kappa[j] + h;
                    let fpp = self.value(&probe);
                    probe[j] = kappa[j] - h;
                    let fpm = self.value(&probe);
                    probe[i] = kappa[i] - h;
                    let fmm = self.value(&probe);
                    probe[j] = kappa[j] + h;
                    let fmp = self.value(&probe);
                    probe[i] = kappa[i];
                    probe[j] = kappa[j];
                    (fpp - fpm - fmp + fmm) / (4.0 * h * h)
                };
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
    }
}

fn fd_step(kappa: &[f64]) -> f64 {
    let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
    1e-6 * norm.max(1e-6)
}

/// The built-in speed families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedKind {
    /// Arithmetic mean of the curvatures.
    NormalizedMean,
    /// k-th root of the normalized k-th elementary symmetric polynomial.
    PowerMeanRoot(u32),
    /// Euclidean norm of the curvature vector, scaled to 1 at (1, ..., 1).
    NormOfA,
    /// Geometric mean of the curvatures (n-th root of their product).
    GaussRoot,
}

/// A built-in speed function bound to a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeedFunction {
    kind: SpeedKind,
    n: usize,
}

impl SpeedFunction {
    pub fn new(kind: SpeedKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
        }
        if let SpeedKind::PowerMeanRoot(k) = kind {
            if k == 0 || k as usize > n {
                return Err(Error::Domain(format!(
                    "sigma-k order must satisfy 1 <= k <= n, got k={k}, n={n}"
                )));
            }
        }
        Ok(SpeedFunction { kind, n })
    }

    /// Parse an id: "mean", "sigma-k:<k>", "norm-A", "gauss-root".
    pub fn parse(id: &str, n: usize) -> Result<Self> {
        let kind = match id {
            "mean" => SpeedKind::NormalizedMean,
            "norm-A" => SpeedKind::NormOfA,
            "gauss-root" => SpeedKind::GaussRoot,
            _ => match id.strip_prefix("sigma-k:") {
                Some(rest) => {
                    let k: u32 = rest.parse().map_err(|_| Error::ConfigInvalid {
                        key: "f".into(),
                        reason: format!("bad sigma-k order in {id:?}"),
                    })?;
                    SpeedKind::PowerMeanRoot(k)
                }
                None => {
                    return Err(Error::ConfigInvalid {
                        key: "f".into(),
                        reason: format!("unknown speed id {id:?}"),
                    })
                }
            },
        };
        SpeedFunction::new(kind, n).map_err(|e| Error::ConfigInvalid {
            key: "f".into(),
            reason: e.to_string(),
        })
    }

    pub fn id(&self) -> String {
        match self.kind {
            SpeedKind::NormalizedMean => "mean".into(),
            SpeedKind::PowerMeanRoot(k) => format!("sigma-k:{k}"),
            SpeedKind::NormOfA => "norm-A".into(),
            SpeedKind::GaussRoot => "gauss-root".into(),
        }
    }

    pub fn kind(&self) -> SpeedKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Evaluate at a curvature vector, enforcing cone membership.
    pub fn eval(&self, kappa: &CurvatureVector) -> Result<f64> {
        self.check_args(kappa)?;
        Ok(self.value(kappa.as_slice()))
    }

    /// Value, gradient, and Hessian, enforcing cone membership.
    pub fn derivatives(&self, kappa: &CurvatureVector) -> Result<DerivativeBundle> {
        self.check_args(kappa)?;
        Ok(self.bundle(kappa.as_slice()))
    }

    /// Unchecked bundle for hot loops that sample inside the cone.
    pub(crate) fn bundle(&self, kappa: &[f64]) -> DerivativeBundle {
        let n = self.n;
        let mut gradient = vec![0.0; n];
        let mut hessian = vec![0.0; n * n];
        self.gradient(kappa, &mut gradient);
        self.hessian(kappa, &mut hessian);
        DerivativeBundle {
            value: self.value(kappa),
            gradient,
            hessian,
        }
    }

    fn check_args(&self, kappa: &CurvatureVector) -> Result<()> {
        if kappa.dim() != self.n {
            return Err(Error::Domain(format!(
                "dimension mismatch: speed has n={}, vector has n={}",
                self.n,
                kappa.dim()
            )));
        }
        if !self.in_cone(kappa.as_slice()) {
            return Err(Error::ConeViolation(format!(
                "{:?} not in the positive cone",
                kappa.as_slice()
            )));
        }
        Ok(())
    }
}

/// Elementary symmetric polynomials e_0..e_n of the entries.
fn elementary_symmetric(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &k) in kappa.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += k * e[j - 1];
        }
    }
    e
}

/// Elementary symmetric polynomials of the entries with index `skip`
/// removed, computed by deflating the full set (degrees 0..n-1).
fn deflate(e: &[f64], kappa_skip: f64) -> Vec<f64> {
    let n = e.len() - 1;
    let mut d = vec![0.0; n];
    d[0] = 1.0;
    for j in 1..n {
        d[j] = e[j] - kappa_skip * d[j - 1];
    }
    d
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

impl Speed for SpeedFunction {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, kappa: &[f64]) -> f64 {
        let n = self.n;
        match self.kind {
            SpeedKind::NormalizedMean => kappa.iter().sum::<f64>() / n as f64,
            SpeedKind::NormOfA => {
                kappa.iter().map(|k| k * k).sum::<f64>().sqrt() / (n as f64).sqrt()
            }
            SpeedKind::GaussRoot => {
                kappa.iter().product::<f64>().powf(1.0 / n as f64)
            }
            SpeedKind::PowerMeanRoot(k) => {
                let k = k as usize;
                let e = elementary_symmetric(kappa);
                (e[k] / binomial(n, k)).powf(1.0 / k as f64)
            }
        }
    }

    fn gradient(&self, kappa: &[f64], out: &mut [f64]) {
        let n = self.n;
        match self.kind {
            SpeedKind::NormalizedMean => out.fill(1.0 / n as f64),
            SpeedKind::NormOfA => {
                let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
                let scale = (n as f64).sqrt() * norm;
                for (o, &k) in out.iter_mut().zip(kappa) {
                    *o = k / scale;
                }
            }
            SpeedKind::GaussRoot => {
                let f = self.value(kappa);
                for (o, &k) in out.iter_mut().zip(kappa) {
                    *o = f / (n as f64 * k);
                }
            }
            SpeedKind::PowerMeanRoot(k) => {
                let k = k as usize;
                let e = elementary_symmetric(kappa);
                let f = (e[k] / binomial(n, k)).powf(1.0 / k as f64);
                let a = 1.0 / k as f64;
                for (i, o) in out.iter_mut().enumerate() {
                    let d = deflate(&e, kappa[i]);
                    *o = a * f * d[k - 1] / e[k];
                }
            }
        }
    }

    fn hessian(&self, kappa: &[f64], out: &mut [f64]) {
        let n = self.n;
        match self.kind {
            SpeedKind::NormalizedMean => out.fill(0.0),
            SpeedKind::NormOfA => {
                let norm2: f64 = kappa.iter().map(|k| k * k).sum();
                let norm = norm2.sqrt();
                let scale = (n as f64).sqrt() * norm;
                for i in 0..n {
                    for j in i..n {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        let v = (delta - kappa[i] * kappa[j] / norm2) / scale;
                        out[i * n + j] = v;
                        out[j * n + i] = v;
                    }
                }
            }
            SpeedKind::GaussRoot => {
                let f = self.value(kappa);
                let nf = n as f64;
                for i in 0..n {
                    for j in i..n {
                        let v = if i == j {
                            f * (1.0 / nf - 1.0) / (nf * kappa[i] * kappa[i])
                        } else {
                            f / (nf * nf * kappa[i] * kappa[j])
                        };
                        out[i * n + j] = v;
                        out[j * n + i] = v;
                    }
                }
            }
            SpeedKind::PowerMeanRoot(k) => {
                let ku = k as usize;
                let e = elementary_symmetric(kappa);
                let f = (e[ku] / binomial(n, ku)).powf(1.0 / ku as f64);
                let a = 1.0 / ku as f64;
                let ek = e[ku];
                // First partials of e_k and, per pair, the doubly-deflated
                // e_{k-2} giving the second partial of e_k.
                let firsts: Vec<Vec<f64>> =
                    (0..n).map(|i| deflate(&e, kappa[i])).collect();
                for i in 0..n {
                    for j in i..n {
                        let di = firsts[i][ku - 1];
                        let dj = firsts[j][ku - 1];
                        let second = if i == j {
                            0.0
                        } else if ku >= 2 {
                            deflate(&firsts[i], kappa[j])[ku - 2]
                        } else {
                            0.0
                        };
                        let v = a * f * ((a - 1.0) * di * dj / (ek * ek) + second / ek);
                        out[i * n + j] = v;
                        out[j * n + i] = v;
                    }
                }
            }
        }
    }
}

/// Seeded sampler over the pinching cone: log-uniform radius in [0.1, 10]
/// times a direction drawn uniformly from the simplex slice of the cone
/// (rejection from the uniform simplex).
pub struct ConeSampler {
    n: usize,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl ConeSampler {
    pub fn new(n: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("sampler dimension must be >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Domain(format!(
                "pinching parameter must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(ConeSampler {
            n,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Sampler over the open positive cone (epsilon = 0).
    pub fn positive(n: usize, seed: u64) -> Result<Self> {
        ConeSampler::new(n, 0.0, seed)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn draw(&mut self) -> Vec<f64> {
        let mut kappa = vec![0.0; self.n];
        self.fill(&mut kappa);
        kappa
    }

    /// Draw into a caller-provided slice (no allocation).
    pub fn fill(&mut self, kappa: &mut [f64]) {
        debug_assert_eq!(kappa.len(), self.n);
        loop {
            // Normalized exponentials are uniform on the simplex.
            let mut sum = 0.0;
            for k in kappa.iter_mut() {
                let u: f64 = self.rng.random();
                let e = -(1.0 - u).ln();
                *k = e;
                sum += e;
            }
            if sum == 0.0 {
                continue;
            }
            let mut lo = f64::MAX;
            let mut hi = f64::MIN;
            for k in kappa.iter_mut() {
                *k /= sum;
                lo = lo.min(*k);
                hi = hi.max(*k);
            }
            if lo > 0.0 && lo >= self.epsilon * hi {
                break;
            }
        }
        let r = self.draw_radius();
        for k in kappa.iter_mut() {
            *k *= r;
        }
    }

    /// Log-uniform draw from [0.1, 10]; serves as the sample radius and as
    /// the scale factor in homogeneity probes.
    fn draw_radius(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        (0.1_f64.ln() + u * (10.0_f64.ln() - 0.1_f64.ln())).exp()
    }

    fn draw_scale(&mut self) -> f64 {
        self.draw_radius()
    }

    fn draw_permutation(&mut self) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.n).collect();
        for i in (1..self.n).rev() {
            let j = self.rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }
}

/// Result of checking the required conditions on a speed function over
/// sampled curvature vectors: permutation symmetry, strict monotonicity
/// (positive gradient entries), degree-one homogeneity, positivity, and
/// the normalization f(1, ..., 1) = 1.
#[derive(Debug, Clone)]
pub struct SpeedCheckReport {
    pub samples: usize,
    pub symmetry_pass: bool,
    pub symmetry_worst: f64,
    pub symmetry_witness: Vec<f64>,
    pub monotonicity_pass: bool,
    pub gradient_min: f64,
    pub monotonicity_witness: Vec<f64>,
    pub homogeneity_pass: bool,
    pub homogeneity_worst: f64,
    pub homogeneity_witness: Vec<f64>,
    pub positivity_pass: bool,
    pub value_min: f64,
    pub positivity_witness: Vec<f64>,
    pub normalization_error: f64,
    pub normalization_pass: bool,
}

impl SpeedCheckReport {
    pub fn all_pass(&self) -> bool {
        self.symmetry_pass
            && self.monotonicity_pass
            && self.homogeneity_pass
            && self.positivity_pass
            && self.normalization_pass
    }
}

/// Check the speed-function conditions over `samples` draws (>= 10^4 for
/// certification; smaller counts are allowed for smoke tests).
pub fn check_speed_conditions(
    f: &dyn Speed,
    sampler: &mut ConeSampler,
    samples: usize,
) -> Result<SpeedCheckReport> {
    if sampler.dim() != f.dim() {
        return Err(Error::Domain(format!(
            "sampler dimension {} != speed dimension {}",
            sampler.dim(),
            f.dim()
        )));
    }
    let n = f.dim();
    let mut report = SpeedCheckReport {
        samples,
        symmetry_pass: true,
        symmetry_worst: 0.0,
        symmetry_witness: Vec::new(),
        monotonicity_pass: true,
        gradient_min: f64::MAX,
        monotonicity_witness: Vec::new(),
        homogeneity_pass: true,
        homogeneity_worst: 0.0,
        homogeneity_witness: Vec::new(),
        positivity_pass: true,
        value_min: f64::MAX,
        positivity_witness: Vec::new(),
        normalization_error: {
            let ones = vec![1.0; n];
            (f.value(&ones) - 1.0).abs()
        },
        normalization_pass: true,
    };
    report.normalization_pass = report.normalization_error <= CONDITION_REL_TOL;

    let mut kappa = vec![0.0; n];
    let mut permuted = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for _ in 0..samples {
        sampler.fill(&mut kappa);
        let value = f.value(&kappa);
        let scale = value.abs().max(1e-300);

        if value < report.value_min {
            report.value_min = value;
            report.positivity_witness = kappa.clone();
        }

        let perm = sampler.draw_permutation();
        for (slot, &src) in permuted.iter_mut().zip(&perm) {
            *slot = kappa[src];
        }
        let sym = (f.value(&permuted) - value).abs() / scale;
        if sym > report.symmetry_worst {
            report.symmetry_worst = sym;
            report.symmetry_witness = kappa.clone();
        }

        let k = sampler.draw_scale();
        for (slot, &src) in scaled.iter_mut().zip(kappa.iter()) {
            *slot = k * src;
        }
        let hom = (f.value(&scaled) - k * value).abs() / (k * scale);
        if hom > report.homogeneity_worst {
            report.homogeneity_worst = hom;
            report.homogeneity_witness = kappa.clone();
        }

        f.gradient(&kappa, &mut grad);
        let gmin = grad.iter().fold(f64::MAX, |a, &b| a.min(b));
        if gmin < report.gradient_min {
            report.gradient_min = gmin;
            report.monotonicity_witness = kappa.clone();
        }
    }

    report.symmetry_pass = report.symmetry_worst <= CONDITION_REL_TOL;
    report.homogeneity_pass = report.homogeneity_worst <= CONDITION_REL_TOL;
    report.monotonicity_pass = report.gradient_min > 0.0;
    report.positivity_pass = report.value_min > 0.0;
    Ok(report)
}

/// Convexity class of a speed function in the directions orthogonal to the
/// radial one (the radial direction is always flat by homogeneity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convexity {
    Convex,
    Concave,
    Neither,
}

#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub class: Convexity,
    /// min over samples of min_i |lambda_i| * |kappa| over the nonradial
    /// eigenvalues lambda_i of the Hessian (scale-invariant).
    pub margin: f64,
    pub samples: usize,
}

/// Classify convexity by projecting the Hessian onto the complement of the
/// radial direction and scanning the eigenvalue signs across samples.
pub fn classify_convexity(
    f: &SpeedFunction,
    sampler: &mut ConeSampler,
    samples: usize,
) -> Result<ConvexityReport> {
    if sampler.dim() != f.dim() {
        return Err(Error::Domain(format!(
            "sampler dimension {} != speed dimension {}",
            sampler.dim(),
            f.dim()
        )));
    }
    let n = f.dim();
    let mut kappa = vec![0.0; n];
    let mut lo = f64::MAX; // most negative scaled eigenvalue bound
    let mut hi = f64::MIN;
    let mut margin = f64::MAX;
    for _ in 0..samples {
        sampler.fill(&mut kappa);
        let bundle = f.bundle(&kappa);
        let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
        let unit: Vec<f64> = kappa.iter().map(|k| k / norm).collect();
        let basis = smallmat::complement_basis(&unit);
        let m = n - 1;
        // B = U H U^T restricted to the complement.
        let mut b = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += basis[r * n + i] * bundle.hessian[i * n + j] * basis[c * n + j];
                    }
                }
                b[r * m + c] = acc;
            }
        }
        let eigs = smallmat::sym_eigenvalues(&b, m);
        for &e in &eigs {
            let scaled = e * norm;
            lo = lo.min(scaled);
            hi = hi.max(scaled);
            margin = margin.min(scaled.abs());
        }
    }
    let class = if lo >= CLASSIFY_EIG_TOL {
        Convexity::Convex
    } else if hi <= -CLASSIFY_EIG_TOL {
        Convexity::Concave
    } else {
        Convexity::Neither
    };
    let margin = if class == Convexity::Neither { margin.min(lo.abs().max(hi.abs())) } else { margin };
    Ok(ConvexityReport {
        class,
        margin,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference gradient, independent of the closed forms.
    fn fd_gradient(f: &dyn Speed, kappa: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; kappa.len()];
        let mut probe = kappa.to_vec();
        for i in 0..kappa.len() {
            probe[i] = kappa[i] + h;
            let fp = f.value(&probe);
            probe[i] = kappa[i] - h;
            let fm = f.value(&probe);
            probe[i] = kappa[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    fn builtins(n: usize) -> Vec<SpeedFunction> {
        let mut v = vec![
            SpeedFunction::new(SpeedKind::NormalizedMean, n).unwrap(),
            SpeedFunction::new(SpeedKind::NormOfA, n).unwrap(),
            SpeedFunction::new(SpeedKind::GaussRoot, n).unwrap(),
        ];
        for k in 2..n as u32 {
            v.push(SpeedFunction::new(SpeedKind::PowerMeanRoot(k), n).unwrap());
        }
        v
    }

    #[test]
    fn eval_known_values() {
        let mean = SpeedFunction::parse("mean", 2).unwrap();
        let k = CurvatureVector::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(mean.eval(&k).unwrap(), 2.0);

        let gauss = SpeedFunction::parse("gauss-root", 2).unwrap();
        let k = CurvatureVector::new(vec![1.0, 4.0]).unwrap();
        assert!((gauss.eval(&k).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eval_rejects_cone_violation() {
        let mean = SpeedFunction::parse("mean", 2).unwrap();
        let k = CurvatureVector::new(vec![1.0, -1.0]).unwrap();
        match mean.eval(&k) {
            Err(Error::ConeViolation(_)) => {}
            other => panic!("expected cone violation, got {other:?}"),
        }
    }

    #[test]
    fn normalization_at_umbilic_point() {
        for n in [2usize, 3, 4] {
            for f in builtins(n) {
                let ones = CurvatureVector::new(vec![1.0; n]).unwrap();
                let v = f.eval(&ones).unwrap();
                assert!((v - 1.0).abs() < 1e-14, "{} n={n}: {v}", f.id());
            }
        }
    }

    #[test]
    fn id_round_trip() {
        for n in [2usize, 3] {
            for f in builtins(n) {
                let again = SpeedFunction::parse(&f.id(), n).unwrap();
                assert_eq!(f, again);
            }
        }
        assert!(SpeedFunction::parse("volume", 2).is_err());
        assert!(SpeedFunction::parse("sigma-k:5", 3).is_err());
    }

    #[test]
    fn mean_derivatives_closed_form() {
        let mean = SpeedFunction::parse("mean", 2).unwrap();
        let k = CurvatureVector::new(vec![1.3, 0.4]).unwrap();
        let b = mean.derivatives(&k).unwrap();
        assert_eq!(b.gradient, vec![0.5, 0.5]);
        assert!(b.hessian.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn gauss_root_hessian_at_umbilic() {
        let gauss = SpeedFunction::parse("gauss-root", 2).unwrap();
        let k = CurvatureVector::new(vec![1.0, 1.0]).unwrap();
        let b = gauss.derivatives(&k).unwrap();
        assert!((b.gradient[0] - 0.5).abs() < 1e-14);
        assert!((b.gradient[1] - 0.5).abs() < 1e-14);
        assert!((b.hessian_at(0, 0) + 0.25).abs() < 1e-14);
        assert!((b.hessian_at(0, 1) - 0.25).abs() < 1e-14);
        assert!((b.hessian_at(1, 1) + 0.25).abs() < 1e-14);
    }

    #[test]
    fn sigma2_gradient_matches_difference_oracle() {
        let f = SpeedFunction::parse("sigma-k:2", 3).unwrap();
        let kappa = [1.0, 2.0, 3.0];
        let bundle = f.bundle(&kappa);
        let oracle = fd_gradient(&f, &kappa, 1e-7);
        for i in 0..3 {
            assert!(
                (bundle.gradient[i] - oracle[i]).abs() < 1e-6,
                "entry {i}: {} vs {}",
                bundle.gradient[i],
                oracle[i]
            );
        }
    }

    #[test]
    fn norm_a_derivatives_closed_form() {
        let f = SpeedFunction::parse("norm-A", 2).unwrap();
        let kappa = CurvatureVector::new(vec![3.0, 4.0]).unwrap();
        let b = f.derivatives(&kappa).unwrap();
        let root2 = std::f64::consts::SQRT_2;
        assert!((b.value - 5.0 / root2).abs() < 1e-14);
        assert!((b.gradient[0] - 3.0 / (5.0 * root2)).abs() < 1e-14);
        assert!((b.gradient[1] - 4.0 / (5.0 * root2)).abs() < 1e-14);
        assert!(b.euler_residual(kappa.as_slice()) < 1e-14);
    }

    #[test]
    fn euler_identity_across_builtins() {
        for n in [2usize, 3] {
            let mut sampler = ConeSampler::new(n, 0.05, 11).unwrap();
            for f in builtins(n) {
                let mut worst = 0.0_f64;
                for _ in 0..1000 {
                    let kappa = sampler.draw();
                    let b = f.bundle(&kappa);
                    worst = worst.max(b.euler_residual(&kappa) / b.value.abs());
                }
                assert!(worst < 1e-8, "{} n={n}: euler residual {worst:e}", f.id());
            }
        }
    }

    #[test]
    fn hessian_kills_radial_direction() {
        for n in [2usize, 3] {
            let mut sampler = ConeSampler::new(n, 0.05, 13).unwrap();
            for f in builtins(n) {
                for _ in 0..1000 {
                    let kappa = sampler.draw();
                    let b = f.bundle(&kappa);
                    let frob = b.hessian_frobenius();
                    let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
                    let res = b.radial_hessian_residual(&kappa);
                    assert!(
                        res <= 1e-6 * frob * norm + 1e-15,
                        "{} n={n}: radial residual {res:e} vs frob {frob:e}",
                        f.id()
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_is_degree_zero_homogeneous() {
        for n in [2usize, 3] {
            let mut sampler = ConeSampler::new(n, 0.05, 17).unwrap();
            for f in builtins(n) {
                for _ in 0..200 {
                    let kappa = sampler.draw();
                    let scaled: Vec<f64> = kappa.iter().map(|k| 2.7 * k).collect();
                    let g1 = f.bundle(&kappa).gradient;
                    let g2 = f.bundle(&scaled).gradient;
                    for i in 0..n {
                        assert!(
                            (g1[i] - g2[i]).abs() <= 1e-8 * g1[i].abs().max(1e-12),
                            "{}: gradient not scale invariant",
                            f.id()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let mut sampler = ConeSampler::new(3, 0.1, 19).unwrap();
        for f in builtins(3) {
            let kappa = sampler.draw();
            let b = f.bundle(&kappa);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(b.hessian_at(i, j), b.hessian_at(j, i), "{}", f.id());
                }
            }
        }
    }

    #[test]
    fn conditions_pass_for_mean() {
        let f = SpeedFunction::parse("mean", 3).unwrap();
        let mut sampler = ConeSampler::new(3, 0.2, 0).unwrap();
        let report = check_speed_conditions(&f, &mut sampler, 2000).unwrap();
        assert!(report.all_pass(), "{report:?}");
        assert!(report.symmetry_worst <= 1e-12);
        assert!(report.homogeneity_worst <= 1e-12);
        assert!(report.normalization_error <= 1e-12);
    }

    #[test]
    fn conditions_pass_for_gauss_root_on_positive_samples() {
        let f = SpeedFunction::parse("gauss-root", 3).unwrap();
        let mut sampler = ConeSampler::new(3, 0.2, 1).unwrap();
        let report = check_speed_conditions(&f, &mut sampler, 2000).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    /// Deliberately broken speed: picks out the first curvature, so it is
    /// not symmetric. Exercises the finite-difference fallback path too.
    struct FirstComponent;

    impl Speed for FirstComponent {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, kappa: &[f64]) -> f64 {
            kappa[0]
        }
    }

    #[test]
    fn broken_speed_fails_symmetry_with_witness() {
        let mut sampler = ConeSampler::new(2, 0.2, 2).unwrap();
        let report = check_speed_conditions(&FirstComponent, &mut sampler, 500).unwrap();
        assert!(!report.symmetry_pass);
        assert!(report.symmetry_worst > 1e-3);
        assert_eq!(report.symmetry_witness.len(), 2);
        // Gradient (1, 0) via finite differences: monotonicity fails too.
        assert!(!report.monotonicity_pass);
        assert!(report.gradient_min.abs() < 1e-6);
        // Homogeneity and positivity are genuinely fine for kappa_1.
        assert!(report.homogeneity_pass);
        assert!(report.positivity_pass);
    }

    #[test]
    fn classify_mean_as_neither() {
        let f = SpeedFunction::parse("mean", 2).unwrap();
        let mut sampler = ConeSampler::new(2, 0.2, 3).unwrap();
        let report = classify_convexity(&f, &mut sampler, 500).unwrap();
        assert_eq!(report.class, Convexity::Neither);
        assert!(report.margin < 1e-12);
    }

    #[test]
    fn classify_norm_a_as_convex_with_known_margin() {
        let f = SpeedFunction::parse("norm-A", 2).unwrap();
        let mut sampler = ConeSampler::new(2, 0.2, 4).unwrap();
        let report = classify_convexity(&f, &mut sampler, 2000).unwrap();
        assert_eq!(report.class, Convexity::Convex);
        // Nonradial eigenvalue is exactly 1/(sqrt(n) |kappa|), so the
        // scale-invariant margin is 1/sqrt(2).
        assert!((report.margin - 1.0 / std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn classify_gauss_root_as_concave() {
        for n in [2usize, 3] {
            let f = SpeedFunction::parse("gauss-root", n).unwrap();
            let mut sampler = ConeSampler::new(n, 0.2, 5).unwrap();
            let report = classify_convexity(&f, &mut sampler, 2000).unwrap();
            assert_eq!(report.class, Convexity::Concave, "n={n}");
            assert!(report.margin > 1e-3);
        }
    }

    #[test]
    fn sampler_respects_cone_and_radius() {
        let mut sampler = ConeSampler::new(3, 0.5, 6).unwrap();
        for _ in 0..2000 {
            let kappa = sampler.draw();
            let sum: f64 = kappa.iter().sum();
            assert!(sum >= 0.1 * (1.0 - 1e-9) && sum <= 10.0 * (1.0 + 1e-9), "radius {sum}");
            let max = kappa.iter().fold(f64::MIN, |a, &b| a.max(b));
            let min = kappa.iter().fold(f64::MAX, |a, &b| a.min(b));
            assert!(min >= 0.5 * max * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let mut a = ConeSampler::new(2, 0.2, 42).unwrap();
        let mut b = ConeSampler::new(2, 0.2, 42).unwrap();
        for _ in 0..50 {
            assert_eq!(a.draw(), b.draw());
        }
        let mut c = ConeSampler::new(2, 0.2, 43).unwrap();
        assert_ne!(a.draw(), c.draw());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn homogeneity_holds_for_random_points(
                k1 in 0.05f64..20.0,
                k2 in 0.05f64..20.0,
                k3 in 0.05f64..20.0,
                scale in 0.1f64..10.0,
            ) {
                for f in super::builtins(3) {
                    let kappa = [k1, k2, k3];
                    let scaled = [scale * k1, scale * k2, scale * k3];
                    let lhs = f.value(&scaled);
                    let rhs = scale * f.value(&kappa);
                    prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
                }
            }

            #[test]
            fn permutation_invariance(
                k1 in 0.05f64..20.0,
                k2 in 0.05f64..20.0,
                k3 in 0.05f64..20.0,
            ) {
                for f in super::builtins(3) {
                    let a = f.value(&[k1, k2, k3]);
                    let b = f.value(&[k3, k1, k2]);
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
                }
            }
        }
    }
}
