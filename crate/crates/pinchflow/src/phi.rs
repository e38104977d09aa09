//! Scalar speed modifiers Phi and their admissibility conditions.
//!
//! A modifier is a convex increasing reparameterization of the speed,
//! Phi: [0, inf) -> R with Phi(0) = 0. Four families are built in, each
//! with closed-form first and second derivatives. The condition checker
//! certifies, on a log-spaced grid:
//!
//! * (a) Phi(0) = 0;
//! * (b) Phi' > 0 (parabolicity);
//! * (c) Phi'' >= 0 (convexity);
//! * (d) z |Phi''| <= c Phi' for a finite constant c, reported as the
//!   supremum of the ratio over the grid.

use crate::error::{Error, Result};

/// Relative tolerance for the finite-difference consistency property.
pub const FD_CONSISTENCY_REL_TOL: f64 = 1e-6;

/// z^k, dispatching small integer exponents to `powi`. The flow stepper
/// evaluates the modifier at every grid point of every time step, and
/// `powf` alone would dominate that budget.
#[inline]
fn pow(z: f64, k: f64) -> f64 {
    if k == k.trunc() && k.abs() <= 16.0 {
        z.powi(k as i32)
    } else {
        z.powf(k)
    }
}

/// The built-in modifier families.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiKind {
    /// sum_i c_i z^{k_i} with c_i > 0 and k_i >= 1.
    PowerSum { coeffs: Vec<f64>, exponents: Vec<f64> },
    /// ln(1 + z) + z^p.
    LogPlusPower { p: f64 },
    /// (z + z0)[ln(z + z0) - 1] + z0 (1 - ln z0), z0 >= 1.
    ShiftedEntropy { z0: f64 },
    /// z^alpha with alpha >= 1.
    PurePower { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    kind: PhiKind,
}

impl PhiFunction {
    pub fn new(kind: PhiKind) -> Result<Self> {
        match &kind {
            PhiKind::PowerSum { coeffs, exponents } => {
                if coeffs.is_empty() || coeffs.len() != exponents.len() {
                    return Err(Error::Domain(format!(
                        "power sum needs matching nonempty coefficient/exponent lists, got {}/{}",
                        coeffs.len(),
                        exponents.len()
                    )));
                }
                for &c in coeffs {
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(Error::Domain(format!(
                            "power sum coefficients must be positive, got {c}"
                        )));
                    }
                }
                for &k in exponents {
                    if !(k >= 1.0 && k.is_finite()) {
                        return Err(Error::Domain(format!(
                            "power sum exponents must be >= 1, got {k}"
                        )));
                    }
                }
            }
            PhiKind::LogPlusPower { p } => {
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(Error::Domain(format!(
                        "log-power exponent must be positive, got {p}"
                    )));
                }
            }
            PhiKind::ShiftedEntropy { z0 } => {
                if !(*z0 >= 1.0 && z0.is_finite()) {
                    return Err(Error::Domain(format!(
                        "entropy shift must be >= 1, got {z0}"
                    )));
                }
            }
            PhiKind::PurePower { alpha } => {
                if !(*alpha >= 1.0 && alpha.is_finite()) {
                    return Err(Error::Domain(format!(
                        "power exponent must be >= 1, got {alpha}"
                    )));
                }
            }
        }
        Ok(PhiFunction { kind })
    }

    /// Parse an id: "power-sum:c1,k1;c2,k2", "log-power:<p>",
    /// "shifted-entropy:<z0>", "power:<alpha>".
    pub fn parse(id: &str) -> Result<Self> {
        let bad = |reason: String| Error::ConfigInvalid {
            key: "phi".into(),
            reason,
        };
        let (name, args) = id
            .split_once(':')
            .ok_or_else(|| bad(format!("modifier id {id:?} has no parameters")))?;
        let kind = match name {
            "power-sum" => {
                let mut coeffs = Vec::new();
                let mut exponents = Vec::new();
                for term in args.split(';') {
                    let (c, k) = term
                        .split_once(',')
                        .ok_or_else(|| bad(format!("bad power-sum term {term:?}")))?;
                    coeffs.push(
                        c.trim()
                            .parse()
                            .map_err(|_| bad(format!("bad coefficient {c:?}")))?,
                    );
                    exponents.push(
                        k.trim()
                            .parse()
                            .map_err(|_| bad(format!("bad exponent {k:?}")))?,
                    );
                }
                PhiKind::PowerSum { coeffs, exponents }
            }
            "log-power" => PhiKind::LogPlusPower {
                p: args
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad log-power exponent {args:?}")))?,
            },
            "shifted-entropy" => PhiKind::ShiftedEntropy {
                z0: args
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad entropy shift {args:?}")))?,
            },
            "power" => PhiKind::PurePower {
                alpha: args
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad power exponent {args:?}")))?,
            },
            _ => return Err(bad(format!("unknown modifier id {id:?}"))),
        };
        PhiFunction::new(kind).map_err(|e| bad(e.to_string()))
    }

    pub fn id(&self) -> String {
        match &self.kind {
            PhiKind::PowerSum { coeffs, exponents } => {
                let terms: Vec<String> = coeffs
                    .iter()
                    .zip(exponents)
                    .map(|(c, k)| format!("{c},{k}"))
                    .collect();
                format!("power-sum:{}", terms.join(";"))
            }
            PhiKind::LogPlusPower { p } => format!("log-power:{p}"),
            PhiKind::ShiftedEntropy { z0 } => format!("shifted-entropy:{z0}"),
            PhiKind::PurePower { alpha } => format!("power:{alpha}"),
        }
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    /// Phi(z). Callers must keep z >= 0; [`eval`](Self::eval) checks.
    pub fn value(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::PowerSum { coeffs, exponents } => coeffs
                .iter()
                .zip(exponents)
                .map(|(c, k)| c * pow(z, *k))
                .sum(),
            PhiKind::LogPlusPower { p } => (1.0 + z).ln() + pow(z, *p),
            PhiKind::ShiftedEntropy { z0 } => {
                (z + z0) * ((z + z0).ln() - 1.0) + z0 * (1.0 - z0.ln())
            }
            PhiKind::PurePower { alpha } => pow(z, *alpha),
        }
    }

    /// Phi'(z).
    pub fn deriv(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::PowerSum { coeffs, exponents } => coeffs
                .iter()
                .zip(exponents)
                .map(|(c, k)| c * k * pow(z, k - 1.0))
                .sum(),
            PhiKind::LogPlusPower { p } => 1.0 / (1.0 + z) + p * pow(z, p - 1.0),
            PhiKind::ShiftedEntropy { z0 } => (z + z0).ln(),
            PhiKind::PurePower { alpha } => alpha * pow(z, alpha - 1.0),
        }
    }

    /// Phi''(z). Exponent-one power terms contribute exactly zero (their
    /// coefficient k(k-1) vanishes; evaluating the power first would turn
    /// 0 * inf into a NaN at z = 0).
    pub fn second(&self, z: f64) -> f64 {
        match &self.kind {
            PhiKind::PowerSum { coeffs, exponents } => coeffs
                .iter()
                .zip(exponents)
                .map(|(c, k)| {
                    if *k == 1.0 {
                        0.0
                    } else {
                        c * k * (k - 1.0) * pow(z, k - 2.0)
                    }
                })
                .sum(),
            PhiKind::LogPlusPower { p } => {
                let u = 1.0 + z;
                let power = if *p == 1.0 { 0.0 } else { p * (p - 1.0) * pow(z, p - 2.0) };
                -1.0 / (u * u) + power
            }
            PhiKind::ShiftedEntropy { z0 } => 1.0 / (z + z0),
            PhiKind::PurePower { alpha } => {
                if *alpha == 1.0 {
                    0.0
                } else {
                    alpha * (alpha - 1.0) * pow(z, alpha - 2.0)
                }
            }
        }
    }

    /// Checked (Phi, Phi', Phi'') triple; z must be finite and >= 0.
    pub fn eval(&self, z: f64) -> Result<(f64, f64, f64)> {
        if !(z >= 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("modifier argument must be >= 0, got {z}")));
        }
        Ok((self.value(z), self.deriv(z), self.second(z)))
    }
}

/// Outcome of checking the four conditions on a log-spaced grid of
/// `grid` points spanning [zmin, zmax].
#[derive(Debug, Clone)]
pub struct PhiConditionReport {
    pub zmin: f64,
    pub zmax: f64,
    pub grid: usize,
    /// Phi(0); condition (a) requires it to vanish.
    pub origin_value: f64,
    pub pass_origin: bool,
    pub deriv_min: f64,
    pub deriv_argmin: f64,
    pub pass_increasing: bool,
    pub second_min: f64,
    pub second_argmin: f64,
    pub pass_convex: bool,
    /// sup over the grid of z |Phi''(z)| / Phi'(z).
    pub c_estimate: f64,
    pub c_argmax: f64,
    pub pass_bounded_ratio: bool,
}

impl PhiConditionReport {
    pub fn all_pass(&self) -> bool {
        self.pass_origin && self.pass_increasing && self.pass_convex && self.pass_bounded_ratio
    }
}

/// Log-spaced grid over [zmin, zmax], endpoints included.
pub(crate) fn log_grid(zmin: f64, zmax: f64, grid: usize) -> Vec<f64> {
    let (lo, hi) = (zmin.ln(), zmax.ln());
    (0..grid)
        .map(|i| (lo + (hi - lo) * i as f64 / (grid - 1) as f64).exp())
        .collect()
}

/// Evaluate conditions (a)-(d) on a log-spaced grid.
pub fn check_phi_conditions(
    phi: &PhiFunction,
    zmin: f64,
    zmax: f64,
    grid: usize,
) -> Result<PhiConditionReport> {
    if !(zmin > 0.0 && zmin < zmax && zmax.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 < zmin < zmax, got [{zmin}, {zmax}]"
        )));
    }
    if grid < 1000 {
        return Err(Error::Domain(format!("grid needs >= 1000 points, got {grid}")));
    }
    let origin_value = phi.value(0.0);
    let mut report = PhiConditionReport {
        zmin,
        zmax,
        grid,
        origin_value,
        pass_origin: origin_value.abs() <= 1e-12,
        deriv_min: f64::MAX,
        deriv_argmin: zmin,
        pass_increasing: true,
        second_min: f64::MAX,
        second_argmin: zmin,
        pass_convex: true,
        c_estimate: 0.0,
        c_argmax: zmin,
        pass_bounded_ratio: true,
    };
    for z in log_grid(zmin, zmax, grid) {
        let d1 = phi.deriv(z);
        let d2 = phi.second(z);
        if d1 < report.deriv_min {
            report.deriv_min = d1;
            report.deriv_argmin = z;
        }
        if d2 < report.second_min {
            report.second_min = d2;
            report.second_argmin = z;
        }
        let ratio = z * d2.abs() / d1;
        if !ratio.is_finite() || ratio > report.c_estimate {
            report.c_estimate = ratio;
            report.c_argmax = z;
        }
    }
    report.pass_increasing = report.deriv_min > 0.0;
    report.pass_convex = report.second_min >= 0.0;
    report.pass_bounded_ratio = report.c_estimate.is_finite();
    Ok(report)
}

/// z Phi'(z) - Phi(z): the first-order Taylor gap at the origin. For a
/// convex admissible modifier this is nonnegative.
pub fn taylor_gap(phi: &PhiFunction, z: f64) -> Result<f64> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("modifier argument must be >= 0, got {z}")));
    }
    Ok(z * phi.deriv(z) - phi.value(z))
}

/// Smallest exponent p for which ln(1 + z) + z^p stays convex on the grid,
/// found by bisection on the grid minimum of the second derivative.
pub fn critical_log_power_exponent(zmin: f64, zmax: f64, grid: usize) -> Result<f64> {
    if !(zmin > 0.0 && zmin < zmax && zmax.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 < zmin < zmax, got [{zmin}, {zmax}]"
        )));
    }
    let zs = log_grid(zmin, zmax, grid.max(1000));
    let min_second = |p: f64| -> f64 {
        let phi = PhiFunction {
            kind: PhiKind::LogPlusPower { p },
        };
        zs.iter().map(|&z| phi.second(z)).fold(f64::MAX, f64::min)
    };
    let mut lo = 1.0; // convexity fails: Phi'' = -1/(1+z)^2 < 0
    let mut hi = 2.0; // convexity holds with margin 1 at the origin
    debug_assert!(min_second(lo) < 0.0 && min_second(hi) > 0.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if min_second(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
