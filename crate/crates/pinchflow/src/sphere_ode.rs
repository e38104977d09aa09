//! The shrinking-sphere scale equation psi' = -Phi(1/(r psi)) / r.
//!
//! A round sphere of radius r contracting self-similarly has its scale
//! factor psi governed by this scalar ODE with psi(0) = 1 and extinction
//! as psi reaches zero. The solver is an explicit fourth-order integrator
//! with step-doubling error control; the singular tail is finished by
//! power-law extrapolation once either the scale drops below
//! [`PSI_EXTINCTION`] or the step size reaches the floating-point
//! resolution of the time axis (whichever comes first; high-degree
//! modifiers make the true extinction time unreachable in f64 time, see
//! [`PsiTrajectory::tail_truncated`]).

use crate::error::{Error, Result};
use crate::phi::PhiFunction;

/// Integration stops once psi drops below this.
pub const PSI_EXTINCTION: f64 = 1e-6;

/// If the step floor is hit first, the trajectory must have descended at
/// least this far for the power-law tail fit to be trustworthy; stalling
/// above it is a stiffness failure.
pub const TAIL_FIT_PSI: f64 = 1e-3;

/// Default relative tolerance of the step-doubling controller.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// One accepted sample of the scale trajectory.
#[derive(Debug, Clone, Copy)]
pub struct PsiSample {
    pub t: f64,
    pub psi: f64,
    pub dpsi: f64,
}

/// The numerical scale trajectory of one shrinking sphere.
#[derive(Debug, Clone)]
pub struct PsiTrajectory {
    pub samples: Vec<PsiSample>,
    pub extinction_time: f64,
    pub r: f64,
    /// Tail exponent fitted over the last decade of psi (1 for a linear
    /// modifier, top power degree in general).
    pub tail_exponent: f64,
    /// True when integration stopped at the time-resolution floor instead
    /// of crossing [`PSI_EXTINCTION`]; the remaining tail is covered by
    /// the extrapolation built into `extinction_time`.
    pub tail_truncated: bool,
}

impl PsiTrajectory {
    pub fn final_sample(&self) -> PsiSample {
        *self.samples.last().expect("trajectory has samples")
    }

    /// Scale at an intermediate time by cubic Hermite interpolation on the
    /// stored samples (the stored derivatives make this fourth-order).
    /// None outside the sampled range.
    pub fn psi_at(&self, t: f64) -> Option<f64> {
        let samples = &self.samples;
        if t < samples.first()?.t || t > samples.last()?.t {
            return None;
        }
        let idx = samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return Some(samples[0].psi);
        }
        if idx == samples.len() {
            return Some(samples[idx - 1].psi);
        }
        let (a, b) = (samples[idx - 1], samples[idx]);
        let dt = b.t - a.t;
        if dt == 0.0 {
            return Some(a.psi);
        }
        let s = (t - a.t) / dt;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(h00 * a.psi + h10 * dt * a.dpsi + h01 * b.psi + h11 * dt * b.dpsi)
    }
}

/// Right-hand side psi' = -Phi(1/(r psi)) / r.
pub fn psi_rhs(psi: f64, r: f64, phi: &PhiFunction) -> Result<f64> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {psi}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    Ok(-phi.value(1.0 / (r * psi)) / r)
}

/// One classical fourth-order step of size h; None if any stage leaves
/// the positive half-line.
fn rk4_step(psi: f64, h: f64, r: f64, phi: &PhiFunction) -> Option<f64> {
    let rhs = |p: f64| -> Option<f64> {
        if p > 0.0 && p.is_finite() {
            Some(-phi.value(1.0 / (r * p)) / r)
        } else {
            None
        }
    };
    let k1 = rhs(psi)?;
    let k2 = rhs(psi + 0.5 * h * k1)?;
    let k3 = rhs(psi + 0.5 * h * k2)?;
    let k4 = rhs(psi + h * k3)?;
    let next = psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if next.is_finite() {
        Some(next)
    } else {
        None
    }
}

/// Integrate the scale equation from psi(0) = 1 down to extinction.
///
/// Step doubling compares one h-step against two h/2-steps; the accepted
/// value is the locally extrapolated combination, and the step adapts by
/// the usual fifth-root rule clamped to [0.2, 5]. The extinction time is
/// t_end + psi_end / ((k+1) |psi'_end|) with k the tail exponent fitted
/// by least squares on ln |psi'| against ln psi over the last decade;
/// this is exact for a pure power tail.
pub fn solve_psi(r: f64, phi: &PhiFunction, rel_tol: f64) -> Result<PsiTrajectory> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    if !(rel_tol > 0.0 && rel_tol < 0.1) {
        return Err(Error::Domain(format!(
            "relative tolerance must lie in (0, 0.1), got {rel_tol}"
        )));
    }
    let mut t = 0.0;
    let mut psi = 1.0;
    let mut samples = vec![PsiSample {
        t,
        psi,
        dpsi: psi_rhs(psi, r, phi)?,
    }];
    let mut h = 0.01 * psi / psi_rhs(psi, r, phi)?.abs().max(1e-12);
    let mut tail_truncated = false;
    let mut attempts: u64 = 0;
    while psi >= PSI_EXTINCTION {
        attempts += 1;
        if attempts > 50_000_000 {
            return Err(Error::StiffFailure { psi });
        }
        // The time axis cannot resolve steps below a few ulps of the
        // elapsed time; inside an established tail the extrapolation
        // finishes the job, otherwise the problem is genuinely too stiff
        // for this integrator. Relative to t, not to any absolute scale:
        // a tiny sphere lives and dies in a tiny time span and is no
        // stiffer for it.
        let floor = 8.0 * f64::EPSILON * t;
        if h < floor {
            if psi <= TAIL_FIT_PSI {
                tail_truncated = true;
                break;
            }
            return Err(Error::StiffFailure { psi });
        }
        let coarse = rk4_step(psi, h, r, phi);
        let fine = rk4_step(psi, 0.5 * h, r, phi)
            .and_then(|mid| rk4_step(mid, 0.5 * h, r, phi));
        let (coarse, fine) = match (coarse, fine) {
            (Some(c), Some(f)) if f > 0.0 => (c, f),
            _ => {
                h *= 0.5;
                continue;
            }
        };
        let err = (fine - coarse).abs() / 15.0;
        let tol = rel_tol * fine.abs().max(1e-12);
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        if err <= tol {
            let accepted = fine + (fine - coarse) / 15.0;
            if accepted <= 0.0 {
                h *= 0.5;
                continue;
            }
            t += h;
            psi = accepted;
            samples.push(PsiSample {
                t,
                psi,
                dpsi: psi_rhs(psi, r, phi)?,
            });
        }
        h *= factor;
    }

    let end = *samples.last().expect("at least the initial sample");
    let tail_exponent = fit_tail_exponent(&samples);
    let extinction_time = end.t + end.psi / ((tail_exponent + 1.0) * end.dpsi.abs());
    Ok(PsiTrajectory {
        samples,
        extinction_time,
        r,
        tail_exponent,
        tail_truncated,
    })
}

/// Least-squares slope of ln |psi'| against ln psi over the last decade
/// of the trajectory. Falls back to the final two samples if the decade
/// holds fewer than three points.
fn fit_tail_exponent(samples: &[PsiSample]) -> f64 {
    let end = samples.last().expect("nonempty");
    let cut = 10.0 * end.psi;
    let tail: Vec<&PsiSample> = samples.iter().filter(|s| s.psi <= cut).collect();
    let slope_of = |points: &[&PsiSample]| -> Option<f64> {
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for s in points {
            let x = s.psi.ln();
            let y = s.dpsi.abs().ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-30 {
            return None;
        }
        Some((n * sxy - sx * sy) / denom)
    };
    let slope = if tail.len() >= 3 {
        slope_of(&tail)
    } else {
        let k = samples.len();
        slope_of(&samples[k.saturating_sub(2)..].iter().collect::<Vec<_>>())
    };
    // psi' ~ -c psi^{-k}: the fitted slope is -k. Extinction needs
    // k + 1 > 0; anything else means the tail was not a decaying power.
    slope.map(|s| -s).unwrap_or(1.0).max(0.0)
}

/// Residual of the self-similar support identity
/// <X, nu> + Phi(F / psi) / psi' at one point; zero exactly on
/// self-similar data.
pub fn self_similar_residual(
    support: f64,
    f_val: f64,
    psi: f64,
    dpsi: f64,
    phi: &PhiFunction,
) -> Result<f64> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive, got {psi}")));
    }
    if !(dpsi < 0.0) {
        return Err(Error::Domain(format!(
            "scale derivative must be negative, got {dpsi}"
        )));
    }
    Ok(support + phi.value(f_val / psi) / dpsi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> PhiFunction {
        PhiFunction::parse("power-sum:1,1;1,3").unwrap()
    }

    fn linear() -> PhiFunction {
        PhiFunction::parse("power:1").unwrap()
    }

    /// Implicit time law for the cubic modifier on the unit sphere.
    fn cubic_time(psi: f64) -> f64 {
        0.5 * (1.0 - psi * psi) + 0.5 * ((1.0 + psi * psi) / 2.0).ln()
    }

    #[test]
    fn rhs_known_values() {
        assert_eq!(psi_rhs(1.0, 1.0, &cubic()).unwrap(), -2.0);
        assert_eq!(psi_rhs(1.0, 1.0, &linear()).unwrap(), -1.0);
        assert_eq!(psi_rhs(0.5, 1.0, &cubic()).unwrap(), -10.0);
        assert!(matches!(
            psi_rhs(0.0, 1.0, &cubic()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            psi_rhs(-1.0, 1.0, &cubic()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cubic_matches_implicit_solution() {
        let traj = solve_psi(1.0, &cubic(), DEFAULT_REL_TOL).unwrap();
        let mut worst = 0.0_f64;
        for s in &traj.samples {
            if s.psi >= 1e-3 {
                worst = worst.max((s.t - cubic_time(s.psi)).abs());
            }
        }
        assert!(worst <= 1e-6, "time residual {worst:e}");
        let expect = 0.5 * (1.0 - std::f64::consts::LN_2);
        assert!(
            (traj.extinction_time - expect).abs() <= 1e-4,
            "T = {} vs {expect}",
            traj.extinction_time
        );
        println!(
            "cubic trajectory: {} samples, residual {worst:.3e}, T error {:.3e}, tail k = {:.6}",
            traj.samples.len(),
            (traj.extinction_time - expect).abs(),
            traj.tail_exponent
        );
    }

    #[test]
    fn cubic_tail_is_truncated_by_time_resolution() {
        // psi^4 ~ 4 (T - t): reaching psi = 1e-6 would need T - t around
        // 2.5e-25, nine decades below one ulp of T. The solver must stop
        // inside the tail and extrapolate instead of stalling.
        let traj = solve_psi(1.0, &cubic(), DEFAULT_REL_TOL).unwrap();
        assert!(traj.tail_truncated);
        let end = traj.final_sample();
        assert!(end.psi <= TAIL_FIT_PSI, "stopped at psi = {}", end.psi);
        assert!(end.psi >= PSI_EXTINCTION, "tail claim inconsistent");
        assert!((traj.tail_exponent - 3.0).abs() < 0.05, "k = {}", traj.tail_exponent);
    }

    #[test]
    fn linear_matches_square_root_law() {
        let traj = solve_psi(1.0, &linear(), DEFAULT_REL_TOL).unwrap();
        assert!(!traj.tail_truncated);
        assert!(traj.final_sample().psi < PSI_EXTINCTION);
        // Compare through the time law t = (1 - psi^2)/2: near extinction
        // the scale has infinite slope, so a fixed-time comparison of psi
        // would amplify the (in-tolerance) clock drift unboundedly.
        let mut worst = 0.0_f64;
        for s in &traj.samples {
            worst = worst.max((s.t - 0.5 * (1.0 - s.psi * s.psi)).abs());
        }
        assert!(worst <= 1e-6, "time residual {worst:e}");
        assert!(
            (traj.extinction_time - 0.5).abs() <= 1e-6,
            "T = {}",
            traj.extinction_time
        );
        assert!((traj.tail_exponent - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trajectory_is_strictly_decreasing_with_decelerating_scale() {
        for phi in [cubic(), PhiFunction::parse("shifted-entropy:1").unwrap()] {
            let traj = solve_psi(1.0, &phi, DEFAULT_REL_TOL).unwrap();
            for pair in traj.samples.windows(2) {
                assert!(pair[1].psi < pair[0].psi, "psi not strictly decreasing");
                // Convex modifier: the inward speed only grows.
                assert!(
                    pair[1].dpsi <= pair[0].dpsi * (1.0 - 1e-12),
                    "speed not accelerating: {} then {}",
                    pair[0].dpsi,
                    pair[1].dpsi
                );
            }
        }
    }

    #[test]
    fn extinction_time_monotone_in_radius() {
        let phi = cubic();
        let times: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&r| solve_psi(r, &phi, DEFAULT_REL_TOL).unwrap().extinction_time)
            .collect();
        assert!(times[0] < times[1] && times[1] < times[2], "{times:?}");
    }

    #[test]
    fn interpolation_matches_closed_form_between_samples() {
        let traj = solve_psi(1.0, &linear(), DEFAULT_REL_TOL).unwrap();
        for frac in [0.1, 0.37, 0.62, 0.9] {
            let t = frac * 0.5;
            let interp = traj.psi_at(t).unwrap();
            let exact = (1.0 - 2.0 * t).sqrt();
            // The first accepted steps are wide (the controller grows h fast
            // while the solution is smooth), so the Hermite truncation error
            // dominates: h^4 / 384 * sup |psi''''| is a few 1e-7 here.
            assert!(
                (interp - exact).abs() < 1e-6,
                "psi({t}) = {interp} vs {exact}"
            );
        }
        assert!(traj.psi_at(-0.1).is_none());
        assert!(traj.psi_at(1.0).is_none());
        assert_eq!(traj.psi_at(0.0), Some(1.0));
    }

    #[test]
    fn residual_vanishes_on_spheres() {
        let phi = cubic();
        // Unit sphere with its own rhs.
        let dpsi = psi_rhs(1.0, 1.0, &phi).unwrap();
        let r = self_similar_residual(1.0, 1.0, 1.0, dpsi, &phi).unwrap();
        assert!(r.abs() < 1e-15);
        // Radius-two sphere: support 2, speed 1/2.
        let dpsi = psi_rhs(1.0, 2.0, &phi).unwrap();
        let r = self_similar_residual(2.0, 0.5, 1.0, dpsi, &phi).unwrap();
        assert!(r.abs() < 1e-15);
        // Deliberately wrong scale derivative.
        let r = self_similar_residual(1.0, 1.0, 1.0, -1.0, &phi).unwrap();
        assert_eq!(r, -1.0);
        assert!(matches!(
            self_similar_residual(1.0, 1.0, 1.0, 0.0, &phi),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tolerance_tightens_the_solution() {
        let loose = solve_psi(1.0, &cubic(), 1e-5).unwrap();
        let tight = solve_psi(1.0, &cubic(), 1e-10).unwrap();
        let expect = 0.5 * (1.0 - std::f64::consts::LN_2);
        let err_loose = (loose.extinction_time - expect).abs();
        let err_tight = (tight.extinction_time - expect).abs();
        assert!(
            err_tight <= err_loose.max(1e-9),
            "loose {err_loose:e}, tight {err_tight:e}"
        );
        assert!(loose.samples.len() < tight.samples.len());
    }
}
