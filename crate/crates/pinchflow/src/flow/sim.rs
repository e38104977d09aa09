//! Explicit evolution of support profiles and the contraction diagnostics.
//!
//! The update is forward Euler on ds/dt = -Phi(F(kappa)) with a parabolic
//! step bound: linearizing the right-hand side in s'' gives a diffusion
//! coefficient Phi'(F) f_i / r^2 along the meridian, so the step keeps
//! dt <= 0.2 h^2 min(r)^2 / (Phi'(F_max) max|f'|). Phi' is evaluated at
//! the largest speed on the grid, which bounds the grid maximum whenever
//! the modifier is convex (the admissible case).
//!
//! Each monitored state carries diagnostics recomputed from the profile:
//! the worst curvature pinching ratio, the grid minimum of the ratio
//! bound 1 + 2 Phi'(F)/(Phi''(F) F), the speed range, a pointwise
//! self-similarity defect, and the scale fit psi = min-width ratio.

use crate::error::{Error, Result};
use crate::phi::PhiFunction;
use crate::sphere_ode::{solve_psi, DEFAULT_REL_TOL};
use crate::symfunc::{Speed, SpeedFunction};

use super::profile::{fourth_order_derivs, principal_radii, SupportProfile};

/// Safety factor in the parabolic step bound.
pub const CFL_SAFETY: f64 = 0.2;

/// A run stops when min s falls below this fraction of its initial value.
pub const DEFAULT_EXTINCTION_FRACTION: f64 = 1e-3;

/// Diagnostics records are kept each time the scale fit drops by this
/// ratio.
pub const RECORD_PSI_RATIO: f64 = 1.005;

/// (t, psi) samples for the self-similarity report are kept on this
/// relative drop of the scale fit.
pub const PSI_SAMPLE_REL_DROP: f64 = 1e-3;

/// Scale records closer in time than this (relative to the run length)
/// carry no trustworthy derivative and are skipped by the report.
pub const SS_SPACING_CUTOFF_REL: f64 = 1e-10;

const DEFAULT_MAX_STEPS: usize = 20_000_000;

/// Reused per-step buffers; one allocation per run, not per step.
struct Scratch {
    st: Vec<f64>,
    stt: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    fval: Vec<f64>,
    speed: Vec<f64>,
}

impl Scratch {
    fn new(m: usize) -> Self {
        Scratch {
            st: vec![0.0; m],
            stt: vec![0.0; m],
            r1: vec![0.0; m],
            r2: vec![0.0; m],
            fval: vec![0.0; m],
            speed: vec![0.0; m],
        }
    }
}

/// Scalar summary of one grid pass.
struct Sweep {
    min_r: f64,
    f_min: f64,
    f_max: f64,
    grad_max: f64,
    min_s: f64,
    max_s: f64,
    wmin: f64,
    wargmin: usize,
}

/// One pass over the grid: derivatives, radii (convexity check), speeds
/// F and Phi(F), the CFL ingredients, and the width minimum.
fn sweep(
    s: &[f64],
    h: f64,
    cot: &[f64],
    n: usize,
    f: &SpeedFunction,
    phi: &PhiFunction,
    scr: &mut Scratch,
) -> Result<Sweep> {
    let m = s.len();
    fourth_order_derivs(s, h, &mut scr.st, &mut scr.stt);
    principal_radii(s, &scr.st, &scr.stt, cot, &mut scr.r1, &mut scr.r2);
    let mut out = Sweep {
        min_r: f64::INFINITY,
        f_min: f64::INFINITY,
        f_max: f64::NEG_INFINITY,
        grad_max: 0.0,
        min_s: f64::INFINITY,
        max_s: f64::NEG_INFINITY,
        wmin: f64::INFINITY,
        wargmin: 0,
    };
    let mut grad = [0.0_f64; 3];
    for i in 0..m {
        let (ra, rb) = (scr.r1[i], scr.r2[i]);
        if !(ra > 0.0 && ra.is_finite()) {
            return Err(Error::ConvexityLost { index: i, radius: ra });
        }
        if !(rb > 0.0 && rb.is_finite()) {
            return Err(Error::ConvexityLost { index: i, radius: rb });
        }
        out.min_r = out.min_r.min(ra).min(rb);
        let kap3 = [1.0 / ra, 1.0 / rb, 1.0 / rb];
        let kap = &kap3[..n];
        let fv = f.value(kap);
        if !(fv > 0.0 && fv.is_finite()) {
            return Err(Error::Domain(format!(
                "speed must be positive on the profile, got {fv} at index {i}"
            )));
        }
        f.gradient(kap, &mut grad[..n]);
        for &g in &grad[..n] {
            out.grad_max = out.grad_max.max(g.abs());
        }
        out.f_min = out.f_min.min(fv);
        out.f_max = out.f_max.max(fv);
        scr.fval[i] = fv;
        scr.speed[i] = phi.value(fv);
        out.min_s = out.min_s.min(s[i]);
        out.max_s = out.max_s.max(s[i]);
        let w = s[i] + s[m - 1 - i];
        if w < out.wmin {
            out.wmin = w;
            out.wargmin = i;
        }
    }
    Ok(out)
}

fn cfl_bound_from(sw: &Sweep, h: f64, phi: &PhiFunction) -> Result<f64> {
    let denom = phi.deriv(sw.f_max) * sw.grad_max;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::Domain(format!(
            "degenerate stability bound: Phi'(F_max) * max |f'| = {denom}"
        )));
    }
    Ok(CFL_SAFETY * h * h * sw.min_r * sw.min_r / denom)
}

/// Monitored quantities, always recomputed from the profile they ride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Worst pointwise kappa_max / kappa_min over the grid.
    pub kappa_ratio_max: f64,
    /// Grid minimum of 1 + 2 Phi'(F)/(Phi''(F) F); infinite where the
    /// modifier is linear.
    pub bound_min: f64,
    /// (min, max) of the speed F over the grid.
    pub f_range: (f64, f64),
    /// Pointwise self-similarity defect |s (-psi'/psi) - Phi(F)|, max
    /// over the grid, relative to the largest normal speed. Exactly the
    /// quantity that vanishes when the profile contracts by pure scaling.
    pub ss_residual_norm: f64,
    /// Minimum-width ratio against the run's initial profile.
    pub psi_fit: f64,
}

fn diagnostics_from_sweep(
    s: &[f64],
    scr: &Scratch,
    sw: &Sweep,
    phi: &PhiFunction,
    width_ref: f64,
) -> Diagnostics {
    let m = s.len();
    let psi = sw.wmin / width_ref;
    let mut kappa_ratio_max = 1.0_f64;
    let mut bound_min = f64::INFINITY;
    let mut speed_max = 0.0_f64;
    for i in 0..m {
        let (ra, rb) = (scr.r1[i], scr.r2[i]);
        kappa_ratio_max = kappa_ratio_max.max(ra.max(rb) / ra.min(rb));
        let fv = scr.fval[i];
        let d2 = phi.second(fv);
        if d2 > 0.0 {
            bound_min = bound_min.min(1.0 + 2.0 * phi.deriv(fv) / (d2 * fv));
        }
        speed_max = speed_max.max(scr.speed[i]);
    }
    // Envelope derivative of the minimum width: only the pair of normal
    // speeds at the argmin direction moves it.
    let istar = sw.wargmin;
    let psi_prime = -(scr.speed[istar] + scr.speed[m - 1 - istar]) / width_ref;
    let mut res_max = 0.0_f64;
    for i in 0..m {
        let r = s[i] * (-psi_prime) / psi - scr.speed[i];
        res_max = res_max.max(r.abs());
    }
    let ss_residual_norm = if speed_max > 0.0 {
        res_max / speed_max
    } else {
        f64::INFINITY
    };
    Diagnostics {
        kappa_ratio_max,
        bound_min,
        f_range: (sw.f_min, sw.f_max),
        ss_residual_norm,
        psi_fit: psi,
    }
}

/// One monitored instant of a flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub profile: SupportProfile,
    /// Initial minimum width the scale fit is measured against.
    pub width_ref: f64,
    pub diagnostics: Diagnostics,
}

impl FlowState {
    /// State at t = 0; the scale fit reference is the profile's own
    /// minimum width.
    pub fn initial(profile: SupportProfile, f: &SpeedFunction, phi: &PhiFunction) -> Result<Self> {
        let w0 = profile.min_width();
        FlowState::with_reference(0.0, profile, f, phi, w0)
    }

    pub fn with_reference(
        t: f64,
        profile: SupportProfile,
        f: &SpeedFunction,
        phi: &PhiFunction,
        width_ref: f64,
    ) -> Result<Self> {
        if !(width_ref > 0.0 && width_ref.is_finite()) {
            return Err(Error::Domain(format!(
                "width reference must be positive, got {width_ref}"
            )));
        }
        if f.dim() != profile.dim() {
            return Err(Error::Domain(format!(
                "speed dimension {} != profile dimension {}",
                f.dim(),
                profile.dim()
            )));
        }
        let mut scr = Scratch::new(profile.len());
        let sw = sweep(
            profile.values(),
            profile.spacing(),
            profile.cot_slice(),
            profile.dim(),
            f,
            phi,
            &mut scr,
        )?;
        let diagnostics = diagnostics_from_sweep(profile.values(), &scr, &sw, phi, width_ref);
        Ok(FlowState {
            t,
            profile,
            width_ref,
            diagnostics,
        })
    }
}

/// Largest stable explicit step for this profile.
pub fn stability_bound(
    profile: &SupportProfile,
    f: &SpeedFunction,
    phi: &PhiFunction,
) -> Result<f64> {
    if f.dim() != profile.dim() {
        return Err(Error::Domain(format!(
            "speed dimension {} != profile dimension {}",
            f.dim(),
            profile.dim()
        )));
    }
    let mut scr = Scratch::new(profile.len());
    let sw = sweep(
        profile.values(),
        profile.spacing(),
        profile.cot_slice(),
        profile.dim(),
        f,
        phi,
        &mut scr,
    )?;
    cfl_bound_from(&sw, profile.spacing(), phi)
}

/// Advance one explicit step of size dt (must respect the stability
/// bound); diagnostics of the new state are recomputed from scratch.
pub fn step(
    state: &FlowState,
    f: &SpeedFunction,
    phi: &PhiFunction,
    dt: f64,
) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let profile = &state.profile;
    let mut scr = Scratch::new(profile.len());
    let sw = sweep(
        profile.values(),
        profile.spacing(),
        profile.cot_slice(),
        profile.dim(),
        f,
        phi,
        &mut scr,
    )?;
    let bound = cfl_bound_from(&sw, profile.spacing(), phi)?;
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let s_new: Vec<f64> = profile
        .values()
        .iter()
        .zip(&scr.speed)
        .map(|(v, sp)| v - dt * sp)
        .collect();
    let next = SupportProfile::new(s_new, profile.dim())?;
    FlowState::with_reference(state.t + dt, next, f, phi, state.width_ref)
}

/// Knobs for [`run`].
#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Fraction of the stability bound actually taken each step, in (0, 1].
    pub dt_safety: f64,
    /// Stop once min s falls below this fraction of its initial value.
    pub extinction_fraction: f64,
    pub max_steps: usize,
    /// Tolerance for the bracketing sphere scale solves.
    pub ode_rel_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_safety: 1.0,
            extinction_fraction: DEFAULT_EXTINCTION_FRACTION,
            max_steps: DEFAULT_MAX_STEPS,
            ode_rel_tol: DEFAULT_REL_TOL,
        }
    }
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::Domain(format!(
                "step safety factor must lie in (0, 1], got {}",
                self.dt_safety
            )));
        }
        if !(self.extinction_fraction > 0.0 && self.extinction_fraction <= 0.5) {
            return Err(Error::Domain(format!(
                "extinction fraction must lie in (0, 0.5], got {}",
                self.extinction_fraction
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Domain("step budget must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics row kept on the record schedule.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub diagnostics: Diagnostics,
}

/// Dense (t, psi) sample for scale-derivative estimation.
#[derive(Debug, Clone, Copy)]
pub struct PsiRecord {
    pub t: f64,
    pub psi: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    /// Time at which the extinction threshold was reached.
    pub t_end: f64,
    /// Extinction times of the inscribed and circumscribed spheres of the
    /// initial profile; the flow's extinction lies between them.
    pub extinction_bracket: (f64, f64),
    /// t_end plus the midpoint of the final profile's sphere bracket.
    pub extinction_estimate: f64,
    pub final_min_s: f64,
    pub final_psi_fit: f64,
    pub final_kappa_ratio_max: f64,
}

/// Everything a completed run leaves behind.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub initial: SupportProfile,
    pub records: Vec<StepRecord>,
    pub psi_records: Vec<PsiRecord>,
    /// Final profile divided by the final scale fit.
    pub final_rescaled: SupportProfile,
    pub summary: RunSummary,
}

/// Integrate until min s falls below the extinction threshold. Convexity
/// loss along the way is reported as the error it is.
pub fn run(
    initial: &SupportProfile,
    f: &SpeedFunction,
    phi: &PhiFunction,
    config: &FlowConfig,
) -> Result<FlowRun> {
    config.validate()?;
    if f.dim() != initial.dim() {
        return Err(Error::Domain(format!(
            "speed dimension {} != profile dimension {}",
            f.dim(),
            initial.dim()
        )));
    }
    let m = initial.len();
    let h = initial.spacing();
    let n = initial.dim();
    let cot = initial.cot_slice().to_vec();
    let w0 = initial.min_width();
    let threshold = config.extinction_fraction * initial.min_s();
    let bracket = (
        solve_psi(initial.min_s(), phi, config.ode_rel_tol)?.extinction_time,
        solve_psi(initial.max_s(), phi, config.ode_rel_tol)?.extinction_time,
    );
    let mut s = initial.values().to_vec();
    let mut scr = Scratch::new(m);
    let mut t = 0.0_f64;
    let mut steps = 0_usize;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut psi_records: Vec<PsiRecord> = Vec::new();
    let mut last_record_psi = f64::INFINITY;
    let mut last_psi_sample = f64::INFINITY;
    let final_sweep = loop {
        let sw = sweep(&s, h, &cot, n, f, phi, &mut scr)?;
        let psi = sw.wmin / w0;
        if psi * RECORD_PSI_RATIO <= last_record_psi {
            records.push(StepRecord {
                t,
                min_s: sw.min_s,
                max_s: sw.max_s,
                diagnostics: diagnostics_from_sweep(&s, &scr, &sw, phi, w0),
            });
            last_record_psi = psi;
        }
        if psi <= last_psi_sample * (1.0 - PSI_SAMPLE_REL_DROP) {
            psi_records.push(PsiRecord { t, psi });
            last_psi_sample = psi;
        }
        if sw.min_s < threshold {
            break sw;
        }
        if steps >= config.max_steps {
            return Err(Error::Domain(format!(
                "step budget {} exhausted at t = {t} (min s = {})",
                config.max_steps, sw.min_s
            )));
        }
        let dt = config.dt_safety * cfl_bound_from(&sw, h, phi)?;
        for (v, sp) in s.iter_mut().zip(&scr.speed) {
            *v -= dt * sp;
            if !(*v > 0.0) {
                return Err(Error::Domain(format!(
                    "support collapsed through zero at t = {t} (step {dt})"
                )));
            }
        }
        t += dt;
        steps += 1;
    };
    let final_psi = final_sweep.wmin / w0;
    if records.last().map(|r| r.t) != Some(t) {
        records.push(StepRecord {
            t,
            min_s: final_sweep.min_s,
            max_s: final_sweep.max_s,
            diagnostics: diagnostics_from_sweep(&s, &scr, &final_sweep, phi, w0),
        });
    }
    if psi_records.last().map(|r| r.t) != Some(t) {
        psi_records.push(PsiRecord { t, psi: final_psi });
    }
    let end_lo = solve_psi(final_sweep.min_s, phi, config.ode_rel_tol)?.extinction_time;
    let end_hi = solve_psi(final_sweep.max_s, phi, config.ode_rel_tol)?.extinction_time;
    let final_diag = records.last().expect("final record exists").diagnostics;
    let final_rescaled = SupportProfile::new(s.iter().map(|v| v / final_psi).collect(), n)?;
    let summary = RunSummary {
        steps,
        t_end: t,
        extinction_bracket: bracket,
        extinction_estimate: t + 0.5 * (end_lo + end_hi),
        final_min_s: final_sweep.min_s,
        final_psi_fit: final_psi,
        final_kappa_ratio_max: final_diag.kappa_ratio_max,
    };
    Ok(FlowRun {
        initial: initial.clone(),
        records,
        psi_records,
        final_rescaled,
        summary,
    })
}

/// One time slice of the post-run self-similarity report.
#[derive(Debug, Clone, Copy)]
pub struct SelfSimilarityRow {
    pub t: f64,
    pub psi: f64,
    pub psi_prime: f64,
    /// max over the initial grid of |s0 (-psi') - Phi(F0 / psi)|.
    pub residual_max: f64,
    pub residual_rms: f64,
    /// residual_max over max(|psi'| max s0, Phi(max F0 / psi)).
    pub normalized_max: f64,
}

#[derive(Debug, Clone)]
pub struct SelfSimilarityReport {
    pub rows: Vec<SelfSimilarityRow>,
    pub worst_normalized: f64,
    /// Normalized residual of the earliest reported row (t = 0 unless it
    /// fell under the spacing cutoff).
    pub start_normalized: f64,
    pub skipped_rows: usize,
}

/// Derivative at te of the quadratic through three points. Times enter
/// only as differences against te, which subtract exactly for the nearly
/// equal values the tail of a run produces.
fn lagrange_derivative(t0: f64, y0: f64, t1: f64, y1: f64, t2: f64, y2: f64, te: f64) -> f64 {
    let (u0, u1, u2) = (t0 - te, t1 - te, t2 - te);
    y0 * (-u1 - u2) / ((u0 - u1) * (u0 - u2))
        + y1 * (-u0 - u2) / ((u1 - u0) * (u1 - u2))
        + y2 * (-u0 - u1) / ((u2 - u0) * (u2 - u1))
}

/// Scale-equation residual of the run, evaluated over the initial grid at
/// every recorded scale sample: a shape that contracts by pure scaling
/// drives it to zero; anything else keeps it pinned away from zero.
pub fn self_similarity_report(
    run: &FlowRun,
    f: &SpeedFunction,
    phi: &PhiFunction,
) -> Result<SelfSimilarityReport> {
    let recs = &run.psi_records;
    if recs.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 scale records, got {}",
            recs.len()
        )));
    }
    if f.dim() != run.initial.dim() {
        return Err(Error::Domain(format!(
            "speed dimension {} != profile dimension {}",
            f.dim(),
            run.initial.dim()
        )));
    }
    let s0 = run.initial.values();
    let n = run.initial.dim();
    let mut f0 = Vec::with_capacity(s0.len());
    for &(kax, krot) in &run.initial.curvatures()? {
        let kap3 = [kax, krot, krot];
        let fv = f.value(&kap3[..n]);
        if !(fv > 0.0 && fv.is_finite()) {
            return Err(Error::Domain(format!(
                "speed must be positive on the initial profile, got {fv}"
            )));
        }
        f0.push(fv);
    }
    let f0_max = f0.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s0_max = run.initial.max_s();
    let cutoff = SS_SPACING_CUTOFF_REL * run.summary.t_end.max(1.0);
    let mut rows = Vec::new();
    let mut skipped = 0_usize;
    for k in 0..recs.len() {
        let (ia, ib, ic) = if k == 0 {
            (0, 1, 2)
        } else if k == recs.len() - 1 {
            (k - 2, k - 1, k)
        } else {
            (k - 1, k, k + 1)
        };
        let (ra, rb, rc) = (recs[ia], recs[ib], recs[ic]);
        if (rb.t - ra.t).min(rc.t - rb.t) < cutoff {
            skipped += 1;
            continue;
        }
        let te = recs[k].t;
        let psi_prime = lagrange_derivative(ra.t, ra.psi, rb.t, rb.psi, rc.t, rc.psi, te);
        if psi_prime >= 0.0 {
            return Err(Error::Domain(format!(
                "scale fit is not decreasing at t = {te} (psi' = {psi_prime})"
            )));
        }
        let psi = recs[k].psi;
        let mut sum2 = 0.0_f64;
        let mut res_max = 0.0_f64;
        for (v, fv) in s0.iter().zip(&f0) {
            let r = v * (-psi_prime) - phi.value(fv / psi);
            sum2 += r * r;
            res_max = res_max.max(r.abs());
        }
        let scale = (psi_prime.abs() * s0_max).max(phi.value(f0_max / psi));
        rows.push(SelfSimilarityRow {
            t: te,
            psi,
            psi_prime,
            residual_max: res_max,
            residual_rms: (sum2 / s0.len() as f64).sqrt(),
            normalized_max: res_max / scale,
        });
    }
    if rows.is_empty() {
        return Err(Error::Domain(
            "every scale record fell under the spacing cutoff".into(),
        ));
    }
    let worst_normalized = rows
        .iter()
        .map(|r| r.normalized_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let start_normalized = rows[0].normalized_max;
    Ok(SelfSimilarityReport {
        rows,
        worst_normalized,
        start_normalized,
        skipped_rows: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinch;
    use crate::symfunc::CurvatureVector;

    const T_CUBIC_UNIT: f64 = 0.153_426_409_720_027_35; // (1 - ln 2) / 2

    fn mean(n: usize) -> SpeedFunction {
        SpeedFunction::parse("mean", n).unwrap()
    }

    fn cubic() -> PhiFunction {
        PhiFunction::parse("power-sum:1,1;1,3").unwrap()
    }

    fn square() -> PhiFunction {
        PhiFunction::parse("power:2").unwrap()
    }

    #[test]
    fn sphere_single_step_is_uniform_drop() {
        let f = mean(2);
        let phi = cubic();
        let p = SupportProfile::sphere(1.0, 64, 2).unwrap();
        let state = FlowState::initial(p, &f, &phi).unwrap();
        let dt = 0.5 * stability_bound(&state.profile, &f, &phi).unwrap();
        let next = step(&state, &f, &phi, dt).unwrap();
        // Phi(f(1,1)) = Phi(1) = 2, so every point moves by exactly 2 dt.
        for &v in next.profile.values() {
            assert_eq!(v, 1.0 - 2.0 * dt);
        }
        assert_eq!(next.t, dt);
    }

    #[test]
    fn sphere_stays_spatially_constant_bitwise() {
        let f = mean(2);
        let phi = cubic();
        let mut state =
            FlowState::initial(SupportProfile::sphere(1.0, 48, 2).unwrap(), &f, &phi).unwrap();
        let mut last_psi = f64::INFINITY;
        for k in 0..200 {
            let first = state.profile.values()[0];
            for &v in state.profile.values() {
                assert_eq!(v, first, "step {k}");
            }
            let d = state.diagnostics;
            assert_eq!(d.kappa_ratio_max, 1.0);
            assert!(d.ss_residual_norm <= 1e-14, "step {k}: {}", d.ss_residual_norm);
            assert!(d.psi_fit < last_psi);
            last_psi = d.psi_fit;
            let dt = 0.9 * stability_bound(&state.profile, &f, &phi).unwrap();
            state = step(&state, &f, &phi, dt).unwrap();
        }
    }

    #[test]
    fn step_rejects_oversized_dt() {
        let f = mean(2);
        let phi = cubic();
        let state =
            FlowState::initial(SupportProfile::sphere(1.0, 64, 2).unwrap(), &f, &phi).unwrap();
        let bound = stability_bound(&state.profile, &f, &phi).unwrap();
        match step(&state, &f, &phi, 2.0 * bound) {
            Err(Error::StepTooLarge { dt, bound: b }) => {
                assert_eq!(dt, 2.0 * bound);
                assert_eq!(b, bound);
            }
            other => panic!("expected step rejection, got {other:?}"),
        }
    }

    #[test]
    fn state_rejects_dimension_mismatch() {
        let p = SupportProfile::sphere(1.0, 64, 3).unwrap();
        assert!(FlowState::initial(p, &mean(2), &cubic()).is_err());
    }

    #[test]
    fn bound_monitor_agrees_with_shared_formula() {
        let f = mean(2);
        let phi = cubic();
        let p = SupportProfile::spheroid(1.4, 1.0, 96, 2).unwrap();
        let state = FlowState::initial(p.clone(), &f, &phi).unwrap();
        let mut independent = f64::INFINITY;
        for &(kax, krot) in &p.curvatures().unwrap() {
            let kappa = CurvatureVector::new(vec![kax, krot]).unwrap();
            let report = pinch::pinching_bound(&kappa, &f, &phi, 1.0).unwrap();
            independent = independent.min(report.bound);
        }
        let delta = (independent - state.diagnostics.bound_min).abs();
        println!("bound monitor delta {delta:.3e}");
        assert!(delta <= 1e-12);
    }

    #[test]
    fn sphere_run_tracks_scale_equation() {
        let f = mean(2);
        let phi = cubic();
        let p = SupportProfile::sphere(1.0, 64, 2).unwrap();
        let run = run(&p, &f, &phi, &FlowConfig::default()).unwrap();
        let est = run.summary.extinction_estimate;
        println!(
            "sphere run: {} steps, t_end {:.6}, estimate {est:.8} vs {T_CUBIC_UNIT:.8}",
            run.summary.steps, run.summary.t_end
        );
        assert!((est - T_CUBIC_UNIT).abs() <= 2e-3, "estimate {est}");
        // Degenerate bracket: both bracketing spheres are the body itself.
        let (lo, hi) = run.summary.extinction_bracket;
        assert!((lo - T_CUBIC_UNIT).abs() < 1e-6 && (hi - T_CUBIC_UNIT).abs() < 1e-6);
        assert_eq!(run.summary.final_kappa_ratio_max, 1.0);
        assert!(run.summary.final_psi_fit < 2e-3);
        assert_eq!(run.records[0].t, 0.0);
        for pair in run.psi_records.windows(2) {
            assert!(pair[1].psi < pair[0].psi && pair[1].t > pair[0].t);
        }
        // The scale fit follows the independently solved scale equation.
        let ode = solve_psi(1.0, &phi, DEFAULT_REL_TOL).unwrap();
        let mut worst = 0.0_f64;
        for r in &run.psi_records {
            if r.t <= 0.9 * ode.extinction_time {
                let reference = ode.psi_at(r.t).expect("inside solved range");
                worst = worst.max((r.psi - reference).abs());
            }
        }
        println!("psi tracking worst deviation {worst:.3e}");
        assert!(worst <= 2e-3, "worst {worst}");
    }

    #[test]
    fn spheroid_extinction_sits_inside_bracket() {
        let f = mean(2);
        let phi = cubic();
        let p = SupportProfile::spheroid(1.2, 1.0, 64, 2).unwrap();
        let run = run(&p, &f, &phi, &FlowConfig::default()).unwrap();
        let (lo, hi) = run.summary.extinction_bracket;
        let est = run.summary.extinction_estimate;
        println!("spheroid bracket [{lo:.6}, {hi:.6}], estimate {est:.6}");
        assert!(lo < hi);
        assert!(est > lo + 1e-3 && est < hi - 1e-3, "estimate {est} not strictly inside");
    }

    #[test]
    fn spheroid_ratio_contracts_under_square_modifier() {
        let f = mean(2);
        let phi = square();
        let p = SupportProfile::spheroid(1.2, 1.0, 64, 2).unwrap();
        let run = run(&p, &f, &phi, &FlowConfig::default()).unwrap();
        let ratios: Vec<f64> = run
            .records
            .iter()
            .map(|r| r.diagnostics.kappa_ratio_max)
            .collect();
        for pair in ratios.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "ratio rose: {} -> {}", pair[0], pair[1]);
        }
        println!(
            "ratio {:.6} -> {:.6} over {} records",
            ratios[0],
            ratios[ratios.len() - 1],
            ratios.len()
        );
        assert!(ratios[ratios.len() - 1] < ratios[0]);
    }

    #[test]
    fn comparison_principle_keeps_nested_profiles_nested() {
        let f = mean(2);
        let phi = cubic();
        let mut outer =
            FlowState::initial(SupportProfile::sphere(1.0, 64, 2).unwrap(), &f, &phi).unwrap();
        let mut inner =
            FlowState::initial(SupportProfile::spheroid(0.85, 0.7, 64, 2).unwrap(), &f, &phi)
                .unwrap();
        for _ in 0..200 {
            let dt = 0.9
                * stability_bound(&outer.profile, &f, &phi)
                    .unwrap()
                    .min(stability_bound(&inner.profile, &f, &phi).unwrap());
            outer = step(&outer, &f, &phi, dt).unwrap();
            inner = step(&inner, &f, &phi, dt).unwrap();
            let gap = outer
                .profile
                .values()
                .iter()
                .zip(inner.profile.values())
                .map(|(o, i)| o - i)
                .fold(f64::INFINITY, f64::min);
            assert!(gap >= -1e-8, "profiles crossed: min gap {gap}");
        }
    }

    #[test]
    fn self_similarity_vanishes_on_spheres_only() {
        let f = mean(2);
        let phi = cubic();
        let sphere_run = run(
            &SupportProfile::sphere(1.0, 64, 2).unwrap(),
            &f,
            &phi,
            &FlowConfig::default(),
        )
        .unwrap();
        let sphere_report = self_similarity_report(&sphere_run, &f, &phi).unwrap();
        println!(
            "sphere worst normalized residual {:.3e} ({} rows, {} skipped)",
            sphere_report.worst_normalized,
            sphere_report.rows.len(),
            sphere_report.skipped_rows
        );
        assert!(sphere_report.worst_normalized <= 1e-3);
        assert_eq!(sphere_report.rows[0].t, 0.0);

        let spheroid_run = run(
            &SupportProfile::spheroid(1.5, 1.0, 64, 2).unwrap(),
            &f,
            &phi,
            &FlowConfig::default(),
        )
        .unwrap();
        let spheroid_report = self_similarity_report(&spheroid_run, &f, &phi).unwrap();
        println!(
            "spheroid start normalized residual {:.6}",
            spheroid_report.start_normalized
        );
        assert!(spheroid_report.start_normalized >= 0.05);
        assert!(spheroid_report.start_normalized >= 10.0 * sphere_report.worst_normalized);
    }

    #[test]
    fn run_rejects_bad_config() {
        let p = SupportProfile::sphere(1.0, 64, 2).unwrap();
        for cfg in [
            FlowConfig {
                dt_safety: 0.0,
                ..FlowConfig::default()
            },
            FlowConfig {
                extinction_fraction: 0.9,
                ..FlowConfig::default()
            },
            FlowConfig {
                max_steps: 0,
                ..FlowConfig::default()
            },
        ] {
            assert!(run(&p, &mean(2), &cubic(), &cfg).is_err());
        }
    }

    #[test]
    fn run_in_three_dimensions_matches_scale_equation() {
        let f = mean(3);
        let phi = cubic();
        let p = SupportProfile::sphere(1.0, 48, 3).unwrap();
        let run = run(&p, &f, &phi, &FlowConfig::default()).unwrap();
        // Spheres see the same scalar equation in every dimension.
        assert!((run.summary.extinction_estimate - T_CUBIC_UNIT).abs() <= 2e-3);
        assert_eq!(run.summary.final_kappa_ratio_max, 1.0);
    }
}
