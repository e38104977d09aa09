//! Support-function profiles of convex bodies of revolution.
//!
//! A profile stores s(theta_i) on the uniform grid theta_i = i pi/(m-1),
//! colatitude measured from the rotation axis, together with the
//! hypersurface dimension n (2 or 3; the rotational curvature then has
//! multiplicity n - 1). The principal radii are
//!
//! * axial (meridian):   r1 = s'' + s,
//! * rotational:         r2 = s + s' cot(theta),
//!
//! with the pole limit r2 -> r1. Derivatives use five-point fourth-order
//! stencils written in difference form, with even extension across the
//! poles. That form has two exactness properties the tests lean on: the
//! odd stencil vanishes bit for bit on pole-symmetric data (so the
//! boundary condition s'(0) = s'(pi) = 0 needs no special casing), and a
//! profile that is mirror symmetric about the equator keeps exactly
//! mirror-symmetric derivatives, because every mirrored subexpression is
//! the same floating-point operation with commuted operands. The
//! cotangent table is built on the left half and negated onto the right
//! half so it is antisymmetric by construction rather than by trig
//! identity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::fmt_float;

/// Smallest usable grid: the five-point stencils plus a real interior.
pub const MIN_GRID: usize = 16;

/// Slack (relative to pi) when matching the theta column of a shape file
/// against the uniform grid.
const GRID_MATCH_REL_TOL: f64 = 1e-9;

/// Even extension across both poles: index -k reads k, index m-1+k reads
/// m-1-k.
#[inline]
fn ext(s: &[f64], i: isize) -> f64 {
    let m = s.len() as isize;
    let j = if i < 0 {
        -i
    } else if i >= m {
        2 * m - 2 - i
    } else {
        i
    };
    s[j as usize]
}

/// First and second derivative of s on the grid, fourth order, written to
/// the caller's buffers so the stepper can reuse its scratch space.
pub(crate) fn fourth_order_derivs(s: &[f64], h: f64, st: &mut [f64], stt: &mut [f64]) {
    let m = s.len();
    for idx in 0..m {
        let i = idx as isize;
        let d1 = ext(s, i + 1) - ext(s, i - 1);
        let d2 = ext(s, i + 2) - ext(s, i - 2);
        st[idx] = (8.0 * d1 - d2) / (12.0 * h);
        let c = s[idx];
        let e1 = (ext(s, i + 1) + ext(s, i - 1)) - 2.0 * c;
        let e2 = (ext(s, i + 2) + ext(s, i - 2)) - 2.0 * c;
        stt[idx] = (16.0 * e1 - e2) / (12.0 * h * h);
    }
}

/// cot(theta_i) for interior points, antisymmetric about the equator by
/// construction; the pole entries stay zero and must not be read.
pub(crate) fn cot_table(m: usize, h: f64) -> Vec<f64> {
    let mut cot = vec![0.0; m];
    for i in 1..m - 1 {
        let j = m - 1 - i;
        if i < j {
            let theta = i as f64 * h;
            let c = theta.cos() / theta.sin();
            cot[i] = c;
            cot[j] = -c;
        } else if i == j {
            cot[i] = 0.0;
        }
    }
    cot
}

/// Principal radii from the derivative buffers; poles take the meridian
/// value (the rotational radius has the same limit there).
pub(crate) fn principal_radii(
    s: &[f64],
    st: &[f64],
    stt: &[f64],
    cot: &[f64],
    r1: &mut [f64],
    r2: &mut [f64],
) {
    let m = s.len();
    for i in 0..m {
        r1[i] = stt[i] + s[i];
    }
    r2[0] = r1[0];
    r2[m - 1] = r1[m - 1];
    for i in 1..m - 1 {
        r2[i] = s[i] + st[i] * cot[i];
    }
}

/// A convex axisymmetric hypersurface as support values on the colatitude
/// grid.
#[derive(Debug, Clone)]
pub struct SupportProfile {
    s: Vec<f64>,
    n: usize,
    h: f64,
    cot: Vec<f64>,
}

impl SupportProfile {
    /// Wrap raw support values. Positivity of s is checked here; convexity
    /// (positivity of the radii) is checked by [`curvatures`](Self::curvatures).
    pub fn new(s: Vec<f64>, n: usize) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::Domain(format!(
                "hypersurface dimension must be 2 or 3, got {n}"
            )));
        }
        let m = s.len();
        if m < MIN_GRID {
            return Err(Error::Domain(format!(
                "grid needs at least {MIN_GRID} points, got {m}"
            )));
        }
        for (i, &v) in s.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "support values must be positive and finite, s[{i}] = {v}"
                )));
            }
        }
        let h = PI / (m - 1) as f64;
        let cot = cot_table(m, h);
        Ok(SupportProfile { s, n, h, cot })
    }

    pub fn sphere(radius: f64, m: usize, n: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        SupportProfile::new(vec![radius; m], n)
    }

    /// Spheroid with polar semi-axis `a` (theta = 0) and equatorial
    /// semi-axis `b`: s = sqrt(a^2 cos^2 + b^2 sin^2). Each mirror pair is
    /// assigned from the same evaluation, so the profile is reflection
    /// symmetric about the equator bit for bit.
    pub fn spheroid(a: f64, b: f64, m: usize, n: usize) -> Result<Self> {
        for (name, v) in [("polar", a), ("equatorial", b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} semi-axis must be positive, got {v}"
                )));
            }
        }
        if m < MIN_GRID {
            return Err(Error::Domain(format!(
                "grid needs at least {MIN_GRID} points, got {m}"
            )));
        }
        let h = PI / (m - 1) as f64;
        let mut s = vec![0.0; m];
        for (i, v) in s.iter_mut().enumerate() {
            let k = i.min(m - 1 - i);
            let theta = k as f64 * h;
            let (sin, cos) = theta.sin_cos();
            *v = (a * a * cos * cos + b * b * sin * sin).sqrt();
        }
        SupportProfile::new(s, n)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Hypersurface dimension (2 or 3).
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Grid spacing pi/(m-1).
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    pub(crate) fn cot_slice(&self) -> &[f64] {
        &self.cot
    }

    pub fn min_s(&self) -> f64 {
        self.s.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn max_s(&self) -> f64 {
        self.s.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Width in the direction theta_i: s(theta_i) + s(pi - theta_i).
    pub fn width(&self, i: usize) -> f64 {
        self.s[i] + self.s[self.s.len() - 1 - i]
    }

    pub fn min_width(&self) -> f64 {
        self.width_argmin().1
    }

    pub(crate) fn width_argmin(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.s.len() {
            let w = self.width(i);
            if w < best.1 {
                best = (i, w);
            }
        }
        best
    }

    /// (s', s'') on the grid.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.s.len();
        let mut st = vec![0.0; m];
        let mut stt = vec![0.0; m];
        fourth_order_derivs(&self.s, self.h, &mut st, &mut stt);
        (st, stt)
    }

    /// (axial, rotational) principal radii on the grid, unchecked sign.
    pub fn radii(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.s.len();
        let (st, stt) = self.derivatives();
        let mut r1 = vec![0.0; m];
        let mut r2 = vec![0.0; m];
        principal_radii(&self.s, &st, &stt, &self.cot, &mut r1, &mut r2);
        (r1, r2)
    }

    /// (axial, rotational) principal curvatures on the grid; fails with
    /// the first nonpositive radius.
    pub fn curvatures(&self) -> Result<Vec<(f64, f64)>> {
        let (r1, r2) = self.radii();
        let mut out = Vec::with_capacity(self.s.len());
        for i in 0..self.s.len() {
            for r in [r1[i], r2[i]] {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::ConvexityLost { index: i, radius: r });
                }
            }
            out.push((1.0 / r1[i], 1.0 / r2[i]));
        }
        Ok(out)
    }

    pub fn check_convex(&self) -> Result<()> {
        self.curvatures().map(|_| ())
    }

    /// Meridian embedding (rho, zeta): distance from the axis and height,
    /// reconstructed from the support parameterization X = s nu + s' e_theta.
    pub fn embed(&self) -> Vec<(f64, f64)> {
        let (st, _) = self.derivatives();
        (0..self.s.len())
            .map(|i| {
                let (sin, cos) = self.theta(i).sin_cos();
                (self.s[i] * sin + st[i] * cos, self.s[i] * cos - st[i] * sin)
            })
            .collect()
    }

    /// Shape-file text: header `m n`, then one `theta s` row per point.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.s.len(), self.n);
        for (i, &v) in self.s.iter().enumerate() {
            let _ = writeln!(out, "{} {}", fmt_float(self.theta(i)), fmt_float(v));
        }
        out
    }

    /// Parse shape-file text. Blank lines and `#` comments are skipped;
    /// the theta column must sit on the uniform grid.
    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Domain(format!("shape file: {reason}"));
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let mut tokens = header.split_whitespace();
        let m: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("bad point count in header {header:?}")))?;
        let n: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("bad dimension in header {header:?}")))?;
        if tokens.next().is_some() {
            return Err(bad(format!("header must be `m n`, got {header:?}")));
        }
        if m < 2 {
            return Err(bad(format!("point count {m} is too small")));
        }
        let h = PI / (m - 1) as f64;
        let mut s = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("expected {m} rows, found {i}")))?;
            let mut tokens = line.split_whitespace();
            let theta: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(format!("row {i}: bad theta in {line:?}")))?;
            let v: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(format!("row {i}: bad support value in {line:?}")))?;
            if tokens.next().is_some() {
                return Err(bad(format!("row {i}: expected `theta s`, got {line:?}")));
            }
            if (theta - i as f64 * h).abs() > GRID_MATCH_REL_TOL * PI {
                return Err(bad(format!(
                    "row {i}: theta {theta} is off the uniform grid (expected {})",
                    i as f64 * h
                )));
            }
            s.push(v);
        }
        if let Some(extra) = lines.next() {
            return Err(bad(format!("trailing content after {m} rows: {extra:?}")));
        }
        SupportProfile::new(s, n)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SupportProfile::parse_text(&text)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHEROID_ORACLE_TOL: f64 = 1e-6;
    const EMBED_IDENTITY_TOL: f64 = 1e-10;

    /// Closed-form spheroid curvatures: kappa_axial = s^3/(a^2 b^2),
    /// kappa_rotational = s/b^2.
    fn spheroid_oracle(a: f64, b: f64, theta: f64) -> (f64, f64) {
        let (sin, cos) = theta.sin_cos();
        let s = (a * a * cos * cos + b * b * sin * sin).sqrt();
        (s * s * s / (a * a * b * b), s / (b * b))
    }

    #[test]
    fn sphere_curvatures_are_exact() {
        let p = SupportProfile::sphere(2.5, 64, 2).unwrap();
        for &(kax, krot) in &p.curvatures().unwrap() {
            assert_eq!(kax, 1.0 / 2.5);
            assert_eq!(krot, 1.0 / 2.5);
        }
    }

    #[test]
    fn spheroid_curvatures_match_closed_form() {
        let (a, b) = (1.2, 1.0);
        let p = SupportProfile::spheroid(a, b, 512, 2).unwrap();
        let mut worst = 0.0_f64;
        for (i, &(kax, krot)) in p.curvatures().unwrap().iter().enumerate() {
            let (ax, rot) = spheroid_oracle(a, b, p.theta(i));
            worst = worst.max((kax - ax).abs()).max((krot - rot).abs());
        }
        println!("spheroid curvature worst error {worst:.3e}");
        assert!(worst <= SPHEROID_ORACLE_TOL, "worst error {worst:e}");
    }

    #[test]
    fn spheroid_poles_are_umbilic() {
        let p = SupportProfile::spheroid(1.4, 0.9, 128, 3).unwrap();
        let ks = p.curvatures().unwrap();
        for &i in &[0, 127] {
            assert_eq!(ks[i].0, ks[i].1);
        }
    }

    #[test]
    fn dented_profile_loses_convexity() {
        let m = 64;
        let h = PI / (m - 1) as f64;
        let s: Vec<f64> = (0..m)
            .map(|i| 1.0 + 0.3 * (4.0 * i.min(m - 1 - i) as f64 * h).cos())
            .collect();
        let p = SupportProfile::new(s, 2).unwrap();
        match p.curvatures() {
            Err(Error::ConvexityLost { index, radius }) => {
                assert!(radius <= 0.0, "radius {radius}");
                println!("convexity lost at index {index}, radius {radius:.3}");
            }
            other => panic!("expected convexity loss, got {other:?}"),
        }
    }

    #[test]
    fn pole_slope_vanishes_bitwise() {
        let p = SupportProfile::spheroid(1.7, 0.6, 101, 2).unwrap();
        let (st, _) = p.derivatives();
        assert_eq!(st[0], 0.0);
        assert_eq!(st[100], 0.0);
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        for m in [128, 129] {
            let p = SupportProfile::spheroid(1.5, 1.0, m, 2).unwrap();
            let (st, stt) = p.derivatives();
            let (r1, r2) = p.radii();
            for i in 0..m {
                let j = m - 1 - i;
                assert_eq!(st[j], -st[i], "m={m} i={i}");
                assert_eq!(stt[j], stt[i], "m={m} i={i}");
                assert_eq!(r1[j], r1[i], "m={m} i={i}");
                assert_eq!(r2[j], r2[i], "m={m} i={i}");
            }
        }
    }

    #[test]
    fn embedding_returns_support_values() {
        let p = SupportProfile::spheroid(1.3, 1.0, 256, 2).unwrap();
        let pts = p.embed();
        let mut worst = 0.0_f64;
        for (i, &(rho, zeta)) in pts.iter().enumerate() {
            let (sin, cos) = p.theta(i).sin_cos();
            worst = worst.max((rho * sin + zeta * cos - p.values()[i]).abs());
        }
        println!("support reconstruction worst error {worst:.3e}");
        assert!(worst <= EMBED_IDENTITY_TOL);
    }

    #[test]
    fn min_width_of_prolate_spheroid_is_equatorial() {
        let p = SupportProfile::spheroid(1.5, 1.0, 257, 2).unwrap();
        assert!((p.min_width() - 2.0).abs() < 1e-12);
        let q = SupportProfile::sphere(0.75, 64, 2).unwrap();
        assert_eq!(q.min_width(), 1.5);
    }

    #[test]
    fn shape_text_round_trips() {
        let p = SupportProfile::spheroid(1.2, 0.8, 48, 3).unwrap();
        let q = SupportProfile::parse_text(&p.render()).unwrap();
        assert_eq!(q.dim(), 3);
        assert_eq!(q.values(), p.values());
    }

    #[test]
    fn shape_file_round_trips_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shape.txt");
        let p = SupportProfile::sphere(1.25, 32, 2).unwrap();
        p.to_file(&path).unwrap();
        let q = SupportProfile::from_file(&path).unwrap();
        assert_eq!(q.values(), p.values());
    }

    #[test]
    fn shape_text_rejects_malformed_input() {
        let good = SupportProfile::sphere(1.0, 16, 2).unwrap().render();
        // Header claims more rows than provided.
        let mut lines: Vec<&str> = good.lines().collect();
        lines.pop();
        assert!(SupportProfile::parse_text(&lines.join("\n")).is_err());
        // Off-grid theta.
        let shifted = good.replacen("0.0000000000000000e0 ", "1.0000000000000000e-3 ", 1);
        assert!(SupportProfile::parse_text(&shifted).is_err());
        // Bad dimension.
        let bad_n = good.replacen("16 2", "16 5", 1);
        assert!(SupportProfile::parse_text(&bad_n).is_err());
        // Nonpositive support value.
        let negative = good.replace("1.0000000000000000e0", "-1.0000000000000000e0");
        assert!(SupportProfile::parse_text(&negative).is_err());
        assert!(SupportProfile::parse_text("").is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(SupportProfile::new(vec![1.0; 8], 2).is_err());
        assert!(SupportProfile::new(vec![1.0; 32], 4).is_err());
        assert!(SupportProfile::new(vec![0.0; 32], 2).is_err());
        assert!(SupportProfile::sphere(-1.0, 32, 2).is_err());
        assert!(SupportProfile::spheroid(1.0, f64::NAN, 32, 2).is_err());
    }
}
