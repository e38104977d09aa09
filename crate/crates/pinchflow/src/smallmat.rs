//! Small dense symmetric-matrix helpers (n <= 8 in practice).
//!
//! Cyclic Jacobi is plenty here: the matrices are tiny, and the rotation
//! order is fixed, so results are deterministic.

/// Eigenvalues of a symmetric `n x n` matrix in row-major order, ascending.
pub(crate) fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let scale: f64 = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p * n + q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Largest absolute eigenvalue (spectral radius) of a symmetric matrix.
pub(crate) fn spectral_radius(a: &[f64], n: usize) -> f64 {
    sym_eigenvalues(a, n)
        .into_iter()
        .fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

/// Orthonormal basis of the complement of `unit` (a unit vector), as
/// `n-1` rows of length `n`. Uses the Householder reflector that maps
/// -e1 to `unit`; stable whenever unit[0] > -1, which holds on the
/// positive cone.
pub(crate) fn complement_basis(unit: &[f64]) -> Vec<f64> {
    let n = unit.len();
    let mut v = unit.to_vec();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut rows = Vec::with_capacity((n - 1) * n);
    for j in 1..n {
        // Column j of H = I - 2 v v^T / (v^T v).
        for (i, &vi) in v.iter().enumerate() {
            let e = if i == j { 1.0 } else { 0.0 };
            rows.push(e - 2.0 * vi * v[j] / vv);
        }
    }
    rows
}
