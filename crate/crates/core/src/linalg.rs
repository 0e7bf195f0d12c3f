//! Small dense linear-algebra helpers shared by the solvers and regressions.

use nalgebra::{DMatrix, DVector};

/// Neumaier-compensated sum; order-dependent only at the level of the
/// compensation term, which keeps reductions reproducible to ~1e-15.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Solves `m x = rhs` for symmetric positive definite `m`.
pub fn spd_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    m.cholesky().map(|c| c.solve(rhs))
}

/// Ordinary least squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
}

/// Least squares via Householder QR. Returns `None` when the design is rank
/// deficient (a diagonal of R is negligible relative to the largest).
pub fn ols(rows: &[Vec<f64>], y: &[f64]) -> Option<OlsFit> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let p = rows[0].len();
    if n < p {
        return None;
    }
    // Column scaling keeps the rank test meaningful when regressors differ in
    // magnitude by orders (floor area x employment).
    let mut scale = vec![0.0f64; p];
    for row in rows {
        for (s, v) in scale.iter_mut().zip(row) {
            *s = s.max(v.abs());
        }
    }
    if scale.contains(&0.0) {
        return None;
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j] / scale[j]);
    let b = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag) {
        return None;
    }
    let qtb = qr.q().transpose() * &b;
    let sol = r.solve_upper_triangular(&qtb)?;
    let coefficients: Vec<f64> = sol.iter().zip(&scale).map(|(c, s)| c / s).collect();

    let mean = compensated_sum(y.iter().copied()) / n as f64;
    let fitted = x * &sol;
    let ss_res = compensated_sum(fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)));
    let ss_tot = compensated_sum(y.iter().map(|v| (v - mean).powi(2)));
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(OlsFit { coefficients, r_squared, n_obs: n })
}
