//! Weighted least squares through the normal equations.

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

/// Ridge added to the normal matrix when it is numerically singular,
/// relative to the mean of its diagonal.
pub const RIDGE_LAMBDA: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct WlsSolution {
    pub coefficients: Vec<f64>,
    /// True when the ridge fallback was needed.
    pub ridge_applied: bool,
}

/// Minimizes `Σ_k w_k (m_k · φ − y_k)²`, i.e. `φ = (MᵀWM)⁻¹ MᵀW y`.
pub fn wls_solve(m: &Matrix, w_diag: &[f64], y: &[f64]) -> Result<WlsSolution> {
    let (samples, players) = m.shape();
    if w_diag.len() != samples || y.len() != samples {
        return Err(Error::Shape(format!(
            "design has {samples} rows, weights {}, targets {}",
            w_diag.len(),
            y.len()
        )));
    }
    if let Some(bad) = w_diag.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Config(format!("weights must be finite and non-negative, got {bad}")));
    }
    if !m.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weighted least squares inputs".into()));
    }

    let mut a = Matrix::zeros(players, players);
    let mut b = vec![0.0; players];
    for k in 0..samples {
        let wk = w_diag[k];
        if wk == 0.0 {
            continue;
        }
        let row = m.row(k);
        for i in 0..players {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            b[i] += wk * ri * y[k];
            let a_row = a.row_mut(i);
            for j in 0..players {
                a_row[j] += wk * ri * row[j];
            }
        }
    }

    let (factor, ridge_applied) = match cholesky(&a) {
        Some(l) => (l, false),
        None => {
            let mean_diag = (0..players).map(|i| a.get(i, i)).sum::<f64>() / players.max(1) as f64;
            let lambda = RIDGE_LAMBDA * mean_diag.max(1.0);
            let mut ridged = a.clone();
            for i in 0..players {
                ridged.set(i, i, ridged.get(i, i) + lambda);
            }
            let l = cholesky(&ridged).ok_or_else(|| Error::NonFinite("ridge-regularized normal matrix".into()))?;
            a = ridged;
            (l, true)
        }
    };

    let mut phi = cholesky_solve(&factor, &b);
    // Two rounds of iterative refinement against the (possibly ridged) system.
    for _ in 0..2 {
        let residual: Vec<f64> = (0..players).map(|i| b[i] - dot(a.row(i), &phi)).collect();
        if norm2(&residual) == 0.0 {
            break;
        }
        let delta = cholesky_solve(&factor, &residual);
        phi.iter_mut().zip(&delta).for_each(|(p, d)| *p += d);
    }
    Ok(WlsSolution { coefficients: phi, ridge_applied })
}

/// Lower-triangular factor, or `None` when a pivot is not safely positive.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let tol = max_diag * 1e-13;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tol) {
            return None;
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_returns_targets() {
        let y = [0.5, -1.25, 3.0];
        let sol = wls_solve(&Matrix::identity(3), &[1.0; 3], &y).unwrap();
        for (p, t) in sol.coefficients.iter().zip(&y) {
            assert!((p - t).abs() < 1e-14);
        }
        assert!(!sol.ridge_applied);
    }

    #[test]
    fn duplicated_row_weight_semantics() {
        let m1 = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let y1 = [1.0, 2.0, 0.5, 0.5];
        let a = wls_solve(&m1, &[1.0, 1.0, 2.0, 0.0], &y1).unwrap();
        let m2 = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = wls_solve(&m2, &[1.0, 1.0, 2.0], &[1.0, 2.0, 0.5]).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_system_uses_ridge() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let sol = wls_solve(&m, &[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(sol.ridge_applied);
        assert!(sol.coefficients.iter().all(|c| c.is_finite()));
        // Minimum-norm direction: both coefficients equal.
        assert!((sol.coefficients[0] - sol.coefficients[1]).abs() < 1e-6);
    }

    #[test]
    fn shape_and_weight_errors() {
        let m = Matrix::identity(2);
        assert!(wls_solve(&m, &[1.0], &[1.0, 2.0]).is_err());
        assert!(wls_solve(&m, &[1.0, -1.0], &[1.0, 2.0]).is_err());
    }
}
