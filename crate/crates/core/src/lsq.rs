//! Small dense least-squares fits via Householder QR.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// Result of an ordinary least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFit<T> {
    pub coefficients: Vec<T>,
    /// One standard error per coefficient (zero when the fit is exact or
    /// has no residual degrees of freedom).
    pub std_errors: Vec<T>,
    pub residual_rms: T,
    pub rss: T,
    pub r_squared: T,
    /// Ratio of largest to smallest diagonal entry of R.
    pub condition: T,
}

/// Fits `y ≈ Σ_j c_j basis_j(x)` given the design matrix `rows` (one row per
/// observation).
pub fn fit<T: Real>(rows: &[Vec<T>], y: &[T]) -> Result<LinearFit<T>> {
    let m = rows.len();
    if m == 0 || m != y.len() {
        return Err(Error::IllConditionedFit("empty or mismatched design".into()));
    }
    let n = rows[0].len();
    if n == 0 || m < n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::IllConditionedFit(format!("{m} observations for {n} unknowns")));
    }
    // Column scaling keeps the monomial designs used throughout the crate
    // from losing digits.
    let mut scale = vec![T::zero(); n];
    for j in 0..n {
        let s = rows.iter().map(|r| r[j] * r[j]).fold(T::zero(), |a, b| a + b).sqrt();
        scale[j] = if s > T::zero() { s } else { T::one() };
    }
    let mut a: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().zip(&scale).map(|(&x, &s)| x / s).collect())
        .collect();
    let mut b = y.to_vec();

    for k in 0..n {
        let norm = (k..m).map(|i| a[i][k] * a[i][k]).fold(T::zero(), |s, v| s + v).sqrt();
        if norm == T::zero() {
            return Err(Error::IllConditionedFit(format!("column {k} is identically zero")));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| a[i][k]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        if vnorm2 > T::zero() {
            for j in k..n {
                let dot = (k..m).fold(T::zero(), |s, i| s + v[i - k] * a[i][j]);
                let f = (dot + dot) / vnorm2;
                for i in k..m {
                    a[i][j] = a[i][j] - f * v[i - k];
                }
            }
            let dot = (k..m).fold(T::zero(), |s, i| s + v[i - k] * b[i]);
            let f = (dot + dot) / vnorm2;
            for i in k..m {
                b[i] = b[i] - f * v[i - k];
            }
        }
    }

    let diag: Vec<T> = (0..n).map(|k| a[k][k].abs()).collect();
    let dmax = diag.iter().cloned().fold(T::zero(), T::max);
    let dmin = diag.iter().cloned().fold(T::infinity(), T::min);
    if dmin <= dmax * T::epsilon() * from_usize(n) {
        return Err(Error::IllConditionedFit("rank-deficient design".into()));
    }

    // Back substitution.
    let mut c = vec![T::zero(); n];
    for k in (0..n).rev() {
        let s = ((k + 1)..n).fold(b[k], |s, j| s - a[k][j] * c[j]);
        c[k] = s / a[k][k];
    }
    let rss = (n..m).fold(T::zero(), |s, i| s + b[i] * b[i]);
    let dof = m - n;
    let sigma2 = if dof > 0 { rss / from_usize(dof) } else { T::zero() };

    // Row norms of R^{-1} give the coefficient variances.
    let mut rinv = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        rinv[j][j] = T::one() / a[j][j];
        for i in (0..j).rev() {
            let s = ((i + 1)..=j).fold(T::zero(), |s, k| s + a[i][k] * rinv[k][j]);
            rinv[i][j] = -s / a[i][i];
        }
    }
    let std_errors = (0..n)
        .map(|i| {
            let v = (i..n).fold(T::zero(), |s, j| s + rinv[i][j] * rinv[i][j]);
            (v * sigma2).sqrt() / scale[i]
        })
        .collect();
    let coefficients = c.iter().zip(&scale).map(|(&x, &s)| x / s).collect();

    let mean = y.iter().fold(T::zero(), |s, &v| s + v) / from_usize(m);
    let tss = y.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean));
    let r_squared = if tss > T::zero() { T::one() - rss / tss } else { T::one() };

    Ok(LinearFit {
        coefficients,
        std_errors,
        residual_rms: (rss / from_usize(m)).sqrt(),
        rss,
        r_squared,
        condition: dmax / dmin,
    })
}

/// Fits `y ≈ Σ_j c_j x^{powers_j}`.
pub fn fit_powers<T: Real>(x: &[T], y: &[T], powers: &[T]) -> Result<LinearFit<T>> {
    let rows: Vec<Vec<T>> = x.iter().map(|&xi| powers.iter().map(|&k| xi.powf(k)).collect()).collect();
    fit(&rows, y)
}

/// Straight-line fit `y ≈ c0 + c1 x`.
pub fn fit_line<T: Real>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    let rows: Vec<Vec<T>> = x.iter().map(|&xi| vec![T::one(), xi]).collect();
    fit(&rows, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_quadratic() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.0 - 2.0 * t + 0.5 * t * t).collect();
        let f = fit_powers(&x, &y, &[0.0, 1.0, 2.0]).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-13);
        assert!((f.coefficients[1] + 2.0).abs() < 1e-13);
        assert!((f.coefficients[2] - 0.5).abs() < 1e-13);
        assert!(f.rss < 1e-25);
    }

    #[test]
    fn rejects_rank_deficiency() {
        let rows = vec![vec![1.0_f64, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(fit(&rows, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn line_fit_reports_unit_r_squared_on_exact_data() {
        let x = [1.0_f64, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = fit_line(&x, &y).unwrap();
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-14);
    }
}
