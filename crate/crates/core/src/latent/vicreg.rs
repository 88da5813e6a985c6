//! Variance and covariance regularizers on a batch of latents.

use crate::error::{Error, Result};
use crate::nn::{Matrix, Scalar};

/// Added under the square root so the hinge gradient stays finite for
/// collapsed dimensions.
const STD_EPS: f64 = 1e-12;

fn centered<T: Scalar>(z: &Matrix<T>) -> Result<Matrix<T>> {
    if z.rows() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: z.rows() });
    }
    let n = z.rows() as f64;
    let means: Vec<f64> = (0..z.cols()).map(|j| (0..z.rows()).map(|i| z.get(i, j).as_f64()).sum::<f64>() / n).collect();
    let mut c = z.clone();
    for i in 0..c.rows() {
        for (v, &m) in c.row_mut(i).iter_mut().zip(&means) {
            *v -= T::lit(m);
        }
    }
    Ok(c)
}

fn column_stds<T: Scalar>(c: &Matrix<T>) -> Vec<f64> {
    let n1 = (c.rows() - 1) as f64;
    (0..c.cols())
        .map(|j| ((0..c.rows()).map(|i| c.get(i, j).as_f64().powi(2)).sum::<f64>() / n1 + STD_EPS).sqrt())
        .collect()
}

/// `(1/D) sum_i max(0, target - std_i)` with unbiased per-dimension std.
pub fn vicreg_variance<T: Scalar>(z: &Matrix<T>, target: f64) -> Result<(T, Matrix<T>)> {
    let c = centered(z)?;
    let d = z.cols() as f64;
    let n1 = (z.rows() - 1) as f64;
    let stds = column_stds(&c);
    let loss = stds.iter().map(|s| (target - s).max(0.0)).sum::<f64>() / d;
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    for (j, &s) in stds.iter().enumerate() {
        if target - s > 0.0 {
            let scale = T::lit(-1.0 / (d * n1 * s));
            for i in 0..z.rows() {
                grad.set(i, j, scale * c.get(i, j));
            }
        }
    }
    Ok((T::lit(loss), grad))
}

/// Batch covariance `C = Xc^T Xc / (n - 1)`.
pub fn covariance<T: Scalar>(z: &Matrix<T>) -> Result<Matrix<f64>> {
    let c = centered(z)?;
    let (n1, d) = ((z.rows() - 1) as f64, z.cols());
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = (0..z.rows()).map(|i| c.get(i, a).as_f64() * c.get(i, b).as_f64()).sum::<f64>() / n1;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    Ok(cov)
}

/// `(1/D) sum_{i != j} C_ij^2`.
pub fn vicreg_covariance<T: Scalar>(z: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    let cov = covariance(z)?;
    let c = centered(z)?;
    let (d, n1) = (z.cols(), (z.rows() - 1) as f64);
    let mut loss = 0.0;
    // dL/dC_ab = 2 C_ab / D off the diagonal; dL/dX = 2 Xc G / (n - 1)
    let mut g = Matrix::<f64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            if a != b {
                let v = cov.get(a, b);
                loss += v * v;
                g.set(a, b, 2.0 * v / d as f64);
            }
        }
    }
    let mut grad = Matrix::zeros(z.rows(), d);
    for i in 0..z.rows() {
        for b in 0..d {
            let s: f64 = (0..d).map(|a| c.get(i, a).as_f64() * g.get(a, b)).sum();
            grad.set(i, b, T::lit(2.0 * s / n1));
        }
    }
    Ok((T::lit(loss / d as f64), grad))
}
