//! Weighted, penalized nonnegative least squares.
//!
//! Minimizes `sum_l w_l (y_l - b0 - x_l . beta)^2 + lambda ||D beta||^2`
//! over free intercept `b0` and elementwise-nonnegative `beta`. The
//! intercept is eliminated by weighted centering, the penalty is appended as
//! `sqrt(lambda) D` rows with zero targets, and the resulting plain NNLS is
//! solved by the active-set method of Lawson and Hansen with minimal-norm
//! inner solves, so rank-deficient designs (duplicate matched sequences)
//! are handled.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of the penalized NNLS fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Value of the objective as stated (weighted residuals plus penalty).
    pub objective: f64,
    /// Indices with strictly positive coefficients.
    pub active_set: Vec<usize>,
}

fn all_finite(values: impl Iterator<Item = f64>) -> bool {
    let mut ok = true;
    for v in values {
        ok &= v.is_finite();
    }
    ok
}

/// Plain NNLS `min ||a x - b||, x >= 0` by active-set iteration.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let atb = a.transpose() * b;
    let tol = 1e-10 * atb.amax().max(1.0);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let residual = b - a * &x;
        let gradient = a.transpose() * residual;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && gradient[j] > tol {
                if best.map(|(_, g)| gradient[j] > g).unwrap_or(true) {
                    best = Some((j, gradient[j]));
                }
            }
        }
        let Some((j_new, _)) = best else { break };
        passive[j_new] = true;

        // Inner loop: solve on the passive set, stepping back when a
        // coefficient would turn negative.
        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(cols.iter());
            let svd = sub.svd(true, true);
            let z_sub = svd.solve(b, 1e-12).expect("svd solve");
            if z_sub.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &j) in cols.iter().enumerate() {
                    x[j] = z_sub[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in cols.iter().enumerate() {
                if z_sub[k] <= 0.0 {
                    let denom = x[j] - z_sub[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                break;
            }
            for (k, &j) in cols.iter().enumerate() {
                x[j] += alpha * (z_sub[k] - x[j]);
            }
            for &j in &cols {
                if x[j] <= 1e-14 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if cols.iter().all(|&j| !passive[j]) {
                break;
            }
        }
    }
    x
}

/// Fits the weighted penalized NNLS objective. `x` is L rows by M columns,
/// `w` has L strictly positive entries, `d` is M by M.
pub fn fit_weighted_penalized_nnls(
    y: &[f64],
    x: &DMatrix<f64>,
    w: &[f64],
    d: &DMatrix<f64>,
    lambda: f64,
) -> Result<RegressionFit> {
    let (rows, cols) = (x.nrows(), x.ncols());
    if y.len() != rows || w.len() != rows || d.nrows() != cols || d.ncols() != cols {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: y {}, x {}x{}, w {}, d {}x{}",
            y.len(),
            rows,
            cols,
            w.len(),
            d.nrows(),
            d.ncols()
        )));
    }
    if !all_finite(y.iter().copied())
        || !all_finite(x.iter().copied())
        || !all_finite(w.iter().copied())
        || !all_finite(d.iter().copied())
        || !lambda.is_finite()
        || lambda < 0.0
    {
        return Err(Error::NonFinite("regression inputs"));
    }
    if w.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput("weights must be strictly positive".into()));
    }

    // Weighted centering eliminates the intercept.
    let sw: f64 = w.iter().sum();
    let y_bar = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let x_bar: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|l| w[l] * x[(l, j)]).sum::<f64>() / sw)
        .collect();

    let mut a = DMatrix::zeros(rows + cols, cols);
    let mut b = DVector::zeros(rows + cols);
    for l in 0..rows {
        let sq = w[l].sqrt();
        for j in 0..cols {
            a[(l, j)] = sq * (x[(l, j)] - x_bar[j]);
        }
        b[l] = sq * (y[l] - y_bar);
    }
    let sqrt_lambda = lambda.sqrt();
    for i in 0..cols {
        for j in 0..cols {
            a[(rows + i, j)] = sqrt_lambda * d[(i, j)];
        }
    }

    let beta = nnls(&a, &b);
    let beta0 = y_bar
        - x_bar
            .iter()
            .zip(beta.iter())
            .map(|(xb, bj)| xb * bj)
            .sum::<f64>();

    let mut objective = 0.0;
    for l in 0..rows {
        let fitted: f64 = (0..cols).map(|j| x[(l, j)] * beta[j]).sum();
        let r = y[l] - beta0 - fitted;
        objective += w[l] * r * r;
    }
    let db = d * &beta;
    objective += lambda * db.norm_squared();

    let active_set: Vec<usize> = (0..cols).filter(|&j| beta[j] > 0.0).collect();
    Ok(RegressionFit {
        beta0,
        beta: beta.iter().copied().collect(),
        objective,
        active_set,
    })
}

/// Gradient of the stated objective with respect to beta, at the optimal
/// intercept for that beta. Used for KKT verification.
pub fn objective_gradient(
    y: &[f64],
    x: &DMatrix<f64>,
    w: &[f64],
    d: &DMatrix<f64>,
    lambda: f64,
    beta0: f64,
    beta: &[f64],
) -> Vec<f64> {
    let (rows, cols) = (x.nrows(), x.ncols());
    let mut grad = vec![0.0; cols];
    for l in 0..rows {
        let fitted: f64 = (0..cols).map(|j| x[(l, j)] * beta[j]).sum();
        let r = y[l] - beta0 - fitted;
        for (j, g) in grad.iter_mut().enumerate() {
            *g -= 2.0 * w[l] * r * x[(l, j)];
        }
    }
    let beta_v = DVector::from_column_slice(beta);
    let dtd_beta = d.transpose() * (d * beta_v);
    for (j, g) in grad.iter_mut().enumerate() {
        *g += 2.0 * lambda * dtd_beta[j];
    }
    grad
}
