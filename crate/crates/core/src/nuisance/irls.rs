//! Unpenalized maximum-likelihood logistic regression by iteratively
//! reweighted least squares.

use nalgebra::{DMatrix, DVector};

use super::logit::{check_labels, LogitModel, Standardization};
use crate::domain::expit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Relative change in deviance that ends the iteration.
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-14,
        }
    }
}

fn mean_nll(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            let l = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            l - yi * e
        })
        .sum::<f64>()
        / eta.len() as f64
}

/// Newton-Raphson fit with step halving. Rank-deficient designs are solved
/// in the minimum-norm sense. A fit that hits `max_iter` (typically under
/// separation) is returned with `converged = false` and a warning.
pub fn fit_logit_mle(
    design: &DMatrix<f64>,
    labels: &[u8],
    opts: &IrlsOptions,
) -> Result<LogitModel> {
    check_labels(design, labels)?;
    let n = design.nrows();
    let p = design.ncols();
    let x = DMatrix::from_fn(
        n,
        p + 1,
        |i, j| if j == 0 { 1.0 } else { design[(i, j - 1)] },
    );
    let y = DVector::from_iterator(n, labels.iter().map(|&v| v as f64));
    let ybar = y.mean();
    let mut beta = DVector::zeros(p + 1);
    beta[0] = (ybar.clamp(1e-12, 1.0 - 1e-12) / (1.0 - ybar.clamp(1e-12, 1.0 - 1e-12))).ln();
    let mut eta = &x * &beta;
    let mut loss = mean_nll(&eta, &y);
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let prob = eta.map(expit);
        let w = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let grad = x.tr_mul(&(&y - &prob));
        let xw = DMatrix::from_fn(n, p + 1, |i, j| x[(i, j)] * w[i]);
        let hess = x.tr_mul(&xw);
        let svd = hess.svd(true, true);
        let step = svd
            .solve(&grad, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::InvalidData(format!("IRLS solve failed: {e}")))?;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand = &beta + &step * t;
            let cand_eta = &x * &cand;
            let cand_loss = mean_nll(&cand_eta, &y);
            if cand_loss <= loss + 1e-15 * loss.abs() {
                accepted = Some((cand, cand_eta, cand_loss));
                break;
            }
            t *= 0.5;
        }
        let Some((b, e, l)) = accepted else {
            converged = true;
            break;
        };
        let rel = (loss - l).abs() / (l.abs() + 0.1);
        let max_step = (&b - &beta).amax();
        beta = b;
        eta = e;
        loss = l;
        if rel < opts.tol && max_step < 1e-9 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "IRLS did not converge in {} iterations; the data may be separable",
            opts.max_iter
        ));
    }
    let prob = eta.map(expit);
    let grad = x.tr_mul(&(&prob - &y)) / n as f64;
    Ok(LogitModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        lambda: 0.0,
        standardization: Standardization::identity(p),
        converged,
        kkt_residual: grad.amax(),
        iterations,
        train_loss: loss,
        cv: None,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_closed_form_two_by_two() {
        // saturated model on one binary regressor: slope = log odds ratio
        let x = DMatrix::from_column_slice(10, 1, &[0., 0., 0., 0., 0., 1., 1., 1., 1., 1.]);
        let y = vec![1, 1, 0, 0, 0, 1, 1, 1, 0, 0];
        let m = fit_logit_mle(&x, &y, &IrlsOptions::default()).unwrap();
        assert!(m.converged);
        let expected = (3.0f64 / 2.0 / (2.0 / 3.0)).ln();
        assert!((m.coefficients[0] - expected).abs() < 1e-10);
        assert!((m.intercept - (2.0f64 / 3.0).ln()).abs() < 1e-10);
    }

    #[test]
    fn collinear_columns_do_not_fail() {
        let x = DMatrix::from_fn(40, 2, |i, _| (i % 7) as f64);
        let y: Vec<u8> = (0..40).map(|i| ((i * 3) % 5 < 2) as u8).collect();
        let m = fit_logit_mle(&x, &y, &IrlsOptions::default()).unwrap();
        assert!(m.coefficients.iter().all(|b| b.is_finite()));
        assert!((m.coefficients[0] - m.coefficients[1]).abs() < 1e-8);
    }

    #[test]
    fn separation_is_flagged() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = vec![0, 0, 0, 1, 1, 1];
        let m = fit_logit_mle(
            &x,
            &y,
            &IrlsOptions {
                max_iter: 30,
                tol: 1e-14,
            },
        )
        .unwrap();
        assert!(!m.converged);
        assert!(!m.warnings.is_empty());
    }
}
