//! Cross-validated choice of the ℓ1 penalty (deviance-minimizing λ).

use nalgebra::DMatrix;
use serde::Serialize;

use super::logit::{fit_path_on, lambda_path, predict_proba, FitOptions, LogitModel, Problem};
use crate::crossfit::make_folds;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub n_folds: usize,
    pub lambda_path: Vec<f64>,
}

impl CvPlan {
    pub fn new(n_folds: usize, lambda_path: Vec<f64>) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 CV folds, got {n_folds}"
            )));
        }
        if lambda_path.is_empty()
            || lambda_path.iter().any(|&l| !(l > 0.0 && l.is_finite()))
            || lambda_path.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::InvalidArgument(
                "lambda path must be non-empty, positive and strictly decreasing".into(),
            ));
        }
        Ok(Self {
            n_folds,
            lambda_path,
        })
    }

    /// Log-spaced path from the data's `lambda_max` down to
    /// `min_ratio * lambda_max`.
    pub fn from_data(
        design: &DMatrix<f64>,
        labels: &[u8],
        n_folds: usize,
        n_lambda: usize,
        min_ratio: f64,
    ) -> Result<Self> {
        if n_lambda == 0 || !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "n_lambda = {n_lambda} must be positive and lambda_min_ratio = {min_ratio} in (0, 1)"
            )));
        }
        let lmax = Problem::new(design, labels)?.lambda_max();
        // single-class or constant designs: any positive path is equivalent
        let lmax = if lmax > 0.0 { lmax } else { 1.0 };
        Self::new(n_folds, lambda_path(lmax, n_lambda, min_ratio))
    }
}

/// Held-out deviance along the λ path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    /// Mean held-out negative log-likelihood over all rows.
    pub mean_deviance: Vec<f64>,
    pub selected: usize,
}

fn held_out_nll(model: &LogitModel, rows: &DMatrix<f64>, labels: &[u8], epsilon: f64) -> f64 {
    predict_proba(model, rows, epsilon)
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum()
}

fn select_rows(design: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    design.select_rows(rows.iter())
}

/// Fits the path on each CV training split, picks the λ with the smallest
/// pooled held-out deviance and refits on all rows.
pub fn cv_fit_logit_l1(
    design: &DMatrix<f64>,
    labels: &[u8],
    plan: &CvPlan,
    seed: u64,
    opts: &FitOptions,
    epsilon: f64,
) -> Result<LogitModel> {
    let n = design.nrows();
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "{n} rows are too few for cross-validation"
        )));
    }
    let full = Problem::new(design, labels)?;
    let mut warnings = Vec::new();
    // keep at least two rows per held-out fold
    let n_folds = plan.n_folds.min(n / 2);
    if n_folds < plan.n_folds {
        warnings.push(format!(
            "{n} rows: cross-validation uses {n_folds} folds instead of {}",
            plan.n_folds
        ));
    }
    let folds = make_folds(n, n_folds, seed)?;

    let mut totals = vec![0.0; plan.lambda_path.len()];
    let mut usable = plan.lambda_path.len();
    for k in 0..n_folds {
        let (train, test) = folds.split(k);
        let train_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
        if train_labels.iter().all(|&v| v == train_labels[0]) {
            warnings.push(format!(
                "CV fold {k}: training labels are all {}; held-out deviance uses clipped probabilities",
                train_labels[0]
            ));
        }
        let problem = Problem::new(&select_rows(design, &train), &train_labels)?;
        let test_x = select_rows(design, &test);
        let path = fit_path_on(&problem, &plan.lambda_path, opts)?;
        if let Some(why) = path.stopped_early {
            if path.models.len() < usable {
                warnings.push(format!("CV fold {k}: path truncated ({why})"));
            }
        }
        usable = usable.min(path.models.len());
        for (tot, m) in totals.iter_mut().zip(&path.models) {
            *tot += held_out_nll(m, &test_x, &test_labels, epsilon);
        }
    }
    let mean_deviance: Vec<f64> = totals[..usable].iter().map(|t| t / n as f64).collect();
    let selected =
        mean_deviance.iter().enumerate().fold(
            0,
            |best, (k, &d)| if d < mean_deviance[best] { k } else { best },
        );

    let refit = fit_path_on(&full, &plan.lambda_path[..=selected], opts)?;
    if refit.models.len() <= selected {
        warnings.push(format!(
            "full-data path stopped at index {} before the selected index {selected}",
            refit.models.len() - 1
        ));
    }
    let mut model = refit
        .models
        .into_iter()
        .last()
        .expect("path has at least one model");
    model.warnings.extend(warnings);
    model.cv = Some(CvCurve {
        lambdas: plan.lambda_path[..usable].to_vec(),
        mean_deviance,
        selected,
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::expit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, p: usize, signal: f64, seed: u64) -> (DMatrix<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| (rng.random::<f64>() < expit(signal * x[(i, 0)])) as u8)
            .collect();
        (x, y)
    }

    #[test]
    fn null_signal_is_sparse() {
        // the deviance minimizer occasionally keeps a few noise columns, so
        // the sparsity target is checked across seeded draws
        let sparse = (0..20)
            .filter(|&seed| {
                let (x, y) = data(500, 20, 0.0, seed);
                let plan = CvPlan::from_data(&x, &y, 10, 100, 1e-4).unwrap();
                let m = cv_fit_logit_l1(&x, &y, &plan, 3, &FitOptions::default(), 1e-3).unwrap();
                m.coefficients.iter().filter(|&&b| b == 0.0).count() >= 18
            })
            .count();
        assert!(
            sparse >= 14,
            "{sparse} of 20 null fits zeroed at least 90% of slopes"
        );
    }

    #[test]
    fn strong_signal_is_retained() {
        let (x, y) = data(500, 20, 1.5, 12);
        let plan = CvPlan::from_data(&x, &y, 10, 100, 1e-4).unwrap();
        let m = cv_fit_logit_l1(&x, &y, &plan, 3, &FitOptions::default(), 1e-3).unwrap();
        assert!(m.coefficients[0] > 0.5);
        let cv = m.cv.as_ref().unwrap();
        assert!(cv.selected > 0);
        assert!(m.kkt_residual < 1e-7);
    }

    #[test]
    fn seeded_selection_is_deterministic() {
        let (x, y) = data(300, 8, 0.8, 13);
        let plan = CvPlan::from_data(&x, &y, 5, 50, 1e-3).unwrap();
        let a = cv_fit_logit_l1(&x, &y, &plan, 99, &FitOptions::default(), 1e-3).unwrap();
        let b = cv_fit_logit_l1(&x, &y, &plan, 99, &FitOptions::default(), 1e-3).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn plan_validation() {
        assert!(CvPlan::new(1, vec![1.0]).is_err());
        assert!(CvPlan::new(5, vec![1.0, 1.0]).is_err());
        assert!(CvPlan::new(5, vec![1.0, 0.5]).is_ok());
        let plan = CvPlan::new(5, vec![1.0, 0.5]).unwrap();
        let (x, y) = data(3, 2, 0.0, 1);
        assert!(cv_fit_logit_l1(&x, &y, &plan, 0, &FitOptions::default(), 1e-3).is_err());
        // too few rows for 5 folds: falls back to 4 with a warning
        let (x, y) = data(8, 2, 0.0, 1);
        let m = cv_fit_logit_l1(&x, &y, &plan, 0, &FitOptions::default(), 1e-3).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("uses 4 folds")));
    }
}
