use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Which estimator produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorLabel {
    ProspectiveDml,
    RetrospectiveDml,
    ProspectivePlugin,
    RetrospectivePlugin,
    /// Cross-fitted average of the log odds ratio among exposed records.
    SubpopT1,
    /// Cross-fitted average of the log odds ratio among records with `y = 1`.
    SubpopY1,
}

impl EstimatorLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorLabel::ProspectiveDml => "prospective_dml",
            EstimatorLabel::RetrospectiveDml => "retrospective_dml",
            EstimatorLabel::ProspectivePlugin => "prospective_plugin",
            EstimatorLabel::RetrospectivePlugin => "retrospective_plugin",
            EstimatorLabel::SubpopT1 => "subpop_t1",
            EstimatorLabel::SubpopY1 => "subpop_y1",
        }
    }

    /// Human-readable row label for summary tables.
    pub fn title(self) -> &'static str {
        match self {
            EstimatorLabel::ProspectiveDml => "Prospective DML",
            EstimatorLabel::RetrospectiveDml => "Retrospective DML",
            EstimatorLabel::ProspectivePlugin => "Prospective plug-in",
            EstimatorLabel::RetrospectivePlugin => "Retrospective plug-in",
            EstimatorLabel::SubpopT1 => "Exposed subpopulation",
            EstimatorLabel::SubpopY1 => "Outcome subpopulation",
        }
    }
}

/// Point estimate on the log odds ratio scale with optional inference.
///
/// `sigma_hat` is on the per-observation scale; the standard error is
/// `sigma_hat / sqrt(n)`. Estimators without a variance theory (plug-in,
/// subpopulation averages) carry `None` for every inferential field.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta_hat: f64,
    pub sigma_hat: Option<f64>,
    pub n: usize,
    pub form: EstimatorLabel,
    pub alpha: f64,
    pub ci_two_sided: Option<(f64, f64)>,
    pub ci_exp: Option<(f64, f64)>,
    pub upper_one_sided: Option<f64>,
    pub fold_means: Vec<f64>,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must lie in (0, 0.5)"
        )))
    }
}

impl Estimate {
    pub fn with_inference(
        theta_hat: f64,
        sigma_hat: f64,
        n: usize,
        form: EstimatorLabel,
        alpha: f64,
        fold_means: Vec<f64>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if n == 0 || !(sigma_hat >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1 and sigma >= 0 (n = {n}, sigma = {sigma_hat})"
            )));
        }
        let se = sigma_hat / (n as f64).sqrt();
        let z2 = normal_quantile(1.0 - alpha / 2.0);
        let z1 = normal_quantile(1.0 - alpha);
        let ci = (theta_hat - z2 * se, theta_hat + z2 * se);
        Ok(Self {
            theta_hat,
            sigma_hat: Some(sigma_hat),
            n,
            form,
            alpha,
            ci_two_sided: Some(ci),
            ci_exp: Some((ci.0.exp(), ci.1.exp())),
            upper_one_sided: Some(theta_hat + z1 * se),
            fold_means,
        })
    }

    pub fn point_only(
        theta_hat: f64,
        n: usize,
        form: EstimatorLabel,
        alpha: f64,
        fold_means: Vec<f64>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            theta_hat,
            sigma_hat: None,
            n,
            form,
            alpha,
            ci_two_sided: None,
            ci_exp: None,
            upper_one_sided: None,
            fold_means,
        })
    }

    pub fn std_error(&self) -> Option<f64> {
        self.sigma_hat.map(|s| s / (self.n as f64).sqrt())
    }

    pub fn covers(&self, value: f64) -> Option<bool> {
        self.ci_two_sided.map(|(lo, hi)| lo <= value && value <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intervals_follow_normal_quantiles() {
        let e =
            Estimate::with_inference(0.7, 10.0, 400, EstimatorLabel::ProspectiveDml, 0.05, vec![])
                .unwrap();
        let (lo, hi) = e.ci_two_sided.unwrap();
        assert_abs_diff_eq!(lo, 0.7 - 1.959964 * 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 0.7 + 1.959964 * 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(
            e.upper_one_sided.unwrap(),
            0.7 + 1.644854 * 0.5,
            epsilon = 1e-6
        );
        let (elo, ehi) = e.ci_exp.unwrap();
        assert_eq!(elo, lo.exp());
        assert_eq!(ehi, hi.exp());
        assert_eq!(e.covers(0.7), Some(true));
        assert_eq!(e.covers(3.0), Some(false));
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(Estimate::with_inference(
            0.0,
            1.0,
            10,
            EstimatorLabel::ProspectiveDml,
            0.5,
            vec![]
        )
        .is_err());
        assert!(
            Estimate::point_only(0.0, 10, EstimatorLabel::ProspectivePlugin, 0.0, vec![]).is_err()
        );
    }

    #[test]
    fn point_only_has_no_inference() {
        let e =
            Estimate::point_only(0.3, 10, EstimatorLabel::ProspectivePlugin, 0.05, vec![]).unwrap();
        assert!(e.sigma_hat.is_none() && e.ci_two_sided.is_none() && e.covers(0.3).is_none());
    }
}
