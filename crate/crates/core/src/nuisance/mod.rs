//! Probability learners for the nuisance triple.

mod cv;
pub(crate) mod irls;
mod logit;

pub use cv::{cv_fit_logit_l1, CvCurve, CvPlan};
pub use irls::{fit_logit_mle, IrlsOptions};
pub use logit::{
    fit_logit_l1, fit_logit_l1_path, lambda_max, lambda_path, predict_proba, FitOptions,
    LogitModel, PathFit, Standardization,
};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Covariates, Dataset, Form, NuisanceTriple, TruthModel};
use crate::error::{Error, Result};
use crate::featurize::{FeatureSpec, FittedFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// ℓ1-penalized logistic regression with a cross-validated penalty.
    L1Logit,
    /// Unpenalized logistic regression.
    MleLogit,
    /// Returns the true conditional probabilities of a known law.
    Oracle,
}

/// Serializable learner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub learner: LearnerKind,
    pub epsilon_trim: f64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            learner: LearnerKind::L1Logit,
            epsilon_trim: 1e-3,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            cv_folds: 10,
            tol: 1e-7,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_trim > 0.0 && self.epsilon_trim < 0.5) {
            return Err(Error::Config(format!(
                "epsilon_trim = {} must lie in (0, 0.5)",
                self.epsilon_trim
            )));
        }
        if self.learner == LearnerKind::L1Logit {
            if self.cv_folds < 2 || self.n_lambda == 0 {
                return Err(Error::Config(
                    "l1_logit needs cv_folds >= 2 and n_lambda >= 1".into(),
                ));
            }
            if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
                return Err(Error::Config("lambda_min_ratio must lie in (0, 1)".into()));
            }
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(
                "tol must be positive and max_iter at least 1".into(),
            ));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol_kkt: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// A learner ready to fit: the configuration plus, for the oracle learner,
/// the true law it reports.
#[derive(Clone)]
pub struct Learner {
    config: LearnerConfig,
    truth: Option<Arc<dyn TruthModel>>,
}

impl fmt::Debug for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Learner")
            .field("config", &self.config)
            .field("truth", &self.truth.as_ref().map(|_| "<truth>"))
            .finish()
    }
}

impl Learner {
    /// A data-driven learner. The oracle kind needs [`Learner::oracle`].
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        if config.learner == LearnerKind::Oracle {
            return Err(Error::Config(
                "the oracle learner needs a known data-generating process".into(),
            ));
        }
        Ok(Self {
            config,
            truth: None,
        })
    }

    pub fn oracle(truth: Arc<dyn TruthModel>, epsilon_trim: f64) -> Result<Self> {
        let config = LearnerConfig {
            learner: LearnerKind::Oracle,
            epsilon_trim,
            ..LearnerConfig::default()
        };
        config.validate()?;
        Ok(Self {
            config,
            truth: Some(truth),
        })
    }

    /// Builds from a config, attaching `truth` when the config asks for the
    /// oracle learner.
    pub fn from_config(config: LearnerConfig, truth: Option<Arc<dyn TruthModel>>) -> Result<Self> {
        match (config.learner, truth) {
            (LearnerKind::Oracle, Some(t)) => {
                config.validate()?;
                Ok(Self {
                    config,
                    truth: Some(t),
                })
            }
            _ => Self::new(config),
        }
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_trim
    }

    fn fit_one(
        &self,
        design: &nalgebra::DMatrix<f64>,
        labels: &[u8],
        seed: u64,
    ) -> Result<LogitModel> {
        match self.config.learner {
            LearnerKind::L1Logit => {
                let plan = CvPlan::from_data(
                    design,
                    labels,
                    self.config.cv_folds,
                    self.config.n_lambda,
                    self.config.lambda_min_ratio,
                )?;
                cv_fit_logit_l1(
                    design,
                    labels,
                    &plan,
                    seed,
                    &self.config.fit_options(),
                    self.epsilon(),
                )
            }
            LearnerKind::MleLogit => fit_logit_mle(design, labels, &IrlsOptions::default()),
            LearnerKind::Oracle => unreachable!("oracle learner does not fit models"),
        }
    }
}

/// Mixes a base seed with a small tag into an independent-looking seed.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Three fitted predictors that evaluate a [`NuisanceTriple`] on any rows.
#[derive(Debug, Clone)]
pub struct FittedNuisance {
    kind: Form,
    epsilon: f64,
    inner: Fitted,
}

#[derive(Debug, Clone)]
enum Fitted {
    Models {
        features: FittedFeatures,
        f0: LogitModel,
        f1: LogitModel,
        w: LogitModel,
    },
    Oracle(Arc<dyn TruthModel>),
}

impl fmt::Debug for dyn TruthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TruthModel")
    }
}

impl FittedNuisance {
    pub fn kind(&self) -> Form {
        self.kind
    }

    /// The three fitted models `(f0, f1, w)`; `None` for the oracle learner.
    pub fn models(&self) -> Option<(&LogitModel, &LogitModel, &LogitModel)> {
        match &self.inner {
            Fitted::Models { f0, f1, w, .. } => Some((f0, f1, w)),
            Fitted::Oracle(_) => None,
        }
    }

    pub fn evaluate(&self, x: &Covariates) -> Result<NuisanceTriple> {
        let eps = self.epsilon;
        let clip = |p: f64| p.clamp(eps, 1.0 - eps);
        let (f0, f1, w) = match &self.inner {
            Fitted::Models {
                features,
                f0,
                f1,
                w,
            } => {
                let design = features.transform(x)?;
                (
                    predict_proba(f0, &design.matrix, eps),
                    predict_proba(f1, &design.matrix, eps),
                    predict_proba(w, &design.matrix, eps),
                )
            }
            Fitted::Oracle(truth) => {
                let n = x.n_rows();
                let mut f0 = Vec::with_capacity(n);
                let mut f1 = Vec::with_capacity(n);
                let mut w = Vec::with_capacity(n);
                for i in 0..n {
                    let [a, b, c] = truth.nuisance_at(self.kind, &x.row(i))?;
                    f0.push(clip(a));
                    f1.push(clip(b));
                    w.push(clip(c));
                }
                (f0, f1, w)
            }
        };
        NuisanceTriple::new(self.kind, f0, f1, w, eps)
    }
}

/// Fits the three nuisance functions of `kind` on `train`.
///
/// Prospective: `P(Y=1|T=0,x)` on rows with `t = 0`, `P(Y=1|T=1,x)` on rows
/// with `t = 1`, `P(T=1|x)` on all rows. Retrospective swaps `y` and `t`.
/// Features (knots, levels) are fitted on all of `train`.
pub fn fit_nuisance_triple(
    train: &Dataset,
    kind: Form,
    learner: &Learner,
    features: &FeatureSpec,
    seed: u64,
) -> Result<FittedNuisance> {
    let (label, cond) = kind.roles(train);
    let cond_name = match kind {
        Form::Prospective => "t",
        Form::Retrospective => "y",
    };
    let rows0: Vec<usize> = (0..train.len()).filter(|&i| cond[i] == 0).collect();
    let rows1: Vec<usize> = (0..train.len()).filter(|&i| cond[i] == 1).collect();
    for (rows, v) in [(&rows0, 0), (&rows1, 1)] {
        if rows.len() < 2 {
            let count = if rows.is_empty() {
                "no rows"
            } else {
                "only one row"
            };
            return Err(Error::FoldDegenerate {
                fold: None,
                stratum: format!("{count} with {cond_name} = {v}"),
            });
        }
    }

    let inner = match (&learner.truth, learner.config.learner) {
        (Some(truth), LearnerKind::Oracle) => Fitted::Oracle(Arc::clone(truth)),
        _ => {
            let fitted = FittedFeatures::fit(features, train.x())?;
            let design = fitted.transform(train.x())?.matrix;
            let sub = |rows: &[usize]| {
                (
                    design.select_rows(rows.iter()),
                    rows.iter().map(|&i| label[i]).collect::<Vec<u8>>(),
                )
            };
            let (x0, l0) = sub(&rows0);
            let (x1, l1) = sub(&rows1);
            let f0 = learner.fit_one(&x0, &l0, derive_seed(seed, 0))?;
            let f1 = learner.fit_one(&x1, &l1, derive_seed(seed, 1))?;
            let w = learner.fit_one(&design, cond, derive_seed(seed, 2))?;
            Fitted::Models {
                features: fitted,
                f0,
                f1,
                w,
            }
        }
    };
    Ok(FittedNuisance {
        kind,
        epsilon: learner.epsilon(),
        inner,
    })
}
