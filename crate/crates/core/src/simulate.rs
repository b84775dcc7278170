//! Logit data-generating processes and a Monte Carlo driver comparing
//! estimators on them.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossfit::{dml_estimate, plugin_estimate, CrossfitOptions};
use crate::domain::{
    expit, ColumnKind, Covariates, Dataset, DiscreteDgp, Estimate, EstimatorLabel, Form, PointLaw,
    TruthModel,
};
use crate::error::{Error, Result};
use crate::featurize::{ColumnDirective, FeatureSpec};
use crate::nuisance::{Learner, LearnerConfig, LearnerKind};

/// Bounds every implied conditional probability must respect.
pub const PROB_FLOOR: f64 = 1e-4;

/// Settings of a [`LogitDgp`]. Coefficients act on centered age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitDgpConfig {
    pub age_lo: f64,
    pub age_hi: f64,
    pub age_center: f64,
    /// `P(T=1|age) = G(a0 + a1 age + a2 age^2)`
    pub alpha: [f64; 3],
    /// `P(Y=1|T,age) = G(b0 + b1 T + b2 age + b3 age^2)`
    pub beta: [f64; 4],
    /// Levels of a categorical column unrelated to `(Y, T)`; 0 omits it.
    pub nuisance_levels: usize,
    /// Level frequencies; uniform when absent.
    pub level_probs: Option<Vec<f64>>,
}

impl Default for LogitDgpConfig {
    fn default() -> Self {
        Self {
            age_lo: 25.0,
            age_hi: 65.0,
            age_center: 45.0,
            alpha: [-0.4, 0.015, -0.0002],
            beta: [-3.0, 0.7, 0.04, -0.0004],
            nuisance_levels: 20,
            level_probs: None,
        }
    }
}

/// Age uniform on `[age_lo, age_hi]`, logit exposure and outcome models, and
/// an optional independent categorical column. The true average log odds
/// ratio is `beta[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDgp {
    config: LogitDgpConfig,
    level_probs: Vec<f64>,
}

impl LogitDgp {
    pub fn new(config: LogitDgpConfig) -> Result<Self> {
        let c = &config;
        if !(c.age_lo.is_finite() && c.age_hi.is_finite() && c.age_lo < c.age_hi) {
            return Err(Error::Config(format!(
                "age range [{}, {}] is empty",
                c.age_lo, c.age_hi
            )));
        }
        if !c.age_center.is_finite() || c.alpha.iter().chain(&c.beta).any(|v| !v.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        let level_probs = match &c.level_probs {
            Some(p) => {
                let s: f64 = p.iter().sum();
                if p.len() != c.nuisance_levels
                    || p.iter().any(|&v| !(v > 0.0))
                    || (s - 1.0).abs() > 1e-9
                {
                    return Err(Error::Config(format!(
                        "level_probs must hold {} positive values summing to 1",
                        c.nuisance_levels
                    )));
                }
                p.clone()
            }
            None => vec![1.0 / c.nuisance_levels.max(1) as f64; c.nuisance_levels],
        };
        let dgp = Self {
            config,
            level_probs,
        };
        // grid scan of the implied probabilities
        for k in 0..=1000 {
            let age =
                dgp.config.age_lo + (dgp.config.age_hi - dgp.config.age_lo) * k as f64 / 1000.0;
            let [p0, p1, w] = dgp.law_at(age).nuisance(Form::Prospective);
            for (name, v) in [("P(Y=1|T=0)", p0), ("P(Y=1|T=1)", p1), ("P(T=1)", w)] {
                if !(PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&v) {
                    return Err(Error::Config(format!(
                        "{name} = {v:.3e} at age {age} is outside [{PROB_FLOOR}, {}]",
                        1.0 - PROB_FLOOR
                    )));
                }
            }
        }
        Ok(dgp)
    }

    pub fn config(&self) -> &LogitDgpConfig {
        &self.config
    }

    /// The true average log odds ratio.
    pub fn theta0(&self) -> f64 {
        self.config.beta[1]
    }

    pub fn propensity(&self, age: f64) -> f64 {
        let [a0, a1, a2] = self.config.alpha;
        let z = age - self.config.age_center;
        expit(a0 + a1 * z + a2 * z * z)
    }

    pub fn outcome_prob(&self, t: u8, age: f64) -> f64 {
        let [b0, b1, b2, b3] = self.config.beta;
        let z = age - self.config.age_center;
        expit(b0 + b1 * t as f64 + b2 * z + b3 * z * z)
    }

    /// Joint table of `(Y, T)` at one age.
    pub fn law_at(&self, age: f64) -> PointLaw {
        let w = self.propensity(age);
        let p0 = self.outcome_prob(0, age);
        let p1 = self.outcome_prob(1, age);
        PointLaw {
            cells: [
                [(1.0 - w) * (1.0 - p0), w * (1.0 - p1)],
                [(1.0 - w) * p0, w * p1],
            ],
        }
    }

    /// `E[g(age)]` under the uniform age law by composite Simpson's rule on
    /// 2000 panels.
    pub fn expect_over_age(&self, g: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = (self.config.age_lo, self.config.age_hi);
        let panels = 2000;
        let h = (hi - lo) / panels as f64;
        let mut s = g(lo) + g(hi);
        for k in 1..panels {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(lo + k as f64 * h);
        }
        s * h / 3.0 / (hi - lo)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        let mut names = vec!["age".to_string()];
        if self.config.nuisance_levels > 0 {
            names.push("industry".to_string());
        }
        names
    }

    /// The over-specified design: a cubic spline of age with 17 inner knots
    /// and dummies for every non-reference level of the nuisance column.
    pub fn default_features(&self) -> FeatureSpec {
        let mut cols = vec![ColumnDirective::cubic_spline(17)];
        if self.config.nuisance_levels > 0 {
            cols.push(ColumnDirective::Onehot { drop_first: true });
        }
        FeatureSpec::new(cols)
    }

    /// Law with `bins` equally likely ages at the midpoints of equal-width
    /// bins. The nuisance column is dropped since it carries no signal.
    pub fn discretize(&self, bins: usize) -> Result<DiscreteDgp> {
        if bins == 0 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        let (lo, hi) = (self.config.age_lo, self.config.age_hi);
        let ages: Vec<f64> = (0..bins)
            .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / bins as f64)
            .collect();
        let laws: Vec<PointLaw> = ages.iter().map(|&a| self.law_at(a)).collect();
        let min_cell = laws
            .iter()
            .flat_map(|l| l.cells.iter().flatten().copied())
            .fold(f64::INFINITY, f64::min);
        DiscreteDgp::new(
            ages.into_iter().map(|a| vec![a]).collect(),
            vec![1.0 / bins as f64; bins],
            laws,
            (0.5 * min_cell).min(0.2),
        )
    }
}

impl TruthModel for LogitDgp {
    fn nuisance_at(&self, form: Form, row: &[f64]) -> Result<[f64; 3]> {
        let age = *row
            .first()
            .ok_or_else(|| Error::InvalidData("row has no age column".into()))?;
        Ok(self.law_at(age).nuisance(form))
    }
}

/// i.i.d. sample; identical for identical `(dgp, n, seed)`.
pub fn sample(dgp: &LogitDgp, n: usize, seed: u64) -> Result<Dataset> {
    sample_with(dgp, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_with<R: Rng + ?Sized>(dgp: &LogitDgp, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let c = &dgp.config;
    let levels = if c.nuisance_levels > 0 {
        Some(WeightedIndex::new(&dgp.level_probs).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut age = Vec::with_capacity(n);
    let mut industry = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(c.age_lo..=c.age_hi);
        if let Some(d) = &levels {
            industry.push(d.sample(rng) as f64);
        }
        let ti = u8::from(rng.random::<f64>() < dgp.propensity(a));
        let yi = u8::from(rng.random::<f64>() < dgp.outcome_prob(ti, a));
        age.push(a);
        t.push(ti);
        y.push(yi);
    }
    let (kinds, columns) = if levels.is_some() {
        (
            vec![ColumnKind::Numeric, ColumnKind::Categorical],
            vec![age, industry],
        )
    } else {
        (vec![ColumnKind::Numeric], vec![age])
    };
    Dataset::new(
        y,
        t,
        Covariates::new(dgp.covariate_names(), kinds, columns)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Dml,
    Plugin,
}

/// One estimator row of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub form: Form,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Feature directives; the over-specified default when absent.
    #[serde(default)]
    pub features: Option<FeatureSpec>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, form: Form, learner: LearnerConfig) -> Self {
        Self {
            kind,
            form,
            learner,
            features: None,
        }
    }

    pub fn label(&self) -> EstimatorLabel {
        match (self.kind, self.form) {
            (EstimatorKind::Dml, Form::Prospective) => EstimatorLabel::ProspectiveDml,
            (EstimatorKind::Dml, Form::Retrospective) => EstimatorLabel::RetrospectiveDml,
            (EstimatorKind::Plugin, Form::Prospective) => EstimatorLabel::ProspectivePlugin,
            (EstimatorKind::Plugin, Form::Retrospective) => EstimatorLabel::RetrospectivePlugin,
        }
    }

    /// Prospective and retrospective DML followed by the two plug-ins.
    pub fn defaults() -> Vec<Self> {
        let l = LearnerConfig::default();
        vec![
            Self::new(EstimatorKind::Dml, Form::Prospective, l.clone()),
            Self::new(EstimatorKind::Dml, Form::Retrospective, l.clone()),
            Self::new(EstimatorKind::Plugin, Form::Prospective, l.clone()),
            Self::new(EstimatorKind::Plugin, Form::Retrospective, l),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub dgp: LogitDgpConfig,
    pub n: usize,
    pub reps: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub estimators: Vec<EstimatorConfig>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            dgp: LogitDgpConfig::default(),
            n: 5000,
            reps: 500,
            k: 5,
            alpha: 0.10,
            seed: 0,
            estimators: EstimatorConfig::defaults(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n < self.k || self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= K <= n, got K = {}, n = {}",
                self.k, self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} must lie in (0, 0.5)",
                self.alpha
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators configured".into()));
        }
        for e in &self.estimators {
            e.learner.validate()?;
        }
        Ok(())
    }
}

/// Monte Carlo summary of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorLabel,
    pub learner: LearnerKind,
    pub reps: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_estimate: Option<f64>,
    pub mean_bias: Option<f64>,
    /// Sample standard deviation of the estimates; absent below two
    /// successes.
    pub sd: Option<f64>,
    pub mean_se: Option<f64>,
    pub se_sd_ratio: Option<f64>,
    /// Share of two-sided intervals containing the truth; absent for
    /// estimators without intervals.
    pub coverage: Option<f64>,
    /// Up to five distinct failure messages.
    pub failure_messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub theta0: f64,
    pub n: usize,
    pub reps: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
    /// False when any estimator failed in more than 10% of replications.
    pub valid: bool,
}

type RepOutcome = std::result::Result<Estimate, String>;

fn run_estimator(
    cfg: &EstimatorConfig,
    dgp: &LogitDgp,
    data: &Dataset,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<Estimate> {
    let truth: Arc<dyn TruthModel> = Arc::new(dgp.clone());
    let learner = Learner::from_config(cfg.learner.clone(), Some(truth))?;
    let spec = cfg
        .features
        .clone()
        .unwrap_or_else(|| dgp.default_features());
    match cfg.kind {
        EstimatorKind::Dml => dml_estimate(
            data,
            &spec,
            &learner,
            cfg.form,
            &CrossfitOptions { k, seed, alpha },
        ),
        EstimatorKind::Plugin => plugin_estimate(data, &spec, &learner, cfg.form, alpha, seed),
    }
}

fn one_rep(cfg: &McConfig, dgp: &LogitDgp, rep: usize) -> Result<Vec<RepOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let fold_seed: u64 = rng.random();
    let data = sample_with(dgp, cfg.n, &mut rng)?;
    Ok(cfg
        .estimators
        .iter()
        .map(|e| {
            run_estimator(e, dgp, &data, cfg.k, cfg.alpha, fold_seed).map_err(|err| err.to_string())
        })
        .collect())
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(cfg: &EstimatorConfig, outcomes: &[&RepOutcome], theta0: f64) -> EstimatorSummary {
    let ok: Vec<&Estimate> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let mut failure_messages: Vec<String> = Vec::new();
    for o in outcomes {
        if let Err(m) = o {
            if failure_messages.len() < 5 && !failure_messages.contains(m) {
                failure_messages.push(m.clone());
            }
        }
    }
    let thetas: Vec<f64> = ok.iter().map(|e| e.theta_hat).collect();
    let mean_estimate = mean(&thetas);
    let sd = (thetas.len() >= 2).then(|| {
        let m = mean_estimate.expect("non-empty");
        (thetas.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (thetas.len() - 1) as f64).sqrt()
    });
    let ses: Vec<f64> = ok.iter().filter_map(|e| e.std_error()).collect();
    let mean_se = if ses.len() == ok.len() {
        mean(&ses)
    } else {
        None
    };
    let covers: Vec<bool> = ok.iter().filter_map(|e| e.covers(theta0)).collect();
    let coverage = (!covers.is_empty() && covers.len() == ok.len())
        .then(|| covers.iter().filter(|&&c| c).count() as f64 / covers.len() as f64);
    EstimatorSummary {
        estimator: cfg.label(),
        learner: cfg.learner.learner,
        reps: outcomes.len(),
        successes: ok.len(),
        failures: outcomes.len() - ok.len(),
        mean_estimate,
        mean_bias: mean_estimate.map(|m| m - theta0),
        sd,
        mean_se,
        se_sd_ratio: match (mean_se, sd) {
            (Some(se), Some(sd)) if sd > 0.0 => Some(se / sd),
            _ => None,
        },
        coverage,
        failure_messages,
    }
}

/// Draws `reps` fresh samples and runs every configured estimator on each.
/// Replication `r` draws from stream `r` of the seed, so the report does
/// not depend on the number of worker threads. Estimator errors are
/// counted as failures and excluded from the moments.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let dgp = LogitDgp::new(cfg.dgp.clone())?;
    let theta0 = dgp.theta0();
    let reps: Vec<Vec<RepOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| one_rep(cfg, &dgp, r))
        .collect::<Result<_>>()?;
    let estimators: Vec<EstimatorSummary> = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let col: Vec<&RepOutcome> = reps.iter().map(|r| &r[j]).collect();
            summarize(e, &col, theta0)
        })
        .collect();
    let valid = estimators.iter().all(|s| s.failures * 10 <= s.reps);
    Ok(McReport {
        theta0,
        n: cfg.n,
        reps: cfg.reps,
        k: cfg.k,
        alpha: cfg.alpha,
        seed: cfg.seed,
        estimators,
        valid,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

impl McReport {
    /// Aligned text table, one row per estimator.
    pub fn table(&self) -> String {
        let cov = format!("Coverage ({:.0}%)", 100.0 * (1.0 - self.alpha));
        let head = [
            "Estimator",
            "Mean Bias",
            "Standard Deviation",
            "SE/SD",
            cov.as_str(),
            "Failures",
        ];
        let rows: Vec<[String; 6]> = self
            .estimators
            .iter()
            .map(|s| {
                [
                    s.estimator.title().to_string(),
                    cell(s.mean_bias),
                    cell(s.sd),
                    cell(s.se_sd_ratio),
                    cell(s.coverage),
                    format!("{}/{}", s.failures, s.reps),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = head.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "theta0 = {}, n = {}, reps = {}, K = {}",
            self.theta0, self.n, self.reps, self.k
        );
        let line = |cells: &[&str], out: &mut String| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "  {c:>w$}");
                }
            }
            let _ = writeln!(out, "{}", s.trim_end());
        };
        line(&head, &mut out);
        let rule: String = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
        let _ = writeln!(out, "{rule}");
        for r in &rows {
            let refs: Vec<&str> = r.iter().map(String::as_str).collect();
            line(&refs, &mut out);
        }
        if !self.valid {
            let _ = writeln!(
                out,
                "INVALID: an estimator failed in more than 10% of replications"
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn independent() -> LogitDgp {
        LogitDgp::new(LogitDgpConfig {
            alpha: [0.0; 3],
            beta: [0.0; 4],
            nuisance_levels: 0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_dgp_is_valid_and_rare_outcome() {
        let d = LogitDgp::new(LogitDgpConfig::default()).unwrap();
        assert_eq!(d.theta0(), 0.7);
        let py = d.expect_over_age(|a| {
            let w = d.propensity(a);
            w * d.outcome_prob(1, a) + (1.0 - w) * d.outcome_prob(0, a)
        });
        assert!((0.03..0.12).contains(&py), "P(Y=1) = {py}");
    }

    #[test]
    fn extreme_coefficients_are_rejected() {
        let cfg = LogitDgpConfig {
            beta: [-12.0, 0.7, 0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(LogitDgp::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn independence_cells_are_quarter() {
        let n = 200_000;
        let d = sample(&independent(), n, 4).unwrap();
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        for (yv, tv) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let c = (0..n).filter(|&i| d.y()[i] == yv && d.t()[i] == tv).count();
            assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let dgp = LogitDgp::new(LogitDgpConfig::default()).unwrap();
        let a = sample(&dgp, 500, 9).unwrap();
        let b = sample(&dgp, 500, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample(&dgp, 500, 10).unwrap());
        assert_eq!(a.x().n_cols(), 2);
    }

    #[test]
    fn discretized_law_keeps_log_odds_ratio() {
        let dgp = LogitDgp::new(LogitDgpConfig::default()).unwrap();
        let d = dgp.discretize(40).unwrap();
        assert_eq!(d.len(), 40);
        for l in d.laws() {
            assert!((l.log_or() - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn single_rep_has_no_sd() {
        let cfg = McConfig {
            n: 400,
            reps: 1,
            estimators: vec![EstimatorConfig::new(
                EstimatorKind::Dml,
                Form::Prospective,
                LearnerConfig {
                    learner: LearnerKind::Oracle,
                    ..Default::default()
                },
            )],
            ..Default::default()
        };
        let r = run_mc(&cfg).unwrap();
        let s = &r.estimators[0];
        assert_eq!(s.sd, None);
        assert_eq!(s.successes, 1);
        assert!((s.mean_bias.unwrap() - (s.mean_estimate.unwrap() - 0.7)).abs() < 1e-15);
        assert!(r.table().contains("Prospective DML"));
    }

    #[test]
    fn zero_reps_is_rejected() {
        let cfg = McConfig {
            reps: 0,
            ..Default::default()
        };
        assert!(matches!(run_mc(&cfg), Err(Error::InvalidArgument(_))));
    }
}
