//! K-fold cross-fitting and the debiased estimators built on it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    log_or_prospective, psi, Dataset, Estimate, EstimatorLabel, Form, NuisanceTriple,
};
use crate::error::{Error, Result};
use crate::featurize::FeatureSpec;
use crate::nuisance::{derive_seed, fit_nuisance_triple, Learner};

/// Partition of record indices into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldPlan {
    /// Explicit assignment of each record to a fold in `0..k`; every fold
    /// must be non-empty.
    pub fn from_assignments(assignments: Vec<usize>, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "need K >= 2 folds, got {k}"
            )));
        }
        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            if a >= k {
                return Err(Error::InvalidArgument(format!(
                    "fold id {a} out of range for K = {k}"
                )));
            }
            sizes[a] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "every fold must contain a record".into(),
            ));
        }
        Ok(Self {
            assignments,
            k,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Record indices in fold `k`, ascending.
    pub fn fold(&self, k: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] == k)
            .collect()
    }

    /// `(complement of fold k, fold k)`, both ascending.
    pub fn split(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n()).partition(|&i| self.assignments[i] != k)
    }
}

/// Seeded shuffle followed by contiguous blocks whose sizes differ by at
/// most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    FoldPlan::from_assignments(assignments, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossfitOptions {
    pub k: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for CrossfitOptions {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            alpha: 0.05,
        }
    }
}

/// Per-record cross-fitted quantities.
#[derive(Debug, Clone)]
pub struct CrossfitScores {
    pub form: Form,
    /// Uncentered score of each record.
    pub psi: Vec<f64>,
    /// Estimated log odds ratio at each record.
    pub log_or: Vec<f64>,
    pub folds: FoldPlan,
    pub warnings: Vec<String>,
}

impl CrossfitScores {
    pub fn fold_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.folds.k()];
        for (i, &v) in self.psi.iter().enumerate() {
            sums[self.folds.fold_of(i)] += v;
        }
        sums.iter()
            .zip(self.folds.sizes())
            .map(|(s, c)| s / c as f64)
            .collect()
    }
}

fn scores_on(
    data: &Dataset,
    rows: &[usize],
    triple: &NuisanceTriple,
    form: Form,
) -> Result<Vec<(f64, f64)>> {
    let (label, cond) = form.roles(data);
    rows.iter()
        .enumerate()
        .map(|(j, &i)| {
            let (f0, f1, w) = (triple.f0()[j], triple.f1()[j], triple.w()[j]);
            let s = psi(form, label[i], cond[i], f0, f1, w)?;
            Ok((s, log_or_prospective(f1, f0)?))
        })
        .collect()
}

fn model_warnings(fitted: &crate::nuisance::FittedNuisance, k: usize) -> Vec<String> {
    let mut out = Vec::new();
    if let Some((a, b, c)) = fitted.models() {
        for (name, m) in [("f0", a), ("f1", b), ("w", c)] {
            for w in &m.warnings {
                out.push(format!("fold {k} {name}: {w}"));
            }
        }
    }
    out
}

/// Fits the nuisance triple on each fold's complement and evaluates scores
/// on the fold. Folds run in parallel; results are assembled in record
/// order so the output does not depend on scheduling.
pub fn crossfit_scores(
    data: &Dataset,
    spec: &FeatureSpec,
    learner: &Learner,
    form: Form,
    folds: &FoldPlan,
) -> Result<CrossfitScores> {
    if folds.n() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "fold plan covers {} records, dataset has {}",
            folds.n(),
            data.len()
        )));
    }
    let per_fold: Vec<Result<(Vec<usize>, Vec<(f64, f64)>, Vec<String>)>> = (0..folds.k())
        .into_par_iter()
        .map(|k| {
            let (train_idx, test_idx) = folds.split(k);
            let train = data.select_rows(&train_idx)?;
            let fitted = fit_nuisance_triple(
                &train,
                form,
                learner,
                spec,
                derive_seed(folds.seed(), 1000 + k as u64),
            )
            .map_err(|e| e.in_fold(k))?;
            let triple = fitted.evaluate(&data.x().select_rows(&test_idx))?;
            let scores = scores_on(data, &test_idx, &triple, form)?;
            Ok((test_idx, scores, model_warnings(&fitted, k)))
        })
        .collect();

    let n = data.len();
    let mut psi_all = vec![f64::NAN; n];
    let mut lor_all = vec![f64::NAN; n];
    let mut warnings = Vec::new();
    for r in per_fold {
        let (idx, scores, w) = r?;
        for (&i, (s, l)) in idx.iter().zip(scores) {
            psi_all[i] = s;
            lor_all[i] = l;
        }
        warnings.extend(w);
    }
    Ok(CrossfitScores {
        form,
        psi: psi_all,
        log_or: lor_all,
        folds: folds.clone(),
        warnings,
    })
}

fn dml_label(form: Form) -> EstimatorLabel {
    match form {
        Form::Prospective => EstimatorLabel::ProspectiveDml,
        Form::Retrospective => EstimatorLabel::RetrospectiveDml,
    }
}

/// Grand mean of the scores and the mean squared deviation around it.
pub fn estimate_from_scores(scores: &CrossfitScores, alpha: f64) -> Result<Estimate> {
    let n = scores.psi.len();
    let nf = n as f64;
    let theta = scores.psi.iter().sum::<f64>() / nf;
    let var = scores
        .psi
        .iter()
        .map(|&v| (v - theta) * (v - theta))
        .sum::<f64>()
        / nf;
    Estimate::with_inference(
        theta,
        var.sqrt(),
        n,
        dml_label(scores.form),
        alpha,
        scores.fold_means(),
    )
}

/// Cross-fitted debiased estimate of the average log odds ratio.
pub fn dml_estimate(
    data: &Dataset,
    spec: &FeatureSpec,
    learner: &Learner,
    form: Form,
    opts: &CrossfitOptions,
) -> Result<Estimate> {
    let folds = make_folds(data.len(), opts.k, opts.seed)?;
    let scores = crossfit_scores(data, spec, learner, form, &folds)?;
    estimate_from_scores(&scores, opts.alpha)
}

/// Average of the fitted log odds ratio from one full-sample fit, with no
/// score correction and no cross-fitting. Carries no standard error.
pub fn plugin_estimate(
    data: &Dataset,
    spec: &FeatureSpec,
    learner: &Learner,
    form: Form,
    alpha: f64,
    seed: u64,
) -> Result<Estimate> {
    let fitted = fit_nuisance_triple(data, form, learner, spec, derive_seed(seed, 7))?;
    let triple = fitted.evaluate(data.x())?;
    let lor = triple
        .f1()
        .iter()
        .zip(triple.f0())
        .map(|(&a, &b)| log_or_prospective(a, b))
        .collect::<Result<Vec<_>>>()?;
    let theta = lor.iter().sum::<f64>() / lor.len() as f64;
    let label = match form {
        Form::Prospective => EstimatorLabel::ProspectivePlugin,
        Form::Retrospective => EstimatorLabel::RetrospectivePlugin,
    };
    Estimate::point_only(theta, data.len(), label, alpha, vec![])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subpopulation {
    /// Records with `t = 1`.
    #[serde(rename = "T1")]
    ExposedT1,
    /// Records with `y = 1`.
    #[serde(rename = "Y1")]
    OutcomeY1,
}

/// Cross-fitted average of the estimated log odds ratio over one stratum.
/// Point estimate only.
pub fn subpop_average(
    data: &Dataset,
    spec: &FeatureSpec,
    learner: &Learner,
    form: Form,
    condition: Subpopulation,
    opts: &CrossfitOptions,
) -> Result<Estimate> {
    let (ind, label) = match condition {
        Subpopulation::ExposedT1 => (data.t(), EstimatorLabel::SubpopT1),
        Subpopulation::OutcomeY1 => (data.y(), EstimatorLabel::SubpopY1),
    };
    let members: Vec<usize> = (0..data.len()).filter(|&i| ind[i] == 1).collect();
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no records in the {label:?} stratum"
        )));
    }
    let folds = make_folds(data.len(), opts.k, opts.seed)?;
    let scores = crossfit_scores(data, spec, learner, form, &folds)?;
    let theta = members.iter().map(|&i| scores.log_or[i]).sum::<f64>() / members.len() as f64;
    Estimate::point_only(theta, members.len(), label, opts.alpha, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes() {
        let f = make_folds(10, 5, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let f = make_folds(11, 5, 1).unwrap();
        let mut s = f.sizes();
        s.sort();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
        assert_eq!(
            make_folds(100, 10, 7).unwrap(),
            make_folds(100, 10, 7).unwrap()
        );
        assert_ne!(
            make_folds(100, 10, 7).unwrap(),
            make_folds(100, 10, 8).unwrap()
        );
    }

    #[test]
    fn fold_arguments() {
        assert!(make_folds(4, 5, 0).is_err());
        assert!(make_folds(4, 1, 0).is_err());
        assert!(make_folds(5, 5, 0).is_ok());
        assert!(FoldPlan::from_assignments(vec![0, 0, 1], 3, 0).is_err());
    }

    #[test]
    fn split_partitions() {
        let f = make_folds(23, 4, 3).unwrap();
        let mut all = Vec::new();
        for k in 0..4 {
            let (train, test) = f.split(k);
            assert_eq!(train.len() + test.len(), 23);
            assert!(test.iter().all(|&i| f.fold_of(i) == k));
            all.extend(test);
        }
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }
}
