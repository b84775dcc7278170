use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::data::{ColumnKind, Covariates, Dataset, Form};
use super::score::{log_or_prospective, logit};
use crate::error::{Error, Result};

/// Ground-truth conditional probabilities at raw covariate rows.
///
/// Implemented by every data-generating process whose law is known, and
/// consumed by the truth-injected learner.
pub trait TruthModel: Send + Sync {
    /// `[f0, f1, w]` in the layout of [`NuisanceTriple`](super::NuisanceTriple).
    fn nuisance_at(&self, form: Form, row: &[f64]) -> Result<[f64; 3]>;
}

/// Joint law of `(Y, T)` at one covariate point, cells indexed `[y][t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLaw {
    pub cells: [[f64; 2]; 2],
}

impl PointLaw {
    /// `P(Y=1|T=t,x)`
    pub fn p_y1_given_t(&self, t: usize) -> f64 {
        let c = &self.cells;
        c[1][t] / (c[0][t] + c[1][t])
    }

    /// `P(T=1|Y=y,x)`
    pub fn p_t1_given_y(&self, y: usize) -> f64 {
        let c = &self.cells;
        c[y][1] / (c[y][0] + c[y][1])
    }

    pub fn p_t1(&self) -> f64 {
        self.cells[0][1] + self.cells[1][1]
    }

    pub fn p_y1(&self) -> f64 {
        self.cells[1][0] + self.cells[1][1]
    }

    pub fn log_or(&self) -> f64 {
        log_or_prospective(self.p_y1_given_t(1), self.p_y1_given_t(0))
            .expect("cells are bounded away from 0 and 1")
    }

    /// Baseline index of the outcome model: `logit P(Y=1|T=0,x)`.
    pub fn phi_p0(&self) -> f64 {
        logit(self.p_y1_given_t(0))
    }

    /// Baseline index of the exposure model: `logit P(T=1|Y=0,x)`.
    pub fn phi_r0(&self) -> f64 {
        logit(self.p_t1_given_y(0))
    }

    pub fn nuisance(&self, form: Form) -> [f64; 3] {
        match form {
            Form::Prospective => [self.p_y1_given_t(0), self.p_y1_given_t(1), self.p_t1()],
            Form::Retrospective => [self.p_t1_given_y(0), self.p_t1_given_y(1), self.p_y1()],
        }
    }

    /// Joint table from `P(T=1|x)`, `P(Y=1|T=0,x)` and the log odds ratio.
    pub fn from_prospective(w: f64, p0: f64, log_or: f64) -> Self {
        let p1 = super::score::expit(logit(p0) + log_or);
        Self {
            cells: [
                [(1.0 - w) * (1.0 - p0), w * (1.0 - p1)],
                [(1.0 - w) * p0, w * p1],
            ],
        }
    }
}

/// Finite-support joint distribution of `(Y, T, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDgp {
    support: Vec<Vec<f64>>,
    px: Vec<f64>,
    joint: Vec<PointLaw>,
    epsilon: f64,
}

impl DiscreteDgp {
    pub fn new(
        support: Vec<Vec<f64>>,
        px: Vec<f64>,
        joint: Vec<PointLaw>,
        epsilon: f64,
    ) -> Result<Self> {
        let m = support.len();
        if m == 0 || px.len() != m || joint.len() != m {
            return Err(Error::InvalidArgument(format!(
                "support has {m} points, px {} and joint {}",
                px.len(),
                joint.len()
            )));
        }
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(Error::InvalidArgument(format!(
                "epsilon = {epsilon} must lie in (0, 0.25)"
            )));
        }
        let dim = support[0].len();
        if support
            .iter()
            .any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "support points differ in dimension or are non-finite".into(),
            ));
        }
        for i in 0..m {
            for j in 0..i {
                if support[i] == support[j] {
                    return Err(Error::InvalidArgument(format!(
                        "support points {j} and {i} coincide"
                    )));
                }
            }
        }
        if px.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(
                "px must be strictly positive".into(),
            ));
        }
        let total: f64 = px.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("px sums to {total}, not 1")));
        }
        for (i, law) in joint.iter().enumerate() {
            let cells = law.cells.iter().flatten();
            let s: f64 = cells.clone().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "joint table {i} sums to {s}, not 1"
                )));
            }
            if cells
                .clone()
                .any(|&c| !(c >= epsilon && c <= 1.0 - epsilon))
            {
                return Err(Error::InvalidArgument(format!(
                    "joint table {i} has a cell outside [{epsilon}, {}]",
                    1.0 - epsilon
                )));
            }
        }
        Ok(Self {
            support,
            px,
            joint,
            epsilon,
        })
    }

    /// One covariate point carrying the given joint table.
    pub fn single(cells: [[f64; 2]; 2], epsilon: f64) -> Result<Self> {
        Self::new(
            vec![vec![0.0]],
            vec![1.0],
            vec![PointLaw { cells }],
            epsilon,
        )
    }

    /// Support points `0, 1, ..., m-1` on a single scalar covariate.
    pub fn indexed(px: Vec<f64>, joint: Vec<PointLaw>, epsilon: f64) -> Result<Self> {
        let support = (0..px.len()).map(|i| vec![i as f64]).collect();
        Self::new(support, px, joint, epsilon)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn law(&self, i: usize) -> &PointLaw {
        &self.joint[i]
    }

    pub fn laws(&self) -> &[PointLaw] {
        &self.joint
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Index of the support point equal to `row`, if any.
    pub fn locate(&self, row: &[f64]) -> Option<usize> {
        self.support.iter().position(|s| s.as_slice() == row)
    }

    /// Draws `(support index, y, t)` triples.
    pub fn sample_indexed<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(usize, u8, u8)> {
        let xdist = WeightedIndex::new(&self.px).expect("px validated");
        let cell_dists: Vec<_> = self
            .joint
            .iter()
            .map(|l| WeightedIndex::new(l.cells.iter().flatten()).expect("cells validated"))
            .collect();
        (0..n)
            .map(|_| {
                let i = xdist.sample(rng);
                let c = cell_dists[i].sample(rng);
                (i, (c / 2) as u8, (c % 2) as u8)
            })
            .collect()
    }

    /// Draws an i.i.d. sample; covariate columns are the support coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let draws = self.sample_indexed(n, rng);
        let dim = self.support[0].len();
        let columns = (0..dim)
            .map(|j| draws.iter().map(|&(i, _, _)| self.support[i][j]).collect())
            .collect();
        let names = (0..dim).map(|j| format!("x{j}")).collect();
        let x = Covariates::new(names, vec![ColumnKind::Numeric; dim], columns)?;
        Dataset::new(
            draws.iter().map(|d| d.1).collect(),
            draws.iter().map(|d| d.2).collect(),
            x,
        )
    }
}

impl TruthModel for DiscreteDgp {
    fn nuisance_at(&self, form: Form, row: &[f64]) -> Result<[f64; 3]> {
        let i = self
            .locate(row)
            .ok_or_else(|| Error::InvalidData(format!("row {row:?} is not a support point")))?;
        Ok(self.joint[i].nuisance(form))
    }
}
