use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Integer level codes stored as `f64`.
    Categorical,
}

/// Raw covariates, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Covariates {
    pub fn new(names: Vec<String>, kinds: Vec<ColumnKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != kinds.len() || names.len() != columns.len() {
            return Err(Error::InvalidData(format!(
                "{} names, {} kinds and {} columns",
                names.len(),
                kinds.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::InvalidData(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    names[j],
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value in column '{}' at row {i}",
                    names[j]
                )));
            }
            if kinds[j] == ColumnKind::Categorical {
                if let Some(i) = col.iter().position(|v| v.fract() != 0.0) {
                    return Err(Error::InvalidData(format!(
                        "categorical column '{}' has non-integer code at row {i}",
                        names[j]
                    )));
                }
            }
        }
        Ok(Self {
            names,
            kinds,
            columns,
            n_rows,
        })
    }

    /// Covariates with no columns but a fixed row count.
    pub fn empty(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            kinds: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }
}

/// The estimation sample: binary outcome `y`, binary exposure `t` and raw
/// covariates, all of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u8>,
    t: Vec<u8>,
    x: Covariates,
}

impl Dataset {
    pub fn new(y: Vec<u8>, t: Vec<u8>, x: Covariates) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no records".into()));
        }
        if t.len() != n || x.n_rows() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: y has {n}, t has {}, x has {} rows",
                t.len(),
                x.n_rows()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "outcome at record {i} is not 0/1"
            )));
        }
        if let Some(i) = t.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "exposure at record {i} is not 0/1"
            )));
        }
        Ok(Self { y, t, x })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn x(&self) -> &Covariates {
        &self.x
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| self.y[i]).collect(),
            rows.iter().map(|&i| self.t[i]).collect(),
            self.x.select_rows(rows),
        )
    }
}

/// Which representation of the odds ratio a nuisance triple or score uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// Conditionals of the outcome given exposure, plus `P(T=1|x)`.
    Prospective,
    /// Conditionals of the exposure given outcome, plus `P(Y=1|x)`.
    Retrospective,
}

impl Form {
    pub fn as_str(self) -> &'static str {
        match self {
            Form::Prospective => "prospective",
            Form::Retrospective => "retrospective",
        }
    }

    /// (label, conditioning indicator) as seen by this form: the prospective
    /// form models `y` given `t`, the retrospective form `t` given `y`.
    pub fn roles<'a>(self, data: &'a Dataset) -> (&'a [u8], &'a [u8]) {
        match self {
            Form::Prospective => (data.y(), data.t()),
            Form::Retrospective => (data.t(), data.y()),
        }
    }
}

/// Fitted nuisance probabilities evaluated on a set of records.
///
/// Prospective: `f0 = P(Y=1|T=0,x)`, `f1 = P(Y=1|T=1,x)`, `w = P(T=1|x)`.
/// Retrospective: `f0 = P(T=1|Y=0,x)`, `f1 = P(T=1|Y=1,x)`, `w = P(Y=1|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceTriple {
    kind: Form,
    f0: Vec<f64>,
    f1: Vec<f64>,
    w: Vec<f64>,
    epsilon: f64,
}

impl NuisanceTriple {
    pub fn new(kind: Form, f0: Vec<f64>, f1: Vec<f64>, w: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "trimming level {epsilon} must lie in (0, 0.5)"
            )));
        }
        if f0.len() != f1.len() || f0.len() != w.len() {
            return Err(Error::InvalidData(
                "nuisance components differ in length".into(),
            ));
        }
        for (name, v) in [("f0", &f0), ("f1", &f1), ("w", &w)] {
            if let Some(p) = v.iter().find(|&&p| !(p >= epsilon && p <= 1.0 - epsilon)) {
                return Err(Error::Domain(format!(
                    "{name} probability {p} outside [{epsilon}, {}]",
                    1.0 - epsilon
                )));
            }
        }
        Ok(Self {
            kind,
            f0,
            f1,
            w,
            epsilon,
        })
    }

    pub fn kind(&self) -> Form {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}
