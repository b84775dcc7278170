//! Design-matrix construction: spline expansion of numeric columns and
//! dummy coding of categorical ones.
//!
//! A [`FeatureSpec`] is fitted on training rows (knots, observed levels) and
//! the resulting [`FittedFeatures`] transforms any rows, including held-out
//! ones whose values fall outside the training range.

mod bspline;

pub use bspline::{bspline_basis, BsplineBasis, OutOfRange};

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{ColumnKind, Covariates};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    /// Inner knots at equally spaced quantiles of the training values.
    #[default]
    Quantile,
    /// Inner knots equally spaced between the training min and max.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnDirective {
    Passthrough,
    Spline {
        degree: usize,
        n_inner_knots: usize,
        #[serde(default)]
        knot_rule: KnotRule,
        #[serde(default)]
        out_of_range: OutOfRange,
    },
    Onehot {
        #[serde(default = "default_true")]
        drop_first: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ColumnDirective {
    pub fn cubic_spline(n_inner_knots: usize) -> Self {
        ColumnDirective::Spline {
            degree: 3,
            n_inner_knots,
            knot_rule: KnotRule::Quantile,
            out_of_range: OutOfRange::Clamp,
        }
    }
}

/// One directive per raw covariate column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub columns: Vec<ColumnDirective>,
}

impl FeatureSpec {
    pub fn new(columns: Vec<ColumnDirective>) -> Self {
        Self { columns }
    }

    /// Every column passed through unchanged.
    pub fn passthrough(n_cols: usize) -> Self {
        Self::new(vec![ColumnDirective::Passthrough; n_cols])
    }

    fn validate(&self, raw: &Covariates) -> Result<()> {
        if self.columns.len() != raw.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "feature spec has {} directives for {} covariate columns",
                self.columns.len(),
                raw.n_cols()
            )));
        }
        for (j, d) in self.columns.iter().enumerate() {
            let kind = raw.kinds()[j];
            let name = &raw.names()[j];
            match (d, kind) {
                (ColumnDirective::Spline { .. }, ColumnKind::Categorical) => {
                    return Err(Error::InvalidArgument(format!(
                        "spline directive on categorical column '{name}'"
                    )))
                }
                (ColumnDirective::Onehot { .. }, ColumnKind::Numeric) => {
                    return Err(Error::InvalidArgument(format!(
                        "one-hot directive on numeric column '{name}'"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Provenance of one design column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub source: String,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq)]
enum FittedColumn {
    Passthrough,
    Spline {
        basis: BsplineBasis,
        policy: OutOfRange,
    },
    Onehot {
        levels: Vec<i64>,
        reference: Option<i64>,
    },
}

impl FittedColumn {
    fn width(&self) -> usize {
        match self {
            FittedColumn::Passthrough => 1,
            FittedColumn::Spline { basis, .. } => basis.dim(),
            FittedColumn::Onehot { levels, .. } => levels.len(),
        }
    }
}

/// A feature spec with its training-data-dependent pieces resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFeatures {
    names: Vec<String>,
    columns: Vec<FittedColumn>,
    /// Notes about the fit itself, e.g. collapsed duplicate knots.
    pub fit_warnings: Vec<String>,
}

/// Design matrix without an intercept column, plus its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub manifest: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

/// Type-7 sample quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FittedFeatures {
    pub fn fit(spec: &FeatureSpec, train: &Covariates) -> Result<Self> {
        spec.validate(train)?;
        if train.n_rows() == 0 {
            return Err(Error::InvalidData(
                "cannot fit features on zero rows".into(),
            ));
        }
        let mut fit_warnings = Vec::new();
        let mut columns = Vec::with_capacity(spec.columns.len());
        for (j, d) in spec.columns.iter().enumerate() {
            let name = &train.names()[j];
            let col = train.column(j);
            let fitted = match *d {
                ColumnDirective::Passthrough => FittedColumn::Passthrough,
                ColumnDirective::Spline {
                    degree,
                    n_inner_knots,
                    knot_rule,
                    out_of_range,
                } => {
                    let mut sorted = col.to_vec();
                    sorted.sort_by(f64::total_cmp);
                    let lo = sorted[0];
                    let hi = sorted[sorted.len() - 1];
                    if lo >= hi {
                        return Err(Error::InvalidData(format!(
                            "column '{name}' is constant on the training rows; cannot place spline knots"
                        )));
                    }
                    let probs = (1..=n_inner_knots).map(|k| k as f64 / (n_inner_knots + 1) as f64);
                    let candidates: Vec<f64> = match knot_rule {
                        KnotRule::Quantile => probs.map(|q| quantile_sorted(&sorted, q)).collect(),
                        KnotRule::Uniform => probs.map(|q| lo + q * (hi - lo)).collect(),
                    };
                    let mut inner: Vec<f64> = Vec::with_capacity(candidates.len());
                    for k in candidates {
                        if k > lo && k < hi && inner.last().map_or(true, |&prev| k > prev) {
                            inner.push(k);
                        }
                    }
                    if inner.len() < n_inner_knots {
                        fit_warnings.push(format!(
                            "column '{name}': {} of {n_inner_knots} inner knots coincided and were merged",
                            n_inner_knots - inner.len()
                        ));
                    }
                    FittedColumn::Spline {
                        basis: BsplineBasis::new(degree, lo, hi, inner)?,
                        policy: out_of_range,
                    }
                }
                ColumnDirective::Onehot { drop_first } => {
                    let set: BTreeSet<i64> = col.iter().map(|&v| v as i64).collect();
                    let mut levels: Vec<i64> = set.into_iter().collect();
                    let reference = if drop_first && !levels.is_empty() {
                        Some(levels.remove(0))
                    } else {
                        None
                    };
                    FittedColumn::Onehot { levels, reference }
                }
            };
            columns.push(fitted);
        }
        Ok(Self {
            names: train.names().to_vec(),
            columns,
            fit_warnings,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(FittedColumn::width).sum()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut out = Vec::with_capacity(self.width());
        for (name, col) in self.names.iter().zip(&self.columns) {
            match col {
                FittedColumn::Passthrough => out.push(ManifestEntry {
                    source: name.clone(),
                    term: "value".into(),
                }),
                FittedColumn::Spline { basis, .. } => {
                    for b in 0..basis.dim() {
                        out.push(ManifestEntry {
                            source: name.clone(),
                            term: format!("bs{}[{b}]", basis.degree()),
                        });
                    }
                }
                FittedColumn::Onehot { levels, .. } => {
                    for l in levels {
                        out.push(ManifestEntry {
                            source: name.clone(),
                            term: format!("level={l}"),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn transform(&self, raw: &Covariates) -> Result<Design> {
        if raw.names() != self.names.as_slice() {
            return Err(Error::InvalidArgument(format!(
                "covariate columns {:?} do not match the fitted columns {:?}",
                raw.names(),
                self.names
            )));
        }
        let n = raw.n_rows();
        let mut matrix = DMatrix::zeros(n, self.width());
        let mut warnings = Vec::new();
        let mut offset = 0;
        for (j, col) in self.columns.iter().enumerate() {
            let values = raw.column(j);
            let name = &self.names[j];
            match col {
                FittedColumn::Passthrough => {
                    matrix.column_mut(offset).copy_from_slice(values);
                }
                FittedColumn::Spline { basis, policy } => {
                    let mut buf = vec![0.0; basis.dim()];
                    let mut clamped = 0usize;
                    for (i, &v) in values.iter().enumerate() {
                        if basis.eval_into(v, *policy, &mut buf)? {
                            clamped += 1;
                        }
                        for (b, &val) in buf.iter().enumerate() {
                            matrix[(i, offset + b)] = val;
                        }
                    }
                    if clamped > 0 {
                        let (lo, hi) = basis.boundary();
                        warnings.push(format!(
                            "column '{name}': {clamped} values outside [{lo}, {hi}] clamped to the boundary"
                        ));
                    }
                }
                FittedColumn::Onehot { levels, reference } => {
                    let mut unseen = BTreeSet::new();
                    for (i, &v) in values.iter().enumerate() {
                        let code = v as i64;
                        match levels.binary_search(&code) {
                            Ok(b) => matrix[(i, offset + b)] = 1.0,
                            Err(_) if *reference == Some(code) => {}
                            Err(_) => {
                                unseen.insert(code);
                            }
                        }
                    }
                    if !unseen.is_empty() {
                        warnings.push(format!(
                            "column '{name}': levels {:?} unseen during fitting; rows coded as all zeros",
                            unseen.iter().collect::<Vec<_>>()
                        ));
                    }
                }
            }
            offset += col.width();
        }
        Ok(Design {
            matrix,
            manifest: self.manifest(),
            warnings,
        })
    }
}

/// Fits the spec on `raw` and transforms the same rows.
pub fn build_design(spec: &FeatureSpec, raw: &Covariates) -> Result<Design> {
    let fitted = FittedFeatures::fit(spec, raw)?;
    let mut design = fitted.transform(raw)?;
    design
        .warnings
        .splice(0..0, fitted.fit_warnings.iter().cloned());
    Ok(design)
}
