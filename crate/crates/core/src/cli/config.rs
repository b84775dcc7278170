//! Run configuration: a JSON file layered over defaults, then `--set`
//! overrides addressed by dotted paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::crossfit::Subpopulation;
use crate::domain::{ColumnKind, Form};
use crate::error::{Error, Result};
use crate::featurize::{ColumnDirective, FeatureSpec};
use crate::nuisance::LearnerConfig;
use crate::oracle::SweepConfig;
use crate::simulate::{EstimatorConfig, LogitDgpConfig, McConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    pub path: Option<PathBuf>,
    pub outcome: String,
    pub exposure: String,
    pub covariates: Vec<CovariateColumn>,
}

impl Default for DataBlock {
    fn default() -> Self {
        Self {
            path: None,
            outcome: "y".into(),
            exposure: "t".into(),
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormChoice {
    Prospective,
    Retrospective,
    Both,
}

impl FormChoice {
    pub fn forms(self) -> Vec<Form> {
        match self {
            FormChoice::Prospective => vec![Form::Prospective],
            FormChoice::Retrospective => vec![Form::Retrospective],
            FormChoice::Both => vec![Form::Prospective, Form::Retrospective],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubpopChoice {
    #[serde(rename = "none")]
    None,
    T1,
    Y1,
}

impl SubpopChoice {
    pub fn condition(self) -> Option<Subpopulation> {
        match self {
            SubpopChoice::None => None,
            SubpopChoice::T1 => Some(Subpopulation::ExposedT1),
            SubpopChoice::Y1 => Some(Subpopulation::OutcomeY1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossfitBlock {
    pub k: usize,
    pub seed: u64,
    pub form: FormChoice,
    pub alpha: f64,
    pub subpop: SubpopChoice,
    /// Also report the plug-in comparator for each form.
    pub plugin: bool,
}

impl Default for CrossfitBlock {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            form: FormChoice::Both,
            alpha: 0.05,
            subpop: SubpopChoice::None,
            plugin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    pub dgp: LogitDgpConfig,
    pub n: usize,
    pub reps: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub estimators: Vec<EstimatorConfig>,
    /// Worker threads; overridden by `--threads` and `AAA_THREADS`.
    pub parallelism: Option<usize>,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        let mc = McConfig::default();
        Self {
            dgp: mc.dgp,
            n: mc.n,
            reps: mc.reps,
            k: mc.k,
            alpha: mc.alpha,
            seed: mc.seed,
            estimators: mc.estimators,
            parallelism: None,
        }
    }
}

impl SimulateBlock {
    pub fn mc_config(&self) -> McConfig {
        McConfig {
            dgp: self.dgp.clone(),
            n: self.n,
            reps: self.reps,
            k: self.k,
            alpha: self.alpha,
            seed: self.seed,
            estimators: self.estimators.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Report destination; standard output when absent.
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataBlock,
    /// One directive per covariate; splines for numeric and dummies for
    /// categorical columns when absent.
    pub features: Option<FeatureSpec>,
    pub learner: LearnerConfig,
    pub crossfit: CrossfitBlock,
    pub simulate: SimulateBlock,
    pub check: SweepConfig,
    pub output: OutputBlock,
}

/// Inner knots of the default spline for numeric covariates.
pub const DEFAULT_INNER_KNOTS: usize = 5;

impl RunConfig {
    /// Reads `path` (when given), layers it over the defaults and applies
    /// `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root = serde_json::to_value(RunConfig::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?;
            if !file.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
            merge(&mut root, file);
        }
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        self.features.clone().unwrap_or_else(|| {
            FeatureSpec::new(
                self.data
                    .covariates
                    .iter()
                    .map(|c| match c.kind {
                        ColumnKind::Numeric => ColumnDirective::cubic_spline(DEFAULT_INNER_KNOTS),
                        ColumnKind::Categorical => ColumnDirective::Onehot { drop_first: true },
                    })
                    .collect(),
            )
        })
    }

    pub fn validate_crossfit(&self) -> Result<()> {
        let c = &self.crossfit;
        if c.k < 2 {
            return Err(Error::Config(format!(
                "crossfit.k = {} must be at least 2",
                c.k
            )));
        }
        if !(c.alpha > 0.0 && c.alpha < 0.5) {
            return Err(Error::Config(format!(
                "crossfit.alpha = {} must lie in (0, 0.5)",
                c.alpha
            )));
        }
        Ok(())
    }
}

/// Objects merge key by key; anything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// `a.b.c=value`. The value is read as JSON when it parses, otherwise as a
/// plain string. Numeric segments index into arrays.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for seg in key.split('.') {
        node = match node {
            Value::Array(items) => {
                let len = items.len();
                let i: usize = seg.parse().map_err(|_| {
                    Error::Config(format!("override '{key}': '{seg}' is not an array index"))
                })?;
                items.get_mut(i).ok_or_else(|| {
                    Error::Config(format!(
                        "override '{key}': index {i} out of range (len {len})"
                    ))
                })?
            }
            Value::Null => {
                *node = Value::Object(Map::new());
                node.as_object_mut()
                    .expect("just set")
                    .entry(seg)
                    .or_insert(Value::Null)
            }
            Value::Object(map) => map.entry(seg).or_insert(Value::Null),
            _ => {
                return Err(Error::Config(format!(
                    "override '{key}': '{seg}' is below a scalar"
                )))
            }
        };
    }
    *node = value;
    Ok(())
}
