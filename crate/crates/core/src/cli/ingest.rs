//! CSV ingestion.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;

use super::config::DataBlock;
use crate::domain::{ColumnKind, Covariates, Dataset};
use crate::error::{Error, Result};

/// Level labels of each categorical column, in code order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LevelMap(pub BTreeMap<String, Vec<String>>);

fn parse_binary(s: &str) -> Option<u8> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "false" => Some(0),
        "1" | "true" => Some(1),
        _ => None,
    }
}

/// Reads a header-row CSV into a [`Dataset`]. Outcome and exposure accept
/// `0/1/true/false`; categorical columns map their distinct strings, sorted
/// (numerically when every label is a number), to codes `0, 1, ...`.
/// Errors name the 1-based file line.
pub fn read_dataset<R: Read>(reader: R, block: &DataBlock) -> Result<(Dataset, LevelMap)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("column '{name}' not in header"),
            })
    };
    let iy = find(&block.outcome)?;
    let it = find(&block.exposure)?;
    let ix: Vec<usize> = block
        .covariates
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); ix.len()];
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |j: usize, name: &str| -> Result<&str> {
            match rec.get(j) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    message: format!("missing value in column '{name}'"),
                }),
            }
        };
        let binary = |j: usize, name: &str| -> Result<u8> {
            let v = field(j, name)?;
            parse_binary(v).ok_or_else(|| Error::Parse {
                line,
                message: format!("column '{name}' value '{v}' is not binary (0/1/true/false)"),
            })
        };
        y.push(binary(iy, &block.outcome)?);
        t.push(binary(it, &block.exposure)?);
        for (k, &j) in ix.iter().enumerate() {
            raw[k].push(field(j, &block.covariates[k].name)?.to_string());
        }
        lines.push(line);
    }
    if y.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }

    let mut levels = LevelMap::default();
    let mut columns = Vec::with_capacity(ix.len());
    for (k, col) in raw.into_iter().enumerate() {
        let spec = &block.covariates[k];
        match spec.kind {
            ColumnKind::Numeric => {
                let vals = col
                    .iter()
                    .enumerate()
                    .map(|(i, s)| match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(Error::Parse {
                            line: lines[i],
                            message: format!(
                                "column '{}' value '{s}' is not a finite number",
                                spec.name
                            ),
                        }),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                columns.push(vals);
            }
            ColumnKind::Categorical => {
                let (codes, labels) = encode_levels(&col);
                levels.0.insert(spec.name.clone(), labels);
                columns.push(codes);
            }
        }
    }
    let x = Covariates::new(
        block.covariates.iter().map(|c| c.name.clone()).collect(),
        block.covariates.iter().map(|c| c.kind).collect(),
        columns,
    )?;
    Ok((Dataset::new(y, t, x)?, levels))
}

fn encode_levels(col: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut labels: Vec<String> = col.to_vec();
    labels.sort();
    labels.dedup();
    let numeric: Option<Vec<f64>> = labels.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(labels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        labels = pairs.into_iter().map(|p| p.1).collect();
    }
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let codes = col.iter().map(|s| index[s.as_str()] as f64).collect();
    (codes, labels)
}
