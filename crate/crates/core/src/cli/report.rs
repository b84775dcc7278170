//! Report serialization and text summaries.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::domain::Estimate;
use crate::error::Result;
use crate::oracle::SweepReport;
use crate::simulate::McReport;

/// Significant digits kept for every float in a JSON report.
pub const JSON_DIGITS: usize = 12;

fn round_sig(x: f64) -> f64 {
    format!("{:.*e}", JSON_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("is f64");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with fields in declaration order, floats rounded to
/// [`JSON_DIGITS`] significant digits and non-finite values as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn pair(p: Option<(f64, f64)>) -> Value {
    p.map_or(Value::Null, |(a, b)| json!([a, b]))
}

pub fn estimate_json(e: &Estimate) -> Value {
    json!({
        "theta_hat": e.theta_hat,
        "sigma_hat": e.sigma_hat,
        "n": e.n,
        "form": e.form.as_str(),
        "alpha": e.alpha,
        "ci": pair(e.ci_two_sided),
        "ci_exp": pair(e.ci_exp),
        "upper_one_sided": e.upper_one_sided,
        "fold_means": e.fold_means,
    })
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn interval(p: Option<(f64, f64)>) -> String {
    p.map_or_else(|| "n/a".into(), |(a, b)| format!("[{a:.3}, {b:.3}]"))
}

fn table(out: &mut String, head: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| {
                if j == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(head.to_vec()));
    let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

/// Panel A on the log odds ratio scale, panel B exponentiated.
pub fn estimate_summary(estimates: &[Estimate]) -> String {
    let level = estimates.first().map_or(95.0, |e| 100.0 * (1.0 - e.alpha));
    let ci = format!("{level:.0}% Confidence Interval");
    let mut out = String::new();
    let _ = writeln!(out, "Panel A: θ0");
    let rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|e| {
            vec![
                e.form.title().to_string(),
                f3(e.theta_hat),
                e.std_error().map_or_else(|| "n/a".into(), f3),
                interval(e.ci_two_sided),
                e.upper_one_sided.map_or_else(|| "n/a".into(), f3),
            ]
        })
        .collect();
    table(
        &mut out,
        &["Estimator", "Estimate", "Std. Error", &ci, "Upper Bound"],
        &rows,
    );
    let _ = writeln!(out, "\nPanel B: exp(θ0)");
    let rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|e| {
            vec![
                e.form.title().to_string(),
                f3(e.theta_hat.exp()),
                interval(e.ci_exp),
                e.upper_one_sided
                    .map_or_else(|| "n/a".into(), |u| f3(u.exp())),
            ]
        })
        .collect();
    table(
        &mut out,
        &["Estimator", "Estimate", &ci, "Upper Bound"],
        &rows,
    );
    out
}

pub fn sweep_summary(r: &SweepReport) -> String {
    let mut out = String::new();
    let rows: Vec<Vec<String>> = r
        .checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                format!("{}/{}", c.passed, c.cases),
                format!("{:.3e}", c.worst),
                format!("{:?} {:.1e}", c.comparison, c.tolerance),
                if c.pass { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    table(
        &mut out,
        &["Check", "Passed", "Worst", "Requirement", "Result"],
        &rows,
    );
    if let Some(p) = r.curvature_power {
        let _ = writeln!(out, "curvature power: {p:.3}");
    }
    if let Some(w) = r.worst_failure() {
        let _ = writeln!(
            out,
            "worst violation: {} = {:.6e} against tolerance {:.1e}",
            w.name, w.worst, w.tolerance
        );
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{}", round_sig(x)))
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn estimates_csv(estimates: &[Estimate]) -> Result<String> {
    let rows = estimates
        .iter()
        .map(|e| {
            let (lo, hi) = e
                .ci_two_sided
                .map_or((None, None), |c| (Some(c.0), Some(c.1)));
            let (elo, ehi) = e.ci_exp.map_or((None, None), |c| (Some(c.0), Some(c.1)));
            vec![
                e.form.as_str().to_string(),
                opt(Some(e.theta_hat)),
                opt(e.sigma_hat),
                e.n.to_string(),
                opt(Some(e.alpha)),
                opt(lo),
                opt(hi),
                opt(elo),
                opt(ehi),
                opt(e.upper_one_sided),
            ]
        })
        .collect();
    csv_string(
        &[
            "form",
            "theta_hat",
            "sigma_hat",
            "n",
            "alpha",
            "ci_lo",
            "ci_hi",
            "ci_exp_lo",
            "ci_exp_hi",
            "upper_one_sided",
        ],
        rows,
    )
}

pub fn mc_csv(r: &McReport) -> Result<String> {
    let rows = r
        .estimators
        .iter()
        .map(|s| {
            vec![
                s.estimator.as_str().to_string(),
                s.successes.to_string(),
                s.failures.to_string(),
                opt(s.mean_estimate),
                opt(s.mean_bias),
                opt(s.sd),
                opt(s.mean_se),
                opt(s.se_sd_ratio),
                opt(s.coverage),
            ]
        })
        .collect();
    csv_string(
        &[
            "estimator",
            "successes",
            "failures",
            "mean_estimate",
            "mean_bias",
            "sd",
            "mean_se",
            "se_sd_ratio",
            "coverage",
        ],
        rows,
    )
}

pub fn sweep_csv(r: &SweepReport) -> Result<String> {
    let rows = r
        .checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.cases.to_string(),
                c.passed.to_string(),
                opt(Some(c.worst)),
                format!("{:?}", c.comparison).to_lowercase(),
                opt(Some(c.tolerance)),
                c.pass.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "check",
            "cases",
            "passed",
            "worst",
            "comparison",
            "tolerance",
            "pass",
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_twelve_digits() {
        let s = to_json(&json!({"a": 0.1234567890123456, "b": f64::NAN, "c": 3, "d": [1.0e-20]}))
            .unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 0.123456789012);
        assert!(v["b"].is_null());
        assert_eq!(v["c"].as_u64(), Some(3));
        assert_eq!(v["d"][0].as_f64().unwrap(), 1e-20);
    }

    #[test]
    fn panels_exponentiate() {
        let e = Estimate::with_inference(
            0.5,
            2.0,
            400,
            crate::domain::EstimatorLabel::ProspectiveDml,
            0.05,
            vec![],
        )
        .unwrap();
        let s = estimate_summary(&[e.clone()]);
        assert!(s.contains("Panel B: exp(θ0)"));
        assert!(s.contains(&format!("{:.3}", 0.5f64.exp())));
        let (lo, hi) = e.ci_two_sided.unwrap();
        let (elo, ehi) = e.ci_exp.unwrap();
        assert_eq!((elo, ehi), (lo.exp(), hi.exp()));
    }
}
