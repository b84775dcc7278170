//! Command-line front end: `estimate`, `simulate`, `check` and `sample`.
//!
//! Every command reads a [`RunConfig`] (JSON file plus `--set` overrides),
//! writes its report to `output.path` or standard output and prints a text
//! summary to standard error. Exit codes: 0 success, 2 configuration or
//! parse error, 3 estimation failure, 4 failed check.

pub mod config;
pub mod ingest;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use config::{FormChoice, OutputFormat, RunConfig};

use crate::crossfit::{crossfit_scores, estimate_from_scores, make_folds, plugin_estimate};
use crate::domain::{Estimate, EstimatorLabel};
use crate::error::{Error, Result};
use crate::nuisance::Learner;
use crate::oracle::run_sweep;
use crate::simulate::{run_mc, sample, LogitDgp};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "aaa",
    version,
    about = "Debiased estimation of the average adjusted log odds ratio"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-fitted estimates from a CSV file.
    Estimate(CommonArgs),
    /// Monte Carlo study on the synthetic logit law.
    Simulate(CommonArgs),
    /// Exact checks of the score identities over random discrete laws.
    Check(CommonArgs),
    /// Writes one synthetic sample (`simulate.n` rows, `simulate.seed`) as CSV.
    Sample(CommonArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `crossfit.k=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads.
    #[arg(long, env = "AAA_THREADS")]
    pub threads: Option<usize>,
    /// Report destination (overrides `output.path`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Report format (overrides `output.format`).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Input CSV (overrides `data.path`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Suppress the text summary.
    #[arg(long, short)]
    pub quiet: bool,
}

/// A finished command: the report body, a text summary and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub summary: String,
    pub code: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidData(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Io(_) => EXIT_CONFIG,
        Error::Domain(_)
        | Error::FoldDegenerate { .. }
        | Error::NonConvergence { .. }
        | Error::OutOfRange { .. } => EXIT_ESTIMATION,
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::FoldDegenerate { .. } => {
            format!("{e}; reduce K (crossfit.k) so every training split keeps both values")
        }
        _ => e.to_string(),
    }
}

fn format_of(cfg: &RunConfig) -> OutputFormat {
    cfg.output.format
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate_crossfit()?;
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("data.path is required".into()))?;
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let (data, levels) = ingest::read_dataset(file, &cfg.data)?;
    let spec = cfg.feature_spec();
    let learner = Learner::new(cfg.learner.clone())?;
    let cf = &cfg.crossfit;
    let folds = make_folds(data.len(), cf.k, cf.seed)?;

    let mut estimates: Vec<Estimate> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let forms = cf.form.forms();
    for (j, &form) in forms.iter().enumerate() {
        let scores = crossfit_scores(&data, &spec, &learner, form, &folds)?;
        warnings.extend(
            scores
                .warnings
                .iter()
                .map(|w| format!("{}: {w}", form.as_str())),
        );
        estimates.push(estimate_from_scores(&scores, cf.alpha)?);
        if j == 0 {
            if let Some(cond) = cf.subpop.condition() {
                let (ind, label) = match cond {
                    crate::crossfit::Subpopulation::ExposedT1 => {
                        (data.t(), EstimatorLabel::SubpopT1)
                    }
                    crate::crossfit::Subpopulation::OutcomeY1 => {
                        (data.y(), EstimatorLabel::SubpopY1)
                    }
                };
                let members: Vec<usize> = (0..data.len()).filter(|&i| ind[i] == 1).collect();
                if members.is_empty() {
                    return Err(Error::InvalidData(format!(
                        "no records in the {} stratum",
                        label.as_str()
                    )));
                }
                let theta =
                    members.iter().map(|&i| scores.log_or[i]).sum::<f64>() / members.len() as f64;
                estimates.push(Estimate::point_only(
                    theta,
                    members.len(),
                    label,
                    cf.alpha,
                    vec![],
                )?);
            }
        }
    }
    if cf.plugin {
        for &form in &forms {
            estimates.push(plugin_estimate(
                &data, &spec, &learner, form, cf.alpha, cf.seed,
            )?);
        }
    }

    let report = match format_of(cfg) {
        OutputFormat::Json => report::to_json(&json!({
            "command": "estimate",
            "data": {
                "path": path.display().to_string(),
                "n": data.len(),
                "outcome": cfg.data.outcome,
                "exposure": cfg.data.exposure,
                "levels": levels,
            },
            "k": cf.k,
            "seed": cf.seed,
            "learner": cfg.learner,
            "estimates": estimates.iter().map(report::estimate_json).collect::<Vec<_>>(),
            "warnings": warnings,
        }))?,
        OutputFormat::Csv => report::estimates_csv(&estimates)?,
    };
    let mut summary = format!("n = {}, K = {}\n", data.len(), cf.k);
    summary.push_str(&report::estimate_summary(&estimates));
    if !warnings.is_empty() {
        summary.push_str(&format!(
            "{} fit warning(s) recorded in the report\n",
            warnings.len()
        ));
    }
    Ok(Outcome {
        report,
        summary,
        code: EXIT_OK,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let mc = run_mc(&cfg.simulate.mc_config())?;
    let report = match format_of(cfg) {
        OutputFormat::Json => report::to_json(&mc)?,
        OutputFormat::Csv => report::mc_csv(&mc)?,
    };
    let code = if mc.valid { EXIT_OK } else { EXIT_ESTIMATION };
    let summary = mc.table();
    Ok(Outcome {
        report,
        summary,
        code,
    })
}

pub fn cmd_check(cfg: &RunConfig) -> Result<Outcome> {
    let sweep = run_sweep(&cfg.check)?;
    let report = match format_of(cfg) {
        OutputFormat::Json => report::to_json(&sweep)?,
        OutputFormat::Csv => report::sweep_csv(&sweep)?,
    };
    Ok(Outcome {
        report,
        summary: report::sweep_summary(&sweep),
        code: if sweep.pass { EXIT_OK } else { EXIT_CHECK },
    })
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<Outcome> {
    let dgp = LogitDgp::new(cfg.simulate.dgp.clone())?;
    if cfg.simulate.n == 0 {
        return Err(Error::Config("simulate.n must be at least 1".into()));
    }
    let data = sample(&dgp, cfg.simulate.n, cfg.simulate.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let names = dgp.covariate_names();
    let mut header = vec!["y".to_string(), "t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![data.y()[i].to_string(), data.t()[i].to_string()];
        rec.extend(data.x().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(Outcome {
        report: String::from_utf8(bytes).expect("csv output is utf-8"),
        summary: format!(
            "{} rows from the synthetic law, true θ0 = {}\n",
            data.len(),
            dgp.theta0()
        ),
        code: EXIT_OK,
    })
}

fn execute(command: &Command) -> Result<(Outcome, RunConfig, bool)> {
    let (args, f): (&CommonArgs, fn(&RunConfig) -> Result<Outcome>) = match command {
        Command::Estimate(a) => (a, cmd_estimate),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Check(a) => (a, cmd_check),
        Command::Sample(a) => (a, cmd_sample),
    };
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.set)?;
    if let Some(p) = &args.output {
        cfg.output.path = Some(p.clone());
    }
    if let Some(fmt) = args.format {
        cfg.output.format = match fmt {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        };
    }
    if let Some(p) = &args.data {
        cfg.data.path = Some(p.clone());
    }
    let threads = args.threads.or(cfg.simulate.parallelism);
    let outcome = match threads {
        Some(0) => return Err(Error::Config("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| f(&cfg))?,
        None => f(&cfg)?,
    };
    Ok((outcome, cfg, args.quiet))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (outcome, cfg, quiet) = match execute(&cli.command) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return exit_code(&e);
        }
    };
    if !quiet {
        eprint!("{}", outcome.summary);
    }
    let written = match &cfg.output.path {
        Some(p) => std::fs::write(p, &outcome.report),
        None => std::io::stdout().write_all(outcome.report.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return EXIT_CONFIG;
    }
    outcome.code
}
