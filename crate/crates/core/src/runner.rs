//! End-to-end experiment runs and their output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, DataSource, ExperimentConfig};
use crate::data::{align_calendar, load_daily_bars, load_option_chain, MarketDataset};
use crate::features::{build_dataset, BuiltSamples};
use crate::prequential::{
    make_splits, run_experiment, write_results_jsonl, HarnessError, SkippedFit, SplitPlan, Window,
    WindowResult,
};
use crate::stats::{aggregate, emit_plot_data, metrics_table_csv, AggregateReport};
use crate::synth::generate_market;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Runtime(_) => 4,
        }
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidSplit(_) | HarnessError::NoIterations | HarnessError::EmptyValidation => {
                AppError::Data(e.to_string())
            }
            _ => AppError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::Runtime(format!("{}: {e}", path.display()))
}

/// Command-line adjustments applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub models: Option<Vec<String>>,
    pub since: Option<NaiveDate>,
    pub max_estimators: Option<usize>,
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), ConfigError> {
    if let Some(out) = &o.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = o.seed {
        cfg.base_seed = seed;
    }
    if let Some(ids) = &o.models {
        cfg.retain_models(ids)?;
    }
    if let Some(since) = o.since {
        cfg.report.since = since;
    }
    if let Some(cap) = o.max_estimators {
        cfg.max_estimators = Some(cap);
    }
    cfg.validate()
}

pub fn load_market(cfg: &ExperimentConfig) -> Result<(MarketDataset, Vec<String>), AppError> {
    let data = |e: &dyn std::fmt::Display| AppError::Data(e.to_string());
    match &cfg.data {
        DataSource::Synthetic { synth } => Ok((generate_market(synth).map_err(|e| data(&e))?, Vec::new())),
        DataSource::Csv { options, spx, vix } => {
            let quotes = load_option_chain(options).map_err(|e| data(&e))?;
            let spx = load_daily_bars(spx).map_err(|e| data(&e))?;
            let vix = load_daily_bars(vix).map_err(|e| data(&e))?;
            let aligned = align_calendar(quotes, spx, vix).map_err(|e| data(&e))?;
            let warnings = aligned
                .dropped
                .iter()
                .map(|d| format!("dropped {d} during calendar alignment"))
                .collect();
            Ok((aligned.dataset, warnings))
        }
    }
}

/// One candidate sample per trading day of the dataset.
pub fn build_samples(cfg: &ExperimentConfig, market: &MarketDataset) -> Result<BuiltSamples, AppError> {
    let schedule: Vec<NaiveDate> = market.dates().collect();
    build_dataset(market, &schedule, cfg.prequential.tenor, &cfg.feature_set())
        .map_err(|e| AppError::Data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub index: usize,
    pub train: Window,
    pub validation: Window,
    pub test: Window,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

fn summarize(plan: &SplitPlan) -> Vec<IterationSummary> {
    plan.iterations
        .iter()
        .map(|it| IterationSummary {
            index: it.index,
            train: it.train,
            validation: it.validation,
            test: it.test,
            n_train: it.train_idx.len(),
            n_validation: it.validation_idx.len(),
            n_test: it.test_idx.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DryRun {
    pub name: String,
    pub n_samples: usize,
    pub iterations: Vec<IterationSummary>,
    pub warnings: Vec<String>,
}

/// Resolves the data and the splits without training anything.
pub fn dry_run(cfg: &ExperimentConfig) -> Result<DryRun, AppError> {
    let (market, mut warnings) = load_market(cfg)?;
    let samples = build_samples(cfg, &market)?;
    let p = &cfg.prequential;
    let plan = make_splits(&samples.dates(), p.split_months, p.test_start, p.train_start)?;
    warnings.extend(plan.warnings.iter().cloned());
    Ok(DryRun {
        name: cfg.name.clone(),
        n_samples: samples.records.len(),
        iterations: summarize(&plan),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub version: String,
    pub base_seed: u64,
    pub config_sha256: String,
    pub n_samples: usize,
    pub sample_warnings: usize,
    pub iterations: Vec<IterationSummary>,
    pub warnings: Vec<String>,
    pub skipped: Vec<SkippedFit>,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to replay a run: the resolved config is stored next to
/// the manifest and its hash recorded here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub name: String,
    pub base_seed: u64,
    pub config_file: String,
    pub config_sha256: String,
    pub files: Vec<ManifestFile>,
}

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const RESULTS_FILE: &str = "results.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

fn predictions_csv(results: &[WindowResult]) -> String {
    let mut out = String::from("model,repetition,iteration,sample_id,trade_date,probability,decision,label,profit\n");
    for r in results {
        let rep = r.repetition.map(|v| v.to_string()).unwrap_or_default();
        for p in &r.predictions {
            writeln!(
                out,
                "{},{rep},{},{},{},{},{},{},{}",
                r.model, r.iteration, p.sample_id, p.trade_date, p.probability, p.decision, p.label, p.profit
            )
            .unwrap();
        }
    }
    out
}

/// Output directory from the config, or `runs/<name>`.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

/// Runs the experiment and writes every output file into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, AppError> {
    let config_text = cfg.to_toml();
    let config_sha256 = sha256_hex(config_text.as_bytes());
    let (market, mut warnings) = load_market(cfg)?;
    let samples = build_samples(cfg, &market)?;
    let outcome = run_experiment(&cfg.harness_settings(), &samples)?;
    warnings.extend(outcome.plan.warnings.iter().cloned());
    for s in &outcome.skipped {
        warnings.push(format!(
            "skipped model {} repetition {} in iteration {}: {}",
            s.model, s.repetition, s.iteration, s.reason
        ));
    }
    let report_agg = aggregate(&outcome.results, cfg.report.since).map_err(|e| AppError::Runtime(e.to_string()))?;
    let report = RunReport {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: cfg.base_seed,
        config_sha256: config_sha256.clone(),
        n_samples: samples.records.len(),
        sample_warnings: samples.warnings.len(),
        iterations: summarize(&outcome.plan),
        warnings,
        skipped: outcome.skipped.clone(),
        aggregate: report_agg,
    };

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let write = |name: &str, content: &[u8]| -> Result<(), AppError> {
        let p = out_dir.join(name);
        fs::write(&p, content).map_err(|e| io_err(&p, e))
    };
    write(RESOLVED_CONFIG, config_text.as_bytes())?;
    let mut jsonl = Vec::new();
    write_results_jsonl(&mut jsonl, &outcome.results)?;
    write(RESULTS_FILE, &jsonl)?;
    let report_json = serde_json::to_string_pretty(&report).map_err(|e| AppError::Runtime(e.to_string()))?;
    write("report.json", report_json.as_bytes())?;
    write("metrics_table.csv", metrics_table_csv(&report.aggregate).as_bytes())?;
    write("predictions.csv", predictions_csv(&outcome.results).as_bytes())?;
    emit_plot_data(&report.aggregate, &outcome.results, out_dir).map_err(|e| AppError::Runtime(e.to_string()))?;

    let mut files = Vec::new();
    for name in [
        "cumulative_profit.csv",
        "metric_boxes.csv",
        "metrics_table.csv",
        "per_window_profit.csv",
        "predictions.csv",
        "profit_distribution.csv",
        "report.json",
        RESOLVED_CONFIG,
        RESULTS_FILE,
    ] {
        let p = out_dir.join(name);
        let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
        files.push(ManifestFile {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        tool: "straddle".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        name: cfg.name.clone(),
        base_seed: cfg.base_seed,
        config_file: RESOLVED_CONFIG.into(),
        config_sha256,
        files,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).map_err(|e| AppError::Runtime(e.to_string()))?;
    write("manifest.json", manifest_json.as_bytes())?;
    Ok(report)
}
