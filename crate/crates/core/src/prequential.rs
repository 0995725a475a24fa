//! Walk-forward (prequential) evaluation: growing training windows, one
//! validation window for the trade threshold, one test window per iteration.

use std::io::{BufRead, Write};

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;
use crate::classifiers::{self, decide, ClassifierSpec, Matrix, ModelError, TrainedModel};
use crate::features::BuiltSamples;
use crate::metrics::{evaluate, MetricRow, MetricsError, WeightMode};

/// Model id of the trade-every-day baseline.
pub const BASELINE_ID: &str = "All";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid split settings: {0}")]
    InvalidSplit(String),
    #[error("no complete prequential iteration fits the data")]
    NoIterations,
    #[error("threshold search needs a non-empty validation window with matching lengths")]
    EmptyValidation,
    #[error("iteration {iteration}, model {model}: {source}")]
    Model {
        iteration: usize,
        model: String,
        source: ModelError,
    },
    #[error("iteration {iteration}, model {model}: {source}")]
    Metrics {
        iteration: usize,
        model: String,
        source: MetricsError,
    },
    #[error("duplicate or reserved model id {0:?}")]
    ModelId(String),
    #[error("results file: {0}")]
    Io(String),
}

/// Dates `start <= d < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrequentialIteration {
    pub index: usize,
    pub train: Window,
    pub validation: Window,
    pub test: Window,
    pub delta_months: u32,
    pub train_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub iterations: Vec<PrequentialIteration>,
    pub warnings: Vec<String>,
}

fn add_months(d: NaiveDate, m: u32) -> NaiveDate {
    d.checked_add_months(Months::new(m)).expect("date in range")
}

/// Calendar-month windows over sample `dates` (sorted ascending).
///
/// Iteration `i` tests on the `delta_months` starting at `test_start + i·Δ`,
/// validates on the Δ before that and trains on everything from
/// `train_start` up to the validation window. Iterations with an empty window
/// are dropped with a warning.
pub fn make_splits(
    dates: &[NaiveDate],
    delta_months: u32,
    test_start: YearMonth,
    train_start: NaiveDate,
) -> Result<SplitPlan, HarnessError> {
    if delta_months == 0 {
        return Err(HarnessError::InvalidSplit("split frequency must be at least 1 month".into()));
    }
    if dates.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::InvalidSplit("sample dates must be sorted".into()));
    }
    let t0 = test_start.first_day();
    if t0 < add_months(train_start, 2 * delta_months) {
        return Err(HarnessError::InvalidSplit(format!(
            "test start {test_start} leaves less than two windows after train start {train_start}"
        )));
    }
    let Some(&last) = dates.last() else {
        return Err(HarnessError::NoIterations);
    };
    let select = |w: &Window| -> Vec<usize> {
        let lo = dates.partition_point(|d| *d < w.start);
        let hi = dates.partition_point(|d| *d < w.end);
        (lo..hi).collect()
    };
    let first_validation = t0
        .checked_sub_months(Months::new(delta_months))
        .expect("date in range");
    let mut iterations = Vec::new();
    let mut warnings = Vec::new();
    for i in 0u32.. {
        let test_begin = add_months(t0, i * delta_months);
        if test_begin > last {
            break;
        }
        let val_begin = add_months(first_validation, i * delta_months);
        let train = Window {
            start: train_start,
            end: val_begin,
        };
        let validation = Window {
            start: val_begin,
            end: test_begin,
        };
        let test = Window {
            start: test_begin,
            end: add_months(test_begin, delta_months),
        };
        let (train_idx, validation_idx, test_idx) = (select(&train), select(&validation), select(&test));
        let empty: Vec<&str> = [("train", &train_idx), ("validation", &validation_idx), ("test", &test_idx)]
            .iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(n, _)| *n)
            .collect();
        if !empty.is_empty() {
            warnings.push(format!(
                "dropped iteration with test window starting {test_begin}: empty {}",
                empty.join(", ")
            ));
            continue;
        }
        iterations.push(PrequentialIteration {
            index: iterations.len(),
            train,
            validation,
            test,
            delta_months,
            train_idx,
            validation_idx,
            test_idx,
        });
    }
    if iterations.is_empty() {
        return Err(HarnessError::NoIterations);
    }
    Ok(SplitPlan { iterations, warnings })
}

/// How the validation profit of a threshold is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Traded profit divided by the number of validation samples.
    #[default]
    PerSample,
    /// Traded profit divided by the number of trades; 0 with no trades.
    PerTrade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub validation_avg_profit: f64,
}

/// The candidate thresholds 0.0, 0.1, ..., 0.9.
pub fn threshold_grid() -> [f64; 10] {
    std::array::from_fn(|k| k as f64 / 10.0)
}

/// Average validation profit when trading every sample with probability
/// strictly above `threshold`.
pub fn threshold_profit(probs: &[f64], profits: &[f64], threshold: f64, mode: ThresholdMode) -> f64 {
    let (sum, trades) = probs
        .iter()
        .zip(profits)
        .filter(|(p, _)| **p > threshold)
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    match mode {
        ThresholdMode::PerSample => sum / probs.len() as f64,
        ThresholdMode::PerTrade if trades == 0 => 0.0,
        ThresholdMode::PerTrade => sum / trades as f64,
    }
}

/// Grid threshold with the highest average validation profit; ties go to the
/// smallest threshold.
pub fn optimize_threshold(
    probs: &[f64],
    profits: &[f64],
    mode: ThresholdMode,
) -> Result<ThresholdChoice, HarnessError> {
    if probs.is_empty() || probs.len() != profits.len() {
        return Err(HarnessError::EmptyValidation);
    }
    let mut best: Option<ThresholdChoice> = None;
    for theta in threshold_grid() {
        let v = threshold_profit(probs, profits, theta, mode);
        if best.is_none_or(|b| v > b.validation_avg_profit) {
            best = Some(ThresholdChoice {
                threshold: theta,
                validation_avg_profit: v,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub spec: ClassifierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessSettings {
    pub split_months: u32,
    pub test_start: YearMonth,
    pub train_start: NaiveDate,
    /// Independently seeded repetitions; repetition `r` uses `base_seed + r`.
    pub repetitions: usize,
    pub base_seed: u64,
    /// Optimizer segments for iterative models.
    pub epochs: usize,
    pub evaluate_every: usize,
    pub models: Vec<ModelEntry>,
    pub threshold_mode: ThresholdMode,
    pub weight_mode: WeightMode,
    /// Caps the ensemble size of tree ensembles.
    pub max_estimators: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: usize,
    pub trade_date: NaiveDate,
    pub probability: f64,
    pub decision: u8,
    pub label: u8,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochScore {
    pub epoch: usize,
    pub threshold: f64,
    pub avg_profit: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub iteration: usize,
    pub model: String,
    /// `None` for the baseline, which does not depend on the seed.
    pub repetition: Option<usize>,
    pub seed: Option<u64>,
    pub train: Window,
    pub validation: Window,
    pub test: Window,
    /// `None` for the baseline.
    pub threshold: Option<f64>,
    pub validation_avg_profit: Option<f64>,
    pub metrics: MetricRow,
    /// Test scores after each evaluated optimizer segment.
    pub epochs: Vec<EpochScore>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFit {
    pub iteration: usize,
    pub model: String,
    pub repetition: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub plan: SplitPlan,
    pub results: Vec<WindowResult>,
    pub skipped: Vec<SkippedFit>,
}

struct Data<'a> {
    x: Matrix,
    samples: &'a BuiltSamples,
}

impl Data<'_> {
    fn labels(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.samples.records[i].label).collect()
    }

    fn profits(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.samples.records[i].profit).collect()
    }

    fn predictions(&self, idx: &[usize], probs: &[f64], decisions: &[u8]) -> Vec<Prediction> {
        idx.iter()
            .zip(probs.iter().zip(decisions))
            .map(|(&i, (&p, &d))| {
                let r = &self.samples.records[i];
                Prediction {
                    sample_id: r.sample_id,
                    trade_date: r.trade_date,
                    probability: p,
                    decision: d,
                    label: r.label,
                    profit: r.profit,
                }
            })
            .collect()
    }
}

struct Evaluation {
    threshold: ThresholdChoice,
    probs: Vec<f64>,
    decisions: Vec<u8>,
    metrics: MetricRow,
}

fn evaluate_model(
    model: &TrainedModel,
    data: &Data,
    it: &PrequentialIteration,
    settings: &HarnessSettings,
    name: &str,
) -> Result<Evaluation, HarnessError> {
    let model_err = |source| HarnessError::Model {
        iteration: it.index,
        model: name.to_string(),
        source,
    };
    let val_probs = model
        .predict_proba(&data.x.select(&it.validation_idx))
        .map_err(model_err)?;
    let threshold = optimize_threshold(
        &val_probs,
        &data.profits(&it.validation_idx),
        settings.threshold_mode,
    )?;
    let probs = model
        .predict_proba(&data.x.select(&it.test_idx))
        .map_err(model_err)?;
    let decisions = decide(&probs, threshold.threshold);
    let metrics = evaluate(
        &data.labels(&it.test_idx),
        &decisions,
        &probs,
        &data.profits(&it.test_idx),
        settings.weight_mode,
    )
    .map_err(|source| HarnessError::Metrics {
        iteration: it.index,
        model: name.to_string(),
        source,
    })?;
    Ok(Evaluation {
        threshold,
        probs,
        decisions,
        metrics,
    })
}

type JobOutput = (Vec<WindowResult>, Vec<SkippedFit>);

/// One model and repetition across all iterations, in time order so that
/// warm starts can carry over.
fn run_chain(
    entry: &ModelEntry,
    repetition: usize,
    data: &Data,
    plan: &SplitPlan,
    settings: &HarnessSettings,
) -> Result<JobOutput, HarnessError> {
    let mut spec = entry.spec.clone();
    spec.seed = settings.base_seed + repetition as u64;
    if let Some(cap) = settings.max_estimators {
        spec.params.cap_estimators(cap);
    }
    let epochs = settings.epochs.max(1);
    let every = settings.evaluate_every.max(1);
    let mut previous: Option<TrainedModel> = None;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for it in &plan.iterations {
        let x_train = data.x.select(&it.train_idx);
        let y_train = data.labels(&it.train_idx);
        let snapshots = match classifiers::fit_epochs(&spec, &x_train, &y_train, previous.as_ref(), epochs) {
            Ok(s) => s,
            Err(ModelError::SingleClass) => {
                skipped.push(SkippedFit {
                    iteration: it.index,
                    model: entry.id.clone(),
                    repetition,
                    reason: ModelError::SingleClass.to_string(),
                });
                continue;
            }
            Err(source) => {
                return Err(HarnessError::Model {
                    iteration: it.index,
                    model: entry.id.clone(),
                    source,
                })
            }
        };
        let mut scores = Vec::new();
        let mut cached: Option<(usize, Evaluation)> = None;
        for epoch in (1..=epochs).filter(|e| e % every == 0 || *e == epochs) {
            let snap = epoch.min(snapshots.len()) - 1;
            if cached.as_ref().is_none_or(|(s, _)| *s != snap) {
                cached = Some((snap, evaluate_model(&snapshots[snap], data, it, settings, &entry.id)?));
            }
            let ev = &cached.as_ref().expect("evaluated").1;
            scores.push(EpochScore {
                epoch,
                threshold: ev.threshold.threshold,
                avg_profit: ev.metrics.avg_profit,
                balanced_accuracy: ev.metrics.balanced_accuracy,
                average_precision: ev.metrics.average_precision,
            });
        }
        let (_, last) = cached.expect("final epoch is always evaluated");
        results.push(WindowResult {
            iteration: it.index,
            model: entry.id.clone(),
            repetition: Some(repetition),
            seed: Some(spec.seed),
            train: it.train,
            validation: it.validation,
            test: it.test,
            threshold: Some(last.threshold.threshold),
            validation_avg_profit: Some(last.threshold.validation_avg_profit),
            predictions: data.predictions(&it.test_idx, &last.probs, &last.decisions),
            metrics: last.metrics,
            epochs: scores,
        });
        previous = snapshots.into_iter().last();
    }
    Ok((results, skipped))
}

fn baseline(data: &Data, it: &PrequentialIteration, settings: &HarnessSettings) -> Result<WindowResult, HarnessError> {
    let n = it.test_idx.len();
    let probs = vec![1.0; n];
    let decisions = vec![1u8; n];
    let metrics = evaluate(
        &data.labels(&it.test_idx),
        &decisions,
        &probs,
        &data.profits(&it.test_idx),
        settings.weight_mode,
    )
    .map_err(|source| HarnessError::Metrics {
        iteration: it.index,
        model: BASELINE_ID.into(),
        source,
    })?;
    Ok(WindowResult {
        iteration: it.index,
        model: BASELINE_ID.into(),
        repetition: None,
        seed: None,
        train: it.train,
        validation: it.validation,
        test: it.test,
        threshold: None,
        validation_avg_profit: None,
        metrics,
        epochs: Vec::new(),
        predictions: data.predictions(&it.test_idx, &probs, &decisions),
    })
}

/// Runs every model and repetition over every iteration plus the baseline.
///
/// Results are ordered by iteration, then baseline followed by the models in
/// configuration order, then repetition. Models whose fit does not consume
/// the seed are fitted once and their results shared by all repetitions.
pub fn run_experiment(settings: &HarnessSettings, samples: &BuiltSamples) -> Result<ExperimentResults, HarnessError> {
    let mut seen = std::collections::HashSet::new();
    for m in &settings.models {
        if m.id == BASELINE_ID || !seen.insert(m.id.as_str()) {
            return Err(HarnessError::ModelId(m.id.clone()));
        }
    }
    let plan = make_splits(
        &samples.dates(),
        settings.split_months,
        settings.test_start,
        settings.train_start,
    )?;
    let rows: Vec<&[f64]> = samples.records.iter().map(|r| r.features.as_slice()).collect();
    let data = Data {
        x: Matrix::from_rows(&rows).map_err(|source| HarnessError::Model {
            iteration: 0,
            model: String::new(),
            source,
        })?,
        samples,
    };
    let reps = settings.repetitions.max(1);
    let jobs: Vec<(usize, usize)> = settings
        .models
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| {
            let n = if m.spec.kind().is_stochastic() { reps } else { 1 };
            (0..n).map(move |r| (mi, r))
        })
        .collect();
    let outputs: Vec<Result<JobOutput, HarnessError>> = jobs
        .par_iter()
        .map(|&(mi, r)| run_chain(&settings.models[mi], r, &data, &plan, settings))
        .collect();

    let mut keyed: Vec<((usize, usize, usize), WindowResult)> = Vec::new();
    let mut skipped = Vec::new();
    for (&(mi, r), out) in jobs.iter().zip(outputs) {
        let (results, skips) = out?;
        let shared = !settings.models[mi].spec.kind().is_stochastic();
        let reps_covered: Vec<usize> = if shared { (0..reps).collect() } else { vec![r] };
        for rep in &reps_covered {
            for res in &results {
                let mut res = res.clone();
                res.repetition = Some(*rep);
                res.seed = Some(settings.base_seed + *rep as u64);
                keyed.push(((res.iteration, mi + 1, *rep), res));
            }
            for s in &skips {
                skipped.push(SkippedFit {
                    repetition: *rep,
                    ..s.clone()
                });
            }
        }
    }
    for it in &plan.iterations {
        keyed.push(((it.index, 0, 0), baseline(&data, it, settings)?));
    }
    keyed.sort_by_key(|(k, _)| *k);
    skipped.sort_by(|a, b| (a.iteration, &a.model, a.repetition).cmp(&(b.iteration, &b.model, b.repetition)));
    Ok(ExperimentResults {
        plan,
        results: keyed.into_iter().map(|(_, r)| r).collect(),
        skipped,
    })
}

/// One JSON object per line.
pub fn write_results_jsonl<W: Write>(mut w: W, results: &[WindowResult]) -> Result<(), HarnessError> {
    for r in results {
        let line = serde_json::to_string(r).map_err(|e| HarnessError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_results_jsonl<R: BufRead>(r: R) -> Result<Vec<WindowResult>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Io(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
