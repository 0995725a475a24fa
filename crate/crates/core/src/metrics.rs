//! Classification, profit-weighted and profit metrics for one prediction set.
//!
//! Undefined values (a class absent from the labels, no traded samples, a
//! zero total weight) are `None` rather than zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability clip used by the log loss.
pub const LOG_LOSS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_i = |p_i|`.
    #[default]
    Absolute,
    /// `w_i = p_i`; weighted metrics can leave their usual ranges.
    Signed,
}

pub fn weight_vector(profits: &[f64], mode: WeightMode) -> Vec<f64> {
    match mode {
        WeightMode::Absolute => profits.iter().map(|p| p.abs()).collect(),
        WeightMode::Signed => profits.to_vec(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// `(false positive rate, true positive rate)`, starting at `(0, 0)`.
    pub roc: Vec<(f64, f64)>,
    /// `(recall, precision)`, starting at recall 0.
    pub prc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub average_precision: Option<f64>,
    pub brier_score: Option<f64>,
    pub f1: Option<f64>,
    pub log_loss: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub roc_auc: Option<f64>,
    pub prc_auc: Option<f64>,
    #[serde(skip)]
    pub curves: Curves,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfitMetrics {
    pub avg_profit: Option<f64>,
    pub tot_profit: f64,
    pub avg_trading_profit: Option<f64>,
    pub std_trading_profit: Option<f64>,
    pub downw_std_trading_profit: Option<f64>,
    pub avg_trades: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn check_prob(p: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(MetricsError::ProbabilityOutOfRange(p))
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Threshold sweep shared by the ROC and precision-recall curves: cumulative
/// weighted true/false positives at each distinct score, highest first.
fn score_sweep(y: &[u8], probs: &[f64], w: &[f64]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for (pos, &i) in order.iter().enumerate() {
        if y[i] == 1 {
            tp += w[i];
        } else {
            fp += w[i];
        }
        let last_of_group = order
            .get(pos + 1)
            .is_none_or(|&next| probs[next] != probs[i]);
        if last_of_group {
            out.push((tp, fp));
        }
    }
    out
}

pub fn classification_metrics(
    y: &[u8],
    decisions: &[u8],
    probs: &[f64],
    weights: Option<&[f64]>,
) -> Result<ClassificationMetrics, MetricsError> {
    let n = y.len();
    if decisions.len() != n || probs.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(MetricsError::LengthMismatch(format!(
            "labels {n}, decisions {}, probabilities {}",
            decisions.len(),
            probs.len()
        )));
    }
    for &p in probs {
        check_prob(p)?;
    }
    let unit;
    let w = match weights {
        Some(w) => w,
        None => {
            unit = vec![1.0; n];
            &unit
        }
    };

    let (mut tp, mut fp, mut tn, mut fneg) = (0.0, 0.0, 0.0, 0.0);
    let (mut total, mut brier, mut logloss) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let wi = w[i];
        total += wi;
        match (y[i] == 1, decisions[i] == 1) {
            (true, true) => tp += wi,
            (false, true) => fp += wi,
            (false, false) => tn += wi,
            (true, false) => fneg += wi,
        }
        let yi = f64::from(y[i]);
        brier += wi * (probs[i] - yi).powi(2);
        let p = probs[i].clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
        logloss -= wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
    }
    let pos_total = tp + fneg;
    let neg_total = tn + fp;

    // with no positive labels every positive was found: recall is vacuously 1
    let recall = Some(ratio(tp, pos_total).unwrap_or(1.0));
    let specificity = ratio(tn, neg_total);
    let balanced_accuracy = match (recall, specificity) {
        (Some(r), Some(s)) if pos_total != 0.0 => Some((r + s) / 2.0),
        _ => None,
    };

    let sweep = score_sweep(y, probs, w);
    let (roc_auc, roc) = if pos_total != 0.0 && neg_total != 0.0 {
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(sweep.iter().map(|&(t, f)| (f / neg_total, t / pos_total)));
        (Some(trapezoid(&pts)), pts)
    } else {
        (None, Vec::new())
    };

    let (average_precision, prc_auc, prc) = if pos_total != 0.0 {
        let mut pts = Vec::with_capacity(sweep.len() + 1);
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &(t, f) in &sweep {
            let precision = ratio(t, t + f).unwrap_or(0.0);
            let rec = t / pos_total;
            if pts.is_empty() {
                pts.push((0.0, precision));
            }
            ap += (rec - prev_recall) * precision;
            prev_recall = rec;
            pts.push((rec, precision));
        }
        (Some(ap), Some(trapezoid(&pts)), pts)
    } else {
        (None, None, Vec::new())
    };

    Ok(ClassificationMetrics {
        accuracy: ratio(tp + tn, total),
        balanced_accuracy,
        average_precision,
        brier_score: ratio(brier, total),
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fneg),
        log_loss: ratio(logloss, total),
        precision: ratio(tp, tp + fp),
        recall,
        roc_auc,
        prc_auc,
        curves: Curves { roc, prc },
    })
}

pub fn profit_metrics(decisions: &[u8], profits: &[f64]) -> Result<ProfitMetrics, MetricsError> {
    if decisions.len() != profits.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "decisions {}, profits {}",
            decisions.len(),
            profits.len()
        )));
    }
    let n = profits.len() as f64;
    let traded: Vec<f64> = decisions
        .iter()
        .zip(profits)
        .filter(|(d, _)| **d != 0)
        .map(|(_, p)| *p)
        .collect();
    let tot: f64 = decisions
        .iter()
        .zip(profits)
        .map(|(d, p)| f64::from(*d) * p)
        .sum();
    let downside: Vec<f64> = traded.iter().copied().filter(|p| *p < 0.0).collect();
    Ok(ProfitMetrics {
        avg_profit: ratio(tot, n),
        tot_profit: tot,
        avg_trading_profit: mean(&traded),
        std_trading_profit: population_std(&traded),
        downw_std_trading_profit: population_std(&downside),
        avg_trades: ratio(traded.len() as f64, n),
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn population_std(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// The full metric set for one model on one test window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub average_precision: Option<f64>,
    pub brier_score: Option<f64>,
    pub f1: Option<f64>,
    pub log_loss: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub roc_auc: Option<f64>,
    pub prc_auc: Option<f64>,
    pub accuracy_weighted: Option<f64>,
    pub balanced_accuracy_weighted: Option<f64>,
    pub average_precision_weighted: Option<f64>,
    pub brier_score_weighted: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub log_loss_weighted: Option<f64>,
    pub precision_weighted: Option<f64>,
    pub recall_weighted: Option<f64>,
    pub roc_auc_weighted: Option<f64>,
    pub prc_auc_weighted: Option<f64>,
    pub avg_profit: Option<f64>,
    pub tot_profit: Option<f64>,
    pub avg_trading_profit: Option<f64>,
    pub std_trading_profit: Option<f64>,
    pub downw_std_trading_profit: Option<f64>,
    pub avg_trades: Option<f64>,
    pub curves: Curves,
}

/// Row labels of the per-experiment metric tables, in table order.
pub const TABLE_ROWS: [&str; 24] = [
    "accuracy",
    "balanced_accuracy",
    "average_precision",
    "brier_score",
    "f1",
    "log_loss",
    "precision",
    "recall",
    "roc_auc",
    "accuracy_weighted",
    "balanced_accuracy_weighted",
    "average_precision_weighted",
    "brier_score_weighted",
    "f1_weighted",
    "log_loss_weighted",
    "precision_weighted",
    "recall_weighted",
    "roc_auc_weighted",
    "avg_profit",
    "tot_profit",
    "avg_trading_profit",
    "std_trading_profit",
    "downw_std_trading_profit",
    "avg_trades",
];

/// Every scalar metric, table rows plus the PR-curve areas.
pub const SCALAR_METRICS: [&str; 26] = [
    "accuracy",
    "balanced_accuracy",
    "average_precision",
    "brier_score",
    "f1",
    "log_loss",
    "precision",
    "recall",
    "roc_auc",
    "prc_auc",
    "accuracy_weighted",
    "balanced_accuracy_weighted",
    "average_precision_weighted",
    "brier_score_weighted",
    "f1_weighted",
    "log_loss_weighted",
    "precision_weighted",
    "recall_weighted",
    "roc_auc_weighted",
    "prc_auc_weighted",
    "avg_profit",
    "tot_profit",
    "avg_trading_profit",
    "std_trading_profit",
    "downw_std_trading_profit",
    "avg_trades",
];

impl MetricRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => self.accuracy,
            "balanced_accuracy" => self.balanced_accuracy,
            "average_precision" => self.average_precision,
            "brier_score" => self.brier_score,
            "f1" => self.f1,
            "log_loss" => self.log_loss,
            "precision" => self.precision,
            "recall" => self.recall,
            "roc_auc" => self.roc_auc,
            "prc_auc" => self.prc_auc,
            "accuracy_weighted" => self.accuracy_weighted,
            "balanced_accuracy_weighted" => self.balanced_accuracy_weighted,
            "average_precision_weighted" => self.average_precision_weighted,
            "brier_score_weighted" => self.brier_score_weighted,
            "f1_weighted" => self.f1_weighted,
            "log_loss_weighted" => self.log_loss_weighted,
            "precision_weighted" => self.precision_weighted,
            "recall_weighted" => self.recall_weighted,
            "roc_auc_weighted" => self.roc_auc_weighted,
            "prc_auc_weighted" => self.prc_auc_weighted,
            "avg_profit" => self.avg_profit,
            "tot_profit" => self.tot_profit,
            "avg_trading_profit" => self.avg_trading_profit,
            "std_trading_profit" => self.std_trading_profit,
            "downw_std_trading_profit" => self.downw_std_trading_profit,
            "avg_trades" => self.avg_trades,
            _ => None,
        }
    }
}

/// Scores one prediction set: unweighted and profit-weighted classification
/// metrics plus the profit metrics.
pub fn evaluate(
    y: &[u8],
    decisions: &[u8],
    probs: &[f64],
    profits: &[f64],
    mode: WeightMode,
) -> Result<MetricRow, MetricsError> {
    if profits.len() != y.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "labels {}, profits {}",
            y.len(),
            profits.len()
        )));
    }
    let c = classification_metrics(y, decisions, probs, None)?;
    let weights = weight_vector(profits, mode);
    let cw = classification_metrics(y, decisions, probs, Some(&weights))?;
    let p = profit_metrics(decisions, profits)?;
    Ok(MetricRow {
        accuracy: c.accuracy,
        balanced_accuracy: c.balanced_accuracy,
        average_precision: c.average_precision,
        brier_score: c.brier_score,
        f1: c.f1,
        log_loss: c.log_loss,
        precision: c.precision,
        recall: c.recall,
        roc_auc: c.roc_auc,
        prc_auc: c.prc_auc,
        accuracy_weighted: cw.accuracy,
        balanced_accuracy_weighted: cw.balanced_accuracy,
        average_precision_weighted: cw.average_precision,
        brier_score_weighted: cw.brier_score,
        f1_weighted: cw.f1,
        log_loss_weighted: cw.log_loss,
        precision_weighted: cw.precision,
        recall_weighted: cw.recall,
        roc_auc_weighted: cw.roc_auc,
        prc_auc_weighted: cw.prc_auc,
        avg_profit: p.avg_profit,
        tot_profit: Some(p.tot_profit),
        avg_trading_profit: p.avg_trading_profit,
        std_trading_profit: p.std_trading_profit,
        downw_std_trading_profit: p.downw_std_trading_profit,
        avg_trades: p.avg_trades,
        curves: c.curves,
    })
}
