//! Significance tests and aggregation of per-window results into tables and
//! plot-data files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::metrics::{SCALAR_METRICS, TABLE_ROWS};
use crate::prequential::{Window, WindowResult, BASELINE_ID};

/// Largest number of nonzero differences tested with the exact distribution.
pub const EXACT_MAX_N: usize = 25;
/// Fewest nonzero differences accepted by the signed-rank test.
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {MIN_PAIRS} nonzero differences, got {0}")]
    TooFewPairs(usize),
    #[error("non-finite difference at position {0}")]
    NonFinite(usize),
    #[error("number of comparisons {m} is smaller than the number of p-values {len}")]
    Comparisons { m: usize, len: usize },
    #[error("no results to aggregate")]
    NoResults,
    #[error("write {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference is zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub statistic: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Mid-ranks (1-based) of `v`, plus the sizes of the tie groups.
pub fn midranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Number of sign assignments giving each doubled positive-rank sum; index
/// `s` counts assignments with `2 * W+ = s`.
pub fn signed_rank_counts(doubled_ranks: &[u64]) -> Vec<f64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Two-sided exact p-value `min(1, 2 * min(P(T <= t), P(T >= t)))` for the
/// doubled statistic `doubled_stat`.
pub fn exact_p_value(doubled_ranks: &[u64], doubled_stat: u64) -> f64 {
    let counts = signed_rank_counts(doubled_ranks);
    let total = 2f64.powi(doubled_ranks.len() as i32);
    let t = doubled_stat as usize;
    let lower: f64 = counts[..=t.min(counts.len() - 1)].iter().sum();
    let upper: f64 = counts[t.min(counts.len())..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and ties get mid-ranks. Up to
/// [`EXACT_MAX_N`] nonzero differences the exact null distribution is used,
/// above that a normal approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        if !d.is_finite() {
            return Err(StatsError::NonFinite(i));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let n = diffs.len();
    if n == 0 && !a.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            n: 0,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs(n));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    if n <= EXACT_MAX_N {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r) as u64).collect();
        return Ok(WilcoxonResult {
            statistic: w_plus,
            n,
            p_value: exact_p_value(&doubled, (2.0 * w_plus) as u64),
            method: WilcoxonMethod::Exact,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let mut d = w_plus - mean;
    d -= 0.5 * d.signum();
    let z = d / var.sqrt();
    let normal = Normal::standard();
    Ok(WilcoxonResult {
        statistic: w_plus,
        n,
        p_value: (2.0 * normal.sf(z.abs())).min(1.0),
        method: WilcoxonMethod::Normal,
    })
}

/// `min(1, m * p)` for each p-value.
pub fn bonferroni(pvals: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if m < pvals.len() {
        return Err(StatsError::Comparisons { m, len: pvals.len() });
    }
    Ok(pvals.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMean {
    pub metric: String,
    pub mean: Option<f64>,
    /// Windows that contributed a value.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub windows: usize,
    pub metrics: Vec<MetricMean>,
}

impl ModelSummary {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).and_then(|m| m.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinceTable {
    pub cutoff: NaiveDate,
    /// No test window starts on or after the cutoff.
    pub empty: bool,
    pub models: Vec<ModelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `"full"` or `"since"`.
    pub period: String,
    pub model: String,
    pub baseline: String,
    pub metric: String,
    pub pairs: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub method: Option<WilcoxonMethod>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitPoint {
    pub iteration: usize,
    pub test_start: NaiveDate,
    pub tot_profit: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitSeries {
    pub model: String,
    pub points: Vec<ProfitPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub models: Vec<String>,
    pub windows: usize,
    pub full: Vec<ModelSummary>,
    pub since: SinceTable,
    pub comparisons: Vec<Comparison>,
    pub cumulative_profit: Vec<ProfitSeries>,
}

/// Per-model, per-window metric values averaged over repetitions.
#[derive(Debug, Clone)]
pub struct WindowTable {
    pub models: Vec<String>,
    /// Every test window in time order, keyed by iteration.
    pub windows: BTreeMap<usize, Window>,
    /// `(model index, iteration)` to values in [`SCALAR_METRICS`] order.
    pub values: BTreeMap<(usize, usize), Vec<Option<f64>>>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl WindowTable {
    pub fn build(results: &[WindowResult]) -> Self {
        let mut models: Vec<String> = Vec::new();
        if results.iter().any(|r| r.model == BASELINE_ID) {
            models.push(BASELINE_ID.to_string());
        }
        for r in results {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let mut windows = BTreeMap::new();
        let mut grouped: BTreeMap<(usize, usize), Vec<&WindowResult>> = BTreeMap::new();
        for r in results {
            windows.insert(r.iteration, r.test);
            let mi = models.iter().position(|m| *m == r.model).expect("collected above");
            grouped.entry((mi, r.iteration)).or_default().push(r);
        }
        let values = grouped
            .into_iter()
            .map(|(k, rows)| {
                let v = SCALAR_METRICS
                    .iter()
                    .map(|m| mean_of(rows.iter().filter_map(|r| r.metrics.get(m))))
                    .collect();
                (k, v)
            })
            .collect();
        Self {
            models,
            windows,
            values,
        }
    }

    pub fn value(&self, model: usize, iteration: usize, metric: &str) -> Option<f64> {
        let j = SCALAR_METRICS.iter().position(|m| *m == metric)?;
        self.values.get(&(model, iteration)).and_then(|v| v[j])
    }

    fn iterations_since(&self, cutoff: Option<NaiveDate>) -> Vec<usize> {
        self.windows
            .iter()
            .filter(|(_, w)| cutoff.is_none_or(|c| w.start >= c))
            .map(|(i, _)| *i)
            .collect()
    }

    fn summaries(&self, iterations: &[usize]) -> Vec<ModelSummary> {
        (0..self.models.len())
            .map(|mi| ModelSummary {
                model: self.models[mi].clone(),
                windows: iterations
                    .iter()
                    .filter(|i| self.values.contains_key(&(mi, **i)))
                    .count(),
                metrics: SCALAR_METRICS
                    .iter()
                    .map(|m| {
                        let vals: Vec<f64> = iterations
                            .iter()
                            .filter_map(|&i| self.value(mi, i, m))
                            .collect();
                        MetricMean {
                            metric: m.to_string(),
                            mean: mean_of(vals.iter().copied()),
                            count: vals.len(),
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    fn comparisons(&self, iterations: &[usize], period: &str) -> Vec<Comparison> {
        let Some(base) = self.models.iter().position(|m| m == BASELINE_ID) else {
            return Vec::new();
        };
        let compared: Vec<usize> = (0..self.models.len()).filter(|&m| m != base).collect();
        let m = compared.len();
        let mut out = Vec::new();
        for &mi in &compared {
            for metric in TABLE_ROWS {
                let (a, b): (Vec<f64>, Vec<f64>) = iterations
                    .iter()
                    .filter_map(|&i| Some((self.value(mi, i, metric)?, self.value(base, i, metric)?)))
                    .unzip();
                let mut c = Comparison {
                    period: period.to_string(),
                    model: self.models[mi].clone(),
                    baseline: BASELINE_ID.to_string(),
                    metric: metric.to_string(),
                    pairs: a.len(),
                    statistic: None,
                    p_value: None,
                    p_adjusted: None,
                    method: None,
                    note: None,
                };
                match wilcoxon_signed_rank(&a, &b) {
                    Ok(w) => {
                        c.statistic = Some(w.statistic);
                        c.p_value = Some(w.p_value);
                        c.p_adjusted = Some((w.p_value * m as f64).min(1.0));
                        c.method = Some(w.method);
                    }
                    Err(e) => c.note = Some(e.to_string()),
                }
                out.push(c);
            }
        }
        out
    }
}

/// Means over all windows and over windows starting on or after `cutoff`,
/// each model compared with the baseline per metric, and cumulative profit.
pub fn aggregate(results: &[WindowResult], cutoff: NaiveDate) -> Result<AggregateReport, StatsError> {
    if results.is_empty() {
        return Err(StatsError::NoResults);
    }
    let table = WindowTable::build(results);
    let all = table.iterations_since(None);
    let since = table.iterations_since(Some(cutoff));
    let mut comparisons = table.comparisons(&all, "full");
    if !since.is_empty() {
        comparisons.extend(table.comparisons(&since, "since"));
    }
    let cumulative_profit = (0..table.models.len())
        .map(|mi| {
            let mut acc = 0.0;
            let points = all
                .iter()
                .filter_map(|&i| {
                    let p = table.value(mi, i, "tot_profit")?;
                    acc += p;
                    Some(ProfitPoint {
                        iteration: i,
                        test_start: table.windows[&i].start,
                        tot_profit: p,
                        cumulative: acc,
                    })
                })
                .collect();
            ProfitSeries {
                model: table.models[mi].clone(),
                points,
            }
        })
        .collect();
    Ok(AggregateReport {
        models: table.models.clone(),
        windows: all.len(),
        full: table.summaries(&all),
        since: SinceTable {
            cutoff,
            empty: since.is_empty(),
            models: if since.is_empty() { Vec::new() } else { table.summaries(&since) },
        },
        comparisons,
        cumulative_profit,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), StatsError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| StatsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Metric table: one row per table metric, a column per model over all
/// windows followed by a column per model since the cutoff year.
pub fn metrics_table_csv(report: &AggregateReport) -> String {
    let year = report.since.cutoff.format("%Y").to_string();
    let mut out = String::from("metric");
    for m in &report.models {
        write!(out, ",{m}").unwrap();
    }
    for m in &report.models {
        write!(out, ",{m} ({year})").unwrap();
    }
    out.push('\n');
    let cell = |s: Option<&ModelSummary>, metric: &str| {
        s.and_then(|s| s.get(metric))
            .map(|v| format!("{v:.5}"))
            .unwrap_or_default()
    };
    for metric in TABLE_ROWS {
        out.push_str(metric);
        for m in &report.models {
            let s = report.full.iter().find(|s| s.model == *m);
            write!(out, ",{}", cell(s, metric)).unwrap();
        }
        for m in &report.models {
            let s = report.since.models.iter().find(|s| s.model == *m);
            write!(out, ",{}", cell(s, metric)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `cumulative_profit.csv`, `per_window_profit.csv`,
/// `profit_distribution.csv` and `metric_boxes.csv` into `out_dir`.
pub fn emit_plot_data(
    report: &AggregateReport,
    results: &[WindowResult],
    out_dir: &Path,
) -> Result<(), StatsError> {
    let table = WindowTable::build(results);
    let header = |first: &str| {
        let mut h = first.to_string();
        for m in &table.models {
            write!(h, ",{m}").unwrap();
        }
        h.push('\n');
        h
    };

    let mut cumulative = header("iteration,test_start");
    let mut per_window = header("iteration,test_start,test_end");
    for (&i, w) in &table.windows {
        write!(cumulative, "{i},{}", w.start).unwrap();
        for s in &report.cumulative_profit {
            let p = s.points.iter().find(|p| p.iteration == i).map(|p| p.cumulative);
            write!(cumulative, ",{}", opt(p)).unwrap();
        }
        cumulative.push('\n');
        write!(per_window, "{i},{},{}", w.start, w.end).unwrap();
        for mi in 0..table.models.len() {
            write!(per_window, ",{}", opt(table.value(mi, i, "tot_profit"))).unwrap();
        }
        per_window.push('\n');
    }

    let mut distribution = String::from("model,repetition,iteration,test_start,tot_profit,avg_profit,avg_trading_profit\n");
    for r in results {
        writeln!(
            distribution,
            "{},{},{},{},{},{},{}",
            r.model,
            r.repetition.map(|v| v.to_string()).unwrap_or_default(),
            r.iteration,
            r.test.start,
            opt(r.metrics.tot_profit),
            opt(r.metrics.avg_profit),
            opt(r.metrics.avg_trading_profit)
        )
        .unwrap();
    }

    let mut boxes = String::from("period,model,iteration,test_start,average_precision,balanced_accuracy\n");
    let cutoff = report.since.cutoff;
    for (period, since) in [("full", None), ("since", Some(cutoff))] {
        for (mi, m) in table.models.iter().enumerate() {
            for i in table.iterations_since(since) {
                if !table.values.contains_key(&(mi, i)) {
                    continue;
                }
                writeln!(
                    boxes,
                    "{period},{m},{i},{},{},{}",
                    table.windows[&i].start,
                    opt(table.value(mi, i, "average_precision")),
                    opt(table.value(mi, i, "balanced_accuracy"))
                )
                .unwrap();
            }
        }
    }

    write_file(out_dir, "cumulative_profit.csv", &cumulative)?;
    write_file(out_dir, "per_window_profit.csv", &per_window)?;
    write_file(out_dir, "profit_distribution.csv", &distribution)?;
    write_file(out_dir, "metric_boxes.csv", &boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricRow;

    #[test]
    fn exact_all_positive_six() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap();
        assert_eq!(r.p_value, 2.0 / 64.0);
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.statistic, 21.0);
    }

    #[test]
    fn degenerate_and_too_few() {
        let a = [1.0, 2.0, 3.0];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert_eq!((r.p_value, r.method), (1.0, WilcoxonMethod::Degenerate));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]),
            Err(StatsError::TooFewPairs(4))
        ));
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![1, 1, 2]);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(&[0.01], 5).unwrap(), vec![0.05]);
        assert_eq!(bonferroni(&[0.4], 5).unwrap(), vec![1.0]);
        assert!(bonferroni(&[], 5).unwrap().is_empty());
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    fn result(model: &str, iteration: usize, rep: Option<usize>, tot: f64, start: &str) -> WindowResult {
        let start: NaiveDate = start.parse().unwrap();
        let w = Window {
            start,
            end: start + chrono::Duration::days(28),
        };
        WindowResult {
            iteration,
            model: model.into(),
            repetition: rep,
            seed: None,
            train: w,
            validation: w,
            test: w,
            threshold: None,
            validation_avg_profit: None,
            metrics: MetricRow {
                tot_profit: Some(tot),
                avg_trades: Some(1.0),
                ..Default::default()
            },
            epochs: Vec::new(),
            predictions: Vec::new(),
        }
    }

    #[test]
    fn cumulative_series_and_empty_since() {
        let rs = vec![
            result("All", 0, None, 1.0, "2014-02-01"),
            result("All", 1, None, 2.0, "2014-03-01"),
            result("All", 2, None, 3.0, "2014-04-01"),
        ];
        let rep = aggregate(&rs, "2019-01-01".parse().unwrap()).unwrap();
        let c: Vec<f64> = rep.cumulative_profit[0].points.iter().map(|p| p.cumulative).collect();
        assert_eq!(c, vec![1.0, 3.0, 6.0]);
        assert!(rep.since.empty);
        assert_eq!(rep.full[0].get("avg_trades"), Some(1.0));
    }

    #[test]
    fn repetitions_are_averaged_per_window() {
        let rs = vec![
            result("All", 0, None, 0.0, "2014-02-01"),
            result("rf", 0, Some(0), 1.0, "2014-02-01"),
            result("rf", 0, Some(1), 3.0, "2014-02-01"),
        ];
        let rep = aggregate(&rs, "2014-01-01".parse().unwrap()).unwrap();
        assert_eq!(rep.models, vec!["All", "rf"]);
        let rf = &rep.full[1];
        assert_eq!(rf.get("tot_profit"), Some(2.0));
        assert_eq!(rf.windows, 1);
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&rep, &rs, dir.path()).unwrap();
        let pw = std::fs::read_to_string(dir.path().join("per_window_profit.csv")).unwrap();
        assert_eq!(pw, "iteration,test_start,test_end,All,rf\n0,2014-02-01,2014-03-01,0,2\n");
        let table = metrics_table_csv(&rep);
        assert!(table.starts_with("metric,All,rf,All (2014),rf (2014)\n"));
        assert!(table.contains("\ntot_profit,0.00000,2.00000,0.00000,2.00000\n"));
    }
}
