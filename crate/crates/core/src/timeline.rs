//! Weekly trade/don't-trade timeline of one model's predicted probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::weekly_friday_schedule;
use crate::classifiers::decide;
use crate::prequential::WindowResult;

pub const TRADE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub week: usize,
    /// Decision date, or the label given in a probability file.
    pub label: String,
    pub probability: f64,
    pub trade: bool,
}

impl TimelineRow {
    pub fn color(&self) -> &'static str {
        if self.trade {
            "green"
        } else {
            "red"
        }
    }
}

/// Marks each probability, in order: trade exactly when it exceeds 0.5.
pub fn mark(entries: &[(String, f64)]) -> Vec<TimelineRow> {
    let probs: Vec<f64> = entries.iter().map(|(_, p)| *p).collect();
    entries
        .iter()
        .zip(decide(&probs, TRADE_THRESHOLD))
        .enumerate()
        .map(|(i, ((label, p), d))| TimelineRow {
            week: i + 1,
            label: label.clone(),
            probability: *p,
            trade: d == 1,
        })
        .collect()
}

/// Friday rows in `[from, to]` for `model`, skipping weeks with a missing
/// trading day. Probabilities of repeated runs of the same date are averaged.
pub fn timeline_from_results(
    results: &[WindowResult],
    model: &str,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<TimelineRow>, String> {
    let mut by_date: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.model == model) {
        for p in &r.predictions {
            let e = by_date.entry(p.trade_date).or_insert((0.0, 0));
            e.0 += p.probability;
            e.1 += 1;
        }
    }
    if by_date.is_empty() {
        return Err(format!("no predictions for model {model:?}"));
    }
    let dates: Vec<NaiveDate> = by_date.keys().copied().collect();
    let entries: Vec<(String, f64)> = weekly_friday_schedule(&dates, from, to)
        .into_iter()
        .map(|d| {
            let (s, n) = by_date[&d];
            (d.to_string(), s / n as f64)
        })
        .collect();
    Ok(mark(&entries))
}

/// Reads `label,probability` rows (header required, any first column name).
pub fn read_probabilities<R: Read>(r: R) -> Result<Vec<(String, f64)>, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.len() != 2 || &headers[1] != "probability" {
        return Err("expected a two-column header ending in probability".into());
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let p: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| format!("row {}: bad probability {:?}", i + 2, &rec[1]))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("row {}: probability {p} outside [0, 1]", i + 2));
        }
        out.push((rec[0].to_string(), p));
    }
    Ok(out)
}

pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut out = String::from("week,label,probability,decision,color\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.5},{},{}",
            r.week,
            r.label,
            r.probability,
            if r.trade { "trade" } else { "no_trade" },
            r.color()
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marking_is_strict() {
        let rows = mark(&[("a".into(), 0.53780), ("b".into(), 0.25678), ("c".into(), 0.5)]);
        assert_eq!(rows.iter().map(|r| r.trade).collect::<Vec<_>>(), vec![true, false, false]);
        assert_eq!(rows[1].color(), "red");
        assert_eq!(rows[2].week, 3);
    }

    #[test]
    fn reads_probability_files() {
        let rows = read_probabilities("week,probability\n1,0.53780\n2,0.44936\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![("1".to_string(), 0.5378), ("2".to_string(), 0.44936)]);
        assert!(read_probabilities("week,probability\n1,1.5\n".as_bytes()).is_err());
    }
}
