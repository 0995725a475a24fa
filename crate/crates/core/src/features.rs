//! Per-decision-date feature vectors and labeled sample sets.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MarketDataset;
use crate::strategy::{build_straddle, settle_on_dataset, StrategyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureName {
    #[serde(rename = "putPrice")]
    PutPrice,
    #[serde(rename = "callPrice")]
    CallPrice,
    #[serde(rename = "strike")]
    Strike,
    #[serde(rename = "spx1")]
    Spx1,
    #[serde(rename = "spx2")]
    Spx2,
    #[serde(rename = "spx3")]
    Spx3,
    #[serde(rename = "spx4")]
    Spx4,
    #[serde(rename = "spx5")]
    Spx5,
    #[serde(rename = "vix0")]
    Vix0,
    #[serde(rename = "vix1")]
    Vix1,
    #[serde(rename = "vix2")]
    Vix2,
    #[serde(rename = "vix3")]
    Vix3,
    #[serde(rename = "vix4")]
    Vix4,
    #[serde(rename = "vix5")]
    Vix5,
    #[serde(rename = "daysToExpiry")]
    DaysToExpiry,
    #[serde(rename = "spxHigh")]
    SpxHigh,
    #[serde(rename = "spxLow")]
    SpxLow,
    #[serde(rename = "vixHigh")]
    VixHigh,
    #[serde(rename = "vixLow")]
    VixLow,
    #[serde(rename = "pmSettled")]
    PmSettled,
}

impl FeatureName {
    pub const ALL: [FeatureName; 20] = [
        FeatureName::PutPrice,
        FeatureName::CallPrice,
        FeatureName::Strike,
        FeatureName::Spx1,
        FeatureName::Spx2,
        FeatureName::Spx3,
        FeatureName::Spx4,
        FeatureName::Spx5,
        FeatureName::Vix0,
        FeatureName::Vix1,
        FeatureName::Vix2,
        FeatureName::Vix3,
        FeatureName::Vix4,
        FeatureName::Vix5,
        FeatureName::DaysToExpiry,
        FeatureName::SpxHigh,
        FeatureName::SpxLow,
        FeatureName::VixHigh,
        FeatureName::VixLow,
        FeatureName::PmSettled,
    ];

    pub fn as_str(self) -> &'static str {
        use FeatureName::*;
        match self {
            PutPrice => "putPrice",
            CallPrice => "callPrice",
            Strike => "strike",
            Spx1 => "spx1",
            Spx2 => "spx2",
            Spx3 => "spx3",
            Spx4 => "spx4",
            Spx5 => "spx5",
            Vix0 => "vix0",
            Vix1 => "vix1",
            Vix2 => "vix2",
            Vix3 => "vix3",
            Vix4 => "vix4",
            Vix5 => "vix5",
            DaysToExpiry => "daysToExpiry",
            SpxHigh => "spxHigh",
            SpxLow => "spxLow",
            VixHigh => "vixHigh",
            VixLow => "vixLow",
            PmSettled => "pmSettled",
        }
    }

    /// Trading days of history needed before the decision date.
    fn lookback(self) -> usize {
        use FeatureName::*;
        match self {
            Spx1 | Vix1 => 1,
            Spx2 | Vix2 => 2,
            Spx3 | Vix3 => 3,
            Spx4 | Vix4 => 4,
            Spx5 | Vix5 => 5,
            _ => 0,
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureName {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureName::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

/// Feature columns of the first experiment family.
pub const BASIC_FEATURES: [FeatureName; 15] = [
    FeatureName::PutPrice,
    FeatureName::CallPrice,
    FeatureName::Strike,
    FeatureName::Spx1,
    FeatureName::Spx2,
    FeatureName::Spx3,
    FeatureName::Spx4,
    FeatureName::Spx5,
    FeatureName::Vix0,
    FeatureName::Vix1,
    FeatureName::Vix2,
    FeatureName::Vix3,
    FeatureName::Vix4,
    FeatureName::Vix5,
    FeatureName::DaysToExpiry,
];

/// Basic columns plus the intraday extremes and settlement style.
pub fn extended_features() -> Vec<FeatureName> {
    let mut v = BASIC_FEATURES.to_vec();
    v.extend([
        FeatureName::SpxHigh,
        FeatureName::SpxLow,
        FeatureName::VixHigh,
        FeatureName::VixLow,
        FeatureName::PmSettled,
    ]);
    v
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FeatureError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("empty feature set")]
    EmptyFeatureSet,
    #[error("need {needed} prior closes, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("non-positive close {0}")]
    NonPositiveClose(f64),
    #[error("{date}: {source}")]
    Strategy {
        date: NaiveDate,
        #[source]
        source: StrategyError,
    },
    #[error("{date}: feature {feature} is not finite")]
    NonFinite { date: NaiveDate, feature: FeatureName },
    #[error("no sample could be built")]
    EmptyDataset,
    #[error("sample csv: {0}")]
    Csv(String),
}

/// Ordered, duplicate-free list of feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureName>", into = "Vec<FeatureName>")]
pub struct FeatureSet(Vec<FeatureName>);

impl FeatureSet {
    /// Keeps the first occurrence of every name, in order.
    pub fn new(names: impl IntoIterator<Item = FeatureName>) -> Result<Self, FeatureError> {
        let mut out: Vec<FeatureName> = Vec::new();
        for n in names {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        if out.is_empty() {
            return Err(FeatureError::EmptyFeatureSet);
        }
        Ok(Self(out))
    }

    pub fn parse<S: AsRef<str>>(names: &[S]) -> Result<Self, FeatureError> {
        let parsed = names
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<FeatureName>, _>>()?;
        Self::new(parsed)
    }

    pub fn names(&self) -> &[FeatureName] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn lookback(&self) -> usize {
        self.0.iter().map(|f| f.lookback()).max().unwrap_or(0)
    }
}

impl TryFrom<Vec<FeatureName>> for FeatureSet {
    type Error = FeatureError;
    fn try_from(v: Vec<FeatureName>) -> Result<Self, Self::Error> {
        FeatureSet::new(v)
    }
}

impl From<FeatureSet> for Vec<FeatureName> {
    fn from(s: FeatureSet) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeSampleRecord {
    pub sample_id: usize,
    pub trade_date: NaiveDate,
    /// Values in the order of the feature set that built the record.
    pub features: Vec<f64>,
    pub profit: f64,
    pub label: u8,
}

/// `close(t - lag) / close(t)` where `closes` ends at the decision date.
pub fn relative_spx(closes: &[f64], lag: usize) -> Result<f64, FeatureError> {
    if closes.len() < lag + 1 {
        return Err(FeatureError::InsufficientHistory {
            needed: lag,
            available: closes.len().saturating_sub(1),
        });
    }
    let current = closes[closes.len() - 1];
    let past = closes[closes.len() - 1 - lag];
    if current <= 0.0 || past <= 0.0 {
        return Err(FeatureError::NonPositiveClose(current.min(past)));
    }
    Ok(past / current)
}

/// Builds one labeled sample for `trade_date`. `sample_id` is left at 0.
pub fn build_sample(
    dataset: &MarketDataset,
    trade_date: NaiveDate,
    tenor: i64,
    features: &FeatureSet,
) -> Result<TradeSampleRecord, FeatureError> {
    let strat = |source| FeatureError::Strategy {
        date: trade_date,
        source,
    };
    let pos = dataset
        .position(trade_date)
        .ok_or(strat(StrategyError::UnknownDate(trade_date)))?;
    let lookback = features.lookback();
    if pos < lookback {
        return Err(FeatureError::InsufficientHistory {
            needed: lookback,
            available: pos,
        });
    }
    let trade = build_straddle(dataset, trade_date, tenor).map_err(strat)?;
    let settled = settle_on_dataset(dataset, trade).map_err(strat)?;
    let trade = &settled.trade;

    let spx = dataset.spx_bars();
    let vix = dataset.vix_bars();
    let spx_closes: Vec<f64> = spx[pos - lookback..=pos].iter().map(|b| b.close).collect();

    let mut values = Vec::with_capacity(features.len());
    for &f in features.names() {
        use FeatureName::*;
        let v = match f {
            PutPrice => trade.put_sell_price,
            CallPrice => trade.call_sell_price,
            Strike => trade.strike,
            Spx1 | Spx2 | Spx3 | Spx4 | Spx5 => relative_spx(&spx_closes, f.lookback())?,
            Vix0 | Vix1 | Vix2 | Vix3 | Vix4 | Vix5 => vix[pos - f.lookback()].close,
            DaysToExpiry => trade.days_to_expiry as f64,
            SpxHigh => spx[pos].high,
            SpxLow => spx[pos].low,
            VixHigh => vix[pos].high,
            VixLow => vix[pos].low,
            PmSettled => f64::from(u8::from(trade.pm_settled)),
        };
        if !v.is_finite() {
            return Err(FeatureError::NonFinite {
                date: trade_date,
                feature: f,
            });
        }
        values.push(v);
    }
    Ok(TradeSampleRecord {
        sample_id: 0,
        trade_date,
        features: values,
        profit: settled.profit,
        label: settled.label,
    })
}

#[derive(Debug, Clone)]
pub struct BuiltSamples {
    pub features: FeatureSet,
    pub records: Vec<TradeSampleRecord>,
    /// One message per skipped decision date.
    pub warnings: Vec<String>,
}

impl BuiltSamples {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.trade_date).collect()
    }
}

/// Builds samples for every constructible date of `schedule`, in date order
/// with dense ids.
pub fn build_dataset(
    dataset: &MarketDataset,
    schedule: &[NaiveDate],
    tenor: i64,
    features: &FeatureSet,
) -> Result<BuiltSamples, FeatureError> {
    let mut dates = schedule.to_vec();
    dates.sort();
    dates.dedup();
    let mut records = Vec::with_capacity(dates.len());
    let mut warnings = Vec::new();
    for date in dates {
        match build_sample(dataset, date, tenor, features) {
            Ok(mut rec) => {
                rec.sample_id = records.len();
                records.push(rec);
            }
            Err(e) => warnings.push(format!("skipped {date}: {e}")),
        }
    }
    if records.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    Ok(BuiltSamples {
        features: features.clone(),
        records,
        warnings,
    })
}

pub fn write_samples_csv<W: Write>(w: W, samples: &BuiltSamples) -> Result<(), FeatureError> {
    let err = |e: csv::Error| FeatureError::Csv(e.to_string());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["sample_id".to_string(), "trade_date".to_string()];
    header.extend(samples.features.names().iter().map(|f| f.to_string()));
    header.extend(["profit".to_string(), "label".to_string()]);
    wtr.write_record(&header).map_err(err)?;
    for r in &samples.records {
        let mut row = vec![r.sample_id.to_string(), r.trade_date.to_string()];
        row.extend(r.features.iter().map(|v| v.to_string()));
        row.extend([r.profit.to_string(), r.label.to_string()]);
        wtr.write_record(&row).map_err(err)?;
    }
    wtr.flush().map_err(|e| FeatureError::Csv(e.to_string()))
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<BuiltSamples, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| FeatureError::Csv(e.to_string()))?
        .clone();
    let n = headers.len();
    if n < 5 || &headers[0] != "sample_id" || &headers[1] != "trade_date" {
        return Err(FeatureError::Csv("unexpected header".into()));
    }
    if &headers[n - 2] != "profit" || &headers[n - 1] != "label" {
        return Err(FeatureError::Csv("header must end with profit,label".into()));
    }
    let names: Vec<&str> = headers.iter().skip(2).take(n - 4).collect();
    let features = FeatureSet::parse(&names)?;
    let bad = |line: usize, what: &str| FeatureError::Csv(format!("row {line}: bad {what}"));
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FeatureError::Csv(e.to_string()))?;
        if rec.len() != n {
            return Err(bad(i + 1, "arity"));
        }
        let values = (2..n - 2)
            .map(|j| rec[j].parse::<f64>().map_err(|_| bad(i + 1, "feature")))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(TradeSampleRecord {
            sample_id: rec[0].parse().map_err(|_| bad(i + 1, "sample_id"))?,
            trade_date: NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
                .map_err(|_| bad(i + 1, "trade_date"))?,
            features: values,
            profit: rec[n - 2].parse().map_err(|_| bad(i + 1, "profit"))?,
            label: match &rec[n - 1] {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad(i + 1, "label")),
            },
        });
    }
    Ok(BuiltSamples {
        features,
        records,
        warnings: Vec::new(),
    })
}
