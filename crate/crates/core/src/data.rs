//! Daily option-chain, SPX and VIX ingestion.
//!
//! Two CSV layouts are accepted:
//!
//! * option chain: `trade_date,expiry_date,right,strike,bid,ask,volume,open_interest,pm_settled`
//! * daily bars: `date,open,high,low,close`
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`), `right` is `P` or `C`, `pm_settled` is `0` or `1`.
//! Every record is validated while it is read, so nothing invalid can reach a
//! [`MarketDataset`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPTION_HEADER: [&str; 9] = [
    "trade_date",
    "expiry_date",
    "right",
    "strike",
    "bid",
    "ask",
    "volume",
    "open_interest",
    "pm_settled",
];

pub const BAR_HEADER: [&str; 5] = ["date", "open", "high", "low", "close"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates out of order: {later} follows {earlier}")]
    OutOfOrder { earlier: NaiveDate, later: NaiveDate },
    #[error("option, SPX and VIX sources share no trade date")]
    EmptyIntersection,
    #[error("invalid dataset: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Right {
    Put,
    Call,
}

impl Right {
    pub fn code(self) -> &'static str {
        match self {
            Right::Put => "P",
            Right::Call => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub right: Right,
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
    pub volume: u64,
    pub open_interest: u64,
    pub pm_settled: bool,
}

impl OptionQuote {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bid.is_finite() && self.ask.is_finite() && self.strike.is_finite()) {
            return Err("non-finite price or strike".into());
        }
        if self.bid < 0.0 {
            return Err(format!("negative bid {}", self.bid));
        }
        if self.bid > self.ask {
            return Err(format!("bid {} exceeds ask {}", self.bid, self.ask));
        }
        if self.strike <= 0.0 {
            return Err(format!("non-positive strike {}", self.strike));
        }
        if self.expiry_date < self.trade_date {
            return Err(format!(
                "expiry {} precedes trade date {}",
                self.expiry_date, self.trade_date
            ));
        }
        Ok(())
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl DailyBar {
    pub fn validate(&self) -> Result<(), String> {
        let vals = [self.open, self.high, self.low, self.close];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite price".into());
        }
        if self.low > self.high {
            return Err(format!("low {} above high {}", self.low, self.high));
        }
        if self.low <= 0.0 {
            return Err(format!("non-positive low {}", self.low));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }
}

fn parse_date(field: &str, line: u64) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| DataError::Parse {
        line,
        message: format!("bad date {field:?}: {e}"),
    })
}

fn parse_f64(field: &str, name: &str, line: u64) -> Result<f64, DataError> {
    field.trim().parse::<f64>().map_err(|_| DataError::Parse {
        line,
        message: format!("bad {name} {field:?}"),
    })
}

fn parse_u64(field: &str, name: &str, line: u64) -> Result<u64, DataError> {
    field.trim().parse::<u64>().map_err(|_| DataError::Parse {
        line,
        message: format!("bad {name} {field:?}"),
    })
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn record_line(rec: &csv::StringRecord, fallback: u64) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(fallback)
}

fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn load_option_chain(path: impl AsRef<Path>) -> Result<Vec<OptionQuote>, DataError> {
    read_option_chain(open(path.as_ref())?)
}

pub fn read_option_chain<R: Read>(rdr: R) -> Result<Vec<OptionQuote>, DataError> {
    let mut reader = csv_reader(rdr);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = record_line(&rec, i as u64 + 2);
        if rec.len() != OPTION_HEADER.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", OPTION_HEADER.len(), rec.len()),
            });
        }
        let right = match rec[2].trim() {
            "P" | "p" => Right::Put,
            "C" | "c" => Right::Call,
            other => {
                return Err(DataError::Parse {
                    line,
                    message: format!("bad right {other:?}"),
                })
            }
        };
        let pm_settled = match rec[8].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Parse {
                    line,
                    message: format!("bad pm_settled {other:?}"),
                })
            }
        };
        let quote = OptionQuote {
            trade_date: parse_date(&rec[0], line)?,
            expiry_date: parse_date(&rec[1], line)?,
            right,
            strike: parse_f64(&rec[3], "strike", line)?,
            bid: parse_f64(&rec[4], "bid", line)?,
            ask: parse_f64(&rec[5], "ask", line)?,
            volume: parse_u64(&rec[6], "volume", line)?,
            open_interest: parse_u64(&rec[7], "open_interest", line)?,
            pm_settled,
        };
        quote
            .validate()
            .map_err(|message| DataError::Validation { line, message })?;
        out.push(quote);
    }
    Ok(out)
}

pub fn load_daily_bars(path: impl AsRef<Path>) -> Result<Vec<DailyBar>, DataError> {
    read_daily_bars(open(path.as_ref())?)
}

pub fn read_daily_bars<R: Read>(rdr: R) -> Result<Vec<DailyBar>, DataError> {
    let mut reader = csv_reader(rdr);
    let mut out: Vec<DailyBar> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = record_line(&rec, i as u64 + 2);
        if rec.len() != BAR_HEADER.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", BAR_HEADER.len(), rec.len()),
            });
        }
        let bar = DailyBar {
            date: parse_date(&rec[0], line)?,
            open: parse_f64(&rec[1], "open", line)?,
            high: parse_f64(&rec[2], "high", line)?,
            low: parse_f64(&rec[3], "low", line)?,
            close: parse_f64(&rec[4], "close", line)?,
        };
        bar.validate()
            .map_err(|message| DataError::Validation { line, message })?;
        if let Some(prev) = out.last() {
            if prev.date == bar.date {
                return Err(DataError::DuplicateDate(bar.date));
            }
            if prev.date > bar.date {
                return Err(DataError::OutOfOrder {
                    earlier: prev.date,
                    later: bar.date,
                });
            }
        }
        out.push(bar);
    }
    Ok(out)
}

pub fn write_option_chain<W: Write>(w: W, quotes: &[OptionQuote]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(OPTION_HEADER)?;
    for q in quotes {
        wtr.write_record([
            q.trade_date.to_string(),
            q.expiry_date.to_string(),
            q.right.code().to_string(),
            q.strike.to_string(),
            q.bid.to_string(),
            q.ask.to_string(),
            q.volume.to_string(),
            q.open_interest.to_string(),
            u8::from(q.pm_settled).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_daily_bars<W: Write>(w: W, bars: &[DailyBar]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BAR_HEADER)?;
    for b in bars {
        wtr.write_record([
            b.date.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Calendar-aligned option chain plus SPX and VIX daily series.
///
/// Immutable once built. All three series cover exactly the same trade dates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    quotes: BTreeMap<NaiveDate, Vec<OptionQuote>>,
    spx: Vec<DailyBar>,
    vix: Vec<DailyBar>,
    index: HashMap<NaiveDate, usize>,
}

impl MarketDataset {
    /// Builds a dataset from already-aligned series.
    pub fn new(
        quotes: Vec<OptionQuote>,
        spx: Vec<DailyBar>,
        vix: Vec<DailyBar>,
    ) -> Result<Self, DataError> {
        check_series(&spx)?;
        check_series(&vix)?;
        if spx.len() != vix.len() || spx.iter().zip(&vix).any(|(a, b)| a.date != b.date) {
            return Err(DataError::Inconsistent(
                "SPX and VIX series cover different dates".into(),
            ));
        }
        let index: HashMap<NaiveDate, usize> =
            spx.iter().enumerate().map(|(i, b)| (b.date, i)).collect();
        let mut grouped: BTreeMap<NaiveDate, Vec<OptionQuote>> = BTreeMap::new();
        for q in quotes {
            q.validate().map_err(DataError::Inconsistent)?;
            if !index.contains_key(&q.trade_date) {
                return Err(DataError::Inconsistent(format!(
                    "option trade date {} has no SPX/VIX bar",
                    q.trade_date
                )));
            }
            grouped.entry(q.trade_date).or_default().push(q);
        }
        Ok(Self {
            quotes: grouped,
            spx,
            vix,
            index,
        })
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.spx.iter().map(|b| b.date)
    }

    pub fn len(&self) -> usize {
        self.spx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spx.is_empty()
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.index.get(&date).copied()
    }

    pub fn spx_bars(&self) -> &[DailyBar] {
        &self.spx
    }

    pub fn vix_bars(&self) -> &[DailyBar] {
        &self.vix
    }

    pub fn spx_on(&self, date: NaiveDate) -> Option<&DailyBar> {
        self.position(date).map(|i| &self.spx[i])
    }

    pub fn vix_on(&self, date: NaiveDate) -> Option<&DailyBar> {
        self.position(date).map(|i| &self.vix[i])
    }

    pub fn quotes_on(&self, date: NaiveDate) -> &[OptionQuote] {
        self.quotes.get(&date).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_quotes(&self) -> impl Iterator<Item = &OptionQuote> {
        self.quotes.values().flatten()
    }
}

fn check_series(bars: &[DailyBar]) -> Result<(), DataError> {
    for w in bars.windows(2) {
        if w[0].date == w[1].date {
            return Err(DataError::DuplicateDate(w[0].date));
        }
        if w[0].date > w[1].date {
            return Err(DataError::OutOfOrder {
                earlier: w[0].date,
                later: w[1].date,
            });
        }
    }
    for b in bars {
        b.validate()
            .map_err(|m| DataError::Inconsistent(format!("{}: {m}", b.date)))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub dataset: MarketDataset,
    /// Dates present in at least one source but not in all three.
    pub dropped: Vec<NaiveDate>,
}

/// Restricts the three sources to their common trade dates.
pub fn align_calendar(
    quotes: Vec<OptionQuote>,
    spx: Vec<DailyBar>,
    vix: Vec<DailyBar>,
) -> Result<Alignment, DataError> {
    let quote_dates: BTreeSet<NaiveDate> = quotes.iter().map(|q| q.trade_date).collect();
    let spx_dates: BTreeSet<NaiveDate> = spx.iter().map(|b| b.date).collect();
    let vix_dates: BTreeSet<NaiveDate> = vix.iter().map(|b| b.date).collect();

    let common: BTreeSet<NaiveDate> = quote_dates
        .iter()
        .filter(|d| spx_dates.contains(d) && vix_dates.contains(d))
        .copied()
        .collect();
    if common.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    let dropped: Vec<NaiveDate> = quote_dates
        .union(&spx_dates)
        .copied()
        .collect::<BTreeSet<_>>()
        .union(&vix_dates)
        .filter(|d| !common.contains(d))
        .copied()
        .collect();

    let quotes = quotes
        .into_iter()
        .filter(|q| common.contains(&q.trade_date))
        .collect();
    let spx = spx.into_iter().filter(|b| common.contains(&b.date)).collect();
    let vix = vix.into_iter().filter(|b| common.contains(&b.date)).collect();
    Ok(Alignment {
        dataset: MarketDataset::new(quotes, spx, vix)?,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    const OPT_HDR: &str =
        "trade_date,expiry_date,right,strike,bid,ask,volume,open_interest,pm_settled\n";

    fn bar(date: &str, c: f64) -> DailyBar {
        DailyBar {
            date: d(date),
            open: c,
            high: c + 1.0,
            low: c - 1.0,
            close: c,
        }
    }

    fn quote(date: &str) -> OptionQuote {
        OptionQuote {
            trade_date: d(date),
            expiry_date: d("2019-03-29"),
            right: Right::Call,
            strike: 2800.0,
            bid: 1.0,
            ask: 1.2,
            volume: 1,
            open_interest: 1,
            pm_settled: true,
        }
    }

    #[test]
    fn parses_call_row() {
        let csv = format!("{OPT_HDR}2019-03-01,2019-03-08,C,2800,12.0,12.4,100,5000,1\n");
        let q = read_option_chain(csv.as_bytes()).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].right, Right::Call);
        assert_eq!(q[0].strike, 2800.0);
        assert_eq!(q[0].bid, 12.0);
        assert_eq!(q[0].ask, 12.4);
        assert_eq!(q[0].volume, 100);
        assert_eq!(q[0].open_interest, 5000);
        assert!(q[0].pm_settled);
        assert_eq!(q[0].expiry_date, d("2019-03-08"));
    }

    #[test]
    fn rejects_crossed_quote() {
        let csv = format!("{OPT_HDR}2019-03-01,2019-03-08,P,2800,5.0,4.0,1,1,0\n");
        match read_option_chain(csv.as_bytes()) {
            Err(DataError::Validation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_option_chain(OPT_HDR.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_report_line() {
        let csv = format!(
            "{OPT_HDR}2019-03-01,2019-03-08,P,2800,1.0,1.1,1,1,0\n2019-03-01,2019-03-08,P,abc,1.0,1.1,1,1,0\n"
        );
        match read_option_chain(csv.as_bytes()) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let csv = format!("{OPT_HDR}2019-03-01,2019-03-08,P,2800,1.0\n");
        assert!(matches!(
            read_option_chain(csv.as_bytes()),
            Err(DataError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn bars_in_order() {
        let csv = "date,open,high,low,close\n2019-03-04,10,11,9,10\n2019-03-05,10,11,9,10.5\n2019-03-06,10,11,9,9.5\n";
        let bars = read_daily_bars(csv.as_bytes()).unwrap();
        assert_eq!(bars.len(), 3);
        assert_eq!(bars[2].date, d("2019-03-06"));
    }

    #[test]
    fn duplicate_bar_date_is_named() {
        let csv = "date,open,high,low,close\n2019-03-04,10,11,9,10\n2019-03-04,10,11,9,10\n";
        match read_daily_bars(csv.as_bytes()) {
            Err(DataError::DuplicateDate(date)) => assert_eq!(date, d("2019-03-04")),
            other => panic!("{other:?}"),
        }
        let csv = "date,open,high,low,close\n2019-03-05,10,11,9,10\n2019-03-04,10,11,9,10\n";
        assert!(matches!(
            read_daily_bars(csv.as_bytes()),
            Err(DataError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn inverted_bar_rejected() {
        let csv = "date,open,high,low,close\n2019-03-04,105,100,110,105\n";
        assert!(matches!(
            read_daily_bars(csv.as_bytes()),
            Err(DataError::Validation { .. })
        ));
    }

    #[test]
    fn align_drops_dates_missing_anywhere() {
        let quotes = vec![quote("2019-03-04"), quote("2019-03-05")];
        let spx = vec![bar("2019-03-04", 2800.0), bar("2019-03-05", 2801.0), bar("2019-03-06", 2802.0)];
        let vix = spx.iter().map(|b| DailyBar { close: 15.0, open: 15.0, high: 16.0, low: 14.0, ..*b }).collect();
        let al = align_calendar(quotes, spx, vix).unwrap();
        let dates: Vec<_> = al.dataset.dates().collect();
        assert_eq!(dates, vec![d("2019-03-04"), d("2019-03-05")]);
        assert_eq!(al.dropped, vec![d("2019-03-06")]);
    }

    #[test]
    fn align_identical_and_disjoint() {
        let spx = vec![bar("2019-03-04", 2800.0)];
        let al = align_calendar(vec![quote("2019-03-04")], spx.clone(), spx.clone()).unwrap();
        assert!(al.dropped.is_empty());
        let err = align_calendar(vec![quote("2019-03-05")], spx.clone(), spx).unwrap_err();
        assert!(matches!(err, DataError::EmptyIntersection));
    }
}
