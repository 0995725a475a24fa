//! Seeded synthetic SPX/VIX/option-chain generator.
//!
//! SPX follows a geometric random walk whose realized volatility is tied to a
//! mean-reverting log-VIX process; shocks to the two are correlated. Options
//! are priced with the zero-rate, zero-dividend European formula using VIX as
//! the implied volatility. `vix_signal` skews realized against implied
//! volatility depending on the VIX level, which makes straddle outcomes
//! predictable from VIX when non-zero.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::calendar::{is_third_friday, is_trading_day, trading_days_from};
use crate::data::{
    write_daily_bars, write_option_chain, DailyBar, MarketDataset, OptionQuote, Right,
};

const TRADING_DAYS_PER_YEAR: f64 = 252.0;
/// Smallest VIX level printed in a bar; bars must stay strictly positive.
const VIX_PRINT_FLOOR: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Number of trading days to generate.
    pub n_days: usize,
    pub spx0: f64,
    /// Initial VIX in vol points.
    pub vix0: f64,
    pub spx_vix_correlation: f64,
    /// Long-run VIX level in vol points.
    pub vix_long_run: f64,
    /// Mean-reversion speed of log-VIX, per year.
    pub vix_mean_reversion: f64,
    /// Annualized volatility of log-VIX.
    pub vol_of_vol: f64,
    pub annual_drift: f64,
    /// Realized over implied volatility at the long-run VIX level.
    pub realized_to_implied: f64,
    /// Elasticity of realized/implied to log(VIX / long-run VIX), sign flipped:
    /// positive values make high-VIX days calmer than priced.
    pub vix_signal: f64,
    pub strike_grid_step: f64,
    pub strikes_each_side: usize,
    /// Listed tenors in calendar days; each maps to the first trading day on or after.
    pub tenors: Vec<i64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2011,
            start_date: NaiveDate::from_ymd_opt(2011, 11, 1).unwrap(),
            n_days: 500,
            spx0: 1250.0,
            vix0: 20.0,
            spx_vix_correlation: -0.7,
            vix_long_run: 18.0,
            vix_mean_reversion: 4.0,
            vol_of_vol: 1.0,
            annual_drift: 0.07,
            realized_to_implied: 0.85,
            vix_signal: 0.0,
            strike_grid_step: 5.0,
            strikes_each_side: 4,
            tenors: vec![1, 3, 7, 14, 30],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if !(-1.0..=0.0).contains(&self.spx_vix_correlation) {
            return bad("spx_vix_correlation must lie in [-1, 0]");
        }
        if self.n_days == 0 {
            return bad("n_days must be positive");
        }
        if !(self.spx0 > 0.0) {
            return bad("spx0 must be positive");
        }
        if !(self.vix0 >= 0.0) || !(self.vix_long_run > 0.0) {
            return bad("vix levels must be non-negative");
        }
        if !(self.strike_grid_step > 0.0) {
            return bad("strike_grid_step must be positive");
        }
        if self.tenors.is_empty() || self.tenors.iter().any(|t| *t < 1) {
            return bad("tenors must be non-empty and at least one day");
        }
        if self.vol_of_vol < 0.0 || self.vix_mean_reversion < 0.0 || self.realized_to_implied < 0.0 {
            return bad("vol_of_vol, vix_mean_reversion and realized_to_implied must be non-negative");
        }
        Ok(())
    }
}

/// Zero-rate European call and put prices.
pub fn european_prices(spot: f64, strike: f64, vol: f64, years: f64) -> (f64, f64) {
    let sd = vol * years.max(0.0).sqrt();
    if sd <= 0.0 {
        return ((spot - strike).max(0.0), (strike - spot).max(0.0));
    }
    let n = Normal::standard();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let call = spot * n.cdf(d1) - strike * n.cdf(d2);
    let put = strike * n.cdf(-d2) - spot * n.cdf(-d1);
    (call.max(0.0), put.max(0.0))
}

fn quote_spread(mid: f64) -> f64 {
    (0.01 * mid).max(0.2)
}

fn first_trading_day_on_or_after(mut d: NaiveDate) -> NaiveDate {
    while !is_trading_day(d) {
        d += Duration::days(1);
    }
    d
}

pub fn generate_market(config: &SynthConfig) -> Result<MarketDataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dates = trading_days_from(first_trading_day_on_or_after(config.start_date), config.n_days);
    let dt = 1.0 / TRADING_DAYS_PER_YEAR;
    let rho = config.spx_vix_correlation;
    let ortho = (1.0 - rho * rho).max(0.0).sqrt();
    let long_run = config.vix_long_run / 100.0;

    let mut spot = config.spx0;
    let mut vol = config.vix0 / 100.0;
    let mut prev_vix_close = (100.0 * vol).max(VIX_PRINT_FLOOR);

    let mut spx = Vec::with_capacity(dates.len());
    let mut vix = Vec::with_capacity(dates.len());
    let mut quotes = Vec::new();

    for (i, &date) in dates.iter().enumerate() {
        if i > 0 {
            let z_vol: f64 = rng.sample(StandardNormal);
            let z_perp: f64 = rng.sample(StandardNormal);
            let z_spx = rho * z_vol + ortho * z_perp;
            let realized = realized_vol(config, vol, long_run);
            let open = spot * (0.1 * realized * dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).exp();
            spot *= ((config.annual_drift - 0.5 * realized * realized) * dt
                + realized * dt.sqrt() * z_spx)
                .exp();
            if vol > 0.0 {
                let log_vol = vol.ln()
                    + config.vix_mean_reversion * (long_run.ln() - vol.ln()) * dt
                    + config.vol_of_vol * dt.sqrt() * z_vol;
                vol = log_vol.exp();
            }
            let range_spx = 0.5 * realized * dt.sqrt();
            let (h, l): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            spx.push(DailyBar {
                date,
                open,
                high: open.max(spot) * (h.abs() * range_spx).exp(),
                low: open.min(spot) * (-l.abs() * range_spx).exp(),
                close: spot,
            });
            let vix_close = (100.0 * vol).max(VIX_PRINT_FLOOR);
            let range_vix = 0.5 * config.vol_of_vol * dt.sqrt();
            let (h, l): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            vix.push(DailyBar {
                date,
                open: prev_vix_close,
                high: prev_vix_close.max(vix_close) * (h.abs() * range_vix).exp(),
                low: prev_vix_close.min(vix_close) * (-l.abs() * range_vix).exp(),
                close: vix_close,
            });
            prev_vix_close = vix_close;
        } else {
            spx.push(DailyBar {
                date,
                open: spot,
                high: spot,
                low: spot,
                close: spot,
            });
            vix.push(DailyBar {
                date,
                open: prev_vix_close,
                high: prev_vix_close,
                low: prev_vix_close,
                close: prev_vix_close,
            });
        }

        let step = config.strike_grid_step;
        let centre = (spot / step).round() * step;
        let mut expiries: Vec<NaiveDate> = config
            .tenors
            .iter()
            .map(|t| first_trading_day_on_or_after(date + Duration::days(*t)))
            .collect();
        expiries.sort();
        expiries.dedup();
        for expiry in expiries {
            let years = (expiry - date).num_days() as f64 / 365.0;
            let pm_settled = !is_third_friday(expiry);
            for k in -(config.strikes_each_side as i64)..=config.strikes_each_side as i64 {
                let strike = centre + k as f64 * step;
                if strike <= 0.0 {
                    continue;
                }
                let (call, put) = european_prices(spot, strike, vol, years);
                for (right, mid) in [(Right::Put, put), (Right::Call, call)] {
                    let half = 0.5 * quote_spread(mid);
                    quotes.push(OptionQuote {
                        trade_date: date,
                        expiry_date: expiry,
                        right,
                        strike,
                        bid: (mid - half).max(0.0),
                        ask: mid + half,
                        volume: rng.random_range(0..5_000),
                        open_interest: rng.random_range(0..50_000),
                        pm_settled,
                    });
                }
            }
        }
    }
    MarketDataset::new(quotes, spx, vix)
        .map_err(|e| SynthError::Config(format!("generator produced invalid data: {e}")))
}

fn realized_vol(config: &SynthConfig, vol: f64, long_run: f64) -> f64 {
    if vol <= 0.0 {
        return 0.0;
    }
    let skew = (-config.vix_signal * (vol / long_run).ln()).exp();
    vol * config.realized_to_implied * skew
}

/// Writes `options.csv`, `spx.csv` and `vix.csv` into `dir`.
pub fn write_market_csv(dataset: &MarketDataset, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    let quotes: Vec<OptionQuote> = dataset.all_quotes().cloned().collect();
    write_option_chain(BufWriter::new(File::create(dir.join("options.csv"))?), &quotes)?;
    write_daily_bars(BufWriter::new(File::create(dir.join("spx.csv"))?), dataset.spx_bars())?;
    write_daily_bars(BufWriter::new(File::create(dir.join("vix.csv"))?), dataset.vix_bars())?;
    Ok(())
}
