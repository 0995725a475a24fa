//! The naked short straddle: ATM strike selection, leg pricing, settlement.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{MarketDataset, Right};

/// Haircut applied to the bid/ask midpoint when selling a leg.
pub const SELL_HAIRCUT: f64 = 0.1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StrategyError {
    #[error("no strikes listed")]
    NoStrikes,
    #[error("untradable leg: sell price {0} is not positive")]
    UntradableLeg(f64),
    #[error("{0} is not a trade date in the dataset")]
    UnknownDate(NaiveDate),
    #[error("no expiry at least {tenor} days after {date}")]
    NoQualifyingExpiry { date: NaiveDate, tenor: i64 },
    #[error("missing {right:?} quote at strike {strike} expiring {expiry}")]
    MissingLeg {
        right: Right,
        strike: f64,
        expiry: NaiveDate,
    },
    #[error("no SPX close on expiry {0}")]
    NoSettlementPrice(NaiveDate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraddleTrade {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub strike: f64,
    pub put_sell_price: f64,
    pub call_sell_price: f64,
    /// Premium received, `put_sell_price + call_sell_price`.
    pub premium: f64,
    pub days_to_expiry: i64,
    pub pm_settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettledTrade {
    pub trade: StraddleTrade,
    pub settlement_value: f64,
    pub profit: f64,
    /// 1 when the trade made money.
    pub label: u8,
}

/// Nearest listed strike to `spot`; equidistant strikes resolve to the lower one.
/// `strikes` must be sorted ascending.
pub fn select_atm_strike(strikes: &[f64], spot: f64) -> Result<f64, StrategyError> {
    let mut best = *strikes.first().ok_or(StrategyError::NoStrikes)?;
    let mut best_dist = (best - spot).abs();
    for &k in &strikes[1..] {
        let dist = (k - spot).abs();
        if dist < best_dist {
            best = k;
            best_dist = dist;
        }
    }
    Ok(best)
}

/// Sell price of one leg: bid/ask midpoint less the haircut.
pub fn sell_price(bid: f64, ask: f64) -> Result<f64, StrategyError> {
    let price = (bid + ask) / 2.0 - SELL_HAIRCUT;
    if price > 0.0 {
        Ok(price)
    } else {
        Err(StrategyError::UntradableLeg(price))
    }
}

/// Opens the ATM straddle on `trade_date` using the earliest expiry at least
/// `target_tenor` calendar days out.
pub fn build_straddle(
    dataset: &MarketDataset,
    trade_date: NaiveDate,
    target_tenor: i64,
) -> Result<StraddleTrade, StrategyError> {
    let spot = dataset
        .spx_on(trade_date)
        .ok_or(StrategyError::UnknownDate(trade_date))?
        .close;
    let chain = dataset.quotes_on(trade_date);
    let earliest = trade_date + Duration::days(target_tenor);
    let expiry = chain
        .iter()
        .map(|q| q.expiry_date)
        .filter(|e| *e >= earliest)
        .min()
        .ok_or(StrategyError::NoQualifyingExpiry {
            date: trade_date,
            tenor: target_tenor,
        })?;

    let mut strikes: Vec<f64> = chain
        .iter()
        .filter(|q| q.expiry_date == expiry)
        .map(|q| q.strike)
        .collect();
    strikes.sort_by(f64::total_cmp);
    strikes.dedup();
    let strike = select_atm_strike(&strikes, spot)?;

    let leg = |right: Right| {
        chain
            .iter()
            .find(|q| q.expiry_date == expiry && q.strike == strike && q.right == right)
            .ok_or(StrategyError::MissingLeg {
                right,
                strike,
                expiry,
            })
    };
    let put = leg(Right::Put)?;
    let call = leg(Right::Call)?;
    let put_sell_price = sell_price(put.bid, put.ask)?;
    let call_sell_price = sell_price(call.bid, call.ask)?;

    Ok(StraddleTrade {
        trade_date,
        expiry_date: expiry,
        strike,
        put_sell_price,
        call_sell_price,
        premium: put_sell_price + call_sell_price,
        days_to_expiry: (expiry - trade_date).num_days(),
        pm_settled: put.pm_settled && call.pm_settled,
    })
}

/// Profits closer to zero than this are breakeven trades and settle at exactly 0.
pub const BREAKEVEN_TOLERANCE: f64 = 1e-9;

/// Profit of the short straddle held to expiry with the index at `settlement_value`.
pub fn straddle_profit(premium: f64, strike: f64, settlement_value: f64) -> f64 {
    let p = premium - (strike - settlement_value).max(0.0) - (settlement_value - strike).max(0.0);
    if p.abs() < BREAKEVEN_TOLERANCE {
        0.0
    } else {
        p
    }
}

pub fn settle_straddle(trade: StraddleTrade, settlement_value: f64) -> SettledTrade {
    let profit = straddle_profit(trade.premium, trade.strike, settlement_value);
    SettledTrade {
        trade,
        settlement_value,
        profit,
        label: u8::from(profit > 0.0),
    }
}

/// Settles against the SPX close on the expiry date.
pub fn settle_on_dataset(
    dataset: &MarketDataset,
    trade: StraddleTrade,
) -> Result<SettledTrade, StrategyError> {
    let close = dataset
        .spx_on(trade.expiry_date)
        .ok_or(StrategyError::NoSettlementPrice(trade.expiry_date))?
        .close;
    Ok(settle_straddle(trade, close))
}
