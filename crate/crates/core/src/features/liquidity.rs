use serde::{Deserialize, Serialize};

use super::standardize::Mode;
use crate::market_data::{IntervalBar, StockSeries};
use crate::{Error, Result};

pub const LIQUIDITY_NAMES: [&str; 10] = ["r", "R", "k", "v", "s", "oi", "di", "qs", "es", "rv"];

pub const LIQUIDITY_MODES: [Mode; 10] = [
    Mode::Subtract,
    Mode::Subtract,
    Mode::Divide,
    Mode::Divide,
    Mode::Divide,
    Mode::Subtract,
    Mode::Subtract,
    Mode::Subtract,
    Mode::Subtract,
    Mode::Subtract,
];

/// The ten liquidity measures of one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityVector {
    pub r: f64,
    /// Cumulative return from the previous day's close; unknown on a stock's first day.
    pub cum_r: Option<f64>,
    pub k: f64,
    pub v: f64,
    pub s: f64,
    pub oi: f64,
    pub di: f64,
    pub qs: f64,
    pub es: f64,
    pub rv: f64,
}

impl LiquidityVector {
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            Some(self.r),
            self.cum_r,
            Some(self.k),
            Some(self.v),
            Some(self.s),
            Some(self.oi),
            Some(self.di),
            Some(self.qs),
            Some(self.es),
            Some(self.rv),
        ]
    }
}

/// Computes the measures of `bar` from its flow sums.
///
/// `prev_close` is the previous interval close (the day's open price for the
/// first interval); `prev_day_close` is the previous day's last close.
pub fn compute_liquidity(bar: &IntervalBar, prev_close: f64, prev_day_close: Option<f64>) -> Result<LiquidityVector> {
    let f = &bar.flow;
    if f.trades == 0 && f.volume > 0.0 {
        return Err(Error::InconsistentData(format!(
            "interval {} has volume {} with zero trades",
            bar.interval + 1,
            f.volume
        )));
    }
    let k = f.trades as f64;
    let v = f.volume;
    let r = bar.close.ln() - prev_close.ln();
    let cum_r = prev_day_close.map(|p| bar.close.ln() - p.ln());
    let per_volume = |x: f64| if v > 0.0 { x / v } else { 0.0 };
    let depth = f.ask_depth + f.bid_depth;
    Ok(LiquidityVector {
        r,
        cum_r,
        k,
        v,
        s: if k > 0.0 { v / k } else { 0.0 },
        oi: per_volume(2.0 * (f.buy_volume - f.sell_volume)),
        di: if depth > 0.0 { 2.0 * (f.ask_depth - f.bid_depth) / depth } else { 0.0 },
        qs: per_volume(f.quoted_spread_volume),
        es: per_volume(f.effective_spread_volume),
        rv: f.realized_variance,
    })
}

/// Liquidity measures for every bar of a stock, day-major.
pub fn liquidity_series(series: &StockSeries) -> Result<Vec<LiquidityVector>> {
    let mut out = Vec::with_capacity(series.days.len() * series.intervals_per_day);
    let mut prev_day_close = None;
    for day in &series.days {
        let mut prev = day.open_price;
        for bar in &day.bars {
            let lv = compute_liquidity(bar, prev, prev_day_close).map_err(|e| match e {
                Error::InconsistentData(m) => {
                    Error::InconsistentData(format!("{} {}: {m}", series.stock_id, day.date))
                }
                e => e,
            })?;
            out.push(lv);
            prev = bar.close;
        }
        prev_day_close = Some(day.close());
    }
    Ok(out)
}
