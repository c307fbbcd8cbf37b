use chrono::{Datelike, NaiveDate};

use crate::market_data::StockSeries;

/// Rectangular panel of interval log returns, `days x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub stock_id: String,
    pub dates: Vec<NaiveDate>,
    n: usize,
    returns: Vec<f64>,
}

impl ReturnPanel {
    /// Builds a panel from rows of `n` returns each.
    pub fn from_rows(stock_id: &str, dates: Vec<NaiveDate>, rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n), "ragged return panel");
        assert_eq!(dates.len(), rows.len());
        Self { stock_id: stock_id.to_string(), dates, n, returns: rows.concat() }
    }

    /// First return of a day is taken against the day's open price,
    /// the rest against the previous interval close.
    pub fn from_series(series: &StockSeries) -> Self {
        let n = series.intervals_per_day;
        let mut returns = Vec::with_capacity(series.days.len() * n);
        for day in &series.days {
            let mut prev = day.open_price;
            for bar in &day.bars {
                returns.push((bar.close / prev).ln());
                prev = bar.close;
            }
        }
        Self { stock_id: series.stock_id.clone(), dates: series.dates(), n, returns }
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn day(&self, t: usize) -> &[f64] {
        &self.returns[t * self.n..(t + 1) * self.n]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.returns[t * self.n + i]
    }

    /// Returns of days `from..to` chained in time order.
    pub fn window(&self, from: usize, to: usize) -> &[f64] {
        &self.returns[from * self.n..to * self.n]
    }

    /// Weekday index 0 (Monday) to 6.
    pub fn weekday(&self, t: usize) -> usize {
        self.dates[t].weekday().num_days_from_monday() as usize
    }
}
