//! Liquidity measures and technical indicators per interval, with their
//! rolling same-interval standardizations.

mod liquidity;
mod standardize;
mod technical;

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use liquidity::{LIQUIDITY_MODES, LIQUIDITY_NAMES, LiquidityVector, compute_liquidity, liquidity_series};
pub use standardize::{DEFAULT_WINDOW, Mode, standardize_rolling};
pub use technical::{DEFAULT_LAGS, LAG_FREE, LAGGED, Ohlcv, compute_technical, technical_modes, technical_names};

use crate::market_data::StockSeries;
use crate::{Error, Result, par};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub lags: Vec<usize>,
    pub window: usize,
    /// Restart indicator recursions at every session open.
    pub session_reset: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { lags: DEFAULT_LAGS.to_vec(), window: DEFAULT_WINDOW, session_reset: false }
    }
}

/// Raw and standardized feature columns of one stock.
///
/// Columns are day-major with `n` entries per day; the ten liquidity
/// measures come first, then the technical indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct StockFeatures {
    pub stock_id: String,
    pub dates: Vec<NaiveDate>,
    pub n: usize,
    pub names: Vec<String>,
    pub raw: Vec<Vec<Option<f64>>>,
    pub standardized: Vec<Vec<Option<f64>>>,
}

impl StockFeatures {
    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn liquidity_count(&self) -> usize {
        LIQUIDITY_NAMES.len()
    }

    pub fn technical_count(&self) -> usize {
        self.names.len() - LIQUIDITY_NAMES.len()
    }

    /// Standardized value of column `col` at day `t`, interval `i`.
    pub fn value(&self, col: usize, t: usize, i: usize) -> Option<f64> {
        self.standardized[col][t * self.n + i]
    }

    pub fn raw_value(&self, col: usize, t: usize, i: usize) -> Option<f64> {
        self.raw[col][t * self.n + i]
    }
}

pub fn feature_names(config: &FeatureConfig) -> Vec<String> {
    let mut names: Vec<String> = LIQUIDITY_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(technical_names(&config.lags));
    names
}

fn feature_modes(config: &FeatureConfig) -> Vec<Mode> {
    let mut modes = LIQUIDITY_MODES.to_vec();
    modes.extend(technical_modes(&config.lags));
    modes
}

/// Computes every feature column of one stock.
pub fn compute_features(series: &StockSeries, config: &FeatureConfig) -> Result<StockFeatures> {
    let n = series.intervals_per_day;
    if n == 0 {
        return Err(Error::InsufficientData(format!("{}: no intervals", series.stock_id)));
    }
    let liq = liquidity_series(series)?;
    let mut raw: Vec<Vec<Option<f64>>> =
        (0..LIQUIDITY_NAMES.len()).map(|m| liq.iter().map(|l| l.values()[m]).collect()).collect();

    let technical = if config.session_reset {
        let per_day: Vec<Vec<Vec<Option<f64>>>> = series
            .days
            .iter()
            .map(|d| compute_technical(&Ohlcv::from_bars(&d.bars), &config.lags))
            .collect();
        let cols = 12 * config.lags.len() + LAG_FREE.len();
        (0..cols).map(|c| per_day.iter().flat_map(|d| d[c].iter().copied()).collect()).collect()
    } else {
        compute_technical(&Ohlcv::from_bars(series.bars()), &config.lags)
    };
    raw.extend(technical);

    let standardized = raw
        .iter()
        .zip(feature_modes(config))
        .map(|(col, mode)| standardize_rolling(col, n, config.window, mode))
        .collect();
    Ok(StockFeatures {
        stock_id: series.stock_id.clone(),
        dates: series.dates(),
        n,
        names: feature_names(config),
        raw,
        standardized,
    })
}

/// [`compute_features`] for every stock, in parallel when enabled.
pub fn compute_all(series: &[StockSeries], config: &FeatureConfig) -> Result<Vec<StockFeatures>> {
    par::map(series, |s| compute_features(s, config)).into_iter().collect()
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes one row per (stock, date, interval) with raw columns followed by
/// `std_`-prefixed standardized columns. Missing values are empty fields.
pub fn write_features<W: Write>(sink: W, delimiter: u8, features: &[StockFeatures]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    let Some(first) = features.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["stock_id".to_string(), "date".into(), "interval".into()];
    header.extend(first.names.iter().cloned());
    header.extend(first.names.iter().map(|n| format!("std_{n}")));
    w.write_record(&header)?;
    for f in features {
        if f.names != first.names {
            return Err(Error::InconsistentData(format!("{}: feature columns differ", f.stock_id)));
        }
        for t in 0..f.days() {
            for i in 0..f.n {
                let mut row = vec![f.stock_id.clone(), f.dates[t].to_string(), (i + 1).to_string()];
                row.extend(f.raw.iter().map(|c| fmt(c[t * f.n + i])));
                row.extend(f.standardized.iter().map(|c| fmt(c[t * f.n + i])));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_features`].
pub fn read_features<R: Read>(source: R, delimiter: u8) -> Result<Vec<StockFeatures>> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(source);
    let headers = r.headers()?.clone();
    for (k, c) in ["stock_id", "date", "interval"].iter().enumerate() {
        if headers.get(k) != Some(*c) {
            return Err(Error::MissingColumn((*c).to_string()));
        }
    }
    let cols = headers.len() - 3;
    if cols % 2 != 0 {
        return Err(Error::InconsistentData("feature table has unpaired columns".into()));
    }
    let names: Vec<String> = headers.iter().skip(3).take(cols / 2).map(str::to_string).collect();
    let mut out: Vec<StockFeatures> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::InconsistentData(format!("feature row {}: bad {what}", row + 2));
        let stock = &rec[0];
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?;
        let interval: usize = rec[2].parse().map_err(|_| bad("interval"))?;
        if out.last().is_none_or(|f| f.stock_id != stock) {
            out.push(StockFeatures {
                stock_id: stock.to_string(),
                dates: Vec::new(),
                n: 0,
                names: names.clone(),
                raw: vec![Vec::new(); names.len()],
                standardized: vec![Vec::new(); names.len()],
            });
        }
        let f = out.last_mut().expect("pushed above");
        if f.dates.last() != Some(&date) {
            f.dates.push(date);
        }
        if f.dates.len() == 1 {
            f.n = f.n.max(interval);
        }
        for c in 0..cols {
            let s = &rec[3 + c];
            let v = if s.is_empty() { None } else { Some(s.parse::<f64>().map_err(|_| bad(&headers[3 + c]))?) };
            if c < names.len() {
                f.raw[c].push(v);
            } else {
                f.standardized[c - names.len()].push(v);
            }
        }
    }
    for f in &out {
        if f.n == 0 || f.raw.first().is_some_and(|c| c.len() != f.n * f.dates.len()) {
            return Err(Error::InconsistentData(format!("{}: ragged feature table", f.stock_id)));
        }
    }
    Ok(out)
}
