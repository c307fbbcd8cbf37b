//! Intraday jump detection.
//!
//! Interval returns are standardized by a jump-robust MedRV volatility taken
//! from the preceding days and by WSD periodicity factors, then compared to
//! the extreme-value threshold of the maximum of `nT` standardized returns.

mod medrv;
mod panel;
mod wsd;

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use medrv::{DEFAULT_LOOKBACK, med_rv, med_rv_series, med_rv_window};
pub use panel::ReturnPanel;
pub use wsd::{CHI2_99, Periodicity, WsdConfig, wsd_periodicity};

use crate::market_data::StockSeries;
use crate::{Error, Result, par};

/// Scale constant used in the extreme-value normalization.
///
/// `Standardized` (`c = 1`) matches a volatility estimate that is already a
/// standard deviation, as MedRV is. `Bipower` (`c = sqrt(2/pi)`) is the
/// constant for statistics built on bipower variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConstantScale {
    #[default]
    Standardized,
    Bipower,
}

impl ConstantScale {
    pub fn c(self) -> f64 {
        match self {
            ConstantScale::Standardized => 1.0,
            ConstantScale::Bipower => (2.0 / std::f64::consts::PI).sqrt(),
        }
    }
}

/// Location and scale of the maximum of `m` absolute standardized returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeValue {
    pub c_m: f64,
    pub s_m: f64,
}

impl ExtremeValue {
    pub fn new(m: usize, scale: ConstantScale) -> Result<Self> {
        if m < 3 {
            return Err(Error::InsufficientData(format!("extreme-value constants need m >= 3, got {m}")));
        }
        let c = scale.c();
        let l = 2.0 * (m as f64).ln();
        let c_m = l.sqrt() / c
            - (std::f64::consts::PI.ln() + (m as f64).ln().ln()) / (2.0 * c * l.sqrt());
        let s_m = 1.0 / (c * l.sqrt());
        Ok(Self { c_m, s_m })
    }

    /// Gumbel quantile `-ln(-ln(1 - alpha))`.
    pub fn beta(alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(-(-(1.0 - alpha).ln()).ln())
    }

    pub fn is_jump(&self, statistic: f64, beta: f64) -> bool {
        (statistic.abs() - self.c_m) / self.s_m > beta
    }

    /// Smallest `|L|` flagged at `alpha`, up to the strict inequality.
    pub fn critical(&self, alpha: f64) -> Result<f64> {
        Ok(self.c_m + self.s_m * Self::beta(alpha)?)
    }
}

/// Standardized return of one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Value(f64),
    /// Nonzero return on a day with zero estimated volatility.
    Infinite { positive: bool },
    /// No volatility estimate for the day.
    Unavailable,
}

impl Statistic {
    pub fn value(self) -> Option<f64> {
        match self {
            Statistic::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// Statistics laid out like the [`ReturnPanel`] they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticPanel {
    n: usize,
    values: Vec<Statistic>,
}

impl StatisticPanel {
    pub fn from_values(n: usize, values: Vec<Statistic>) -> Self {
        assert!(n > 0 && values.len() % n == 0);
        Self { n, values }
    }

    pub fn days(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn get(&self, t: usize, i: usize) -> Statistic {
        self.values[t * self.n + i]
    }

    pub fn infinite_count(&self) -> usize {
        self.values.iter().filter(|s| matches!(s, Statistic::Infinite { .. })).count()
    }
}

/// `r / (sigma_t * f_i)` for every interval.
pub fn jump_statistics(panel: &ReturnPanel, sigma: &[Option<f64>], periodicity: &Periodicity) -> StatisticPanel {
    let n = panel.intervals();
    let mut values = Vec::with_capacity(panel.days() * n);
    for t in 0..panel.days() {
        let s = sigma.get(t).copied().flatten();
        for i in 0..n {
            let r = panel.get(t, i);
            values.push(match s {
                None => Statistic::Unavailable,
                Some(_) if r == 0.0 => Statistic::Value(0.0),
                Some(s) if s == 0.0 => Statistic::Infinite { positive: r > 0.0 },
                Some(s) => Statistic::Value(r / (s * periodicity.factor(panel, t, i))),
            });
        }
    }
    StatisticPanel { n, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

/// A detected jump. `day` and `interval` are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMark {
    pub stock_id: String,
    pub date: NaiveDate,
    pub day: usize,
    pub interval: usize,
    pub direction: Direction,
    pub statistic: f64,
    pub alpha: f64,
}

/// Marks every finite statistic beyond the threshold at `alpha`, with
/// `m = n * T` taken from the statistic panel.
pub fn detect_jumps(
    stock_id: &str,
    dates: &[NaiveDate],
    stats: &StatisticPanel,
    alpha: f64,
    scale: ConstantScale,
) -> Result<Vec<JumpMark>> {
    let beta = ExtremeValue::beta(alpha)?;
    let ev = ExtremeValue::new(stats.intervals() * stats.days(), scale)?;
    let mut marks = Vec::new();
    for t in 0..stats.days() {
        for i in 0..stats.intervals() {
            if let Statistic::Value(v) = stats.get(t, i) {
                if ev.is_jump(v, beta) {
                    marks.push(JumpMark {
                        stock_id: stock_id.to_string(),
                        date: dates[t],
                        day: t,
                        interval: i,
                        direction: if v > 0.0 { Direction::Up } else { Direction::Down },
                        statistic: v,
                        alpha,
                    });
                }
            }
        }
    }
    Ok(marks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub lookback: usize,
    pub alpha: f64,
    pub scale: ConstantScale,
    pub wsd: WsdConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { lookback: DEFAULT_LOOKBACK, alpha: 0.05, scale: ConstantScale::default(), wsd: WsdConfig::default() }
    }
}

/// Everything computed while detecting jumps on one stock.
#[derive(Debug, Clone)]
pub struct Detection {
    pub panel: ReturnPanel,
    pub sigma: Vec<Option<f64>>,
    pub periodicity: Periodicity,
    pub statistics: StatisticPanel,
    pub marks: Vec<JumpMark>,
}

impl Detection {
    pub fn flagged_infinite(&self) -> usize {
        self.statistics.infinite_count()
    }
}

pub fn detect_stock(series: &StockSeries, config: &DetectionConfig) -> Result<Detection> {
    let panel = ReturnPanel::from_series(series);
    let sigma = med_rv_series(&panel, config.lookback);
    let periodicity = wsd_periodicity(&panel, &sigma, &config.wsd)?;
    let statistics = jump_statistics(&panel, &sigma, &periodicity);
    if statistics.infinite_count() > 0 {
        log::warn!(
            "{}: {} intervals with zero volatility and nonzero return",
            series.stock_id,
            statistics.infinite_count()
        );
    }
    let marks = detect_jumps(&series.stock_id, &panel.dates, &statistics, config.alpha, config.scale)?;
    Ok(Detection { panel, sigma, periodicity, statistics, marks })
}

/// Runs [`detect_stock`] on every stock, in parallel when enabled.
pub fn detect_all(series: &[StockSeries], config: &DetectionConfig) -> Result<Vec<Detection>> {
    par::map(series, |s| detect_stock(s, config)).into_iter().collect()
}

const MARK_COLUMNS: [&str; 6] = ["stock_id", "date", "interval", "direction", "statistic", "alpha"];

/// Writes marks with 1-based intervals and `+1`/`-1` directions.
pub fn write_marks<W: Write>(sink: W, delimiter: u8, marks: &[JumpMark]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    w.write_record(MARK_COLUMNS)?;
    for m in marks {
        w.write_record([
            m.stock_id.clone(),
            m.date.to_string(),
            (m.interval + 1).to_string(),
            m.direction.sign().to_string(),
            m.statistic.to_string(),
            m.alpha.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a marks table. `day` is resolved against the stock's date list
/// when `dates` has the stock, and left at zero otherwise.
pub fn read_marks<R: Read>(
    source: R,
    delimiter: u8,
    dates: &dyn Fn(&str, NaiveDate) -> Option<usize>,
) -> Result<Vec<JumpMark>> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(source);
    let headers = r.headers()?.clone();
    let idx: Vec<usize> = MARK_COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).ok_or_else(|| Error::MissingColumn((*c).to_string())))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |k: usize| Error::InconsistentData(format!("marks row {}: bad {}", row + 2, MARK_COLUMNS[k]));
        let date = NaiveDate::parse_from_str(get(1), "%Y-%m-%d").map_err(|_| bad(1))?;
        let interval = get(2).parse::<usize>().ok().and_then(|i| i.checked_sub(1)).ok_or_else(|| bad(2))?;
        let direction = match get(3) {
            "1" | "+1" => Direction::Up,
            "-1" => Direction::Down,
            _ => return Err(bad(3)),
        };
        out.push(JumpMark {
            stock_id: get(0).to_string(),
            date,
            day: dates(get(0), date).unwrap_or(0),
            interval,
            direction,
            statistic: get(4).parse().map_err(|_| bad(4))?,
            alpha: get(5).parse().map_err(|_| bad(5))?,
        });
    }
    Ok(out)
}
