use std::collections::{HashMap, HashSet};
use std::io::Read;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::InstanceTable;
use crate::jump::{Direction, JumpMark};
use crate::market_data::{StockSeries, TradingCalendar};
use crate::{Error, Result};

/// Daily price limit around the previous close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRule {
    pub fraction: f64,
    pub tick: f64,
}

impl Default for LimitRule {
    fn default() -> Self {
        Self { fraction: 0.10, tick: 0.01 }
    }
}

impl LimitRule {
    pub fn round_tick(&self, price: f64) -> f64 {
        (price / self.tick).round() * self.tick
    }

    /// Direction of the limit `close` sits at, if any.
    pub fn locked(&self, close: f64, prev_day_close: f64) -> Option<Direction> {
        let up = self.round_tick(prev_day_close * (1.0 + self.fraction));
        let down = self.round_tick(prev_day_close * (1.0 - self.fraction));
        let tol = 1e-6 * self.tick;
        if (close - up).abs() <= tol {
            Some(Direction::Up)
        } else if (close - down).abs() <= tol {
            Some(Direction::Down)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Resumption,
    Dividend,
}

/// Trading resumption or dividend distribution of one stock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub stock_id: String,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub limit: Option<LimitRule>,
    /// Inclusive date ranges whose instances are dropped.
    pub halts: Vec<(NaiveDate, NaiveDate)>,
    /// Intervals after an event during which jumps are dropped; `None` disables.
    pub post_event_window: Option<usize>,
    /// Event calendar, required when the post-event filter is enabled.
    pub events: Option<Vec<MarketEvent>>,
    /// Leading trading days of each stock whose instances are dropped.
    pub warm_up_days: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            limit: Some(LimitRule::default()),
            halts: vec![(
                NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date"),
                NaiveDate::from_ymd_opt(2016, 1, 8).expect("valid date"),
            )],
            post_event_window: None,
            events: None,
            warm_up_days: 60,
        }
    }
}

/// Instances hit by each filter; one instance may count under several.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub limit_lock: usize,
    pub halt: usize,
    pub post_event: usize,
    pub warm_up: usize,
    pub kept: usize,
}

struct StockIndex<'a> {
    series: &'a StockSeries,
    day_of: HashMap<NaiveDate, usize>,
}

impl StockIndex<'_> {
    fn locked(&self, rule: &LimitRule, g: usize) -> Option<Direction> {
        let n = self.series.intervals_per_day;
        let (t, i) = (g / n, g % n);
        if t == 0 {
            return None;
        }
        let prev = self.series.days[t - 1].close();
        rule.locked(self.series.days[t].bars[i].close, prev)
    }

    /// Global index of the first interval at or after an event.
    fn event_index(&self, e: &MarketEvent, calendar: &TradingCalendar) -> Option<usize> {
        let n = self.series.intervals_per_day;
        let t = self.series.days.iter().position(|d| d.date >= e.date)?;
        if self.series.days[t].date > e.date {
            return Some(t * n);
        }
        match calendar.interval_at_or_after(e.time) {
            Some(i) => Some(t * n + i),
            None => Some((t + 1) * n),
        }
    }
}

/// Drops instances per the four exclusion conditions.
///
/// Every condition is evaluated on the unfiltered input, so the surviving
/// set does not depend on the order the conditions are listed in.
pub fn apply_filters(
    table: &mut InstanceTable,
    series: &[StockSeries],
    marks: &[JumpMark],
    calendar: &TradingCalendar,
    config: &FilterConfig,
) -> Result<FilterReport> {
    let events = match (config.post_event_window, &config.events) {
        (Some(_), None) => {
            return Err(Error::InvalidConfig("post-event filter enabled without an event calendar".into()));
        }
        (Some(w), Some(ev)) => Some((w, ev)),
        (None, _) => None,
    };
    let index: HashMap<&str, StockIndex> = series
        .iter()
        .map(|s| {
            let day_of = s.days.iter().enumerate().map(|(t, d)| (d.date, t)).collect();
            (s.stock_id.as_str(), StockIndex { series: s, day_of })
        })
        .collect();
    let marked: HashSet<(&str, usize)> = marks
        .iter()
        .filter_map(|m| {
            let si = index.get(m.stock_id.as_str())?;
            let t = *si.day_of.get(&m.date)?;
            Some((m.stock_id.as_str(), t * si.series.intervals_per_day + m.interval))
        })
        .collect();
    let mut event_windows: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    if let Some((w, ev)) = events {
        for e in ev {
            let Some(si) = index.get(e.stock_id.as_str()) else { continue };
            if let Some(g) = si.event_index(e, calendar) {
                event_windows.entry(e.stock_id.as_str()).or_default().push((g, g + w));
            }
        }
    }

    let mut report = FilterReport::default();
    let mut keep = vec![true; table.len()];
    for (k, key) in table.keys.iter().enumerate() {
        let jump = table.labels[k].is_jump();
        if key.day < config.warm_up_days {
            report.warm_up += 1;
            keep[k] = false;
        }
        if config.halts.iter().any(|(a, b)| *a <= key.date && key.date <= *b) {
            report.halt += 1;
            keep[k] = false;
        }
        if !jump {
            continue;
        }
        let Some(si) = index.get(key.stock_id.as_str()) else {
            return Err(Error::InconsistentData(format!("no bars for instance stock {}", key.stock_id)));
        };
        let n = si.series.intervals_per_day;
        let target = key.day * n + key.interval + 1;
        if let Some(rule) = &config.limit {
            if let Some(dir) = si.locked(rule, target) {
                let mut g = target;
                let mut earlier = false;
                while g > 0 && si.locked(rule, g - 1) == Some(dir) {
                    g -= 1;
                    if marked.contains(&(key.stock_id.as_str(), g)) {
                        earlier = true;
                        break;
                    }
                }
                if earlier {
                    report.limit_lock += 1;
                    keep[k] = false;
                }
            }
        }
        if let Some(wins) = event_windows.get(key.stock_id.as_str()) {
            if wins.iter().any(|(a, b)| *a <= target && target < *b) {
                report.post_event += 1;
                keep[k] = false;
            }
        }
    }
    table.retain(&keep);
    report.kept = table.len();
    Ok(report)
}

/// Reads an event calendar with columns `stock_id,date,time,kind`.
pub fn read_events<R: Read>(source: R, delimiter: u8) -> Result<Vec<MarketEvent>> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(source);
    let headers = r.headers()?.clone();
    let col = |c: &str| headers.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn(c.to_string()));
    let (s, d, t, k) = (col("stock_id")?, col("date")?, col("time")?, col("kind")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |w: &str| Error::InconsistentData(format!("event row {}: bad {w}", line + 2));
        out.push(MarketEvent {
            stock_id: rec[s].to_string(),
            date: NaiveDate::parse_from_str(&rec[d], "%Y-%m-%d").map_err(|_| bad("date"))?,
            time: NaiveTime::parse_from_str(&rec[t], "%H:%M:%S")
                .or_else(|_| NaiveTime::parse_from_str(&rec[t], "%H:%M"))
                .map_err(|_| bad("time"))?,
            kind: match &rec[k] {
                "resumption" => EventKind::Resumption,
                "dividend" => EventKind::Dividend,
                _ => return Err(bad("kind")),
            },
        });
    }
    Ok(out)
}
