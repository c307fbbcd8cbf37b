//! Labelled instances, exclusion filters, class balancing and replicates.
//!
//! An instance at `(t, i)` holds the standardized technical indicators at
//! interval `i`, each liquidity measure at intervals `i-11..=i` (chained into
//! the previous day), the 12-interval averages of those measures, and the
//! jump label of interval `i+1` of the same day.

mod balance;
mod filters;
mod replicates;

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use balance::{K_NEIGHBORS, Smote, Synthetic, smote_oversample, undersample};
pub use filters::{EventKind, FilterConfig, FilterReport, LimitRule, MarketEvent, apply_filters, read_events};
pub use replicates::{
    ClassCounts, DateSplit, Problem, ReplicateConfig, ReplicateSet, Scope, TrainReplicate, build_replicates,
    scope_indices,
};

use crate::features::{LIQUIDITY_NAMES, StockFeatures};
use crate::jump::{Direction, JumpMark};
use crate::{Error, Result};

/// Number of trailing intervals per liquidity measure.
pub const WINDOW: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    None,
    Up,
    Down,
}

impl Label {
    pub fn from_sign(s: i8) -> Option<Self> {
        match s {
            0 => Some(Label::None),
            1 => Some(Label::Up),
            -1 => Some(Label::Down),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::None => 0,
            Label::Up => 1,
            Label::Down => -1,
        }
    }

    pub fn is_jump(self) -> bool {
        self != Label::None
    }
}

impl From<Direction> for Label {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Up => Label::Up,
            Direction::Down => Label::Down,
        }
    }
}

/// Where an instance comes from. `day` and `interval` are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub stock_id: String,
    pub date: NaiveDate,
    pub day: usize,
    pub interval: usize,
}

/// Row-major table of complete instances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceTable {
    pub names: Vec<String>,
    pub keys: Vec<InstanceKey>,
    pub labels: Vec<Label>,
    values: Vec<f64>,
}

impl InstanceTable {
    pub fn new(names: Vec<String>) -> Self {
        Self { names, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.values[k * d..(k + 1) * d]
    }

    pub fn push(&mut self, key: InstanceKey, label: Label, row: &[f64]) {
        assert_eq!(row.len(), self.dim());
        self.keys.push(key);
        self.labels.push(label);
        self.values.extend_from_slice(row);
    }

    /// Column `j` over rows `idx`.
    pub fn column(&self, j: usize, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&k| self.row(k)[j]).collect()
    }

    /// Keeps the rows where `keep` is true.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        let d = self.dim();
        let mut out = InstanceTable::new(self.names.clone());
        for (k, _) in keep.iter().enumerate().filter(|(_, &kp)| kp) {
            out.keys.push(self.keys[k].clone());
            out.labels.push(self.labels[k]);
            out.values.extend_from_slice(&self.values[k * d..(k + 1) * d]);
        }
        *self = out;
    }

    /// Appends all rows of `other`, which must have the same columns.
    pub fn extend(&mut self, other: InstanceTable) -> Result<()> {
        if self.names.is_empty() && self.is_empty() {
            *self = other;
            return Ok(());
        }
        if other.names != self.names {
            return Err(Error::InconsistentData("instance tables with different attributes".into()));
        }
        self.keys.extend(other.keys);
        self.labels.extend(other.labels);
        self.values.extend(other.values);
        Ok(())
    }

    pub fn set_label(&mut self, k: usize, label: Label) {
        self.labels[k] = label;
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let up = self.labels.iter().filter(|l| **l == Label::Up).count();
        let down = self.labels.iter().filter(|l| **l == Label::Down).count();
        (up, down, self.len() - up - down)
    }
}

/// Attribute names in instance order, for `technical` indicator names.
pub fn attribute_names(technical: &[String]) -> Vec<String> {
    let mut names = technical.to_vec();
    for m in LIQUIDITY_NAMES {
        names.extend((0..WINDOW).rev().map(|lag| format!("{m}[-{lag}]")));
    }
    names.extend(LIQUIDITY_NAMES.iter().map(|m| format!("avg_{m}")));
    names
}

/// Zero-based attribute position of liquidity measure `m` at `lag` intervals back.
pub fn liquidity_attribute(technical_count: usize, m: usize, lag: usize) -> usize {
    technical_count + m * WINDOW + (WINDOW - 1 - lag)
}

/// Zero-based attribute position of the 12-interval average of measure `m`.
pub fn average_attribute(technical_count: usize, m: usize) -> usize {
    technical_count + LIQUIDITY_NAMES.len() * WINDOW + m
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembly {
    pub table: InstanceTable,
    /// Candidate positions skipped for a missing attribute.
    pub incomplete: usize,
}

/// Computes the attribute row at `(t, i)`, `None` if any value is missing.
pub fn instance_row(f: &StockFeatures, t: usize, i: usize) -> Option<Vec<f64>> {
    let n = f.n;
    let nliq = f.liquidity_count();
    let ntech = f.technical_count();
    let g = t * n + i;
    if g + 1 < WINDOW {
        return None;
    }
    let mut row = Vec::with_capacity(ntech + nliq * (WINDOW + 1));
    for c in 0..ntech {
        row.push(f.standardized[nliq + c][g]?);
    }
    let mut avgs = Vec::with_capacity(nliq);
    for m in 0..nliq {
        let col = &f.standardized[m];
        let mut sum = 0.0;
        for gg in g + 1 - WINDOW..=g {
            let v = col[gg]?;
            sum += v;
            row.push(v);
        }
        avgs.push(sum / WINDOW as f64);
    }
    row.extend(avgs);
    Some(row)
}

/// Builds the instances of one stock from its features and jump marks.
///
/// The last interval of each day has no instance.
pub fn assemble_instances(features: &StockFeatures, marks: &[JumpMark]) -> Assembly {
    let technical = &features.names[features.liquidity_count()..];
    let mut table = InstanceTable::new(attribute_names(technical));
    let by_slot: HashMap<(NaiveDate, usize), Direction> = marks
        .iter()
        .filter(|m| m.stock_id == features.stock_id)
        .map(|m| ((m.date, m.interval), m.direction))
        .collect();
    let mut incomplete = 0;
    for t in 0..features.days() {
        let date = features.dates[t];
        for i in 0..features.n.saturating_sub(1) {
            let Some(row) = instance_row(features, t, i) else {
                incomplete += 1;
                continue;
            };
            let label = by_slot.get(&(date, i + 1)).map_or(Label::None, |d| Label::from(*d));
            table.push(InstanceKey { stock_id: features.stock_id.clone(), date, day: t, interval: i }, label, &row);
        }
    }
    Assembly { table, incomplete }
}

/// Writes instances with 1-based intervals and `+1/0/-1` labels.
pub fn write_instances<W: Write>(sink: W, delimiter: u8, table: &InstanceTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    let mut header = vec!["stock_id".to_string(), "date".into(), "day".into(), "interval".into(), "label".into()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for k in 0..table.len() {
        let key = &table.keys[k];
        let mut rec = vec![
            key.stock_id.clone(),
            key.date.to_string(),
            key.day.to_string(),
            (key.interval + 1).to_string(),
            table.labels[k].sign().to_string(),
        ];
        rec.extend(table.row(k).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances<R: Read>(source: R, delimiter: u8) -> Result<InstanceTable> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(source);
    let headers = r.headers()?.clone();
    for (k, c) in ["stock_id", "date", "day", "interval", "label"].iter().enumerate() {
        if headers.get(k) != Some(*c) {
            return Err(Error::MissingColumn((*c).to_string()));
        }
    }
    let mut table = InstanceTable::new(headers.iter().skip(5).map(str::to_string).collect());
    let mut row = Vec::with_capacity(table.dim());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::InconsistentData(format!("instance row {}: bad {what}", line + 2));
        let key = InstanceKey {
            stock_id: rec[0].to_string(),
            date: NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad("date"))?,
            day: rec[2].parse().map_err(|_| bad("day"))?,
            interval: rec[3].parse::<usize>().ok().and_then(|i| i.checked_sub(1)).ok_or_else(|| bad("interval"))?,
        };
        let label = rec[4].parse::<i8>().ok().and_then(Label::from_sign).ok_or_else(|| bad("label"))?;
        row.clear();
        for k in 5..rec.len() {
            row.push(rec[k].parse().map_err(|_| bad(&headers[k]))?);
        }
        if row.len() != table.dim() {
            return Err(bad("width"));
        }
        table.push(key, label, &row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::technical_names;

    fn features(days: usize, n: usize) -> StockFeatures {
        let names: Vec<String> =
            LIQUIDITY_NAMES.iter().map(|s| s.to_string()).chain(["X".to_string(), "Y".to_string()]).collect();
        let cols = names.len();
        let std: Vec<Vec<Option<f64>>> =
            (0..cols).map(|c| (0..days * n).map(|g| Some((c * 1000 + g) as f64)).collect()).collect();
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        StockFeatures {
            stock_id: "A".into(),
            dates: (0..days).map(|t| d0 + chrono::Days::new(t as u64)).collect(),
            n,
            names,
            raw: std.clone(),
            standardized: std,
        }
    }

    fn mark(f: &StockFeatures, t: usize, i: usize, d: Direction) -> JumpMark {
        JumpMark { stock_id: f.stock_id.clone(), date: f.dates[t], day: t, interval: i, direction: d, statistic: 9.0, alpha: 0.05 }
    }

    #[test]
    fn names_and_positions() {
        let names = attribute_names(&technical_names(&[5, 10, 20, 30]));
        assert_eq!(names.len(), 184);
        assert_eq!(names[54], "r[-11]");
        assert_eq!(names[65], "r[-0]");
        assert_eq!(names[137], "di[-0]");
        assert_eq!(names[174], "avg_r");
        assert_eq!(names[183], "avg_rv");
        assert_eq!(liquidity_attribute(54, 6, 0), 137);
        assert_eq!(average_attribute(54, 0), 174);
    }

    #[test]
    fn labels_refer_to_next_interval() {
        let f = features(3, 8);
        let marks = vec![mark(&f, 2, 5, Direction::Up), mark(&f, 2, 0, Direction::Down)];
        let a = assemble_instances(&f, &marks);
        let find = |t: usize, i: usize| a.table.keys.iter().position(|k| k.day == t && k.interval == i);
        assert_eq!(a.table.labels[find(2, 4).unwrap()], Label::Up);
        assert_eq!(a.table.labels[find(2, 5).unwrap()], Label::None);
        assert!(find(1, 7).is_none());
        assert!(!a.table.labels.contains(&Label::Down));
    }

    #[test]
    fn liquidity_window_chains_into_previous_day() {
        let f = features(3, 8);
        let a = assemble_instances(&f, &[]);
        let k = a.table.keys.iter().position(|k| k.day == 1 && k.interval == 5).unwrap();
        let row = a.table.row(k);
        let g = 8 + 5;
        assert_eq!(row[0], (10 * 1000 + g) as f64);
        assert_eq!(row[liquidity_attribute(2, 0, 0)], g as f64);
        assert_eq!(row[liquidity_attribute(2, 0, 11)], (g - 11) as f64);
        let avg: f64 = (g - 11..=g).map(|x| x as f64).sum::<f64>() / 12.0;
        assert_eq!(row[average_attribute(2, 0)], avg);
        assert_eq!(a.incomplete, 10);
    }

    #[test]
    fn missing_values_exclude_instances() {
        let mut f = features(2, 8);
        f.standardized[3][12] = None;
        let a = assemble_instances(&f, &[]);
        for k in &a.table.keys {
            let g = k.day * 8 + k.interval;
            assert!(!(12..12 + WINDOW).contains(&g));
        }
    }

    #[test]
    fn instance_table_round_trip() {
        let f = features(3, 8);
        let m = vec![mark(&f, 2, 3, Direction::Down)];
        let t = assemble_instances(&f, &m).table;
        let mut buf = Vec::new();
        write_instances(&mut buf, b',', &t).unwrap();
        assert_eq!(read_instances(buf.as_slice(), b',').unwrap(), t);
    }
}
