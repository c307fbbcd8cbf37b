use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Aggressor side of the trades summarised by one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
    Unknown,
}

impl Side {
    fn parse(s: &str) -> Option<Side> {
        match s.trim() {
            "" => Some(Side::Unknown),
            "B" | "b" | "buy" | "BUY" => Some(Side::Buy),
            "S" | "s" | "sell" | "SELL" => Some(Side::Sell),
            _ => None,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Side::Buy => "B",
            Side::Sell => "S",
            Side::Unknown => "",
        }
    }
}

/// One level-2 record: best quotes plus the trade summary since the previous record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level2Snapshot {
    pub stock_id: String,
    pub timestamp: NaiveDateTime,
    pub last_price: f64,
    /// Trades since the previous record.
    pub trades: u64,
    /// Shares traded since the previous record.
    pub volume: f64,
    pub bid_prices: Vec<f64>,
    pub ask_prices: Vec<f64>,
    pub bid_volumes: Vec<f64>,
    pub ask_volumes: Vec<f64>,
    pub aggressor: Side,
}

impl Level2Snapshot {
    pub fn best_bid(&self) -> f64 {
        self.bid_prices.first().copied().unwrap_or(0.0)
    }

    pub fn best_ask(&self) -> f64 {
        self.ask_prices.first().copied().unwrap_or(0.0)
    }

    pub fn best_bid_volume(&self) -> f64 {
        self.bid_volumes.first().copied().unwrap_or(0.0)
    }

    pub fn best_ask_volume(&self) -> f64 {
        self.ask_volumes.first().copied().unwrap_or(0.0)
    }

    /// Checks the per-record invariants; returns the violation as text.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(self.last_price > 0.0) || !self.last_price.is_finite() {
            return Err(format!("last_price {} is not strictly positive", self.last_price));
        }
        if !(self.volume >= 0.0) {
            return Err(format!("negative volume {}", self.volume));
        }
        let (bid, ask) = (self.best_bid(), self.best_ask());
        if bid < 0.0 || ask < 0.0 {
            return Err("negative best quote".into());
        }
        if bid > 0.0 && ask > 0.0 && bid > ask {
            return Err(format!("crossed quotes: bid {bid} > ask {ask}"));
        }
        Ok(())
    }
}

/// Column layout of a snapshot file.
///
/// Canonical column names are `stock_id`, `timestamp`, `last_price`,
/// `cum_trades`, `cum_volume`, `bid_px_{k}`, `bid_vol_{k}`, `ask_px_{k}`,
/// `ask_vol_{k}` for `k = 1..=depth`, and `aggressor`. `rename` maps a
/// canonical name to the header actually used by the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSchema {
    pub delimiter: u8,
    pub depth: usize,
    pub rename: HashMap<String, String>,
}

impl Default for SnapshotSchema {
    fn default() -> Self {
        Self { delimiter: b',', depth: 10, rename: HashMap::new() }
    }
}

impl SnapshotSchema {
    pub fn with_depth(depth: usize) -> Self {
        Self { depth, ..Self::default() }
    }

    fn header_for(&self, canonical: &str) -> String {
        self.rename.get(canonical).cloned().unwrap_or_else(|| canonical.to_string())
    }

    /// Canonical header in file order.
    pub fn canonical_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> =
            ["stock_id", "timestamp", "last_price", "cum_trades", "cum_volume"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        for side in ["bid_px", "bid_vol", "ask_px", "ask_vol"] {
            cols.extend((1..=self.depth).map(|k| format!("{side}_{k}")));
        }
        cols.push("aggressor".into());
        cols
    }
}

/// A row that failed validation, with its 1-based line number in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Parsed snapshots grouped per stock, each stream in timestamp order.
#[derive(Debug, Default, Clone)]
pub struct ParsedSnapshots {
    pub streams: BTreeMap<String, Vec<Level2Snapshot>>,
    pub rejected: Vec<RejectedRow>,
}

impl ParsedSnapshots {
    pub fn total(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

struct ColumnIndex {
    stock: usize,
    timestamp: usize,
    price: usize,
    trades: usize,
    volume: usize,
    bid_px: Vec<usize>,
    bid_vol: Vec<usize>,
    ask_px: Vec<usize>,
    ask_vol: Vec<usize>,
    aggressor: Option<usize>,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &SnapshotSchema) -> Result<Self> {
        let find = |canonical: &str| -> Result<usize> {
            let name = schema.header_for(canonical);
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or(Error::MissingColumn(name))
        };
        let levels = |prefix: &str| -> Result<Vec<usize>> {
            (1..=schema.depth).map(|k| find(&format!("{prefix}_{k}"))).collect()
        };
        if schema.depth == 0 {
            return Err(Error::InvalidConfig("quote depth must be at least 1".into()));
        }
        Ok(Self {
            stock: find("stock_id")?,
            timestamp: find("timestamp")?,
            price: find("last_price")?,
            trades: find("cum_trades")?,
            volume: find("cum_volume")?,
            bid_px: levels("bid_px")?,
            bid_vol: levels("bid_vol")?,
            ask_px: levels("ask_px")?,
            ask_vol: levels("ask_vol")?,
            // The aggressor flag is optional: feeds without it are classified later.
            aggressor: find("aggressor").ok(),
        })
    }

    fn row(&self, rec: &csv::StringRecord) -> std::result::Result<Level2Snapshot, String> {
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
            field(i).parse::<f64>().map_err(|_| format!("bad {name} `{}`", field(i)))
        };
        // Deeper levels may be blank when the book is thin.
        let level = |cols: &[usize], name: &str| -> std::result::Result<Vec<f64>, String> {
            cols.iter()
                .enumerate()
                .map(|(k, &i)| {
                    if k > 0 && field(i).is_empty() {
                        Ok(0.0)
                    } else {
                        num(i, name)
                    }
                })
                .collect()
        };
        let stock_id = field(self.stock).to_string();
        if stock_id.is_empty() {
            return Err("empty stock_id".into());
        }
        let timestamp = parse_timestamp(field(self.timestamp))
            .ok_or_else(|| format!("bad timestamp `{}`", field(self.timestamp)))?;
        let trades = field(self.trades)
            .parse::<u64>()
            .map_err(|_| format!("bad cum_trades `{}`", field(self.trades)))?;
        let aggressor = match self.aggressor {
            Some(i) => Side::parse(field(i)).ok_or_else(|| format!("bad aggressor `{}`", field(i)))?,
            None => Side::Unknown,
        };
        let snap = Level2Snapshot {
            stock_id,
            timestamp,
            last_price: num(self.price, "last_price")?,
            trades,
            volume: num(self.volume, "cum_volume")?,
            bid_prices: level(&self.bid_px, "bid price")?,
            ask_prices: level(&self.ask_px, "ask price")?,
            bid_volumes: level(&self.bid_vol, "bid volume")?,
            ask_volumes: level(&self.ask_vol, "ask volume")?,
            aggressor,
        };
        snap.check()?;
        Ok(snap)
    }
}

/// Parses a delimited snapshot table.
///
/// A missing column is fatal. Rows that fail to parse, violate the quote
/// invariants, or go back in time within their stock are rejected, logged and
/// reported with their line number; the remaining rows are grouped per stock.
pub fn parse_snapshots<R: Read>(source: R, schema: &SnapshotSchema) -> Result<ParsedSnapshots> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let cols = ColumnIndex::resolve(&headers, schema)?;
    let mut out = ParsedSnapshots::default();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        match cols.row(&record) {
            Ok(snap) => {
                let stream = out.streams.entry(snap.stock_id.clone()).or_default();
                if let Some(prev) = stream.last() {
                    if snap.timestamp < prev.timestamp {
                        let reason = format!(
                            "timestamp {} precedes {} for {}",
                            snap.timestamp, prev.timestamp, snap.stock_id
                        );
                        log::warn!("line {line}: {reason}");
                        out.rejected.push(RejectedRow { line, reason });
                        continue;
                    }
                }
                stream.push(snap);
            }
            Err(reason) => {
                log::warn!("line {line}: {reason}");
                out.rejected.push(RejectedRow { line, reason });
            }
        }
    }
    Ok(out)
}

/// Writes snapshots in the canonical layout understood by [`parse_snapshots`].
pub fn write_snapshots<'a, W, I>(sink: W, schema: &SnapshotSchema, snapshots: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Level2Snapshot>,
{
    let mut w = csv::WriterBuilder::new().delimiter(schema.delimiter).from_writer(sink);
    w.write_record(schema.canonical_columns())?;
    let level = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0).to_string();
    let mut row: Vec<String> = Vec::with_capacity(6 + 4 * schema.depth);
    for s in snapshots {
        row.clear();
        row.push(s.stock_id.clone());
        row.push(format_timestamp(&s.timestamp));
        row.push(s.last_price.to_string());
        row.push(s.trades.to_string());
        row.push(s.volume.to_string());
        for v in [&s.bid_prices, &s.bid_volumes, &s.ask_prices, &s.ask_volumes] {
            row.extend((0..schema.depth).map(|k| level(v, k)));
        }
        row.push(s.aggressor.code().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
