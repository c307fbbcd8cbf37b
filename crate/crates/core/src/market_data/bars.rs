use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::calendar::TradingCalendar;
use super::snapshot::{Level2Snapshot, Side};
use crate::{Error, Result};

/// Per-record data retained inside a bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarRecord {
    pub price: f64,
    pub volume: f64,
    pub trades: u64,
    pub bid: f64,
    pub ask: f64,
    pub bid_volume: f64,
    pub ask_volume: f64,
    /// Feed aggressor flag, or the mid-quote classification when the feed has none.
    pub side: Side,
}

impl BarRecord {
    /// Sum of best ask and best bid, `None` when either side is unquoted.
    pub fn quote_sum(&self) -> Option<f64> {
        (self.bid > 0.0 && self.ask > 0.0).then(|| self.ask + self.bid)
    }
}

/// Sufficient statistics of one bar's records for the liquidity measures.
///
/// These are the sums appearing in the order-imbalance, depth-imbalance,
/// spread and realized-volatility formulas, so a bar table that carries them
/// reproduces the measures without the raw records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSums {
    pub trades: u64,
    pub volume: f64,
    pub buy_volume: f64,
    pub sell_volume: f64,
    /// Sum of best-ask volumes over records.
    pub ask_depth: f64,
    /// Sum of best-bid volumes over records.
    pub bid_depth: f64,
    /// Sum of `qs_j * v_j`.
    pub quoted_spread_volume: f64,
    /// Sum of `es_j * v_j`.
    pub effective_spread_volume: f64,
    /// Sum of squared mid-quote log returns.
    pub realized_variance: f64,
    /// Records whose quotes could not enter the spread or mid-return sums.
    pub skipped_quotes: u32,
}

impl FlowSums {
    /// Accumulates `records`; `prev_quote_sum` is the ask+bid of the record
    /// preceding the bar within the same day, if any.
    pub fn from_records(records: &[BarRecord], prev_quote_sum: Option<f64>) -> Self {
        let mut f = FlowSums::default();
        let mut prev = prev_quote_sum;
        for r in records {
            f.trades += r.trades;
            f.volume += r.volume;
            match r.side {
                Side::Buy => f.buy_volume += r.volume,
                Side::Sell => f.sell_volume += r.volume,
                Side::Unknown => {}
            }
            f.ask_depth += r.ask_volume;
            f.bid_depth += r.bid_volume;
            match r.quote_sum() {
                Some(sum) => {
                    let qs = 2.0 * (r.ask - r.bid) / sum;
                    let es = (4.0 * r.price - 2.0 * sum).abs() / sum;
                    f.quoted_spread_volume += qs * r.volume;
                    f.effective_spread_volume += es * r.volume;
                    if let Some(p) = prev {
                        let rr = sum.ln() - p.ln();
                        f.realized_variance += rr * rr;
                    }
                    prev = Some(sum);
                }
                None => f.skipped_quotes += 1,
            }
        }
        f
    }
}

/// One interval of one stock-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBar {
    /// Zero-based interval index within the day.
    pub interval: usize,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub trades: u64,
    pub record_count: usize,
    /// Raw records; empty when the bar was loaded from a bar table.
    #[serde(skip)]
    pub records: Vec<BarRecord>,
    pub flow: FlowSums,
    pub is_empty: bool,
}

impl IntervalBar {
    fn carried(interval: usize, price: f64) -> Self {
        Self {
            interval,
            open: price,
            high: price,
            low: price,
            close: price,
            volume: 0.0,
            trades: 0,
            record_count: 0,
            records: Vec::new(),
            flow: FlowSums::default(),
            is_empty: true,
        }
    }
}

/// The `n` bars of one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingDay {
    pub date: NaiveDate,
    /// Price of the first in-session record of the day.
    pub open_price: f64,
    pub bars: Vec<IntervalBar>,
}

impl TradingDay {
    pub fn close(&self) -> f64 {
        self.bars.last().map_or(self.open_price, |b| b.close)
    }
}

/// Chronological trading days of one stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSeries {
    pub stock_id: String,
    pub intervals_per_day: usize,
    pub days: Vec<TradingDay>,
}

impl StockSeries {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Bars chained across days in time order.
    pub fn bars(&self) -> impl Iterator<Item = &IntervalBar> {
        self.days.iter().flat_map(|d| d.bars.iter())
    }
}

/// Result of aggregating one stock stream.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub series: StockSeries,
    /// Records outside every session.
    pub dropped: usize,
}

fn classify(s: &Level2Snapshot) -> Side {
    if s.aggressor != Side::Unknown || s.trades == 0 {
        return s.aggressor;
    }
    let (bid, ask) = (s.best_bid(), s.best_ask());
    if bid <= 0.0 || ask <= 0.0 {
        return Side::Unknown;
    }
    let mid = 0.5 * (bid + ask);
    let tol = 1e-9 * mid;
    if s.last_price > mid + tol {
        Side::Buy
    } else if s.last_price < mid - tol {
        Side::Sell
    } else {
        Side::Unknown
    }
}

fn canonical(a: &BarRecord, b: &BarRecord) -> Ordering {
    let side = |s: Side| match s {
        Side::Buy => 0,
        Side::Sell => 1,
        Side::Unknown => 2,
    };
    a.price
        .total_cmp(&b.price)
        .then(a.volume.total_cmp(&b.volume))
        .then(a.trades.cmp(&b.trades))
        .then(a.bid.total_cmp(&b.bid))
        .then(a.ask.total_cmp(&b.ask))
        .then(a.bid_volume.total_cmp(&b.bid_volume))
        .then(a.ask_volume.total_cmp(&b.ask_volume))
        .then(side(a.side).cmp(&side(b.side)))
}

/// Buckets one stock's time-ordered snapshots into `n` bars per covered day.
///
/// Days are the dates carrying at least one in-session record. Records with
/// equal timestamps are ordered canonically, so their feed order is
/// irrelevant. Empty bars carry the previous close of the same day forward
/// (the day's first record price for leading empty bars) with zero volume
/// and trades.
pub fn aggregate_intervals(
    stock_id: &str,
    snapshots: &[Level2Snapshot],
    calendar: &TradingCalendar,
) -> Result<Aggregated> {
    let n = calendar.intervals_per_day();
    let mut by_day: BTreeMap<NaiveDate, Vec<Vec<(NaiveDateTime, BarRecord)>>> = BTreeMap::new();
    let mut dropped = 0;
    let mut last_ts = None;
    for s in snapshots {
        if s.stock_id != stock_id {
            return Err(Error::InconsistentData(format!(
                "snapshot for {} in stream of {stock_id}",
                s.stock_id
            )));
        }
        if let Some(prev) = last_ts {
            if s.timestamp < prev {
                return Err(Error::InconsistentData(format!(
                    "{stock_id}: snapshots not sorted at {}",
                    s.timestamp
                )));
            }
        }
        last_ts = Some(s.timestamp);
        let Some(i) = calendar.interval_of(s.timestamp.time()) else {
            dropped += 1;
            continue;
        };
        let day = by_day.entry(s.timestamp.date()).or_insert_with(|| vec![Vec::new(); n]);
        let record = BarRecord {
            price: s.last_price,
            volume: s.volume,
            trades: s.trades,
            bid: s.best_bid(),
            ask: s.best_ask(),
            bid_volume: s.best_bid_volume(),
            ask_volume: s.best_ask_volume(),
            side: classify(s),
        };
        day[i].push((s.timestamp, record));
    }
    if dropped > 0 {
        log::warn!("{stock_id}: dropped {dropped} snapshots outside trading sessions");
    }

    let mut days = Vec::with_capacity(by_day.len());
    for (date, mut stamped) in by_day {
        // Records sharing a timestamp are put in a canonical order.
        for b in &mut stamped {
            b.sort_by(|(ta, a), (tb, b)| ta.cmp(tb).then_with(|| canonical(a, b)));
        }
        let buckets: Vec<Vec<BarRecord>> =
            stamped.into_iter().map(|b| b.into_iter().map(|(_, r)| r).collect()).collect();
        let open_price = buckets
            .iter()
            .find_map(|b| b.first().map(|r| r.price))
            .expect("a covered day has at least one record");
        let mut bars = Vec::with_capacity(n);
        let mut carry = open_price;
        let mut prev_quote: Option<f64> = None;
        for (i, records) in buckets.into_iter().enumerate() {
            if records.is_empty() {
                bars.push(IntervalBar::carried(i, carry));
                continue;
            }
            let flow = FlowSums::from_records(&records, prev_quote);
            if let Some(q) = records.iter().rev().find_map(BarRecord::quote_sum) {
                prev_quote = Some(q);
            }
            let (mut high, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in &records {
                high = high.max(r.price);
                low = low.min(r.price);
            }
            let bar = IntervalBar {
                interval: i,
                open: records[0].price,
                high,
                low,
                close: records[records.len() - 1].price,
                volume: flow.volume,
                trades: flow.trades,
                record_count: records.len(),
                records,
                flow,
                is_empty: false,
            };
            carry = bar.close;
            bars.push(bar);
        }
        days.push(TradingDay { date, open_price, bars });
    }
    Ok(Aggregated {
        series: StockSeries { stock_id: stock_id.to_string(), intervals_per_day: n, days },
        dropped,
    })
}

const BAR_COLUMNS: [&str; 20] = [
    "stock_id",
    "date",
    "interval",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "trades",
    "records",
    "is_empty",
    "day_open",
    "buy_volume",
    "sell_volume",
    "ask_depth",
    "bid_depth",
    "qs_volume",
    "es_volume",
    "realized_variance",
    "skipped_quotes",
];

/// Writes bars as a delimited table, one row per (stock, day, interval).
///
/// Intervals are written 1-based.
pub fn write_bars<W: Write>(sink: W, delimiter: u8, series: &[StockSeries]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    w.write_record(BAR_COLUMNS)?;
    for s in series {
        for day in &s.days {
            for b in &day.bars {
                let f = &b.flow;
                w.write_record([
                    s.stock_id.clone(),
                    day.date.to_string(),
                    (b.interval + 1).to_string(),
                    b.open.to_string(),
                    b.high.to_string(),
                    b.low.to_string(),
                    b.close.to_string(),
                    b.volume.to_string(),
                    b.trades.to_string(),
                    b.record_count.to_string(),
                    u8::from(b.is_empty).to_string(),
                    day.open_price.to_string(),
                    f.buy_volume.to_string(),
                    f.sell_volume.to_string(),
                    f.ask_depth.to_string(),
                    f.bid_depth.to_string(),
                    f.quoted_spread_volume.to_string(),
                    f.effective_spread_volume.to_string(),
                    f.realized_variance.to_string(),
                    f.skipped_quotes.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_bars`]. Bars come back without raw records.
pub fn read_bars<R: Read>(source: R, delimiter: u8) -> Result<Vec<StockSeries>> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(source);
    let headers = r.headers()?.clone();
    let idx: Vec<usize> = BAR_COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::MissingColumn((*c).to_string()))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<StockSeries> = Vec::new();
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |k: usize| {
            Error::InconsistentData(format!("bar row {}: bad {} `{}`", row_no + 2, BAR_COLUMNS[k], get(k)))
        };
        let f = |k: usize| get(k).parse::<f64>().map_err(|_| bad(k));
        let u = |k: usize| get(k).parse::<u64>().map_err(|_| bad(k));
        let stock = get(0);
        let date = NaiveDate::parse_from_str(get(1), "%Y-%m-%d").map_err(|_| bad(1))?;
        let interval = (u(2)? as usize).checked_sub(1).ok_or_else(|| bad(2))?;
        let flow = FlowSums {
            trades: u(8)?,
            volume: f(7)?,
            buy_volume: f(12)?,
            sell_volume: f(13)?,
            ask_depth: f(14)?,
            bid_depth: f(15)?,
            quoted_spread_volume: f(16)?,
            effective_spread_volume: f(17)?,
            realized_variance: f(18)?,
            skipped_quotes: u(19)? as u32,
        };
        let bar = IntervalBar {
            interval,
            open: f(3)?,
            high: f(4)?,
            low: f(5)?,
            close: f(6)?,
            volume: flow.volume,
            trades: flow.trades,
            record_count: u(9)? as usize,
            records: Vec::new(),
            flow,
            is_empty: get(10) == "1",
        };
        if out.last().is_none_or(|s| s.stock_id != stock) {
            out.push(StockSeries { stock_id: stock.to_string(), intervals_per_day: 0, days: Vec::new() });
        }
        let series = out.last_mut().expect("pushed above");
        if series.days.last().is_none_or(|d| d.date != date) {
            series.days.push(TradingDay { date, open_price: f(11)?, bars: Vec::new() });
        }
        let day = series.days.last_mut().expect("pushed above");
        if interval != day.bars.len() {
            return Err(Error::InconsistentData(format!(
                "bar row {}: interval {} out of order",
                row_no + 2,
                interval + 1
            )));
        }
        day.bars.push(bar);
    }
    for s in &mut out {
        let n = s.days.first().map_or(0, |d| d.bars.len());
        if s.days.iter().any(|d| d.bars.len() != n) {
            return Err(Error::InconsistentData(format!("{}: ragged bar table", s.stock_id)));
        }
        s.intervals_per_day = n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDateTime;

    fn snap(ts: &str, price: f64, trades: u64, volume: f64, side: Side) -> Level2Snapshot {
        Level2Snapshot {
            stock_id: "A".into(),
            timestamp: NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M:%S").unwrap(),
            last_price: price,
            trades,
            volume,
            bid_prices: vec![price - 0.01],
            ask_prices: vec![price + 0.01],
            bid_volumes: vec![500.0],
            ask_volumes: vec![400.0],
            aggressor: side,
        }
    }

    #[test]
    fn degenerate_day_carries_forward() {
        let cal = TradingCalendar::shenzhen();
        let s = vec![
            snap("2016-01-04 09:30:00", 10.0, 1, 100.0, Side::Buy),
            snap("2016-01-04 09:32:00", 10.2, 2, 300.0, Side::Sell),
            snap("2016-01-04 09:34:00", 10.1, 1, 200.0, Side::Buy),
        ];
        let agg = aggregate_intervals("A", &s, &cal).unwrap();
        let day = &agg.series.days[0];
        assert_eq!(day.bars.len(), 48);
        let b0 = &day.bars[0];
        assert!(!b0.is_empty);
        assert_eq!((b0.open, b0.high, b0.low, b0.close), (10.0, 10.2, 10.0, 10.1));
        assert_eq!(b0.volume, 600.0);
        assert_eq!(b0.trades, 4);
        for b in &day.bars[1..] {
            assert!(b.is_empty);
            assert_eq!((b.open, b.high, b.low, b.close), (10.1, 10.1, 10.1, 10.1));
            assert_eq!((b.volume, b.trades), (0.0, 0));
        }
    }

    #[test]
    fn boundary_record_closes_its_interval() {
        let cal = TradingCalendar::shenzhen();
        let s = vec![
            snap("2016-01-04 09:31:00", 10.0, 1, 100.0, Side::Buy),
            snap("2016-01-04 09:35:00", 10.5, 1, 100.0, Side::Buy),
            snap("2016-01-04 09:35:03", 10.7, 1, 100.0, Side::Buy),
        ];
        let agg = aggregate_intervals("A", &s, &cal).unwrap();
        let bars = &agg.series.days[0].bars;
        assert_eq!(bars[0].close, 10.5);
        assert_eq!(bars[0].record_count, 2);
        assert_eq!(bars[1].open, 10.7);
    }

    #[test]
    fn leading_empty_bars_carry_open_price() {
        let cal = TradingCalendar::shenzhen();
        let s = vec![snap("2016-01-04 09:50:00", 10.0, 1, 100.0, Side::Buy)];
        let agg = aggregate_intervals("A", &s, &cal).unwrap();
        let day = &agg.series.days[0];
        assert_eq!(day.open_price, 10.0);
        assert!(day.bars[0].is_empty && day.bars[0].close == 10.0);
        assert!(!day.bars[3].is_empty);
    }

    #[test]
    fn out_of_session_records_are_dropped() {
        let cal = TradingCalendar::shenzhen();
        let s = vec![
            snap("2016-01-04 09:15:00", 9.0, 1, 100.0, Side::Buy),
            snap("2016-01-04 09:31:00", 10.0, 1, 100.0, Side::Buy),
            snap("2016-01-04 12:00:00", 11.0, 1, 100.0, Side::Buy),
        ];
        let agg = aggregate_intervals("A", &s, &cal).unwrap();
        assert_eq!(agg.dropped, 2);
        assert_eq!(agg.series.days[0].open_price, 10.0);
    }

    #[test]
    fn mid_quote_classification() {
        let cal = TradingCalendar::shenzhen();
        let mut a = snap("2016-01-04 09:31:00", 10.0, 1, 100.0, Side::Unknown);
        a.bid_prices = vec![9.98];
        a.ask_prices = vec![10.0];
        let mut b = snap("2016-01-04 09:31:03", 9.98, 1, 50.0, Side::Unknown);
        b.bid_prices = vec![9.98];
        b.ask_prices = vec![10.0];
        let mut c = snap("2016-01-04 09:31:06", 9.99, 1, 30.0, Side::Unknown);
        c.bid_prices = vec![9.98];
        c.ask_prices = vec![10.0];
        let agg = aggregate_intervals("A", &[a, b, c], &cal).unwrap();
        let f = agg.series.days[0].bars[0].flow;
        assert_eq!((f.buy_volume, f.sell_volume, f.volume), (100.0, 50.0, 180.0));
    }

    #[test]
    fn bar_table_round_trip() {
        let cal = TradingCalendar::shenzhen();
        let s = vec![
            snap("2016-01-04 09:31:00", 10.0, 1, 100.0, Side::Buy),
            snap("2016-01-04 10:31:00", 10.3, 3, 700.0, Side::Sell),
            snap("2016-01-05 09:31:00", 10.1, 1, 100.0, Side::Buy),
        ];
        let series = aggregate_intervals("A", &s, &cal).unwrap().series;
        let mut buf = Vec::new();
        write_bars(&mut buf, b',', std::slice::from_ref(&series)).unwrap();
        let back = read_bars(buf.as_slice(), b',').unwrap();
        let mut expect = series.clone();
        for d in &mut expect.days {
            for b in &mut d.bars {
                b.records.clear();
            }
        }
        assert_eq!(back, vec![expect]);
    }
}
