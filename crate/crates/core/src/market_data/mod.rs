//! Level-2 snapshot parsing and aggregation into interval bars.

mod bars;
mod calendar;
mod snapshot;

pub use bars::{
    Aggregated, BarRecord, FlowSums, IntervalBar, StockSeries, TradingDay, aggregate_intervals, read_bars, write_bars,
};
pub use calendar::{Session, TradingCalendar};
pub use snapshot::{
    Level2Snapshot, ParsedSnapshots, RejectedRow, Side, SnapshotSchema, format_timestamp, parse_snapshots,
    parse_timestamp, write_snapshots,
};
