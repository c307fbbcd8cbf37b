//! Synthetic level-2 streams with planted jumps.
//!
//! The log mid-price diffuses snapshot by snapshot with an intraday
//! volatility profile; Poisson jumps are added to distinct intervals.
//! Quotes sit symmetrically around the mid with log-normal depth, and
//! trades print at the ask (buyer-initiated) or the bid (seller-initiated).

use std::io::Write;

use chrono::{Datelike, Days, NaiveDate, NaiveDateTime, Weekday};
use rand::Rng;
use rand::seq::index::sample;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{InstanceTable, Label};
use crate::jump::{Direction, JumpMark};
use crate::market_data::{Level2Snapshot, Side, StockSeries, TradingCalendar, TradingDay, aggregate_intervals};
use crate::rng::{StreamRng, stream};
use crate::{Error, Result, par};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub stocks: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub calendar: TradingCalendar,
    pub snapshots_per_interval: usize,
    /// Diffusion volatility of one interval, in log-return units.
    pub sigma: f64,
    /// Per-interval volatility multipliers; U-shaped when `None`.
    pub profile: Option<Vec<f64>>,
    /// Expected jumps per stock-day.
    pub jump_intensity: f64,
    /// Jump size as a multiple of the interval's volatility.
    pub jump_multiple: f64,
    pub jump_up_probability: f64,
    /// Mean relative quoted spread `(ask - bid) / mid`.
    pub spread: f64,
    /// Median best-quote depth in shares and its log-scale spread.
    pub depth_median: f64,
    pub depth_log_sd: f64,
    pub lot: f64,
    /// Expected trades per snapshot.
    pub trade_rate: f64,
    pub buy_probability: f64,
    /// Median trade size in shares.
    pub trade_size_median: f64,
    pub initial_price: f64,
    /// Emit the aggressor flag; otherwise leave it to quote-based classification.
    pub emit_aggressor: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            stocks: 1,
            days: 250,
            start: NaiveDate::from_ymd_opt(2014, 1, 2).expect("valid date"),
            calendar: TradingCalendar::shenzhen(),
            snapshots_per_interval: 100,
            sigma: 0.0025,
            profile: None,
            jump_intensity: 0.5,
            jump_multiple: 10.0,
            jump_up_probability: 0.5,
            spread: 0.001,
            depth_median: 5000.0,
            depth_log_sd: 0.6,
            lot: 100.0,
            trade_rate: 1.5,
            buy_probability: 0.5,
            trade_size_median: 800.0,
            initial_price: 10.0,
            emit_aggressor: true,
            seed: 0,
        }
    }
}

/// U-shaped multipliers with mean square 1: the open and close are about
/// twice as volatile as midday.
pub fn u_shape(n: usize) -> Vec<f64> {
    let half = (n.max(2) - 1) as f64 / 2.0;
    let raw: Vec<f64> = (0..n).map(|i| 1.0 + 1.5 * ((i as f64 - half) / half).powi(2)).collect();
    normalize(raw)
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let ms = raw.iter().map(|f| f * f).sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|f| f / ms.sqrt()).collect()
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("simulator: {m}")));
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if !(self.jump_intensity >= 0.0) || !(self.spread >= 0.0) || !(self.trade_rate >= 0.0) {
            return bad("intensity, spread and trade rate must be non-negative");
        }
        if self.snapshots_per_interval == 0 || self.days == 0 || self.stocks == 0 {
            return bad("stocks, days and snapshots per interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.jump_up_probability) || !(0.0..=1.0).contains(&self.buy_probability) {
            return bad("probabilities must lie in [0, 1]");
        }
        if let Some(p) = &self.profile {
            if p.len() != self.calendar.intervals_per_day() || p.iter().any(|f| !(*f > 0.0)) {
                return bad("profile needs one positive multiplier per interval");
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Vec<f64> {
        self.profile.clone().unwrap_or_else(|| u_shape(self.calendar.intervals_per_day()))
    }

    /// Business days from `start`.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.start;
        while out.len() < self.days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d = d + Days::new(1);
        }
        out
    }

    pub fn stock_id(s: usize) -> String {
        format!("SIM{s:04}")
    }
}

/// One planted jump. `day` and `interval` are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedJump {
    pub stock_id: String,
    pub date: NaiveDate,
    pub day: usize,
    pub interval: usize,
    pub direction: Direction,
    /// Signed log-return added to the interval.
    pub size: f64,
}

/// True per-interval mid log returns of one stock, split into parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueReturns {
    pub stock_id: String,
    pub diffusion: Vec<f64>,
    pub jump: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub jumps: Vec<PlantedJump>,
    pub returns: Vec<TrueReturns>,
}

impl GroundTruth {
    fn merge(parts: Vec<GroundTruth>) -> Self {
        let mut g = GroundTruth::default();
        for p in parts {
            g.jumps.extend(p.jumps);
            g.returns.extend(p.returns);
        }
        g
    }

    /// Marks matching planted jumps by `(stock, date, interval)`.
    pub fn match_marks<'a>(&self, marks: &'a [JumpMark]) -> Vec<(&PlantedJump, Option<&'a JumpMark>)> {
        self.jumps
            .iter()
            .map(|j| {
                let m = marks.iter().find(|m| m.stock_id == j.stock_id && m.date == j.date && m.interval == j.interval);
                (j, m)
            })
            .collect()
    }

    /// Writes planted jumps with 1-based intervals and `+1/-1` directions.
    pub fn write<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["stock_id", "date", "interval", "direction", "size"])?;
        for j in &self.jumps {
            w.write_record([
                j.stock_id.clone(),
                j.date.to_string(),
                (j.interval + 1).to_string(),
                j.direction.sign().to_string(),
                j.size.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct StockSim<'a> {
    cfg: &'a SimConfig,
    profile: &'a [f64],
    rng: StreamRng,
    log_mid: f64,
    last: f64,
    depth: LogNormal<f64>,
    size: LogNormal<f64>,
    trades: Option<Poisson<f64>>,
}

impl StockSim<'_> {
    fn lots(&mut self, d: LogNormal<f64>) -> f64 {
        let v: f64 = d.sample(&mut self.rng);
        (v / self.cfg.lot).round().max(1.0) * self.cfg.lot
    }

    fn snapshot(&mut self, stock_id: &str, ts: NaiveDateTime) -> Level2Snapshot {
        let mid = self.log_mid.exp();
        let half = 0.5 * self.cfg.spread * mid;
        let (bid, ask) = (mid - half, mid + half);
        let bid_volume = self.lots(self.depth);
        let ask_volume = self.lots(self.depth);
        let count = match &self.trades {
            Some(p) => p.sample(&mut self.rng) as u64,
            None => 0,
        };
        let (mut volume, mut side) = (0.0, Side::Unknown);
        if count > 0 {
            let buy = self.rng.random::<f64>() < self.cfg.buy_probability;
            for _ in 0..count {
                volume += self.lots(self.size);
            }
            self.last = if buy { ask } else { bid };
            side = if buy { Side::Buy } else { Side::Sell };
        }
        Level2Snapshot {
            stock_id: stock_id.to_string(),
            timestamp: ts,
            last_price: self.last,
            trades: count,
            volume,
            bid_prices: vec![bid],
            ask_prices: vec![ask],
            bid_volumes: vec![bid_volume],
            ask_volumes: vec![ask_volume],
            aggressor: if self.cfg.emit_aggressor { side } else { Side::Unknown },
        }
    }

    /// Snapshots of one day; the first sits at the session open.
    fn day(
        &mut self,
        stock_id: &str,
        t: usize,
        date: NaiveDate,
        truth: &mut GroundTruth,
        diffusion: &mut Vec<f64>,
        jump_part: &mut Vec<f64>,
    ) -> Vec<Level2Snapshot> {
        let cal = &self.cfg.calendar;
        let n = cal.intervals_per_day();
        let spi = self.cfg.snapshots_per_interval;
        let count = if self.cfg.jump_intensity > 0.0 {
            let p = Poisson::new(self.cfg.jump_intensity).expect("positive intensity");
            (p.sample(&mut self.rng) as usize).min(n)
        } else {
            0
        };
        let mut jump_at = vec![None; n];
        let mut chosen = sample(&mut self.rng, n, count).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let up = self.rng.random::<f64>() < self.cfg.jump_up_probability;
            let q = self.rng.random_range(1..=spi);
            let size = self.cfg.jump_multiple * self.cfg.sigma * self.profile[i] * if up { 1.0 } else { -1.0 };
            jump_at[i] = Some((q, size));
            truth.jumps.push(PlantedJump {
                stock_id: stock_id.to_string(),
                date,
                day: t,
                interval: i,
                direction: if up { Direction::Up } else { Direction::Down },
                size,
            });
        }
        let z = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(n * spi + 1);
        let (open, _) = cal.interval_bounds(0).expect("calendar has intervals");
        if t == 0 {
            self.last = self.log_mid.exp();
        }
        out.push(self.snapshot(stock_id, date.and_time(open)));
        let step = i64::from(cal.interval_secs()) * 1_000_000_000 / spi as i64;
        for i in 0..n {
            let (start, _) = cal.interval_bounds(i).expect("interval in range");
            let scale = self.cfg.sigma * self.profile[i] / (spi as f64).sqrt();
            let mut diff = 0.0;
            let mut jmp = 0.0;
            for q in 1..=spi {
                let dz = scale * z.sample(&mut self.rng);
                diff += dz;
                self.log_mid += dz;
                if let Some((jq, size)) = jump_at[i] {
                    if jq == q {
                        self.log_mid += size;
                        jmp += size;
                    }
                }
                let ts = date.and_time(start) + chrono::Duration::nanoseconds(step * q as i64);
                out.push(self.snapshot(stock_id, ts));
            }
            diffusion.push(diff);
            jump_part.push(jmp);
        }
        out
    }
}

fn simulate_stock<F>(config: &SimConfig, profile: &[f64], s: usize, mut sink: F) -> Result<GroundTruth>
where
    F: FnMut(usize, Vec<Level2Snapshot>) -> Result<()>,
{
    let stock_id = SimConfig::stock_id(s);
    let mut sim = StockSim {
        cfg: config,
        profile,
        rng: stream(config.seed, "sim-stock", s as u64),
        log_mid: config.initial_price.ln(),
        last: config.initial_price,
        depth: LogNormal::new(config.depth_median.ln(), config.depth_log_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        size: LogNormal::new(config.trade_size_median.ln(), 0.8).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        trades: (config.trade_rate > 0.0).then(|| Poisson::new(config.trade_rate).expect("positive rate")),
    };
    let mut truth = GroundTruth::default();
    let mut diffusion = Vec::with_capacity(config.days * profile.len());
    let mut jump = Vec::with_capacity(config.days * profile.len());
    for (t, date) in config.dates().into_iter().enumerate() {
        let snaps = sim.day(&stock_id, t, date, &mut truth, &mut diffusion, &mut jump);
        sink(t, snaps)?;
    }
    truth.returns.push(TrueReturns { stock_id, diffusion, jump });
    Ok(truth)
}

/// Full snapshot streams of every stock, concatenated stock by stock.
pub fn simulate(config: &SimConfig) -> Result<(Vec<Level2Snapshot>, GroundTruth)> {
    config.validate()?;
    let profile = config.profile();
    let parts = par::map_range(config.stocks, |s| {
        let mut snaps = Vec::new();
        let truth = simulate_stock(config, &profile, s, |_, day| {
            snaps.extend(day);
            Ok(())
        })?;
        Ok::<_, Error>((snaps, truth))
    });
    let mut all = Vec::new();
    let mut truths = Vec::new();
    for p in parts {
        let (s, t): (Vec<Level2Snapshot>, GroundTruth) = p?;
        all.extend(s);
        truths.push(t);
    }
    Ok((all, GroundTruth::merge(truths)))
}

/// Interval bars of every stock, aggregated day by day from the same
/// snapshot streams [`simulate`] emits.
pub fn simulate_series(config: &SimConfig) -> Result<(Vec<StockSeries>, GroundTruth)> {
    config.validate()?;
    let profile = config.profile();
    let parts = par::map_range(config.stocks, |s| {
        let stock_id = SimConfig::stock_id(s);
        let mut days: Vec<TradingDay> = Vec::with_capacity(config.days);
        let truth = simulate_stock(config, &profile, s, |_, snaps| {
            let agg = aggregate_intervals(&stock_id, &snaps, &config.calendar)?;
            days.extend(agg.series.days);
            Ok(())
        })?;
        let series = StockSeries { stock_id, intervals_per_day: config.calendar.intervals_per_day(), days };
        Ok::<_, Error>((series, truth))
    });
    let mut series = Vec::new();
    let mut truths = Vec::new();
    for p in parts {
        let (s, t): (StockSeries, GroundTruth) = p?;
        series.push(s);
        truths.push(t);
    }
    Ok((series, GroundTruth::merge(truths)))
}

/// Labelling rule for [`plant_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SignalRule {
    /// Up when the attribute is positive, down when negative, none at zero.
    Sign { attribute: usize },
    /// Down below `lower`, up above `upper`, none in between.
    Band { attribute: usize, lower: f64, upper: f64 },
    /// Up when exactly one of the two attributes is positive, none otherwise.
    Xor { a: usize, b: usize },
}

impl SignalRule {
    fn attributes(&self) -> Vec<usize> {
        match *self {
            SignalRule::Sign { attribute } | SignalRule::Band { attribute, .. } => vec![attribute],
            SignalRule::Xor { a, b } => vec![a, b],
        }
    }

    pub fn label(&self, row: &[f64]) -> Label {
        match *self {
            SignalRule::Sign { attribute } => {
                let v = row[attribute];
                if v > 0.0 {
                    Label::Up
                } else if v < 0.0 {
                    Label::Down
                } else {
                    Label::None
                }
            }
            SignalRule::Band { attribute, lower, upper } => {
                let v = row[attribute];
                if v > upper {
                    Label::Up
                } else if v < lower {
                    Label::Down
                } else {
                    Label::None
                }
            }
            SignalRule::Xor { a, b } => {
                if (row[a] > 0.0) != (row[b] > 0.0) {
                    Label::Up
                } else {
                    Label::None
                }
            }
        }
    }
}

/// Band rule whose tails hold `tail` of the rows each.
pub fn band_from_quantiles(table: &InstanceTable, attribute: usize, tail: f64) -> Result<SignalRule> {
    if attribute >= table.dim() || table.is_empty() {
        return Err(Error::InvalidConfig(format!("attribute {attribute} out of range or empty table")));
    }
    let idx: Vec<usize> = (0..table.len()).collect();
    let mut v = table.column(attribute, &idx);
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    Ok(SignalRule::Band { attribute, lower: q(tail), upper: q(1.0 - tail) })
}

/// Replaces every label by `rule`, then flips a `noise` fraction: a jump
/// becomes no jump and a no-jump becomes an up or down jump at random.
pub fn plant_signal(table: &mut InstanceTable, rule: &SignalRule, noise: f64, seed: u64) -> Result<()> {
    if let Some(&a) = rule.attributes().iter().find(|&&a| a >= table.dim()) {
        return Err(Error::InvalidConfig(format!("signal attribute {a} out of range for {} attributes", table.dim())));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidConfig(format!("label noise {noise} outside [0, 1]")));
    }
    let mut rng = stream(seed, "plant-signal", 0);
    for k in 0..table.len() {
        let mut label = rule.label(table.row(k));
        if noise > 0.0 && rng.random::<f64>() < noise {
            label = match label {
                Label::None => {
                    if rng.random::<bool>() {
                        Label::Up
                    } else {
                        Label::Down
                    }
                }
                _ => Label::None,
            };
        }
        table.set_label(k, label);
    }
    Ok(())
}
