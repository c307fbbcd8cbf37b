//! Pipeline stages, their configuration subsets and artifacts.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::NaiveDate;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use jumplab::dataset::{
    ClassCounts, DateSplit, FilterConfig, FilterReport, InstanceTable, LimitRule, Problem, ReplicateConfig,
    ReplicateSet, Scope, read_events, read_instances, write_instances,
};
use jumplab::features::{FeatureConfig, compute_all, read_features, write_features};
use jumplab::jump::{ConstantScale, DetectionConfig, Direction, JumpMark, WsdConfig, detect_all, read_marks, write_marks};
use jumplab::learners::{ConfusionMatrix, EvalReport, GridResult, LearnerKind, Matrix, Metrics, ModelFile};
use jumplab::market_data::{
    SnapshotSchema, StockSeries, TradingCalendar, aggregate_intervals, parse_snapshots, read_bars, write_bars,
    write_snapshots,
};
use jumplab::rng::derive_seed;
use jumplab::selection::{SelectionConfig, SelectionResult};
use jumplab::simulator::{SignalRule, SimConfig, band_from_quantiles, plant_signal, simulate};
use jumplab::workflow::{
    ImportanceSummary, ModelingConfig, assemble, evaluate_scope, importance_scope, prepare, scopes, select_scope,
    train_scope, tune,
};

use crate::config::{PipelineConfig, config_err};
use crate::manifest::{self, Manifest, Output, hash_config, hash_file, read_json, write_atomic, write_json};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Stage {
    Simulate,
    Ingest,
    Detect,
    Featurize,
    Assemble,
    Select,
    Train,
    Evaluate,
    Importance,
    Report,
}

pub const ORDER: [Stage; 10] = [
    Stage::Simulate,
    Stage::Ingest,
    Stage::Detect,
    Stage::Featurize,
    Stage::Assemble,
    Stage::Select,
    Stage::Train,
    Stage::Evaluate,
    Stage::Importance,
    Stage::Report,
];

pub const SNAPSHOTS: &str = "snapshots.csv";
pub const TRUTH: &str = "truth.csv";
pub const BARS: &str = "bars.csv";
pub const INGEST_SUMMARY: &str = "ingest_summary.json";
pub const MARKS: &str = "marks.csv";
pub const DETECT_SUMMARY: &str = "detect_summary.json";
pub const FEATURES: &str = "features.csv";
pub const INSTANCES: &str = "instances.csv";
pub const ASSEMBLE_SUMMARY: &str = "assemble_summary.json";
pub const SELECTION: &str = "selection.json";
pub const EXCESS_MI: &str = "excess_mi.csv";
pub const GRID: &str = "grid.json";
pub const MODELS: &str = "models.json";
pub const EVALUATION: &str = "evaluation.json";
pub const METRICS: &str = "metrics.csv";
pub const IMPORTANCE: &str = "importance.json";
pub const IMPORTANCE_CSV: &str = "importance.csv";

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Detect => "detect",
            Stage::Featurize => "featurize",
            Stage::Assemble => "assemble",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
            Stage::Report => "report",
        }
    }

    /// Configuration keys and sections hashed into this stage's manifest.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Stage::Simulate => &["seed", "io.delimiter", "calendar.", "snapshot.depth", "simulate."],
            Stage::Ingest => &["io.delimiter", "paths.snapshots", "calendar.", "snapshot.depth"],
            Stage::Detect => &["detect."],
            Stage::Featurize => &["features."],
            Stage::Assemble => &["seed", "calendar.", "filters.", "paths.events", "signal."],
            Stage::Select => &["seed", "split.", "replicates.", "selection.", "model.problem", "model.scope"],
            Stage::Train => &["seed", "model.learner", "grid."],
            Stage::Evaluate => &[],
            Stage::Importance => &["seed"],
            Stage::Report => &["report."],
        }
    }

    fn upstream(self, cfg: &PipelineConfig) -> anyhow::Result<Vec<Stage>> {
        Ok(match self {
            Stage::Simulate => vec![],
            Stage::Ingest if simulated(cfg) => vec![Stage::Simulate],
            Stage::Ingest => vec![],
            Stage::Detect | Stage::Featurize => vec![Stage::Ingest],
            Stage::Assemble => vec![Stage::Ingest, Stage::Detect, Stage::Featurize],
            Stage::Select => vec![Stage::Assemble],
            Stage::Train => vec![Stage::Assemble, Stage::Select],
            Stage::Evaluate | Stage::Importance => vec![Stage::Assemble, Stage::Select, Stage::Train],
            Stage::Report => {
                let mut up = vec![Stage::Detect, Stage::Assemble, Stage::Select, Stage::Train, Stage::Evaluate];
                if learner(cfg)? == LearnerKind::Forest {
                    up.push(Stage::Importance);
                }
                up
            }
        })
    }

    /// Stages `run all` executes for this configuration.
    pub fn pipeline(cfg: &PipelineConfig) -> anyhow::Result<Vec<Stage>> {
        let forest = learner(cfg)? == LearnerKind::Forest;
        Ok(ORDER
            .into_iter()
            .filter(|s| (*s != Stage::Simulate || simulated(cfg)) && (*s != Stage::Importance || forest))
            .collect())
    }
}

/// Snapshots come from the simulate stage unless a path is configured.
fn simulated(cfg: &PipelineConfig) -> bool {
    cfg.raw("paths.snapshots").is_empty()
}

/// Outcome of [`run_stage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ran(Manifest),
    UpToDate(Manifest),
}

pub struct Ctx<'a> {
    pub cfg: &'a PipelineConfig,
    pub work: PathBuf,
    pub delimiter: u8,
    pub seed: u64,
}

impl Ctx<'_> {
    fn file(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }

    fn open(&self, name: &str) -> anyhow::Result<BufReader<File>> {
        let p = self.file(name);
        Ok(BufReader::new(File::open(&p).with_context(|| format!("cannot open {}", p.display()))?))
    }

    fn calendar(&self) -> anyhow::Result<TradingCalendar> {
        Ok(TradingCalendar::parse(self.cfg.raw("calendar.sessions"), self.cfg.get("calendar.interval_secs")?)?)
    }

    fn schema(&self) -> anyhow::Result<SnapshotSchema> {
        Ok(SnapshotSchema { delimiter: self.delimiter, ..SnapshotSchema::with_depth(self.cfg.get("snapshot.depth")?) })
    }

    fn bars(&self) -> anyhow::Result<Vec<StockSeries>> {
        Ok(read_bars(self.open(BARS)?, self.delimiter)?)
    }

    fn marks(&self, series: &[StockSeries]) -> anyhow::Result<Vec<JumpMark>> {
        let days: HashMap<&str, HashMap<NaiveDate, usize>> = series
            .iter()
            .map(|s| (s.stock_id.as_str(), s.days.iter().enumerate().map(|(t, d)| (d.date, t)).collect()))
            .collect();
        let resolve = |id: &str, date: NaiveDate| days.get(id).and_then(|m| m.get(&date).copied());
        Ok(read_marks(self.open(MARKS)?, self.delimiter, &resolve)?)
    }

    fn instances(&self) -> anyhow::Result<InstanceTable> {
        Ok(read_instances(self.open(INSTANCES)?, self.delimiter)?)
    }
}

/// Runs `stage` unless its manifest shows it is already up to date.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, force: bool) -> anyhow::Result<Status> {
    let ctx = Ctx { cfg, work: cfg.work_dir(), delimiter: cfg.delimiter()?, seed: cfg.get("seed")? };
    let mut inputs = BTreeMap::new();
    for up in stage.upstream(cfg)? {
        let m = manifest::load(&ctx.work, up.name())?.ok_or_else(|| {
            anyhow::anyhow!("{} needs the {} stage first: no manifest in {}", stage.name(), up.name(), ctx.work.display())
        })?;
        let current = cfg.subset(up.keys());
        if m.config_hash != hash_config(&current) {
            let diff = manifest::config_diff(&m.config, &current).join("\n");
            return Err(config_err!(
                "refusing to run {}: the {} manifest was built with a different configuration \
                 (config hash {} vs {}); rerun {} first\n{diff}",
                stage.name(),
                up.name(),
                &m.config_hash[..12],
                &hash_config(&current)[..12],
                up.name()
            ));
        }
        let stale = m.stale_outputs(&ctx.work)?;
        if !stale.is_empty() {
            anyhow::bail!("{} outputs changed or missing since their manifest: {}; rerun {}", up.name(), stale.join(", "), up.name());
        }
        for (name, out) in m.outputs {
            inputs.insert(name, out.sha256);
        }
    }
    if stage == Stage::Ingest && !simulated(cfg) {
        let p = cfg.path("paths.snapshots");
        inputs.insert(p.display().to_string(), hash_file(&p)?);
    }
    if stage == Stage::Assemble && !cfg.raw("paths.events").is_empty() {
        let p = cfg.path("paths.events");
        inputs.insert(p.display().to_string(), hash_file(&p)?);
    }
    let config = cfg.subset(stage.keys());
    let config_hash = hash_config(&config);
    if !force {
        if let Some(m) = manifest::load(&ctx.work, stage.name())? {
            if m.config_hash == config_hash && m.inputs == inputs && m.stale_outputs(&ctx.work)?.is_empty() {
                return Ok(Status::UpToDate(m));
            }
        }
    }
    let produced = match stage {
        Stage::Simulate => run_simulate(&ctx)?,
        Stage::Ingest => run_ingest(&ctx)?,
        Stage::Detect => run_detect(&ctx)?,
        Stage::Featurize => run_featurize(&ctx)?,
        Stage::Assemble => run_assemble(&ctx)?,
        Stage::Select => run_select(&ctx)?,
        Stage::Train => run_train(&ctx)?,
        Stage::Evaluate => run_evaluate(&ctx)?,
        Stage::Importance => run_importance(&ctx)?,
        Stage::Report => report::run_report(&ctx)?,
    };
    let mut outputs = BTreeMap::new();
    for (name, rows) in produced {
        let sha256 = hash_file(&ctx.file(&name))?;
        outputs.insert(name, Output { sha256, rows });
    }
    let m = Manifest { stage: stage.name().into(), config_hash, config, seed: ctx.seed, inputs, outputs };
    write_json(&manifest::manifest_path(&ctx.work, stage.name()), &m)?;
    Ok(Status::Ran(m))
}

type Produced = Vec<(String, usize)>;

fn parse_profile(cfg: &PipelineConfig, n: usize) -> anyhow::Result<Option<Vec<f64>>> {
    match cfg.raw("simulate.profile") {
        "u" => Ok(None),
        "flat" => Ok(Some(vec![1.0; n])),
        _ => {
            let p: Vec<f64> = cfg.list("simulate.profile")?;
            if p.len() != n {
                return Err(config_err!("`simulate.profile` has {} entries for {n} intervals", p.len()));
            }
            Ok(Some(p))
        }
    }
}

pub fn sim_config(ctx: &Ctx) -> anyhow::Result<SimConfig> {
    let c = ctx.cfg;
    let calendar = ctx.calendar()?;
    let cfg = SimConfig {
        stocks: c.get("simulate.stocks")?,
        days: c.get("simulate.days")?,
        start: c.date("simulate.start")?,
        profile: parse_profile(c, calendar.intervals_per_day())?,
        calendar,
        snapshots_per_interval: c.get("simulate.snapshots_per_interval")?,
        sigma: c.get("simulate.sigma")?,
        jump_intensity: c.get("simulate.jump_intensity")?,
        jump_multiple: c.get("simulate.jump_multiple")?,
        jump_up_probability: c.get("simulate.jump_up_probability")?,
        spread: c.get("simulate.spread")?,
        depth_median: c.get("simulate.depth_median")?,
        depth_log_sd: c.get("simulate.depth_log_sd")?,
        lot: c.get("simulate.lot")?,
        trade_rate: c.get("simulate.trade_rate")?,
        buy_probability: c.get("simulate.buy_probability")?,
        trade_size_median: c.get("simulate.trade_size_median")?,
        initial_price: c.get("simulate.initial_price")?,
        emit_aggressor: c.flag("simulate.emit_aggressor")?,
        seed: derive_seed(ctx.seed, "simulate", 0),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_simulate(ctx: &Ctx) -> anyhow::Result<Produced> {
    let cfg = sim_config(ctx)?;
    let (snaps, truth) = simulate(&cfg)?;
    let schema = ctx.schema()?;
    write_atomic(&ctx.file(SNAPSHOTS), |w| Ok(write_snapshots(w, &schema, &snaps)?))?;
    write_atomic(&ctx.file(TRUTH), |w| Ok(truth.write(w)?))?;
    log::info!("simulated {} snapshots with {} planted jumps", snaps.len(), truth.jumps.len());
    Ok(vec![(SNAPSHOTS.into(), snaps.len()), (TRUTH.into(), truth.jumps.len())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub rejected: usize,
    /// Line numbers of the first rejected rows.
    pub rejected_lines: Vec<u64>,
    pub out_of_session: usize,
    pub stocks: usize,
    pub days: usize,
}

fn run_ingest(ctx: &Ctx) -> anyhow::Result<Produced> {
    let path = if simulated(ctx.cfg) { ctx.file(SNAPSHOTS) } else { ctx.cfg.path("paths.snapshots") };
    let file = File::open(&path).with_context(|| format!("cannot open snapshots {}", path.display()))?;
    let parsed = parse_snapshots(BufReader::new(file), &ctx.schema()?)?;
    let calendar = ctx.calendar()?;
    let mut series = Vec::with_capacity(parsed.streams.len());
    let mut dropped = 0;
    for (id, stream) in &parsed.streams {
        let agg = aggregate_intervals(id, stream, &calendar)?;
        dropped += agg.dropped;
        series.push(agg.series);
    }
    if series.is_empty() {
        anyhow::bail!("no valid snapshot rows in {}", path.display());
    }
    write_atomic(&ctx.file(BARS), |w| Ok(write_bars(w, ctx.delimiter, &series)?))?;
    let summary = IngestSummary {
        records: parsed.total(),
        rejected: parsed.rejected.len(),
        rejected_lines: parsed.rejected.iter().take(100).map(|r| r.line).collect(),
        out_of_session: dropped,
        stocks: series.len(),
        days: series.iter().map(|s| s.days.len()).sum(),
    };
    write_json(&ctx.file(INGEST_SUMMARY), &summary)?;
    let bars = series.iter().map(|s| s.days.len() * s.intervals_per_day).sum();
    Ok(vec![(BARS.into(), bars), (INGEST_SUMMARY.into(), 1)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMatch {
    pub planted: usize,
    pub recovered: usize,
    pub recall: f64,
    pub direction_mismatches: usize,
    /// Marks at no planted jump.
    pub spurious: usize,
    /// Spurious marks per tested interval.
    pub spurious_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub alpha: f64,
    pub stocks: usize,
    /// Intervals with a finite statistic.
    pub tested: usize,
    pub marks: usize,
    pub up: usize,
    pub down: usize,
    /// Intervals with zero volatility and a nonzero return.
    pub infinite: usize,
    /// Fraction of stocks with at least one mark.
    pub stocks_with_marks: f64,
    /// Up and down marks per interval of the day.
    pub per_interval: Vec<(usize, usize)>,
    pub truth: Option<TruthMatch>,
}

/// Planted jumps from `truth.csv` as (stock, date, 0-based interval, sign).
fn read_truth(path: &Path) -> anyhow::Result<Vec<(String, NaiveDate, usize, i8)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || anyhow::anyhow!("malformed ground-truth row {:?}", rec);
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad())?;
        let interval = rec[2].parse::<usize>().ok().and_then(|i| i.checked_sub(1)).ok_or_else(bad)?;
        out.push((rec[0].to_string(), date, interval, rec[3].parse().map_err(|_| bad())?));
    }
    Ok(out)
}

fn run_detect(ctx: &Ctx) -> anyhow::Result<Produced> {
    let c = ctx.cfg;
    let series = ctx.bars()?;
    let config = DetectionConfig {
        lookback: c.get("detect.lookback")?,
        alpha: c.get("detect.alpha")?,
        scale: match c.raw("detect.scale") {
            "standardized" => ConstantScale::Standardized,
            "bipower" => ConstantScale::Bipower,
            v => return Err(config_err!("`detect.scale`: expected standardized or bipower, got {v:?}")),
        },
        wsd: WsdConfig { epsilon: c.get("detect.wsd_epsilon")?, by_weekday: c.flag("detect.wsd_by_weekday")? },
    };
    let detections = detect_all(&series, &config)?;
    let marks: Vec<JumpMark> = detections.iter().flat_map(|d| d.marks.iter().cloned()).collect();
    write_atomic(&ctx.file(MARKS), |w| Ok(write_marks(w, ctx.delimiter, &marks)?))?;

    let n = series.first().map_or(0, |s| s.intervals_per_day);
    let mut per_interval = vec![(0, 0); n];
    for m in &marks {
        match m.direction {
            Direction::Up => per_interval[m.interval].0 += 1,
            Direction::Down => per_interval[m.interval].1 += 1,
        }
    }
    let tested: usize = detections
        .iter()
        .map(|d| {
            (0..d.statistics.days())
                .map(|t| (0..d.statistics.intervals()).filter(|&i| d.statistics.get(t, i).value().is_some()).count())
                .sum::<usize>()
        })
        .sum();
    let truth = if simulated(c) {
        let planted = read_truth(&ctx.file(TRUTH))?;
        let mut recovered = 0;
        let mut mismatched = 0;
        let mut matched = std::collections::HashSet::new();
        for (id, date, i, sign) in &planted {
            if let Some(k) = marks.iter().position(|m| &m.stock_id == id && m.date == *date && m.interval == *i) {
                recovered += 1;
                matched.insert(k);
                if marks[k].direction.sign() != *sign {
                    mismatched += 1;
                }
            }
        }
        let spurious = marks.len() - matched.len();
        Some(TruthMatch {
            planted: planted.len(),
            recovered,
            recall: if planted.is_empty() { 1.0 } else { recovered as f64 / planted.len() as f64 },
            direction_mismatches: mismatched,
            spurious,
            spurious_rate: spurious as f64 / tested.max(1) as f64,
        })
    } else {
        None
    };
    let summary = DetectSummary {
        alpha: config.alpha,
        stocks: series.len(),
        tested,
        marks: marks.len(),
        up: per_interval.iter().map(|p| p.0).sum(),
        down: per_interval.iter().map(|p| p.1).sum(),
        infinite: detections.iter().map(|d| d.flagged_infinite()).sum(),
        stocks_with_marks: detections.iter().filter(|d| !d.marks.is_empty()).count() as f64 / series.len().max(1) as f64,
        per_interval,
        truth,
    };
    write_json(&ctx.file(DETECT_SUMMARY), &summary)?;
    Ok(vec![(MARKS.into(), marks.len()), (DETECT_SUMMARY.into(), 1)])
}

fn run_featurize(ctx: &Ctx) -> anyhow::Result<Produced> {
    let c = ctx.cfg;
    let series = ctx.bars()?;
    let config = FeatureConfig {
        lags: c.list("features.lags")?,
        window: c.get("features.window")?,
        session_reset: c.flag("features.session_reset")?,
    };
    if config.lags.is_empty() || config.lags.contains(&0) {
        return Err(config_err!("`features.lags` must list positive lags"));
    }
    let features = compute_all(&series, &config)?;
    write_atomic(&ctx.file(FEATURES), |w| Ok(write_features(w, ctx.delimiter, &features)?))?;
    Ok(vec![(FEATURES.into(), features.iter().map(|f| f.days() * f.n).sum())])
}

fn filter_config(ctx: &Ctx) -> anyhow::Result<FilterConfig> {
    let c = ctx.cfg;
    let limit = if c.flag("filters.limit")? {
        Some(LimitRule { fraction: c.get("filters.limit_fraction")?, tick: c.get("filters.tick")? })
    } else {
        None
    };
    let mut halts = Vec::new();
    for part in c.raw("filters.halts").split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parse = |s: &str| NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d");
        let range = part.split_once(':').and_then(|(a, b)| Some((parse(a).ok()?, parse(b).ok()?)));
        match range {
            Some((a, b)) if a <= b => halts.push((a, b)),
            _ => return Err(config_err!("`filters.halts`: expected FROM:TO date ranges, got {part:?}")),
        }
    }
    let events = if c.raw("paths.events").is_empty() {
        None
    } else {
        let p = c.path("paths.events");
        let f = File::open(&p).with_context(|| format!("cannot open event calendar {}", p.display()))?;
        Some(read_events(BufReader::new(f), ctx.delimiter)?)
    };
    Ok(FilterConfig {
        limit,
        halts,
        post_event_window: c.opt("filters.post_event_window")?,
        events,
        warm_up_days: c.get("filters.warm_up_days")?,
    })
}

/// `none`, `sign:A`, `band:A:TAIL` or `xor:A:B` with 1-based attributes.
fn parse_signal(rule: &str, table: &InstanceTable) -> anyhow::Result<Option<SignalRule>> {
    let parts: Vec<&str> = rule.split(':').map(str::trim).collect();
    let attr = |s: &str| -> anyhow::Result<usize> {
        let a: usize = s.parse().map_err(|_| config_err!("`signal.rule`: bad attribute {s:?}"))?;
        a.checked_sub(1).ok_or_else(|| config_err!("`signal.rule`: attributes are 1-based"))
    };
    let rule = match parts.as_slice() {
        ["none"] => return Ok(None),
        ["sign", a] => SignalRule::Sign { attribute: attr(a)? },
        ["xor", a, b] => SignalRule::Xor { a: attr(a)?, b: attr(b)? },
        ["band", a, tail] => {
            let tail: f64 = tail.parse().map_err(|_| config_err!("`signal.rule`: bad tail {tail:?}"))?;
            if !(0.0..0.5).contains(&tail) {
                return Err(config_err!("`signal.rule`: tail must lie in [0, 0.5)"));
            }
            band_from_quantiles(table, attr(a)?, tail)?
        }
        _ => return Err(config_err!("`signal.rule`: expected none, sign:A, band:A:TAIL or xor:A:B, got {rule:?}")),
    };
    Ok(Some(rule))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleSummary {
    pub instances: usize,
    pub incomplete: usize,
    pub filters: FilterReport,
    pub none: usize,
    pub up: usize,
    pub down: usize,
    pub signal: Option<SignalRule>,
}

fn run_assemble(ctx: &Ctx) -> anyhow::Result<Produced> {
    let series = ctx.bars()?;
    let features = read_features(ctx.open(FEATURES)?, ctx.delimiter)?;
    let marks = ctx.marks(&series)?;
    let filters = filter_config(ctx)?;
    let mut out = assemble(&series, &features, &marks, &ctx.calendar()?, &filters)?;
    let signal = parse_signal(ctx.cfg.raw("signal.rule"), &out.table)?;
    if let Some(rule) = &signal {
        plant_signal(&mut out.table, rule, ctx.cfg.get("signal.noise")?, derive_seed(ctx.seed, "signal", 0))?;
    }
    write_atomic(&ctx.file(INSTANCES), |w| Ok(write_instances(w, ctx.delimiter, &out.table)?))?;
    let (none, up, down) = out.table.counts();
    let summary = AssembleSummary {
        instances: out.table.len(),
        incomplete: out.incomplete,
        filters: out.filters,
        none,
        up,
        down,
        signal,
    };
    write_json(&ctx.file(ASSEMBLE_SUMMARY), &summary)?;
    Ok(vec![(INSTANCES.into(), out.table.len()), (ASSEMBLE_SUMMARY.into(), 1)])
}

pub fn learner(cfg: &PipelineConfig) -> anyhow::Result<LearnerKind> {
    match cfg.raw("model.learner") {
        "forest" | "rf" => Ok(LearnerKind::Forest),
        "knn" => Ok(LearnerKind::Knn),
        v => Err(config_err!("`model.learner`: expected forest or knn, got {v:?}")),
    }
}

fn problem(cfg: &PipelineConfig) -> anyhow::Result<Problem> {
    match cfg.raw("model.problem") {
        "binary" => Ok(Problem::Binary),
        "trinary" => Ok(Problem::Trinary),
        v => Err(config_err!("`model.problem`: expected binary or trinary, got {v:?}")),
    }
}

pub fn modeling_config(cfg: &PipelineConfig, seed: u64) -> anyhow::Result<ModelingConfig> {
    let kind = learner(cfg)?;
    let params: Vec<usize> = cfg.list(match kind {
        LearnerKind::Forest => "grid.forest",
        LearnerKind::Knn => "grid.knn",
    })?;
    let count_step: usize = cfg.get("grid.count_step")?;
    if params.is_empty() || params.contains(&0) || count_step == 0 {
        return Err(config_err!("learner grids and `grid.count_step` must be positive"));
    }
    Ok(ModelingConfig {
        problem: problem(cfg)?,
        learner: kind,
        params,
        count_step,
        replicates: ReplicateConfig { count: cfg.get("replicates.count")?, smote_k: cfg.get("replicates.smote_k")?, seed: 0 },
        selection: SelectionConfig {
            bins: cfg.get("selection.bins")?,
            trials: cfg.get("selection.trials")?,
            seed: derive_seed(seed, "selection", 0),
            max_features: cfg.opt("selection.max_features")?,
        },
        interval_bins: cfg.get("selection.interval_bins")?,
        grid_replicates: cfg.opt("grid.replicates")?,
        seed: derive_seed(seed, "modeling", 0),
    })
}

fn date_split(cfg: &PipelineConfig, table: &InstanceTable) -> anyhow::Result<DateSplit> {
    let dates: Vec<NaiveDate> = table.keys.iter().map(|k| k.date).collect();
    if let Some(f) = cfg.opt::<f64>("split.fraction")? {
        if !(0.0 < f && f < 1.0) {
            return Err(config_err!("`split.fraction` must lie in (0, 1)"));
        }
        return Ok(DateSplit::by_fraction(&dates, f)?);
    }
    let end = cfg.date("split.train_end")?;
    let (Some(&first), Some(&last)) = (dates.iter().min(), dates.iter().max()) else {
        anyhow::bail!("instance table is empty");
    };
    let after = dates.iter().filter(|&&d| d > end).min().copied();
    match after {
        Some(test_start) if first <= end => Ok(DateSplit { train: (first, end), test: (test_start, last) }),
        _ => anyhow::bail!("instances span {first} to {last}; split.train_end {end} leaves an empty train or test period"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub split: DateSplit,
    pub skipped: Vec<Scope>,
    pub scopes: Vec<(ReplicateSet, Vec<SelectionResult>)>,
}

fn scope_list(cfg: &PipelineConfig, ctx: &Ctx) -> anyhow::Result<Vec<Scope>> {
    Ok(scopes(cfg.raw("model.scope"), ctx.calendar()?.intervals_per_day())
        .map_err(|_| config_err!("`model.scope`: expected comp, ind or both, got {:?}", cfg.raw("model.scope")))?)
}

fn run_select(ctx: &Ctx) -> anyhow::Result<Produced> {
    let table = ctx.instances()?;
    let split = date_split(ctx.cfg, &table)?;
    let mc = modeling_config(ctx.cfg, ctx.seed)?;
    let (sets, skipped) = prepare(&table, &split, &scope_list(ctx.cfg, ctx)?, &mc)?;
    if sets.is_empty() {
        anyhow::bail!("every requested scope lacks jumps in the training or test period");
    }
    let mut scopes = Vec::with_capacity(sets.len());
    for set in sets {
        log::info!("selecting attributes for scope {}", set.scope);
        let sel = select_scope(&table, &set, &mc.selection_for(set.scope))?;
        scopes.push((set, sel));
    }
    let artifact = SelectionArtifact { split, skipped, scopes };
    write_json(&ctx.file(SELECTION), &artifact)?;
    let rows = write_excess(ctx, &table.names, &artifact)?;
    Ok(vec![(SELECTION.into(), artifact.scopes.len()), (EXCESS_MI.into(), rows)])
}

/// Mean raw MI, baseline and excess per scope and attribute.
fn write_excess(ctx: &Ctx, names: &[String], art: &SelectionArtifact) -> anyhow::Result<usize> {
    let mut rows = 0;
    write_atomic(&ctx.file(EXCESS_MI), |w| {
        let mut out = csv::WriterBuilder::new().delimiter(ctx.delimiter).from_writer(w);
        out.write_record(["scope", "attribute", "name", "raw_mi", "baseline", "excess", "screened_out", "mean_rank"])?;
        for (set, sel) in &art.scopes {
            let r = sel.len().max(1) as f64;
            for (a, name) in names.iter().enumerate() {
                let raw = sel.iter().map(|s| s.raw_mi[a]).sum::<f64>() / r;
                let base = sel.iter().map(|s| s.baseline[a]).sum::<f64>() / r;
                let out_rate = sel.iter().filter(|s| s.screened_out.contains(&a)).count() as f64 / r;
                let ranks: Vec<usize> = sel.iter().filter_map(|s| s.rank_of(a)).collect();
                let mean_rank = if ranks.is_empty() {
                    String::new()
                } else {
                    (ranks.iter().map(|k| k + 1).sum::<usize>() as f64 / ranks.len() as f64).to_string()
                };
                out.write_record([
                    set.scope.to_string(),
                    (a + 1).to_string(),
                    name.clone(),
                    raw.to_string(),
                    base.to_string(),
                    (raw - base).to_string(),
                    out_rate.to_string(),
                    mean_rank,
                ])?;
                rows += 1;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridArtifact {
    pub comprehensive: Option<GridResult>,
    pub interval: Option<GridResult>,
}

fn run_train(ctx: &Ctx) -> anyhow::Result<Produced> {
    let table = ctx.instances()?;
    let art: SelectionArtifact = read_json(&ctx.file(SELECTION))?;
    let mc = modeling_config(ctx.cfg, ctx.seed)?;
    let (comp, ind): (Vec<_>, Vec<_>) = art.scopes.into_iter().partition(|(s, _)| s.scope == Scope::Comprehensive);
    let grid = GridArtifact {
        comprehensive: if comp.is_empty() { None } else { Some(tune(&table, &comp, &mc)?) },
        interval: if ind.is_empty() { None } else { Some(tune(&table, &ind, &mc)?) },
    };
    let mut models = Vec::new();
    for ((set, sel), g) in comp
        .iter()
        .map(|p| (p, &grid.comprehensive))
        .chain(ind.iter().map(|p| (p, &grid.interval)))
    {
        let best = g.as_ref().expect("grid exists for a non-empty group").best;
        log::info!("training scope {} with param {} on {} attributes", set.scope, best.param, best.count);
        models.push(train_scope(&table, set, sel, mc.learner, best.param, best.count, mc.seed)?);
    }
    write_json(&ctx.file(GRID), &grid)?;
    write_json(&ctx.file(MODELS), &models)?;
    Ok(vec![(GRID.into(), 1), (MODELS.into(), models.len())])
}

fn model_pairs<'a>(
    art: &'a SelectionArtifact,
    models: &'a [ModelFile],
) -> anyhow::Result<Vec<(&'a ReplicateSet, &'a ModelFile)>> {
    models
        .iter()
        .map(|m| {
            art.scopes
                .iter()
                .find(|(s, _)| s.scope == m.scope && s.problem == m.problem)
                .map(|(s, _)| (s, m))
                .ok_or_else(|| anyhow::anyhow!("models for scope {} have no replicate set", m.scope))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeEvaluation {
    pub scope: Scope,
    pub problem: Problem,
    pub learner: String,
    pub param: usize,
    pub attributes: usize,
    pub train_counts: ClassCounts,
    pub test_counts: ClassCounts,
    pub report: EvalReport,
    pub matrices: Vec<ConfusionMatrix>,
    /// Metrics per stock over the predictions of all replicates.
    pub per_stock: Vec<(String, Metrics)>,
}

fn per_stock(table: &InstanceTable, set: &ReplicateSet, models: &ModelFile) -> anyhow::Result<Vec<(String, Metrics)>> {
    let mut by_stock: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (j, idx) in set.test.iter().enumerate() {
        let mut x = Vec::with_capacity(idx.len() * table.dim());
        for &k in idx {
            x.extend_from_slice(table.row(k));
        }
        let m = Matrix::new(idx.len(), table.dim(), x)?.select_columns(&models.features[j]);
        let pred = models.models[j].predict_all(&m);
        for (r, &k) in idx.iter().enumerate() {
            let e = by_stock.entry(table.keys[k].stock_id.as_str()).or_default();
            e.0.push(set.problem.class_of(table.labels[k]));
            e.1.push(pred[r]);
        }
    }
    Ok(by_stock
        .into_iter()
        .map(|(id, (a, p))| (id.to_string(), ConfusionMatrix::from_predictions(set.problem, &a, &p).metrics()))
        .collect())
}

fn run_evaluate(ctx: &Ctx) -> anyhow::Result<Produced> {
    let table = ctx.instances()?;
    let art: SelectionArtifact = read_json(&ctx.file(SELECTION))?;
    let models: Vec<ModelFile> = read_json(&ctx.file(MODELS))?;
    let mut evals = Vec::new();
    for (set, m) in model_pairs(&art, &models)? {
        let matrices = evaluate_scope(&table, set, m)?;
        evals.push(ScopeEvaluation {
            scope: set.scope,
            problem: set.problem,
            learner: m.learner.kind.name().into(),
            param: m.learner.param,
            attributes: m.features.first().map_or(0, Vec::len),
            train_counts: set.train_counts,
            test_counts: set.test_counts,
            report: EvalReport::from_matrices(set.problem, &matrices),
            per_stock: per_stock(&table, set, m)?,
            matrices,
        });
    }
    write_json(&ctx.file(EVALUATION), &evals)?;
    let mut rows = 0;
    write_atomic(&ctx.file(METRICS), |w| {
        let mut out = csv::WriterBuilder::new().delimiter(ctx.delimiter).from_writer(w);
        out.write_record(["learner", "scope", "problem", "metric", "mean", "sd", "replicates"])?;
        for e in &evals {
            for (name, mean, sd) in &e.report.metrics {
                out.write_record([
                    e.learner.clone(),
                    e.scope.to_string(),
                    e.problem.to_string(),
                    name.clone(),
                    mean.to_string(),
                    sd.to_string(),
                    e.report.replicates.to_string(),
                ])?;
                rows += 1;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(vec![(EVALUATION.into(), evals.len()), (METRICS.into(), rows)])
}

fn run_importance(ctx: &Ctx) -> anyhow::Result<Produced> {
    if learner(ctx.cfg)? != LearnerKind::Forest {
        return Err(config_err!("the importance stage needs `model.learner = forest`"));
    }
    let table = ctx.instances()?;
    let art: SelectionArtifact = read_json(&ctx.file(SELECTION))?;
    let models: Vec<ModelFile> = read_json(&ctx.file(MODELS))?;
    let seed = derive_seed(ctx.seed, "importance", 0);
    let mut out: Vec<(Scope, ImportanceSummary)> = Vec::new();
    for (set, m) in model_pairs(&art, &models)? {
        out.push((set.scope, importance_scope(&table, set, m, seed)?));
    }
    write_json(&ctx.file(IMPORTANCE), &out)?;
    let mut rows = 0;
    write_atomic(&ctx.file(IMPORTANCE_CSV), |w| {
        let mut csv_out = csv::WriterBuilder::new().delimiter(ctx.delimiter).from_writer(w);
        csv_out.write_record(["scope", "attribute", "name", "mean", "sd", "top3_rate"])?;
        for (scope, s) in &out {
            for a in s.order() {
                csv_out.write_record([
                    scope.to_string(),
                    (a + 1).to_string(),
                    table.names[a].clone(),
                    s.mean[a].to_string(),
                    s.sd[a].to_string(),
                    s.top_k_rate(a, 3).to_string(),
                ])?;
                rows += 1;
            }
        }
        csv_out.flush()?;
        Ok(())
    })?;
    Ok(vec![(IMPORTANCE.into(), out.len()), (IMPORTANCE_CSV.into(), rows)])
}
