//! In-memory orchestration of the pipeline stages.
//!
//! Each function here is one stage boundary used by the command-line tool:
//! bars to features and marks, features to a filtered instance table, and
//! the instance table to tuned, evaluated replicate models.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    Assembly, DateSplit, FilterConfig, FilterReport, InstanceTable, Problem, ReplicateConfig, ReplicateSet, Scope,
    apply_filters, assemble_instances, build_replicates,
};
use crate::features::{FeatureConfig, StockFeatures, compute_all};
use crate::jump::{Detection, DetectionConfig, JumpMark, detect_all};
use crate::learners::{
    ConfusionMatrix, EvalReport, GridConfig, GridResult, GridUnit, LearnerConfig, LearnerKind, Matrix, Model, ModelFile,
    evaluate, grid_search, mean_sd, permutation_importance,
};
use crate::market_data::{StockSeries, TradingCalendar};
use crate::rng::derive_seed;
use crate::selection::{SelectionConfig, SelectionResult, select_features};
use crate::{Error, Result, par};

/// Jump detection and feature computation for every stock.
pub fn featurize(
    series: &[StockSeries],
    detection: &DetectionConfig,
    features: &FeatureConfig,
) -> Result<(Vec<Detection>, Vec<StockFeatures>)> {
    let detections = detect_all(series, detection)?;
    let feats = compute_all(series, features)?;
    Ok((detections, feats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledTable {
    pub table: InstanceTable,
    pub incomplete: usize,
    pub filters: FilterReport,
}

/// Instances of all stocks, filtered.
pub fn assemble(
    series: &[StockSeries],
    features: &[StockFeatures],
    marks: &[JumpMark],
    calendar: &TradingCalendar,
    filters: &FilterConfig,
) -> Result<AssembledTable> {
    let parts: Vec<Assembly> = par::map(features, |f| assemble_instances(f, marks));
    let mut incomplete = 0;
    let mut table: Option<InstanceTable> = None;
    for p in parts {
        incomplete += p.incomplete;
        match &mut table {
            Some(t) => t.extend(p.table)?,
            None => table = Some(p.table),
        }
    }
    let mut table = table.ok_or_else(|| Error::InsufficientData("no stocks to assemble".into()))?;
    let report = apply_filters(&mut table, series, marks, calendar, filters)?;
    Ok(AssembledTable { table, incomplete, filters: report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingConfig {
    pub problem: Problem,
    pub learner: LearnerKind,
    /// Parameter grid for `learner`; its default grid when empty.
    pub params: Vec<usize>,
    pub count_step: usize,
    pub replicates: ReplicateConfig,
    pub selection: SelectionConfig,
    /// Bin count used instead of `selection.bins` for interval scopes.
    pub interval_bins: usize,
    /// Replicates per scope used inside the grid search; all when `None`.
    pub grid_replicates: Option<usize>,
    pub seed: u64,
}

impl Default for ModelingConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Binary,
            learner: LearnerKind::Forest,
            params: Vec::new(),
            count_step: 5,
            replicates: ReplicateConfig::default(),
            selection: SelectionConfig::default(),
            interval_bins: 30,
            grid_replicates: None,
            seed: 0,
        }
    }
}

impl ModelingConfig {
    pub fn grid(&self) -> GridConfig {
        let mut g = GridConfig::for_kind(self.learner, derive_seed(self.seed, "grid", 0));
        if !self.params.is_empty() {
            g.params = self.params.clone();
        }
        g.count_step = self.count_step;
        g
    }

    /// Selection settings for `scope`.
    pub fn selection_for(&self, scope: Scope) -> SelectionConfig {
        match scope {
            Scope::Comprehensive => self.selection,
            Scope::Interval(_) => SelectionConfig { bins: self.interval_bins, ..self.selection },
        }
    }
}

/// Scopes to model: the comprehensive one, every interval, or both.
pub fn scopes(which: &str, intervals: usize) -> Result<Vec<Scope>> {
    let ind = || (0..intervals.saturating_sub(1)).map(Scope::Interval);
    match which {
        "comp" => Ok(vec![Scope::Comprehensive]),
        "ind" => Ok(ind().collect()),
        "both" => Ok(std::iter::once(Scope::Comprehensive).chain(ind()).collect()),
        other => Err(Error::InvalidConfig(format!("unknown scope selection {other:?}"))),
    }
}

/// Replicates of every scope; scopes without jumps on either side are
/// skipped and returned separately.
pub fn prepare(
    table: &InstanceTable,
    split: &DateSplit,
    scopes: &[Scope],
    config: &ModelingConfig,
) -> Result<(Vec<ReplicateSet>, Vec<Scope>)> {
    let (train, test) = split.split(table);
    let mut sets = Vec::new();
    let mut skipped = Vec::new();
    for &scope in scopes {
        let rc = ReplicateConfig { seed: derive_seed(config.seed, "replicates", 0), ..config.replicates };
        match build_replicates(table, &train, &test, config.problem, scope, &rc) {
            Ok(s) => sets.push(s),
            Err(Error::EmptyScope(s)) => {
                log::warn!("scope {s} has no jumps in the training or test period, skipped");
                skipped.push(scope);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((sets, skipped))
}

fn train_data(table: &InstanceTable, set: &ReplicateSet, j: usize) -> Result<(Matrix, Vec<usize>)> {
    let (x, y) = set.train[j].materialize(table, set.problem);
    Ok((Matrix::new(y.len(), table.dim(), x)?, y))
}

fn test_data(table: &InstanceTable, set: &ReplicateSet, j: usize) -> Result<(Matrix, Vec<usize>)> {
    let idx = &set.test[j];
    let mut x = Vec::with_capacity(idx.len() * table.dim());
    let y = idx
        .iter()
        .map(|&k| {
            x.extend_from_slice(table.row(k));
            set.problem.class_of(table.labels[k])
        })
        .collect::<Vec<_>>();
    Ok((Matrix::new(y.len(), table.dim(), x)?, y))
}

/// Screening and mRMR ranking on every training replicate of a scope.
pub fn select_scope(table: &InstanceTable, set: &ReplicateSet, config: &SelectionConfig) -> Result<Vec<SelectionResult>> {
    let tag = format!("selection/{}/{}", set.scope, set.problem);
    (0..set.train.len())
        .map(|j| {
            let (x, y) = set.train[j].materialize(table, set.problem);
            let cfg = SelectionConfig { seed: derive_seed(config.seed, &tag, j as u64), ..*config };
            select_features(&x, table.dim(), &y, &cfg)
        })
        .collect()
}

/// Grid search over the given scopes; all their replicates (or the first
/// `grid_replicates` of each) form the units whose inner F is averaged.
pub fn tune(
    table: &InstanceTable,
    sets: &[(ReplicateSet, Vec<SelectionResult>)],
    config: &ModelingConfig,
) -> Result<GridResult> {
    let mut units = Vec::new();
    for (set, sel) in sets {
        let take = config.grid_replicates.unwrap_or(set.train.len()).min(set.train.len());
        for j in 0..take {
            let (x, y) = train_data(table, set, j)?;
            units.push(GridUnit { x, y, ranked: sel[j].ranked.clone() });
        }
    }
    grid_search(&units, config.learner, config.problem, &config.grid())
}

/// One model per training replicate on its top `count` ranked attributes.
pub fn train_scope(
    table: &InstanceTable,
    set: &ReplicateSet,
    selections: &[SelectionResult],
    learner: LearnerKind,
    param: usize,
    count: usize,
    seed: u64,
) -> Result<ModelFile> {
    let tag = format!("model/{}/{}", set.scope, set.problem);
    let built: Vec<Result<(Vec<usize>, Model)>> = par::map_range(set.train.len(), |j| {
        let feats: Vec<usize> = selections[j].ranked.iter().copied().take(count).collect();
        if feats.is_empty() {
            return Err(Error::Degenerate(format!("replicate {j} of {} has no surviving attributes", set.scope)));
        }
        let (x, y) = train_data(table, set, j)?;
        let cfg = LearnerConfig { kind: learner, param, seed: derive_seed(seed, &tag, j as u64) };
        let model = Model::train(&x.select_columns(&feats), &y, set.problem.classes(), &cfg)?;
        Ok((feats, model))
    });
    let mut features = Vec::with_capacity(built.len());
    let mut models = Vec::with_capacity(built.len());
    for b in built {
        let (f, m) = b?;
        features.push(f);
        models.push(m);
    }
    let learner = LearnerConfig { kind: learner, param, seed };
    Ok(ModelFile::new(set.problem, set.scope, learner, features, models))
}

/// Confusion matrix of every replicate model on its paired test replicate.
pub fn evaluate_scope(table: &InstanceTable, set: &ReplicateSet, models: &ModelFile) -> Result<Vec<ConfusionMatrix>> {
    if models.models.len() != set.test.len() {
        return Err(Error::InconsistentData(format!(
            "{} models for {} test replicates",
            models.models.len(),
            set.test.len()
        )));
    }
    par::map_range(set.test.len(), |j| {
        let (x, y) = test_data(table, set, j)?;
        Ok(evaluate(&models.models[j], &x.select_columns(&models.features[j]), &y, set.problem))
    })
    .into_iter()
    .collect()
}

/// Permutation importance over replicates, mapped back to attribute indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    /// Score of every attribute in every replicate; zero when not selected.
    pub per_replicate: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Attribute indices whose score was set to zero for lack of spread.
    pub flagged: Vec<Vec<usize>>,
}

impl ImportanceSummary {
    /// Fraction of replicates in which `attribute` ranks within the top `k`.
    pub fn top_k_rate(&self, attribute: usize, k: usize) -> f64 {
        let hits = self
            .per_replicate
            .iter()
            .filter(|s| {
                let above = s.iter().enumerate().filter(|&(j, v)| *v > s[attribute] || (*v == s[attribute] && j < attribute)).count();
                above < k
            })
            .count();
        hits as f64 / self.per_replicate.len().max(1) as f64
    }

    /// Attribute indices by decreasing mean score.
    pub fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.mean.len()).collect();
        o.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]).then(a.cmp(&b)));
        o
    }
}

pub fn importance_scope(table: &InstanceTable, set: &ReplicateSet, models: &ModelFile, seed: u64) -> Result<ImportanceSummary> {
    let tag = format!("importance/{}/{}", set.scope, set.problem);
    let dim = table.dim();
    let per: Vec<Result<(Vec<f64>, Vec<usize>)>> = (0..models.models.len())
        .map(|j| {
            let Model::Forest(forest) = &models.models[j] else {
                return Err(Error::InvalidConfig("importance needs forest models".into()));
            };
            let (x, y) = train_data(table, set, j)?;
            let feats = &models.features[j];
            let imp = permutation_importance(forest, &x.select_columns(feats), &y, derive_seed(seed, &tag, j as u64));
            let mut full = vec![0.0; dim];
            for (c, &a) in feats.iter().enumerate() {
                full[a] = imp.scores[c];
            }
            Ok((full, imp.flagged.iter().map(|&c| feats[c]).collect()))
        })
        .collect();
    let mut per_replicate = Vec::with_capacity(per.len());
    let mut flagged = Vec::with_capacity(per.len());
    for p in per {
        let (s, f) = p?;
        per_replicate.push(s);
        flagged.push(f);
    }
    let (mean, sd): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|a| mean_sd(&per_replicate.iter().map(|s| s[a]).collect::<Vec<_>>()))
        .unzip();
    Ok(ImportanceSummary { per_replicate, mean, sd, flagged })
}

/// Everything produced for one scope.
#[derive(Debug, Clone)]
pub struct ScopeOutcome {
    pub set: ReplicateSet,
    pub selections: Vec<SelectionResult>,
    pub models: ModelFile,
    pub matrices: Vec<ConfusionMatrix>,
    pub report: EvalReport,
    pub importance: Option<ImportanceSummary>,
}

/// Tuned and evaluated models per scope. The comprehensive scope is tuned
/// on its own; interval scopes share one grid winner averaged over all of
/// them.
#[derive(Debug, Clone)]
pub struct ModelingOutcome {
    pub comprehensive_grid: Option<GridResult>,
    pub interval_grid: Option<GridResult>,
    pub scopes: Vec<ScopeOutcome>,
    pub skipped: Vec<Scope>,
}

pub fn run_modeling(
    table: &InstanceTable,
    split: &DateSplit,
    scopes: &[Scope],
    config: &ModelingConfig,
    with_importance: bool,
) -> Result<ModelingOutcome> {
    let (sets, skipped) = prepare(table, split, scopes, config)?;
    let mut selected = Vec::with_capacity(sets.len());
    for set in sets {
        let sel = select_scope(table, &set, &config.selection_for(set.scope))?;
        selected.push((set, sel));
    }
    let (comp, ind): (Vec<_>, Vec<_>) = selected.into_iter().partition(|(s, _)| s.scope == Scope::Comprehensive);
    let comprehensive_grid = if comp.is_empty() { None } else { Some(tune(table, &comp, config)?) };
    let interval_grid = if ind.is_empty() { None } else { Some(tune(table, &ind, config)?) };
    let mut outcomes = Vec::new();
    for ((set, selections), grid) in comp
        .into_iter()
        .map(|p| (p, comprehensive_grid.as_ref()))
        .chain(ind.into_iter().map(|p| (p, interval_grid.as_ref())))
    {
        let best = grid.expect("grid exists for non-empty group").best;
        let models = train_scope(table, &set, &selections, config.learner, best.param, best.count, config.seed)?;
        let matrices = evaluate_scope(table, &set, &models)?;
        let report = EvalReport::from_matrices(set.problem, &matrices);
        let importance = if with_importance && config.learner == LearnerKind::Forest {
            Some(importance_scope(table, &set, &models, config.seed)?)
        } else {
            None
        };
        outcomes.push(ScopeOutcome { set, selections, models, matrices, report, importance });
    }
    Ok(ModelingOutcome { comprehensive_grid, interval_grid, scopes: outcomes, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{InstanceKey, Label};
    use crate::rng::stream;
    use chrono::{Days, NaiveDate};
    use rand::Rng;

    fn planted(n: usize) -> InstanceTable {
        let mut rng = stream(3, "workflow-fixture", 0);
        let names = (0..6).map(|j| format!("x{j}")).collect();
        let mut t = InstanceTable::new(names);
        let d0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        for k in 0..n {
            let row: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let label = if row[2] > 0.85 { Label::Up } else { Label::None };
            let key = InstanceKey { stock_id: "A".into(), date: d0 + Days::new((k / 4) as u64), day: k / 4, interval: k % 4 };
            t.push(key, label, &row);
        }
        t
    }

    #[test]
    fn planted_attribute_is_learned() {
        let t = planted(2000);
        let dates: Vec<NaiveDate> = t.keys.iter().map(|k| k.date).collect();
        let split = DateSplit::by_fraction(&dates, 0.6).unwrap();
        let cfg = ModelingConfig {
            params: vec![10, 30],
            replicates: ReplicateConfig { count: 4, ..Default::default() },
            selection: SelectionConfig { bins: 20, trials: 50, ..Default::default() },
            grid_replicates: Some(2),
            ..Default::default()
        };
        let out = run_modeling(&t, &split, &[Scope::Comprehensive], &cfg, true).unwrap();
        let s = &out.scopes[0];
        assert!(s.selections.iter().all(|r| r.ranked[0] == 2));
        assert!(s.report.get("acc").unwrap().0 > 0.9);
        assert!(s.importance.as_ref().unwrap().top_k_rate(2, 1) == 1.0);
        assert_eq!(s.matrices.len(), 4);
    }

    #[test]
    fn interval_scopes_share_a_grid() {
        let t = planted(2400);
        let dates: Vec<NaiveDate> = t.keys.iter().map(|k| k.date).collect();
        let split = DateSplit::by_fraction(&dates, 0.6).unwrap();
        let cfg = ModelingConfig {
            params: vec![10],
            replicates: ReplicateConfig { count: 2, ..Default::default() },
            selection: SelectionConfig { bins: 10, trials: 20, ..Default::default() },
            ..Default::default()
        };
        let sc = scopes("both", 4).unwrap();
        assert_eq!(sc.len(), 4);
        let out = run_modeling(&t, &split, &sc, &cfg, false).unwrap();
        assert!(out.comprehensive_grid.is_some() && out.interval_grid.is_some());
        let ind: Vec<_> = out.scopes.iter().filter(|s| s.set.scope != Scope::Comprehensive).collect();
        assert_eq!(ind.len(), 3);
        let p = ind[0].models.learner.param;
        assert!(ind.iter().all(|s| s.models.learner.param == p));
    }
}
