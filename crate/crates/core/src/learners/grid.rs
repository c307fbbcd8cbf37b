use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Matrix;
use super::metrics::ConfusionMatrix;
use super::{LearnerConfig, LearnerKind, Model};
use crate::dataset::Problem;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result, par};

/// One training set of the search with its own feature ranking.
#[derive(Debug, Clone)]
pub struct GridUnit {
    pub x: Matrix,
    pub y: Vec<usize>,
    /// Column indices of `x` in ranking order.
    pub ranked: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Tree counts or neighbour counts to try.
    pub params: Vec<usize>,
    pub count_step: usize,
    pub train_fraction: f64,
    pub max_resplits: usize,
    pub seed: u64,
}

impl GridConfig {
    pub fn for_kind(kind: LearnerKind, seed: u64) -> Self {
        Self { params: kind.default_grid(), count_step: 5, train_fraction: 0.7, max_resplits: 10, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub param: usize,
    pub count: usize,
    pub mean_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridPoint,
    pub points: Vec<GridPoint>,
}

/// `{step, 2 step, ...}` below `maxno`, then `maxno` itself.
pub fn count_grid(maxno: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut g: Vec<usize> = (1..).map(|k| k * step).take_while(|&c| c < maxno).collect();
    if maxno > 0 {
        g.push(maxno);
    }
    g
}

/// Random split of `0..y.len()` with every class on both sides.
pub fn inner_split(y: &[usize], classes: usize, fraction: f64, seed: u64, retries: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = y.len();
    let cut = ((n as f64) * fraction).round() as usize;
    let present: Vec<bool> = (0..classes).map(|c| y.contains(&c)).collect();
    for attempt in 0..=retries {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream(seed, "inner-split", attempt as u64));
        let (a, b) = idx.split_at(cut.min(n));
        let covers = |s: &[usize]| (0..classes).all(|c| !present[c] || s.iter().any(|&k| y[k] == c));
        if covers(a) && covers(b) {
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            return Ok((a, b));
        }
    }
    Err(Error::Degenerate(format!("no class-complete {fraction} split of {n} rows after {retries} retries")))
}

/// Inner F-measure of every `(param, count)` pair for one unit.
fn unit_scores(
    unit: &GridUnit,
    u: usize,
    kind: LearnerKind,
    problem: Problem,
    counts: &[usize],
    config: &GridConfig,
) -> Result<Vec<f64>> {
    let (tr, te) =
        inner_split(&unit.y, problem.classes(), config.train_fraction, derive_seed(config.seed, "grid-unit", u as u64), config.max_resplits)?;
    let ytr: Vec<usize> = tr.iter().map(|&k| unit.y[k]).collect();
    let yte: Vec<usize> = te.iter().map(|&k| unit.y[k]).collect();
    let xtr = unit.x.select_rows(&tr);
    let xte = unit.x.select_rows(&te);
    let mut out = Vec::with_capacity(config.params.len() * counts.len());
    for &param in &config.params {
        for &g in counts {
            let feats = &unit.ranked[..g.min(unit.ranked.len())];
            let cfg = LearnerConfig { kind, param, seed: derive_seed(config.seed, "grid-learner", u as u64) };
            let model = Model::train(&xtr.select_columns(feats), &ytr, problem.classes(), &cfg)?;
            let pred = model.predict_all(&xte.select_columns(feats));
            out.push(ConfusionMatrix::from_predictions(problem, &yte, &pred).metrics().selection_f());
        }
    }
    Ok(out)
}

/// Exhaustive search over `config.params` and the feature-count grid.
///
/// Every unit is split once 70/30 and the split is reused for all grid
/// points. The pair with the best mean F wins; ties go to the smaller
/// parameter, then the smaller count.
pub fn grid_search(units: &[GridUnit], kind: LearnerKind, problem: Problem, config: &GridConfig) -> Result<GridResult> {
    let maxno = units.iter().map(|u| u.ranked.len()).max().unwrap_or(0);
    if units.is_empty() || maxno == 0 || config.params.is_empty() {
        return Err(Error::InsufficientData("grid search needs units with ranked features and a parameter grid".into()));
    }
    let counts = count_grid(maxno, config.count_step);
    let per_unit: Vec<Vec<f64>> = par::map_range(units.len(), |u| unit_scores(&units[u], u, kind, problem, &counts, config))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(config.params.len() * counts.len());
    let mut params = config.params.clone();
    params.sort_unstable();
    params.dedup();
    for &param in &params {
        let p = config.params.iter().position(|&q| q == param).expect("from config");
        for (c, &count) in counts.iter().enumerate() {
            let k = p * counts.len() + c;
            let mean_f = per_unit.iter().map(|s| s[k]).sum::<f64>() / units.len() as f64;
            points.push(GridPoint { param, count, mean_f });
        }
    }
    let mut best = points[0];
    for p in &points[1..] {
        if p.mean_f > best.mean_f {
            best = *p;
        }
    }
    Ok(GridResult { best, points })
}

/// Best feature count on the inner split for one unit and fixed learner.
pub fn choose_feature_count(unit: &GridUnit, learner: &LearnerConfig, problem: Problem, step: usize, seed: u64) -> Result<usize> {
    let config = GridConfig { params: vec![learner.param], count_step: step, train_fraction: 0.7, max_resplits: 10, seed };
    Ok(grid_search(std::slice::from_ref(unit), learner.kind, problem, &config)?.best.count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit(n: usize, d: usize, signal: Option<usize>, seed: u64) -> GridUnit {
        let mut rng = stream(seed, "grid-fixture", 0);
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for k in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            y.push(match signal {
                Some(s) => usize::from(row[s] > 0.5),
                None => k % 2,
            });
            data.extend(row);
        }
        let mut ranked: Vec<usize> = (0..d).collect();
        if let Some(s) = signal {
            ranked.retain(|&j| j != s);
            ranked.insert(0, s);
        }
        GridUnit { x: Matrix::new(n, d, data).unwrap(), y, ranked }
    }

    #[test]
    fn count_grid_caps_at_maxno() {
        assert_eq!(count_grid(17, 5), vec![5, 10, 15, 17]);
        assert_eq!(count_grid(15, 5), vec![5, 10, 15]);
        assert_eq!(count_grid(3, 5), vec![3]);
    }

    #[test]
    fn planted_signal_picks_smallest_count() {
        let u = unit(300, 12, Some(3), 1);
        let cfg = LearnerConfig { kind: LearnerKind::Forest, param: 30, seed: 1 };
        assert_eq!(choose_feature_count(&u, &cfg, Problem::Binary, 5, 2).unwrap(), 5);
    }

    #[test]
    fn single_point_grid_returns_it() {
        let u = unit(120, 4, Some(0), 3);
        let cfg = GridConfig { params: vec![10], ..GridConfig::for_kind(LearnerKind::Forest, 0) };
        let r = grid_search(&[u], LearnerKind::Forest, Problem::Binary, &cfg).unwrap();
        assert_eq!((r.best.param, r.best.count), (10, 4));
        assert!(r.best.mean_f >= 0.9);
    }

    #[test]
    fn split_covers_classes() {
        let y: Vec<usize> = (0..40).map(|k| usize::from(k == 0 || k == 1)).collect();
        let (a, b) = inner_split(&y, 2, 0.7, 5, 50).unwrap();
        assert!(a.iter().any(|&k| y[k] == 1) && b.iter().any(|&k| y[k] == 1));
        assert_eq!(a.len() + b.len(), 40);
        assert!(inner_split(&[0, 0, 1], 2, 0.7, 1, 3).is_err());
    }
}
