//! Mutual-information feature screening and mRMR ranking.
//!
//! Attributes are discretized by equal-frequency binning. An attribute
//! survives screening when its MI with the class exceeds the mean MI of
//! permuted copies; survivors are then ranked greedily by relevance minus
//! mean redundancy with the attributes already chosen.

mod mi;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use mi::{Axis, MiEstimate, discretize, estimate_mi, mi_codes, permutation_baseline};
pub use crate::learners::choose_feature_count;

use crate::{Error, Result, par};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub bins: usize,
    pub trials: usize,
    pub seed: u64,
    /// Length of the mRMR ranking; all survivors when `None`.
    pub max_features: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { bins: 100, trials: 1000, seed: 0, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub bins: usize,
    pub raw_mi: Vec<f64>,
    pub baseline: Vec<f64>,
    pub screened_out: Vec<usize>,
    /// Attribute indices in mRMR order.
    pub ranked: Vec<usize>,
    /// Criterion value of each ranked attribute when it was chosen.
    pub trace: Vec<f64>,
}

impl SelectionResult {
    pub fn survivors(&self) -> usize {
        self.raw_mi.len() - self.screened_out.len()
    }

    pub fn excess(&self, j: usize) -> f64 {
        self.raw_mi[j] - self.baseline[j]
    }

    pub fn rank_of(&self, j: usize) -> Option<usize> {
        self.ranked.iter().position(|&a| a == j)
    }
}

/// Greedy mRMR over `candidates`, returning the order and criterion trace.
///
/// The first pick maximizes `relevance`; later picks maximize relevance minus
/// the mean `redundancy` with the picks so far. Ties go to the lower index.
pub fn mrmr_rank<F>(relevance: &[f64], redundancy: F, candidates: &[usize], l: usize) -> (Vec<usize>, Vec<f64>)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let l = l.min(candidates.len());
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    let mut red_sum = vec![0.0; relevance.len()];
    let mut ranked = Vec::with_capacity(l);
    let mut trace = Vec::with_capacity(l);
    while ranked.len() < l {
        let s = ranked.len() as f64;
        let mut best: Option<(usize, f64)> = None;
        for (pos, &j) in remaining.iter().enumerate() {
            let cr = if ranked.is_empty() { relevance[j] } else { relevance[j] - red_sum[j] / s };
            if best.is_none_or(|(_, b)| cr > b) {
                best = Some((pos, cr));
            }
        }
        let (pos, cr) = best.expect("remaining is non-empty");
        let pick = remaining.remove(pos);
        ranked.push(pick);
        trace.push(cr);
        let updates = par::map(&remaining, |&j| redundancy(j, pick));
        for (&j, r) in remaining.iter().zip(updates) {
            red_sum[j] += r;
        }
    }
    (ranked, trace)
}

/// Screens and ranks the columns of a row-major `x` against classes `y`.
pub fn select_features(x: &[f64], dim: usize, y: &[usize], config: &SelectionConfig) -> Result<SelectionResult> {
    let n = y.len();
    if dim == 0 || x.len() != n * dim {
        return Err(Error::InconsistentData(format!("selection input of {} values for {n} x {dim}", x.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("selection on {n} rows")));
    }
    let bins = if n < config.bins {
        log::warn!("selection: {n} rows, bins reduced from {} to {n}", config.bins);
        n
    } else {
        config.bins
    };
    let classes = y.iter().max().map_or(1, |m| m + 1);
    let yc: Vec<u32> = y.iter().map(|&c| c as u32).collect();
    let codes: Vec<Vec<u32>> = par::map_range(dim, |j| {
        let col: Vec<f64> = (0..n).map(|k| x[k * dim + j]).collect();
        discretize(&col, bins)
    });
    let scored: Vec<(f64, f64)> = par::map_range(dim, |j| {
        let raw = mi_codes(&codes[j], &yc, bins, classes);
        let base = permutation_baseline(&codes[j], &yc, bins, classes, config.trials, config.seed, j);
        (raw, base)
    });
    let raw_mi: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let baseline: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let (survivors, screened_out): (Vec<usize>, Vec<usize>) = (0..dim).partition(|&j| raw_mi[j] > baseline[j]);
    let l = match config.max_features {
        Some(l) if l > survivors.len() => {
            log::warn!("selection: {l} features requested, {} survive screening", survivors.len());
            survivors.len()
        }
        Some(l) => l,
        None => survivors.len(),
    };
    let (ranked, trace) = mrmr_rank(&raw_mi, |a, b| mi_codes(&codes[a], &codes[b], bins, bins), &survivors, l);
    Ok(SelectionResult { bins, raw_mi, baseline, screened_out, ranked, trace })
}

/// Writes one row per attribute: name, raw MI, baseline, excess and 1-based rank.
pub fn write_selection_report<W: Write>(sink: W, names: &[String], result: &SelectionResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["index", "attribute", "raw_mi", "baseline", "excess", "screened_out", "rank"])?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([
            (j + 1).to_string(),
            name.clone(),
            result.raw_mi[j].to_string(),
            result.baseline[j].to_string(),
            result.excess(j).to_string(),
            u8::from(result.screened_out.contains(&j)).to_string(),
            result.rank_of(j).map(|r| (r + 1).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn duplicate_attribute_ranks_last() {
        let mut rng = stream(5, "t", 0);
        let n = 2000;
        let dim = 4;
        let mut x = vec![0.0; n * dim];
        let mut y = vec![0usize; n];
        for k in 0..n {
            let s: f64 = rng.random();
            y[k] = usize::from(s > 0.5);
            x[k * dim] = s + 0.2 * rng.random::<f64>();
            x[k * dim + 1] = x[k * dim];
            x[k * dim + 2] = s + 0.6 * rng.random::<f64>();
            x[k * dim + 3] = s + 0.9 * rng.random::<f64>();
        }
        let cfg = SelectionConfig { bins: 20, trials: 20, ..SelectionConfig::default() };
        let r = select_features(&x, dim, &y, &cfg).unwrap();
        assert_eq!(r.ranked[0], 0);
        assert_eq!(*r.ranked.last().unwrap(), 1);
    }

    #[test]
    fn independent_attributes_follow_mi_order() {
        let rel = [0.3, 0.9, 0.5, 0.1];
        let (ranked, trace) = mrmr_rank(&rel, |_, _| 0.0, &[0, 1, 2, 3], 4);
        assert_eq!(ranked, vec![1, 2, 0, 3]);
        assert_eq!(trace, vec![0.9, 0.5, 0.3, 0.1]);
        let (one, _) = mrmr_rank(&rel, |_, _| 0.0, &[0, 1, 2, 3], 1);
        assert_eq!(one, vec![1]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let (ranked, _) = mrmr_rank(&[0.5, 0.5, 0.5], |_, _| 0.1, &[2, 0, 1], 3);
        assert_eq!(ranked, vec![0, 1, 2]);
    }

    #[test]
    fn screening_keeps_informative_and_honours_cap() {
        let mut rng = stream(6, "t", 0);
        let n = 1000;
        let mut x = vec![0.0; n * 2];
        let mut y = vec![0usize; n];
        for k in 0..n {
            y[k] = rng.random_range(0..2);
            x[k * 2] = y[k] as f64 + rng.random::<f64>();
            x[k * 2 + 1] = rng.random();
        }
        let cfg = SelectionConfig { bins: 10, trials: 50, max_features: Some(5), ..SelectionConfig::default() };
        let r = select_features(&x, 2, &y, &cfg).unwrap();
        assert!(!r.screened_out.contains(&0));
        assert_eq!(r.ranked[0], 0);
        assert!(r.ranked.len() <= 2);
        assert!(r.raw_mi[0] > r.baseline[0] + 0.3);
    }
}
