use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Matrix;
use super::forest::Forest;
use super::metrics::mean_sd;
use crate::par;
use crate::rng::stream;

/// Permutation importance of each feature for one forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    /// Mean out-of-bag error increase divided by its sd across trees.
    pub scores: Vec<f64>,
    pub mean_increase: Vec<f64>,
    /// Features whose increase had zero spread across trees (score set to 0).
    pub flagged: Vec<usize>,
}

impl Importance {
    /// Feature indices by decreasing score, ties to the lower index.
    pub fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.scores.len()).collect();
        o.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        o
    }
}

/// Per tree, permutes feature `j` among the tree's out-of-bag rows and
/// records the error increase; trees that never split on `j` add zero.
pub fn permutation_importance(forest: &Forest, x: &Matrix, y: &[usize], seed: u64) -> Importance {
    let d = x.cols;
    let per_tree: Vec<Vec<f64>> = par::map_range(forest.trees.len(), |t| {
        let tree = &forest.trees[t];
        let oob = &tree.oob;
        if oob.is_empty() {
            return vec![0.0; d];
        }
        let err = |rows: &mut dyn Iterator<Item = (usize, f64)>, j: usize| -> f64 {
            let mut buf: Vec<f64> = Vec::with_capacity(d);
            let mut wrong = 0usize;
            for (k, v) in rows {
                buf.clear();
                buf.extend_from_slice(x.row(k));
                if j < d {
                    buf[j] = v;
                }
                wrong += usize::from(tree.predict(&buf) != y[k]);
            }
            wrong as f64 / oob.len() as f64
        };
        let base = err(&mut oob.iter().map(|&k| (k, 0.0)), d);
        let mut rng = stream(seed, "importance", t as u64);
        (0..d)
            .map(|j| {
                if !tree.uses(j) {
                    return 0.0;
                }
                let mut vals: Vec<f64> = oob.iter().map(|&k| x.get(k, j)).collect();
                vals.shuffle(&mut rng);
                err(&mut oob.iter().copied().zip(vals), j) - base
            })
            .collect()
    });
    let mut scores = vec![0.0; d];
    let mut mean_increase = vec![0.0; d];
    let mut flagged = Vec::new();
    for j in 0..d {
        let deltas: Vec<f64> = per_tree.iter().map(|v| v[j]).collect();
        let (m, s) = mean_sd(&deltas);
        mean_increase[j] = m;
        if s > 0.0 {
            scores[j] = m / s;
        } else {
            flagged.push(j);
        }
    }
    Importance { scores, mean_increase, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::forest::ForestConfig;
    use crate::rng::stream;
    use rand::Rng;

    fn planted(n: usize, d: usize, signal: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = stream(seed, "planted", 0);
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            y.push(usize::from(row[signal] > 0.5));
            data.extend(row);
        }
        (Matrix::new(n, d, data).unwrap(), y)
    }

    #[test]
    fn planted_feature_dominates() {
        let (x, y) = planted(400, 10, 7, 1);
        let f = Forest::train(&x, &y, 2, &ForestConfig { trees: 50, seed: 2, ..Default::default() }).unwrap();
        let imp = permutation_importance(&f, &x, &y, 3);
        assert_eq!(imp.order()[0], 7);
    }

    #[test]
    fn constant_feature_is_flagged() {
        let (mut x, y) = planted(200, 4, 0, 4);
        for k in 0..x.rows {
            x.data[k * 4 + 2] = 1.0;
        }
        let f = Forest::train(&x, &y, 2, &ForestConfig { trees: 20, ..Default::default() }).unwrap();
        let imp = permutation_importance(&f, &x, &y, 5);
        assert!(imp.flagged.contains(&2));
        assert_eq!(imp.scores[2], 0.0);
    }
}
