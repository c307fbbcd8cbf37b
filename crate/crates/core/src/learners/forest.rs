use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Matrix, argmax_count, check_labels};
use crate::rng::{StreamRng, stream};
use crate::{Error, Result, par};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features tried per split; `floor(sqrt(d))` when `None`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, mtry: None, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Training rows not drawn into this tree's bootstrap sample.
    pub oob: Vec<usize>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn uses(&self, feature: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Split { feature: f, .. } if *f == feature))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub classes: usize,
    pub dim: usize,
    pub trees: Vec<Tree>,
}

/// Summed Gini impurity of both children, weighted by size.
fn split_score(left: &[usize], total: &[usize], nl: usize, n: usize) -> f64 {
    let nr = n - nl;
    let (mut sl, mut sr) = (0.0, 0.0);
    for (&l, &t) in left.iter().zip(total) {
        let r = t - l;
        sl += (l as f64) * (l as f64);
        sr += (r as f64) * (r as f64);
    }
    (nl as f64 - sl / nl as f64) + (nr as f64 - sr / nr as f64)
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Grower<'_> {
    /// Best threshold on `feature` for rows `idx`, as `(weighted gini, threshold)`.
    fn best_split(&mut self, idx: &[usize], feature: usize, total: &[usize]) -> Option<(f64, f64)> {
        self.order.clear();
        self.order.extend_from_slice(idx);
        let x = self.x;
        self.order.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)));
        let n = idx.len();
        let mut left = vec![0usize; self.classes];
        let mut best: Option<(f64, f64)> = None;
        for p in 0..n - 1 {
            left[self.y[self.order[p]]] += 1;
            let (a, b) = (x.get(self.order[p], feature), x.get(self.order[p + 1], feature));
            let nl = p + 1;
            if a == b || nl < self.min_leaf || n - nl < self.min_leaf {
                continue;
            }
            let score = split_score(&left, total, nl, n);
            if best.is_none_or(|(s, _)| score < s) {
                let mut thr = 0.5 * (a + b);
                if thr >= b {
                    thr = a;
                }
                best = Some((score, thr));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, rng: &mut StreamRng) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &k in &idx {
            counts[self.y[k]] += 1;
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { class: argmax_count(&counts) });
        if counts.iter().filter(|&&c| c > 0).count() <= 1 || idx.len() < 2 * self.min_leaf {
            return me;
        }
        let mut features: Vec<usize> = (0..self.x.cols).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((score, thr)) = self.best_split(&idx, f, &counts) {
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { return me };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&k| self.x.get(k, feature) <= threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[me] = Node::Split { feature, threshold, left, right };
        me
    }
}

fn grow_tree(x: &Matrix, y: &[usize], classes: usize, mtry: usize, min_leaf: usize, rng: &mut StreamRng) -> Tree {
    let n = x.rows;
    let mut drawn = vec![false; n];
    let sample: Vec<usize> = (0..n)
        .map(|_| {
            let k = rng.random_range(0..n);
            drawn[k] = true;
            k
        })
        .collect();
    let oob = (0..n).filter(|&k| !drawn[k]).collect();
    let mut g = Grower { x, y, classes, mtry, min_leaf, nodes: Vec::new(), order: Vec::with_capacity(n) };
    g.grow(sample, rng);
    Tree { nodes: g.nodes, oob }
}

impl Forest {
    pub fn train(x: &Matrix, y: &[usize], classes: usize, config: &ForestConfig) -> Result<Self> {
        check_labels(y, x.rows, classes)?;
        if config.trees == 0 || x.cols == 0 {
            return Err(Error::InvalidConfig("a forest needs at least one tree and one feature".into()));
        }
        let mtry = config.mtry.unwrap_or(((x.cols as f64).sqrt().floor() as usize).max(1)).clamp(1, x.cols);
        let min_leaf = config.min_leaf.max(1);
        let trees = par::map_range(config.trees, |t| {
            let mut rng = stream(config.seed, "forest-tree", t as u64);
            grow_tree(x, y, classes, mtry, min_leaf, &mut rng)
        });
        Ok(Self { classes, dim: x.cols, trees })
    }

    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut v = vec![0usize; self.classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }

    /// Majority vote, ties to the smaller class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_count(&self.votes(x))
    }

    pub fn predict_all(&self, x: &Matrix) -> Vec<usize> {
        par::map_range(x.rows, |k| self.predict(x.row(k)))
    }

    /// Out-of-bag majority-vote accuracy over rows with at least one OOB tree.
    pub fn oob_accuracy(&self, x: &Matrix, y: &[usize]) -> f64 {
        let mut votes = vec![vec![0usize; self.classes]; x.rows];
        for t in &self.trees {
            for &k in &t.oob {
                votes[k][t.predict(x.row(k))] += 1;
            }
        }
        let (mut hit, mut seen) = (0usize, 0usize);
        for (k, v) in votes.iter().enumerate() {
            if v.iter().sum::<usize>() > 0 {
                seen += 1;
                hit += usize::from(argmax_count(v) == y[k]);
            }
        }
        if seen == 0 { 0.0 } else { hit as f64 / seen as f64 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_set_fits_perfectly() {
        let rows: Vec<Vec<f64>> = (0..40).map(|k| vec![k as f64, (k % 3) as f64]).collect();
        let y: Vec<usize> = (0..40).map(|k| usize::from(k >= 20)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let f = Forest::train(&x, &y, 2, &ForestConfig { trees: 10, ..Default::default() }).unwrap();
        assert_eq!(f.predict_all(&x), y);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(Forest::train(&x, &[1, 1], 2, &ForestConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn multiclass_leaves() {
        let rows: Vec<Vec<f64>> = (0..60).map(|k| vec![k as f64]).collect();
        let y: Vec<usize> = (0..60).map(|k| k / 20).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let f = Forest::train(&x, &y, 3, &ForestConfig { trees: 5, ..Default::default() }).unwrap();
        assert_eq!(f.predict(&[5.0]), 0);
        assert_eq!(f.predict(&[30.0]), 1);
        assert_eq!(f.predict(&[55.0]), 2);
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..50).map(|k| vec![(k * 37 % 11) as f64, (k * 13 % 7) as f64]).collect();
        let y: Vec<usize> = (0..50).map(|k| (k * 37 % 11 > 5) as usize).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = ForestConfig { trees: 7, seed: 3, ..Default::default() };
        assert_eq!(Forest::train(&x, &y, 2, &cfg).unwrap(), Forest::train(&x, &y, 2, &cfg).unwrap());
    }

    #[test]
    fn vote_recount_matches_prediction() {
        let rows: Vec<Vec<f64>> = (0..30).map(|k| vec![(k * 7 % 30) as f64]).collect();
        let y: Vec<usize> = (0..30).map(|k| (k % 2) as usize).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let f = Forest::train(&x, &y, 2, &ForestConfig { trees: 9, ..Default::default() }).unwrap();
        for k in 0..30 {
            let mut v = [0usize; 2];
            for t in &f.trees {
                v[t.predict(x.row(k))] += 1;
            }
            assert_eq!(f.predict(x.row(k)), usize::from(v[1] > v[0]));
        }
    }
}
