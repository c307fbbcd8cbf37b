use rand::Rng;
use serde::{Deserialize, Serialize};

use super::InstanceTable;
use crate::{Error, Result, par};

/// Default SMOTE neighbourhood size.
pub const K_NEIGHBORS: usize = 5;

/// Uniform random subset of `pool` of exactly `target` entries, in pool order.
pub fn undersample<R: Rng + ?Sized>(pool: &[usize], target: usize, rng: &mut R) -> Result<Vec<usize>> {
    if pool.len() < target {
        return Err(Error::Degenerate(format!(
            "cannot undersample {} no-jump instances to {target}",
            pool.len()
        )));
    }
    let mut picked = rand::seq::index::sample(rng, pool.len(), target).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| pool[k]).collect())
}

/// A synthetic point `x + delta * (x_hat - x)` with `x = base`, `x_hat = neighbor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synthetic {
    pub base: usize,
    pub neighbor: usize,
    pub delta: f64,
}

impl Synthetic {
    pub fn point(&self, table: &InstanceTable) -> Vec<f64> {
        let x = table.row(self.base);
        let y = table.row(self.neighbor);
        x.iter().zip(y).map(|(a, b)| a + self.delta * (b - a)).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minority class with its precomputed nearest-neighbour lists.
#[derive(Debug, Clone)]
pub struct Smote {
    pub minority: Vec<usize>,
    pub k: usize,
    /// Master indices of the `k` nearest other minority points, nearest first.
    pub neighbors: Vec<Vec<usize>>,
}

impl Smote {
    pub fn new(table: &InstanceTable, minority: &[usize], k: usize) -> Result<Self> {
        if minority.len() < 2 {
            return Err(Error::Degenerate(format!("SMOTE needs two minority points, got {}", minority.len())));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("SMOTE neighbourhood size must be positive".into()));
        }
        let k = if minority.len() <= k {
            log::warn!("SMOTE: {} minority points, neighbourhood clamped to {}", minority.len(), minority.len() - 1);
            minority.len() - 1
        } else {
            k
        };
        let neighbors = par::map(minority, |&a| {
            let xa = table.row(a);
            let mut d: Vec<(f64, usize)> =
                minority.iter().filter(|&&b| b != a).map(|&b| (sq_dist(xa, table.row(b)), b)).collect();
            d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            d.truncate(k);
            d.into_iter().map(|(_, b)| b).collect()
        });
        Ok(Self { minority: minority.to_vec(), k, neighbors })
    }

    /// Draws `count` synthetic points with uniformly chosen bases.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Synthetic> {
        (0..count)
            .map(|_| {
                let b = rng.random_range(0..self.minority.len());
                let nb = &self.neighbors[b];
                let neighbor = nb[rng.random_range(0..nb.len())];
                Synthetic { base: self.minority[b], neighbor, delta: rng.random::<f64>() }
            })
            .collect()
    }
}

/// Synthetic points that grow `minority` to `target`.
pub fn smote_oversample<R: Rng + ?Sized>(
    table: &InstanceTable,
    minority: &[usize],
    target: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Synthetic>> {
    let count = target.saturating_sub(minority.len());
    if count == 0 {
        return Ok(Vec::new());
    }
    Ok(Smote::new(table, minority, k)?.sample(count, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{InstanceKey, Label};
    use crate::rng::stream;
    use chrono::NaiveDate;

    fn table(points: &[[f64; 2]]) -> InstanceTable {
        let mut t = InstanceTable::new(vec!["a".into(), "b".into()]);
        let d = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        for (k, p) in points.iter().enumerate() {
            t.push(InstanceKey { stock_id: "A".into(), date: d, day: 0, interval: k }, Label::Up, p);
        }
        t
    }

    #[test]
    fn undersample_sizes_and_determinism() {
        let pool: Vec<usize> = (0..5000).collect();
        let a = undersample(&pool, 100, &mut stream(1, "u", 0)).unwrap();
        let b = undersample(&pool, 100, &mut stream(1, "u", 0)).unwrap();
        let c = undersample(&pool, 100, &mut stream(2, "u", 0)).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(undersample(&pool[..10], 11, &mut stream(1, "u", 0)).is_err());
    }

    #[test]
    fn delta_endpoints() {
        let t = table(&[[0.0, 0.0], [1.0, 2.0]]);
        assert_eq!(Synthetic { base: 0, neighbor: 1, delta: 0.0 }.point(&t), vec![0.0, 0.0]);
        assert_eq!(Synthetic { base: 0, neighbor: 1, delta: 1.0 }.point(&t), vec![1.0, 2.0]);
    }

    #[test]
    fn two_point_minority_stays_on_segment() {
        let t = table(&[[0.0, 0.0], [1.0, 2.0]]);
        let syn = smote_oversample(&t, &[0, 1], 50, 5, &mut stream(3, "s", 0)).unwrap();
        assert_eq!(syn.len(), 48);
        for s in syn {
            let p = s.point(&t);
            assert!((p[1] - 2.0 * p[0]).abs() < 1e-12 && (0.0..=1.0).contains(&p[0]));
        }
    }

    #[test]
    fn neighbours_sorted_with_index_ties() {
        let t = table(&[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 0.0]]);
        let s = Smote::new(&t, &[0, 1, 2, 3], 2).unwrap();
        assert_eq!(s.neighbors[0], vec![1, 2]);
        assert_eq!(s.neighbors[3], vec![1, 0]);
        assert!(Smote::new(&t, &[0], 2).is_err());
        assert_eq!(Smote::new(&t, &[0, 1, 2], 5).unwrap().k, 2);
    }
}
