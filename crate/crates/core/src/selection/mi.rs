use rand::seq::SliceRandom;

use crate::rng::stream;
use crate::{Error, Result};

/// Plug-in mutual information estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub bins: usize,
    pub n: usize,
}

/// Equal-frequency bin codes; tied values share the bin of their mid-rank.
pub fn discretize(x: &[f64], bins: usize) -> Vec<u32> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut codes = vec![0u32; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let mid = 0.5 * (start + end - 1) as f64;
        let bin = ((mid * bins as f64 / n as f64).floor() as usize).min(bins - 1) as u32;
        for &k in &order[start..end] {
            codes[k] = bin;
        }
        start = end;
    }
    codes
}

/// Mutual information of two code sequences with `bx` and `by` symbols.
pub fn mi_codes(x: &[u32], y: &[u32], bx: usize, by: usize) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint = vec![0u32; bx * by];
    let mut px = vec![0u32; bx];
    let mut py = vec![0u32; by];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize * by + b as usize] += 1;
        px[a as usize] += 1;
        py[b as usize] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bx {
        if px[a] == 0 {
            continue;
        }
        for b in 0..by {
            let c = joint[a * by + b];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / nf * (c * nf / (px[a] as f64 * py[b] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// One axis of an MI estimate.
#[derive(Debug, Clone, Copy)]
pub enum Axis<'a> {
    /// Real values, discretized by equal frequency.
    Real(&'a [f64]),
    /// Class indices used as their own partition.
    Classes(&'a [usize]),
}

impl Axis<'_> {
    fn len(&self) -> usize {
        match self {
            Axis::Real(v) => v.len(),
            Axis::Classes(v) => v.len(),
        }
    }

    fn codes(&self, bins: usize) -> (Vec<u32>, usize) {
        match self {
            Axis::Real(v) => (discretize(v, bins), bins),
            Axis::Classes(c) => {
                let k = c.iter().max().map_or(1, |m| m + 1);
                (c.iter().map(|&v| v as u32).collect(), k)
            }
        }
    }
}

pub fn estimate_mi(x: Axis<'_>, y: Axis<'_>, bins: usize) -> Result<MiEstimate> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::InconsistentData(format!("MI axes of length {n} and {}", y.len())));
    }
    if bins == 0 || n < bins {
        return Err(Error::InsufficientData(format!("MI with {bins} bins needs at least {bins} samples, got {n}")));
    }
    let (cx, bx) = x.codes(bins);
    let (cy, by) = y.codes(bins);
    Ok(MiEstimate { value: mi_codes(&cx, &cy, bx, by), bins, n })
}

/// Mean MI over `trials` seeded permutations of `x` against `y`.
///
/// Pairs are put in a canonical order before shuffling, so the baseline
/// does not depend on instance order for a given `(seed, attribute)`.
pub fn permutation_baseline(
    x: &[u32],
    y: &[u32],
    bx: usize,
    by: usize,
    trials: usize,
    seed: u64,
    attribute: usize,
) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mut pairs: Vec<(u32, u32)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_unstable();
    let mut xs: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    let mut rng = stream(seed, "mi-baseline", attribute as u64);
    let mut total = 0.0;
    for _ in 0..trials {
        xs.shuffle(&mut rng);
        total += mi_codes(&xs, &ys, bx, by);
    }
    total / trials as f64
}
