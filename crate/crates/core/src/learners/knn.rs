use serde::{Deserialize, Serialize};

use super::data::{Matrix, check_labels};
use crate::{Result, par};

/// Nearest-neighbour classifier on z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub classes: usize,
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl Knn {
    pub fn train(x: &Matrix, y: &[usize], classes: usize, k: usize) -> Result<Self> {
        check_labels(y, x.rows, classes)?;
        let k = if k > x.rows {
            log::warn!("knn: {k} neighbours requested for {} points, clamped", x.rows);
            x.rows
        } else {
            k.max(1)
        };
        let d = x.cols;
        let n = x.rows as f64;
        let mut mean = vec![0.0; d];
        for r in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in 0..x.rows {
            for ((s, v), m) in scale.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut points = x.clone();
        for r in 0..x.rows {
            for j in 0..d {
                let v = &mut points.data[r * d + j];
                *v = (*v - mean[j]) / scale[j];
            }
        }
        Ok(Self { classes, k, mean, scale, points, labels: y.to_vec() })
    }

    /// Majority vote of the `k` nearest points; ties go to the tied class
    /// of the closest neighbour.
    pub fn predict(&self, x: &[f64]) -> usize {
        let z: Vec<f64> = x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect();
        let mut d: Vec<(f64, usize)> = (0..self.points.rows)
            .map(|r| (self.points.row(r).iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum(), r))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        let mut votes = vec![0usize; self.classes];
        for &(_, r) in &d {
            votes[self.labels[r]] += 1;
        }
        let top = *votes.iter().max().expect("at least one class");
        d.iter().map(|&(_, r)| self.labels[r]).find(|&c| votes[c] == top).expect("a top class is among the neighbours")
    }

    pub fn predict_all(&self, x: &Matrix) -> Vec<usize> {
        par::map_range(x.rows, |k| self.predict(x.row(k)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn one_neighbour_memorizes_training_set() {
        let rows: Vec<Vec<f64>> = (0..30).map(|k| vec![(k * 7 % 31) as f64, (k * 3 % 5) as f64]).collect();
        let y: Vec<usize> = (0..30).map(|k| k % 3).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = Knn::train(&x, &y, 3, 1).unwrap();
        assert_eq!(m.predict_all(&x), y);
    }

    #[test]
    fn full_neighbourhood_tie_goes_to_nearest() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
        let m = Knn::train(&x, &[0, 1, 1, 0], 2, 4).unwrap();
        assert_eq!(m.predict(&[0.9]), 1);
        assert_eq!(m.predict(&[10.6]), 0);
        assert_eq!(Knn::train(&x, &[0, 1, 1, 0], 2, 99).unwrap().k, 4);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = stream(4, "blobs", 0);
        let mut blob = |n: usize, c: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    vec![c + a, c + b]
                })
                .collect()
        };
        let train = [blob(100, 0.0), blob(100, 6.0)].concat();
        let test = [blob(100, 0.0), blob(100, 6.0)].concat();
        let y: Vec<usize> = (0..200).map(|k| usize::from(k >= 100)).collect();
        let m = Knn::train(&Matrix::from_rows(&train).unwrap(), &y, 2, 5).unwrap();
        let p = m.predict_all(&Matrix::from_rows(&test).unwrap());
        let acc = p.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 200.0;
        assert!(acc >= 0.95);
    }
}
