use serde::{Deserialize, Serialize};

use crate::dataset::Problem;

/// Counts indexed `[actual][predicted]` by class index (0 = no jump).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub problem: Problem,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(problem: Problem) -> Self {
        let k = problem.classes();
        Self { problem, counts: vec![vec![0; k]; k] }
    }

    pub fn from_predictions(problem: Problem, actual: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(problem);
        for (&a, &p) in actual.iter().zip(predicted) {
            m.counts[a][p] += 1;
        }
        m
    }

    /// Binary cells `(a, b, c, d)`: jump rows first, jump columns first.
    pub fn binary_cells(&self) -> (u64, u64, u64, u64) {
        let c = &self.counts;
        (c[1][1], c[1][0], c[0][1], c[0][0])
    }

    /// Trinary cells `[a, b, c, d, e, f, g, h, k]`, rows and columns ordered up, down, none.
    pub fn trinary_cells(&self) -> [u64; 9] {
        let c = &self.counts;
        [c[1][1], c[1][2], c[1][0], c[2][1], c[2][2], c[2][0], c[0][1], c[0][2], c[0][0]]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn metrics(&self) -> Metrics {
        match self.problem {
            Problem::Binary => {
                let (a, b, c, d) = self.binary_cells();
                let mut undefined = false;
                let accuracy = ratio(a + d, a + b + c + d, &mut undefined);
                let jump = ClassMetrics::new(ratio(a, a + c, &mut undefined), ratio(a, a + b, &mut undefined), &mut undefined);
                Metrics { accuracy, classes: vec![jump], undefined }
            }
            Problem::Trinary => {
                let [a, b, c, d, e, f, g, h, k] = self.trinary_cells();
                let mut undefined = false;
                let accuracy = ratio(a + e + k, a + b + c + d + e + f + g + h + k, &mut undefined);
                let up = ClassMetrics::new(ratio(a, a + d + g, &mut undefined), ratio(a, a + b + c, &mut undefined), &mut undefined);
                let down = ClassMetrics::new(ratio(e, b + e + h, &mut undefined), ratio(e, d + e + f, &mut undefined), &mut undefined);
                Metrics { accuracy, classes: vec![up, down], undefined }
            }
        }
    }
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fm: f64,
}

impl ClassMetrics {
    fn new(precision: f64, recall: f64, undefined: &mut bool) -> Self {
        let fm = if precision + recall == 0.0 {
            *undefined = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, fm }
    }
}

/// Accuracy plus per-jump-class precision, recall and F-measure.
///
/// `classes` holds the jump class (binary) or up then down (trinary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    /// Some ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

impl Metrics {
    /// F-measure used for model selection: `fm`, or the mean of `fm+` and `fm-`.
    pub fn selection_f(&self) -> f64 {
        self.classes.iter().map(|c| c.fm).sum::<f64>() / self.classes.len() as f64
    }

    /// Named values in report order.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = vec![("acc".to_string(), self.accuracy)];
        let tags: &[&str] = if self.classes.len() == 1 { &[""] } else { &["+", "-"] };
        for (c, t) in self.classes.iter().zip(tags) {
            out.push((format!("fm{t}"), c.fm));
            out.push((format!("precision{t}"), c.precision));
            out.push((format!("recall{t}"), c.recall));
        }
        out
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Replicate summary of one model: metric name, mean, sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: Problem,
    pub replicates: usize,
    pub metrics: Vec<(String, f64, f64)>,
    pub undefined_replicates: usize,
}

impl EvalReport {
    pub fn from_matrices(problem: Problem, matrices: &[ConfusionMatrix]) -> Self {
        let per: Vec<Metrics> = matrices.iter().map(ConfusionMatrix::metrics).collect();
        let names: Vec<String> = per.first().map(|m| m.named().into_iter().map(|(n, _)| n).collect()).unwrap_or_default();
        let metrics = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let xs: Vec<f64> = per.iter().map(|m| m.named()[k].1).collect();
                let (mean, sd) = mean_sd(&xs);
                (name.clone(), mean, sd)
            })
            .collect();
        Self {
            problem,
            replicates: matrices.len(),
            metrics,
            undefined_replicates: per.iter().filter(|m| m.undefined).count(),
        }
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.metrics.iter().find(|m| m.0 == name).map(|m| (m.1, m.2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(a: u64, b: u64, c: u64, d: u64) -> ConfusionMatrix {
        ConfusionMatrix { problem: Problem::Binary, counts: vec![vec![d, c], vec![b, a]] }
    }

    #[test]
    fn perfect_binary() {
        let m = binary(50, 0, 0, 50).metrics();
        assert_eq!((m.accuracy, m.classes[0].fm), (1.0, 1.0));
        assert!(!m.undefined);
    }

    #[test]
    fn hand_binary() {
        let m = binary(30, 20, 10, 40).metrics();
        assert_eq!(m.classes[0].precision, 0.75);
        assert_eq!(m.classes[0].recall, 0.6);
        assert!((m.classes[0].fm - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.7);
    }

    #[test]
    fn diagonal_trinary() {
        let c = ConfusionMatrix { problem: Problem::Trinary, counts: vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]] };
        let m = c.metrics();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.classes[0].fm, m.classes[1].fm), (1.0, 1.0));
    }

    #[test]
    fn no_predicted_jumps_flags_undefined() {
        let m = binary(0, 10, 0, 10).metrics();
        assert!(m.undefined);
        assert_eq!(m.classes[0].fm, 0.0);
    }

    #[test]
    fn predictions_fill_cells() {
        let c = ConfusionMatrix::from_predictions(Problem::Trinary, &[1, 1, 2, 0], &[1, 2, 0, 1]);
        assert_eq!(c.trinary_cells(), [1, 1, 0, 0, 0, 1, 1, 0, 0]);
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn report_mean_sd() {
        let r = EvalReport::from_matrices(Problem::Binary, &[binary(50, 0, 0, 50), binary(30, 20, 10, 40)]);
        let (m, s) = r.get("acc").unwrap();
        assert!((m - 0.85).abs() < 1e-15);
        assert!((s - (0.045f64).sqrt()).abs() < 1e-12);
    }
}
