use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::balance::{K_NEIGHBORS, Smote, Synthetic, undersample};
use super::{InstanceTable, Label};
use crate::rng::stream;
use crate::{Error, Result, par};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    Binary,
    Trinary,
}

impl Problem {
    pub fn classes(self) -> usize {
        match self {
            Problem::Binary => 2,
            Problem::Trinary => 3,
        }
    }

    /// Class index: 0 no jump, then 1 jump (binary) or 1 up and 2 down (trinary).
    pub fn class_of(self, label: Label) -> usize {
        match (self, label) {
            (_, Label::None) => 0,
            (Problem::Binary, _) => 1,
            (Problem::Trinary, Label::Up) => 1,
            (Problem::Trinary, Label::Down) => 2,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Binary => "binary",
            Problem::Trinary => "trinary",
        })
    }
}

/// Comprehensive model over all intervals, or an individual model for one
/// zero-based interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Comprehensive,
    Interval(usize),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Comprehensive => f.write_str("comp"),
            Scope::Interval(i) => write!(f, "ind{}", i + 1),
        }
    }
}

/// Rows of `idx` belonging to `scope`.
pub fn scope_indices(table: &InstanceTable, idx: &[usize], scope: Scope) -> Vec<usize> {
    match scope {
        Scope::Comprehensive => idx.to_vec(),
        Scope::Interval(i) => idx.iter().copied().filter(|&k| table.keys[k].interval == i).collect(),
    }
}

/// Inclusive train and test date ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSplit {
    pub train: (NaiveDate, NaiveDate),
    pub test: (NaiveDate, NaiveDate),
}

impl DateSplit {
    /// First `fraction` of the distinct `dates` train, the rest test.
    pub fn by_fraction(dates: &[NaiveDate], fraction: f64) -> Result<Self> {
        let mut d = dates.to_vec();
        d.sort_unstable();
        d.dedup();
        let cut = ((d.len() as f64) * fraction).round() as usize;
        if cut == 0 || cut >= d.len() {
            return Err(Error::InsufficientData(format!("cannot split {} dates at {fraction}", d.len())));
        }
        Ok(Self { train: (d[0], d[cut - 1]), test: (d[cut], d[d.len() - 1]) })
    }

    pub fn split(&self, table: &InstanceTable) -> (Vec<usize>, Vec<usize>) {
        let within = |d: NaiveDate, (a, b): (NaiveDate, NaiveDate)| a <= d && d <= b;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (k, key) in table.keys.iter().enumerate() {
            if within(key.date, self.train) {
                train.push(k);
            } else if within(key.date, self.test) {
                test.push(k);
            }
        }
        (train, test)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub up: usize,
    pub down: usize,
    pub none: usize,
}

impl ClassCounts {
    pub fn of(table: &InstanceTable, idx: &[usize]) -> Self {
        let mut c = Self::default();
        for &k in idx {
            match table.labels[k] {
                Label::Up => c.up += 1,
                Label::Down => c.down += 1,
                Label::None => c.none += 1,
            }
        }
        c
    }

    pub fn jumps(&self) -> usize {
        self.up + self.down
    }

    /// Balanced training size: `2(M+N)` or `3 max(M,N)`.
    pub fn train_size(&self, problem: Problem) -> usize {
        match problem {
            Problem::Binary => 2 * self.jumps(),
            Problem::Trinary => 3 * self.up.max(self.down),
        }
    }

    /// Test replicate size: `2(M+N)` or `M+N+max(M,N)`.
    pub fn test_size(&self, problem: Problem) -> usize {
        match problem {
            Problem::Binary => 2 * self.jumps(),
            Problem::Trinary => self.jumps() + self.up.max(self.down),
        }
    }
}

/// One balanced training set, as references into the instance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReplicate {
    pub real: Vec<usize>,
    pub synthetic: Vec<Synthetic>,
    /// Label shared by all synthetic points.
    pub synthetic_label: Label,
}

impl TrainReplicate {
    pub fn len(&self) -> usize {
        self.real.len() + self.synthetic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major attribute matrix and class indices, real rows first.
    pub fn materialize(&self, table: &InstanceTable, problem: Problem) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(self.len() * table.dim());
        let mut y = Vec::with_capacity(self.len());
        for &k in &self.real {
            x.extend_from_slice(table.row(k));
            y.push(problem.class_of(table.labels[k]));
        }
        for s in &self.synthetic {
            x.extend(s.point(table));
            y.push(problem.class_of(self.synthetic_label));
        }
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateConfig {
    pub count: usize,
    pub smote_k: usize,
    pub seed: u64,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self { count: 50, smote_k: K_NEIGHBORS, seed: 0 }
    }
}

/// Paired training and test replicates of one problem and scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSet {
    pub problem: Problem,
    pub scope: Scope,
    pub train_counts: ClassCounts,
    pub test_counts: ClassCounts,
    pub train: Vec<TrainReplicate>,
    pub test: Vec<Vec<usize>>,
}

fn by_label(table: &InstanceTable, idx: &[usize], label: Label) -> Vec<usize> {
    idx.iter().copied().filter(|&k| table.labels[k] == label).collect()
}

/// Builds `config.count` training and test replicates for `scope`.
///
/// `train_idx` and `test_idx` are the rows of the date split; they are
/// restricted to `scope` here.
pub fn build_replicates(
    table: &InstanceTable,
    train_idx: &[usize],
    test_idx: &[usize],
    problem: Problem,
    scope: Scope,
    config: &ReplicateConfig,
) -> Result<ReplicateSet> {
    let tr = scope_indices(table, train_idx, scope);
    let te = scope_indices(table, test_idx, scope);
    let train_counts = ClassCounts::of(table, &tr);
    let test_counts = ClassCounts::of(table, &te);
    if train_counts.jumps() == 0 || test_counts.jumps() == 0 {
        return Err(Error::EmptyScope(scope.to_string()));
    }
    let (up, down, none) = (by_label(table, &tr, Label::Up), by_label(table, &tr, Label::Down), by_label(table, &tr, Label::None));
    let test_jumps: Vec<usize> = te.iter().copied().filter(|&k| table.labels[k].is_jump()).collect();
    let test_none = by_label(table, &te, Label::None);
    let tag = format!("{scope}/{problem}");

    let (smote, synthetic_label) = match problem {
        Problem::Binary => (None, Label::Up),
        Problem::Trinary => {
            let (minority, label) = if up.len() < down.len() { (&up, Label::Up) } else { (&down, Label::Down) };
            if up.len() == down.len() {
                (None, label)
            } else {
                (Some(Smote::new(table, minority, config.smote_k)?), label)
            }
        }
    };
    let target_none = match problem {
        Problem::Binary => train_counts.jumps(),
        Problem::Trinary => up.len().max(down.len()),
    };
    let test_target = test_counts.test_size(problem) - test_counts.jumps();
    let synth_count = up.len().max(down.len()) - up.len().min(down.len());

    let built: Vec<Result<(TrainReplicate, Vec<usize>)>> = par::map_range(config.count, |j| {
        let j = j as u64;
        let mut rng = stream(config.seed, &format!("undersample/{tag}"), j);
        let mut real: Vec<usize> = tr.iter().copied().filter(|&k| table.labels[k].is_jump()).collect();
        real.extend(undersample(&none, target_none, &mut rng)?);
        let synthetic = match &smote {
            Some(s) => s.sample(synth_count, &mut stream(config.seed, &format!("smote/{tag}"), j)),
            None => Vec::new(),
        };
        let mut trng = stream(config.seed, &format!("test-subsample/{tag}"), j);
        let mut test = test_jumps.clone();
        test.extend(undersample(&test_none, test_target, &mut trng)?);
        Ok((TrainReplicate { real, synthetic, synthetic_label }, test))
    });
    let mut train = Vec::with_capacity(config.count);
    let mut test = Vec::with_capacity(config.count);
    for b in built {
        let (a, t) = b?;
        train.push(a);
        test.push(t);
    }
    Ok(ReplicateSet { problem, scope, train_counts, test_counts, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InstanceKey;

    fn table(labels: &[(Label, usize, u32)]) -> InstanceTable {
        let mut t = InstanceTable::new(vec!["a".into(), "b".into()]);
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let mut k = 0u32;
        for &(label, interval, count) in labels {
            for _ in 0..count {
                let day = (k % 20) as usize;
                let key = InstanceKey { stock_id: "A".into(), date: d0 + chrono::Days::new(day as u64), day, interval };
                t.push(key, label, &[k as f64, (k * 7 % 13) as f64]);
                k += 1;
            }
        }
        t
    }

    #[test]
    fn binary_sizes() {
        let t = table(&[(Label::Up, 0, 60), (Label::Down, 0, 40), (Label::None, 0, 5000)]);
        let idx: Vec<usize> = (0..t.len()).collect();
        let r = build_replicates(&t, &idx, &idx, Problem::Binary, Scope::Comprehensive, &ReplicateConfig { count: 3, ..Default::default() }).unwrap();
        assert!(r.train.iter().all(|x| x.len() == 200 && x.synthetic.is_empty()));
        assert!(r.test.iter().all(|x| x.len() == 200));
        assert_ne!(r.train[0].real, r.train[1].real);
    }

    #[test]
    fn trinary_sizes() {
        let t = table(&[(Label::Up, 0, 60), (Label::Down, 0, 40), (Label::None, 0, 500)]);
        let idx: Vec<usize> = (0..t.len()).collect();
        let test: Vec<usize> = idx.iter().copied().filter(|k| k % 2 == 0).collect();
        let r = build_replicates(&t, &idx, &test, Problem::Trinary, Scope::Comprehensive, &ReplicateConfig { count: 2, ..Default::default() }).unwrap();
        assert!(r.train.iter().all(|x| x.len() == 180 && x.synthetic.len() == 20 && x.synthetic_label == Label::Down));
        assert_eq!((r.test_counts.up, r.test_counts.down), (30, 20));
        assert!(r.test.iter().all(|x| x.len() == 80));
    }

    #[test]
    fn empty_interval_scope_is_reported() {
        let t = table(&[(Label::Up, 3, 10), (Label::None, 4, 100)]);
        let idx: Vec<usize> = (0..t.len()).collect();
        let e = build_replicates(&t, &idx, &idx, Problem::Binary, Scope::Interval(4), &ReplicateConfig::default());
        assert!(matches!(e, Err(Error::EmptyScope(s)) if s == "ind5"));
    }

    #[test]
    fn date_split_by_fraction() {
        let t = table(&[(Label::None, 0, 40)]);
        let s = DateSplit::by_fraction(&t.keys.iter().map(|k| k.date).collect::<Vec<_>>(), 0.75).unwrap();
        let (a, b) = s.split(&t);
        assert_eq!((a.len(), b.len()), (30, 10));
    }
}
