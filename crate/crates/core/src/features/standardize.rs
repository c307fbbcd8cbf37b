use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Default number of prior days in the standardization window.
pub const DEFAULT_WINDOW: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// `x / median - 1`
    Divide,
    /// `x - median`
    Subtract,
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 0 { 0.5 * (sorted[m - 1] + sorted[m]) } else { sorted[m] }
}

/// Standardizes a day-major `days x n` series against the same interval of
/// the previous `window` days.
///
/// The median is taken over the last `window` available (non-missing) values
/// at that interval from strictly earlier days; fewer than `window` such
/// values leaves the output missing, as does a zero median in divide mode.
pub fn standardize_rolling(values: &[Option<f64>], n: usize, window: usize, mode: Mode) -> Vec<Option<f64>> {
    assert!(n > 0 && values.len() % n == 0);
    let days = values.len() / n;
    let mut out = vec![None; values.len()];
    let mut history: Vec<VecDeque<f64>> = vec![VecDeque::with_capacity(window + 1); n];
    let mut scratch = Vec::with_capacity(window);
    for t in 0..days {
        for i in 0..n {
            let h = &mut history[i];
            let x = values[t * n + i];
            if window > 0 && h.len() == window {
                if let Some(x) = x {
                    scratch.clear();
                    scratch.extend(h.iter().copied());
                    scratch.sort_by(f64::total_cmp);
                    let med = median(&scratch);
                    out[t * n + i] = match mode {
                        Mode::Divide if med == 0.0 => None,
                        Mode::Divide => Some(x / med - 1.0),
                        Mode::Subtract => Some(x - med),
                    };
                }
            }
            if let Some(x) = x {
                h.push_back(x);
                if h.len() > window {
                    h.pop_front();
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_zero_after_warm_up() {
        let v = vec![Some(3.5); 70 * 4];
        for mode in [Mode::Divide, Mode::Subtract] {
            let s = standardize_rolling(&v, 4, 60, mode);
            assert!(s[..60 * 4].iter().all(Option::is_none));
            assert!(s[60 * 4..].iter().all(|x| *x == Some(0.0)));
        }
    }

    #[test]
    fn doubled_value_divides_to_one() {
        let mut v: Vec<Option<f64>> = (0..60).map(|d| Some(1.0 + (d % 3) as f64)).collect();
        v.push(Some(4.0));
        let s = standardize_rolling(&v, 1, 60, Mode::Divide);
        assert_eq!(s[60], Some(1.0));
    }

    #[test]
    fn even_window_median_averages_middle_pair() {
        let v = vec![Some(1.0), Some(4.0), Some(2.0), Some(9.0), Some(10.0)];
        let s = standardize_rolling(&v, 1, 4, Mode::Subtract);
        assert_eq!(s[4], Some(10.0 - 3.0));
    }

    #[test]
    fn zero_median_is_missing_in_divide_mode() {
        let v = vec![Some(0.0), Some(0.0), Some(0.0), Some(5.0)];
        let s = standardize_rolling(&v, 1, 3, Mode::Divide);
        assert_eq!(s[3], None);
        assert_eq!(standardize_rolling(&v, 1, 3, Mode::Subtract)[3], Some(5.0));
    }

    #[test]
    fn missing_values_are_skipped_in_history() {
        let v = vec![Some(1.0), None, Some(3.0), Some(10.0)];
        let s = standardize_rolling(&v, 1, 2, Mode::Subtract);
        assert_eq!(s[2], None);
        assert_eq!(s[3], Some(8.0));
    }

    #[test]
    fn same_interval_locality() {
        let n = 3;
        let base: Vec<Option<f64>> = (0..30).map(|k| Some((k * 7 % 11) as f64)).collect();
        let mut other = base.clone();
        for t in 0..10 {
            other[t * n + 1] = Some(100.0 + t as f64);
        }
        let a = standardize_rolling(&base, n, 5, Mode::Subtract);
        let b = standardize_rolling(&other, n, 5, Mode::Subtract);
        for t in 0..10 {
            assert_eq!(a[t * n], b[t * n]);
            assert_eq!(a[t * n + 2], b[t * n + 2]);
        }
    }
}
