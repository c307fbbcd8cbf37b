use super::panel::ReturnPanel;

/// Default number of prior days in the volatility window.
pub const DEFAULT_LOOKBACK: usize = 5;

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Per-interval MedRV scale of a chained return window.
///
/// Returns `None` when the window holds fewer than three returns.
pub fn med_rv_window(window: &[f64]) -> Option<f64> {
    let big_n = window.len();
    if big_n < 3 {
        return None;
    }
    let sum: f64 = window
        .windows(3)
        .map(|w| {
            let m = median3(w[0].abs(), w[1].abs(), w[2].abs());
            m * m
        })
        .sum();
    let nf = big_n as f64;
    let c_med = std::f64::consts::PI / (6.0 - 4.0 * 3f64.sqrt() + std::f64::consts::PI);
    Some((c_med * (nf / (nf - 2.0)) * sum / (nf - 2.0)).sqrt())
}

/// MedRV for day `t` from the `k` days strictly before it.
pub fn med_rv(panel: &ReturnPanel, t: usize, k: usize) -> Option<f64> {
    if k == 0 || t < k || t > panel.days() {
        return None;
    }
    med_rv_window(panel.window(t - k, t))
}

/// [`med_rv`] for every day of the panel.
pub fn med_rv_series(panel: &ReturnPanel, k: usize) -> Vec<Option<f64>> {
    (0..panel.days()).map(|t| med_rv(panel, t, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn panel(rows: Vec<Vec<f64>>) -> ReturnPanel {
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let dates = (0..rows.len()).map(|k| d0 + chrono::Days::new(k as u64)).collect();
        ReturnPanel::from_rows("A", dates, &rows)
    }

    #[test]
    fn constant_series_closed_form() {
        let (n, k, c) = (48usize, 5usize, -0.003);
        let p = panel(vec![vec![c; n]; k + 1]);
        let nk = (n * k) as f64;
        let c_med = std::f64::consts::PI / (6.0 - 4.0 * 3f64.sqrt() + std::f64::consts::PI);
        let expect = c.abs() * ((nk / (nk - 2.0)) * c_med * ((nk - 2.0) / (nk - 2.0))).sqrt();
        let got = med_rv(&p, k, k).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn zero_returns_give_zero() {
        let p = panel(vec![vec![0.0; 48]; 6]);
        assert_eq!(med_rv(&p, 5, 5), Some(0.0));
    }

    #[test]
    fn insufficient_history_is_unavailable() {
        let p = panel(vec![vec![0.001; 48]; 6]);
        assert!(med_rv(&p, 4, 5).is_none());
        assert!(med_rv(&p, 5, 5).is_some());
        let s = med_rv_series(&p, 5);
        assert_eq!(s.iter().filter(|x| x.is_some()).count(), 1);
    }

    #[test]
    fn isolated_outlier_does_not_move_estimate() {
        let base = vec![vec![0.002; 16]; 3];
        let mut spiked = base.clone();
        spiked[1][7] = 0.5;
        let a = med_rv(&panel([base, vec![vec![0.0; 16]]].concat()), 3, 3).unwrap();
        let b = med_rv(&panel([spiked, vec![vec![0.0; 16]]].concat()), 3, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brute_force_medians() {
        let w = [0.1, -0.4, 0.2, 0.05, -0.3];
        let meds = [0.2f64, 0.2, 0.2];
        let s: f64 = meds.iter().map(|m| m * m).sum();
        let c_med = std::f64::consts::PI / (6.0 - 4.0 * 3f64.sqrt() + std::f64::consts::PI);
        let expect = (c_med * (5.0 / 3.0) * s / 3.0).sqrt();
        assert!((med_rv_window(&w).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn chains_across_day_boundary() {
        let p = panel(vec![vec![0.0, 0.0, 0.0, 0.3], vec![0.3, 0.3, 0.0, 0.0], vec![0.0; 4]]);
        let v = med_rv(&p, 2, 2).unwrap();
        assert!(v > 0.0);
    }
}
