use super::panel::ReturnPanel;
use crate::{Error, Result};

/// 99% quantile of the chi-squared distribution with one degree of freedom.
pub const CHI2_99: f64 = 6.635;
const SHORTH_SCALE: f64 = 0.741;
const WSD_SCALE: f64 = 1.081;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsdConfig {
    /// Lower bound for a factor after normalization.
    pub epsilon: f64,
    /// Estimate one factor row per weekday instead of a single row.
    pub by_weekday: bool,
}

impl Default for WsdConfig {
    fn default() -> Self {
        Self { epsilon: 1e-4, by_weekday: false }
    }
}

/// Intraday periodicity factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodicity {
    /// One row of `n` factors, or seven rows indexed by weekday.
    rows: Vec<Vec<f64>>,
    by_weekday: bool,
    /// `(row, interval)` pairs floored at epsilon.
    pub floored: Vec<(usize, usize)>,
}

impl Periodicity {
    pub fn flat(n: usize) -> Self {
        Self { rows: vec![vec![1.0; n]], by_weekday: false, floored: Vec::new() }
    }

    pub fn factors(&self) -> &[f64] {
        &self.rows[0]
    }

    pub fn weekday_factors(&self, weekday: usize) -> &[f64] {
        if self.by_weekday { &self.rows[weekday] } else { &self.rows[0] }
    }

    /// Factor for day `t`, interval `i` of `panel`.
    pub fn factor(&self, panel: &ReturnPanel, t: usize, i: usize) -> f64 {
        self.weekday_factors(panel.weekday(t))[i]
    }
}

/// Length of the shortest half of a sample, scaled to a standard deviation.
fn shorth(sorted: &[f64]) -> f64 {
    let h = sorted.len() / 2 + 1;
    if sorted.len() < 2 {
        return 0.0;
    }
    let width = (0..=sorted.len() - h)
        .map(|l| sorted[l + h - 1] - sorted[l])
        .fold(f64::INFINITY, f64::min);
    SHORTH_SCALE * width
}

fn normalize(raw: &mut [f64]) -> bool {
    let ms = raw.iter().map(|f| f * f).sum::<f64>() / raw.len() as f64;
    if !(ms > 0.0) || !ms.is_finite() {
        return false;
    }
    let s = ms.sqrt();
    raw.iter_mut().for_each(|f| *f /= s);
    true
}

fn estimate_row(per_interval: &[Vec<f64>], epsilon: f64, floored: &mut Vec<usize>) -> Result<Vec<f64>> {
    let mut pre: Vec<f64> = per_interval
        .iter()
        .map(|z| {
            let mut s = z.clone();
            s.sort_by(f64::total_cmp);
            shorth(&s)
        })
        .collect();
    if !normalize(&mut pre) {
        return Err(Error::InsufficientData("periodicity: all standardized returns are zero".into()));
    }
    let mut wsd: Vec<f64> = per_interval
        .iter()
        .zip(&pre)
        .map(|(z, &p)| {
            let (mut num, mut den) = (0.0, 0.0);
            for &x in z {
                let keep = if p > 0.0 { (x / p).powi(2) <= CHI2_99 } else { x == 0.0 };
                if keep {
                    num += x * x;
                    den += 1.0;
                }
            }
            if den > 0.0 { (WSD_SCALE * num / den).sqrt() } else { 0.0 }
        })
        .collect();
    if !normalize(&mut wsd) {
        return Err(Error::InsufficientData("periodicity: all weighted deviations are zero".into()));
    }
    for (i, f) in wsd.iter_mut().enumerate() {
        if *f < epsilon {
            *f = epsilon;
            floored.push(i);
        }
    }
    normalize(&mut wsd);
    Ok(wsd)
}

/// Weighted-standard-deviation periodicity estimate.
///
/// Returns are standardized by their day's volatility `sigma`; days with no
/// (or zero) volatility estimate are skipped.
pub fn wsd_periodicity(panel: &ReturnPanel, sigma: &[Option<f64>], config: &WsdConfig) -> Result<Periodicity> {
    let n = panel.intervals();
    let rows = if config.by_weekday { 7 } else { 1 };
    let mut samples = vec![vec![Vec::new(); n]; rows];
    for (t, s) in sigma.iter().enumerate().take(panel.days()) {
        let Some(s) = s.filter(|s| *s > 0.0) else { continue };
        let row = if config.by_weekday { panel.weekday(t) } else { 0 };
        for (i, &r) in panel.day(t).iter().enumerate() {
            samples[row][i].push(r / s);
        }
    }
    if samples.iter().all(|row| row[0].is_empty()) {
        return Err(Error::InsufficientData(format!(
            "{}: no day has a volatility estimate",
            panel.stock_id
        )));
    }
    let mut out = Vec::with_capacity(rows);
    let mut floored = Vec::new();
    for (row, per_interval) in samples.iter().enumerate() {
        if per_interval[0].is_empty() {
            out.push(vec![1.0; n]);
            continue;
        }
        let mut fl = Vec::new();
        out.push(estimate_row(per_interval, config.epsilon, &mut fl)?);
        floored.extend(fl.into_iter().map(|i| (row, i)));
    }
    if !floored.is_empty() {
        log::warn!("{}: {} periodicity factors floored at {}", panel.stock_id, floored.len(), config.epsilon);
    }
    Ok(Periodicity { rows: out, by_weekday: config.by_weekday, floored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_panel(days: usize, n: usize, scale: impl Fn(usize) -> f64, seed: u64) -> ReturnPanel {
        let mut rng = stream(seed, "wsd-test", 0);
        let rows: Vec<Vec<f64>> = (0..days)
            .map(|_| {
                (0..n)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        0.001 * scale(i) * z
                    })
                    .collect()
            })
            .collect();
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        ReturnPanel::from_rows("A", (0..days).map(|k| d0 + chrono::Days::new(k as u64)).collect(), &rows)
    }

    #[test]
    fn homogeneous_factors_near_one() {
        let p = gaussian_panel(400, 24, |_| 1.0, 1);
        let sigma = vec![Some(0.001); 400];
        let f = wsd_periodicity(&p, &sigma, &WsdConfig::default()).unwrap();
        let ms = f.factors().iter().map(|x| x * x).sum::<f64>() / 24.0;
        assert!((ms - 1.0).abs() < 1e-12);
        assert!(f.factors().iter().all(|x| (x - 1.0).abs() < 0.15));
    }

    #[test]
    fn recovers_scaled_first_interval() {
        let p = gaussian_panel(500, 24, |i| if i == 0 { 3.0 } else { 1.0 }, 2);
        let sigma = vec![Some(0.001); 500];
        let f = wsd_periodicity(&p, &sigma, &WsdConfig::default()).unwrap();
        let flat = f.factors()[1..].iter().sum::<f64>() / 23.0;
        let ratio = f.factors()[0] / flat;
        assert!((ratio - 3.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn zero_interval_is_floored_and_flagged() {
        let mut p = gaussian_panel(200, 8, |_| 1.0, 3);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|t| {
                let mut r = p.day(t).to_vec();
                r[2] = 0.0;
                r
            })
            .collect();
        p = ReturnPanel::from_rows("A", p.dates.clone(), &rows);
        let f = wsd_periodicity(&p, &vec![Some(0.001); 200], &WsdConfig::default()).unwrap();
        assert_eq!(f.floored, vec![(0, 2)]);
        assert!(f.factors().iter().all(|x| *x > 0.0));
        let ms = f.factors().iter().map(|x| x * x).sum::<f64>() / 8.0;
        assert!((ms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weekday_mode_gives_row_per_weekday() {
        let p = gaussian_panel(300, 8, |_| 1.0, 4);
        let cfg = WsdConfig { by_weekday: true, ..WsdConfig::default() };
        let f = wsd_periodicity(&p, &vec![Some(0.001); 300], &cfg).unwrap();
        for wd in 0..7 {
            let ms = f.weekday_factors(wd).iter().map(|x| x * x).sum::<f64>() / 8.0;
            assert!((ms - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shorth_of_known_sample() {
        let s = [1.0, 2.0, 2.5, 3.0, 10.0];
        assert!((shorth(&s) - SHORTH_SCALE * 1.0).abs() < 1e-15);
    }
}
