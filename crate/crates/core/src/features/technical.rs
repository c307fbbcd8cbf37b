use super::standardize::Mode;
use crate::market_data::IntervalBar;

pub const DEFAULT_LAGS: [usize; 4] = [5, 10, 20, 30];

pub const LAGGED: [&str; 12] = ["PROC", "VROC", "MA", "EMA", "BIAS", "EBIAS", "OSCP", "EOSCP", "fK", "fD", "sD", "CCI"];
pub const LAG_FREE: [&str; 6] = ["ADO", "TR", "PVT", "OBV", "NVI", "PVI"];

/// Indicator columns in attribute order: each lagged indicator at every lag,
/// then the lag-free ones.
pub fn technical_names(lags: &[usize]) -> Vec<String> {
    let mut names: Vec<String> =
        LAGGED.iter().flat_map(|n| lags.iter().map(move |q| format!("{n}({q})"))).collect();
    names.extend(LAG_FREE.iter().map(|s| s.to_string()));
    names
}

pub fn technical_modes(lags: &[usize]) -> Vec<Mode> {
    let divide = |n: &str| matches!(n, "MA" | "EMA" | "TR" | "PVT" | "OBV" | "NVI" | "PVI");
    let mut modes: Vec<Mode> = LAGGED
        .iter()
        .flat_map(|n| {
            let m = if divide(n) { Mode::Divide } else { Mode::Subtract };
            std::iter::repeat_n(m, lags.len())
        })
        .collect();
    modes.extend(LAG_FREE.iter().map(|n| if divide(n) { Mode::Divide } else { Mode::Subtract }));
    modes
}

/// OHLCV view of a bar chain.
#[derive(Debug, Clone, Default)]
pub struct Ohlcv {
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
}

impl Ohlcv {
    pub fn from_bars<'a>(bars: impl IntoIterator<Item = &'a IntervalBar>) -> Self {
        let mut o = Ohlcv::default();
        for b in bars {
            o.open.push(b.open);
            o.high.push(b.high);
            o.low.push(b.low);
            o.close.push(b.close);
            o.volume.push(b.volume);
        }
        o
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Unevaluated sum `hi + lo` carrying about twice the precision of `f64`.
#[derive(Debug, Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn quotient(a: f64, b: f64) -> Self {
        let hi = a / b;
        Dd(hi, (-hi).mul_add(b, a) / b)
    }

    fn add(self, x: f64) -> Self {
        let s = self.0 + x;
        let bb = s - self.0;
        let e = (self.0 - (s - bb)) + (x - bb);
        let hi = s + (e + self.1);
        Dd(hi, (e + self.1) - (hi - s))
    }

    fn mul(self, o: Dd) -> Self {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        let hi = p + e;
        Dd(hi, e - (hi - p))
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

fn mean3(x: &[Option<f64>], k: usize) -> Option<f64> {
    if k < 2 {
        return None;
    }
    Some((x[k - 2]? + x[k - 1]? + x[k]?) / 3.0)
}

struct Lagged {
    proc_: Vec<Option<f64>>,
    vroc: Vec<Option<f64>>,
    ma: Vec<Option<f64>>,
    ema: Vec<Option<f64>>,
    bias: Vec<Option<f64>>,
    ebias: Vec<Option<f64>>,
    oscp: Vec<Option<f64>>,
    eoscp: Vec<Option<f64>>,
    fk: Vec<Option<f64>>,
    fd: Vec<Option<f64>>,
    sd: Vec<Option<f64>>,
    cci: Vec<Option<f64>>,
}

fn lagged(x: &Ohlcv, q: usize) -> Lagged {
    let len = x.len();
    let c = &x.close;
    let v = &x.volume;
    let mut out = Lagged {
        proc_: vec![None; len],
        vroc: vec![None; len],
        ma: vec![None; len],
        ema: vec![None; len],
        bias: vec![None; len],
        ebias: vec![None; len],
        oscp: vec![None; len],
        eoscp: vec![None; len],
        fk: vec![None; len],
        fd: vec![None; len],
        sd: vec![None; len],
        cci: vec![None; len],
    };
    if q == 0 {
        return out;
    }
    let qf = q as f64;
    let a = Dd::quotient(2.0, qf + 1.0);
    let b = Dd::quotient(qf - 1.0, qf + 1.0);
    // Differences of nearby prices are exact, so ratios are formed from
    // them rather than from differences of averages. The close-minus-EMA
    // gap is carried in double-double precision.
    let mut gap = Dd(0.0, 0.0);
    for k in 0..len {
        if k >= q {
            out.proc_[k] = ratio(c[k] - c[k - q], c[k - q]);
            out.vroc[k] = ratio(v[k] - v[k - q], v[k - q]);
        }
        if k + 1 < q {
            continue;
        }
        let w = k + 1 - q..k + 1;
        let ma = c[w.clone()].iter().sum::<f64>() / qf;
        out.ma[k] = Some(ma);
        let above = c[w.clone()].iter().map(|cj| c[k] - cj).sum::<f64>();
        out.bias[k] = ratio(above / qf, ma);
        if k >= q {
            let pm = out.ma[k - 1].expect("set on previous step");
            let pe = out.ema[k - 1].expect("set on previous step");
            out.oscp[k] = ratio((c[k] - c[k - q]) / qf, pm);
            let step = gap.add(c[k] - c[k - 1]);
            gap = step.mul(b);
            let ema = Dd(-gap.0, -gap.1).add(c[k]).value();
            out.ema[k] = Some(ema);
            out.eoscp[k] = ratio(step.mul(a).value(), pe);
            out.ebias[k] = ratio(gap.value(), ema);
        } else {
            gap = Dd::quotient(above, qf);
            out.ema[k] = Some(ma);
            out.ebias[k] = ratio(gap.value(), ma);
        }
        let hh = x.high[w.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ll = x.low[w.clone()].iter().copied().fold(f64::INFINITY, f64::min);
        out.fk[k] = (hh != ll).then(|| (c[k] - ll) / (hh - ll));
        out.fd[k] = mean3(&out.fk, k);
        out.sd[k] = mean3(&out.fd, k);
        // Typical prices as offsets from the current close; the common
        // factor 1/3 cancels in the index.
        let t: Vec<f64> = w.map(|j| (x.high[j] - c[k]) + (x.low[j] - c[k]) + (c[j] - c[k])).collect();
        let sm = t.iter().sum::<f64>() / qf;
        let g = t.iter().map(|tj| (tj - sm).abs()).sum::<f64>() / qf;
        out.cci[k] = (g != 0.0).then(|| (t[q - 1] - sm) / (0.015 * g));
    }
    out
}

/// All indicators over one chain, column-major in [`technical_names`] order.
pub fn compute_technical(x: &Ohlcv, lags: &[usize]) -> Vec<Vec<Option<f64>>> {
    let len = x.len();
    let per_lag: Vec<Lagged> = lags.iter().map(|&q| lagged(x, q)).collect();
    let mut cols: Vec<Vec<Option<f64>>> = Vec::with_capacity(12 * lags.len() + 6);
    macro_rules! push_all {
        ($($field:ident),*) => {
            $( for l in &per_lag { cols.push(l.$field.clone()); } )*
        };
    }
    push_all!(proc_, vroc, ma, ema, bias, ebias, oscp, eoscp, fk, fd, sd, cci);

    let (o, h, l, c, v) = (&x.open, &x.high, &x.low, &x.close, &x.volume);
    let ado = (0..len).map(|k| ratio((h[k] - o[k]) - (c[k] - l[k]), 2.0 * (h[k] - l[k]))).collect();
    let tr = (0..len)
        .map(|k| (k >= 1).then(|| (h[k] - l[k]).max(l[k] - c[k - 1]).max(h[k] - c[k - 1])))
        .collect();
    let mut pvt = Vec::with_capacity(len);
    let mut obv = Vec::with_capacity(len);
    let mut nvi = Vec::with_capacity(len);
    let mut pvi = Vec::with_capacity(len);
    let (mut p, mut ob, mut ni, mut pi) = (0.0, 0.0, 1.0, 1.0);
    for k in 0..len {
        if k >= 1 {
            p += (c[k] - c[k - 1]) / c[k - 1] * v[k];
            if c[k] > c[k - 1] {
                ob += v[k];
            } else if c[k] < c[k - 1] {
                ob -= v[k];
            }
            if v[k] < v[k - 1] {
                ni *= c[k] / c[k - 1];
            }
            if v[k] > v[k - 1] {
                pi *= c[k] / c[k - 1];
            }
        }
        pvt.push(Some(p));
        obv.push(Some(ob));
        nvi.push(Some(ni));
        pvi.push(Some(pi));
    }
    cols.extend([ado, tr, pvt, obv, nvi, pvi]);
    cols
}
