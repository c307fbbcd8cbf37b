use chrono::{NaiveDate, TimeDelta};
use jumplab::features::{Mode, Ohlcv, compute_technical, liquidity_series, standardize_rolling, technical_names};
use jumplab::market_data::{Level2Snapshot, Side, TradingCalendar, aggregate_intervals};
use proptest::prelude::*;

const LAGS: [usize; 3] = [3, 5, 8];

fn ohlcv() -> impl Strategy<Value = Ohlcv> {
    prop::collection::vec((-30i32..=30, -30i32..=30, 0u32..20, 0u32..20, 0u32..4), 20..120).prop_map(|steps| {
        let mut o = Ohlcv::default();
        let mut cents = 2000i32;
        for (open_gap, step, up, down, vol) in steps {
            let open = (cents + open_gap).max(100);
            cents = (cents + step).max(100);
            let hi = open.max(cents) + up as i32;
            let lo = (open.min(cents) - down as i32).max(50);
            o.open.push(open as f64 / 100.0);
            o.close.push(cents as f64 / 100.0);
            o.high.push(hi as f64 / 100.0);
            o.low.push(lo as f64 / 100.0);
            o.volume.push(vol as f64 * 100.0);
        }
        o
    })
}

fn column<'a>(cols: &'a [Vec<Option<f64>>], name: &str) -> &'a [Option<f64>] {
    &cols[technical_names(&LAGS).iter().position(|n| n == name).unwrap()]
}

fn snapshots() -> impl Strategy<Value = Vec<Level2Snapshot>> {
    prop::collection::vec((0u32..120, 900u32..1100, 0u64..4, 1u32..5, 1u32..5, 0u32..30, 0u32..30, 0u8..3), 1..200)
        .prop_map(|mut raw| {
            raw.sort_by_key(|r| r.0);
            let day = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap().and_hms_opt(9, 30, 0).unwrap();
            raw.into_iter()
                .map(|(minute, cents, trades, bg, ag, bv, av, side)| {
                    let p = cents as f64 / 100.0;
                    Level2Snapshot {
                        stock_id: "S".into(),
                        timestamp: day + TimeDelta::minutes(minute as i64 / 2) + TimeDelta::seconds(30 * (minute as i64 % 2)),
                        last_price: p,
                        trades,
                        volume: trades as f64 * 100.0,
                        bid_prices: vec![p - bg as f64 / 100.0],
                        ask_prices: vec![p + ag as f64 / 100.0],
                        bid_volumes: vec![bv as f64 * 100.0],
                        ask_volumes: vec![av as f64 * 100.0],
                        aggressor: [Side::Buy, Side::Sell, Side::Unknown][side as usize],
                    }
                })
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ema_stays_within_the_running_range(x in ohlcv()) {
        let cols = compute_technical(&x, &LAGS);
        for q in LAGS {
            let ema = column(&cols, &format!("EMA({q})"));
            for (k, v) in ema.iter().enumerate() {
                if let Some(v) = v {
                    let seen = &x.close[..=k];
                    let lo = seen.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9, "EMA({q})[{k}] = {v} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn stochastic_lines_are_three_point_means(x in ohlcv()) {
        let cols = compute_technical(&x, &LAGS);
        for q in LAGS {
            let fk = column(&cols, &format!("fK({q})"));
            let fd = column(&cols, &format!("fD({q})"));
            let sd = column(&cols, &format!("sD({q})"));
            for k in 0..x.close.len() {
                if let Some(v) = fk[k] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                for (inner, outer) in [(fk, fd), (fd, sd)] {
                    if let Some(v) = outer[k] {
                        let m = (inner[k - 2].unwrap() + inner[k - 1].unwrap() + inner[k].unwrap()) / 3.0;
                        prop_assert!((v - m).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn volume_indicators_follow_their_recursions(x in ohlcv()) {
        let cols = compute_technical(&x, &LAGS);
        let (obv, nvi, pvi) = (column(&cols, "OBV"), column(&cols, "NVI"), column(&cols, "PVI"));
        let (c, v) = (&x.close, &x.volume);
        let telescoped: f64 = (1..c.len()).map(|k| v[k] * (c[k] - c[k - 1]).signum() * f64::from(c[k] != c[k - 1])).sum();
        prop_assert_eq!(obv.last().unwrap().unwrap(), telescoped);
        prop_assert_eq!(obv[0], Some(0.0));
        for k in 1..c.len() {
            let nvi_moved = nvi[k] != nvi[k - 1];
            let pvi_moved = pvi[k] != pvi[k - 1];
            prop_assert!(!(nvi_moved && pvi_moved));
            if v[k] == v[k - 1] {
                prop_assert!(!nvi_moved && !pvi_moved);
            }
            if nvi_moved {
                prop_assert!(v[k] < v[k - 1]);
            }
            if pvi_moved {
                prop_assert!(v[k] > v[k - 1]);
            }
        }
    }

    #[test]
    fn liquidity_measures_respect_their_bounds(snaps in snapshots()) {
        let cal = TradingCalendar::parse("09:30-10:30", 300).unwrap();
        prop_assume!(snaps.iter().any(|s| cal.interval_of(s.timestamp.time()).is_some()));
        let agg = aggregate_intervals("S", &snaps, &cal).unwrap();
        for lv in liquidity_series(&agg.series).unwrap() {
            prop_assert!((-2.0..=2.0).contains(&lv.oi), "oi {}", lv.oi);
            prop_assert!((-2.0..=2.0).contains(&lv.di), "di {}", lv.di);
            for v in [lv.qs, lv.es, lv.rv, lv.k, lv.v, lv.s] {
                prop_assert!(v >= 0.0 && v.is_finite());
            }
            prop_assert_eq!(lv.cum_r, None);
        }
    }

    #[test]
    fn standardization_only_sees_earlier_days_at_the_same_interval(
        raw in prop::collection::vec(prop::option::weighted(0.9, 1.0f64..100.0), 4 * 40),
        t in 20usize..40,
        i in 0usize..4,
        other in 0usize..160,
        bump in 1.0f64..50.0,
    ) {
        let n = 4;
        let base = standardize_rolling(&raw, n, 10, Mode::Divide);
        let (ot, oi) = (other / n, other % n);
        prop_assume!(oi != i || ot > t);
        let mut moved = raw.clone();
        moved[other] = Some(moved[other].unwrap_or(1.0) + bump);
        let after = standardize_rolling(&moved, n, 10, Mode::Divide);
        prop_assert_eq!(base[t * n + i], after[t * n + i]);
    }
}
