use chrono::{NaiveDate, NaiveTime};
use jumplab::dataset::{
    ClassCounts, EventKind, FilterConfig, InstanceKey, InstanceTable, Label, LimitRule, MarketEvent, Problem,
    ReplicateConfig, Scope, apply_filters, build_replicates,
};
use jumplab::features::FeatureConfig;
use jumplab::jump::DetectionConfig;
use jumplab::simulator::{SimConfig, simulate_series};
use jumplab::workflow::{assemble, featurize};
use proptest::prelude::*;

fn table(labels: &[Label], seed: u64) -> InstanceTable {
    let mut t = InstanceTable::new(vec!["a".into(), "b".into(), "c".into()]);
    let d0 = NaiveDate::from_ymd_opt(2015, 1, 5).unwrap();
    for (k, &l) in labels.iter().enumerate() {
        let h = (seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).rotate_left(17);
        let row = [(h % 1000) as f64 / 10.0, ((h >> 10) % 1000) as f64 / 7.0, k as f64];
        let key = InstanceKey { stock_id: "S".into(), date: d0 + chrono::Days::new(k as u64), day: k, interval: 3 };
        t.push(key, l, &row);
    }
    t
}

fn labels() -> impl Strategy<Value = Vec<Label>> {
    (2usize..12, 2usize..12, 60usize..90).prop_flat_map(|(u, d, n)| {
        let mut v = vec![Label::Up; u];
        v.extend(vec![Label::Down; d]);
        v.extend(vec![Label::None; n]);
        Just(v).prop_shuffle()
    })
}

fn on_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    p.iter().zip(a).zip(b).all(|((p, a), b)| *p >= a.min(*b) - 1e-9 && *p <= a.max(*b) + 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replicates_have_the_balanced_sizes(labels in labels(), seed in any::<u64>(), trinary in any::<bool>()) {
        let problem = if trinary { Problem::Trinary } else { Problem::Binary };
        let t = table(&labels, seed);
        let train: Vec<usize> = (0..t.len()).filter(|k| k % 2 == 0).collect();
        let test: Vec<usize> = (0..t.len()).filter(|k| k % 2 == 1).collect();
        let (tc, ec) = (ClassCounts::of(&t, &train), ClassCounts::of(&t, &test));
        prop_assume!(tc.up >= 2 && tc.down >= 2 && ec.jumps() > 0);
        let cfg = ReplicateConfig { count: 4, smote_k: 5, seed };
        let set = build_replicates(&t, &train, &test, problem, Scope::Comprehensive, &cfg).unwrap();
        let (m, n) = (tc.up, tc.down);
        let expect_train = match problem { Problem::Binary => 2 * (m + n), Problem::Trinary => 3 * m.max(n) };
        let expect_test = match problem {
            Problem::Binary => 2 * ec.jumps(),
            Problem::Trinary => ec.jumps() + ec.up.max(ec.down),
        };
        for (r, te) in set.train.iter().zip(&set.test) {
            prop_assert_eq!(r.len(), expect_train);
            let (_, y) = r.materialize(&t, problem);
            let mut per = vec![0usize; problem.classes()];
            y.iter().for_each(|&c| per[c] += 1);
            match problem {
                Problem::Binary => prop_assert_eq!(per, vec![m + n, m + n]),
                Problem::Trinary => prop_assert!(per.iter().all(|&c| c == m.max(n))),
            }
            prop_assert_eq!(te.len(), expect_test);
            prop_assert!(test.iter().filter(|&&k| t.labels[k].is_jump()).all(|k| te.contains(k)));
            prop_assert!(te.iter().all(|k| test.contains(k)));
            prop_assert!(r.real.iter().all(|k| train.contains(k)));
            for s in &r.synthetic {
                prop_assert_eq!(t.labels[s.base], r.synthetic_label);
                prop_assert_eq!(t.labels[s.neighbor], r.synthetic_label);
                prop_assert_ne!(s.base, s.neighbor);
                prop_assert!((0.0..1.0).contains(&s.delta));
                prop_assert!(on_segment(&s.point(&t), t.row(s.base), t.row(s.neighbor)));
            }
        }
    }
}

fn only(which: usize, full: &FilterConfig) -> FilterConfig {
    let mut f = FilterConfig { limit: None, halts: vec![], post_event_window: None, events: None, warm_up_days: 0 };
    match which {
        0 => f.limit = full.limit,
        1 => f.halts = full.halts.clone(),
        2 => (f.post_event_window, f.events) = (full.post_event_window, full.events.clone()),
        _ => f.warm_up_days = full.warm_up_days,
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn filters_commute(
        seed in any::<u64>(),
        halt in 0u64..60,
        halt_len in 0u64..8,
        warm in 0usize..15,
        fraction in 0.002f64..0.02,
        event_days in prop::collection::vec((0u64..60, 0usize..2), 0..6),
        order in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let sim = SimConfig { stocks: 2, days: 40, snapshots_per_interval: 2, jump_intensity: 1.0, seed, ..SimConfig::default() };
        let (series, _) = simulate_series(&sim).unwrap();
        let features = FeatureConfig { window: 5, ..FeatureConfig::default() };
        let (det, feats) = featurize(&series, &DetectionConfig::default(), &features).unwrap();
        let marks: Vec<_> = det.into_iter().flat_map(|d| d.marks).collect();
        let none = FilterConfig { limit: None, halts: vec![], post_event_window: None, events: None, warm_up_days: 0 };
        let raw = assemble(&series, &feats, &marks, &sim.calendar, &none).unwrap().table;
        prop_assume!(!raw.is_empty());

        let start = sim.start + chrono::Days::new(halt);
        let events: Vec<MarketEvent> = event_days
            .iter()
            .map(|&(d, s)| MarketEvent {
                stock_id: series[s].stock_id.clone(),
                date: sim.start + chrono::Days::new(d),
                time: NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
                kind: EventKind::Dividend,
            })
            .collect();
        let full = FilterConfig {
            limit: Some(LimitRule { fraction, tick: 0.01 }),
            halts: vec![(start, start + chrono::Days::new(halt_len))],
            post_event_window: Some(3),
            events: Some(events),
            warm_up_days: warm,
        };
        let mut together = raw.clone();
        apply_filters(&mut together, &series, &marks, &sim.calendar, &full).unwrap();
        let mut stepwise = raw.clone();
        for &w in &order {
            apply_filters(&mut stepwise, &series, &marks, &sim.calendar, &only(w, &full)).unwrap();
        }
        prop_assert_eq!(&together.keys, &stepwise.keys);
        prop_assert_eq!(together, stepwise);
    }
}
