use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use nowcast_core::evaluation::{coverage, log_error, mae, relative_metric, IntervalLevel, WaicAccumulator};
use nowcast_core::nowcast::WeekNowcast;
use nowcast_core::signals::{align, kendall_tau, log_regressor, CoefficientLabel, FillPolicy, RegressorSet, SignalKind, SignalSeries};
use nowcast_core::simulator::{simulate, SignalLaw, SimConfig};
use nowcast_core::triangle::{build_triangle, select_max_delay_from_histogram, DelayTruncation};
use nowcast_core::{CaseRecord, EpiWeek, LineList};
use proptest::prelude::*;

fn sunday() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 2).unwrap()
}

fn linelist(cases: &[(i64, i64)]) -> LineList {
    let base = EpiWeek::new(2012, 1).unwrap().start_date();
    LineList::new(
        cases
            .iter()
            .map(|&(n, d)| {
                let notified = base + Duration::days(n);
                CaseRecord::new(notified, notified + Duration::days(d)).unwrap()
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epi_week_changes_only_on_sundays(k in 0i64..3000, r in 0i64..7) {
        let week_start = sunday() + Duration::weeks(k);
        let w = EpiWeek::from_date(week_start + Duration::days(r));
        prop_assert_eq!(w, EpiWeek::from_date(week_start));
        prop_assert_eq!(EpiWeek::from_date(week_start + Duration::days(7)), w.succ());
        prop_assert_eq!(w.start_date(), week_start);
    }

    #[test]
    fn zero_delay_iff_same_week(n in 0i64..5000, d in 0i64..40) {
        let notified = sunday() + Duration::days(n);
        let c = CaseRecord::new(notified, notified + Duration::days(d)).unwrap();
        prop_assert_eq!(c.delay_weeks().unwrap() == 0, c.notification_week() == c.entry_week());
    }

    #[test]
    fn triangle_conserves_mass_and_only_fills_in(
        cases in prop::collection::vec((0i64..210, 0i64..90), 1..300),
        as_of_offset in 8i64..40,
        d_max in 0usize..10,
    ) {
        let l = linelist(&cases);
        let first = EpiWeek::new(2012, 1).unwrap();
        let as_of = first.offset(as_of_offset);
        let now = build_triangle(&l, as_of, first, d_max).unwrap();
        let next = build_triangle(&l, as_of.succ(), first, d_max).unwrap();
        for t in 0..now.n_weeks() {
            for tau in 0..now.n_delays() {
                if now.is_observed(t, tau) {
                    prop_assert!(next.is_observed(t, tau));
                    prop_assert_eq!(now.count(t, tau), next.count(t, tau));
                }
            }
            if now.is_complete(t) {
                let w = first.offset(t as i64);
                let retained = l
                    .records()
                    .iter()
                    .filter(|c| c.notification_week() == w && c.delay_weeks().unwrap() as usize <= d_max)
                    .count() as u64;
                prop_assert_eq!(now.observed_partial(t), retained);
            }
        }
    }

    #[test]
    fn selected_delay_respects_floor(hist in prop::collection::vec(0u64..50, 1..40), floor in 0u32..12) {
        prop_assume!(hist.iter().take(27).sum::<u64>() > 0);
        let cfg = DelayTruncation { floor, ..DelayTruncation::default() };
        let sel = select_max_delay_from_histogram(&hist, &cfg).unwrap();
        prop_assert!(sel.d_max >= floor);
        let retained: u64 = hist.iter().take(27).sum();
        let within: u64 = hist.iter().take(floor as usize + 1).sum();
        if within as f64 / retained as f64 >= cfg.coverage {
            prop_assert_eq!(sel.d_max, floor);
        }
    }

    #[test]
    fn kendall_is_bounded_and_rank_invariant(pairs in prop::collection::vec((0i32..8, 0i32..8), 2..40)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let (tau, _) = kendall_tau(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&tau));
        let fx: Vec<f64> = x.iter().map(|v| (v / 3.0).exp() + v.powi(3)).collect();
        let gy: Vec<f64> = y.iter().map(|v| (1.0 + v).ln()).collect();
        prop_assert_eq!(kendall_tau(&fx, &gy).unwrap().0, tau);
    }

    #[test]
    fn log_regressor_is_increasing_and_finite(mut values in prop::collection::vec(0.0f64..1e6, 2..30), prob in any::<bool>()) {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let kind = if prob { SignalKind::Probability } else { SignalKind::Count };
        if prob {
            values.iter_mut().for_each(|v| *v /= 1e6);
            prop_assume!(values.iter().any(|v| *v > 0.0));
        }
        let first = EpiWeek::new(2014, 1).unwrap();
        let map: BTreeMap<_, _> = values.iter().enumerate().map(|(i, v)| (first.offset(i as i64), *v)).collect();
        let s = SignalSeries::new("twitter", kind, map).unwrap();
        let l = log_regressor(&s, None).unwrap();
        let out: Vec<f64> = l.values().values().copied().collect();
        prop_assert!(out.iter().all(|v| v.is_finite()));
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));

        let last = first.offset(values.len() as i64 - 1);
        let m = align(&RegressorSet::new(vec![(l.clone(), CoefficientLabel::Delta)]), first, last, FillPolicy::Fail).unwrap();
        for (row, v) in m.iter().zip(&out) {
            prop_assert_eq!(row[0].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn mae_and_relative_metric_identities(pairs in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4), 1..50), r in 1e-6f64..1e6) {
        prop_assert_eq!(relative_metric(r, r).unwrap(), 1.0);
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = mae(&p, &t).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m == 0.0, p == t);
        prop_assert_eq!(mae(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn log_error_is_antisymmetric(y in 1e-3f64..1e5, a in 1e-3f64..1e3) {
        let e = log_error(a * y, y).unwrap();
        prop_assert!((e + log_error(y, a * y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn waic_penalty_nonnegative_and_order_free(
        ll in prop::collection::vec(prop::collection::vec(-50.0f64..0.0, 6), 2..30),
        rot in 0usize..6,
    ) {
        let parts = |rows: &[Vec<f64>]| {
            let mut acc = WaicAccumulator::new(rows[0].len());
            rows.iter().for_each(|r| acc.push(r).unwrap());
            acc.finish_parts().unwrap()
        };
        let base = parts(&ll);
        prop_assert!(base.penalty >= 0.0);
        let mut draws = ll.clone();
        draws.reverse();
        let len = draws.len();
        draws.rotate_left(rot % len);
        let cells: Vec<Vec<f64>> = ll
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.rotate_left(rot);
                r
            })
            .collect();
        for other in [parts(&draws), parts(&cells)] {
            prop_assert!((other.waic - base.waic).abs() <= 1e-9 * base.waic.abs().max(1.0));
        }
    }

    #[test]
    fn wider_intervals_cover_more(
        weeks in prop::collection::vec((prop::collection::vec(0u64..500, 20..60), 0u64..600), 1..20),
    ) {
        let w0 = EpiWeek::new(2016, 1).unwrap();
        let results: Vec<WeekNowcast> = weeks
            .iter()
            .enumerate()
            .map(|(i, (s, _))| WeekNowcast::from_samples(w0.offset(i as i64), 0, s.clone()))
            .collect();
        let truths: Vec<f64> = weeks.iter().map(|w| w.1 as f64).collect();
        let c80 = coverage(&results, &truths, IntervalLevel::P80, None).unwrap().all;
        let c95 = coverage(&results, &truths, IntervalLevel::P95, None).unwrap().all;
        prop_assert!(c80 <= c95);
    }

    #[test]
    fn simulated_rows_sum_to_truth(seed in 0u64..1000) {
        let d = simulate(&SimConfig { n_weeks: 60, seed, ..SimConfig::default() }).unwrap();
        for (row, truth) in d.matrix.iter().zip(&d.truths) {
            prop_assert_eq!(row.iter().sum::<u64>(), *truth);
        }
        prop_assert_eq!(d.linelist.len() as u64, d.truths.iter().sum::<u64>());
    }
}

#[test]
fn simulated_signal_coefficient_is_recoverable() {
    let d = simulate(&SimConfig {
        n_weeks: 320,
        amplitudes: vec![1500.0, 600.0, 2500.0, 900.0, 2000.0, 1200.0, 3000.0],
        signals: vec![SignalLaw { name: "twitter".into(), coefficient: 0.8, intercept: 0.3, noise_sd: 0.2, lag: 0 }],
        seed: 31,
        ..SimConfig::default()
    })
    .unwrap();
    let s = d.signal("twitter").unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = d
        .truths
        .iter()
        .enumerate()
        .map(|(t, &n)| ((n as f64 + 1.0).ln(), s.get(d.first_week().offset(t as i64)).unwrap().ln()))
        .unzip();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 0.8).abs() <= 0.16, "slope {slope}");
}

#[test]
fn same_seed_same_world() {
    let cfg = SimConfig { n_weeks: 80, seed: 5, ..SimConfig::default() };
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    assert_ne!(simulate(&cfg).unwrap(), simulate(&SimConfig { seed: 6, ..cfg.clone() }).unwrap());
}
