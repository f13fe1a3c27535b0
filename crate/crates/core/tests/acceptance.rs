//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::time::Instant;

use nowcast_core::delays::delay_completeness;
use nowcast_core::evaluation::{
    build_report, epidemic_threshold, relative_metric, rolling_evaluate, MemConfig, ReportConfig, RollingConfig,
    RollingResult, TrainingWindow,
};
use nowcast_core::model::{
    fit, log_posterior, log_posterior_gradient, nb_log_pmf, sample_nb, FitConfig, Hyperparameters, LatentState,
    ModelData, ModelSpec, ModelVariant, Priors,
};
use nowcast_core::nowcast::nowcast;
use nowcast_core::signals::{log_regressor, CoefficientLabel, RegressorSet};
use nowcast_core::simulator::{simulate, DelayRegime, SignalLaw, SimConfig, SyntheticDataset};
use nowcast_core::triangle::build_triangle;
use nowcast_core::{EpiWeek, ReportingTriangle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- scenarios

/// Delay law with mean about 3 weeks and no mass past 8.
fn delay_law() -> Vec<f64> {
    vec![0.12, 0.18, 0.18, 0.15, 0.12, 0.09, 0.07, 0.05, 0.04]
}

fn calibration_world() -> SyntheticDataset {
    simulate(&SimConfig {
        n_weeks: 304,
        amplitudes: vec![1200.0, 2500.0, 800.0, 3000.0, 1500.0, 2000.0],
        baseline: 150.0,
        dispersion: 25.0,
        delay_regimes: vec![DelayRegime { start: 0, probabilities: delay_law() }],
        signals: vec![SignalLaw {
            name: "twitter".into(),
            coefficient: 0.8,
            intercept: 0.5,
            noise_sd: 0.1,
            lag: 0,
        }],
        seed: 2024,
        ..SimConfig::default()
    })
    .expect("valid scenario")
}

fn rolling(d: &SyntheticDataset, variant: ModelVariant, regressors: &RegressorSet, n_samples: usize) -> RollingResult {
    let start = d.first_week().offset(104);
    let mut cfg = RollingConfig::new(start, d.last_onset_week());
    cfg.window = TrainingWindow::TwoYears;
    cfg.fit = FitConfig { n_samples, seed: 17, ..FitConfig::default() };
    cfg.data_end = Some(d.final_week());
    rolling_evaluate(variant, &d.linelist, regressors, &cfg).expect("rolling evaluation")
}

fn twitter_regressors(d: &SyntheticDataset) -> RegressorSet {
    let s = d.signal("twitter").expect("simulated signal");
    RegressorSet::new(vec![(log_regressor(s, None).unwrap(), CoefficientLabel::Delta)])
}

// ---------------------------------------------------------------- criteria

fn c1_metric_arithmetic() -> Outcome {
    let a = relative_metric(267.2, 425.0).unwrap();
    let b = relative_metric(215.4, 267.2).unwrap();
    let ok = format!("{a:.3}") == "0.629" && format!("{b:.3}") == "0.806";
    outcome(ok, format!("{a:.3}, {b:.3}"))
}

fn c2_nb_correctness() -> Outcome {
    let mut worst_norm = 0.0f64;
    for &lambda in &[0.5, 5.0, 50.0] {
        for &phi in &[0.5, 2.0, 20.0] {
            // Stop once the remaining tail is below 1e-15 by a geometric bound.
            let mut total = 0.0;
            let mut k = 0u64;
            loop {
                let p = nb_log_pmf(k, lambda, phi).unwrap().exp();
                total += p;
                k += 1;
                let ratio = (k as f64 - 1.0 + phi) / k as f64 * lambda / (lambda + phi);
                if k as f64 > lambda && ratio < 1.0 && p * ratio / (1.0 - ratio) < 1e-15 {
                    break;
                }
            }
            worst_norm = worst_norm.max((total - 1.0).abs());
        }
    }
    let mut worst_poisson = 0.0f64;
    for k in 0..=20u64 {
        let poisson = k as f64 * 5f64.ln() - 5.0 - ln_gamma(k as f64 + 1.0);
        worst_poisson = worst_poisson.max((nb_log_pmf(k, 5.0, 1e8).unwrap() - poisson).abs());
    }
    let mut worst_geom = 0.0f64;
    for k in 0..50u64 {
        let geom = (1.0f64 / 3.0).ln() + k as f64 * (2.0f64 / 3.0).ln();
        worst_geom = worst_geom.max((nb_log_pmf(k, 2.0, 1.0).unwrap() - geom).abs());
    }
    let ok = worst_norm < 1e-9 && worst_poisson < 1e-5 && worst_geom < 1e-12;
    outcome(ok, format!("norm {worst_norm:.2e}, poisson {worst_poisson:.2e}, geometric {worst_geom:.2e}"))
}

fn c3_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (n, d_max) = (30usize, 5usize);
    let full: Vec<Vec<u64>> = (0..n)
        .map(|t| {
            (0..=d_max)
                .map(|tau| sample_nb(&mut rng, 80.0 * (1.0 + 0.5 * (t as f64 / 5.0).sin()) * 0.6f64.powi(tau as i32), 6.0))
                .collect()
        })
        .collect();
    let first = EpiWeek::new(2015, 1).unwrap();
    let tri = ReportingTriangle::from_full_matrix(first, first.offset(n as i64 - 1), d_max, &full).unwrap();
    let data = ModelData::new(&tri, &[]).unwrap();
    let layout = data.layout();
    let priors = Priors::default();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let hyper = Hyperparameters {
            phi: rng.random_range(1.0..30.0),
            eta_alpha: rng.random_range(0.01..0.5),
            eta_beta: rng.random_range(0.01..0.5),
        };
        let mut x: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        x[layout.mu()] += 3.5;
        let state = LatentState::from_slice(layout, &x);
        let g = log_posterior_gradient(&state, &hyper, &data, &priors).unwrap();
        for i in 0..layout.dim() {
            let h = 1e-5;
            let f = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                log_posterior(&LatentState::from_slice(layout, &y), &hyper, &data, &priors).unwrap()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
    }
    outcome(worst < 1e-5, format!("max relative error {worst:.2e}"))
}

struct Scenario {
    baseline: RollingResult,
    naive: RollingResult,
    signal: RollingResult,
}

fn c4_calibration(s: &Scenario) -> Outcome {
    let evaluated = s.baseline.evaluable().count();
    let report = build_report(std::slice::from_ref(&s.baseline), &ReportConfig::default()).unwrap();
    let cov = report.model(ModelVariant::Baseline).unwrap().coverage_all.unwrap();
    outcome(
        evaluated >= 200 && (90.0..=98.0).contains(&cov),
        format!("95% coverage {cov:.1}% over {evaluated} weeks"),
    )
}

fn c5_signal_benefit(s: &Scenario) -> Outcome {
    let report = build_report(&[s.baseline.clone(), s.signal.clone()], &ReportConfig::default()).unwrap();
    let m = report.model(ModelVariant::Twitter).unwrap();
    let lower = m.waic_weekly.iter().filter(|p| p.relative.is_some_and(|r| r < 1.0)).count();
    let share = 100.0 * lower as f64 / m.waic_weekly.len() as f64;
    outcome(
        m.rmae < 1.0 && share >= 70.0,
        format!("rMAE {:.3}, lower WAIC in {share:.1}% of weeks", m.rmae),
    )
}

fn c6_naive_dominance(s: &Scenario) -> Outcome {
    let cfg = ReportConfig { reference: ModelVariant::Naive, ..ReportConfig::default() };
    let report = build_report(&[s.baseline.clone(), s.naive.clone()], &cfg).unwrap();
    let b = report.model(ModelVariant::Baseline).unwrap().mae;
    let n = report.model(ModelVariant::Naive).unwrap().mae;
    outcome(b < n, format!("baseline MAE {b:.1} vs naive {n:.1}"))
}

fn c7_conservation_and_leakage(d: &SyntheticDataset, s: &Scenario) -> Outcome {
    let mut mismatched = 0;
    let mut checked = 0;
    for offset in [30i64, 120, 250] {
        let as_of = d.first_week().offset(offset);
        let tri = build_triangle(&d.linelist.as_of(as_of), as_of, d.first_week(), 8).unwrap();
        for t in 0..tri.n_weeks() {
            if tri.is_complete(t) {
                checked += 1;
                if tri.observed_partial(t) != d.truths[t] {
                    mismatched += 1;
                }
            }
        }
    }
    let leaks = s.baseline.leakage_violations() + s.signal.leakage_violations() + s.naive.leakage_violations();
    outcome(
        mismatched == 0 && leaks == 0,
        format!("{mismatched} row mismatches in {checked} rows, {leaks} leaked cases"),
    )
}

fn c8_delay_statistics() -> Outcome {
    let slow = vec![0.05, 0.08, 0.1, 0.12, 0.13, 0.12, 0.1, 0.09, 0.07, 0.05, 0.04, 0.03, 0.02];
    let fast = vec![0.3, 0.3, 0.2, 0.1, 0.05, 0.05];
    let d = simulate(&SimConfig {
        n_weeks: 200,
        delay_regimes: vec![
            DelayRegime { start: 0, probabilities: slow.clone() },
            DelayRegime { start: 100, probabilities: fast.clone() },
        ],
        seed: 88,
        ..SimConfig::default()
    })
    .unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (range, law) in [((0, 99), slow), ((100, 199), fast)] {
        let regime = DelayRegime { start: range.0, probabilities: law };
        let expected = regime.weeks_to_fraction(0.8) as f64;
        let c = delay_completeness(
            &d.linelist,
            0.8,
            d.first_week().offset(range.0 as i64),
            d.first_week().offset(range.1 as i64),
        )
        .unwrap();
        ok &= (c.mean - expected).abs() <= 0.5;
        lines.push(format!("{:.2} vs {expected}", c.mean));
    }
    outcome(ok, format!("weeks to 80%: {}", lines.join(", ")))
}

/// Independent Student t quantile: Simpson integration of the density plus bisection.
fn t_quantile(p: f64, nu: f64) -> f64 {
    let log_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let density = |x: f64| (log_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp();
    let cdf = |x: f64| {
        let n = 20_000;
        let h = x / n as f64;
        let mut s = density(0.0) + density(x);
        for i in 1..n {
            s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn brute_force_threshold(seasons: &[Vec<f64>]) -> f64 {
    let mut pooled = Vec::new();
    for s in seasons {
        let total: f64 = s.iter().sum();
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..s.len() {
            for b in a..s.len() {
                let mass: f64 = s[a..=b].iter().sum();
                if mass < 0.85 * total {
                    continue;
                }
                let len = b - a;
                let take = match best {
                    None => true,
                    Some((ba, bb, bm)) => len < bb - ba || (len == bb - ba && (mass > bm || (mass == bm && a < ba))),
                };
                if take {
                    best = Some((a, b, mass));
                }
            }
        }
        let start = best.unwrap().0;
        let mut pre: Vec<f64> = s[..start].iter().copied().filter(|v| *v > 0.0).collect();
        pre.sort_by(|x, y| y.partial_cmp(x).unwrap());
        pooled.extend(pre.into_iter().take(5));
    }
    let logs: Vec<f64> = pooled.iter().map(|v| v.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean + t_quantile(0.95, n - 1.0) * sd / n.sqrt()).exp()
}

fn c9_threshold_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n_seasons = rng.random_range(2..6);
        let seasons: Vec<Vec<f64>> = (0..n_seasons)
            .map(|_| {
                let len = 52;
                let peak = rng.random_range(18.0..40.0);
                let height = rng.random_range(300.0..5000.0);
                let floor = rng.random_range(20.0..200.0);
                (0..len)
                    .map(|w| {
                        let bump = height * (-((w as f64 - peak) / 4.0).powi(2) / 2.0).exp();
                        (floor * rng.random_range(0.6..1.4) + bump).round()
                    })
                    .collect()
            })
            .collect();
        let got = epidemic_threshold(&seasons, &MemConfig::default()).unwrap().threshold;
        let want = brute_force_threshold(&seasons);
        worst = worst.max((got - want).abs() / want);
    }
    outcome(worst < 1e-9, format!("max relative difference {worst:.2e} over 20 histories"))
}

fn c10_determinism(d: &SyntheticDataset) -> Outcome {
    let cfg = SimConfig { seed: 77, ..SimConfig::default() };
    let sim_same = simulate(&cfg).unwrap() == simulate(&cfg).unwrap();

    let as_of = d.first_week().offset(150);
    let tri = d.triangle_as_of(as_of, 8).unwrap();
    let spec = ModelSpec::new(ModelVariant::Baseline, RegressorSet::default(), 8).unwrap();
    let fc = FitConfig { n_samples: 300, seed: 5, ..FitConfig::default() };
    let a = fit(&spec, &tri, &[], &fc).unwrap();
    let b = fit(&spec, &tri, &[], &fc).unwrap();
    let fit_same = (0..a.len()).all(|s| a.latent_flat(s) == b.latent_flat(s) && a.lambda(s) == b.lambda(s))
        && a.diagnostics().to_json().unwrap() == b.diagnostics().to_json().unwrap();
    let csv = |p| {
        let mut buf = Vec::new();
        nowcast(p, &tri).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    let nowcast_same = csv(&a) == csv(&b);

    let start = d.first_week().offset(120);
    let mut rc = RollingConfig::new(start, start.offset(5));
    rc.fit = FitConfig { n_samples: 200, seed: 1, ..FitConfig::default() };
    rc.data_end = Some(d.final_week());
    let run = || {
        let r = rolling_evaluate(ModelVariant::Baseline, &d.linelist, &RegressorSet::default(), &rc).unwrap();
        build_report(&[r], &ReportConfig::default()).unwrap().to_json().unwrap()
    };
    let eval_same = run() == run();
    outcome(
        sim_same && fit_same && nowcast_same && eval_same,
        format!("simulate {sim_same}, fit {fit_same}, nowcast {nowcast_same}, evaluate {eval_same}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {n:>2} [{}] {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o, secs));
    };

    run(1, "metric arithmetic", &c1_metric_arithmetic);
    run(2, "negative binomial correctness", &c2_nb_correctness);
    run(3, "gradient check", &c3_gradient);

    let t = Instant::now();
    let world = calibration_world();
    let twitter = twitter_regressors(&world);
    let scenario = Scenario {
        baseline: rolling(&world, ModelVariant::Baseline, &RegressorSet::default(), 1000),
        naive: rolling(&world, ModelVariant::Naive, &RegressorSet::default(), 1000),
        signal: rolling(&world, ModelVariant::Twitter, &twitter, 1000),
    };
    println!("   (rolling scenario: {:.1}s)", t.elapsed().as_secs_f64());
    run(4, "calibration", &|| c4_calibration(&scenario));
    run(5, "signal benefit", &|| c5_signal_benefit(&scenario));
    run(6, "naive dominance", &|| c6_naive_dominance(&scenario));
    run(7, "conservation and leakage", &|| c7_conservation_and_leakage(&world, &scenario));
    run(8, "delay statistics", &c8_delay_statistics);
    run(9, "threshold oracle", &c9_threshold_oracle);
    run(10, "determinism", &|| c10_determinism(&world));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
