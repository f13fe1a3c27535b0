use std::fs;
use std::path::{Path, PathBuf};

use nowcast_core::delays::{delay_completeness, delay_distribution};
use nowcast_core::evaluation::{
    build_report, epidemic_threshold, nowcast_as_of, rolling_evaluate, seasons_by_epi_year, write_errors_csv,
    write_waic_csv, MemConfig, ReportConfig, RollingConfig, TrainingWindow, DEFAULT_EPIDEMIC_THRESHOLD,
    DEFAULT_HIGH_THRESHOLD,
};
use nowcast_core::model::{FitConfig, ModelVariant};
use nowcast_core::signals::{ingest_signal_csv, log_regressor, CoefficientLabel, RegressorSet, SignalSeries};
use nowcast_core::simulator::{simulate as run_simulation, SimConfig};
use nowcast_core::triangle::DelayTruncation;
use nowcast_core::{EpiWeek, Error, LineList, Result};
use serde::Serialize;

use crate::config::{parse_signal, pick, require, FileConfig};
use crate::{DelaysArgs, EvaluateArgs, NowcastArgs, SimulateArgs, ThresholdArgs, TrainArgs};

fn week(s: Option<String>, file: Option<String>, name: &str) -> Result<Option<EpiWeek>> {
    s.or(file)
        .map(|w| w.parse().map_err(|e: Error| Error::Input(format!("--{name}: {e}"))))
        .transpose()
}

fn out_dir(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    let dir = pick(flag, file.out.clone(), PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::Input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::Input(format!("cannot write {}: {e}", p.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(format!("serializing output: {e}")))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn read_linelist(flag: Option<PathBuf>, file: &FileConfig) -> Result<LineList> {
    let path = require(flag, file.linelist.clone(), "linelist")?;
    if !path.is_file() {
        return Err(Error::Input(format!("line list {} does not exist", path.display())));
    }
    LineList::read_csv(&path)
}

struct Training {
    linelist: LineList,
    signals: Vec<SignalSeries>,
    window: TrainingWindow,
    truncation: DelayTruncation,
    fit: FitConfig,
    out: PathBuf,
}

fn training(a: TrainArgs, file: &FileConfig) -> Result<Training> {
    let seed = require(a.seed, file.seed, "seed")?;
    let mut pairs = a.signals.iter().map(|s| parse_signal(s)).collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        pairs = file.signals()?;
    }
    let mut signals = Vec::new();
    for (name, path) in pairs {
        if CoefficientLabel::from_signal_name(&name).is_none() {
            let valid: Vec<_> = CoefficientLabel::ALL.iter().map(|l| l.signal_name()).collect();
            return Err(Error::Input(format!("unknown signal '{name}'; valid names: {}", valid.join(", "))));
        }
        if signals.iter().any(|s: &SignalSeries| s.name == name) {
            return Err(Error::Input(format!("signal '{name}' given twice")));
        }
        signals.push(ingest_signal_csv(&path, &name)?);
    }
    let window = match a.window.or(file.window.clone()) {
        Some(w) => w.parse()?,
        None => TrainingWindow::Full,
    };
    let defaults = DelayTruncation::default();
    let truncation = DelayTruncation {
        hard_cap: pick(a.max_delay_cap, file.max_delay_cap, defaults.hard_cap),
        floor: pick(a.dmax_floor, file.dmax_floor, defaults.floor),
        coverage: pick(a.dmax_coverage, file.dmax_coverage, defaults.coverage),
    };
    let fit = FitConfig {
        n_samples: pick(a.samples, file.samples, FitConfig::default().n_samples),
        seed,
        ..FitConfig::default()
    };
    let linelist = read_linelist(a.linelist, file)?;
    let out = out_dir(a.out, file)?;
    Ok(Training { linelist, signals, window, truncation, fit, out })
}

/// Log-transformed regressors for `variant`, or an input error naming what is missing.
fn regressors_for(variant: ModelVariant, signals: &[SignalSeries]) -> Result<RegressorSet> {
    let mut members = Vec::new();
    let mut missing = Vec::new();
    for &label in variant.required_labels() {
        match signals.iter().find(|s| s.name == label.signal_name()) {
            Some(s) => members.push((log_regressor(s, None)?, label)),
            None => missing.push(label.signal_name()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "model '{variant}' requires signals [{}]; missing: {} (pass --signal name=path)",
            variant.required_signals().join(", "),
            missing.join(", ")
        )));
    }
    Ok(RegressorSet::new(members))
}

#[derive(Serialize)]
struct NowcastDiagnostics<'a> {
    variant: ModelVariant,
    as_of: EpiWeek,
    training_first: EpiWeek,
    d_max: u32,
    dropped_over_cap: u64,
    omitted_from_training: u64,
    fit: Option<&'a nowcast_core::model::FitDiagnostics>,
}

pub fn nowcast(a: NowcastArgs, file: &FileConfig) -> Result<()> {
    let variant: ModelVariant = match a.model.or_else(|| file.models().into_iter().next()) {
        Some(m) => m.parse()?,
        None => ModelVariant::Baseline,
    };
    let as_of = week(a.as_of, file.as_of.clone(), "as-of")?;
    let t = training(a.train, file)?;
    let regressors = regressors_for(variant, &t.signals)?;
    let as_of = match as_of {
        Some(w) => w,
        None => t
            .linelist
            .last_entry_week()
            .ok_or_else(|| Error::Data("the line list is empty".into()))?,
    };
    let mut cfg = RollingConfig::new(as_of, as_of);
    cfg.window = t.window;
    cfg.truncation = t.truncation;
    cfg.fit = t.fit;
    let run = nowcast_as_of(variant, &t.linelist, &regressors, as_of, &cfg)?;

    let mut csv = Vec::new();
    run.result.write_csv(&mut csv)?;
    write(&t.out, "nowcast.csv", &csv)?;
    let diag = NowcastDiagnostics {
        variant,
        as_of,
        training_first: run.training_first,
        d_max: run.selection.d_max,
        dropped_over_cap: run.selection.dropped_over_cap,
        omitted_from_training: run.selection.omitted_from_training,
        fit: run.diagnostics.as_ref(),
    };
    write(&t.out, "diagnostics.json", &to_json(&diag)?)?;
    if let Some(w) = run.result.last() {
        println!(
            "{variant} as of {as_of}: {} {:.0} (95% {:.0}-{:.0}), {} reported so far",
            w.week, w.point, w.interval_95.0, w.interval_95.1, w.observed_partial
        );
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let names = if a.model.is_empty() { file.models() } else { a.model };
    let mut variants: Vec<ModelVariant> = names.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    if variants.is_empty() {
        variants.push(ModelVariant::Baseline);
    }
    variants.dedup();
    let reference = match a.reference.or(file.reference.clone()) {
        Some(r) => r.parse()?,
        None if variants.contains(&ModelVariant::Baseline) => ModelVariant::Baseline,
        None => variants[0],
    };
    if !variants.contains(&reference) {
        return Err(Error::Input(format!("reference model '{reference}' is not among the evaluated models")));
    }
    let start = week(a.start, file.start.clone(), "start")?.ok_or_else(|| Error::Input("--start is required".into()))?;
    let end = week(a.end, file.end.clone(), "end")?.ok_or_else(|| Error::Input("--end is required".into()))?;
    let data_end = week(a.data_end, file.data_end.clone(), "data-end")?;
    let report_cfg = ReportConfig {
        reference,
        epidemic_threshold: pick(a.epidemic_threshold, file.epidemic_threshold, DEFAULT_EPIDEMIC_THRESHOLD),
        high_threshold: pick(a.high_threshold, file.high_threshold, DEFAULT_HIGH_THRESHOLD),
    };
    let t = training(a.train, file)?;
    let regressors: Vec<RegressorSet> = variants
        .iter()
        .map(|&v| regressors_for(v, &t.signals))
        .collect::<Result<_>>()?;

    let mut cfg = RollingConfig::new(start, end);
    cfg.window = t.window;
    cfg.truncation = t.truncation;
    cfg.fit = t.fit;
    cfg.data_end = data_end;
    let mut results = Vec::new();
    for (&v, r) in variants.iter().zip(&regressors) {
        results.push(rolling_evaluate(v, &t.linelist, r, &cfg)?);
    }
    let report = build_report(&results, &report_cfg)?;
    write(&t.out, "report.json", &to_json(&report)?)?;
    let mut errors = Vec::new();
    write_errors_csv(&results, &report_cfg, &mut errors)?;
    write(&t.out, "errors.csv", &errors)?;
    let mut waic = Vec::new();
    write_waic_csv(&report, &mut waic)?;
    write(&t.out, "waic.csv", &waic)?;

    println!("{:<22} {:>6} {:>10} {:>7} {:>9}", "model", "weeks", "MAE", "rMAE", "cov95");
    for v in &variants {
        if let Some(m) = report.model(*v) {
            let cov = m.coverage_all.map_or("-".to_string(), |c| format!("{c:.1}"));
            println!("{:<22} {:>6} {:>10.1} {:>7.3} {:>9}", v.name(), m.n_weeks, m.mae, m.rmae, cov);
        }
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs, file: &FileConfig) -> Result<()> {
    let mut cfg = match a.scenario.or(file.scenario.clone()) {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| Error::Input(format!("cannot read scenario {}: {e}", p.display())))?;
            serde_json::from_str::<SimConfig>(&text)
                .map_err(|e| Error::Input(format!("scenario {}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    cfg.seed = require(a.seed, file.seed, "seed")?;
    let out = out_dir(a.out, file)?;
    let d = run_simulation(&cfg)?;
    d.write_files(&out)?;
    println!(
        "simulated {} onset weeks from {} ({} cases) into {}",
        cfg.n_weeks,
        d.first_week(),
        d.linelist.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Season {
    year: i32,
    epidemic_start: EpiWeek,
    epidemic_end: EpiWeek,
}

#[derive(Serialize)]
struct ThresholdOutput {
    threshold: f64,
    config: MemConfig,
    seasons: Vec<Season>,
    pooled: Vec<f64>,
}

fn notification_range(l: &LineList, start: Option<EpiWeek>, end: Option<EpiWeek>) -> Result<(EpiWeek, EpiWeek)> {
    let first = l
        .first_notification_week()
        .ok_or_else(|| Error::Data("the line list is empty".into()))?;
    let last = l
        .records()
        .iter()
        .map(|r| r.notification_week())
        .max()
        .expect("non-empty");
    let (first, last) = (start.unwrap_or(first), end.unwrap_or(last));
    if last < first {
        return Err(Error::Input(format!("empty week range {first}..{last}")));
    }
    Ok((first, last))
}

pub fn threshold(a: ThresholdArgs, file: &FileConfig) -> Result<()> {
    let start = week(a.start, file.start.clone(), "start")?;
    let end = week(a.end, file.end.clone(), "end")?;
    let defaults = MemConfig::default();
    let cfg = MemConfig {
        epidemic_share: pick(a.share, file.share, defaults.epidemic_share),
        top_per_season: pick(a.top, file.top, defaults.top_per_season),
        confidence: pick(a.confidence, file.confidence, defaults.confidence),
    };
    let l = read_linelist(a.linelist, file)?;
    let out = out_dir(a.out, file)?;
    let (first, last) = notification_range(&l, start, end)?;
    let counts: Vec<f64> = l.weekly_totals(first, last).into_iter().map(|c| c as f64).collect();
    let seasons = seasons_by_epi_year(first, &counts);
    let years: Vec<i32> = (first.year()..=last.year())
        .filter(|&y| {
            let n = EpiWeek::weeks_in_year(y).expect("year in range");
            EpiWeek::new(y, 1).is_ok_and(|w| w >= first) && EpiWeek::new(y, n).is_ok_and(|w| w <= last)
        })
        .collect();
    debug_assert_eq!(years.len(), seasons.len());
    let r = epidemic_threshold(&seasons, &cfg)?;
    let seasons = years
        .iter()
        .zip(&r.epidemic_periods)
        .map(|(&year, &(a, b))| {
            let w1 = EpiWeek::new(year, 1).expect("valid week");
            Season { year, epidemic_start: w1.offset(a as i64), epidemic_end: w1.offset(b as i64) }
        })
        .collect();
    let output = ThresholdOutput { threshold: r.threshold, config: cfg, seasons, pooled: r.pooled };
    write(&out, "threshold.json", &to_json(&output)?)?;
    println!("epidemic threshold {:.2} from {} seasons", output.threshold, years.len());
    Ok(())
}

#[derive(Serialize)]
struct DelaysOutput {
    first: EpiWeek,
    last: EpiWeek,
    completeness: Vec<nowcast_core::delays::DelayCompleteness>,
    distribution: nowcast_core::delays::DelayDistribution,
}

pub fn delays(a: DelaysArgs, file: &FileConfig) -> Result<()> {
    let start = week(a.start, file.start.clone(), "start")?;
    let end = week(a.end, file.end.clone(), "end")?;
    let mut fractions = if a.fraction.is_empty() { file.fraction.clone().unwrap_or_default() } else { a.fraction };
    if fractions.is_empty() {
        fractions = vec![0.8, 0.95];
    }
    let l = read_linelist(a.linelist, file)?;
    let out = out_dir(a.out, file)?;
    let (first, last) = notification_range(&l, start, end)?;
    let completeness = fractions
        .iter()
        .map(|&f| delay_completeness(&l, f, first, last))
        .collect::<Result<Vec<_>>>()?;
    let distribution = delay_distribution(&l, first, last)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Internal(format!("writing delays.csv: {e}"));
    w.write_record(["delay", "mean", "lo80", "hi80", "lo95", "hi95"]).map_err(err)?;
    for (tau, m) in distribution.mean.iter().enumerate() {
        let (b80, b95) = (distribution.band80[tau], distribution.band95[tau]);
        w.write_record([tau.to_string(), m.to_string(), b80.0.to_string(), b80.1.to_string(), b95.0.to_string(), b95.1.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("writing delays.csv: {e}")))?;
    write(&out, "delays.csv", &bytes)?;
    for c in &completeness {
        println!("mean weeks to {:.0}% reported: {:.2} (sd {:.2}, {} weeks)", 100.0 * c.fraction, c.mean, c.sd, c.per_week.len());
    }
    write(&out, "delays.json", &to_json(&DelaysOutput { first, last, completeness, distribution })?)?;
    Ok(())
}
