//! Aggregation of rolling results into per-model metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::harness::{RollingResult, TrainingWindow};
use super::metrics::{
    coverage, log_error, mae, mpi, per_year_table, relative_metric, IntervalLevel, Regime, YearScore,
    DEFAULT_EPIDEMIC_THRESHOLD, DEFAULT_HIGH_THRESHOLD,
};
use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::model::ModelVariant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Model whose MAE, MPI and WAIC divide everyone else's.
    pub reference: ModelVariant,
    pub epidemic_threshold: f64,
    pub high_threshold: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            reference: ModelVariant::Baseline,
            epidemic_threshold: DEFAULT_EPIDEMIC_THRESHOLD,
            high_threshold: DEFAULT_HIGH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicPoint {
    pub week: EpiWeek,
    pub waic: f64,
    /// Ratio to the reference model's WAIC in the same week.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub window: TrainingWindow,
    pub n_weeks: usize,
    pub mae: f64,
    pub rmae: f64,
    /// Absent for models without intervals.
    pub mpi: Option<f64>,
    pub rmpi: Option<f64>,
    pub coverage_all: Option<f64>,
    pub coverage_epidemic: Option<f64>,
    pub coverage_nonepidemic: Option<f64>,
    pub coverage_80: Option<f64>,
    pub waic_weekly: Vec<WaicPoint>,
    pub per_year: BTreeMap<String, YearScore>,
    /// `log10(estimate / truth)` per regime.
    pub log_errors: BTreeMap<String, Vec<f64>>,
    /// Weeks left out of the log errors because estimate or truth was zero.
    pub log_error_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub reference: ModelVariant,
    pub epidemic_threshold: f64,
    pub high_threshold: f64,
    /// Regime lower bounds are inclusive.
    pub regime_boundaries: String,
    pub first_week: Option<EpiWeek>,
    pub last_week: Option<EpiWeek>,
    pub models: BTreeMap<String, ModelReport>,
    pub skipped_weeks: BTreeMap<String, usize>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("serializing report: {e}")))
    }

    pub fn model(&self, v: ModelVariant) -> Option<&ModelReport> {
        self.models.get(v.name())
    }
}

/// Score every model on the evaluable weeks all of them produced.
pub fn build_report(results: &[RollingResult], cfg: &ReportConfig) -> Result<EvaluationReport> {
    let reference = results
        .iter()
        .find(|r| r.variant == cfg.reference)
        .ok_or_else(|| Error::Input(format!("reference model '{}' was not evaluated", cfg.reference)))?;
    let mut common: Option<BTreeSet<EpiWeek>> = None;
    for r in results {
        let weeks: BTreeSet<EpiWeek> = r.evaluable().map(|o| o.week).collect();
        common = Some(match common {
            None => weeks,
            Some(c) => c.intersection(&weeks).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Input("no evaluable week is shared by all models".into()));
    }
    let pick = |r: &RollingResult| -> Vec<_> { r.outcomes.iter().filter(|o| common.contains(&o.week)).cloned().collect() };

    let ref_outcomes = pick(reference);
    let truths: Vec<f64> = ref_outcomes.iter().map(|o| o.truth as f64).collect();
    let weeks: Vec<EpiWeek> = ref_outcomes.iter().map(|o| o.week).collect();
    let ref_points: Vec<f64> = ref_outcomes.iter().map(|o| o.nowcast.point).collect();
    let ref_mae = mae(&ref_points, &truths)?;
    let has_intervals = |v: ModelVariant| v != ModelVariant::Naive;
    let ref_nowcasts: Vec<_> = ref_outcomes.iter().map(|o| o.nowcast.clone()).collect();
    let ref_mpi = if has_intervals(reference.variant) { Some(mpi(&ref_nowcasts)?) } else { None };
    let ref_waic: BTreeMap<EpiWeek, f64> = reference.outcomes.iter().filter_map(|o| o.waic.map(|w| (o.week, w))).collect();

    let mut models = BTreeMap::new();
    for r in results {
        let outcomes = pick(r);
        let points: Vec<f64> = outcomes.iter().map(|o| o.nowcast.point).collect();
        let nowcasts: Vec<_> = outcomes.iter().map(|o| o.nowcast.clone()).collect();
        let m = mae(&points, &truths)?;
        let rmae = if r.variant == reference.variant { 1.0 } else { relative_metric(m, ref_mae)? };
        let (mpi_v, rmpi, cov95, cov80) = if has_intervals(r.variant) {
            let w = mpi(&nowcasts)?;
            let rel = match ref_mpi {
                Some(_) if r.variant == reference.variant => Some(1.0),
                Some(rm) if rm > 0.0 => Some(relative_metric(w, rm)?),
                _ => None,
            };
            let c95 = coverage(&nowcasts, &truths, IntervalLevel::P95, Some(cfg.epidemic_threshold))?;
            let c80 = coverage(&nowcasts, &truths, IntervalLevel::P80, None)?;
            (Some(w), rel, Some(c95), Some(c80.all))
        } else {
            (None, None, None, None)
        };
        let waic_weekly = r
            .outcomes
            .iter()
            .filter_map(|o| {
                o.waic.map(|w| WaicPoint {
                    week: o.week,
                    waic: w,
                    relative: ref_waic.get(&o.week).map(|b| w / b),
                })
            })
            .collect();
        let per_year = per_year_table(&weeks, &points, &ref_points, &truths)?
            .into_iter()
            .map(|(y, s)| (y.to_string(), s))
            .collect();
        let mut log_errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut excluded = 0;
        for (&p, &t) in points.iter().zip(&truths) {
            match log_error(p, t) {
                Ok(e) => log_errors
                    .entry(Regime::of(t, cfg.epidemic_threshold, cfg.high_threshold).name().to_string())
                    .or_default()
                    .push(e),
                Err(_) => excluded += 1,
            }
        }
        models.insert(
            r.variant.name().to_string(),
            ModelReport {
                window: r.window,
                n_weeks: outcomes.len(),
                mae: m,
                rmae,
                mpi: mpi_v,
                rmpi,
                coverage_all: cov95.map(|c| c.all),
                coverage_epidemic: cov95.and_then(|c| c.above),
                coverage_nonepidemic: cov95.and_then(|c| c.below),
                coverage_80: cov80,
                waic_weekly,
                per_year,
                log_errors,
                log_error_excluded: excluded,
            },
        );
    }
    Ok(EvaluationReport {
        reference: cfg.reference,
        epidemic_threshold: cfg.epidemic_threshold,
        high_threshold: cfg.high_threshold,
        regime_boundaries: format!(
            "non-epidemic < {e}; epidemic >= {e} and < {h}; high >= {h}",
            e = cfg.epidemic_threshold,
            h = cfg.high_threshold
        ),
        first_week: weeks.first().copied(),
        last_week: weeks.last().copied(),
        models,
        skipped_weeks: results.iter().map(|r| (r.variant.name().to_string(), r.gaps.len())).collect(),
    })
}

/// Per-week estimates and errors: `model,year,week,truth,point,lo80,hi80,lo95,hi95,log_error,regime`.
pub fn write_errors_csv<W: Write>(results: &[RollingResult], cfg: &ReportConfig, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Internal(format!("writing errors csv: {e}"));
    w.write_record(["model", "year", "week", "truth", "point", "lo80", "hi80", "lo95", "hi95", "log_error", "regime"])
        .map_err(err)?;
    for r in results {
        for o in r.evaluable() {
            let n = &o.nowcast;
            let t = o.truth as f64;
            let le = log_error(n.point, t).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.variant.name().to_string(),
                o.week.year().to_string(),
                o.week.week().to_string(),
                o.truth.to_string(),
                n.point.to_string(),
                n.interval_80.0.to_string(),
                n.interval_80.1.to_string(),
                n.interval_95.0.to_string(),
                n.interval_95.1.to_string(),
                le,
                Regime::of(t, cfg.epidemic_threshold, cfg.high_threshold).name().to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(format!("writing errors csv: {e}")))
}

/// Weekly WAIC series: `model,year,week,waic,relative`.
pub fn write_waic_csv<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Internal(format!("writing waic csv: {e}"));
    w.write_record(["model", "year", "week", "waic", "relative"]).map_err(err)?;
    for (name, m) in &report.models {
        for p in &m.waic_weekly {
            w.write_record([
                name.clone(),
                p.week.year().to_string(),
                p.week.week().to_string(),
                p.waic.to_string(),
                p.relative.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(format!("writing waic csv: {e}")))
}
