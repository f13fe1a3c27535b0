//! Weekly rolling refit: what each model would have said at each week, using
//! only the cases entered by then.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::waic::waic_from_samples;
use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::linelist::LineList;
use crate::model::{fit, FitConfig, FitDiagnostics, ModelSpec, ModelVariant};
use crate::nowcast::{naive_nowcast, nowcast, nowcast_rows, NowcastResult, WeekNowcast};
use crate::signals::{align, FillPolicy, RegressorSet};
use crate::triangle::{build_triangle, select_max_delay, DelayTruncation, MaxDelaySelection, ReportingTriangle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrainingWindow {
    #[default]
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "2y")]
    TwoYears,
    #[serde(rename = "1y")]
    OneYear,
    #[serde(rename = "6m")]
    SixMonths,
}

impl TrainingWindow {
    /// Window length in weeks; `None` for everything since the data start.
    pub fn weeks(&self) -> Option<usize> {
        match self {
            TrainingWindow::Full => None,
            TrainingWindow::TwoYears => Some(104),
            TrainingWindow::OneYear => Some(52),
            TrainingWindow::SixMonths => Some(26),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainingWindow::Full => "full",
            TrainingWindow::TwoYears => "2y",
            TrainingWindow::OneYear => "1y",
            TrainingWindow::SixMonths => "6m",
        }
    }
}

impl fmt::Display for TrainingWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(TrainingWindow::Full),
            "2y" => Ok(TrainingWindow::TwoYears),
            "1y" => Ok(TrainingWindow::OneYear),
            "6m" => Ok(TrainingWindow::SixMonths),
            other => Err(Error::Input(format!("unknown window '{other}'; valid: full | 2y | 1y | 6m"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub start: EpiWeek,
    pub end: EpiWeek,
    pub window: TrainingWindow,
    pub truncation: DelayTruncation,
    pub fit: FitConfig,
    /// Weeks with a shorter training range are skipped.
    pub min_training_weeks: usize,
    pub fill: FillPolicy,
    /// Compute WAIC of each weekly fit.
    pub waic: bool,
    /// Week by which all reporting is complete; defaults to the last entry week.
    pub data_end: Option<EpiWeek>,
}

impl RollingConfig {
    pub fn new(start: EpiWeek, end: EpiWeek) -> Self {
        Self {
            start,
            end,
            window: TrainingWindow::Full,
            truncation: DelayTruncation::default(),
            fit: FitConfig::default(),
            min_training_weeks: 20,
            fill: FillPolicy::Fail,
            waic: true,
            data_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekOutcome {
    pub week: EpiWeek,
    pub nowcast: WeekNowcast,
    /// All cases notified in the week, as known at the end of the data.
    pub truth: u64,
    /// Whether the week was fully reported by the end of the data.
    pub evaluable: bool,
    pub d_max: usize,
    pub training_weeks: usize,
    pub waic: Option<f64>,
    /// Training cases entered after the week; zero by construction.
    pub leakage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub week: EpiWeek,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingResult {
    pub variant: ModelVariant,
    pub window: TrainingWindow,
    pub outcomes: Vec<WeekOutcome>,
    pub gaps: Vec<Gap>,
}

impl RollingResult {
    pub fn leakage_violations(&self) -> usize {
        self.outcomes.iter().map(|o| o.leakage).sum()
    }

    pub fn evaluable(&self) -> impl Iterator<Item = &WeekOutcome> {
        self.outcomes.iter().filter(|o| o.evaluable)
    }
}

/// First training week for a fit as of `week`.
fn training_start(window: TrainingWindow, data_start: EpiWeek, week: EpiWeek) -> EpiWeek {
    match window.weeks() {
        Some(w) => week.offset(1 - w as i64).max(data_start),
        None => data_start,
    }
}

/// Everything a single nowcast as of one week produced.
#[derive(Debug, Clone)]
pub struct AsOfNowcast {
    pub variant: ModelVariant,
    pub as_of: EpiWeek,
    pub training_first: EpiWeek,
    pub selection: MaxDelaySelection,
    pub triangle: ReportingTriangle,
    /// Incomplete weeks of the triangle; only the as-of week for the naive model.
    pub result: NowcastResult,
    /// Absent for the naive model.
    pub diagnostics: Option<FitDiagnostics>,
}

/// Nowcast every incomplete week as of `as_of`, trained the same way as one step
/// of [`rolling_evaluate`]. Cases entered after `as_of` are ignored.
pub fn nowcast_as_of(
    variant: ModelVariant,
    linelist: &LineList,
    regressors: &RegressorSet,
    as_of: EpiWeek,
    cfg: &RollingConfig,
) -> Result<AsOfNowcast> {
    ModelSpec::new(variant, regressors.clone(), 0)?;
    let visible = linelist.as_of(as_of);
    let data_start = visible
        .first_notification_week()
        .ok_or_else(|| Error::Data(format!("no cases entered by {as_of}")))?;
    let first = training_start(cfg.window, data_start, as_of);
    if as_of < first {
        return Err(Error::Input(format!("as-of week {as_of} precedes the data start {data_start}")));
    }
    let n_weeks = (as_of.weeks_since(first) + 1) as usize;
    let training = visible.notified_between(first, as_of);
    let selection = select_max_delay(&training, &cfg.truncation)?;
    let d_max = selection.d_max as usize;
    if d_max + 1 > n_weeks {
        return Err(Error::Data(format!(
            "maximum delay {d_max} needs more than the {n_weeks} training weeks available"
        )));
    }
    let triangle = build_triangle(&training, as_of, first, d_max)?;
    let (result, diagnostics) = if variant == ModelVariant::Naive {
        let week = naive_nowcast(&triangle, triangle.n_weeks() - 1)?;
        (NowcastResult { weeks: vec![week] }, None)
    } else {
        let matrix = if regressors.is_empty() {
            Vec::new()
        } else {
            align(regressors, first, as_of, cfg.fill)?
        };
        let spec = ModelSpec::new(variant, regressors.clone(), d_max)?;
        let samples = fit(&spec, &triangle, &matrix, &cfg.fit)?;
        (nowcast(&samples, &triangle)?, Some(samples.diagnostics().clone()))
    };
    Ok(AsOfNowcast {
        variant,
        as_of,
        training_first: first,
        selection,
        triangle,
        result,
        diagnostics,
    })
}

enum Weekly {
    Done(Box<WeekOutcome>),
    Skipped(Gap),
}

/// Refit `variant` every week from `cfg.start` to `cfg.end` and nowcast that week.
///
/// `regressors` must hold log-transformed series matching the variant.
pub fn rolling_evaluate(
    variant: ModelVariant,
    linelist: &LineList,
    regressors: &RegressorSet,
    cfg: &RollingConfig,
) -> Result<RollingResult> {
    if cfg.end < cfg.start {
        return Err(Error::Input(format!("end {} precedes start {}", cfg.end, cfg.start)));
    }
    ModelSpec::new(variant, regressors.clone(), 0)?;
    let data_start = linelist
        .first_notification_week()
        .ok_or_else(|| Error::Data("the line list is empty".into()))?;
    let data_end = match cfg.data_end {
        Some(w) => w,
        None => linelist.last_entry_week().expect("non-empty"),
    };
    if cfg.end > data_end {
        return Err(Error::Input(format!("evaluation end {} is past the end of the data {data_end}", cfg.end)));
    }
    let truths = linelist.weekly_totals(cfg.start, cfg.end);
    let weeks: Vec<EpiWeek> = cfg.start.through(cfg.end).collect();
    info!("rolling {variant} over {} weeks ({} window)", weeks.len(), cfg.window);

    let results: Vec<Result<Weekly>> = weeks
        .par_iter()
        .enumerate()
        .map(|(i, &week)| {
            let truth = truths[i];
            let evaluable = week.offset(cfg.truncation.hard_cap as i64) <= data_end;
            one_week(variant, linelist, regressors, cfg, data_start, week, truth, evaluable)
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut gaps = Vec::new();
    for r in results {
        match r? {
            Weekly::Done(o) => outcomes.push(*o),
            Weekly::Skipped(g) => gaps.push(g),
        }
    }
    if !gaps.is_empty() {
        warn!("{variant}: {} of {} weeks skipped", gaps.len(), weeks.len());
    }
    Ok(RollingResult {
        variant,
        window: cfg.window,
        outcomes,
        gaps,
    })
}

#[allow(clippy::too_many_arguments)]
fn one_week(
    variant: ModelVariant,
    linelist: &LineList,
    regressors: &RegressorSet,
    cfg: &RollingConfig,
    data_start: EpiWeek,
    week: EpiWeek,
    truth: u64,
    evaluable: bool,
) -> Result<Weekly> {
    let skip = |reason: String| Ok(Weekly::Skipped(Gap { week, reason }));
    let first = training_start(cfg.window, data_start, week);
    if week < first {
        return skip("week precedes the data".into());
    }
    let n_weeks = (week.weeks_since(first) + 1) as usize;
    if n_weeks < cfg.min_training_weeks {
        return skip(format!("{n_weeks} training weeks, need {}", cfg.min_training_weeks));
    }
    let training = linelist.as_of(week).notified_between(first, week);
    let leakage = training.records().iter().filter(|r| r.entry_week() > week).count();
    let selection = match select_max_delay(&training, &cfg.truncation) {
        Ok(s) => s,
        Err(Error::Data(m)) => return skip(m),
        Err(e) => return Err(e),
    };
    let d_max = selection.d_max as usize;
    if d_max + 1 > n_weeks {
        return skip(format!("d_max {d_max} needs more than {n_weeks} training weeks"));
    }
    let triangle = build_triangle(&training, week, first, d_max)?;
    let last_row = triangle.n_weeks() - 1;

    if variant == ModelVariant::Naive {
        let nowcast = naive_nowcast(&triangle, last_row)?;
        return Ok(Weekly::Done(Box::new(WeekOutcome {
            week,
            nowcast,
            truth,
            evaluable,
            d_max,
            training_weeks: n_weeks,
            waic: None,
            leakage,
        })));
    }

    let matrix = if regressors.is_empty() {
        Vec::new()
    } else {
        match align(regressors, first, week, cfg.fill) {
            Ok(m) => m,
            Err(Error::Input(m)) => return skip(m),
            Err(e) => return Err(e),
        }
    };
    let spec = ModelSpec::new(variant, regressors.clone(), d_max)?;
    let samples = match fit(&spec, &triangle, &matrix, &cfg.fit) {
        Ok(s) => s,
        Err(Error::Fit(m)) | Err(Error::Data(m)) => return skip(m),
        Err(e) => return Err(e),
    };
    let nowcast = nowcast_rows(&samples, &triangle, &[last_row])?.weeks.remove(0);
    let waic = if cfg.waic { Some(waic_from_samples(&samples)?) } else { None };
    Ok(Weekly::Done(Box::new(WeekOutcome {
        week,
        nowcast,
        truth,
        evaluable,
        d_max,
        training_weeks: n_weeks,
        waic,
        leakage,
    })))
}
