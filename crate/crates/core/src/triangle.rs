//! Reporting triangles: counts by notification week and reporting delay, as
//! known at a given "as-of" week.

use serde::{Deserialize, Serialize};

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::linelist::LineList;

/// Counts `n[t][tau]` of cases notified in week `first_week + t` and entered
/// `tau` weeks later, restricted to what is visible at the end of `as_of`.
///
/// Rows are dense from `first_week` through `as_of`; a cell is observed iff
/// `t + tau <= as_of`, and unobserved cells hold zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportingTriangle {
    first_week: EpiWeek,
    as_of: EpiWeek,
    d_max: usize,
    counts: Vec<u64>,
}

impl ReportingTriangle {
    /// Mask a complete matrix (rows from `first_week`) down to what is known at `as_of`.
    ///
    /// Rows after `as_of` are dropped; columns beyond `d_max` are ignored.
    pub fn from_full_matrix(
        first_week: EpiWeek,
        as_of: EpiWeek,
        d_max: usize,
        full: &[Vec<u64>],
    ) -> Result<Self> {
        let mut tri = Self::zeros(first_week, as_of, d_max)?;
        for t in 0..tri.n_weeks().min(full.len()) {
            for tau in 0..=d_max {
                if tri.is_observed(t, tau) {
                    let v = full[t].get(tau).copied().unwrap_or(0);
                    tri.counts[t * (d_max + 1) + tau] = v;
                }
            }
        }
        Ok(tri)
    }

    fn zeros(first_week: EpiWeek, as_of: EpiWeek, d_max: usize) -> Result<Self> {
        if as_of < first_week {
            return Err(Error::Input(format!(
                "as-of week {as_of} precedes first week {first_week}"
            )));
        }
        let n_weeks = (as_of.weeks_since(first_week) + 1) as usize;
        Ok(Self {
            first_week,
            as_of,
            d_max,
            counts: vec![0; n_weeks * (d_max + 1)],
        })
    }

    pub fn first_week(&self) -> EpiWeek {
        self.first_week
    }

    pub fn as_of(&self) -> EpiWeek {
        self.as_of
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn n_weeks(&self) -> usize {
        self.counts.len() / (self.d_max + 1)
    }

    pub fn n_delays(&self) -> usize {
        self.d_max + 1
    }

    pub fn week(&self, t: usize) -> EpiWeek {
        self.first_week.offset(t as i64)
    }

    /// Row index of `week`, if inside the triangle.
    pub fn row_of(&self, week: EpiWeek) -> Option<usize> {
        let t = week.weeks_since(self.first_week);
        (t >= 0 && (t as usize) < self.n_weeks()).then_some(t as usize)
    }

    pub fn is_observed(&self, t: usize, tau: usize) -> bool {
        tau <= self.d_max && t + tau < self.n_weeks()
    }

    pub fn count(&self, t: usize, tau: usize) -> u64 {
        self.counts[t * (self.d_max + 1) + tau]
    }

    pub fn row(&self, t: usize) -> &[u64] {
        &self.counts[t * (self.d_max + 1)..(t + 1) * (self.d_max + 1)]
    }

    pub fn observed_mask(&self) -> Vec<Vec<bool>> {
        (0..self.n_weeks())
            .map(|t| (0..=self.d_max).map(|tau| self.is_observed(t, tau)).collect())
            .collect()
    }

    /// Sum of the observed cells of row `t`.
    pub fn observed_partial(&self, t: usize) -> u64 {
        self.row(t).iter().sum()
    }

    /// Whether every delay of row `t` is observed.
    pub fn is_complete(&self, t: usize) -> bool {
        t + self.d_max < self.n_weeks()
    }

    /// Observed cells as `(t, tau, count)`, row-major.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n_weeks()).flat_map(move |t| {
            (0..=self.d_max)
                .filter(move |&tau| self.is_observed(t, tau))
                .map(move |tau| (t, tau, self.count(t, tau)))
        })
    }

    /// Unobserved cells as `(t, tau)`, row-major.
    pub fn unobserved_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_weeks()).flat_map(move |t| {
            (0..=self.d_max)
                .filter(move |&tau| !self.is_observed(t, tau))
                .map(move |tau| (t, tau))
        })
    }

    /// Rows with at least one unobserved cell.
    pub fn incomplete_rows(&self) -> std::ops::Range<usize> {
        self.n_weeks().saturating_sub(self.d_max)..self.n_weeks()
    }
}

/// Thresholds governing which delays are modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayTruncation {
    /// Cases delayed longer than this are discarded outright.
    pub hard_cap: u32,
    /// Lower bound on the modeled maximum delay.
    pub floor: u32,
    /// Fraction of retained cases the modeled delays must cover.
    pub coverage: f64,
}

impl Default for DelayTruncation {
    fn default() -> Self {
        Self {
            hard_cap: 26,
            floor: 8,
            coverage: 0.95,
        }
    }
}

/// Outcome of choosing the maximum modeled delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxDelaySelection {
    pub d_max: u32,
    /// Cases discarded for exceeding the hard cap.
    pub dropped_over_cap: u64,
    /// Retained cases with delay in `(d_max, hard_cap]`, left out of training.
    pub omitted_from_training: u64,
}

/// Choose `D_max` from a histogram of delays (`histogram[tau]` = case count).
pub fn select_max_delay_from_histogram(
    histogram: &[u64],
    cfg: &DelayTruncation,
) -> Result<MaxDelaySelection> {
    let cap = cfg.hard_cap as usize;
    let retained: u64 = histogram.iter().take(cap + 1).sum();
    let dropped_over_cap: u64 = histogram.iter().skip(cap + 1).sum();
    if retained == 0 {
        return Err(Error::Data(format!(
            "no training cases with delay <= {} weeks",
            cfg.hard_cap
        )));
    }
    let mut cumulative = 0u64;
    let mut reached = cap;
    for (tau, &n) in histogram.iter().take(cap + 1).enumerate() {
        cumulative += n;
        if cumulative as f64 / retained as f64 >= cfg.coverage {
            reached = tau;
            break;
        }
    }
    let d_max = (reached as u32).max(cfg.floor);
    let omitted_from_training = histogram
        .iter()
        .take(cap + 1)
        .skip(d_max as usize + 1)
        .sum();
    Ok(MaxDelaySelection {
        d_max,
        dropped_over_cap,
        omitted_from_training,
    })
}

/// Choose `D_max` for a training line list.
pub fn select_max_delay(training: &LineList, cfg: &DelayTruncation) -> Result<MaxDelaySelection> {
    let mut histogram: Vec<u64> = Vec::new();
    for r in training.records() {
        let tau = r.delay_weeks()? as usize;
        if histogram.len() <= tau {
            histogram.resize(tau + 1, 0);
        }
        histogram[tau] += 1;
    }
    select_max_delay_from_histogram(&histogram, cfg)
}

/// Assemble the reporting triangle visible at the end of `as_of`.
///
/// Cases entered after `as_of`, notified before `first_week`, or delayed
/// more than `d_max` weeks are not counted.
pub fn build_triangle(
    l: &LineList,
    as_of: EpiWeek,
    first_week: EpiWeek,
    d_max: usize,
) -> Result<ReportingTriangle> {
    let mut tri = ReportingTriangle::zeros(first_week, as_of, d_max)?;
    let base = first_week.index();
    let last = as_of.index();
    for r in l.records() {
        let entry = r.entry_week().index();
        if entry > last {
            continue;
        }
        let t = r.notification_week().index() - base;
        let tau = entry - r.notification_week().index();
        if t < 0 || tau < 0 || tau as usize > d_max {
            continue;
        }
        tri.counts[t as usize * (d_max + 1) + tau as usize] += 1;
    }
    Ok(tri)
}
