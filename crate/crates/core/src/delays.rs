//! Empirical reporting-delay statistics: how quickly each week's cases are
//! entered into the system.

use serde::Serialize;

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::linelist::LineList;
use crate::stats::nearest_rank;

/// Per-week cumulative reported fractions and their summary across weeks.
#[derive(Debug, Clone, Serialize)]
pub struct DelayDistribution {
    pub weeks: Vec<EpiWeek>,
    /// `curves[i][tau]`: fraction of week `i`'s cases entered within `tau` weeks.
    pub curves: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub band80: Vec<(f64, f64)>,
    pub band95: Vec<(f64, f64)>,
    /// Weeks in range without any case.
    pub skipped_weeks: usize,
}

/// Weeks needed to reach a reported fraction, per week and averaged.
#[derive(Debug, Clone, Serialize)]
pub struct DelayCompleteness {
    pub fraction: f64,
    pub mean: f64,
    pub sd: f64,
    pub per_week: Vec<(EpiWeek, u32)>,
    pub skipped_weeks: usize,
}

fn weekly_histograms(l: &LineList, first: EpiWeek, last: EpiWeek) -> Result<Vec<Vec<u64>>> {
    if last < first {
        return Err(Error::Input(format!("empty week range {first}..{last}")));
    }
    let n = (last.weeks_since(first) + 1) as usize;
    let mut hist = vec![Vec::<u64>::new(); n];
    let base = first.index();
    for r in l.records() {
        let i = r.notification_week().index() - base;
        if i < 0 || i as usize >= n {
            continue;
        }
        let tau = r.delay_weeks()? as usize;
        let h = &mut hist[i as usize];
        if h.len() <= tau {
            h.resize(tau + 1, 0);
        }
        h[tau] += 1;
    }
    Ok(hist)
}

/// Cumulative fractions of a delay histogram. Ends at exactly 1.
pub fn cumulative_fractions(histogram: &[u64]) -> Vec<f64> {
    let total: u64 = histogram.iter().sum();
    let mut acc = 0u64;
    histogram
        .iter()
        .map(|&n| {
            acc += n;
            acc as f64 / total as f64
        })
        .collect()
}

/// Smallest delay whose cumulative fraction reaches `fraction`.
pub fn weeks_to_fraction(cumulative: &[f64], fraction: f64) -> Option<u32> {
    cumulative.iter().position(|&c| c >= fraction).map(|p| p as u32)
}

/// Mean (over weeks in `[first, last]`) of the delay at which each week's
/// cumulative reported fraction first reaches `fraction`.
///
/// Weeks without cases are skipped and counted in `skipped_weeks`.
pub fn delay_completeness(
    l: &LineList,
    fraction: f64,
    first: EpiWeek,
    last: EpiWeek,
) -> Result<DelayCompleteness> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Input(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let hist = weekly_histograms(l, first, last)?;
    let mut per_week = Vec::new();
    let mut skipped_weeks = 0;
    for (i, h) in hist.iter().enumerate() {
        if h.iter().sum::<u64>() == 0 {
            skipped_weeks += 1;
            continue;
        }
        let tau = weeks_to_fraction(&cumulative_fractions(h), fraction)
            .expect("cumulative fractions end at 1");
        per_week.push((first.offset(i as i64), tau));
    }
    if skipped_weeks > 0 {
        log::warn!("delay completeness: skipped {skipped_weeks} weeks without cases");
    }
    let values: Vec<f64> = per_week.iter().map(|p| p.1 as f64).collect();
    let (mean, sd) = crate::stats::mean_sd(&values);
    Ok(DelayCompleteness {
        fraction,
        mean,
        sd,
        per_week,
        skipped_weeks,
    })
}

/// Empirical delay distribution over `[first, last]` with 80% and 95% envelopes.
pub fn delay_distribution(l: &LineList, first: EpiWeek, last: EpiWeek) -> Result<DelayDistribution> {
    let hist = weekly_histograms(l, first, last)?;
    let width = hist.iter().map(Vec::len).max().unwrap_or(0);
    let mut weeks = Vec::new();
    let mut curves = Vec::new();
    let mut skipped_weeks = 0;
    for (i, h) in hist.iter().enumerate() {
        if h.iter().sum::<u64>() == 0 {
            skipped_weeks += 1;
            continue;
        }
        let mut c = cumulative_fractions(h);
        c.resize(width, 1.0);
        weeks.push(first.offset(i as i64));
        curves.push(c);
    }
    let mut mean = Vec::with_capacity(width);
    let mut band80 = Vec::with_capacity(width);
    let mut band95 = Vec::with_capacity(width);
    for tau in 0..width {
        let mut col: Vec<f64> = curves.iter().map(|c| c[tau]).collect();
        col.sort_by(f64::total_cmp);
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        band80.push((nearest_rank(&col, 0.10), nearest_rank(&col, 0.90)));
        band95.push((nearest_rank(&col, 0.025), nearest_rank(&col, 0.975)));
    }
    Ok(DelayDistribution {
        weeks,
        curves,
        mean,
        band80,
        band95,
        skipped_weeks,
    })
}
