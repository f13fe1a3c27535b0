//! Epidemic threshold by a simplified Moving Epidemic Method.
//!
//! Each season's epidemic period is the shortest run of weeks holding a set share
//! of its cases. The largest weekly counts before that period, pooled over seasons,
//! give the threshold as the upper one-sided confidence limit of their geometric mean.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemConfig {
    /// Share of a season's cases the epidemic period must hold.
    pub epidemic_share: f64,
    /// Largest pre-epidemic values taken per season.
    pub top_per_season: usize,
    /// One-sided confidence level of the upper limit.
    pub confidence: f64,
}

impl Default for MemConfig {
    fn default() -> Self {
        Self {
            epidemic_share: 0.85,
            top_per_season: 5,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    /// Epidemic period per season as inclusive `(first, last)` week offsets.
    pub epidemic_periods: Vec<(usize, usize)>,
    /// Pre-epidemic values that entered the geometric mean.
    pub pooled: Vec<f64>,
}

/// Shortest window holding at least `share` of the season's total; ties go to
/// the larger mass, then the earlier start.
pub fn epidemic_period(season: &[f64], share: f64) -> Option<(usize, usize)> {
    let total: f64 = season.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = share * total;
    let mut best: Option<(usize, usize, f64)> = None;
    let mut end = 0;
    let mut mass = 0.0;
    for start in 0..season.len() {
        if start > 0 {
            mass -= season[start - 1];
        }
        if end < start {
            end = start;
            mass = 0.0;
        }
        // `mass` covers season[start..end].
        while mass < target && end < season.len() {
            mass += season[end];
            end += 1;
        }
        if mass < target {
            break;
        }
        let len = end - start;
        let better = match best {
            None => true,
            Some((bs, be, bm)) => len < be - bs || (len == be - bs && mass > bm),
        };
        if better {
            best = Some((start, end, mass));
        }
    }
    best.map(|(s, e, _)| (s, e - 1))
}

pub fn epidemic_threshold(seasons: &[Vec<f64>], cfg: &MemConfig) -> Result<ThresholdResult> {
    if seasons.len() < 2 {
        return Err(Error::Input(format!("need at least 2 seasons, got {}", seasons.len())));
    }
    if !(cfg.epidemic_share > 0.0 && cfg.epidemic_share <= 1.0) || !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(Error::Input("epidemic share must be in (0, 1] and confidence in (0, 1)".into()));
    }
    let mut pooled = Vec::new();
    let mut periods = Vec::with_capacity(seasons.len());
    for (i, season) in seasons.iter().enumerate() {
        if season.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input(format!("season {i} has negative or non-finite counts")));
        }
        let (start, end) = epidemic_period(season, cfg.epidemic_share)
            .ok_or_else(|| Error::Input(format!("season {i} has no cases")))?;
        periods.push((start, end));
        let mut pre: Vec<f64> = season[..start].iter().copied().filter(|v| *v > 0.0).collect();
        pre.sort_by(|a, b| b.total_cmp(a));
        pooled.extend(pre.into_iter().take(cfg.top_per_season));
    }
    if pooled.len() < 2 {
        return Err(Error::Input(format!(
            "only {} positive pre-epidemic values; need at least 2",
            pooled.len()
        )));
    }
    let logs: Vec<f64> = pooled.iter().map(|v| v.ln()).collect();
    let (mean, sd) = crate::stats::mean_sd(&logs);
    let n = logs.len() as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Internal(format!("t distribution: {e}")))?
        .inverse_cdf(cfg.confidence);
    Ok(ThresholdResult {
        threshold: (mean + t * sd / n.sqrt()).exp(),
        epidemic_periods: periods,
        pooled,
    })
}

/// Split a weekly series starting at `first` into complete epidemiological years.
pub fn seasons_by_epi_year(first: EpiWeek, counts: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut complete = first.week() == 1;
    for (i, &c) in counts.iter().enumerate() {
        let w = first.offset(i as i64);
        if w.week() == 1 && i > 0 {
            if complete {
                out.push(std::mem::take(&mut current));
            }
            current.clear();
            complete = true;
        }
        current.push(c);
        if i + 1 == counts.len() && complete && Some(w.week()) == EpiWeek::weeks_in_year(w.year()) {
            out.push(std::mem::take(&mut current));
        }
    }
    out
}
