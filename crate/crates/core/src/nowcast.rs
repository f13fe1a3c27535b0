//! Point nowcasts and prediction intervals for weekly totals.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::model::{sample_nb, PosteriorSamples};
use crate::stats::nearest_rank;
use crate::triangle::ReportingTriangle;

/// Nowcast of one week's total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekNowcast {
    pub week: EpiWeek,
    pub observed_partial: u64,
    /// Median of the sampled totals.
    pub point: f64,
    pub interval_80: (f64, f64),
    pub interval_95: (f64, f64),
    /// Sampled totals, in draw order. Empty for the naive model.
    #[serde(skip)]
    pub sample_totals: Vec<u64>,
}

impl WeekNowcast {
    /// Summarize sampled totals with nearest-rank percentiles.
    pub fn from_samples(week: EpiWeek, observed_partial: u64, sample_totals: Vec<u64>) -> Self {
        let mut sorted = sample_totals.clone();
        sorted.sort_unstable();
        let q = |p: f64| nearest_rank(&sorted, p) as f64;
        Self {
            week,
            observed_partial,
            point: q(0.5),
            interval_80: (q(0.10), q(0.90)),
            interval_95: (q(0.025), q(0.975)),
            sample_totals,
        }
    }

    /// A single value with zero-width intervals.
    pub fn degenerate(week: EpiWeek, observed_partial: u64, value: f64) -> Self {
        Self {
            week,
            observed_partial,
            point: value,
            interval_80: (value, value),
            interval_95: (value, value),
            sample_totals: Vec::new(),
        }
    }

    pub fn width_95(&self) -> f64 {
        self.interval_95.1 - self.interval_95.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NowcastResult {
    pub weeks: Vec<WeekNowcast>,
}

impl NowcastResult {
    pub fn get(&self, week: EpiWeek) -> Option<&WeekNowcast> {
        self.weeks.iter().find(|w| w.week == week)
    }

    pub fn last(&self) -> Option<&WeekNowcast> {
        self.weeks.last()
    }

    /// CSV with header `year,week,observed_partial,point,lo80,hi80,lo95,hi95`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Internal(format!("writing nowcast csv: {e}"));
        w.write_record(["year", "week", "observed_partial", "point", "lo80", "hi80", "lo95", "hi95"])
            .map_err(io)?;
        for n in &self.weeks {
            w.write_record([
                n.week.year().to_string(),
                n.week.week().to_string(),
                n.observed_partial.to_string(),
                n.point.to_string(),
                n.interval_80.0.to_string(),
                n.interval_80.1.to_string(),
                n.interval_95.0.to_string(),
                n.interval_95.1.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Internal(format!("writing nowcast csv: {e}")))
    }
}

/// SplitMix64 finalizer; spreads structured keys over the seed space.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream of cell `(week, tau)`; independent of which other cells are sampled.
fn cell_rng(seed: u64, week: EpiWeek, tau: usize) -> ChaCha8Rng {
    let key = mix(mix(seed) ^ (week.index() as u64)) ^ mix(tau as u64 ^ 0xA5A5_A5A5);
    ChaCha8Rng::seed_from_u64(key)
}

/// Nowcast every incomplete row of `triangle`.
pub fn nowcast(samples: &PosteriorSamples, triangle: &ReportingTriangle) -> Result<NowcastResult> {
    let rows: Vec<usize> = triangle.incomplete_rows().collect();
    nowcast_rows(samples, triangle, &rows)
}

/// Nowcast the given rows of `triangle`.
///
/// `triangle` may be a later view of the one `samples` were fitted on, as long as
/// every cell it leaves unobserved was unobserved at fit time.
pub fn nowcast_rows(samples: &PosteriorSamples, triangle: &ReportingTriangle, rows: &[usize]) -> Result<NowcastResult> {
    if samples.is_empty() {
        return Err(Error::Input("no posterior draws".into()));
    }
    let fitted_first = triangle.first_week();
    let index: HashMap<(usize, usize), usize> = samples
        .unobserved_cells()
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let n_draws = samples.len();
    let phis: Vec<f64> = (0..n_draws).map(|s| samples.hyper(s).phi).collect();
    let mut weeks = Vec::with_capacity(rows.len());
    for &t in rows {
        if t >= triangle.n_weeks() {
            return Err(Error::Input(format!("row {t} outside the triangle")));
        }
        let week = fitted_first.offset(t as i64);
        let partial = triangle.observed_partial(t);
        let mut totals = vec![partial; n_draws];
        for tau in 0..triangle.n_delays() {
            if triangle.is_observed(t, tau) {
                continue;
            }
            let &i = index.get(&(t, tau)).ok_or_else(|| {
                Error::Input(format!("cell ({week}, delay {tau}) has no posterior mean; refit on this triangle"))
            })?;
            let mut rng = cell_rng(samples.seed(), week, tau);
            for (s, total) in totals.iter_mut().enumerate() {
                *total += sample_nb(&mut rng, samples.lambda(s)[i], phis[s]);
            }
        }
        weeks.push(WeekNowcast::from_samples(week, partial, totals));
    }
    Ok(NowcastResult { weeks })
}

/// Naive estimate for week `t`: the count known at `as_of` for week `t - 1`.
pub fn naive_nowcast(triangle: &ReportingTriangle, t: usize) -> Result<WeekNowcast> {
    if t == 0 || t > triangle.n_weeks() {
        return Err(Error::Input(format!(
            "naive nowcast of row {t} needs row {} in a triangle of {} weeks",
            t as i64 - 1,
            triangle.n_weeks()
        )));
    }
    let week = triangle.week(t);
    let previous = triangle.observed_partial(t - 1);
    let partial = if t < triangle.n_weeks() { triangle.observed_partial(t) } else { 0 };
    Ok(WeekNowcast::degenerate(week, partial, previous as f64))
}
