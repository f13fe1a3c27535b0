//! Accuracy, precision and calibration metrics over weekly nowcasts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::nowcast::WeekNowcast;

/// Weekly count at or above which a week counts as epidemic.
pub const DEFAULT_EPIDEMIC_THRESHOLD: f64 = 550.0;
/// Weekly count at or above which a week counts as high-incidence.
pub const DEFAULT_HIGH_THRESHOLD: f64 = 4000.0;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Input(format!("length mismatch: {a} estimates vs {b} truths")));
    }
    if a == 0 {
        return Err(Error::Input("no weeks to score".into()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(points: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(points.len(), truths.len())?;
    Ok(points.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / points.len() as f64)
}

/// Ratio of a model's metric to a reference model's.
pub fn relative_metric(model_value: f64, reference_value: f64) -> Result<f64> {
    if !(reference_value > 0.0) || !reference_value.is_finite() {
        return Err(Error::Metric(format!("reference value must be positive, got {reference_value}")));
    }
    Ok(model_value / reference_value)
}

/// Mean width of the 95% prediction interval.
pub fn mpi(results: &[WeekNowcast]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Input("no weeks to score".into()));
    }
    Ok(results.iter().map(|r| r.width_95()).sum::<f64>() / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalLevel {
    P80,
    P95,
}

impl IntervalLevel {
    fn bounds(self, w: &WeekNowcast) -> (f64, f64) {
        match self {
            IntervalLevel::P80 => w.interval_80,
            IntervalLevel::P95 => w.interval_95,
        }
    }
}

/// Percent of weeks whose truth lies in the interval, overall and split at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub all: f64,
    /// Weeks with truth at or above the threshold; `None` without a split or without such weeks.
    pub above: Option<f64>,
    pub below: Option<f64>,
    pub n_all: usize,
    pub n_above: usize,
    pub n_below: usize,
}

pub fn coverage(results: &[WeekNowcast], truths: &[f64], level: IntervalLevel, threshold: Option<f64>) -> Result<Coverage> {
    check_lengths(results.len(), truths.len())?;
    let inside = |w: &WeekNowcast, t: f64| {
        let (lo, hi) = level.bounds(w);
        lo <= t && t <= hi
    };
    let pct = |hits: usize, n: usize| if n == 0 { None } else { Some(100.0 * hits as f64 / n as f64) };
    let (mut hits, mut hits_above, mut n_above, mut hits_below, mut n_below) = (0, 0, 0, 0, 0);
    for (w, &t) in results.iter().zip(truths) {
        let hit = inside(w, t);
        hits += usize::from(hit);
        if let Some(th) = threshold {
            if t >= th {
                n_above += 1;
                hits_above += usize::from(hit);
            } else {
                n_below += 1;
                hits_below += usize::from(hit);
            }
        }
    }
    Ok(Coverage {
        all: pct(hits, results.len()).unwrap_or(0.0),
        above: pct(hits_above, n_above),
        below: pct(hits_below, n_below),
        n_all: results.len(),
        n_above,
        n_below,
    })
}

/// `log10(estimate / truth)`.
pub fn log_error(estimate: f64, truth: f64) -> Result<f64> {
    if !(estimate > 0.0) || !(truth > 0.0) {
        return Err(Error::Metric(format!(
            "log error needs positive estimate and truth, got {estimate} and {truth}"
        )));
    }
    Ok((estimate / truth).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Below the epidemic threshold.
    NonEpidemic,
    /// At or above the epidemic threshold, below the high threshold.
    Epidemic,
    /// At or above the high threshold.
    High,
}

impl Regime {
    pub fn of(truth: f64, epidemic: f64, high: f64) -> Self {
        if truth >= high {
            Regime::High
        } else if truth >= epidemic {
            Regime::Epidemic
        } else {
            Regime::NonEpidemic
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::NonEpidemic => "non-epidemic",
            Regime::Epidemic => "epidemic",
            Regime::High => "high",
        }
    }
}

/// Partition weeks by the regime of their truth. Lower bounds are inclusive.
pub fn regime_split(weeks: &[EpiWeek], truths: &[f64], epidemic: f64, high: f64) -> BTreeMap<Regime, Vec<EpiWeek>> {
    let mut out: BTreeMap<Regime, Vec<EpiWeek>> = BTreeMap::new();
    for (&w, &t) in weeks.iter().zip(truths) {
        out.entry(Regime::of(t, epidemic, high)).or_default().push(w);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearScore {
    pub mae: f64,
    /// MAE relative to the reference model in the same year.
    pub rmae: f64,
    pub n_weeks: usize,
    /// Fewer scored weeks than the epidemiological year holds.
    pub partial: bool,
}

/// Per epidemiological year MAE of `points` and its ratio to `reference_points`.
pub fn per_year_table(
    weeks: &[EpiWeek],
    points: &[f64],
    reference_points: &[f64],
    truths: &[f64],
) -> Result<BTreeMap<i32, YearScore>> {
    check_lengths(points.len(), truths.len())?;
    check_lengths(reference_points.len(), truths.len())?;
    check_lengths(weeks.len(), truths.len())?;
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, w) in weeks.iter().enumerate() {
        by_year.entry(w.year()).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    for (year, idx) in by_year {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let t = pick(truths);
        let m = mae(&pick(points), &t)?;
        let r = mae(&pick(reference_points), &t)?;
        let rmae = if m == r { 1.0 } else { relative_metric(m, r).unwrap_or(f64::NAN) };
        let full = EpiWeek::weeks_in_year(year).unwrap_or(52) as usize;
        out.insert(
            year,
            YearScore {
                mae: m,
                rmae,
                n_weeks: idx.len(),
                partial: idx.len() < full,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(lo95: f64, lo80: f64, p: f64, hi80: f64, hi95: f64) -> WeekNowcast {
        WeekNowcast {
            week: EpiWeek::new(2014, 1).unwrap(),
            observed_partial: 0,
            point: p,
            interval_80: (lo80, hi80),
            interval_95: (lo95, hi95),
            sample_totals: vec![],
        }
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[10.0, 20.0], &[12.0, 16.0]).unwrap(), 3.0);
        assert!((mae(&[300.0], &[567.2]).unwrap() - 267.2).abs() < 1e-9);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn relative_examples() {
        assert_eq!(format!("{:.3}", relative_metric(267.2, 425.0).unwrap()), "0.629");
        assert_eq!(format!("{:.3}", relative_metric(215.4, 267.2).unwrap()), "0.806");
        assert_eq!(relative_metric(3.7, 3.7).unwrap(), 1.0);
        assert!(matches!(relative_metric(1.0, 0.0), Err(Error::Metric(_))));
    }

    #[test]
    fn mpi_examples() {
        assert_eq!(mpi(&vec![w(0.0, 1.0, 2.0, 3.0, 10.0); 3]).unwrap(), 10.0);
        assert_eq!(mpi(&[w(5.0, 5.0, 5.0, 5.0, 5.0), w(0.0, 1.0, 2.0, 3.0, 20.0)]).unwrap(), 10.0);
        // 1554.6 * 0.912
        assert!((1554.6f64 * 0.912 - 1417.8).abs() < 0.05);
    }

    #[test]
    fn coverage_examples() {
        let r = vec![w(0.0, 4.0, 5.0, 6.0, 10.0); 4];
        assert_eq!(coverage(&r, &[1.0, 2.0, 3.0, 9.0], IntervalLevel::P95, None).unwrap().all, 100.0);
        assert_eq!(coverage(&r, &[11.0; 4], IntervalLevel::P95, None).unwrap().all, 0.0);
        let c = coverage(&r, &[1.0, 5.0, 9.0, 12.0], IntervalLevel::P80, Some(8.0)).unwrap();
        assert_eq!(c.all, 25.0);
        assert_eq!((c.n_above, c.n_below), (2, 2));
        assert_eq!(c.above, Some(0.0));
        assert_eq!(c.below, Some(50.0));
    }

    #[test]
    fn log_error_examples() {
        assert_eq!(log_error(5.0, 5.0).unwrap(), 0.0);
        assert!((log_error(10.0, 5.0).unwrap() - std::f64::consts::LOG10_2).abs() < 1e-12);
        assert!((log_error(2.5, 5.0).unwrap() + std::f64::consts::LOG10_2).abs() < 1e-12);
        assert!(log_error(0.0, 5.0).is_err());
        assert!(log_error(1.0, 0.0).is_err());
    }

    #[test]
    fn regime_boundaries() {
        assert_eq!(Regime::of(100.0, 550.0, 4000.0), Regime::NonEpidemic);
        assert_eq!(Regime::of(550.0, 550.0, 4000.0), Regime::Epidemic);
        assert_eq!(Regime::of(4000.0, 550.0, 4000.0), Regime::High);
        let wk = EpiWeek::new(2014, 2).unwrap();
        let split = regime_split(&[wk, wk.succ()], &[549.0, 4001.0], 550.0, 4000.0);
        assert_eq!(split[&Regime::NonEpidemic], vec![wk]);
        assert_eq!(split[&Regime::High], vec![wk.succ()]);
    }

    #[test]
    fn per_year_identical_model_is_one() {
        let start = EpiWeek::new(2014, 50).unwrap();
        let weeks: Vec<EpiWeek> = start.through(start.offset(10)).collect();
        let truths: Vec<f64> = (0..11).map(|i| i as f64 * 10.0).collect();
        let points: Vec<f64> = truths.iter().map(|t| t + 3.0).collect();
        let table = per_year_table(&weeks, &points, &points, &truths).unwrap();
        assert_eq!(table.len(), 2);
        assert!(table.values().all(|y| y.rmae == 1.0 && y.partial));
    }
}
