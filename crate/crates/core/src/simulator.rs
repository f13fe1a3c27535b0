//! Synthetic surveillance worlds with known ground truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::EpiWeek;
use crate::error::{Error, Result};
use crate::linelist::{CaseRecord, LineList};
use crate::model::sample_nb;
use crate::signals::{CoefficientLabel, SignalKind, SignalSeries};
use crate::triangle::{build_triangle, ReportingTriangle};

/// Delay probabilities in force from onset offset `start` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRegime {
    pub start: usize,
    /// `probabilities[tau]`; must sum to one.
    pub probabilities: Vec<f64>,
}

impl DelayRegime {
    /// Smallest delay whose cumulative probability reaches `fraction`.
    pub fn weeks_to_fraction(&self, fraction: f64) -> usize {
        let mut acc = 0.0;
        for (tau, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if acc >= fraction - 1e-12 {
                return tau;
            }
        }
        self.probabilities.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(t, p)| t as f64 * p).sum()
    }
}

/// How one online signal follows the truth:
/// `value_t = exp(intercept + coefficient * ln(truth_{t - lag} + 1) + noise)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalLaw {
    pub name: String,
    pub coefficient: f64,
    #[serde(default)]
    pub intercept: f64,
    pub noise_sd: f64,
    /// Positive: the signal trails the truth by this many weeks.
    #[serde(default)]
    pub lag: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Onset weeks.
    pub n_weeks: usize,
    pub start_week: EpiWeek,
    /// Weeks after the last onset week during which late cases keep arriving.
    pub tail_weeks: usize,
    /// Constant part of the weekly mean.
    pub baseline: f64,
    /// Gaussian bump height per season; seasons repeat every `season_length` weeks.
    pub amplitudes: Vec<f64>,
    pub season_length: usize,
    /// Offset of each peak within its season.
    pub peak_offset: f64,
    /// Peaks move by a uniform integer in `[-peak_jitter, peak_jitter]`.
    pub peak_jitter: u32,
    /// Standard deviation of each bump, in weeks.
    pub peak_width: f64,
    /// Negative binomial dispersion of the weekly totals.
    pub dispersion: f64,
    pub delay_regimes: Vec<DelayRegime>,
    pub signals: Vec<SignalLaw>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_weeks: 208,
            start_week: EpiWeek::new(2010, 1).expect("valid week"),
            tail_weeks: 26,
            baseline: 100.0,
            amplitudes: vec![1500.0, 600.0, 2500.0, 900.0],
            season_length: 52,
            peak_offset: 15.0,
            peak_jitter: 3,
            peak_width: 5.0,
            dispersion: 20.0,
            delay_regimes: vec![DelayRegime {
                start: 0,
                probabilities: vec![0.3, 0.25, 0.15, 0.1, 0.07, 0.05, 0.04, 0.02, 0.02],
            }],
            signals: Vec::new(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.n_weeks == 0 {
            return bad("n_weeks must be positive".into());
        }
        if !(self.baseline > 0.0) || !(self.dispersion > 0.0) || !(self.peak_width > 0.0) {
            return bad("baseline, dispersion and peak_width must be positive".into());
        }
        if self.season_length == 0 {
            return bad("season_length must be positive".into());
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0)) {
            return bad("amplitudes must be non-negative".into());
        }
        if self.delay_regimes.is_empty() || self.delay_regimes[0].start != 0 {
            return bad("the first delay regime must start at week offset 0".into());
        }
        for pair in self.delay_regimes.windows(2) {
            if pair[1].start <= pair[0].start {
                return bad("delay regimes must have increasing start offsets".into());
            }
        }
        for r in &self.delay_regimes {
            if r.probabilities.is_empty() || r.probabilities.iter().any(|p| !(*p >= 0.0)) {
                return bad(format!("delay regime at {} has invalid probabilities", r.start));
            }
            let sum: f64 = r.probabilities.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("delay regime at {} sums to {sum}, not 1", r.start));
            }
            if r.probabilities.len() - 1 > self.tail_weeks {
                return bad(format!(
                    "delay regime at {} reaches delay {} beyond the {}-week reporting tail",
                    r.start,
                    r.probabilities.len() - 1,
                    self.tail_weeks
                ));
            }
        }
        for s in &self.signals {
            if CoefficientLabel::from_signal_name(&s.name).is_none() {
                return bad(format!("unknown signal name '{}'", s.name));
            }
            if !(s.noise_sd >= 0.0) || !s.coefficient.is_finite() || !s.intercept.is_finite() {
                return bad(format!("signal '{}' has invalid parameters", s.name));
            }
        }
        Ok(())
    }

    /// Regime in force for onset offset `t`.
    pub fn regime_at(&self, t: usize) -> &DelayRegime {
        self.delay_regimes
            .iter()
            .rev()
            .find(|r| r.start <= t)
            .expect("first regime starts at 0")
    }

    pub fn max_delay(&self) -> usize {
        self.delay_regimes.iter().map(|r| r.probabilities.len() - 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: SimConfig,
    /// Seasonal mean behind each week's total.
    pub mean_curve: Vec<f64>,
    pub truths: Vec<u64>,
    /// `matrix[t][tau]`, `tau` up to the largest configured delay.
    pub matrix: Vec<Vec<u64>>,
    pub linelist: LineList,
    pub signals: Vec<SignalSeries>,
}

impl SyntheticDataset {
    pub fn first_week(&self) -> EpiWeek {
        self.config.start_week
    }

    pub fn last_onset_week(&self) -> EpiWeek {
        self.config.start_week.offset(self.config.n_weeks as i64 - 1)
    }

    /// Week by which every case has been entered.
    pub fn final_week(&self) -> EpiWeek {
        self.last_onset_week().offset(self.config.tail_weeks as i64)
    }

    pub fn signal(&self, name: &str) -> Option<&SignalSeries> {
        self.signals.iter().find(|s| s.name == name)
    }

    /// Triangle at `as_of` from the replayed line list.
    pub fn triangle_as_of(&self, as_of: EpiWeek, d_max: usize) -> Result<ReportingTriangle> {
        build_triangle(&replay_as_of(self, as_of)?, as_of, self.first_week(), d_max)
    }

    /// Write `linelist.csv`, `truth.csv`, `config.json` and one weekly CSV per signal.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            fs::File::create(&p).map_err(|e| Error::io(p.display().to_string(), e))
        };
        self.linelist.write_csv(create("linelist.csv")?)?;
        let mut w = csv::Writer::from_writer(create("truth.csv")?);
        let err = |e: csv::Error| Error::Internal(format!("writing truth.csv: {e}"));
        w.write_record(["year", "week", "truth", "mean"]).map_err(err)?;
        for (t, (&n, m)) in self.truths.iter().zip(&self.mean_curve).enumerate() {
            let wk = self.first_week().offset(t as i64);
            w.write_record([wk.year().to_string(), wk.week().to_string(), n.to_string(), format!("{m:.6}")])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("truth.csv", e))?;
        for s in &self.signals {
            s.write_weekly_csv(create(&format!("{}.csv", s.name))?)?;
        }
        let json = serde_json::to_string_pretty(&self.config)
            .map_err(|e| Error::Internal(format!("serializing config: {e}")))?;
        fs::write(dir.join("config.json"), json + "\n").map_err(|e| Error::io("config.json", e))
    }
}

/// Generate a dataset; deterministic in `config` (including its seed).
pub fn simulate(config: &SimConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_weeks;
    let n_seasons = n.div_ceil(config.season_length).max(config.amplitudes.len());
    let centres: Vec<f64> = (0..n_seasons)
        .map(|s| {
            let j = config.peak_jitter as i64;
            let shift = if j > 0 { rng.random_range(-j..=j) } else { 0 };
            (s * config.season_length) as f64 + config.peak_offset + shift as f64
        })
        .collect();
    let mean_curve: Vec<f64> = (0..n)
        .map(|t| {
            let bumps: f64 = config
                .amplitudes
                .iter()
                .zip(&centres)
                .map(|(a, c)| a * (-(t as f64 - c).powi(2) / (2.0 * config.peak_width.powi(2))).exp())
                .sum();
            config.baseline + bumps
        })
        .collect();
    let truths: Vec<u64> = mean_curve.iter().map(|&m| sample_nb(&mut rng, m, config.dispersion)).collect();

    let width = config.max_delay() + 1;
    let mut matrix = vec![vec![0u64; width]; n];
    for (t, &total) in truths.iter().enumerate() {
        let probs = &config.regime_at(t).probabilities;
        let mut remaining = total;
        let mut mass = 1.0;
        for (tau, &p) in probs.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let k = if tau + 1 == probs.len() || p >= mass {
                remaining
            } else {
                Binomial::new(remaining, (p / mass).clamp(0.0, 1.0))
                    .map_err(|e| Error::Internal(format!("binomial split: {e}")))?
                    .sample(&mut rng)
            };
            matrix[t][tau] = k;
            remaining -= k;
            mass -= p;
        }
    }

    let mut records = Vec::with_capacity(truths.iter().sum::<u64>() as usize);
    for (t, row) in matrix.iter().enumerate() {
        let onset = config.start_week.offset(t as i64).start_date();
        for (tau, &k) in row.iter().enumerate() {
            let entry_week = config.start_week.offset((t + tau) as i64).start_date();
            for _ in 0..k {
                let nd: i64 = rng.random_range(0..7);
                let ed: i64 = if tau == 0 { rng.random_range(nd..7) } else { rng.random_range(0..7) };
                records.push(CaseRecord::new(onset + Duration::days(nd), entry_week + Duration::days(ed))?);
            }
        }
    }

    let mut signals = Vec::with_capacity(config.signals.len());
    for law in &config.signals {
        let noise = Normal::new(0.0, law.noise_sd).map_err(|e| Error::Input(format!("signal noise: {e}")))?;
        let kind = CoefficientLabel::from_signal_name(&law.name).map_or(SignalKind::Count, |l| l.kind());
        let mut values = BTreeMap::new();
        for t in 0..n {
            let src = (t as i64 - law.lag).clamp(0, n as i64 - 1) as usize;
            let log_value = law.intercept + law.coefficient * (truths[src] as f64 + 1.0).ln() + noise.sample(&mut rng);
            values.insert(config.start_week.offset(t as i64), log_value.exp());
        }
        signals.push(SignalSeries::new(law.name.clone(), kind, values)?);
    }

    Ok(SyntheticDataset {
        config: config.clone(),
        mean_curve,
        truths,
        matrix,
        linelist: LineList::new(records),
        signals,
    })
}

/// The line list as visible at the end of `week`.
pub fn replay_as_of(d: &SyntheticDataset, week: EpiWeek) -> Result<LineList> {
    if week < d.first_week() || week > d.final_week() {
        return Err(Error::Input(format!(
            "week {week} outside the simulated range {}..={}",
            d.first_week(),
            d.final_week()
        )));
    }
    Ok(d.linelist.as_of(week))
}
