//! Weekly online-signal series (search probabilities, tweet counts) and
//! their conversion into regressor columns.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{parse_date, EpiWeek};
use crate::error::{Error, Result};

/// Whether a signal carries counts or probabilities; decides the log offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Count,
    Probability,
}

/// The regression coefficient a signal feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoefficientLabel {
    /// Searches about dengue.
    #[serde(rename = "gamma_d")]
    GammaDengue,
    /// Searches about Zika.
    #[serde(rename = "gamma_z")]
    GammaZika,
    /// Searches about chikungunya.
    #[serde(rename = "gamma_c")]
    GammaChikungunya,
    /// Tweets reporting personal experience of dengue.
    #[serde(rename = "delta")]
    Delta,
}

impl CoefficientLabel {
    pub const ALL: [CoefficientLabel; 4] = [
        CoefficientLabel::GammaDengue,
        CoefficientLabel::GammaZika,
        CoefficientLabel::GammaChikungunya,
        CoefficientLabel::Delta,
    ];

    /// Canonical signal name expected on the command line and in file names.
    pub fn signal_name(&self) -> &'static str {
        match self {
            CoefficientLabel::GammaDengue => "google-dengue",
            CoefficientLabel::GammaZika => "google-zika",
            CoefficientLabel::GammaChikungunya => "google-chikungunya",
            CoefficientLabel::Delta => "twitter",
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            CoefficientLabel::GammaDengue => "gamma_d",
            CoefficientLabel::GammaZika => "gamma_z",
            CoefficientLabel::GammaChikungunya => "gamma_c",
            CoefficientLabel::Delta => "delta",
        }
    }

    pub fn kind(&self) -> SignalKind {
        match self {
            CoefficientLabel::Delta => SignalKind::Count,
            _ => SignalKind::Probability,
        }
    }

    pub fn from_signal_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.signal_name() == name)
    }
}

impl fmt::Display for CoefficientLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for CoefficientLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.symbol() == s || l.signal_name() == s)
            .ok_or_else(|| Error::Input(format!("unknown coefficient or signal '{s}'")))
    }
}

/// A named weekly series of non-negative values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub name: String,
    pub kind: SignalKind,
    values: BTreeMap<EpiWeek, f64>,
}

impl SignalSeries {
    pub fn new(name: impl Into<String>, kind: SignalKind, values: BTreeMap<EpiWeek, f64>) -> Result<Self> {
        let name = name.into();
        if let Some((w, v)) = values.iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input(format!(
                "signal '{name}' has invalid value {v} at {w}; values must be finite and non-negative"
            )));
        }
        Ok(Self { name, kind, values })
    }

    pub fn values(&self) -> &BTreeMap<EpiWeek, f64> {
        &self.values
    }

    pub fn get(&self, week: EpiWeek) -> Option<f64> {
        self.values.get(&week).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parse a CSV with header `date,value` (daily rows, summed per week) or
    /// `year,week,value` (weekly rows).
    pub fn from_csv_reader<R: Read>(reader: R, name: &str, kind: SignalKind, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Input(format!("{source}: cannot read header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let daily = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["date", "value"] => true,
            ["year", "week", "value"] => false,
            other => {
                return Err(Error::Input(format!(
                    "{source}: expected header 'date,value' or 'year,week,value', found '{}'",
                    other.join(",")
                )))
            }
        };
        let mut values: BTreeMap<EpiWeek, f64> = BTreeMap::new();
        let mut seen_dates = std::collections::BTreeSet::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Row {
                path: source.to_string(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let row_err = |message: String| Error::Row {
                path: source.to_string(),
                line,
                message,
            };
            let parse_value = |s: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| row_err(format!("invalid value '{s}'")))?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(row_err(format!("value {v} must be finite and non-negative")));
                }
                Ok(v)
            };
            if daily {
                let date = parse_date(&row[0]).map_err(|e| row_err(e.to_string()))?;
                if !seen_dates.insert(date) {
                    return Err(row_err(format!("duplicate date {date}")));
                }
                *values.entry(EpiWeek::from_date(date)).or_insert(0.0) += parse_value(&row[1])?;
            } else {
                let year: i32 = row[0].parse().map_err(|_| row_err(format!("invalid year '{}'", &row[0])))?;
                let week: u32 = row[1].parse().map_err(|_| row_err(format!("invalid week '{}'", &row[1])))?;
                let w = EpiWeek::new(year, week).map_err(|e| row_err(e.to_string()))?;
                if values.insert(w, parse_value(&row[2])?).is_some() {
                    return Err(row_err(format!("duplicate week {w}")));
                }
            }
        }
        Self::new(name, kind, values)
    }

    pub fn write_weekly_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let res: std::result::Result<(), csv::Error> = (|| {
            w.write_record(["year", "week", "value"])?;
            for (wk, v) in &self.values {
                w.write_record([wk.year().to_string(), wk.week().to_string(), format!("{v}")])?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| Error::Internal(format!("writing signal '{}': {e}", self.name)))
    }
}

/// Read a signal CSV. The kind follows the canonical name (`twitter` is a
/// count; `google-*` are probabilities); unknown names are treated as counts.
pub fn ingest_signal_csv(path: impl AsRef<Path>, name: &str) -> Result<SignalSeries> {
    let path = path.as_ref();
    let kind = CoefficientLabel::from_signal_name(name)
        .map(|l| l.kind())
        .unwrap_or(SignalKind::Count);
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    SignalSeries::from_csv_reader(file, name, kind, &path.display().to_string())
}

/// Default log offset: 1 for counts, half the smallest positive value for probabilities.
pub fn default_epsilon(s: &SignalSeries) -> f64 {
    match s.kind {
        SignalKind::Count => 1.0,
        SignalKind::Probability => s
            .values
            .values()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min)
            * 0.5,
    }
}

/// `ln(v + epsilon)` for every week. `None` picks [`default_epsilon`].
pub fn log_regressor(s: &SignalSeries, epsilon: Option<f64>) -> Result<SignalSeries> {
    let eps = epsilon.unwrap_or_else(|| default_epsilon(s));
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!(
            "log offset for '{}' must be positive and finite (got {eps}); an all-zero probability series has no default",
            s.name
        )));
    }
    let values = s.values.iter().map(|(w, v)| (*w, (v + eps).ln())).collect();
    // Log-values may be negative, so bypass the non-negativity check of `new`.
    Ok(SignalSeries {
        name: format!("log({})", s.name),
        kind: s.kind,
        values,
    })
}

/// What to do when a series lacks a week inside the aligned range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    #[default]
    Fail,
    /// Carry the most recent earlier value forward.
    CarryForward,
}

/// Ordered regressors, each bound to the coefficient it feeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressorSet {
    pub members: Vec<(SignalSeries, CoefficientLabel)>,
}

impl RegressorSet {
    pub fn new(members: Vec<(SignalSeries, CoefficientLabel)>) -> Self {
        Self { members }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn labels(&self) -> Vec<CoefficientLabel> {
        self.members.iter().map(|m| m.1).collect()
    }
}

/// Weeks x regressors matrix over `[first, last]`, columns in declaration order.
pub fn align(r: &RegressorSet, first: EpiWeek, last: EpiWeek, fill: FillPolicy) -> Result<Vec<Vec<f64>>> {
    let weeks: Vec<EpiWeek> = first.through(last).collect();
    let mut out = vec![Vec::with_capacity(r.len()); weeks.len()];
    for (series, _) in &r.members {
        for (i, w) in weeks.iter().enumerate() {
            let v = match (series.get(*w), fill) {
                (Some(v), _) => v,
                (None, FillPolicy::CarryForward) => series
                    .values
                    .range(..*w)
                    .next_back()
                    .map(|(_, v)| *v)
                    .ok_or_else(|| {
                        Error::Input(format!("signal '{}' has no value at or before {w}", series.name))
                    })?,
                (None, FillPolicy::Fail) => {
                    return Err(Error::Input(format!("signal '{}' is missing week {w}", series.name)))
                }
            };
            out[i].push(v);
        }
    }
    Ok(out)
}

/// Kendall's tau-b between paired samples, with the number of pairs.
///
/// `tau_b = (C - D) / sqrt((C + D + Tx) * (C + D + Ty))` where `Tx` counts pairs
/// tied only in `x` and `Ty` pairs tied only in `y`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<(f64, usize)> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Input("need at least two paired observations".into()));
    }
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).ok_or_else(|| Error::Input("NaN in x".into()))?;
            let dy = y[i].partial_cmp(&y[j]).ok_or_else(|| Error::Input("NaN in y".into()))?;
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tie_x += 1,
                (_, Equal) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tie_x) * (concordant + discordant + tie_y)) as f64).sqrt();
    let tau = if denom == 0.0 {
        f64::NAN
    } else {
        (concordant - discordant) as f64 / denom
    };
    Ok((tau, n))
}
