use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{CoefficientLabel, RegressorSet};

/// The seven compared models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Baseline,
    GoogleDengue,
    Twitter,
    GoogleDengueTwitter,
    GoogleAll,
    GoogleAllTwitter,
    Naive,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::Baseline,
        ModelVariant::GoogleDengue,
        ModelVariant::Twitter,
        ModelVariant::GoogleDengueTwitter,
        ModelVariant::GoogleAll,
        ModelVariant::GoogleAllTwitter,
        ModelVariant::Naive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::Baseline => "baseline",
            ModelVariant::GoogleDengue => "google-dengue",
            ModelVariant::Twitter => "twitter",
            ModelVariant::GoogleDengueTwitter => "google-dengue-twitter",
            ModelVariant::GoogleAll => "google-all",
            ModelVariant::GoogleAllTwitter => "google-all-twitter",
            ModelVariant::Naive => "naive",
        }
    }

    /// Coefficients the variant's linear predictor carries, in column order.
    pub fn required_labels(&self) -> &'static [CoefficientLabel] {
        use CoefficientLabel::*;
        match self {
            ModelVariant::Baseline | ModelVariant::Naive => &[],
            ModelVariant::GoogleDengue => &[GammaDengue],
            ModelVariant::Twitter => &[Delta],
            ModelVariant::GoogleDengueTwitter => &[GammaDengue, Delta],
            ModelVariant::GoogleAll => &[GammaDengue, GammaZika, GammaChikungunya],
            ModelVariant::GoogleAllTwitter => &[GammaDengue, GammaZika, GammaChikungunya, Delta],
        }
    }

    /// Signal names the variant needs.
    pub fn required_signals(&self) -> Vec<&'static str> {
        self.required_labels().iter().map(|l| l.signal_name()).collect()
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(" | ")
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Input(format!("unknown model '{s}'; valid names: {}", Self::valid_names())))
    }
}

/// A model variant bound to its regressors and maximum modeled delay.
///
/// Regressor series are expected already log-transformed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub regressors: RegressorSet,
    pub d_max: usize,
}

impl ModelSpec {
    pub fn new(variant: ModelVariant, regressors: RegressorSet, d_max: usize) -> Result<Self> {
        let got = regressors.labels();
        let want = variant.required_labels();
        if got != want {
            return Err(Error::Input(format!(
                "model '{variant}' needs regressors [{}] in that order, got [{}]",
                want.iter().map(|l| l.symbol()).collect::<Vec<_>>().join(", "),
                got.iter().map(|l| l.symbol()).collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Self {
            variant,
            regressors,
            d_max,
        })
    }
}
