//! Widely applicable information criterion from pointwise log-likelihood draws.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::PosteriorSamples;

/// `-2 * sum_i [ln mean_s exp(ll[s][i]) - var_s ll[s][i]]` with `ll` indexed draw-major.
pub fn waic(loglik: &[Vec<f64>]) -> Result<f64> {
    let mut acc = WaicAccumulator::new(loglik.first().map_or(0, |r| r.len()));
    for row in loglik {
        acc.push(row)?;
    }
    acc.finish()
}

/// Streaming form of [`waic`]: one draw at a time, constant memory per cell.
#[derive(Debug, Clone)]
pub struct WaicAccumulator {
    draws: usize,
    /// Running maximum and `sum exp(ll - max)` for the log-mean.
    max: Vec<f64>,
    scaled_sum: Vec<f64>,
    /// Welford mean and sum of squared deviations.
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WaicAccumulator {
    pub fn new(n_cells: usize) -> Self {
        Self {
            draws: 0,
            max: vec![f64::NEG_INFINITY; n_cells],
            scaled_sum: vec![0.0; n_cells],
            mean: vec![0.0; n_cells],
            m2: vec![0.0; n_cells],
        }
    }

    pub fn push(&mut self, ll: &[f64]) -> Result<()> {
        if ll.len() != self.max.len() {
            return Err(Error::Input(format!(
                "draw has {} cells, expected {}",
                ll.len(),
                self.max.len()
            )));
        }
        if let Some(v) = ll.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite log-likelihood {v}")));
        }
        self.draws += 1;
        let n = self.draws as f64;
        for (i, &v) in ll.iter().enumerate() {
            if v > self.max[i] {
                self.scaled_sum[i] = self.scaled_sum[i] * (self.max[i] - v).exp() + 1.0;
                self.max[i] = v;
            } else {
                self.scaled_sum[i] += (v - self.max[i]).exp();
            }
            let delta = v - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (v - self.mean[i]);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<f64> {
        self.finish_parts().map(|p| p.waic)
    }

    pub fn finish_parts(&self) -> Result<WaicParts> {
        if self.draws == 0 || self.max.is_empty() {
            return Err(Error::Input("WAIC needs at least one draw and one cell".into()));
        }
        let n = self.draws as f64;
        let (mut lppd, mut penalty) = (0.0, 0.0);
        for i in 0..self.max.len() {
            lppd += self.max[i] + (self.scaled_sum[i] / n).ln();
            penalty += if self.draws > 1 { self.m2[i] / (n - 1.0) } else { 0.0 };
        }
        Ok(WaicParts {
            lppd,
            penalty,
            waic: -2.0 * (lppd - penalty),
        })
    }
}

/// WAIC and its two components, summed over cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaicParts {
    /// Log pointwise predictive density.
    pub lppd: f64,
    /// Sum of per-cell posterior variances of the log-likelihood.
    pub penalty: f64,
    pub waic: f64,
}

/// WAIC over the observed cells a model was fitted on.
pub fn waic_from_samples(samples: &PosteriorSamples) -> Result<f64> {
    let mut acc = WaicAccumulator::new(samples.data().n_cells());
    let mut coefficients: HashMap<usize, Vec<f64>> = HashMap::new();
    for s in 0..samples.len() {
        let g = samples.grid_index(s);
        let c = coefficients
            .entry(g)
            .or_insert_with(|| samples.cell_log_coefficients(samples.hyper(s).phi));
        acc.push(&samples.pointwise_log_likelihood(s, c))?;
    }
    acc.finish()
}
