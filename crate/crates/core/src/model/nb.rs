//! Negative binomial in the mean–dispersion parameterization:
//! mean `lambda`, variance `lambda * (1 + lambda / phi)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Counts up to this size use an exact log-sum for the gamma-ratio term.
const SMALL_COUNT: u64 = 256;

/// `ln Γ(k + phi) − ln Γ(phi) − ln Γ(k + 1)`, the only part of the log-pmf
/// that does not involve the mean.
pub fn log_coefficient(k: u64, phi: f64) -> f64 {
    if k <= SMALL_COUNT {
        (0..k).map(|j| ((phi + j as f64) / (j as f64 + 1.0)).ln()).sum()
    } else {
        let kf = k as f64;
        ln_gamma(kf + phi) - ln_gamma(phi) - ln_gamma(kf + 1.0)
    }
}

/// Mean-dependent part of the log-pmf given `ln(lambda)`:
/// `-k ln(1 + phi/lambda) - phi ln(1 + lambda/phi)`.
#[inline]
pub(crate) fn log_kernel(k: f64, log_lambda: f64, phi: f64) -> f64 {
    let lambda = log_lambda.exp();
    let a = if k > 0.0 { -k * (phi * (-log_lambda).exp()).ln_1p() } else { 0.0 };
    a - phi * (lambda / phi).ln_1p()
}

/// First and negated second derivative of the log-pmf with respect to `ln(lambda)`.
#[inline]
pub(crate) fn score_and_weight(k: f64, log_lambda: f64, phi: f64) -> (f64, f64) {
    let lambda = log_lambda.exp();
    let denom = phi + lambda;
    let score = phi * (k - lambda) / denom;
    let weight = (k + phi) * phi * lambda / (denom * denom);
    (score, weight)
}

/// Log-probability of `k` under NB(mean `lambda`, dispersion `phi`).
pub fn nb_log_pmf(k: u64, lambda: f64, phi: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("mean must be positive and finite, got {lambda}")));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Parameter(format!("dispersion must be positive and finite, got {phi}")));
    }
    Ok(log_coefficient(k, phi) + log_kernel(k as f64, lambda.ln(), phi))
}

/// Draw from NB(mean `lambda`, dispersion `phi`) as a gamma–Poisson mixture.
pub fn sample_nb<R: Rng + ?Sized>(rng: &mut R, lambda: f64, phi: f64) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    let rate = match Gamma::new(phi, lambda / phi) {
        Ok(g) => g.sample(rng),
        Err(_) => lambda,
    };
    if !(rate > 0.0) || !rate.is_finite() {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}
