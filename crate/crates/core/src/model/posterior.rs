//! Latent Gaussian posterior of the delay model.
//!
//! The latent field is stored flat as `[alpha_0..alpha_{T-1}, mu, beta_0..beta_D, coef_1..coef_p]`
//! so that its precision matrix has arrowhead structure (see [`super::arrow`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::arrow::ArrowMatrix;
use super::nb::{log_coefficient, log_kernel, score_and_weight};
use crate::error::{Error, Result};
use crate::triangle::ReportingTriangle;

/// Positions of each latent block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_weeks: usize,
    pub n_delays: usize,
    pub n_coef: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n_weeks + self.corner_dim()
    }

    /// Size of the dense block: `mu`, the delay effects and the coefficients.
    pub fn corner_dim(&self) -> usize {
        1 + self.n_delays + self.n_coef
    }

    pub fn mu(&self) -> usize {
        self.n_weeks
    }

    pub fn beta(&self, tau: usize) -> usize {
        self.n_weeks + 1 + tau
    }

    pub fn coef(&self, j: usize) -> usize {
        self.n_weeks + 1 + self.n_delays + j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Regression coefficients in regressor column order.
    pub coefficients: Vec<f64>,
}

impl LatentState {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            mu: 0.0,
            alpha: vec![0.0; layout.n_weeks],
            beta: vec![0.0; layout.n_delays],
            coefficients: vec![0.0; layout.n_coef],
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n_weeks: self.alpha.len(),
            n_delays: self.beta.len(),
            n_coef: self.coefficients.len(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout().dim());
        x.extend_from_slice(&self.alpha);
        x.push(self.mu);
        x.extend_from_slice(&self.beta);
        x.extend_from_slice(&self.coefficients);
        x
    }

    pub fn from_slice(layout: Layout, x: &[f64]) -> Self {
        let t = layout.n_weeks;
        Self {
            alpha: x[..t].to_vec(),
            mu: x[t],
            beta: x[t + 1..t + 1 + layout.n_delays].to_vec(),
            coefficients: x[t + 1 + layout.n_delays..layout.dim()].to_vec(),
        }
    }
}

/// `log lambda[t][tau] = mu + alpha_t + beta_tau + sum_j coef_j * regressors[t][j]`.
pub fn linear_predictor(state: &LatentState, regressors: &[Vec<f64>], t: usize, tau: usize) -> Result<f64> {
    let alpha = state
        .alpha
        .get(t)
        .ok_or_else(|| Error::Internal(format!("week index {t} out of range")))?;
    let beta = state
        .beta
        .get(tau)
        .ok_or_else(|| Error::Internal(format!("delay index {tau} out of range")))?;
    let mut eta = state.mu + alpha + beta;
    if !state.coefficients.is_empty() {
        let row = regressors
            .get(t)
            .ok_or_else(|| Error::Internal(format!("no regressor row for week index {t}")))?;
        if row.len() != state.coefficients.len() {
            return Err(Error::Internal(format!(
                "regressor row has {} columns, state has {} coefficients",
                row.len(),
                state.coefficients.len()
            )));
        }
        eta += state.coefficients.iter().zip(row).map(|(c, z)| c * z).sum::<f64>();
    }
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Negative binomial dispersion.
    pub phi: f64,
    /// Innovation variance of the week random walk.
    pub eta_alpha: f64,
    /// Innovation variance of the delay random walk.
    pub eta_beta: f64,
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("phi", self.phi), ("eta_alpha", self.eta_alpha), ("eta_beta", self.eta_beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Working scale: `(ln phi, ln 1/eta_alpha, ln 1/eta_beta)`.
    pub fn to_theta(&self) -> [f64; 3] {
        [self.phi.ln(), -self.eta_alpha.ln(), -self.eta_beta.ln()]
    }

    pub fn from_theta(theta: [f64; 3]) -> Self {
        Self {
            phi: theta[0].exp(),
            eta_alpha: (-theta[1]).exp(),
            eta_beta: (-theta[2]).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Variance of the Gaussian priors on `mu`, `alpha_0`, `beta_0` and the coefficients.
    pub fixed_variance: f64,
    /// Gamma shape and rate for `phi` and the two random-walk precisions.
    pub hyper_shape: f64,
    pub hyper_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            fixed_variance: 100.0,
            hyper_shape: 1.0,
            hyper_rate: 5e-5,
        }
    }
}

impl Priors {
    /// Log-density of the working-scale hyperparameters (Gamma on each positive
    /// quantity plus the log-Jacobian).
    pub fn log_hyperprior(&self, hyper: &Hyperparameters) -> f64 {
        let (a, b) = (self.hyper_shape, self.hyper_rate);
        hyper
            .to_theta()
            .iter()
            .map(|&th| a * b.ln() - statrs::function::gamma::ln_gamma(a) + a * th - b * th.exp())
            .sum()
    }
}

/// Observed cells and covariates, ready for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct ModelData {
    layout: Layout,
    /// Week index, delay, count.
    cells: Vec<(usize, usize, f64)>,
    /// Row-major `n_weeks x n_coef`.
    covariates: Vec<f64>,
    /// Distinct counts with multiplicities, for the mean-free pmf part.
    count_groups: Vec<(u64, usize)>,
    total: u64,
}

impl ModelData {
    /// Observed cells of `triangle` with one covariate row per triangle week.
    pub fn new(triangle: &ReportingTriangle, covariates: &[Vec<f64>]) -> Result<Self> {
        let n_weeks = triangle.n_weeks();
        let n_coef = covariates.first().map_or(0, |r| r.len());
        if !covariates.is_empty() && covariates.len() != n_weeks {
            return Err(Error::Internal(format!(
                "{} covariate rows for a triangle of {n_weeks} weeks",
                covariates.len()
            )));
        }
        let mut flat = Vec::with_capacity(n_weeks * n_coef);
        for row in covariates {
            if row.len() != n_coef {
                return Err(Error::Internal("ragged covariate matrix".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("non-finite regressor value".into()));
            }
            flat.extend_from_slice(row);
        }
        let cells: Vec<(usize, usize, f64)> = triangle.observed_cells().map(|(t, tau, k)| (t, tau, k as f64)).collect();
        let mut counts: Vec<u64> = triangle.observed_cells().map(|(_, _, k)| k).collect();
        let total = counts.iter().sum();
        counts.sort_unstable();
        let mut count_groups: Vec<(u64, usize)> = Vec::new();
        for k in counts {
            match count_groups.last_mut() {
                Some((v, m)) if *v == k => *m += 1,
                _ => count_groups.push((k, 1)),
            }
        }
        Ok(Self {
            layout: Layout {
                n_weeks,
                n_delays: triangle.n_delays(),
                n_coef,
            },
            cells,
            covariates: flat,
            count_groups,
            total,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn cells(&self) -> &[(usize, usize, f64)] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn covariate_row(&self, t: usize) -> &[f64] {
        let p = self.layout.n_coef;
        &self.covariates[t * p..(t + 1) * p]
    }

    /// Linear predictor of cell `(t, tau)` for the flat latent vector `x`.
    #[inline]
    pub fn eta(&self, x: &[f64], t: usize, tau: usize) -> f64 {
        let l = &self.layout;
        let mut eta = x[t] + x[l.mu()] + x[l.beta(tau)];
        if l.n_coef > 0 {
            let c = &x[l.coef(0)..l.coef(0) + l.n_coef];
            eta += c.iter().zip(self.covariate_row(t)).map(|(a, b)| a * b).sum::<f64>();
        }
        eta
    }

    /// `sum over observed cells of ln Γ(k+phi) − ln Γ(phi) − ln k!`.
    pub fn log_coefficient_sum(&self, phi: f64) -> f64 {
        self.count_groups
            .iter()
            .map(|&(k, m)| m as f64 * log_coefficient(k, phi))
            .sum()
    }

    /// Mean-dependent part of the log-likelihood.
    pub fn log_kernel_sum(&self, x: &[f64], phi: f64) -> f64 {
        self.cells
            .iter()
            .map(|&(t, tau, k)| log_kernel(k, self.eta(x, t, tau), phi))
            .sum()
    }

    pub fn log_likelihood(&self, x: &[f64], phi: f64) -> f64 {
        self.log_coefficient_sum(phi) + self.log_kernel_sum(x, phi)
    }
}

fn gaussian_log_density(x: f64, variance: f64) -> f64 {
    -0.5 * ((2.0 * PI * variance).ln() + x * x / variance)
}

/// Normalized log-density of the latent field given the hyperparameters.
pub fn log_prior_latent(x: &[f64], layout: Layout, hyper: &Hyperparameters, priors: &Priors) -> f64 {
    let v = priors.fixed_variance;
    let mut lp = gaussian_log_density(x[layout.mu()], v);
    if layout.n_weeks > 0 {
        lp += gaussian_log_density(x[0], v);
        for t in 1..layout.n_weeks {
            lp += gaussian_log_density(x[t] - x[t - 1], hyper.eta_alpha);
        }
    }
    if layout.n_delays > 0 {
        lp += gaussian_log_density(x[layout.beta(0)], v);
        for tau in 1..layout.n_delays {
            lp += gaussian_log_density(x[layout.beta(tau)] - x[layout.beta(tau - 1)], hyper.eta_beta);
        }
    }
    for j in 0..layout.n_coef {
        lp += gaussian_log_density(x[layout.coef(j)], v);
    }
    lp
}

/// Full log-posterior: likelihood of observed cells, latent priors and hyperpriors.
pub fn log_posterior(state: &LatentState, hyper: &Hyperparameters, data: &ModelData, priors: &Priors) -> Result<f64> {
    check_dims(state, data)?;
    hyper.validate()?;
    let x = state.to_vec();
    Ok(data.log_likelihood(&x, hyper.phi)
        + log_prior_latent(&x, data.layout, hyper, priors)
        + priors.log_hyperprior(hyper))
}

/// Gradient of [`log_posterior`] with respect to the flat latent vector.
pub fn log_posterior_gradient(
    state: &LatentState,
    hyper: &Hyperparameters,
    data: &ModelData,
    priors: &Priors,
) -> Result<Vec<f64>> {
    check_dims(state, data)?;
    hyper.validate()?;
    let x = state.to_vec();
    let mut g = vec![0.0; x.len()];
    accumulate_likelihood(data, &x, hyper.phi, &mut g, None);
    let q = prior_precision(data.layout, hyper, priors);
    for (gi, qx) in g.iter_mut().zip(q.mul_vec(&x)) {
        *gi -= qx;
    }
    Ok(g)
}

fn check_dims(state: &LatentState, data: &ModelData) -> Result<()> {
    if state.layout() != data.layout {
        return Err(Error::Internal(format!(
            "latent state {:?} does not match data {:?}",
            state.layout(),
            data.layout
        )));
    }
    Ok(())
}

/// Precision matrix of the latent Gaussian prior.
pub fn prior_precision(layout: Layout, hyper: &Hyperparameters, priors: &Priors) -> ArrowMatrix {
    let (n, k) = (layout.n_weeks, layout.corner_dim());
    let fixed = 1.0 / priors.fixed_variance;
    let mut q = ArrowMatrix::zeros(n, k);
    let ka = 1.0 / hyper.eta_alpha;
    for t in 0..n {
        let mut d = 0.0;
        if t > 0 {
            d += ka;
            q.off[t - 1] = -ka;
        }
        if t + 1 < n {
            d += ka;
        }
        q.diag[t] = d;
    }
    if n > 0 {
        q.diag[0] += fixed;
    }
    q.corner[(0, 0)] = fixed;
    let kb = 1.0 / hyper.eta_beta;
    let nd = layout.n_delays;
    for tau in 0..nd {
        let i = 1 + tau;
        if tau > 0 {
            q.corner[(i, i)] += kb;
            q.corner[(i, i - 1)] = -kb;
            q.corner[(i - 1, i)] = -kb;
        }
        if tau + 1 < nd {
            q.corner[(i, i)] += kb;
        }
    }
    if nd > 0 {
        q.corner[(1, 1)] += fixed;
    }
    for j in 0..layout.n_coef {
        let i = 1 + nd + j;
        q.corner[(i, i)] = fixed;
    }
    q
}

/// Add the likelihood score to `grad` and, if given, the likelihood's negated
/// Hessian to `hess`. Returns the mean-dependent log-likelihood.
pub(crate) fn accumulate_likelihood(
    data: &ModelData,
    x: &[f64],
    phi: f64,
    grad: &mut [f64],
    mut hess: Option<&mut ArrowMatrix>,
) -> f64 {
    let l = data.layout;
    let p = l.n_coef;
    let mut value = 0.0;
    let mut design = vec![0.0; p];
    for &(t, tau, k) in &data.cells {
        let eta = data.eta(x, t, tau);
        value += log_kernel(k, eta, phi);
        let (s, w) = score_and_weight(k, eta, phi);
        let z = data.covariate_row(t);
        grad[t] += s;
        grad[l.mu()] += s;
        grad[l.beta(tau)] += s;
        for j in 0..p {
            grad[l.coef(j)] += s * z[j];
        }
        if let Some(h) = hess.as_deref_mut() {
            let cb = 1 + tau;
            h.diag[t] += w;
            h.border[(t, 0)] += w;
            h.border[(t, cb)] += w;
            h.corner[(0, 0)] += w;
            h.corner[(0, cb)] += w;
            h.corner[(cb, 0)] += w;
            h.corner[(cb, cb)] += w;
            if p > 0 {
                for j in 0..p {
                    design[j] = w * z[j];
                }
                let base = 1 + l.n_delays;
                for j in 0..p {
                    let c = base + j;
                    h.border[(t, c)] += design[j];
                    h.corner[(0, c)] += design[j];
                    h.corner[(c, 0)] += design[j];
                    h.corner[(cb, c)] += design[j];
                    h.corner[(c, cb)] += design[j];
                    for i in 0..p {
                        h.corner[(base + i, c)] += design[j] * z[i];
                    }
                }
            }
        }
    }
    value
}
