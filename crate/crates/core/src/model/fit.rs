//! Posterior inference by nested Laplace approximation on a hyperparameter grid.
//!
//! For fixed hyperparameters the latent field is conditionally log-concave, so its
//! mode is found by damped Newton iterations and the posterior approximated by the
//! Gaussian with the negated Hessian as precision. The hyperparameter posterior is
//! approximated on a 5-point-per-axis grid around its mode, and joint draws take a
//! grid point by weight and then a latent vector from that point's Gaussian.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arrow::{ArrowCholesky, ArrowMatrix};
use super::posterior::{
    accumulate_likelihood, log_prior_latent, prior_precision, Hyperparameters, LatentState, Layout, ModelData, Priors,
};
use super::spec::{ModelSpec, ModelVariant};
use crate::error::{Error, Result};
use crate::triangle::ReportingTriangle;

/// Linear predictors are clamped here before exponentiation.
const ETA_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Converged when the largest absolute gradient entry falls below this.
    pub gradient_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub priors: Priors,
    pub newton: NewtonConfig,
    /// Grid points per hyperparameter axis.
    pub grid_points: usize,
    /// Lower and upper bounds of each working-scale hyperparameter
    /// `(ln phi, ln 1/eta_alpha, ln 1/eta_beta)`.
    pub theta_bounds: [(f64, f64); 3],
    pub theta_start: [f64; 3],
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            priors: Priors::default(),
            newton: NewtonConfig::default(),
            grid_points: 5,
            theta_bounds: [(-3.0, 10.0), (-4.0, 12.0), (-4.0, 12.0)],
            theta_start: [10f64.ln(), 20f64.ln(), 20f64.ln()],
        }
    }
}

/// Result of maximizing the latent posterior for fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct LatentMode {
    pub x: Vec<f64>,
    /// Log-likelihood without the count-only constant plus the latent prior, at `x`.
    pub objective: f64,
    pub converged: bool,
    pub max_abs_gradient: f64,
    pub iterations: usize,
    /// Factor of the negated Hessian at `x`.
    pub cholesky: ArrowCholesky,
}

impl LatentMode {
    pub fn state(&self, layout: Layout) -> LatentState {
        LatentState::from_slice(layout, &self.x)
    }
}

struct Evaluation {
    objective: f64,
    gradient: Vec<f64>,
    precision: ArrowMatrix,
}

fn evaluate(data: &ModelData, x: &[f64], hyper: &Hyperparameters, prior_q: &ArrowMatrix, priors: &Priors) -> Evaluation {
    let layout = data.layout();
    let mut precision = prior_q.clone();
    let mut gradient = vec![0.0; x.len()];
    let ll = accumulate_likelihood(data, x, hyper.phi, &mut gradient, Some(&mut precision));
    for (g, qx) in gradient.iter_mut().zip(prior_q.mul_vec(x)) {
        *g -= qx;
    }
    Evaluation {
        objective: ll + log_prior_latent(x, layout, hyper, priors),
        gradient,
        precision,
    }
}

fn objective(data: &ModelData, x: &[f64], hyper: &Hyperparameters, priors: &Priors) -> f64 {
    data.log_kernel_sum(x, hyper.phi) + log_prior_latent(x, data.layout(), hyper, priors)
}

/// Damped Newton search for the latent mode. `None` if the negated Hessian
/// stops being positive definite or the objective is not finite.
pub fn latent_mode(
    data: &ModelData,
    hyper: &Hyperparameters,
    priors: &Priors,
    start: Option<&[f64]>,
    cfg: &NewtonConfig,
) -> Option<LatentMode> {
    let layout = data.layout();
    let prior_q = prior_precision(layout, hyper, priors);
    let mut x = match start {
        Some(s) => s.to_vec(),
        None => initial_state(data),
    };
    let mut iterations = 0;
    loop {
        let eval = evaluate(data, &x, hyper, &prior_q, priors);
        if !eval.objective.is_finite() {
            return None;
        }
        let cholesky = ArrowCholesky::new(&eval.precision)?;
        let max_abs_gradient = eval.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let step = cholesky.solve(&eval.gradient);
        let decrement: f64 = step.iter().zip(&eval.gradient).map(|(a, b)| a * b).sum();
        // Fallback for when rounding stalls the line search before the tolerance is met.
        let stalled = decrement < 1e-10 * (1.0 + eval.objective.abs());
        let done = max_abs_gradient < cfg.gradient_tolerance;
        if done || iterations >= cfg.max_iterations {
            return Some(LatentMode {
                x,
                objective: eval.objective,
                converged: done || stalled,
                max_abs_gradient,
                iterations,
                cholesky,
            });
        }
        iterations += 1;
        let mut scale = 1.0;
        let mut improved = false;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + scale * d).collect();
            let f = objective(data, &trial, hyper, priors);
            if f.is_finite() && f >= eval.objective {
                improved = f > eval.objective;
                accepted = true;
                x = trial;
                break;
            }
            scale *= 0.5;
        }
        if !accepted && !stalled {
            return Some(LatentMode {
                x,
                objective: eval.objective,
                converged: false,
                max_abs_gradient,
                iterations,
                cholesky,
            });
        }
        if !improved && stalled {
            let eval = evaluate(data, &x, hyper, &prior_q, priors);
            let cholesky = ArrowCholesky::new(&eval.precision)?;
            return Some(LatentMode {
                max_abs_gradient: eval.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs())),
                x,
                objective: eval.objective,
                converged: true,
                iterations,
                cholesky,
            });
        }
    }
}

fn initial_state(data: &ModelData) -> Vec<f64> {
    let layout = data.layout();
    let mut x = vec![0.0; layout.dim()];
    let n = data.n_cells().max(1) as f64;
    x[layout.mu()] = (data.total_count() as f64 / n + 0.5).ln();
    x
}

/// Laplace approximation of the log marginal posterior of the hyperparameters.
fn log_marginal(data: &ModelData, hyper: &Hyperparameters, priors: &Priors, mode: &LatentMode) -> f64 {
    let n = data.layout().dim() as f64;
    data.log_coefficient_sum(hyper.phi) + mode.objective + priors.log_hyperprior(hyper) + 0.5 * n * (2.0 * PI).ln()
        - 0.5 * mode.cholesky.log_det()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: [f64; 3],
    pub hyper: Hyperparameters,
    pub log_marginal: f64,
    pub weight: f64,
    pub converged: bool,
    pub max_abs_gradient: f64,
    pub iterations: usize,
}

/// Exportable record of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub variant: ModelVariant,
    pub seed: u64,
    pub n_samples: usize,
    pub n_weeks: usize,
    pub d_max: usize,
    pub n_observed_cells: usize,
    pub theta_mode: [f64; 3],
    pub theta_step: [f64; 3],
    pub mode_evaluations: usize,
    pub grid: Vec<GridPoint>,
    pub converged_points: usize,
    /// Largest absolute gradient at the latent mode over weighted grid points.
    pub max_abs_gradient: f64,
}

impl FitDiagnostics {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("serializing diagnostics: {e}")))
    }
}

#[derive(Debug, Clone)]
struct Draw {
    grid_index: usize,
    x: Vec<f64>,
    /// Means of the triangle's unobserved cells, in [`PosteriorSamples::unobserved_cells`] order.
    lambda: Vec<f64>,
}

/// Joint posterior draws of latent field and hyperparameters.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    layout: Layout,
    data: ModelData,
    seed: u64,
    grid_hyper: Vec<Hyperparameters>,
    map_mode: Vec<f64>,
    map_hyper: Hyperparameters,
    unobserved: Vec<(usize, usize)>,
    draws: Vec<Draw>,
    diagnostics: FitDiagnostics,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &ModelData {
        &self.data
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn hyper(&self, s: usize) -> Hyperparameters {
        self.grid_hyper[self.draws[s].grid_index]
    }

    pub fn latent(&self, s: usize) -> LatentState {
        LatentState::from_slice(self.layout, &self.draws[s].x)
    }

    pub fn latent_flat(&self, s: usize) -> &[f64] {
        &self.draws[s].x
    }

    /// Cells `(t, tau)` without observations, in the order of [`Self::lambda`].
    pub fn unobserved_cells(&self) -> &[(usize, usize)] {
        &self.unobserved
    }

    pub fn lambda(&self, s: usize) -> &[f64] {
        &self.draws[s].lambda
    }

    /// Latent mode at the hyperparameter mode.
    pub fn map_state(&self) -> LatentState {
        LatentState::from_slice(self.layout, &self.map_mode)
    }

    pub fn map_hyper(&self) -> Hyperparameters {
        self.map_hyper
    }

    /// Componentwise mean of the latent draws.
    pub fn mean_state(&self) -> LatentState {
        let mut acc = vec![0.0; self.layout.dim()];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(&d.x) {
                *a += v;
            }
        }
        let n = self.draws.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        LatentState::from_slice(self.layout, &acc)
    }

    /// Posterior median of the dispersion.
    pub fn median_phi(&self) -> f64 {
        let mut phis: Vec<f64> = (0..self.len()).map(|s| self.hyper(s).phi).collect();
        phis.sort_by(f64::total_cmp);
        crate::stats::nearest_rank(&phis, 0.5)
    }

    /// Log-likelihood of every observed cell under draw `s`, in [`ModelData::cells`] order.
    pub fn pointwise_log_likelihood(&self, s: usize, coefficients: &[f64]) -> Vec<f64> {
        let phi = self.hyper(s).phi;
        let x = &self.draws[s].x;
        self.data
            .cells()
            .iter()
            .zip(coefficients)
            .map(|(&(t, tau, k), c)| c + super::nb::log_kernel(k, self.data.eta(x, t, tau), phi))
            .collect()
    }

    /// Count-only part of each observed cell's log-pmf at dispersion `phi`.
    pub fn cell_log_coefficients(&self, phi: f64) -> Vec<f64> {
        self.data
            .cells()
            .iter()
            .map(|&(_, _, k)| super::nb::log_coefficient(k as u64, phi))
            .collect()
    }

    /// Grid index of draw `s`; draws sharing it share the dispersion.
    pub fn grid_index(&self, s: usize) -> usize {
        self.draws[s].grid_index
    }
}

struct GridEval {
    theta: [f64; 3],
    hyper: Hyperparameters,
    mode: Option<LatentMode>,
    log_marginal: f64,
}

struct Search<'a> {
    data: &'a ModelData,
    cfg: &'a FitConfig,
    warm: Vec<f64>,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, theta: [f64; 3]) -> (f64, Option<LatentMode>) {
        self.evaluations += 1;
        let hyper = Hyperparameters::from_theta(theta);
        match latent_mode(self.data, &hyper, &self.cfg.priors, Some(&self.warm), &self.cfg.newton) {
            Some(m) => {
                let l = log_marginal(self.data, &hyper, &self.cfg.priors, &m);
                (if l.is_finite() { l } else { f64::NEG_INFINITY }, Some(m))
            }
            None => (f64::NEG_INFINITY, None),
        }
    }

    /// Maximize along axis `i` from `theta` (value `current`), searching `±half_width`.
    fn line_maximize(&mut self, theta: &mut [f64; 3], current: &mut f64, i: usize, half_width: f64) {
        const TOL: f64 = 0.02;
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (lo_bound, hi_bound) = self.cfg.theta_bounds[i];
        let mut center = theta[i];
        for _ in 0..4 {
            let mut a = (center - half_width).max(lo_bound);
            let mut b = (center + half_width).min(hi_bound);
            let at = |t: &[f64; 3], v: f64| {
                let mut u = *t;
                u[i] = v;
                u
            };
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let (mut fc, mut mc) = self.eval(at(theta, c));
            let (mut fd, mut md) = self.eval(at(theta, d));
            while b - a > TOL {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    md = mc.take();
                    c = b - inv_phi * (b - a);
                    (fc, mc) = self.eval(at(theta, c));
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    mc = md.take();
                    d = a + inv_phi * (b - a);
                    (fd, md) = self.eval(at(theta, d));
                }
            }
            let (best, fbest, mbest) = if fc >= fd { (c, fc, mc) } else { (d, fd, md) };
            if fbest > *current {
                theta[i] = best;
                *current = fbest;
                if let Some(m) = mbest {
                    self.warm = m.x;
                }
            }
            // Optimum pressed against an interior edge of the bracket: move and retry.
            let at_lower = theta[i] - (center - half_width) < 2.0 * TOL && center - half_width > lo_bound;
            let at_upper = (center + half_width) - theta[i] < 2.0 * TOL && center + half_width < hi_bound;
            if !(at_lower || at_upper) {
                break;
            }
            center = theta[i];
        }
    }
}

/// Fit the model to the observed cells of `triangle`.
///
/// `regressors` holds one row per triangle week with the already log-transformed
/// signal values, in the order of `spec.regressors`; it is empty for the baseline.
pub fn fit(spec: &ModelSpec, triangle: &ReportingTriangle, regressors: &[Vec<f64>], cfg: &FitConfig) -> Result<PosteriorSamples> {
    if spec.variant == ModelVariant::Naive {
        return Err(Error::Input("the naive model has no posterior; use naive_nowcast".into()));
    }
    if cfg.n_samples == 0 {
        return Err(Error::Input("number of samples must be at least 1".into()));
    }
    if cfg.grid_points == 0 {
        return Err(Error::Input("grid needs at least one point per axis".into()));
    }
    if spec.d_max != triangle.d_max() {
        return Err(Error::Internal(format!(
            "model d_max {} differs from triangle d_max {}",
            spec.d_max,
            triangle.d_max()
        )));
    }
    let n_coef = regressors.first().map_or(0, |r| r.len());
    if n_coef != spec.regressors.len() || (n_coef > 0 && regressors.len() != triangle.n_weeks()) {
        return Err(Error::Internal(format!(
            "regressor matrix {}x{} does not fit model '{}' over {} weeks",
            regressors.len(),
            n_coef,
            spec.variant,
            triangle.n_weeks()
        )));
    }
    let data = ModelData::new(triangle, regressors)?;
    if data.total_count() == 0 {
        return Err(Error::Fit("the triangle holds no cases; nothing to fit".into()));
    }
    let mut seen = vec![false; triangle.n_delays()];
    for &(_, tau, _) in data.cells() {
        seen[tau] = true;
    }
    if let Some(tau) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!("no observed cell at delay {tau}; need more weeks than d_max")));
    }
    let layout = data.layout();

    // Hyperparameter mode by coordinate ascent on the Laplace log marginal.
    let mut search = Search {
        data: &data,
        cfg,
        warm: initial_state(&data),
        evaluations: 0,
    };
    let mut theta = cfg.theta_start;
    for (i, t) in theta.iter_mut().enumerate() {
        *t = t.clamp(cfg.theta_bounds[i].0, cfg.theta_bounds[i].1);
    }
    let (mut current, start_mode) = search.eval(theta);
    match start_mode {
        Some(m) => search.warm = m.x,
        None => {
            return Err(Error::Fit(format!(
                "latent mode search failed at the starting hyperparameters {theta:?}"
            )))
        }
    }
    for sweep in 0..6 {
        let before = theta;
        let width = if sweep == 0 { 3.0 } else { 1.0 };
        for i in 0..3 {
            search.line_maximize(&mut theta, &mut current, i, width);
        }
        let change = before.iter().zip(&theta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if change < 0.05 {
            break;
        }
    }

    // Step per axis from the curvature of the log marginal.
    let h = 0.25;
    let mut step = [0.5; 3];
    for i in 0..3 {
        let mut up = theta;
        up[i] += h;
        let mut down = theta;
        down[i] -= h;
        let (lu, _) = search.eval(up);
        let (ld, _) = search.eval(down);
        let d2 = (lu - 2.0 * current + ld) / (h * h);
        if d2.is_finite() && d2 < 0.0 {
            step[i] = (1.0 / (-d2).sqrt()).min(1.0);
        }
    }

    let g = cfg.grid_points;
    let offsets: Vec<f64> = (0..g).map(|j| j as f64 - (g as f64 - 1.0) / 2.0).collect();
    let mut thetas = Vec::with_capacity(g * g * g);
    for &a in &offsets {
        for &b in &offsets {
            for &c in &offsets {
                let mut th = [theta[0] + a * step[0], theta[1] + b * step[1], theta[2] + c * step[2]];
                for (i, t) in th.iter_mut().enumerate() {
                    *t = t.clamp(cfg.theta_bounds[i].0, cfg.theta_bounds[i].1);
                }
                thetas.push(th);
            }
        }
    }
    let warm = search.warm.clone();
    let mode_evaluations = search.evaluations + thetas.len();
    let grid: Vec<GridEval> = thetas
        .par_iter()
        .map(|&th| {
            let hyper = Hyperparameters::from_theta(th);
            let mode = latent_mode(&data, &hyper, &cfg.priors, Some(&warm), &cfg.newton);
            let log_marginal = match &mode {
                Some(m) if m.converged => log_marginal(&data, &hyper, &cfg.priors, m),
                _ => f64::NEG_INFINITY,
            };
            GridEval {
                theta: th,
                hyper,
                mode,
                log_marginal,
            }
        })
        .collect();

    let best = grid.iter().map(|p| p.log_marginal).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Fit(format!(
            "latent mode search failed to converge at all {} grid points around theta {theta:?}",
            grid.len()
        )));
    }
    let raw: Vec<f64> = grid
        .iter()
        .map(|p| if p.log_marginal.is_finite() { (p.log_marginal - best).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }

    let unobserved: Vec<(usize, usize)> = triangle.unobserved_cells().collect();
    let dim = layout.dim();
    let draws: Vec<Draw> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            let u: f64 = rng.random::<f64>() * acc;
            let mut grid_index = cumulative.partition_point(|&c| c <= u).min(grid.len() - 1);
            while weights[grid_index] == 0.0 {
                // Only reachable through rounding at the top of the cumulative sum.
                grid_index -= 1;
            }
            let mode = grid[grid_index].mode.as_ref().expect("weighted points have a mode");
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let dev = mode.cholesky.solve_factor_transpose(&z);
            let x: Vec<f64> = mode.x.iter().zip(&dev).map(|(m, d)| m + d).collect();
            let lambda = unobserved
                .iter()
                .map(|&(t, tau)| data.eta(&x, t, tau).clamp(-ETA_LIMIT, ETA_LIMIT).exp())
                .collect();
            Draw { grid_index, x, lambda }
        })
        .collect();

    let centre = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.log_marginal.total_cmp(&b.1.log_marginal))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let max_abs_gradient = grid
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .filter_map(|(p, _)| p.mode.as_ref().map(|m| m.max_abs_gradient))
        .fold(0.0f64, f64::max);
    let diagnostics = FitDiagnostics {
        variant: spec.variant,
        seed: cfg.seed,
        n_samples: cfg.n_samples,
        n_weeks: layout.n_weeks,
        d_max: spec.d_max,
        n_observed_cells: data.n_cells(),
        theta_mode: theta,
        theta_step: step,
        mode_evaluations,
        converged_points: grid.iter().filter(|p| p.mode.as_ref().is_some_and(|m| m.converged)).count(),
        max_abs_gradient,
        grid: grid
            .iter()
            .zip(&weights)
            .map(|(p, &w)| GridPoint {
                theta: p.theta,
                hyper: p.hyper,
                log_marginal: p.log_marginal,
                weight: w,
                converged: p.mode.as_ref().is_some_and(|m| m.converged),
                max_abs_gradient: p.mode.as_ref().map_or(f64::INFINITY, |m| m.max_abs_gradient),
                iterations: p.mode.as_ref().map_or(0, |m| m.iterations),
            })
            .collect(),
    };
    let map_mode = grid[centre].mode.as_ref().expect("best point has a mode").x.clone();
    let map_hyper = grid[centre].hyper;
    let grid_hyper = grid.iter().map(|p| p.hyper).collect();
    Ok(PosteriorSamples {
        layout,
        data,
        seed: cfg.seed,
        grid_hyper,
        map_mode,
        map_hyper,
        unobserved,
        draws,
        diagnostics,
    })
}
