//! Posterior computation for the hierarchical model
//!
//! ```text
//! beta_kp ~ N(mu_p, sigma2_p)   mu_p ~ N(0, sd^2)   sigma2_p ~ Inv-Gamma(alpha, beta)
//! ```
//!
//! Samplers: a collapsed Gibbs scheme with univariate slice updates,
//! parallel tempering over the full posterior, and MAP by block-coordinate
//! ascent.

mod cache;
mod collapsed;
mod convergence;
mod map;
mod samples;
mod slice;
mod tempering;

pub use collapsed::{
    fit_independent, run_collapsed_sampler, BetaUpdate, CollapsedSampler, HierState, IndependentFit, SamplerConfig,
    TFamily,
};
pub use convergence::{effective_sample_size, split_rhat};
pub use map::{map_estimate, MapConfig, MapEstimate, MapWarning};
pub use samples::{Draw, ParamDiagnostic, PosteriorSamples, SwapStats};
pub use slice::{slice_sample_beta, slice_step, SliceStats};
pub use tempering::{
    geometric_ladder, run_parallel_tempering, run_tempered, swap_acceptance_probability, swap_log_ratio,
    validate_ladder, TemperedChain, TemperingConfig,
};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Exp, InverseGamma, Normal};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::likelihood::{loglik_full, LikelihoodError};
use crate::statistics::UniqueStatTable;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite log-posterior in sequence {sequence}, effect {effect}")]
    NonFinite { sequence: usize, effect: usize },
    #[error("non-finite log-posterior at kept draw {draw}")]
    NonFiniteLogPosterior { draw: usize },
    #[error("slice sampler: target is not finite at the current point {0}")]
    SliceStart(f64),
    #[error("invalid temperature ladder: {0}")]
    Ladder(String),
    #[error("MAP diverged at iteration {iteration}: log-posterior fell from {before} to {after}")]
    Diverged { iteration: usize, before: f64, after: f64 },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

/// Prior hyperparameters. `mu_prior_sd` is a standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub mu_prior_sd: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    /// Rate of the Exp prior on the t-family degrees of freedom; defaults to
    /// one over the mean event count.
    pub t_rate: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            mu_prior_sd: 2.0,
            alpha_sigma: 5.0,
            beta_sigma: 1.0,
            t_rate: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.mu_prior_sd) || !ok(self.alpha_sigma) || !ok(self.beta_sigma) {
            return Err(InferenceError::Config("hyperparameters must be positive and finite".into()));
        }
        if let Some(r) = self.t_rate {
            if !ok(r) {
                return Err(InferenceError::Config("t_rate must be positive".into()));
            }
        }
        Ok(())
    }

    /// Prior mean of sigma^2 when it exists, otherwise the prior mode.
    pub fn sigma2_prior_mean(&self) -> f64 {
        if self.alpha_sigma > 1.0 {
            self.beta_sigma / (self.alpha_sigma - 1.0)
        } else {
            self.beta_sigma / (self.alpha_sigma + 1.0)
        }
    }
}

/// Upper-level parameters for every effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
}

impl PopulationParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.mu.len() != self.sigma2.len() {
            return Err(InferenceError::Config("mu and sigma2 differ in length".into()));
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0)) {
            return Err(InferenceError::Config("sigma2 must be positive".into()));
        }
        if let Some(nu) = &self.nu {
            if nu.len() != self.mu.len() || nu.iter().any(|&v| !(v > 0.0)) {
                return Err(InferenceError::Config("nu must be positive, one per effect".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuUpdate {
    /// `N(mean(beta), sigma2 / sqrt(K))`, no prior term.
    #[default]
    Paper,
    /// Conjugate Normal update including the `N(0, sd^2)` prior.
    Conjugate,
}

/// Draws `Inv-Gamma(shape, scale)` as `scale / Gamma(shape, 1)`.
pub(crate) fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// One draw of `sigma2_p | beta, mu_p ~ Inv-Gamma(alpha + K/2, beta + SS/2)`.
pub fn gibbs_sigma<R: Rng + ?Sized>(betas_p: &[f64], mu_p: f64, hyper: &Hyperparams, rng: &mut R) -> f64 {
    assert!(!betas_p.is_empty(), "gibbs_sigma needs at least one sequence");
    let ss: f64 = betas_p.iter().map(|b| (b - mu_p).powi(2)).sum();
    draw_inv_gamma(
        hyper.alpha_sigma + betas_p.len() as f64 / 2.0,
        hyper.beta_sigma + 0.5 * ss,
        rng,
    )
}

/// One draw of `mu_p ~ N(mean(beta), sigma2 / sqrt(K))`.
pub fn gibbs_mu<R: Rng + ?Sized>(betas_p: &[f64], sigma2_p: f64, rng: &mut R) -> f64 {
    assert!(!betas_p.is_empty(), "gibbs_mu needs at least one sequence");
    let k = betas_p.len() as f64;
    let mean = betas_p.iter().sum::<f64>() / k;
    let z: f64 = StandardNormal.sample(rng);
    mean + (sigma2_p / k.sqrt()).sqrt() * z
}

/// Conjugate draw of `mu_p | beta, sigma2_p` under the `N(0, sd^2)` prior.
pub fn gibbs_mu_conjugate<R: Rng + ?Sized>(betas_p: &[f64], sigma2_p: f64, prior_sd: f64, rng: &mut R) -> f64 {
    let weights = vec![1.0; betas_p.len()];
    draw_mu(betas_p, &weights, sigma2_p, prior_sd, MuUpdate::Conjugate, rng)
}

/// `mu_p` update with per-sequence precision weights (all ones outside the
/// t-family).
pub(crate) fn draw_mu<R: Rng + ?Sized>(
    betas_p: &[f64],
    weights: &[f64],
    sigma2_p: f64,
    prior_sd: f64,
    mode: MuUpdate,
    rng: &mut R,
) -> f64 {
    let w_sum: f64 = weights.iter().sum();
    let wb: f64 = betas_p.iter().zip(weights).map(|(b, w)| b * w).sum();
    let z: f64 = StandardNormal.sample(rng);
    match mode {
        MuUpdate::Paper => {
            let k = betas_p.len() as f64;
            wb / w_sum + (sigma2_p / k.sqrt()).sqrt() * z
        }
        MuUpdate::Conjugate => {
            let precision = w_sum / sigma2_p + 1.0 / (prior_sd * prior_sd);
            (wb / sigma2_p) / precision + z / precision.sqrt()
        }
    }
}

/// Log of `int N(mu + d | mu, s2) Inv-Gamma(s2 | alpha, beta) ds2`, constant
/// included. A Student-t density in `d`.
pub fn log_prior_factor(d: f64, alpha: f64, beta: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI).ln() + alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + 0.5)
        - (alpha + 0.5) * (d * d / 2.0 + beta).ln()
}

/// `loglik(beta_kp) + log prior factor` with `sigma2_p` integrated out.
pub fn marginal_logpost_beta<F: Fn(f64) -> f64>(
    beta_kp: f64,
    mu_p: f64,
    hyper: &Hyperparams,
    loglik_partial: F,
) -> f64 {
    loglik_partial(beta_kp) + log_prior_factor(beta_kp - mu_p, hyper.alpha_sigma, hyper.beta_sigma)
}

pub(crate) fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// Log of the joint posterior density, up to the data's normalizing
/// constant, at a full state.
pub fn log_posterior(state: &HierState, tables: &[UniqueStatTable], hyper: &Hyperparams) -> Result<f64, InferenceError> {
    let mut lp = 0.0;
    for (beta_k, table) in state.beta.iter().zip(tables) {
        lp += loglik_full(beta_k, table)?;
    }
    lp += log_prior(state, hyper, mean_events(tables));
    Ok(lp)
}

pub(crate) fn log_prior(state: &HierState, hyper: &Hyperparams, mean_events: f64) -> f64 {
    let mu_prior = Normal::new(0.0, hyper.mu_prior_sd).expect("validated");
    let s2_prior = InverseGamma::new(hyper.alpha_sigma, hyper.beta_sigma).expect("validated");
    let mut lp = 0.0;
    for p in 0..state.mu.len() {
        lp += mu_prior.ln_pdf(state.mu[p]) + s2_prior.ln_pdf(state.sigma2[p]);
        for (k, beta_k) in state.beta.iter().enumerate() {
            let w = state.weight(k, p);
            lp += ln_normal(beta_k[p], state.mu[p], state.sigma2[p] / w);
        }
    }
    if let (Some(nu), Some(weights)) = (&state.nu, &state.weights) {
        let rate = hyper.t_rate.unwrap_or(1.0 / mean_events.max(1.0));
        let nu_prior = Exp::new(rate).expect("positive rate");
        for (p, &v) in nu.iter().enumerate() {
            lp += nu_prior.ln_pdf(v);
            let g = statrs::distribution::Gamma::new(v / 2.0, v / 2.0).expect("positive");
            for w in weights {
                lp += g.ln_pdf(w[p]);
            }
        }
    }
    lp
}

pub(crate) fn mean_events(tables: &[UniqueStatTable]) -> f64 {
    if tables.is_empty() {
        return 0.0;
    }
    tables.iter().map(|t| t.n_events() as f64).sum::<f64>() / tables.len() as f64
}

pub(crate) fn check_tables(tables: &[UniqueStatTable]) -> Result<usize, InferenceError> {
    let first = tables
        .first()
        .ok_or_else(|| InferenceError::Config("need at least one sequence".into()))?;
    let p = first.dim();
    if p == 0 {
        return Err(InferenceError::Config("statistic dimension is zero".into()));
    }
    if tables.iter().any(|t| t.dim() != p) {
        return Err(InferenceError::Config("sequences disagree on the statistic dimension".into()));
    }
    Ok(p)
}
