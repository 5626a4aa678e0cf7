use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::collapsed::HierState;
use super::{check_tables, log_posterior, Hyperparams, InferenceError};
use crate::likelihood::{loglik_full, loglik_gradient, loglik_hessian};
use crate::statistics::UniqueStatTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub max_iters: usize,
    /// Stop when one pass changes the log-posterior by less than this.
    pub tol: f64,
    /// Hold `sigma2` at these values instead of maximizing over it.
    pub fixed_sigma2: Option<Vec<f64>>,
    pub sigma2_floor: f64,
    pub newton_iters: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
            fixed_sigma2: None,
            sigma2_floor: 1e-6,
            newton_iters: 50,
        }
    }
}

/// `sigma2_p` reached the floor: the estimate is heading into a collapsed
/// mode where all `beta_kp` coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapWarning {
    pub effect: usize,
    pub sigma2: f64,
}

impl fmt::Display for MapWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "effect {}: sigma2 estimate {:.3e} at the floor (collapsed population mode)",
            self.effect, self.sigma2
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub beta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub log_posterior: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<MapWarning>,
}

/// Block-coordinate ascent on the joint log posterior: closed-form `mu_p`
/// and `sigma2_p`, then a damped Newton step set for every `beta_k`.
pub fn map_estimate(
    tables: &[UniqueStatTable],
    hyper: &Hyperparams,
    config: &MapConfig,
) -> Result<MapEstimate, InferenceError> {
    hyper.validate()?;
    let p_total = check_tables(tables)?;
    let k_total = tables.len();
    if let Some(s) = &config.fixed_sigma2 {
        if s.len() != p_total || s.iter().any(|&v| !(v > 0.0)) {
            return Err(InferenceError::Config("fixed_sigma2 needs one positive value per effect".into()));
        }
    }
    if !(config.sigma2_floor > 0.0) || config.tol.is_nan() {
        return Err(InferenceError::Config("sigma2_floor must be positive and tol a number".into()));
    }
    let mut state = HierState::initial(k_total, p_total, hyper, None);
    if let Some(s) = &config.fixed_sigma2 {
        state.sigma2 = s.clone();
    }
    let mut lp = log_posterior(&state, tables, hyper)?;
    let mut iterations = 0;
    let mut converged = config.tol == f64::INFINITY;
    let mut floored = vec![false; p_total];

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let before = lp;
        let sd2 = hyper.mu_prior_sd.powi(2);
        for p in 0..p_total {
            let s2 = state.sigma2[p];
            let sum: f64 = state.beta.iter().map(|b| b[p]).sum();
            state.mu[p] = (sum / s2) / (k_total as f64 / s2 + 1.0 / sd2);
            if config.fixed_sigma2.is_none() {
                let ss: f64 = state.beta.iter().map(|b| (b[p] - state.mu[p]).powi(2)).sum();
                let mode = (hyper.beta_sigma + 0.5 * ss) / (hyper.alpha_sigma + k_total as f64 / 2.0 + 1.0);
                floored[p] = mode <= config.sigma2_floor;
                state.sigma2[p] = mode.max(config.sigma2_floor);
            }
        }
        for (beta_k, table) in state.beta.iter_mut().zip(tables) {
            newton_block(beta_k, table, &state.mu, &state.sigma2, config.newton_iters)?;
        }
        lp = log_posterior(&state, tables, hyper)?;
        if !lp.is_finite() || lp < before - 1e-9 * (1.0 + before.abs()) {
            return Err(InferenceError::Diverged {
                iteration: iterations,
                before,
                after: lp,
            });
        }
        converged = (lp - before).abs() < config.tol;
    }

    let warnings: Vec<MapWarning> = (0..p_total)
        .filter(|&p| floored[p] || state.sigma2[p] <= config.sigma2_floor)
        .map(|p| MapWarning {
            effect: p,
            sigma2: state.sigma2[p],
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(MapEstimate {
        beta: state.beta,
        mu: state.mu,
        sigma2: state.sigma2,
        log_posterior: lp,
        iterations,
        converged,
        warnings,
    })
}

fn penalized(beta: &[f64], table: &UniqueStatTable, mu: &[f64], s2: &[f64]) -> f64 {
    let pen: f64 = beta
        .iter()
        .zip(mu)
        .zip(s2)
        .map(|((b, m), s)| (b - m).powi(2) / (2.0 * s))
        .sum();
    loglik_full(beta, table).map_or(f64::NEG_INFINITY, |ll| ll - pen)
}

/// Maximizes `loglik(b) - sum (b_p - mu_p)^2 / (2 s2_p)` by Newton steps with
/// backtracking. The objective is strictly concave, so every accepted step
/// increases it.
fn newton_block(
    beta: &mut [f64],
    table: &UniqueStatTable,
    mu: &[f64],
    s2: &[f64],
    max_iters: usize,
) -> Result<(), InferenceError> {
    let p = beta.len();
    let mut f = penalized(beta, table, mu, s2);
    for _ in 0..max_iters {
        let (_, g_ll) = loglik_gradient(beta, table)?;
        let h_ll = loglik_hessian(beta, table)?;
        let grad = DVector::from_iterator(p, (0..p).map(|i| g_ll[i] - (beta[i] - mu[i]) / s2[i]));
        let mut neg_h = DMatrix::from_row_slice(p, p, &h_ll).map(|x| -x);
        for i in 0..p {
            neg_h[(i, i)] += 1.0 / s2[i];
        }
        let Some(chol) = neg_h.cholesky() else {
            break;
        };
        let dir = chol.solve(&grad);
        let decrement = grad.dot(&dir);
        if decrement < 1e-20 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(dir.iter()).map(|(b, d)| b + step * d).collect();
            let ft = penalized(&trial, table, mu, s2);
            if ft >= f + 1e-4 * step * decrement {
                beta.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted || decrement < 1e-16 {
            break;
        }
    }
    Ok(())
}
