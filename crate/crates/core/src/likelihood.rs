//! Hazards and log-likelihoods of a single event sequence.
//!
//! Hazards are log-linear, `lambda_ij = exp(beta's)`, and piecewise constant
//! between events (and context changes).

use serde::Serialize;
use thiserror::Error;

use crate::event_data::{CovariateSet, EventHistory, RiskSet};
use crate::simulate::{Simulator, StepOutcome};
use crate::statistics::{replay, BoundSpec, ReplayStep, SeqState, StatisticsError, UniqueStatTable};

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("non-finite hazard (linear predictor {0})")]
    NonFiniteHazard(f64),
    #[error("parameter has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp(beta's)`. Overflow gives `+inf`, which the likelihoods reject.
pub fn hazard(beta: &[f64], s: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), s.len());
    dot(beta, s).exp()
}

fn check_dim(beta: &[f64], expected: usize) -> Result<(), LikelihoodError> {
    if beta.len() != expected {
        return Err(LikelihoodError::DimensionMismatch {
            got: beta.len(),
            expected,
        });
    }
    Ok(())
}

fn finite_hazard(eta: f64) -> Result<f64, LikelihoodError> {
    let h = eta.exp();
    if h.is_finite() && !eta.is_nan() {
        Ok(h)
    } else {
        Err(LikelihoodError::NonFiniteHazard(eta))
    }
}

/// Full-time log-likelihood from the unique-vector cache.
pub fn loglik_full(beta: &[f64], table: &UniqueStatTable) -> Result<f64, LikelihoodError> {
    check_dim(beta, table.dim())?;
    let mut ll = 0.0;
    for ((u, &q), &m) in table.vectors().zip(table.q()).zip(table.m()) {
        let eta = dot(u, beta);
        if m > 0.0 {
            ll -= m * finite_hazard(eta)?;
        }
        if q > 0.0 {
            if !eta.is_finite() {
                return Err(LikelihoodError::NonFiniteHazard(eta));
            }
            ll += q * eta;
        }
    }
    Ok(ll)
}

/// Log-likelihood and its gradient.
pub fn loglik_gradient(beta: &[f64], table: &UniqueStatTable) -> Result<(f64, Vec<f64>), LikelihoodError> {
    check_dim(beta, table.dim())?;
    let mut ll = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for ((u, &q), &m) in table.vectors().zip(table.q()).zip(table.m()) {
        let eta = dot(u, beta);
        let h = if m > 0.0 { finite_hazard(eta)? } else { 0.0 };
        ll += q * eta - m * h;
        let w = q - m * h;
        for (g, x) in grad.iter_mut().zip(u) {
            *g += w * x;
        }
    }
    Ok((ll, grad))
}

/// Hessian of the log-likelihood, row-major `P x P`. Always negative
/// semi-definite.
pub fn loglik_hessian(beta: &[f64], table: &UniqueStatTable) -> Result<Vec<f64>, LikelihoodError> {
    check_dim(beta, table.dim())?;
    let p = beta.len();
    let mut hess = vec![0.0; p * p];
    for (u, &m) in table.vectors().zip(table.m()) {
        if m == 0.0 {
            continue;
        }
        let w = m * finite_hazard(dot(u, beta))?;
        for a in 0..p {
            if u[a] == 0.0 {
                continue;
            }
            for b in 0..p {
                hess[a * p + b] -= w * u[a] * u[b];
            }
        }
    }
    Ok(hess)
}

/// Direct evaluation of the piecewise-constant likelihood, recomputing every
/// dyad's statistics on every interval. Slow; used as a reference.
pub fn loglik_naive(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
) -> Result<f64, LikelihoodError> {
    check_dim(beta, spec.dim())?;
    let mut ll = 0.0;
    replay::<LikelihoodError, _>(history, cov, risk.n_nodes(), |step| {
        match step {
            ReplayStep::Exposure { state, duration, .. } => {
                let total = total_rate(beta, spec, state, risk)?;
                ll -= duration * total;
            }
            ReplayStep::Event { state, event, .. } => {
                let s = spec.eval(state, event.sender, event.recipient);
                let eta = dot(beta, &s);
                finite_hazard(eta)?;
                ll += eta;
            }
        }
        Ok(())
    })?;
    Ok(ll)
}

/// `sum over the risk set of exp(beta's)` in the given state.
pub fn total_rate(
    beta: &[f64],
    spec: &BoundSpec,
    state: &SeqState,
    risk: &RiskSet,
) -> Result<f64, LikelihoodError> {
    let mut s = vec![0.0; spec.dim()];
    let mut total = 0.0;
    for &(i, j) in risk.dyads() {
        spec.eval_into(state, i, j, &mut s);
        total += finite_hazard(dot(beta, &s))?;
    }
    Ok(total)
}

/// Linear predictors `beta's` of every dyad in the given state.
pub fn linear_predictors(beta: &[f64], spec: &BoundSpec, state: &SeqState, risk: &RiskSet) -> Vec<f64> {
    let mut s = vec![0.0; spec.dim()];
    risk.dyads()
        .iter()
        .map(|&(i, j)| {
            spec.eval_into(state, i, j, &mut s);
            dot(beta, &s)
        })
        .collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Order-only (multinomial) log-likelihood: the probability of each observed
/// dyad among the risk set, ignoring event times.
pub fn loglik_order(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
) -> Result<f64, LikelihoodError> {
    check_dim(beta, spec.dim())?;
    let mut ll = 0.0;
    replay::<LikelihoodError, _>(history, cov, risk.n_nodes(), |step| {
        if let ReplayStep::Event { state, event, .. } = step {
            let etas = linear_predictors(beta, spec, state, risk);
            let k = risk
                .index_of(event.sender, event.recipient)
                .expect("validated history");
            ll += etas[k] - log_sum_exp(&etas);
        }
        Ok(())
    })?;
    Ok(ll)
}

/// Thresholds for declaring a simulated trajectory exploded.
#[derive(Debug, Clone, Copy)]
pub struct ExplosionConfig {
    /// Ceiling on the total rate, as a multiple of the initial total rate.
    pub rate_factor: f64,
    /// Event cap, as a multiple of the expected event count at the initial rate.
    pub count_factor: f64,
}

impl Default for ExplosionConfig {
    fn default() -> Self {
        Self {
            rate_factor: 1e6,
            count_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplosionReport {
    pub exploded: bool,
    pub max_total_rate: f64,
}

/// Simulates `n_sim` trajectories up to `horizon` and flags explosion when
/// the total rate or the event count crosses its ceiling.
#[allow(clippy::too_many_arguments)]
pub fn explosion_check(
    beta: &[f64],
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    horizon: f64,
    n_sim: usize,
    seed: u64,
    config: &ExplosionConfig,
) -> Result<ExplosionReport, LikelihoodError> {
    check_dim(beta, spec.dim())?;
    let initial = total_rate(beta, spec, &SeqState::start(risk.n_nodes(), cov), risk)?;
    let rate_ceiling = config.rate_factor * initial;
    let event_cap = (config.count_factor * initial * horizon).ceil().max(1.0) as usize;
    let mut report = ExplosionReport {
        exploded: false,
        max_total_rate: initial,
    };
    for sim in 0..n_sim {
        let mut rng = crate::rng::stream(seed, sim as u64);
        let mut simulator = Simulator::new(beta, spec, risk, cov);
        loop {
            let rate = match simulator.total_rate() {
                Ok(r) => r,
                Err(_) => {
                    report.exploded = true;
                    report.max_total_rate = f64::INFINITY;
                    break;
                }
            };
            report.max_total_rate = report.max_total_rate.max(rate);
            if rate > rate_ceiling || simulator.n_events() > event_cap {
                report.exploded = true;
                break;
            }
            match simulator.step(horizon, &mut rng) {
                Ok(StepOutcome::Event(_)) => {}
                Ok(StepOutcome::Horizon) => break,
                Err(_) => {
                    report.exploded = true;
                    report.max_total_rate = f64::INFINITY;
                    break;
                }
            }
        }
        if report.exploded {
            break;
        }
    }
    Ok(report)
}
