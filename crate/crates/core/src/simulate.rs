//! Exact forward simulation.
//!
//! Between changepoints the total rate `L = sum lambda_ij` is constant, so
//! the waiting time is exponential with rate `L` and the next dyad is drawn
//! with probability `lambda_ij / L`. Context changes are changepoints too; the
//! remaining unit-exponential clock carries across them.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{CovariateSet, Event, EventHistory, RiskSet};
use crate::likelihood::{dot, LikelihoodError};
use crate::rng;
use crate::statistics::{BoundSpec, SeqState, StatisticsError};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("event cap of {0} exceeded before the horizon (process may be exploding)")]
    EventCapExceeded(usize),
    #[error("total rate overflowed after {0} events")]
    NonFiniteRate(usize),
    #[error("invalid simulation request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Simulate on `[0, tau)`.
    ByTime(f64),
    /// Simulate exactly this many events; the window is closed one mean
    /// inter-event gap after the last event.
    ByCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Event(Event),
    Horizon,
}

/// Incremental simulator over one sequence.
pub struct Simulator<'a> {
    beta: &'a [f64],
    spec: &'a BoundSpec,
    risk: &'a RiskSet,
    cov: &'a CovariateSet,
    state: SeqState,
    time: f64,
    events: Vec<Event>,
    stats: Vec<f64>,
    rates: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(beta: &'a [f64], spec: &'a BoundSpec, risk: &'a RiskSet, cov: &'a CovariateSet) -> Self {
        Self {
            beta,
            spec,
            risk,
            cov,
            state: SeqState::start(risk.n_nodes(), cov),
            time: 0.0,
            events: Vec::new(),
            stats: Vec::new(),
            rates: vec![0.0; risk.len()],
        }
    }

    pub fn state(&self) -> &SeqState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    fn refresh_rates(&mut self) -> Result<f64, SimulationError> {
        let p = self.spec.dim();
        self.spec.eval_all(&self.state, self.risk, &mut self.stats);
        let mut total = 0.0;
        for (rate, s) in self.rates.iter_mut().zip(self.stats.chunks_exact(p)) {
            *rate = dot(self.beta, s).exp();
            total += *rate;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(SimulationError::NonFiniteRate(self.events.len()))
        }
    }

    /// Total rate in the current state.
    pub fn total_rate(&mut self) -> Result<f64, SimulationError> {
        self.refresh_rates()
    }

    /// Advances to the next event, or to `horizon` if none occurs before it.
    pub fn step<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Result<StepOutcome, SimulationError> {
        let mut clock: f64 = Exp1.sample(rng);
        loop {
            let total = self.refresh_rates()?;
            let boundary = self
                .cov
                .context_changes_between(self.time, f64::INFINITY)
                .next()
                .unwrap_or(f64::INFINITY)
                .min(horizon);
            let gap = clock / total;
            if self.time + gap < boundary {
                let t = self.time + gap;
                if t <= self.time {
                    // waiting time below float resolution
                    return Err(SimulationError::NonFiniteRate(self.events.len()));
                }
                let k = choose(&self.rates, total, rng);
                let (i, j) = self.risk.dyads()[k];
                let event = Event::new(t, i, j);
                self.state.apply(&event, self.cov)?;
                self.time = t;
                self.events.push(event);
                return Ok(StepOutcome::Event(event));
            }
            if boundary >= horizon {
                self.time = horizon;
                return Ok(StepOutcome::Horizon);
            }
            clock -= total * (boundary - self.time);
            self.time = boundary;
            self.state.advance_to(boundary, self.cov);
        }
    }
}

fn choose<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k;
        }
    }
    // rounding: fall back to the last dyad with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Next-event probabilities `lambda_ij / sum lambda` for every dyad of the
/// risk set in a fixed state.
pub fn next_event_probabilities(beta: &[f64], spec: &BoundSpec, state: &SeqState, risk: &RiskSet) -> Vec<f64> {
    let etas = crate::likelihood::linear_predictors(beta, spec, state, risk);
    let lse = crate::likelihood::log_sum_exp(&etas);
    etas.iter().map(|e| (e - lse).exp()).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationLimits {
    /// Hard cap on events for time-stopped runs; defaults to 100 times the
    /// expected count at the initial rate (at least 10 000).
    pub max_events: Option<usize>,
}

/// Simulates one history with its own random stream.
#[allow(clippy::too_many_arguments)]
pub fn simulate_history<R: Rng + ?Sized>(
    beta: &[f64],
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    stop: StopRule,
    rng: &mut R,
    limits: &SimulationLimits,
    sequence_id: &str,
) -> Result<EventHistory, SimulationError> {
    if beta.len() != spec.dim() {
        return Err(SimulationError::Invalid(format!(
            "beta has {} entries, spec has {}",
            beta.len(),
            spec.dim()
        )));
    }
    let mut sim = Simulator::new(beta, spec, risk, cov);
    match stop {
        StopRule::ByTime(tau) => {
            if !(tau > 0.0) {
                return Err(SimulationError::Invalid("tau must be positive".into()));
            }
            let initial = sim.total_rate()?;
            let cap = limits
                .max_events
                .unwrap_or_else(|| ((100.0 * initial * tau).ceil() as usize).max(10_000));
            loop {
                match sim.step(tau, rng)? {
                    StepOutcome::Event(_) if sim.n_events() > cap => {
                        return Err(SimulationError::EventCapExceeded(cap))
                    }
                    StepOutcome::Event(_) => {}
                    StepOutcome::Horizon => break,
                }
            }
            Ok(EventHistory::new(sim.into_events(), tau, risk.n_actors(), sequence_id))
        }
        StopRule::ByCount(m) => {
            if m == 0 {
                return Err(SimulationError::Invalid("event count must be positive".into()));
            }
            for _ in 0..m {
                sim.step(f64::INFINITY, rng)?;
            }
            let t_last = sim.time();
            let tau = t_last + t_last / m as f64;
            Ok(EventHistory::new(sim.into_events(), tau, risk.n_actors(), sequence_id))
        }
    }
}

/// A simulated sequence with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedSequence {
    pub history: EventHistory,
    pub beta: Vec<f64>,
}

/// Draws `beta_k ~ N(mu, diag(sigma^2))` independently for `k = 0..K` and
/// simulates each sequence. Sequence `k` uses random stream `k` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_hierarchical(
    mu: &[f64],
    sigma: &[f64],
    k: usize,
    stop: StopRule,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    seed: u64,
    limits: &SimulationLimits,
) -> Result<Vec<SimulatedSequence>, SimulationError> {
    if k == 0 {
        return Err(SimulationError::Invalid("K must be at least 1".into()));
    }
    if mu.len() != spec.dim() || sigma.len() != spec.dim() {
        return Err(SimulationError::Invalid("mu and sigma must match the spec dimension".into()));
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(SimulationError::Invalid("sigma must be non-negative".into()));
    }
    (0..k)
        .into_par_iter()
        .map(|seq| {
            let mut rng = rng::stream(seed, seq as u64);
            let beta: Vec<f64> = mu
                .iter()
                .zip(sigma)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + s * z
                })
                .collect();
            let history = simulate_history(
                &beta,
                spec,
                risk,
                cov,
                stop,
                &mut rng,
                limits,
                &format!("seq_{seq:03}"),
            )?;
            Ok(SimulatedSequence { history, beta })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{build_risk_set, validate, ContextInterval};
    use crate::statistics::{Effect, PShift, StatisticSpec};

    fn setup(effects: Vec<Effect>, n: usize) -> (RiskSet, CovariateSet, BoundSpec) {
        let risk = build_risk_set(n, false).unwrap();
        let cov = CovariateSet::new(n);
        let spec = StatisticSpec::new(effects).unwrap().bind(&cov, &risk).unwrap();
        (risk, cov, spec)
    }

    #[test]
    fn simulated_history_is_valid_and_reproducible() {
        let (risk, cov, spec) = setup(vec![Effect::Baserate, Effect::pshift(PShift::AbBa)], 4);
        let beta = [0.0, 1.0];
        let run = |seed| {
            let mut rng = rng::stream(seed, 0);
            simulate_history(&beta, &spec, &risk, &cov, StopRule::ByTime(20.0), &mut rng, &Default::default(), "s")
                .unwrap()
        };
        let a = run(7);
        assert!(validate(&a, &risk, &cov).is_empty());
        assert_eq!(a, run(7));
        assert_ne!(a, run(8));
    }

    #[test]
    fn by_count_closes_window_after_last_event() {
        let (risk, cov, spec) = setup(vec![Effect::Baserate], 3);
        let mut rng = rng::stream(1, 0);
        let h = simulate_history(&[0.0], &spec, &risk, &cov, StopRule::ByCount(50), &mut rng, &Default::default(), "s")
            .unwrap();
        assert_eq!(h.len(), 50);
        let last = h.events()[49].time;
        assert!((h.tau() - last * 51.0 / 50.0).abs() < 1e-12);
        assert!(validate(&h, &risk, &cov).is_empty());
    }

    #[test]
    fn explosive_spec_hits_event_cap() {
        let (risk, cov, spec) = setup(vec![Effect::Baserate, Effect::DyadCount { power: 2 }], 3);
        let mut rng = rng::stream(3, 0);
        let limits = SimulationLimits { max_events: Some(500) };
        let err = simulate_history(&[0.0, 1.0], &spec, &risk, &cov, StopRule::ByTime(100.0), &mut rng, &limits, "s");
        assert!(matches!(
            err,
            Err(SimulationError::EventCapExceeded(_)) | Err(SimulationError::NonFiniteRate(_))
        ));
    }

    #[test]
    fn zero_sigma_reproduces_mu() {
        let (risk, cov, spec) = setup(vec![Effect::Baserate, Effect::RecencySend], 3);
        let out = simulate_hierarchical(
            &[0.2, 0.5],
            &[0.0, 0.0],
            3,
            StopRule::ByCount(10),
            &spec,
            &risk,
            &cov,
            11,
            &Default::default(),
        )
        .unwrap();
        assert!(out.iter().all(|s| s.beta == vec![0.2, 0.5]));
    }

    #[test]
    fn context_boundaries_do_not_break_the_clock() {
        // constant rate across a context change: the process stays Poisson
        let risk = build_risk_set(2, false).unwrap();
        let mut cov = CovariateSet::new(2);
        cov.set_contexts(vec![
            ContextInterval { start: 0.0, label: "a".into() },
            ContextInterval { start: 500.0, label: "b".into() },
        ]);
        let spec = StatisticSpec::new(vec![Effect::Baserate]).unwrap().bind(&cov, &risk).unwrap();
        let mut rng = rng::stream(5, 0);
        let h = simulate_history(&[0.0], &spec, &risk, &cov, StopRule::ByTime(1000.0), &mut rng, &Default::default(), "s")
            .unwrap();
        let before = h.events().iter().filter(|e| e.time < 500.0).count() as f64;
        let after = h.len() as f64 - before;
        // both halves ~ Poisson(1000)
        assert!((before - 1000.0).abs() < 5.0 * 1000f64.sqrt());
        assert!((after - 1000.0).abs() < 5.0 * 1000f64.sqrt());
    }
}
