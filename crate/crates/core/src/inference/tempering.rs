//! Parallel tempering.
//!
//! Chain `j` raises the tempered part of its target to `1 / t_j`, i.e.
//! `exp(-g / t_j)` with `g` the negative log of that part. Every `t_swap`
//! steps one adjacent pair is picked uniformly and the two states are
//! exchanged with probability `min(1, exp((1/t_j - 1/t_{j+1}) (l_{j+1} - l_j)))`.
//!
//! For the hierarchical posterior only the likelihood is tempered: the
//! inverse-gamma prior on `sigma2` raised to a power below
//! `1 / (alpha + 1 + K/2)` is not integrable, so fully heated chains would
//! drift off to infinite variance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::SeqCache;
use super::collapsed::{HierState, SamplerConfig};
use super::samples::{PosteriorSamples, SwapStats};
use super::slice::{slice_step, AdaptiveWidth};
use super::{check_tables, log_prior, mean_events, Hyperparams, InferenceError};
use crate::rng::{self, StreamRng};
use crate::statistics::UniqueStatTable;

/// A Markov chain that can run at any inverse temperature.
pub trait TemperedChain: Send {
    /// Log of the tempered factor at the current state.
    fn log_target(&self) -> f64;

    /// One update leaving `base * exp(inv_temp * log_target)` invariant,
    /// where `base` is the untempered factor (if any).
    fn step(&mut self, inv_temp: f64, adapt: bool, rng: &mut StreamRng) -> Result<(), InferenceError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperingConfig {
    pub ladder: Vec<f64>,
    pub t_swap: usize,
}

impl Default for TemperingConfig {
    fn default() -> Self {
        Self {
            ladder: geometric_ladder(2.0, 5),
            t_swap: 10,
        }
    }
}

/// `t_j = gamma^(j - 1)` for `j = 1..=n`.
pub fn geometric_ladder(gamma: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| gamma.powi(j as i32)).collect()
}

/// At least two temperatures, starting at 1, never decreasing.
pub fn validate_ladder(ladder: &[f64]) -> Result<(), InferenceError> {
    if ladder.len() < 2 {
        return Err(InferenceError::Ladder("need at least two temperatures".into()));
    }
    if ladder[0] != 1.0 {
        return Err(InferenceError::Ladder("the base temperature must be 1".into()));
    }
    if ladder.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(InferenceError::Ladder("temperatures must be positive and finite".into()));
    }
    if let Some(w) = ladder.windows(2).find(|w| w[1] < w[0]) {
        return Err(InferenceError::Ladder(format!("{} follows {}", w[1], w[0])));
    }
    Ok(())
}

/// Log acceptance ratio for exchanging the states of chains at `t_j` and
/// `t_next` whose untempered log targets are `l_j` and `l_next`.
pub fn swap_log_ratio(t_j: f64, t_next: f64, l_j: f64, l_next: f64) -> f64 {
    let r = (1.0 / t_j - 1.0 / t_next) * (l_next - l_j);
    // equal temperatures or equal states: exactly zero, never NaN from inf - inf
    if r.is_nan() {
        0.0
    } else {
        r
    }
}

pub fn swap_acceptance_probability(t_j: f64, t_next: f64, l_j: f64, l_next: f64) -> f64 {
    let r = swap_log_ratio(t_j, t_next, l_j, l_next);
    if r >= 0.0 {
        1.0
    } else {
        r.exp()
    }
}

/// Runs `chains[j]` at `config.ladder[j]` for `n_steps` steps. `record` sees
/// the base chain after every step. Chains step concurrently, each with its
/// own random stream, and synchronize at swap proposals.
pub fn run_tempered<T, F>(
    chains: &mut [T],
    config: &TemperingConfig,
    n_steps: usize,
    n_adapt: usize,
    seed: u64,
    mut record: F,
) -> Result<SwapStats, InferenceError>
where
    T: TemperedChain,
    F: FnMut(usize, &T) -> Result<(), InferenceError>,
{
    validate_ladder(&config.ladder)?;
    if config.t_swap == 0 {
        return Err(InferenceError::Config("t_swap must be positive".into()));
    }
    let j_total = config.ladder.len();
    if chains.len() != j_total {
        return Err(InferenceError::Ladder(format!(
            "{} chains for {} temperatures",
            chains.len(),
            j_total
        )));
    }
    let mut rngs: Vec<StreamRng> = (0..j_total).map(|j| rng::substream(seed, 3, j as u64)).collect();
    let mut master = rng::substream(seed, 4, 0);
    let mut stats = SwapStats::new(j_total - 1);
    for step in 0..n_steps {
        let adapt = step < n_adapt;
        chains
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(config.ladder.par_iter())
            .try_for_each(|((chain, r), &t)| chain.step(1.0 / t, adapt, r))?;
        if (step + 1) % config.t_swap == 0 {
            let j = master.random_range(0..j_total - 1);
            let ratio = swap_log_ratio(
                config.ladder[j],
                config.ladder[j + 1],
                chains[j].log_target(),
                chains[j + 1].log_target(),
            );
            stats.proposed[j] += 1;
            if ratio >= 0.0 || master.random::<f64>() < ratio.exp() {
                chains.swap(j, j + 1);
                stats.accepted[j] += 1;
            }
        }
        record(step, &chains[0])?;
    }
    Ok(stats)
}

/// The hierarchical posterior with a tempered likelihood; `beta`, `mu` and
/// `log sigma2` are all slice-sampled.
struct HierChain<'a> {
    caches: Vec<SeqCache<'a>>,
    state: HierState,
    hyper: Hyperparams,
    beta_widths: Vec<Vec<AdaptiveWidth>>,
    mu_widths: Vec<AdaptiveWidth>,
    s2_widths: Vec<AdaptiveWidth>,
    mean_events: f64,
    ll: f64,
    lp: f64,
}

impl<'a> HierChain<'a> {
    fn new(tables: &'a [UniqueStatTable], hyper: &Hyperparams, width: f64) -> Self {
        let p = tables[0].dim();
        let state = HierState::initial(tables.len(), p, hyper, None);
        let caches = tables.iter().zip(&state.beta).map(|(t, b)| SeqCache::new(t, b)).collect();
        let mut chain = Self {
            caches,
            state,
            hyper: hyper.clone(),
            beta_widths: vec![vec![AdaptiveWidth::new(width); p]; tables.len()],
            mu_widths: vec![AdaptiveWidth::new(width); p],
            s2_widths: vec![AdaptiveWidth::new(width); p],
            mean_events: mean_events(tables),
            ll: 0.0,
            lp: 0.0,
        };
        chain.refresh();
        chain
    }

    fn refresh(&mut self) {
        self.ll = self.caches.iter().map(|c| c.loglik()).sum();
        self.lp = self.ll + log_prior(&self.state, &self.hyper, self.mean_events);
    }
}

impl TemperedChain for HierChain<'_> {
    fn log_target(&self) -> f64 {
        self.ll
    }

    fn step(&mut self, inv_temp: f64, adapt: bool, rng: &mut StreamRng) -> Result<(), InferenceError> {
        let k_total = self.caches.len();
        let p_total = self.state.mu.len();
        for k in 0..k_total {
            let cache = &mut self.caches[k];
            cache.reset(&self.state.beta[k]);
            for p in 0..p_total {
                let (mu, s2) = (self.state.mu[p], self.state.sigma2[p]);
                let x0 = self.state.beta[k][p];
                let target = |x: f64| inv_temp * cache.coordinate(p, x - x0) - (x - mu).powi(2) / (2.0 * s2);
                let w = &mut self.beta_widths[k][p];
                let (x1, _, st) = slice_step(x0, None, target, w.width, rng)
                    .map_err(|_| InferenceError::NonFinite { sequence: k, effect: p })?;
                if adapt {
                    w.record(st);
                }
                cache.shift(p, x1 - x0);
                self.state.beta[k][p] = x1;
            }
        }
        let sd2 = self.hyper.mu_prior_sd.powi(2);
        let (alpha, beta_s) = (self.hyper.alpha_sigma, self.hyper.beta_sigma);
        for p in 0..p_total {
            let betas: Vec<f64> = self.state.beta.iter().map(|b| b[p]).collect();
            let s2 = self.state.sigma2[p];
            let mu_target = |m: f64| {
                let ss: f64 = betas.iter().map(|b| (b - m).powi(2)).sum();
                -ss / (2.0 * s2) - m * m / (2.0 * sd2)
            };
            let w = &mut self.mu_widths[p];
            let (mu, _, st) = slice_step(self.state.mu[p], None, mu_target, w.width, rng)
                .map_err(|_| InferenceError::NonFinite { sequence: k_total, effect: p })?;
            if adapt {
                w.record(st);
            }
            self.state.mu[p] = mu;

            let ss: f64 = betas.iter().map(|b| (b - mu).powi(2)).sum();
            let kf = k_total as f64;
            // density of s = log sigma2, including the Jacobian e^s
            let s_target = |s: f64| -(kf / 2.0 + alpha + 1.0) * s - (ss / 2.0 + beta_s) * (-s).exp() + s;
            let w = &mut self.s2_widths[p];
            let (s, _, st) = slice_step(s2.ln(), None, s_target, w.width, rng)
                .map_err(|_| InferenceError::NonFinite { sequence: k_total, effect: p })?;
            if adapt {
                w.record(st);
            }
            self.state.sigma2[p] = s.exp();
        }
        self.refresh();
        Ok(())
    }
}

/// Parallel tempering over the hierarchical posterior. Only base-chain
/// draws are kept.
pub fn run_parallel_tempering(
    tables: &[UniqueStatTable],
    hyper: &Hyperparams,
    tempering: &TemperingConfig,
    config: &SamplerConfig,
) -> Result<PosteriorSamples, InferenceError> {
    hyper.validate()?;
    config.validate()?;
    validate_ladder(&tempering.ladder)?;
    if config.t_family.is_some() {
        return Err(InferenceError::Config(
            "the t-family population is only available with the collapsed sampler".into(),
        ));
    }
    let p = check_tables(tables)?;
    let mut chains: Vec<HierChain> = tempering
        .ladder
        .iter()
        .map(|_| HierChain::new(tables, hyper, config.initial_width))
        .collect();
    let mut out = PosteriorSamples::new("tempering", tables.len(), p, config.n_burnin, config.n_keep, config.thin);
    let burn = config.n_burnin;
    let swaps = run_tempered(
        &mut chains,
        tempering,
        burn + config.n_keep,
        burn,
        config.seed,
        |step, base| {
            if step >= burn && (step + 1 - burn) % config.thin == 0 {
                if !base.lp.is_finite() {
                    return Err(InferenceError::NonFiniteLogPosterior { draw: out.draws.len() });
                }
                out.draws.push(base.state.to_draw(base.lp));
            }
            Ok(())
        },
    )?;
    out.swaps = Some(swaps);
    out.compute_diagnostics();
    Ok(out)
}
