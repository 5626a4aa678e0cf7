use serde::{Deserialize, Serialize};

use super::convergence::{effective_sample_size, split_rhat};

/// One kept state of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    /// `beta[k][p]`
    pub beta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    pub log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub ess: f64,
    pub rhat: f64,
}

/// Swap proposals and acceptances per adjacent pair `(j, j + 1)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwapStats {
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
}

impl SwapStats {
    pub fn new(pairs: usize) -> Self {
        Self {
            proposed: vec![0; pairs],
            accepted: vec![0; pairs],
        }
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.proposed
            .iter()
            .zip(&self.accepted)
            .map(|(&p, &a)| if p == 0 { f64::NAN } else { a as f64 / p as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub sampler: String,
    pub n_burnin: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub effect_names: Vec<String>,
    pub sequence_ids: Vec<String>,
    pub draws: Vec<Draw>,
    pub diagnostics: Vec<ParamDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swaps: Option<SwapStats>,
}

impl PosteriorSamples {
    pub(crate) fn new(sampler: &str, k: usize, p: usize, n_burnin: usize, n_keep: usize, thin: usize) -> Self {
        Self {
            sampler: sampler.to_string(),
            n_burnin,
            n_keep,
            thin,
            effect_names: (0..p).map(|i| format!("b{i}")).collect(),
            sequence_ids: (0..k).map(|i| format!("seq{i}")).collect(),
            draws: Vec::new(),
            diagnostics: Vec::new(),
            swaps: None,
        }
    }

    pub fn n_sequences(&self) -> usize {
        self.sequence_ids.len()
    }

    pub fn n_effects(&self) -> usize {
        self.effect_names.len()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Replaces the default labels; diagnostics are renamed to match.
    pub fn with_names(mut self, effects: Vec<String>, sequences: Vec<String>) -> Self {
        assert_eq!(effects.len(), self.n_effects());
        assert_eq!(sequences.len(), self.n_sequences());
        self.effect_names = effects;
        self.sequence_ids = sequences;
        if !self.diagnostics.is_empty() {
            self.compute_diagnostics();
        }
        self
    }

    pub fn beta_series(&self, k: usize, p: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.beta[k][p]).collect()
    }

    pub fn mu_series(&self, p: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.mu[p]).collect()
    }

    pub fn sigma2_series(&self, p: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma2[p]).collect()
    }

    /// Posterior mean of every `beta_k`, accumulated incrementally so that
    /// identical draws reproduce their value exactly.
    pub fn beta_mean(&self) -> Vec<Vec<f64>> {
        let mut mean = vec![vec![0.0; self.n_effects()]; self.n_sequences()];
        for (n, d) in self.draws.iter().enumerate() {
            for (mk, bk) in mean.iter_mut().zip(&d.beta) {
                for (m, b) in mk.iter_mut().zip(bk) {
                    *m += (b - *m) / (n + 1) as f64;
                }
            }
        }
        mean
    }

    pub fn mu_mean(&self) -> Vec<f64> {
        (0..self.n_effects()).map(|p| mean(&self.mu_series(p))).collect()
    }

    pub fn sigma2_mean(&self) -> Vec<f64> {
        (0..self.n_effects()).map(|p| mean(&self.sigma2_series(p))).collect()
    }

    /// Central interval `[q_(1-level)/2, q_(1+level)/2]` of `beta[k][p]`.
    pub fn beta_interval(&self, k: usize, p: usize, level: f64) -> (f64, f64) {
        let mut xs = self.beta_series(k, p);
        xs.sort_by(f64::total_cmp);
        let a = (1.0 - level) / 2.0;
        (quantile_sorted(&xs, a), quantile_sorted(&xs, 1.0 - a))
    }

    pub fn beta_name(&self, k: usize, p: usize) -> String {
        format!("beta[{}][{}]", self.sequence_ids[k], self.effect_names[p])
    }

    pub(crate) fn compute_diagnostics(&mut self) {
        let mut out = Vec::new();
        let mut push = |name: String, xs: Vec<f64>| {
            out.push(ParamDiagnostic {
                name,
                ess: effective_sample_size(&xs),
                rhat: split_rhat(&xs),
            });
        };
        for p in 0..self.n_effects() {
            push(format!("mu[{}]", self.effect_names[p]), self.mu_series(p));
            push(format!("sigma2[{}]", self.effect_names[p]), self.sigma2_series(p));
        }
        for k in 0..self.n_sequences() {
            for p in 0..self.n_effects() {
                push(self.beta_name(k, p), self.beta_series(k, p));
            }
        }
        self.diagnostics = out;
    }

    pub fn max_rhat(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.rhat)
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.ess).fold(f64::INFINITY, f64::min)
    }
}

fn mean(xs: &[f64]) -> f64 {
    let mut m = 0.0;
    for (n, x) in xs.iter().enumerate() {
        m += (x - m) / (n + 1) as f64;
    }
    m
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}
