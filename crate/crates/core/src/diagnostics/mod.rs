//! Model selection, predictive evaluation and adequacy checks.

mod output;

pub use output::{
    write_probabilities_csv, write_recall_csv, write_residuals_csv, write_surprise_csv, write_surprise_edges,
    ProbabilityRow, RecallRow, ResidualRow,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{ActorId, CovariateSet, EventHistory, RiskSet};
use crate::inference::PosteriorSamples;
use crate::likelihood::{dot, linear_predictors, log_sum_exp, loglik_full, LikelihoodError};
use crate::statistics::{replay, BoundSpec, PShift, ReplayStep, StatisticsError, UniqueStatTable};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("no posterior draws")]
    EmptySamples,
    #[error("z = {z} is outside 1..={n_dyads}")]
    ZOutOfRange { z: usize, n_dyads: usize },
    #[error("test segment is empty")]
    EmptyTestSegment,
    #[error("event index {m} out of range for {n} events")]
    EventIndex { m: usize, n: usize },
    #[error("threshold must be at least 1")]
    Threshold,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

/// `D = -2 sum_k loglik_k(beta_k)`, `p_D = mean(D) - D(posterior mean)`,
/// `DIC = mean(D) + p_D`.
pub fn dic(samples: &PosteriorSamples, tables: &[UniqueStatTable]) -> Result<DicReport, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptySamples);
    }
    if samples.n_sequences() != tables.len() {
        return Err(DiagnosticsError::DimensionMismatch(samples.n_sequences(), tables.len()));
    }
    let deviance = |betas: &[Vec<f64>]| -> Result<f64, DiagnosticsError> {
        let mut ll = 0.0;
        for (b, t) in betas.iter().zip(tables) {
            ll += loglik_full(b, t)?;
        }
        Ok(-2.0 * ll)
    };
    let mut mean_dev = 0.0;
    for (n, d) in samples.draws.iter().enumerate() {
        mean_dev += (deviance(&d.beta)? - mean_dev) / (n + 1) as f64;
    }
    let at_mean = deviance(&samples.beta_mean())?;
    let p_d = mean_dev - at_mean;
    if p_d < 0.0 {
        log::warn!("negative effective number of parameters (p_D = {p_d:.3})");
    }
    Ok(DicReport {
        dic: mean_dev + p_d,
        p_d,
        mean_deviance: mean_dev,
        deviance_at_mean: at_mean,
    })
}

/// Frozen per-dyad event counts from a training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalBaseline {
    counts: Vec<f64>,
}

impl EmpiricalBaseline {
    /// Scores aligned with `risk.dyads()`.
    pub fn scores(&self) -> &[f64] {
        &self.counts
    }
}

/// Ranks dyads by how often they occurred in `train`; unseen dyads tie last.
pub fn empirical_baseline(train: &EventHistory, risk: &RiskSet) -> EmpiricalBaseline {
    let mut counts = vec![0.0; risk.len()];
    for e in train.events() {
        if let Some(r) = risk.index_of(e.sender, e.recipient) {
            counts[r] += 1.0;
        }
    }
    EmpiricalBaseline { counts }
}

/// How dyads are scored at each test event.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    /// Intensity under fixed coefficients.
    Model(&'a [f64]),
    Baseline(&'a EmpiricalBaseline),
}

/// Descending rank of `scores[obs]`, with ties placed uniformly at random
/// among themselves.
pub fn random_rank<R: Rng + ?Sized>(scores: &[f64], obs: usize, rng: &mut R) -> usize {
    let s = scores[obs];
    let mut greater = 0;
    let mut ties = 0;
    for (r, &x) in scores.iter().enumerate() {
        if x > s {
            greater += 1;
        } else if x == s && r != obs {
            ties += 1;
        }
    }
    1 + greater + rng.random_range(0..=ties)
}

/// Rank of every event `m >= test_start` among all dyads of the risk set,
/// given the full history before it.
pub fn event_ranks<R: Rng + ?Sized>(
    scorer: Scorer<'_>,
    history: &EventHistory,
    test_start: usize,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    rng: &mut R,
) -> Result<Vec<usize>, DiagnosticsError> {
    if test_start >= history.len() {
        return Err(DiagnosticsError::EmptyTestSegment);
    }
    if let Scorer::Model(beta) = scorer {
        if beta.len() != spec.dim() {
            return Err(DiagnosticsError::DimensionMismatch(beta.len(), spec.dim()));
        }
    }
    let mut ranks = Vec::with_capacity(history.len() - test_start);
    replay::<DiagnosticsError, _>(history, cov, risk.n_nodes(), |step| {
        if let ReplayStep::Event { m, state, event } = step {
            if m >= test_start {
                let obs = risk
                    .index_of(event.sender, event.recipient)
                    .ok_or(StatisticsError::UnknownActor(event.recipient))?;
                let rank = match scorer {
                    Scorer::Model(beta) => random_rank(&linear_predictors(beta, spec, state, risk), obs, rng),
                    Scorer::Baseline(b) => random_rank(b.scores(), obs, rng),
                };
                ranks.push(rank);
            }
        }
        Ok(())
    })?;
    Ok(ranks)
}

/// Fraction of ranks `<= z`.
pub fn recall_from_ranks(ranks: &[usize], z: usize) -> f64 {
    if ranks.is_empty() {
        return f64::NAN;
    }
    ranks.iter().filter(|&&r| r <= z).count() as f64 / ranks.len() as f64
}

/// Recall@z of the events from `test_start` on, ranked by fixed
/// coefficients.
#[allow(clippy::too_many_arguments)]
pub fn recall_at_z<R: Rng + ?Sized>(
    beta: &[f64],
    history: &EventHistory,
    test_start: usize,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    z: usize,
    rng: &mut R,
) -> Result<f64, DiagnosticsError> {
    check_z(z, risk)?;
    let ranks = event_ranks(Scorer::Model(beta), history, test_start, spec, risk, cov, rng)?;
    Ok(recall_from_ranks(&ranks, z))
}

/// Recall@z averaged over posterior draws of one sequence's coefficients.
#[allow(clippy::too_many_arguments)]
pub fn recall_at_z_draws<R: Rng + ?Sized>(
    draws: &[Vec<f64>],
    history: &EventHistory,
    test_start: usize,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    z: usize,
    rng: &mut R,
) -> Result<f64, DiagnosticsError> {
    if draws.is_empty() {
        return Err(DiagnosticsError::EmptySamples);
    }
    let mut total = 0.0;
    for b in draws {
        total += recall_at_z(b, history, test_start, spec, risk, cov, z, rng)?;
    }
    Ok(total / draws.len() as f64)
}

pub fn check_z(z: usize, risk: &RiskSet) -> Result<(), DiagnosticsError> {
    if z == 0 || z > risk.len() {
        return Err(DiagnosticsError::ZOutOfRange { z, n_dyads: risk.len() });
    }
    Ok(())
}

/// Per-event deviance contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DevianceResiduals {
    /// `-2 [log lambda_obs - sum_pieces dt * sum lambda]` for each event.
    pub events: Vec<f64>,
    /// `2 (tau - t_M) sum lambda` after the last event.
    pub censoring: f64,
}

impl DevianceResiduals {
    pub fn total(&self) -> f64 {
        self.events.iter().sum::<f64>() + self.censoring
    }
}

/// Splits `-2 loglik` into one term per event plus the final censoring term,
/// with exposure `dt * sum lambda` over the preceding interval.
pub fn deviance_residuals(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
) -> Result<DevianceResiduals, DiagnosticsError> {
    if beta.len() != spec.dim() {
        return Err(DiagnosticsError::DimensionMismatch(beta.len(), spec.dim()));
    }
    let n = history.len();
    let mut exposure = vec![0.0; n + 1];
    let mut log_obs = vec![0.0; n];
    let mut stats = Vec::new();
    replay::<DiagnosticsError, _>(history, cov, risk.n_nodes(), |step| {
        match step {
            ReplayStep::Exposure { m, state, duration } => {
                if duration > 0.0 {
                    spec.eval_all(state, risk, &mut stats);
                    let total: f64 = stats.chunks_exact(spec.dim()).map(|s| dot(beta, s).exp()).sum();
                    if !total.is_finite() {
                        return Err(LikelihoodError::NonFiniteHazard(total).into());
                    }
                    exposure[m] += duration * total;
                }
            }
            ReplayStep::Event { m, state, event } => {
                log_obs[m] = dot(beta, &spec.eval(state, event.sender, event.recipient));
            }
        }
        Ok(())
    })?;
    Ok(DevianceResiduals {
        events: (0..n).map(|m| -2.0 * (log_obs[m] - exposure[m])).collect(),
        censoring: 2.0 * exposure[n],
    })
}

/// Participation-shift class of every event relative to the one before it.
pub fn pshift_labels(history: &EventHistory) -> Vec<Option<PShift>> {
    let mut prev = None;
    history
        .events()
        .iter()
        .map(|e| {
            let label = prev.and_then(|p| PShift::classify(p, e.sender, e.recipient));
            prev = Some(e.dyad());
            label
        })
        .collect()
}

/// `lambda_obs / sum lambda` for every event, in order.
pub fn event_probabilities(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
) -> Result<Vec<f64>, DiagnosticsError> {
    if beta.len() != spec.dim() {
        return Err(DiagnosticsError::DimensionMismatch(beta.len(), spec.dim()));
    }
    let mut out = Vec::with_capacity(history.len());
    replay::<DiagnosticsError, _>(history, cov, risk.n_nodes(), |step| {
        if let ReplayStep::Event { state, event, .. } = step {
            let etas = linear_predictors(beta, spec, state, risk);
            let obs = risk
                .index_of(event.sender, event.recipient)
                .ok_or(StatisticsError::UnknownActor(event.recipient))?;
            out.push((etas[obs] - log_sum_exp(&etas)).exp());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Probability that event `m` (0-based) is the observed dyad.
pub fn event_probability(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    m: usize,
) -> Result<f64, DiagnosticsError> {
    if m >= history.len() {
        return Err(DiagnosticsError::EventIndex { m, n: history.len() });
    }
    let truncated = history.truncate(m + 1);
    Ok(event_probabilities(beta, &truncated, spec, risk, cov)?[m])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseEntry {
    pub sender: ActorId,
    pub recipient: ActorId,
    pub n_events: usize,
    pub n_surprising: usize,
    /// `None` when the dyad never occurred.
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurpriseMatrix {
    pub threshold: usize,
    /// One entry per dyad of the risk set, in risk-set order.
    pub entries: Vec<SurpriseEntry>,
}

impl SurpriseMatrix {
    pub fn get(&self, sender: ActorId, recipient: ActorId) -> Option<&SurpriseEntry> {
        self.entries
            .iter()
            .find(|e| e.sender == sender && e.recipient == recipient)
    }

    /// Surprising events over all events of the dyads selected by `keep`.
    pub fn pooled_q<F: Fn(ActorId, ActorId) -> bool>(&self, keep: F) -> Option<f64> {
        let (n, s) = self
            .entries
            .iter()
            .filter(|e| keep(e.sender, e.recipient))
            .fold((0, 0), |(n, s), e| (n + e.n_events, s + e.n_surprising));
        (n > 0).then(|| s as f64 / n as f64)
    }
}

/// Share of each dyad's events whose predicted rank exceeds `threshold`.
pub fn surprise_matrix<R: Rng + ?Sized>(
    beta: &[f64],
    history: &EventHistory,
    spec: &BoundSpec,
    risk: &RiskSet,
    cov: &CovariateSet,
    threshold: usize,
    rng: &mut R,
) -> Result<SurpriseMatrix, DiagnosticsError> {
    if threshold == 0 {
        return Err(DiagnosticsError::Threshold);
    }
    let mut n_events = vec![0usize; risk.len()];
    let mut n_surprising = vec![0usize; risk.len()];
    if !history.is_empty() {
        let ranks = event_ranks(Scorer::Model(beta), history, 0, spec, risk, cov, rng)?;
        for (e, rank) in history.events().iter().zip(ranks) {
            let r = risk.index_of(e.sender, e.recipient).expect("validated history");
            n_events[r] += 1;
            if rank > threshold {
                n_surprising[r] += 1;
            }
        }
    }
    let entries = risk
        .dyads()
        .iter()
        .enumerate()
        .map(|(r, &(i, j))| SurpriseEntry {
            sender: i,
            recipient: j,
            n_events: n_events[r],
            n_surprising: n_surprising[r],
            q: (n_events[r] > 0).then(|| n_surprising[r] as f64 / n_events[r] as f64),
        })
        .collect();
    Ok(SurpriseMatrix { threshold, entries })
}

/// `(1/P) sum (estimate_p - truth_p)^2`.
pub fn mse(truth: &[f64], estimate: &[f64]) -> Result<f64, DiagnosticsError> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(DiagnosticsError::DimensionMismatch(truth.len(), estimate.len()));
    }
    Ok(truth.iter().zip(estimate).map(|(t, e)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{build_risk_set, Event};
    use crate::likelihood::loglik_order;
    use crate::rng;
    use crate::statistics::{Effect, StatisticSpec};

    fn uniform(n: usize) -> (RiskSet, CovariateSet, BoundSpec) {
        let risk = build_risk_set(n, false).unwrap();
        let cov = CovariateSet::new(n);
        let spec = StatisticSpec::new(vec![Effect::Baserate]).unwrap().bind(&cov, &risk).unwrap();
        (risk, cov, spec)
    }

    #[test]
    fn residual_hand_value_and_decomposition() {
        let (risk, cov, spec) = uniform(2);
        let h = EventHistory::new(vec![Event::new(0.5, 0, 1), Event::new(1.0, 1, 0)], 1.25, 2, "s");
        let res = deviance_residuals(&[0.0], &h, &spec, &risk, &cov).unwrap();
        assert_eq!(res.events, vec![2.0, 2.0]);
        assert_eq!(res.censoring, 1.0);
        let table = UniqueStatTable::build(&spec, &h, &risk, &cov).unwrap();
        let ll = loglik_full(&[0.0], &table).unwrap();
        assert!((res.total() + 2.0 * ll).abs() < 1e-12);
    }

    #[test]
    fn baseline_orders_by_training_counts() {
        let (risk, _, _) = uniform(3);
        let train = EventHistory::new(
            vec![Event::new(0.1, 0, 1), Event::new(0.2, 0, 1), Event::new(0.3, 1, 0)],
            1.0,
            3,
            "s",
        );
        let b = empirical_baseline(&train, &risk);
        let mut r = rng::stream(0, 0);
        let i01 = risk.index_of(0, 1).unwrap();
        let i10 = risk.index_of(1, 0).unwrap();
        assert_eq!(random_rank(b.scores(), i01, &mut r), 1);
        assert_eq!(random_rank(b.scores(), i10, &mut r), 2);
        let other = risk.index_of(2, 0).unwrap();
        for _ in 0..50 {
            assert!((3..=6).contains(&random_rank(b.scores(), other, &mut r)));
        }
    }

    #[test]
    fn uniform_probabilities_and_order_identity() {
        let (risk, cov, spec) = uniform(4);
        let h = EventHistory::new(vec![Event::new(0.5, 0, 1), Event::new(1.0, 1, 2)], 2.0, 4, "s");
        let p = event_probabilities(&[0.7], &h, &spec, &risk, &cov).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 12.0).abs() < 1e-15));
        let lo = loglik_order(&[0.7], &h, &spec, &risk, &cov).unwrap();
        let mean_log: f64 = p.iter().map(|x| x.ln()).sum::<f64>() / 2.0;
        assert!((mean_log - lo / 2.0).abs() < 1e-12);
        assert!((event_probability(&[0.7], &h, &spec, &risk, &cov, 1).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!(event_probability(&[0.7], &h, &spec, &risk, &cov, 2).is_err());
    }

    #[test]
    fn recall_bounds() {
        let (risk, cov, spec) = uniform(4);
        let h = EventHistory::new(
            vec![Event::new(0.5, 0, 1), Event::new(1.0, 1, 2), Event::new(1.5, 3, 2)],
            2.0,
            4,
            "s",
        );
        let mut r = rng::stream(1, 0);
        assert_eq!(recall_at_z(&[0.0], &h, 1, &spec, &risk, &cov, 12, &mut r).unwrap(), 1.0);
        assert!(recall_at_z(&[0.0], &h, 1, &spec, &risk, &cov, 13, &mut r).is_err());
        assert!(recall_at_z(&[0.0], &h, 3, &spec, &risk, &cov, 5, &mut r).is_err());
    }

    #[test]
    fn surprise_absent_for_unseen_dyads() {
        let (risk, cov, spec) = uniform(3);
        let h = EventHistory::new(vec![Event::new(0.5, 0, 1)], 1.0, 3, "s");
        let mut r = rng::stream(2, 0);
        let s = surprise_matrix(&[0.0], &h, &spec, &risk, &cov, 6, &mut r).unwrap();
        assert_eq!(s.get(0, 1).unwrap().q, Some(0.0));
        assert_eq!(s.get(1, 0).unwrap().q, None);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert!(mse(&[0.0; 3], &[1.0; 4]).is_err());
    }
}
