//! Statistic vectors `s(t, i, j, A_t)`, incremental history state and the
//! unique-vector cache used by the likelihood.

mod effects;
mod state;
mod table;

pub use effects::{AttrLevel, BoundSpec, Effect, PShift, StatisticSpec, ValueTransform};
pub use state::{Direction, SeqState};
pub use table::UniqueStatTable;

use thiserror::Error;

use crate::event_data::{ActorId, CovariateSet, Event, EventHistory};

#[derive(Debug, Error)]
pub enum StatisticsError {
    #[error("statistic specification is empty")]
    EmptySpec,
    #[error("duplicate effect `{0}`")]
    DuplicateEffect(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("covariate `{0}` has non-finite values")]
    NonFiniteCovariate(String),
    #[error("effect requires a broadcast actor but the risk set has none")]
    NoBroadcastActor,
    #[error("invalid effect: {0}")]
    InvalidEffect(String),
    #[error("event at {time} does not follow the last applied event at {last}")]
    OutOfOrder { time: f64, last: f64 },
    #[error("unknown actor {0}")]
    UnknownActor(ActorId),
}

/// `s(t, i, j, A_t)` for one dyad.
pub fn compute_stat_vector(spec: &BoundSpec, state: &SeqState, i: ActorId, j: ActorId) -> Vec<f64> {
    spec.eval(state, i, j)
}

/// Inverse recency rank of `j` in `i`'s send or receive list.
pub fn recency_rank(direction: Direction, state: &SeqState, i: ActorId, j: ActorId) -> f64 {
    state.recency_rank(direction, i, j)
}

/// Pure state transition for one event.
pub fn update_state(state: &SeqState, event: &Event, cov: &CovariateSet) -> Result<SeqState, StatisticsError> {
    state.updated(event, cov)
}

/// One step of a chronological pass over a history.
pub enum ReplayStep<'a> {
    /// A stretch of `duration` with constant statistics, inside the interval
    /// that ends with event `m` (`m == M` is the final censored interval).
    Exposure {
        m: usize,
        state: &'a SeqState,
        duration: f64,
    },
    /// Event `m` is about to be applied; `state` reflects `A_{t_m}`.
    Event {
        m: usize,
        state: &'a SeqState,
        event: &'a Event,
    },
}

/// Walks a history in time order, splitting every inter-event interval at
/// context changes. Returns the final state.
pub fn replay<E, F>(
    history: &EventHistory,
    cov: &CovariateSet,
    n_nodes: usize,
    mut visit: F,
) -> Result<SeqState, E>
where
    E: From<StatisticsError>,
    F: FnMut(ReplayStep<'_>) -> Result<(), E>,
{
    let mut state = SeqState::start(n_nodes, cov);
    let mut from = 0.0;
    let events = history.events();
    for m in 0..=events.len() {
        let to = events.get(m).map_or(history.tau(), |e| e.time);
        let mut cursor = from;
        let changes: Vec<f64> = cov.context_changes_between(from, to).collect();
        for c in changes {
            visit(ReplayStep::Exposure {
                m,
                state: &state,
                duration: c - cursor,
            })?;
            state.advance_to(c, cov);
            cursor = c;
        }
        visit(ReplayStep::Exposure {
            m,
            state: &state,
            duration: to - cursor,
        })?;
        if let Some(event) = events.get(m) {
            state.advance_to(event.time, cov);
            visit(ReplayStep::Event {
                m,
                state: &state,
                event,
            })?;
            state.apply(event, cov)?;
            from = event.time;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::{build_risk_set, ContextInterval};

    #[test]
    fn reciprocation_indicator() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::pshift(PShift::AbBa), Effect::pshift(PShift::AbXb)])
            .unwrap()
            .bind(&cov, &risk)
            .unwrap();
        let state = SeqState::replayed(3, &[Event::new(0.1, 0, 1)], &cov).unwrap();
        assert_eq!(compute_stat_vector(&spec, &state, 1, 0), vec![1.0, 0.0]);
        assert_eq!(compute_stat_vector(&spec, &state, 2, 1), vec![0.0, 1.0]);
    }

    #[test]
    fn first_event_has_no_pshift() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let effects = PShift::ALL.iter().map(|&k| Effect::pshift(k)).collect();
        let spec = StatisticSpec::new(effects).unwrap().bind(&cov, &risk).unwrap();
        let state = SeqState::new(3);
        for &(i, j) in risk.dyads() {
            assert!(compute_stat_vector(&spec, &state, i, j).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn recency_falls_to_half() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::RecencySend]).unwrap().bind(&cov, &risk).unwrap();
        let s1 = SeqState::replayed(3, &[Event::new(0.1, 0, 1)], &cov).unwrap();
        assert_eq!(compute_stat_vector(&spec, &s1, 0, 1), vec![1.0]);
        let s2 = update_state(&s1, &Event::new(0.2, 0, 2), &cov).unwrap();
        assert_eq!(compute_stat_vector(&spec, &s2, 0, 1), vec![0.5]);
        assert_eq!(recency_rank(Direction::Send, &s2, 0, 2), 1.0);
    }

    #[test]
    fn replay_splits_at_context_changes() {
        let mut cov = CovariateSet::new(2);
        cov.set_contexts(vec![
            ContextInterval { start: 0.0, label: "a".into() },
            ContextInterval { start: 0.25, label: "b".into() },
            ContextInterval { start: 0.75, label: "a".into() },
        ]);
        let h = EventHistory::new(vec![Event::new(0.5, 0, 1)], 1.0, 2, "s");
        let mut pieces = Vec::new();
        replay::<StatisticsError, _>(&h, &cov, 2, |step| {
            match step {
                ReplayStep::Exposure { m, state, duration } => pieces.push((m, state.context(), duration)),
                ReplayStep::Event { state, .. } => assert_eq!(state.context(), Some(1)),
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(
            pieces,
            vec![(0, Some(0), 0.25), (0, Some(1), 0.25), (1, Some(1), 0.25), (1, Some(2), 0.25)]
        );
    }
}
