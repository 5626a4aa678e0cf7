//! Event sequences, risk sets and covariates.
//!
//! Actors are dense integers `0..n_actors` after ingestion. When a risk set
//! carries a broadcast actor it receives the id `n_actors`, one past the last
//! real actor, and only ever appears as a recipient.

mod io;

pub use io::{
    assemble, covariate_doc, load_history, parse_covariates, read_events_csv, write_covariates_json, write_events_csv,
    ActorIndex, CovariateDoc, HistoryFormat, LoadOptions, LoadedHistory, RawEvent, TiePolicy,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ActorId = usize;

#[derive(Debug, Error)]
pub enum EventDataError {
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
    #[error("risk set needs at least 2 actors, got {0}")]
    TooFewActors(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single relational event `(t, sender, recipient)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub sender: ActorId,
    pub recipient: ActorId,
}

impl Event {
    pub fn new(time: f64, sender: ActorId, recipient: ActorId) -> Self {
        Self {
            time,
            sender,
            recipient,
        }
    }

    pub fn dyad(&self) -> (ActorId, ActorId) {
        (self.sender, self.recipient)
    }
}

/// An ordered event sequence observed over `[0, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    events: Vec<Event>,
    tau: f64,
    n_actors: usize,
    sequence_id: String,
}

impl EventHistory {
    /// Builds a history without checking invariants; see [`validate`].
    pub fn new(
        events: Vec<Event>,
        tau: f64,
        n_actors: usize,
        sequence_id: impl Into<String>,
    ) -> Self {
        Self {
            events,
            tau,
            n_actors,
            sequence_id: sequence_id.into(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    pub fn sequence_id(&self) -> &str {
        &self.sequence_id
    }

    /// The first `m` events, observed up to the time of event `m + 1`
    /// (or `tau` when `m` covers the whole history).
    pub fn truncate(&self, m: usize) -> EventHistory {
        if m >= self.events.len() {
            return self.clone();
        }
        EventHistory {
            events: self.events[..m].to_vec(),
            tau: self.events[m].time,
            n_actors: self.n_actors,
            sequence_id: self.sequence_id.clone(),
        }
    }
}

/// The fixed set of dyads at risk: all non-reflexive pairs among real actors,
/// plus `(i, broadcast)` for every real actor when a broadcast actor exists.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSet {
    n_actors: usize,
    broadcast: Option<ActorId>,
    dyads: Vec<(ActorId, ActorId)>,
    // dense (n_nodes x n_nodes) lookup into `dyads`
    lookup: Vec<u32>,
}

const NO_DYAD: u32 = u32::MAX;

impl RiskSet {
    pub fn dyads(&self) -> &[(ActorId, ActorId)] {
        &self.dyads
    }

    pub fn len(&self) -> usize {
        self.dyads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dyads.is_empty()
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    /// Number of nodes including the broadcast actor.
    pub fn n_nodes(&self) -> usize {
        self.n_actors + usize::from(self.broadcast.is_some())
    }

    pub fn broadcast(&self) -> Option<ActorId> {
        self.broadcast
    }

    pub fn is_broadcast(&self, actor: ActorId) -> bool {
        self.broadcast == Some(actor)
    }

    pub fn index_of(&self, sender: ActorId, recipient: ActorId) -> Option<usize> {
        let n = self.n_nodes();
        if sender >= n || recipient >= n {
            return None;
        }
        match self.lookup[sender * n + recipient] {
            NO_DYAD => None,
            k => Some(k as usize),
        }
    }

    pub fn contains(&self, sender: ActorId, recipient: ActorId) -> bool {
        self.index_of(sender, recipient).is_some()
    }
}

/// Risk set of every non-reflexive dyad among `n_actors` actors, optionally
/// extended by a broadcast recipient with id `n_actors`.
pub fn build_risk_set(n_actors: usize, include_broadcast: bool) -> Result<RiskSet, EventDataError> {
    if n_actors < 2 {
        return Err(EventDataError::TooFewActors(n_actors));
    }
    let broadcast = include_broadcast.then_some(n_actors);
    let n_nodes = n_actors + usize::from(include_broadcast);
    let mut dyads = Vec::with_capacity(n_actors * (n_actors - 1) + usize::from(include_broadcast) * n_actors);
    let mut lookup = vec![NO_DYAD; n_nodes * n_nodes];
    for i in 0..n_actors {
        for j in 0..n_nodes {
            if i == j {
                continue;
            }
            lookup[i * n_nodes + j] = dyads.len() as u32;
            dyads.push((i, j));
        }
    }
    Ok(RiskSet {
        n_actors,
        broadcast,
        dyads,
        lookup,
    })
}

/// A categorical or real-valued actor attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Real(f64),
    Category(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Real(x) => write!(f, "{x}"),
            AttrValue::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextInterval {
    pub start: f64,
    pub label: String,
}

/// Exogenous covariates for one sequence.
///
/// Dyad attributes that are not listed for a dyad read as `0.0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateSet {
    actor_attrs: Vec<BTreeMap<String, AttrValue>>,
    dyad_attrs: BTreeMap<String, BTreeMap<(ActorId, ActorId), f64>>,
    contexts: Vec<ContextInterval>,
}

impl CovariateSet {
    pub fn new(n_actors: usize) -> Self {
        Self {
            actor_attrs: vec![BTreeMap::new(); n_actors],
            ..Default::default()
        }
    }

    pub fn n_actors(&self) -> usize {
        self.actor_attrs.len()
    }

    pub fn set_actor_attr(&mut self, actor: ActorId, name: impl Into<String>, value: AttrValue) {
        if actor >= self.actor_attrs.len() {
            self.actor_attrs.resize(actor + 1, BTreeMap::new());
        }
        self.actor_attrs[actor].insert(name.into(), value);
    }

    pub fn actor_attr(&self, actor: ActorId, name: &str) -> Option<&AttrValue> {
        self.actor_attrs.get(actor).and_then(|m| m.get(name))
    }

    pub fn actor_attrs(&self, actor: ActorId) -> Option<&BTreeMap<String, AttrValue>> {
        self.actor_attrs.get(actor)
    }

    pub fn set_dyad_attr(&mut self, dyad: (ActorId, ActorId), name: impl Into<String>, value: f64) {
        self.dyad_attrs.entry(name.into()).or_default().insert(dyad, value);
    }

    pub fn has_dyad_attr(&self, name: &str) -> bool {
        self.dyad_attrs.contains_key(name)
    }

    pub fn dyad_attr(&self, dyad: (ActorId, ActorId), name: &str) -> Option<f64> {
        self.dyad_attrs.get(name).and_then(|m| m.get(&dyad)).copied()
    }

    pub fn dyad_attr_names(&self) -> impl Iterator<Item = &str> {
        self.dyad_attrs.keys().map(String::as_str)
    }

    pub(crate) fn dyad_attr_map(&self) -> &BTreeMap<String, BTreeMap<(ActorId, ActorId), f64>> {
        &self.dyad_attrs
    }

    pub fn set_contexts(&mut self, contexts: Vec<ContextInterval>) {
        self.contexts = contexts;
    }

    pub fn contexts(&self) -> &[ContextInterval] {
        &self.contexts
    }

    /// Index of the context interval containing `t`, if any context track exists.
    pub fn context_index_at(&self, t: f64) -> Option<usize> {
        if self.contexts.is_empty() {
            return None;
        }
        let k = self.contexts.partition_point(|c| c.start <= t);
        Some(k.saturating_sub(1))
    }

    pub fn context_label_at(&self, t: f64) -> Option<&str> {
        self.context_index_at(t).map(|k| self.contexts[k].label.as_str())
    }

    /// Context boundaries strictly inside `(from, to)`.
    pub fn context_changes_between(&self, from: f64, to: f64) -> impl Iterator<Item = f64> + '_ {
        let lo = self.contexts.partition_point(|c| c.start <= from);
        self.contexts[lo..]
            .iter()
            .map(|c| c.start)
            .take_while(move |&s| s < to)
    }
}

/// One broken invariant, located by event (or context) index.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveTau,
    NonPositiveTime { index: usize },
    NotIncreasing { index: usize },
    OutsideWindow { index: usize },
    UnknownActor { index: usize },
    ReflexiveEvent { index: usize },
    BroadcastSender { index: usize },
    NotInRiskSet { index: usize },
    ActorCountMismatch { history: usize, risk_set: usize },
    ContextsNotOrdered { index: usize },
    ContextTrackStartsLate,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveTau => write!(f, "tau must be positive"),
            Violation::NonPositiveTime { index } => {
                write!(f, "event {index}: times must be positive")
            }
            Violation::NotIncreasing { index } => {
                write!(f, "event {index}: times not strictly increasing")
            }
            Violation::OutsideWindow { index } => {
                write!(f, "event {index}: time outside the observation window [0, tau)")
            }
            Violation::UnknownActor { index } => write!(f, "event {index}: unknown actor"),
            Violation::ReflexiveEvent { index } => write!(f, "event {index}: reflexive event"),
            Violation::BroadcastSender { index } => {
                write!(f, "event {index}: broadcast actor cannot send")
            }
            Violation::NotInRiskSet { index } => write!(f, "event {index}: dyad not in risk set"),
            Violation::ActorCountMismatch { history, risk_set } => write!(
                f,
                "history has {history} actors but the risk set has {risk_set}"
            ),
            Violation::ContextsNotOrdered { index } => {
                write!(f, "context {index}: start times not strictly increasing")
            }
            Violation::ContextTrackStartsLate => write!(f, "context track does not start at 0"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), EventDataError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(EventDataError::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every invariant of the history, risk set and context track.
/// Violations are reported, never raised.
pub fn validate(history: &EventHistory, risk: &RiskSet, cov: &CovariateSet) -> ValidationReport {
    let mut violations = Vec::new();
    let tau = history.tau();
    if !(tau > 0.0) {
        violations.push(Violation::NonPositiveTau);
    }
    if history.n_actors() != risk.n_actors() {
        violations.push(Violation::ActorCountMismatch {
            history: history.n_actors(),
            risk_set: risk.n_actors(),
        });
    }
    let n_nodes = risk.n_nodes();
    let mut prev = 0.0;
    for (index, e) in history.events().iter().enumerate() {
        if !(e.time > 0.0) {
            violations.push(Violation::NonPositiveTime { index });
        } else if index > 0 && !(e.time > prev) {
            violations.push(Violation::NotIncreasing { index });
        }
        if !(e.time < tau) {
            violations.push(Violation::OutsideWindow { index });
        }
        prev = e.time;
        if e.sender >= n_nodes || e.recipient >= n_nodes {
            violations.push(Violation::UnknownActor { index });
        } else if risk.is_broadcast(e.sender) {
            violations.push(Violation::BroadcastSender { index });
        } else if e.sender == e.recipient {
            violations.push(Violation::ReflexiveEvent { index });
        } else if !risk.contains(e.sender, e.recipient) {
            violations.push(Violation::NotInRiskSet { index });
        }
    }
    let contexts = cov.contexts();
    if let Some(first) = contexts.first() {
        if first.start > 0.0 {
            violations.push(Violation::ContextTrackStartsLate);
        }
    }
    for index in 1..contexts.len() {
        if !(contexts[index].start > contexts[index - 1].start) {
            violations.push(Violation::ContextsNotOrdered { index });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(events: &[(f64, usize, usize)], tau: f64, n: usize) -> EventHistory {
        EventHistory::new(
            events.iter().map(|&(t, i, j)| Event::new(t, i, j)).collect(),
            tau,
            n,
            "s",
        )
    }

    #[test]
    fn risk_set_sizes() {
        let r = build_risk_set(2, false).unwrap();
        assert_eq!(r.dyads(), &[(0, 1), (1, 0)]);
        assert_eq!(build_risk_set(10, false).unwrap().len(), 90);
        let b = build_risk_set(3, true).unwrap();
        assert_eq!(b.len(), 9);
        assert_eq!(b.broadcast(), Some(3));
        assert!(b.contains(0, 3));
        assert!(!b.contains(3, 0));
        assert!(matches!(build_risk_set(1, false), Err(EventDataError::TooFewActors(1))));
    }

    #[test]
    fn risk_set_index_round_trips() {
        let r = build_risk_set(5, true).unwrap();
        for (k, &(i, j)) in r.dyads().iter().enumerate() {
            assert_eq!(r.index_of(i, j), Some(k));
        }
        assert_eq!(r.index_of(2, 2), None);
        assert_eq!(r.index_of(9, 0), None);
    }

    #[test]
    fn valid_history_gives_empty_report() {
        let r = build_risk_set(3, false).unwrap();
        let h = history(&[(0.5, 0, 1), (1.0, 1, 2), (2.0, 2, 0)], 3.0, 3);
        assert!(validate(&h, &r, &CovariateSet::new(3)).is_empty());
    }

    #[test]
    fn reflexive_event_reported_with_index() {
        let r = build_risk_set(3, false).unwrap();
        let h = history(&[(0.5, 0, 1), (1.0, 2, 2)], 3.0, 3);
        let report = validate(&h, &r, &CovariateSet::new(3));
        assert_eq!(report.violations, vec![Violation::ReflexiveEvent { index: 1 }]);
    }

    #[test]
    fn window_and_order_violations() {
        let r = build_risk_set(3, false).unwrap();
        let h = history(&[(0.5, 0, 1), (0.5, 1, 0), (4.0, 1, 2)], 3.0, 3);
        let report = validate(&h, &r, &CovariateSet::new(3));
        assert!(report.violations.contains(&Violation::NotIncreasing { index: 1 }));
        assert!(report.violations.contains(&Violation::OutsideWindow { index: 2 }));
    }

    #[test]
    fn broadcast_cannot_send() {
        let r = build_risk_set(3, true).unwrap();
        let h = history(&[(0.5, 0, 3), (1.0, 3, 0)], 3.0, 3);
        let report = validate(&h, &r, &CovariateSet::new(3));
        assert_eq!(report.violations, vec![Violation::BroadcastSender { index: 1 }]);
    }

    #[test]
    fn context_lookup() {
        let mut cov = CovariateSet::new(2);
        cov.set_contexts(vec![
            ContextInterval { start: 0.0, label: "lecture".into() },
            ContextInterval { start: 2.0, label: "groupwork".into() },
        ]);
        assert_eq!(cov.context_label_at(0.5), Some("lecture"));
        assert_eq!(cov.context_label_at(2.0), Some("groupwork"));
        assert_eq!(cov.context_changes_between(1.0, 3.0).collect::<Vec<_>>(), vec![2.0]);
        assert_eq!(cov.context_changes_between(2.0, 3.0).count(), 0);
    }

    #[test]
    fn truncate_moves_window_to_next_event() {
        let h = history(&[(0.5, 0, 1), (1.0, 1, 0), (2.0, 0, 1)], 3.0, 2);
        let t = h.truncate(2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.tau(), 2.0);
        assert_eq!(h.truncate(10), h);
    }
}
