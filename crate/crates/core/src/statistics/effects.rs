//! The effect grammar and its binding to a concrete covariate set.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::SeqState;
use super::StatisticsError;
use crate::event_data::{ActorId, AttrValue, CovariateSet, RiskSet};

/// The six first-order participation shifts. With the previous event
/// `A -> B`, a candidate event is classified by how it reuses A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PShift {
    #[serde(rename = "AB-BA")]
    AbBa,
    #[serde(rename = "AB-BY")]
    AbBy,
    #[serde(rename = "AB-XA")]
    AbXa,
    #[serde(rename = "AB-XB")]
    AbXb,
    #[serde(rename = "AB-XY")]
    AbXy,
    #[serde(rename = "AB-AY")]
    AbAy,
}

impl PShift {
    pub const ALL: [PShift; 6] = [
        PShift::AbBa,
        PShift::AbBy,
        PShift::AbXa,
        PShift::AbXb,
        PShift::AbXy,
        PShift::AbAy,
    ];

    /// The shift that `(i, j)` realizes after `(a, b)`, or `None` for a
    /// repeat of the same dyad.
    pub fn classify(previous: (ActorId, ActorId), i: ActorId, j: ActorId) -> Option<PShift> {
        let (a, b) = previous;
        if i == b {
            if j == a {
                Some(PShift::AbBa)
            } else {
                Some(PShift::AbBy)
            }
        } else if i == a {
            if j == b {
                None
            } else {
                Some(PShift::AbAy)
            }
        } else if j == a {
            Some(PShift::AbXa)
        } else if j == b {
            Some(PShift::AbXb)
        } else {
            Some(PShift::AbXy)
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PShift::AbBa => "AB-BA",
            PShift::AbBy => "AB-BY",
            PShift::AbXa => "AB-XA",
            PShift::AbXb => "AB-XB",
            PShift::AbXy => "AB-XY",
            PShift::AbAy => "AB-AY",
        }
    }
}

impl fmt::Display for PShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTransform {
    #[default]
    Identity,
    /// `ln(1 + x)`, for counts that may be zero.
    Log1p,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttrLevel {
    pub attr: String,
    pub level: String,
}

/// One entry of the statistic vector, as written in a model specification.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    /// Constant 1; sets the overall event rate.
    Baserate,
    /// Sender's attribute. Categorical attributes without a `level` expand to
    /// one indicator per non-reference level.
    SenderAttr {
        attr: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    ReceiverAttr {
        attr: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    /// `I(x_i == x_j)` for an actor attribute.
    DyadMatch { attr: String },
    /// A dyadic covariate; missing dyads read as zero.
    DyadValue {
        attr: String,
        #[serde(default, skip_serializing_if = "is_identity")]
        transform: ValueTransform,
    },
    Pshift { kind: PShift },
    /// Inverse rank of `j` among `i`'s most recent distinct recipients.
    RecencySend,
    /// Inverse rank of `j` among `i`'s most recent distinct senders.
    RecencyReceive,
    /// `base` multiplied by the indicator that the current context is `context`.
    ContextInteraction { base: Box<Effect>, context: String },
    /// Indicator that the recipient is the broadcast actor, optionally
    /// restricted to senders at one attribute level.
    Broadcast {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sender: Option<AttrLevel>,
    },
    /// Indicator that the previous event was a broadcast (with the same
    /// optional sender restriction).
    PreviousBroadcast {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sender: Option<AttrLevel>,
    },
    /// Elementwise product of two effects.
    Product { left: Box<Effect>, right: Box<Effect> },
    /// `N_ij(t-)^power`, the number of earlier `(i, j)` events. Unbounded:
    /// with a positive coefficient the process can explode.
    DyadCount {
        #[serde(default = "default_power")]
        power: u32,
    },
}

fn is_identity(t: &ValueTransform) -> bool {
    *t == ValueTransform::Identity
}

fn default_power() -> u32 {
    1
}

impl Effect {
    pub fn pshift(kind: PShift) -> Self {
        Effect::Pshift { kind }
    }

    pub fn sender_level(attr: &str, level: &str) -> Self {
        Effect::SenderAttr {
            attr: attr.into(),
            level: Some(level.into()),
            reference: None,
        }
    }

    pub fn receiver_level(attr: &str, level: &str) -> Self {
        Effect::ReceiverAttr {
            attr: attr.into(),
            level: Some(level.into()),
            reference: None,
        }
    }

    pub fn product(left: Effect, right: Effect) -> Self {
        Effect::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn in_context(base: Effect, context: &str) -> Self {
        Effect::ContextInteraction {
            base: Box::new(base),
            context: context.into(),
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Baserate => f.write_str("baserate"),
            Effect::SenderAttr { attr, level, .. } => match level {
                Some(l) => write!(f, "sender[{attr}={l}]"),
                None => write!(f, "sender[{attr}]"),
            },
            Effect::ReceiverAttr { attr, level, .. } => match level {
                Some(l) => write!(f, "receiver[{attr}={l}]"),
                None => write!(f, "receiver[{attr}]"),
            },
            Effect::DyadMatch { attr } => write!(f, "match[{attr}]"),
            Effect::DyadValue { attr, transform } => match transform {
                ValueTransform::Identity => write!(f, "dyad[{attr}]"),
                ValueTransform::Log1p => write!(f, "log1p(dyad[{attr}])"),
            },
            Effect::Pshift { kind } => write!(f, "{kind}"),
            Effect::RecencySend => f.write_str("recency_send"),
            Effect::RecencyReceive => f.write_str("recency_receive"),
            Effect::ContextInteraction { base, context } => write!(f, "{base}:context[{context}]"),
            Effect::Broadcast { sender } => match sender {
                Some(s) => write!(f, "broadcast[{}={}]", s.attr, s.level),
                None => f.write_str("broadcast"),
            },
            Effect::PreviousBroadcast { sender } => match sender {
                Some(s) => write!(f, "previous_broadcast[{}={}]", s.attr, s.level),
                None => f.write_str("previous_broadcast"),
            },
            Effect::Product { left, right } => write!(f, "{left}*{right}"),
            Effect::DyadCount { power } => {
                if *power == 1 {
                    f.write_str("count")
                } else {
                    write!(f, "count^{power}")
                }
            }
        }
    }
}

/// An ordered, duplicate-free list of effects. Serializes as a JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatisticSpec {
    effects: Vec<Effect>,
}

impl StatisticSpec {
    pub fn new(effects: Vec<Effect>) -> Result<Self, StatisticsError> {
        let spec = Self { effects };
        spec.check()?;
        Ok(spec)
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn check(&self) -> Result<(), StatisticsError> {
        if self.effects.is_empty() {
            return Err(StatisticsError::EmptySpec);
        }
        let mut seen = BTreeSet::new();
        for e in &self.effects {
            if !seen.insert(e.to_string()) {
                return Err(StatisticsError::DuplicateEffect(e.to_string()));
            }
        }
        Ok(())
    }

    /// Resolves attribute names against `cov`, expanding categorical
    /// attributes into indicator columns.
    pub fn bind(&self, cov: &CovariateSet, risk: &RiskSet) -> Result<BoundSpec, StatisticsError> {
        self.check()?;
        let ctx = BindContext { cov, risk };
        let mut columns: Vec<(String, Term)> = Vec::new();
        for effect in &self.effects {
            columns.extend(ctx.bind(effect)?);
        }
        let mut seen = BTreeSet::new();
        for (name, _) in &columns {
            if !seen.insert(name.clone()) {
                return Err(StatisticsError::DuplicateEffect(name.clone()));
            }
        }
        let (names, terms) = columns.into_iter().unzip();
        Ok(BoundSpec {
            names,
            terms,
            n_nodes: risk.n_nodes(),
            broadcast: risk.broadcast(),
        })
    }
}

/// A specification resolved against one sequence's covariates.
/// Evaluates the statistic vector `s(t, i, j, A_t)`.
#[derive(Debug, Clone)]
pub struct BoundSpec {
    names: Vec<String>,
    terms: Vec<Term>,
    n_nodes: usize,
    broadcast: Option<ActorId>,
}

#[derive(Debug, Clone)]
enum Term {
    Constant,
    /// Per-node sender value.
    Sender(Vec<f64>),
    /// Per-node receiver value (broadcast uses the room mean).
    Receiver(Vec<f64>),
    /// Dense `n_nodes x n_nodes` dyad values.
    Dyad(Vec<f64>),
    Pshift(PShift),
    RecencySend,
    RecencyReceive,
    /// Indicator per context interval.
    Context(Vec<bool>),
    /// Previous event was a broadcast by a sender with mask value 1.
    PreviousBroadcast(Vec<f64>),
    Count(u32),
    Product(Box<Term>, Box<Term>),
}

impl BoundSpec {
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn broadcast(&self) -> Option<ActorId> {
        self.broadcast
    }

    /// Writes `s(t, i, j, A_t)` for the state (history and context) into `out`.
    pub fn eval_into(&self, state: &SeqState, i: ActorId, j: ActorId, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.terms.len());
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = self.eval_term(term, state, i, j);
        }
    }

    pub fn eval(&self, state: &SeqState, i: ActorId, j: ActorId) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(state, i, j, &mut out);
        out
    }

    /// Statistic vectors for every dyad of `risk`, row-major.
    pub fn eval_all(&self, state: &SeqState, risk: &RiskSet, out: &mut Vec<f64>) {
        let p = self.dim();
        out.resize(risk.len() * p, 0.0);
        for (row, &(i, j)) in out.chunks_exact_mut(p).zip(risk.dyads()) {
            self.eval_into(state, i, j, row);
        }
    }

    fn eval_term(&self, term: &Term, state: &SeqState, i: ActorId, j: ActorId) -> f64 {
        match term {
            Term::Constant => 1.0,
            Term::Sender(v) => v[i],
            Term::Receiver(v) => v[j],
            Term::Dyad(m) => m[i * self.n_nodes + j],
            Term::Pshift(kind) => match state.last_event() {
                Some(prev) if PShift::classify(prev, i, j) == Some(*kind) => 1.0,
                _ => 0.0,
            },
            Term::RecencySend => state.recency_rank(super::Direction::Send, i, j),
            Term::RecencyReceive => state.recency_rank(super::Direction::Receive, i, j),
            Term::Context(active) => match state.context() {
                Some(k) if active[k] => 1.0,
                _ => 0.0,
            },
            Term::PreviousBroadcast(mask) => match (state.last_event(), self.broadcast) {
                (Some((a, b)), Some(bc)) if b == bc => mask[a],
                _ => 0.0,
            },
            Term::Count(power) => f64::from(state.count(i, j)).powi(*power as i32),
            Term::Product(l, r) => {
                let left = self.eval_term(l, state, i, j);
                if left == 0.0 {
                    0.0
                } else {
                    left * self.eval_term(r, state, i, j)
                }
            }
        }
    }
}

struct BindContext<'a> {
    cov: &'a CovariateSet,
    risk: &'a RiskSet,
}

impl BindContext<'_> {
    fn n_actors(&self) -> usize {
        self.risk.n_actors()
    }

    fn n_nodes(&self) -> usize {
        self.risk.n_nodes()
    }

    fn bind(&self, effect: &Effect) -> Result<Vec<(String, Term)>, StatisticsError> {
        let single = |term: Term| Ok(vec![(effect.to_string(), term)]);
        match effect {
            Effect::Baserate => single(Term::Constant),
            Effect::SenderAttr { attr, level, reference } => Ok(self
                .actor_columns(attr, level.as_deref(), reference.as_deref())?
                .into_iter()
                .map(|(lvl, values)| {
                    let name = match lvl {
                        Some(l) => format!("sender[{attr}={l}]"),
                        None => format!("sender[{attr}]"),
                    };
                    (name, Term::Sender(self.with_room_mean(values)))
                })
                .collect()),
            Effect::ReceiverAttr { attr, level, reference } => Ok(self
                .actor_columns(attr, level.as_deref(), reference.as_deref())?
                .into_iter()
                .map(|(lvl, values)| {
                    let name = match lvl {
                        Some(l) => format!("receiver[{attr}={l}]"),
                        None => format!("receiver[{attr}]"),
                    };
                    (name, Term::Receiver(self.with_room_mean(values)))
                })
                .collect()),
            Effect::DyadMatch { attr } => {
                let values = self.actor_values(attr)?;
                let n = self.n_nodes();
                let mut m = vec![0.0; n * n];
                for i in 0..self.n_actors() {
                    for j in 0..self.n_actors() {
                        if i != j {
                            m[i * n + j] = f64::from(u8::from(values[i] == values[j]));
                        }
                    }
                }
                self.fill_broadcast_column(&mut m, None);
                single(Term::Dyad(m))
            }
            Effect::DyadValue { attr, transform } => {
                if !self.cov.has_dyad_attr(attr) {
                    return Err(StatisticsError::UnknownAttribute(attr.clone()));
                }
                let n = self.n_nodes();
                let mut m = vec![0.0; n * n];
                let mut explicit = vec![false; n * n];
                for &(i, j) in self.risk.dyads() {
                    if let Some(x) = self.cov.dyad_attr((i, j), attr) {
                        if !x.is_finite() {
                            return Err(StatisticsError::NonFiniteCovariate(attr.clone()));
                        }
                        m[i * n + j] = match transform {
                            ValueTransform::Identity => x,
                            ValueTransform::Log1p => x.ln_1p(),
                        };
                        explicit[i * n + j] = true;
                    }
                }
                self.fill_broadcast_column(&mut m, Some(&explicit));
                single(Term::Dyad(m))
            }
            Effect::Pshift { kind } => single(Term::Pshift(*kind)),
            Effect::RecencySend => single(Term::RecencySend),
            Effect::RecencyReceive => single(Term::RecencyReceive),
            Effect::ContextInteraction { base, context } => {
                let active: Vec<bool> = self
                    .cov
                    .contexts()
                    .iter()
                    .map(|c| &c.label == context)
                    .collect();
                if !active.iter().any(|&a| a) {
                    return Err(StatisticsError::UnknownContext(context.clone()));
                }
                Ok(self
                    .bind(base)?
                    .into_iter()
                    .map(|(name, term)| {
                        (
                            format!("{name}:context[{context}]"),
                            Term::Product(Box::new(term), Box::new(Term::Context(active.clone()))),
                        )
                    })
                    .collect())
            }
            Effect::Broadcast { sender } => {
                let bc = self.risk.broadcast().ok_or(StatisticsError::NoBroadcastActor)?;
                let mask = self.sender_mask(sender.as_ref())?;
                let n = self.n_nodes();
                let mut m = vec![0.0; n * n];
                for i in 0..self.n_actors() {
                    m[i * n + bc] = mask[i];
                }
                single(Term::Dyad(m))
            }
            Effect::PreviousBroadcast { sender } => {
                self.risk.broadcast().ok_or(StatisticsError::NoBroadcastActor)?;
                single(Term::PreviousBroadcast(self.sender_mask(sender.as_ref())?))
            }
            Effect::Product { left, right } => {
                let l = self.bind(left)?;
                let r = self.bind(right)?;
                let mut out = Vec::with_capacity(l.len() * r.len());
                for (ln, lt) in &l {
                    for (rn, rt) in &r {
                        out.push((
                            format!("{ln}*{rn}"),
                            Term::Product(Box::new(lt.clone()), Box::new(rt.clone())),
                        ));
                    }
                }
                Ok(out)
            }
            Effect::DyadCount { power } => single(Term::Count(*power)),
        }
    }

    fn actor_values(&self, attr: &str) -> Result<Vec<AttrValue>, StatisticsError> {
        (0..self.n_actors())
            .map(|a| {
                self.cov
                    .actor_attr(a, attr)
                    .cloned()
                    .ok_or_else(|| StatisticsError::UnknownAttribute(attr.to_string()))
            })
            .collect()
    }

    /// One column per requested level (or the raw values for a real attribute),
    /// indexed by real actor.
    fn actor_columns(
        &self,
        attr: &str,
        level: Option<&str>,
        reference: Option<&str>,
    ) -> Result<Vec<(Option<String>, Vec<f64>)>, StatisticsError> {
        let values = self.actor_values(attr)?;
        let categorical = values.iter().any(|v| matches!(v, AttrValue::Category(_)));
        if !categorical {
            if level.is_some() {
                return Err(StatisticsError::InvalidEffect(format!(
                    "attribute `{attr}` is real-valued and takes no level"
                )));
            }
            let xs: Vec<f64> = values
                .iter()
                .map(|v| match v {
                    AttrValue::Real(x) => *x,
                    AttrValue::Category(_) => unreachable!(),
                })
                .collect();
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(StatisticsError::NonFiniteCovariate(attr.to_string()));
            }
            return Ok(vec![(None, xs)]);
        }
        let labels: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let levels: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        let indicator = |lvl: &str| -> Vec<f64> {
            labels.iter().map(|l| f64::from(u8::from(l == lvl))).collect()
        };
        match level {
            Some(l) => Ok(vec![(Some(l.to_string()), indicator(l))]),
            None => {
                let reference = match reference {
                    Some(r) if levels.contains(r) => r,
                    Some(r) => {
                        return Err(StatisticsError::InvalidEffect(format!(
                            "reference level `{r}` does not occur in `{attr}`"
                        )))
                    }
                    None => levels.iter().next().copied().unwrap_or_default(),
                };
                Ok(levels
                    .iter()
                    .filter(|&&l| l != reference)
                    .map(|&l| (Some(l.to_string()), indicator(l)))
                    .collect())
            }
        }
    }

    /// Extends per-actor values to all nodes; the broadcast node gets the room mean.
    fn with_room_mean(&self, mut values: Vec<f64>) -> Vec<f64> {
        if self.risk.broadcast().is_some() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.push(mean);
        }
        values
    }

    /// Fills `(i, broadcast)` entries with the mean of `(i, k)` over the other
    /// real actors, unless the entry was given explicitly.
    fn fill_broadcast_column(&self, m: &mut [f64], explicit: Option<&[bool]>) {
        let Some(bc) = self.risk.broadcast() else {
            return;
        };
        let n = self.n_nodes();
        let na = self.n_actors();
        for i in 0..na {
            if explicit.is_some_and(|e| e[i * n + bc]) {
                continue;
            }
            let sum: f64 = (0..na).filter(|&k| k != i).map(|k| m[i * n + k]).sum();
            m[i * n + bc] = sum / (na - 1) as f64;
        }
    }

    fn sender_mask(&self, sender: Option<&AttrLevel>) -> Result<Vec<f64>, StatisticsError> {
        let mut mask = match sender {
            None => vec![1.0; self.n_actors()],
            Some(AttrLevel { attr, level }) => self
                .actor_values(attr)?
                .iter()
                .map(|v| f64::from(u8::from(v.to_string() == *level)))
                .collect(),
        };
        mask.resize(self.n_nodes(), 0.0);
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::build_risk_set;

    #[test]
    fn pshift_classification_is_exclusive() {
        let prev = (0, 1);
        assert_eq!(PShift::classify(prev, 1, 0), Some(PShift::AbBa));
        assert_eq!(PShift::classify(prev, 1, 2), Some(PShift::AbBy));
        assert_eq!(PShift::classify(prev, 2, 0), Some(PShift::AbXa));
        assert_eq!(PShift::classify(prev, 2, 1), Some(PShift::AbXb));
        assert_eq!(PShift::classify(prev, 2, 3), Some(PShift::AbXy));
        assert_eq!(PShift::classify(prev, 0, 2), Some(PShift::AbAy));
        assert_eq!(PShift::classify(prev, 0, 1), None);
    }

    #[test]
    fn spec_json_grammar() {
        let json = r#"[
            {"type": "baserate"},
            {"type": "pshift", "kind": "AB-BA"},
            {"type": "dyad_match", "attr": "race"},
            {"type": "dyad_value", "attr": "coactivities", "transform": "log1p"},
            {"type": "context_interaction", "base": {"type": "recency_send"}, "context": "groupwork"},
            {"type": "product", "left": {"type": "sender_attr", "attr": "class", "level": "square"},
                                "right": {"type": "receiver_attr", "attr": "class", "level": "square"}}
        ]"#;
        let spec: StatisticSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.effects().len(), 6);
        assert_eq!(spec.effects()[1], Effect::pshift(PShift::AbBa));
        let back: StatisticSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn rejects_empty_and_duplicate_specs() {
        assert!(matches!(StatisticSpec::new(vec![]), Err(StatisticsError::EmptySpec)));
        assert!(matches!(
            StatisticSpec::new(vec![Effect::Baserate, Effect::Baserate]),
            Err(StatisticsError::DuplicateEffect(_))
        ));
    }

    #[test]
    fn unknown_attribute_fails_to_bind() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::DyadMatch { attr: "race".into() }]).unwrap();
        match spec.bind(&cov, &risk) {
            Err(StatisticsError::UnknownAttribute(a)) => assert_eq!(a, "race"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn categorical_attribute_expands_per_level() {
        let risk = build_risk_set(3, false).unwrap();
        let mut cov = CovariateSet::new(3);
        for (a, l) in ["a", "b", "c"].iter().enumerate() {
            cov.set_actor_attr(a, "grp", AttrValue::Category(l.to_string()));
        }
        let spec = StatisticSpec::new(vec![Effect::SenderAttr {
            attr: "grp".into(),
            level: None,
            reference: Some("b".into()),
        }])
        .unwrap();
        let bound = spec.bind(&cov, &risk).unwrap();
        assert_eq!(bound.names(), &["sender[grp=a]".to_string(), "sender[grp=c]".to_string()]);
        let state = SeqState::new(risk.n_nodes());
        assert_eq!(bound.eval(&state, 2, 0), vec![0.0, 1.0]);
    }

    #[test]
    fn broadcast_match_uses_room_mean() {
        let risk = build_risk_set(3, true).unwrap();
        let mut cov = CovariateSet::new(3);
        for (a, l) in ["x", "x", "y"].iter().enumerate() {
            cov.set_actor_attr(a, "race", AttrValue::Category(l.to_string()));
        }
        let spec = StatisticSpec::new(vec![Effect::DyadMatch { attr: "race".into() }]).unwrap();
        let bound = spec.bind(&cov, &risk).unwrap();
        let state = SeqState::new(risk.n_nodes());
        assert_eq!(bound.eval(&state, 0, 1), vec![1.0]);
        assert_eq!(bound.eval(&state, 0, 3), vec![0.5]);
        assert_eq!(bound.eval(&state, 2, 3), vec![0.0]);
    }

    #[test]
    fn unknown_context_fails_to_bind() {
        let risk = build_risk_set(3, false).unwrap();
        let cov = CovariateSet::new(3);
        let spec = StatisticSpec::new(vec![Effect::in_context(Effect::Baserate, "silent")]).unwrap();
        assert!(matches!(spec.bind(&cov, &risk), Err(StatisticsError::UnknownContext(_))));
    }
}
