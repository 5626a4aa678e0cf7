//! Event CSV and covariate JSON formats.
//!
//! Events: CSV with header `t,sender,recipient`, one event per row.
//! Covariates: a JSON object with keys `actors`, `dyads`, `contexts`, `tau`,
//! `broadcast_id` and, for self-contained JSON histories, `events`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    build_risk_set, validate, ActorId, AttrValue, ContextInterval, CovariateSet, Event,
    EventDataError, EventHistory, RiskSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryFormat {
    Csv,
    Json,
}

/// How tied event times are handled at ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiePolicy {
    Reject,
    /// Shift each tied time to `previous + epsilon`, logging a warning.
    Jitter(f64),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// End of the observation window; required for CSV input.
    pub tau: Option<f64>,
    pub ties: TiePolicy,
    pub sequence_id: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tau: None,
            ties: TiePolicy::Reject,
            sequence_id: "0".to_string(),
        }
    }
}

/// An event with actor labels as they appear in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub time: f64,
    pub sender: String,
    pub recipient: String,
    pub line: u64,
}

/// Maps dense actor ids back to source labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActorIndex {
    labels: Vec<String>,
    broadcast: Option<String>,
}

impl ActorIndex {
    pub fn new(labels: Vec<String>, broadcast: Option<String>) -> Self {
        Self { labels, broadcast }
    }

    /// Labels `0..n` for generated data.
    pub fn numeric(n_actors: usize, broadcast: bool) -> Self {
        Self {
            labels: (0..n_actors).map(|k| k.to_string()).collect(),
            broadcast: broadcast.then(|| "broadcast".to_string()),
        }
    }

    pub fn n_actors(&self) -> usize {
        self.labels.len()
    }

    pub fn broadcast_label(&self) -> Option<&str> {
        self.broadcast.as_deref()
    }

    pub fn label(&self, id: ActorId) -> &str {
        if id < self.labels.len() {
            &self.labels[id]
        } else {
            self.broadcast.as_deref().unwrap_or("?")
        }
    }

    pub fn id_of(&self, label: &str) -> Option<ActorId> {
        if self.broadcast.as_deref() == Some(label) {
            return Some(self.labels.len());
        }
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedHistory {
    pub history: EventHistory,
    pub covariates: CovariateSet,
    pub risk: RiskSet,
    pub actors: ActorIndex,
}

/// JSON labels may be numbers or strings; both normalize to strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl Label {
    fn into_string(self) -> String {
        match self {
            Label::Int(k) => k.to_string(),
            Label::Str(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub id: Label,
    #[serde(flatten)]
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadRecord {
    pub i: Label,
    pub j: Label,
    #[serde(flatten)]
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub sender: Label,
    pub recipient: Label,
}

/// The covariate/context JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateDoc {
    #[serde(default)]
    pub actors: Vec<ActorRecord>,
    #[serde(default)]
    pub dyads: Vec<DyadRecord>,
    #[serde(default)]
    pub contexts: Vec<ContextInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadcast_id: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<EventRecord>>,
}

pub fn read_events_csv<R: Read>(source: R) -> Result<Vec<RawEvent>, EventDataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| csv_error(e, "header"))?.clone();
    let expected = ["t", "sender", "recipient"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(EventDataError::Parse {
            line: 1,
            field: "header".into(),
            message: format!("expected `t,sender,recipient`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, "record"))?;
        let line = record.position().map_or(0, |p| p.line());
        let time = record[0].parse::<f64>().map_err(|e| EventDataError::Parse {
            line,
            field: "t".into(),
            message: e.to_string(),
        })?;
        if !time.is_finite() {
            return Err(EventDataError::Parse {
                line,
                field: "t".into(),
                message: "time must be finite".into(),
            });
        }
        for (k, name) in [(1, "sender"), (2, "recipient")] {
            if record[k].is_empty() {
                return Err(EventDataError::Parse {
                    line,
                    field: name.into(),
                    message: "empty actor label".into(),
                });
            }
        }
        events.push(RawEvent {
            time,
            sender: record[1].to_string(),
            recipient: record[2].to_string(),
            line,
        });
    }
    Ok(events)
}

fn csv_error(e: csv::Error, field: &str) -> EventDataError {
    let line = e.position().map_or(0, |p| p.line());
    EventDataError::Parse {
        line,
        field: field.into(),
        message: e.to_string(),
    }
}

pub fn parse_covariates<R: Read>(source: R) -> Result<CovariateDoc, EventDataError> {
    serde_json::from_reader(source).map_err(|e| EventDataError::Parse {
        line: e.line() as u64,
        field: "json".into(),
        message: e.to_string(),
    })
}

/// Loads a validated history. CSV input carries events only and needs
/// `options.tau`; JSON input is a full [`CovariateDoc`] with an `events` key.
pub fn load_history<R: Read>(
    source: R,
    format: HistoryFormat,
    options: &LoadOptions,
) -> Result<LoadedHistory, EventDataError> {
    match format {
        HistoryFormat::Csv => assemble(read_events_csv(source)?, None, options),
        HistoryFormat::Json => {
            let mut doc = parse_covariates(source)?;
            let events = doc
                .events
                .take()
                .ok_or_else(|| EventDataError::Invalid("JSON history has no `events` key".into()))?
                .into_iter()
                .enumerate()
                .map(|(k, e)| RawEvent {
                    time: e.t,
                    sender: e.sender.into_string(),
                    recipient: e.recipient.into_string(),
                    line: k as u64 + 1,
                })
                .collect();
            assemble(events, Some(doc), options)
        }
    }
}

/// Combines raw events with an optional covariate document into a validated
/// history.
pub fn assemble(
    mut events: Vec<RawEvent>,
    doc: Option<CovariateDoc>,
    options: &LoadOptions,
) -> Result<LoadedHistory, EventDataError> {
    let doc = doc.unwrap_or_default();
    let tau = match (doc.tau, options.tau) {
        (Some(a), Some(b)) if a != b => {
            return Err(EventDataError::Invalid(format!(
                "tau given twice with different values ({a} and {b})"
            )))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(EventDataError::Invalid("tau is required".into())),
    };
    let broadcast = doc.broadcast_id.clone().map(Label::into_string);

    let labels: Vec<String> = if doc.actors.is_empty() {
        infer_labels(&events, broadcast.as_deref())
    } else {
        doc.actors
            .iter()
            .map(|a| a.id.clone().into_string())
            .filter(|l| Some(l.as_str()) != broadcast.as_deref())
            .collect()
    };
    let actors = ActorIndex::new(labels, broadcast);
    let n_actors = actors.n_actors();
    let ids: HashMap<&str, ActorId> = (0..actors.n_nodes())
        .map(|k| (actors.label(k), k))
        .collect();
    let lookup = |label: &str, line: u64, field: &str| {
        ids.get(label).copied().ok_or_else(|| EventDataError::Parse {
            line,
            field: field.into(),
            message: format!("unknown actor `{label}`"),
        })
    };

    apply_tie_policy(&mut events, options.ties)?;
    let mut parsed = Vec::with_capacity(events.len());
    for e in &events {
        let i = lookup(&e.sender, e.line, "sender")?;
        let j = lookup(&e.recipient, e.line, "recipient")?;
        parsed.push(Event::new(e.time, i, j));
    }

    let mut cov = CovariateSet::new(n_actors);
    for a in &doc.actors {
        let label = a.id.clone().into_string();
        if Some(label.as_str()) == actors.broadcast_label() {
            continue;
        }
        let id = ids[label.as_str()];
        for (name, value) in &a.attrs {
            if let Some(v) = attr_value(value) {
                cov.set_actor_attr(id, name.clone(), v);
            } else if !value.is_null() {
                return Err(EventDataError::Invalid(format!(
                    "actor `{label}` attribute `{name}` must be a number, string or bool"
                )));
            }
        }
    }
    for (k, d) in doc.dyads.iter().enumerate() {
        let line = k as u64 + 1;
        let i = lookup(&d.i.clone().into_string(), line, "dyads.i")?;
        let j = lookup(&d.j.clone().into_string(), line, "dyads.j")?;
        for (name, value) in &d.attrs {
            match attr_value(value) {
                Some(AttrValue::Real(x)) => cov.set_dyad_attr((i, j), name.clone(), x),
                _ => {
                    return Err(EventDataError::Invalid(format!(
                        "dyad attribute `{name}` must be numeric"
                    )))
                }
            }
        }
    }
    cov.set_contexts(doc.contexts.clone());

    let history = EventHistory::new(parsed, tau, n_actors, options.sequence_id.clone());
    let risk = build_risk_set(n_actors, actors.broadcast_label().is_some())?;
    validate(&history, &risk, &cov).into_result()?;
    if let Some(last) = cov.contexts().last() {
        if last.start >= tau {
            return Err(EventDataError::Invalid(format!(
                "context `{}` starts at or after tau",
                last.label
            )));
        }
    }
    Ok(LoadedHistory {
        history,
        covariates: cov,
        risk,
        actors,
    })
}

impl ActorIndex {
    fn n_nodes(&self) -> usize {
        self.labels.len() + usize::from(self.broadcast.is_some())
    }
}

fn infer_labels(events: &[RawEvent], broadcast: Option<&str>) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for e in events {
        for l in [&e.sender, &e.recipient] {
            if Some(l.as_str()) != broadcast && !labels.contains(l) {
                labels.push(l.clone());
            }
        }
    }
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    } else {
        labels.sort();
    }
    labels
}

fn apply_tie_policy(events: &mut [RawEvent], ties: TiePolicy) -> Result<(), EventDataError> {
    for k in 1..events.len() {
        let prev = events[k - 1].time;
        if events[k].time == prev {
            match ties {
                TiePolicy::Reject => {
                    return Err(EventDataError::Parse {
                        line: events[k].line,
                        field: "t".into(),
                        message: "times not strictly increasing".into(),
                    })
                }
                TiePolicy::Jitter(eps) => {
                    log::warn!(
                        "line {}: tied time {} shifted by {eps}",
                        events[k].line,
                        events[k].time
                    );
                    events[k].time = prev + eps;
                }
            }
        } else if events[k].time < prev {
            return Err(EventDataError::Parse {
                line: events[k].line,
                field: "t".into(),
                message: "times not strictly increasing".into(),
            });
        }
    }
    Ok(())
}

fn attr_value(v: &Value) -> Option<AttrValue> {
    match v {
        Value::Number(n) => n.as_f64().map(AttrValue::Real),
        Value::String(s) => Some(AttrValue::Category(s.clone())),
        Value::Bool(b) => Some(AttrValue::Real(f64::from(u8::from(*b)))),
        _ => None,
    }
}

pub fn write_events_csv<W: Write>(
    sink: W,
    history: &EventHistory,
    actors: &ActorIndex,
) -> Result<(), EventDataError> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| EventDataError::Io(std::io::Error::other(e));
    w.write_record(["t", "sender", "recipient"]).map_err(io)?;
    for e in history.events() {
        w.write_record([
            e.time.to_string(),
            actors.label(e.sender).to_string(),
            actors.label(e.recipient).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Builds the covariate document for a loaded history, optionally embedding
/// its events.
pub fn covariate_doc(
    history: &EventHistory,
    cov: &CovariateSet,
    actors: &ActorIndex,
    include_events: bool,
) -> CovariateDoc {
    let actor_records = (0..actors.n_actors())
        .map(|id| ActorRecord {
            id: Label::Str(actors.label(id).to_string()),
            attrs: cov
                .actor_attrs(id)
                .map(|m| {
                    m.iter()
                        .map(|(k, v)| {
                            let value = match v {
                                AttrValue::Real(x) => serde_json::json!(x),
                                AttrValue::Category(s) => Value::String(s.clone()),
                            };
                            (k.clone(), value)
                        })
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();
    let mut by_dyad: BTreeMap<(ActorId, ActorId), BTreeMap<String, Value>> = BTreeMap::new();
    for (name, values) in cov.dyad_attr_map() {
        for (&dyad, &x) in values {
            by_dyad.entry(dyad).or_default().insert(name.clone(), serde_json::json!(x));
        }
    }
    let dyads = by_dyad
        .into_iter()
        .map(|((i, j), attrs)| DyadRecord {
            i: Label::Str(actors.label(i).to_string()),
            j: Label::Str(actors.label(j).to_string()),
            attrs,
        })
        .collect();
    let events = include_events.then(|| {
        history
            .events()
            .iter()
            .map(|e| EventRecord {
                t: e.time,
                sender: Label::Str(actors.label(e.sender).to_string()),
                recipient: Label::Str(actors.label(e.recipient).to_string()),
            })
            .collect()
    });
    CovariateDoc {
        actors: actor_records,
        dyads,
        contexts: cov.contexts().to_vec(),
        tau: Some(history.tau()),
        broadcast_id: actors.broadcast_label().map(|b| Label::Str(b.to_string())),
        events,
    }
}

pub fn write_covariates_json<W: Write>(
    sink: W,
    history: &EventHistory,
    cov: &CovariateSet,
    actors: &ActorIndex,
    include_events: bool,
) -> Result<(), EventDataError> {
    let doc = covariate_doc(history, cov, actors, include_events);
    serde_json::to_writer_pretty(sink, &doc).map_err(|e| EventDataError::Io(std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_opts(tau: f64) -> LoadOptions {
        LoadOptions {
            tau: Some(tau),
            ..Default::default()
        }
    }

    #[test]
    fn loads_three_row_csv() {
        let src = "t,sender,recipient\n0.1,1,2\n0.2,2,1\n0.7,1,3\n";
        let loaded = load_history(src.as_bytes(), HistoryFormat::Csv, &csv_opts(1.0)).unwrap();
        assert_eq!(loaded.history.len(), 3);
        assert_eq!(loaded.history.n_actors(), 3);
        assert_eq!(loaded.actors.label(0), "1");
        assert_eq!(loaded.history.events()[2].dyad(), (0, 2));
    }

    #[test]
    fn rejects_tied_times() {
        let src = "t,sender,recipient\n0.1,1,2\n0.1,2,1\n";
        let err = load_history(src.as_bytes(), HistoryFormat::Csv, &csv_opts(1.0)).unwrap_err();
        assert!(err.to_string().contains("times not strictly increasing"), "{err}");
        assert!(matches!(err, EventDataError::Parse { line: 3, .. }));
    }

    #[test]
    fn jitters_ties_on_request() {
        let src = "t,sender,recipient\n0.1,1,2\n0.1,2,1\n";
        let opts = LoadOptions {
            ties: TiePolicy::Jitter(1e-6),
            ..csv_opts(1.0)
        };
        let loaded = load_history(src.as_bytes(), HistoryFormat::Csv, &opts).unwrap();
        assert!(loaded.history.events()[1].time > 0.1);
    }

    #[test]
    fn bad_time_names_line_and_field() {
        let src = "t,sender,recipient\n0.1,1,2\nabc,2,1\n";
        match read_events_csv(src.as_bytes()) {
            Err(EventDataError::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "t");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let src = "time,from,to\n0.1,1,2\n";
        assert!(read_events_csv(src.as_bytes()).is_err());
    }

    #[test]
    fn csv_requires_tau() {
        let src = "t,sender,recipient\n0.1,1,2\n";
        let err = load_history(src.as_bytes(), HistoryFormat::Csv, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn json_history_with_broadcast_recipient() {
        let src = r#"{
            "actors": [{"id": "t", "role": "teacher"}, {"id": "a", "role": "student"}, {"id": "b", "role": "student"}],
            "dyads": [{"i": "a", "j": "b", "adjacent": 1}],
            "contexts": [{"start": 0, "label": "lecture"}, {"start": 5, "label": "groupwork"}],
            "tau": 10,
            "broadcast_id": "all",
            "events": [{"t": 1.0, "sender": "t", "recipient": "all"}, {"t": 2.0, "sender": "a", "recipient": "b"}]
        }"#;
        let loaded = load_history(src.as_bytes(), HistoryFormat::Json, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.risk.broadcast(), Some(3));
        assert_eq!(loaded.history.events()[0].recipient, 3);
        assert_eq!(loaded.risk.len(), 9);
        assert_eq!(loaded.covariates.dyad_attr((1, 2), "adjacent"), Some(1.0));
        assert_eq!(
            loaded.covariates.actor_attr(0, "role"),
            Some(&AttrValue::Category("teacher".into()))
        );
        assert_eq!(loaded.covariates.context_label_at(6.0), Some("groupwork"));
    }

    #[test]
    fn json_unknown_actor_is_a_parse_error() {
        let src = r#"{"actors": [{"id": 1}, {"id": 2}], "tau": 3,
                      "events": [{"t": 1.0, "sender": 1, "recipient": 7}]}"#;
        let err = load_history(src.as_bytes(), HistoryFormat::Json, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("unknown actor `7`"), "{err}");
    }

    #[test]
    fn event_after_tau_fails_validation() {
        let src = "t,sender,recipient\n0.1,1,2\n2.0,2,1\n";
        let err = load_history(src.as_bytes(), HistoryFormat::Csv, &csv_opts(1.0)).unwrap_err();
        assert!(matches!(err, EventDataError::Validation(_)));
    }
}
