//! Tidy CSV output, one row per event, dyad or recall cell.

use std::io::Write;

use serde::Serialize;

use super::{DiagnosticsError, SurpriseMatrix};
use crate::event_data::ActorIndex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub sequence: String,
    pub event: usize,
    /// `event` or `censoring`
    pub kind: String,
    pub time: f64,
    pub sender: Option<String>,
    pub recipient: Option<String>,
    pub pshift: Option<String>,
    pub deviance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityRow {
    pub sequence: String,
    pub event: usize,
    pub time: f64,
    pub sender: String,
    pub recipient: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallRow {
    pub sequence: String,
    pub method: String,
    pub z: usize,
    pub n_test: usize,
    /// Empty when the sequence has no test events.
    pub recall: Option<f64>,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals_csv<W: Write>(out: W, rows: &[ResidualRow]) -> Result<(), DiagnosticsError> {
    write_rows(out, rows)
}

pub fn write_probabilities_csv<W: Write>(out: W, rows: &[ProbabilityRow]) -> Result<(), DiagnosticsError> {
    write_rows(out, rows)
}

pub fn write_recall_csv<W: Write>(out: W, rows: &[RecallRow]) -> Result<(), DiagnosticsError> {
    write_rows(out, rows)
}

#[derive(Serialize)]
struct SurpriseRow<'a> {
    sequence: &'a str,
    sender: String,
    recipient: String,
    n_events: usize,
    n_surprising: usize,
    q: Option<f64>,
    threshold: usize,
}

/// Every dyad, with `q` empty where the dyad never occurred.
pub fn write_surprise_csv<W: Write>(
    out: W,
    matrices: &[(&str, &SurpriseMatrix, &ActorIndex)],
) -> Result<(), DiagnosticsError> {
    let mut rows = Vec::new();
    for (seq, m, actors) in matrices {
        for e in &m.entries {
            rows.push(SurpriseRow {
                sequence: seq,
                sender: actors.label(e.sender).to_string(),
                recipient: actors.label(e.recipient).to_string(),
                n_events: e.n_events,
                n_surprising: e.n_surprising,
                q: e.q,
                threshold: m.threshold,
            });
        }
    }
    write_rows(out, &rows)
}

#[derive(Serialize)]
struct EdgeRow<'a> {
    sequence: &'a str,
    source: String,
    target: String,
    weight: f64,
    n_events: usize,
}

/// Weighted edge list of the dyads where `q` is defined.
pub fn write_surprise_edges<W: Write>(
    out: W,
    matrices: &[(&str, &SurpriseMatrix, &ActorIndex)],
) -> Result<(), DiagnosticsError> {
    let mut rows = Vec::new();
    for (seq, m, actors) in matrices {
        for e in &m.entries {
            if let Some(q) = e.q {
                rows.push(EdgeRow {
                    sequence: seq,
                    source: actors.label(e.sender).to_string(),
                    target: actors.label(e.recipient).to_string(),
                    weight: q,
                    n_events: e.n_events,
                });
            }
        }
    }
    write_rows(out, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::SurpriseEntry;

    #[test]
    fn absent_surprise_is_an_empty_cell() {
        let m = SurpriseMatrix {
            threshold: 5,
            entries: vec![
                SurpriseEntry { sender: 0, recipient: 1, n_events: 2, n_surprising: 1, q: Some(0.5) },
                SurpriseEntry { sender: 1, recipient: 0, n_events: 0, n_surprising: 0, q: None },
            ],
        };
        let actors = ActorIndex::new(vec!["a0".into(), "a1".into()], None);
        let mut buf = Vec::new();
        write_surprise_csv(&mut buf, &[("s", &m, &actors)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "sequence,sender,recipient,n_events,n_surprising,q,threshold\ns,a0,a1,2,1,0.5,5\ns,a1,a0,0,0,,5\n"
        );
        let mut buf = Vec::new();
        write_surprise_edges(&mut buf, &[("s", &m, &actors)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
