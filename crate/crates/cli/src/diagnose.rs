use std::path::PathBuf;

use anyhow::Result;
use hrem::diagnostics::{
    deviance_residuals, event_probabilities, pshift_labels, surprise_matrix, write_probabilities_csv,
    write_residuals_csv, write_surprise_csv, write_surprise_edges, ProbabilityRow, ResidualRow, SurpriseMatrix,
};
use hrem::event_data::LoadedHistory;
use hrem::rng::substream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::fit::{load_fitted, read_fit, FitRecord};
use crate::manifest::{sha256_file, OutputDir};
use crate::model::bind;
use crate::simulate::recorded_config;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub fit: PathBuf,
    #[serde(default = "default_threshold")]
    pub surprise_threshold: usize,
}

fn default_threshold() -> usize {
    50
}

#[derive(Debug, Serialize)]
pub struct DiagnoseBody {
    pub fit: String,
    pub fit_sha256: String,
    pub surprise_threshold: usize,
}

struct SequenceDiagnostics {
    loaded: LoadedHistory,
    residuals: Vec<ResidualRow>,
    probabilities: Vec<ProbabilityRow>,
    surprise: SurpriseMatrix,
}

pub fn run(cfg: &RawConfig) -> Result<String> {
    let c: DiagnoseConfig = cfg.parse()?;
    let fit_path = cfg.resolve(&c.fit);
    let FitRecord {
        manifest, estimates, ..
    } = read_fit(&fit_path)?;
    let body = &manifest.body;

    let per_seq: Vec<SequenceDiagnostics> = body
        .sequences
        .par_iter()
        .enumerate()
        .map(|(k, seq)| -> Result<SequenceDiagnostics> {
            let loaded = load_fitted(seq)?;
            let (h, cov, risk) = (&loaded.history, &loaded.covariates, &loaded.risk);
            let bound = bind(&body.spec, cov, risk, &seq.id)?;
            let beta = &estimates.beta[k];
            let label = |a| loaded.actors.label(a).to_string();

            let dev = deviance_residuals(beta, h, &bound, risk, cov)?;
            let shifts = pshift_labels(h);
            let mut residuals: Vec<ResidualRow> = h
                .events()
                .iter()
                .enumerate()
                .map(|(m, e)| ResidualRow {
                    sequence: seq.id.clone(),
                    event: m,
                    kind: "event".into(),
                    time: e.time,
                    sender: Some(label(e.sender)),
                    recipient: Some(label(e.recipient)),
                    pshift: shifts[m].map(|s| s.label().to_string()),
                    deviance: dev.events[m],
                })
                .collect();
            residuals.push(ResidualRow {
                sequence: seq.id.clone(),
                event: h.len(),
                kind: "censoring".into(),
                time: h.tau(),
                sender: None,
                recipient: None,
                pshift: None,
                deviance: dev.censoring,
            });

            let probs = event_probabilities(beta, h, &bound, risk, cov)?;
            let probabilities = h
                .events()
                .iter()
                .zip(probs)
                .enumerate()
                .map(|(m, (e, p))| ProbabilityRow {
                    sequence: seq.id.clone(),
                    event: m,
                    time: e.time,
                    sender: label(e.sender),
                    recipient: label(e.recipient),
                    probability: p,
                })
                .collect();

            let mut rng = substream(c.seed, 6, k as u64);
            let surprise = surprise_matrix(beta, h, &bound, risk, cov, c.surprise_threshold, &mut rng)?;
            Ok(SequenceDiagnostics {
                residuals,
                probabilities,
                surprise,
                loaded,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = OutputDir::create(&cfg.resolve(&c.output_dir))?;
    let residuals: Vec<ResidualRow> = per_seq.iter().flat_map(|s| s.residuals.iter().cloned()).collect();
    out.write("residuals.csv", |buf| Ok(write_residuals_csv(buf, &residuals)?))?;
    let probabilities: Vec<ProbabilityRow> = per_seq.iter().flat_map(|s| s.probabilities.iter().cloned()).collect();
    out.write("probabilities.csv", |buf| Ok(write_probabilities_csv(buf, &probabilities)?))?;
    let matrices: Vec<_> = body
        .sequences
        .iter()
        .zip(&per_seq)
        .map(|(seq, s)| (seq.id.as_str(), &s.surprise, &s.loaded.actors))
        .collect();
    out.write("surprise.csv", |buf| Ok(write_surprise_csv(buf, &matrices)?))?;
    out.write("surprise_edges.csv", |buf| Ok(write_surprise_edges(buf, &matrices)?))?;

    let dbody = DiagnoseBody {
        fit: fit_path.to_string_lossy().into_owned(),
        fit_sha256: sha256_file(&fit_path)?,
        surprise_threshold: c.surprise_threshold,
    };
    out.finish("diagnose", c.seed, recorded_config(cfg), dbody)
}
