use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hrem::diagnostics::{
    check_z, empirical_baseline, event_ranks, recall_from_ranks, write_recall_csv, RecallRow, Scorer,
};
use hrem::rng::substream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::data::{load_sequence, SequenceFiles};
use crate::fit::{read_fit, FitRecord};
use crate::manifest::{sha256_file, OutputDir};
use crate::model::bind;
use crate::simulate::{recorded_config, Truths};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Manifest of a `fit` run.
    pub fit: PathBuf,
    pub z: Vec<usize>,
    /// Full sequences (training events first) replacing the fitted files.
    #[serde(default)]
    pub test: Option<Vec<SequenceFiles>>,
}

#[derive(Debug, Serialize)]
pub struct PredictBody {
    pub fit: String,
    pub fit_sha256: String,
    pub z: Vec<usize>,
    pub methods: Vec<String>,
}

pub fn run(cfg: &RawConfig) -> Result<String> {
    let c: PredictConfig = cfg.parse()?;
    let fit_path = cfg.resolve(&c.fit);
    let FitRecord {
        manifest, estimates, ..
    } = read_fit(&fit_path)?;
    let body = &manifest.body;
    if c.z.is_empty() {
        bail!("config error at /z: at least one z is required");
    }

    let overrides: BTreeMap<String, SequenceFiles> = c
        .test
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(|mut s| {
            s.events = cfg.resolve(&s.events);
            s.covariates = cfg.resolve(&s.covariates);
            (s.id.clone(), s)
        })
        .collect();
    for id in overrides.keys() {
        if !body.sequences.iter().any(|s| &s.id == id) {
            bail!("config error at /test: sequence `{id}` is not part of the fit");
        }
    }
    if body.train_events.is_none() && overrides.is_empty() {
        bail!("missing test data: the fit used every event; set `train_events` when fitting or give `test` files");
    }
    let truths: Option<Truths> = match &body.truths {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let t: Truths = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            (t.effects == body.effects).then_some(t)
        }
        None => None,
    };
    let mut methods = vec!["hierarchical".to_string(), "baseline".to_string()];
    if truths.is_some() {
        methods.push("truth".into());
    }

    let rows: Vec<Vec<RecallRow>> = body
        .sequences
        .par_iter()
        .enumerate()
        .map(|(k, seq)| -> Result<Vec<RecallRow>> {
            let files = overrides.get(&seq.id).cloned().unwrap_or_else(|| seq.files());
            let loaded = load_sequence(&files)?;
            let bound = bind(&body.spec, &loaded.covariates, &loaded.risk, &seq.id)?;
            for &z in &c.z {
                check_z(z, &loaded.risk).with_context(|| format!("sequence `{}`", seq.id))?;
            }
            let history = &loaded.history;
            let start = seq.n_events.min(history.len());
            let n_test = history.len() - start;
            let train = history.truncate(start);
            let baseline = empirical_baseline(&train, &loaded.risk);
            let mut rng = substream(c.seed, 5, k as u64);
            let mut out = Vec::new();
            for method in &methods {
                let ranks = if n_test == 0 {
                    Vec::new()
                } else {
                    let scorer = match method.as_str() {
                        "hierarchical" => Scorer::Model(&estimates.beta[k]),
                        "baseline" => Scorer::Baseline(&baseline),
                        _ => Scorer::Model(&truths.as_ref().expect("truth method").beta[k]),
                    };
                    event_ranks(scorer, history, start, &bound, &loaded.risk, &loaded.covariates, &mut rng)?
                };
                for &z in &c.z {
                    out.push(RecallRow {
                        sequence: seq.id.clone(),
                        method: method.clone(),
                        z,
                        n_test,
                        recall: (n_test > 0).then(|| recall_from_ranks(&ranks, z)),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<RecallRow> = rows.into_iter().flatten().collect();

    let mut out = OutputDir::create(&cfg.resolve(&c.output_dir))?;
    out.write("recall.csv", |buf| Ok(write_recall_csv(buf, &rows)?))?;
    let pbody = PredictBody {
        fit: fit_path.to_string_lossy().into_owned(),
        fit_sha256: sha256_file(&fit_path)?,
        z: c.z.clone(),
        methods,
    };
    out.finish("predict", c.seed, recorded_config(cfg), pbody)
}
