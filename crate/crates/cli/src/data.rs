use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hrem::event_data::{assemble, parse_covariates, read_events_csv, LoadOptions, LoadedHistory};
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::manifest::{read_manifest, sha256_file};
use crate::simulate::SimulateBody;

/// One sequence on disk: an event CSV plus its covariate JSON (which
/// carries `tau`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFiles {
    pub id: String,
    pub events: PathBuf,
    pub covariates: PathBuf,
}

/// Either a `simulate` manifest or an explicit sequence list.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub sequences: Option<Vec<SequenceFiles>>,
}

pub struct ResolvedData {
    pub sequences: Vec<SequenceFiles>,
    /// Truth file of a simulation, when the data came from one.
    pub truths: Option<PathBuf>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    p.canonicalize().with_context(|| format!("data file {}", p.display()))
}

impl DataConfig {
    pub fn resolve(&self, cfg: &RawConfig) -> Result<ResolvedData> {
        match (&self.manifest, &self.sequences) {
            (Some(m), None) => {
                let path = cfg.resolve(m);
                let manifest = read_manifest::<SimulateBody>(&path)?;
                if manifest.command != "simulate" {
                    bail!("{} is a `{}` manifest, expected `simulate`", path.display(), manifest.command);
                }
                let dir = path.parent().unwrap_or(Path::new("."));
                let sequences = manifest
                    .body
                    .sequences
                    .iter()
                    .map(|s| {
                        Ok(SequenceFiles {
                            id: s.id.clone(),
                            events: absolute(&dir.join(&s.events))?,
                            covariates: absolute(&dir.join(&s.covariates))?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(ResolvedData {
                    sequences,
                    truths: Some(absolute(&dir.join(&manifest.body.truths))?),
                })
            }
            (None, Some(seqs)) => {
                if seqs.is_empty() {
                    bail!("config error at /data/sequences: at least one sequence is required");
                }
                let sequences = seqs
                    .iter()
                    .map(|s| {
                        Ok(SequenceFiles {
                            id: s.id.clone(),
                            events: absolute(&cfg.resolve(&s.events))?,
                            covariates: absolute(&cfg.resolve(&s.covariates))?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(ResolvedData { sequences, truths: None })
            }
            _ => bail!("config error at /data: give exactly one of `manifest` or `sequences`"),
        }
    }
}

pub fn load_sequence(files: &SequenceFiles) -> Result<LoadedHistory> {
    let events = File::open(&files.events).with_context(|| format!("opening {}", files.events.display()))?;
    let raw = read_events_csv(BufReader::new(events)).with_context(|| format!("in {}", files.events.display()))?;
    let cov = File::open(&files.covariates).with_context(|| format!("opening {}", files.covariates.display()))?;
    let doc = parse_covariates(BufReader::new(cov)).with_context(|| format!("in {}", files.covariates.display()))?;
    let options = LoadOptions {
        sequence_id: files.id.clone(),
        ..Default::default()
    };
    assemble(raw, Some(doc), &options).with_context(|| format!("sequence `{}`", files.id))
}

/// Hash identifying the data a fit used: every file's content plus the
/// training cut.
pub fn data_hash(sequences: &[SequenceFiles], train_events: Option<usize>) -> Result<String> {
    let mut parts = Vec::new();
    for s in sequences {
        parts.push(s.id.clone());
        parts.push(sha256_file(&s.events)?);
        parts.push(sha256_file(&s.covariates)?);
    }
    parts.push(format!("{train_events:?}"));
    Ok(crate::manifest::sha256_bytes(parts.join("\n").as_bytes()))
}

pub fn check_unique_ids(sequences: &[SequenceFiles]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in sequences {
        if !seen.insert(&s.id) {
            return Err(anyhow!("duplicate sequence id `{}`", s.id));
        }
    }
    Ok(())
}
