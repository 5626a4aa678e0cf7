use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hrem::event_data::{
    assemble, parse_covariates, write_covariates_json, write_events_csv, ActorIndex, CovariateSet, LoadOptions,
    RiskSet,
};
use hrem::presets;
use hrem::simulate::{simulate_hierarchical, SimulationLimits, StopRule};
use hrem::statistics::StatisticSpec;
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::manifest::OutputDir;
use crate::model::{bind, resolve_spec};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub squares: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Scalar(f64),
    PerEffect(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub spec: Option<StatisticSpec>,
    /// Two-class synthetic actors; alternative to `covariates`.
    #[serde(default)]
    pub design: Option<Design>,
    /// Covariate JSON shared by every sequence.
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Sigma>,
    #[serde(default)]
    pub sequences: Option<usize>,
    /// Stop after this many events...
    #[serde(default)]
    pub events: Option<usize>,
    /// ...or at this time.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub max_events: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSequence {
    pub id: String,
    pub events: String,
    pub covariates: String,
    pub n_events: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateBody {
    pub spec: StatisticSpec,
    pub effects: Vec<String>,
    pub sequences: Vec<SimSequence>,
    pub truths: String,
}

/// Generating parameters of a simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truths {
    pub effects: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sequences: Vec<String>,
    pub beta: Vec<Vec<f64>>,
}

struct Defaults {
    design: Option<Design>,
    mu: Option<Vec<f64>>,
    sigma: f64,
    sequences: usize,
    events: Option<usize>,
}

fn preset_defaults(preset: Option<&str>) -> Defaults {
    let synthetic = |sigma, sequences| Defaults {
        design: Some(Design {
            squares: 5,
            triangles: 5,
        }),
        mu: Some(presets::synthetic_truth()),
        sigma,
        sequences,
        events: Some(1000),
    };
    match preset {
        Some("syn52") => synthetic(0.0, 1),
        Some("syn6") => synthetic(1.0, 20),
        _ => Defaults {
            design: None,
            mu: None,
            sigma: 0.0,
            sequences: 1,
            events: None,
        },
    }
}

fn load_covariates(cfg: &RawConfig, c: &SimulateConfig, d: &Defaults) -> Result<(CovariateSet, RiskSet, ActorIndex)> {
    match (&c.covariates, c.design.or(d.design)) {
        (Some(path), _) => {
            let path = cfg.resolve(path);
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let doc = parse_covariates(BufReader::new(file)).with_context(|| format!("in {}", path.display()))?;
            if doc.actors.is_empty() {
                bail!("{}: `actors` must list every actor", path.display());
            }
            let options = LoadOptions {
                tau: Some(doc.tau.unwrap_or(1.0)),
                ..Default::default()
            };
            let loaded = assemble(Vec::new(), Some(doc), &options).with_context(|| format!("in {}", path.display()))?;
            Ok((loaded.covariates, loaded.risk, loaded.actors))
        }
        (None, Some(design)) => {
            if design.squares + design.triangles < 2 {
                bail!("config error at /design: need at least two actors");
            }
            let (cov, risk) = presets::synthetic_covariates(design.squares, design.triangles)?;
            Ok((cov, risk, ActorIndex::numeric(design.squares + design.triangles, false)))
        }
        (None, None) => bail!("config error at /: a `covariates` file or a synthetic `design` is required"),
    }
}

pub fn run(cfg: &RawConfig) -> Result<String> {
    let c: SimulateConfig = cfg.parse()?;
    let d = preset_defaults(c.preset.as_deref());
    let spec = resolve_spec(c.preset.as_deref(), c.spec.as_ref())?;
    let (cov, risk, actors) = load_covariates(cfg, &c, &d)?;
    let bound = bind(&spec, &cov, &risk, "simulation")?;
    let p = bound.dim();

    let Some(mu) = c.mu.clone().or(d.mu) else {
        bail!("config error at /mu: required for this spec ({p} values)");
    };
    if mu.len() != p {
        bail!("config error at /mu: expected {p} values for columns [{}]", bound.names().join(", "));
    }
    let sigma = match &c.sigma {
        None => vec![d.sigma; p],
        Some(Sigma::Scalar(s)) => vec![*s; p],
        Some(Sigma::PerEffect(v)) if v.len() == p => v.clone(),
        Some(Sigma::PerEffect(_)) => bail!("config error at /sigma: expected a number or {p} values"),
    };
    let stop = match (c.events.or(if c.tau.is_some() { None } else { d.events }), c.tau) {
        (Some(m), None) => StopRule::ByCount(m),
        (None, Some(t)) => StopRule::ByTime(t),
        (Some(_), Some(_)) => bail!("config error at /tau: give either `events` or `tau`, not both"),
        (None, None) => bail!("config error at /events: an `events` count or a `tau` horizon is required"),
    };
    let k = c.sequences.unwrap_or(d.sequences);
    let limits = SimulationLimits {
        max_events: c.max_events,
    };
    let sims = simulate_hierarchical(&mu, &sigma, k, stop, &bound, &risk, &cov, c.seed, &limits)?;

    let mut out = OutputDir::create(&cfg.resolve(&c.output_dir))?;
    let mut sequences = Vec::new();
    for s in &sims {
        let id = s.history.sequence_id().to_string();
        let events = format!("{id}.csv");
        let covariates = format!("{id}.json");
        out.write(&events, |buf| Ok(write_events_csv(buf, &s.history, &actors)?))?;
        out.write(&covariates, |buf| {
            write_covariates_json(&mut *buf, &s.history, &cov, &actors, false)?;
            buf.push(b'\n');
            Ok(())
        })?;
        sequences.push(SimSequence {
            id,
            events,
            covariates,
            n_events: s.history.len(),
            tau: s.history.tau(),
        });
    }
    let truths = Truths {
        effects: bound.names().to_vec(),
        mu,
        sigma,
        sequences: sequences.iter().map(|s| s.id.clone()).collect(),
        beta: sims.iter().map(|s| s.beta.clone()).collect(),
    };
    out.write_json("truths.json", &truths)?;
    out.write_json("spec.json", &spec)?;

    let body = SimulateBody {
        spec,
        effects: bound.names().to_vec(),
        sequences,
        truths: "truths.json".into(),
    };
    out.finish("simulate", c.seed, recorded_config(cfg), body)
}

/// The config as run, minus where the outputs went.
pub fn recorded_config(cfg: &RawConfig) -> serde_json::Value {
    let mut v = cfg.value.clone();
    if let Some(o) = v.as_object_mut() {
        o.remove("output_dir");
    }
    v
}
