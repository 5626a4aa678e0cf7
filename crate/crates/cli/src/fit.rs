use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hrem::diagnostics::{dic, DicReport};
use hrem::event_data::LoadedHistory;
use hrem::inference::{
    map_estimate, run_collapsed_sampler, run_parallel_tempering, Hyperparams, MapConfig, PosteriorSamples,
    SamplerConfig, TemperingConfig,
};
use hrem::statistics::StatisticSpec;
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::data::{check_unique_ids, data_hash, load_sequence, DataConfig, SequenceFiles};
use crate::manifest::{read_manifest, Manifest, OutputDir, MANIFEST_NAME};
use crate::model::{build_tables, resolve_spec};
use crate::simulate::recorded_config;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Collapsed,
    Tempering,
    Map,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_rhat: 1.1,
            min_ess: 100.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    pub data: DataConfig,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub spec: Option<StatisticSpec>,
    /// Fit only the first this-many events of each sequence; the rest is
    /// held out for `predict`.
    #[serde(default)]
    pub train_events: Option<usize>,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub hyper: Hyperparams,
    /// Chain settings; the top-level `seed` replaces `mcmc.seed`.
    #[serde(default)]
    pub mcmc: SamplerConfig,
    #[serde(default)]
    pub tempering: TemperingConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub convergence: Thresholds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSequence {
    pub id: String,
    pub events: PathBuf,
    pub covariates: PathBuf,
    /// Events used by the fit.
    pub n_events: usize,
}

impl FitSequence {
    pub fn files(&self) -> SequenceFiles {
        SequenceFiles {
            id: self.id.clone(),
            events: self.events.clone(),
            covariates: self.covariates.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub max_rhat: f64,
    pub min_ess: f64,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperingReport {
    pub ladder: Vec<f64>,
    pub t_swap: usize,
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
    pub acceptance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapReport {
    pub iterations: usize,
    pub log_posterior: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitBody {
    pub name: String,
    pub sampler: String,
    pub spec: StatisticSpec,
    pub effects: Vec<String>,
    pub sequences: Vec<FitSequence>,
    pub train_events: Option<usize>,
    pub data_hash: String,
    pub truths: Option<PathBuf>,
    pub converged: bool,
    pub convergence: Option<ConvergenceReport>,
    pub dic: Option<DicReport>,
    pub tempering: Option<TemperingReport>,
    pub map: Option<MapReport>,
    pub estimates: String,
}

/// Point estimates used downstream: posterior means, or the MAP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimates {
    pub kind: String,
    pub effects: Vec<String>,
    pub sequences: Vec<String>,
    pub beta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

pub struct FitOutcome {
    pub manifest: String,
    /// Set when the chains miss the thresholds; artifacts are written anyway.
    pub nonconvergence: Option<String>,
}

/// Loads the fitted data, truncated to what the fit used.
pub fn load_fitted(seq: &FitSequence) -> Result<LoadedHistory> {
    let mut loaded = load_sequence(&seq.files())?;
    if loaded.history.len() != seq.n_events {
        loaded.history = loaded.history.truncate(seq.n_events);
    }
    Ok(loaded)
}

pub struct FitRecord {
    pub manifest: Manifest<FitBody>,
    pub estimates: Estimates,
}

pub fn read_fit(path: &Path) -> Result<FitRecord> {
    let manifest = read_manifest::<FitBody>(path)?;
    if manifest.command != "fit" {
        bail!("{} is a `{}` manifest, expected `fit`", path.display(), manifest.command);
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let est_path = dir.join(&manifest.body.estimates);
    let text = std::fs::read_to_string(&est_path).with_context(|| format!("reading {}", est_path.display()))?;
    let estimates = serde_json::from_str(&text).with_context(|| format!("parsing {}", est_path.display()))?;
    Ok(FitRecord { manifest, estimates })
}

fn write_csv<F>(out: &mut OutputDir, name: &str, header: &[String], rows: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    out.write(name, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        rows(&mut w)?;
        w.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn summarize(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    (mean, var.sqrt(), q(0.025), q(0.975))
}

fn write_draws(out: &mut OutputDir, s: &PosteriorSamples) -> Result<()> {
    let header = |first: &[&str], rest: &[String]| -> Vec<String> {
        first.iter().map(|x| x.to_string()).chain(rest.iter().cloned()).collect()
    };
    write_csv(out, "beta.csv", &header(&["draw", "sequence", "effect", "value"], &[]), |w| {
        for (d, draw) in s.draws.iter().enumerate() {
            for (k, b) in draw.beta.iter().enumerate() {
                for (p, v) in b.iter().enumerate() {
                    w.write_record([d.to_string(), s.sequence_ids[k].clone(), s.effect_names[p].clone(), v.to_string()])?;
                }
            }
        }
        Ok(())
    })?;
    for (name, pick) in [
        ("mu.csv", (|d: &hrem::inference::Draw| d.mu.clone()) as fn(&hrem::inference::Draw) -> Vec<f64>),
        ("sigma2.csv", |d| d.sigma2.clone()),
    ] {
        write_csv(out, name, &header(&["draw"], &s.effect_names), |w| {
            for (d, draw) in s.draws.iter().enumerate() {
                w.write_record(std::iter::once(d.to_string()).chain(pick(draw).iter().map(f64::to_string)))?;
            }
            Ok(())
        })?;
    }
    if s.draws.first().is_some_and(|d| d.nu.is_some()) {
        write_csv(out, "nu.csv", &header(&["draw"], &s.effect_names), |w| {
            for (d, draw) in s.draws.iter().enumerate() {
                let nu = draw.nu.as_deref().unwrap_or_default();
                w.write_record(std::iter::once(d.to_string()).chain(nu.iter().map(f64::to_string)))?;
            }
            Ok(())
        })?;
    }
    write_csv(out, "trace.csv", &header(&["draw", "log_posterior"], &[]), |w| {
        for (d, draw) in s.draws.iter().enumerate() {
            w.write_record([d.to_string(), draw.log_posterior.to_string()])?;
        }
        Ok(())
    })?;

    // same order as the sampler's diagnostics
    let mut series = Vec::new();
    for p in 0..s.n_effects() {
        series.push(s.mu_series(p));
        series.push(s.sigma2_series(p));
    }
    for k in 0..s.n_sequences() {
        for p in 0..s.n_effects() {
            series.push(s.beta_series(k, p));
        }
    }
    let cols = ["parameter", "mean", "sd", "q2.5", "q97.5", "ess", "rhat"].map(String::from);
    write_csv(out, "summary.csv", &cols, |w| {
        for (diag, xs) in s.diagnostics.iter().zip(&series) {
            let (mean, sd, lo, hi) = summarize(xs);
            w.write_record([
                diag.name.clone(),
                mean.to_string(),
                sd.to_string(),
                lo.to_string(),
                hi.to_string(),
                diag.ess.to_string(),
                diag.rhat.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn run(cfg: &RawConfig) -> Result<FitOutcome> {
    let c: FitConfig = cfg.parse()?;
    let data = c.data.resolve(cfg)?;
    check_unique_ids(&data.sequences)?;
    let spec = resolve_spec(c.preset.as_deref(), c.spec.as_ref())?;

    let mut loaded = Vec::new();
    for files in &data.sequences {
        let mut l = load_sequence(files)?;
        if let Some(m) = c.train_events {
            if m == 0 || m > l.history.len() {
                bail!(
                    "config error at /train_events: sequence `{}` has {} events, cannot train on {m}",
                    files.id,
                    l.history.len()
                );
            }
            l.history = l.history.truncate(m);
        }
        loaded.push(l);
    }
    let (effects, tables) = build_tables(&spec, loaded.iter().map(|l| (&l.history, &l.covariates, &l.risk)))?;
    let seq_ids: Vec<String> = data.sequences.iter().map(|s| s.id.clone()).collect();

    let mut mcmc = c.mcmc.clone();
    mcmc.seed = c.seed;
    let mut out = OutputDir::create(&cfg.resolve(&c.output_dir))?;
    let mut body = FitBody {
        name: c.name.clone().or_else(|| c.preset.clone()).unwrap_or_else(|| "fit".into()),
        sampler: String::new(),
        spec: spec.clone(),
        effects: effects.clone(),
        sequences: data
            .sequences
            .iter()
            .zip(&loaded)
            .map(|(f, l)| FitSequence {
                id: f.id.clone(),
                events: f.events.clone(),
                covariates: f.covariates.clone(),
                n_events: l.history.len(),
            })
            .collect(),
        train_events: c.train_events,
        data_hash: data_hash(&data.sequences, c.train_events)?,
        truths: data.truths.clone(),
        converged: false,
        convergence: None,
        dic: None,
        tempering: None,
        map: None,
        estimates: "estimates.json".into(),
    };
    let mut nonconvergence = None;

    let estimates = match c.sampler {
        SamplerKind::Map => {
            let est = map_estimate(&tables, &c.hyper, &c.map)?;
            body.sampler = "map".into();
            body.converged = est.converged;
            body.map = Some(MapReport {
                iterations: est.iterations,
                log_posterior: est.log_posterior,
                warnings: est.warnings.iter().map(|w| w.to_string()).collect(),
            });
            if !est.converged {
                nonconvergence = Some(format!(
                    "MAP ascent did not converge in {} iterations",
                    est.iterations
                ));
            }
            Estimates {
                kind: "map".into(),
                effects: effects.clone(),
                sequences: seq_ids.clone(),
                beta: est.beta,
                mu: est.mu,
                sigma2: est.sigma2,
            }
        }
        kind => {
            let samples = match kind {
                SamplerKind::Tempering => run_parallel_tempering(&tables, &c.hyper, &c.tempering, &mcmc)?,
                _ => run_collapsed_sampler(&tables, &c.hyper, &mcmc)?,
            }
            .with_names(effects.clone(), seq_ids.clone());
            body.sampler = samples.sampler.clone();
            let (max_rhat, min_ess) = (samples.max_rhat(), samples.min_ess());
            // NaN R-hat (too few draws) counts as a failure
            body.converged = !(max_rhat > c.convergence.max_rhat)
                && !max_rhat.is_nan()
                && min_ess >= c.convergence.min_ess;
            body.convergence = Some(ConvergenceReport {
                max_rhat,
                min_ess,
                thresholds: c.convergence,
            });
            if !body.converged {
                nonconvergence = Some(format!(
                    "chains failed the convergence thresholds: max R-hat {max_rhat:.4} (limit {}), min ESS {min_ess:.1} (limit {})",
                    c.convergence.max_rhat, c.convergence.min_ess
                ));
            }
            body.dic = Some(dic(&samples, &tables)?);
            if let Some(sw) = &samples.swaps {
                body.tempering = Some(TemperingReport {
                    ladder: c.tempering.ladder.clone(),
                    t_swap: c.tempering.t_swap,
                    proposed: sw.proposed.clone(),
                    accepted: sw.accepted.clone(),
                    acceptance: sw.acceptance_rates(),
                });
            }
            write_draws(&mut out, &samples)?;
            Estimates {
                kind: "posterior_mean".into(),
                effects: effects.clone(),
                sequences: seq_ids.clone(),
                beta: samples.beta_mean(),
                mu: samples.mu_mean(),
                sigma2: samples.sigma2_mean(),
            }
        }
    };
    out.write_json("estimates.json", &estimates)?;
    let manifest = out
        .finish("fit", c.seed, recorded_config(cfg), body)
        .context(format!("writing {MANIFEST_NAME}"))?;
    Ok(FitOutcome {
        manifest,
        nonconvergence,
    })
}
