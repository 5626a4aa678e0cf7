//! `hrem`: simulate, fit, predict, diagnose and compare hierarchical
//! relational event models from JSON configs.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 chains not converged
//! (artifacts are still written).

mod config;
mod data;
mod diagnose;
mod fit;
mod manifest;
mod model;
mod predict;
mod select;
mod simulate;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use config::{parse_list, RawConfig};
use fit::SamplerKind;

#[derive(Parser)]
#[command(name = "hrem", version, about = "Hierarchical relational event models")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuUpdateArg {
    Paper,
    Conjugate,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate event sequences and write them with their truths.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Named spec (A1..G3, group1..group4, syn52, syn6, syn52a, syn52b).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Fit the hierarchical model and write posterior draws.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerKind>,
        #[arg(long, value_enum)]
        mu_update: Option<MuUpdateArg>,
        /// Temperature ladder, e.g. `1,2,4,8,16`.
        #[arg(long)]
        ladder: Option<String>,
        /// Exit 0 even when the chains miss the convergence thresholds.
        #[arg(long)]
        allow_nonconvergence: bool,
    },
    /// Recall@z on held-out events of a fit.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Fit manifest.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Comma-separated z values.
        #[arg(long)]
        z: Option<String>,
    },
    /// Deviance residuals, event probabilities and surprise for a fit.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        surprise_threshold: Option<usize>,
    },
    /// Rank fits of the same data by DIC.
    Select {
        /// Fit manifests.
        manifests: Vec<PathBuf>,
        /// Also write `dic.csv` and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_config(common: &Common) -> Result<RawConfig> {
    let mut cfg = RawConfig::load(common.config.as_deref())?;
    cfg.set("seed", common.seed.map(|s| json!(s)));
    cfg.set_path("output_dir", common.out.as_deref())?;
    Ok(cfg)
}

fn set_preset(cfg: &mut RawConfig, preset: &Option<String>) {
    if let Some(p) = preset {
        cfg.remove("spec");
        cfg.set("preset", Some(Value::String(p.clone())));
    }
}

fn print(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

enum Outcome {
    Done,
    NotConverged(String),
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Simulate { common, preset } => {
            let mut cfg = base_config(&common)?;
            set_preset(&mut cfg, &preset);
            print(&simulate::run(&cfg)?)?;
        }
        Command::Fit {
            common,
            preset,
            sampler,
            mu_update,
            ladder,
            allow_nonconvergence,
        } => {
            let mut cfg = base_config(&common)?;
            set_preset(&mut cfg, &preset);
            cfg.set("sampler", sampler.map(|s| serde_json::to_value(s).expect("enum")));
            let mu = mu_update.map(|m| match m {
                MuUpdateArg::Paper => json!("paper"),
                MuUpdateArg::Conjugate => json!("conjugate"),
            });
            cfg.set_nested("mcmc", "mu_update", mu)?;
            let ladder = ladder.as_deref().map(parse_list::<f64>).transpose()?;
            cfg.set_nested("tempering", "ladder", ladder.map(|l| json!(l)))?;
            if ladder_given_without_tempering(&cfg) {
                log::warn!("--ladder only affects --sampler tempering");
            }
            let outcome = fit::run(&cfg)?;
            print(&outcome.manifest)?;
            if let Some(nc) = outcome.nonconvergence {
                if !allow_nonconvergence {
                    return Ok(Outcome::NotConverged(nc));
                }
                log::warn!("{nc}");
            }
        }
        Command::Predict { common, fit, z } => {
            let mut cfg = base_config(&common)?;
            cfg.set_path("fit", fit.as_deref())?;
            let z = z.as_deref().map(parse_list::<usize>).transpose()?;
            cfg.set("z", z.map(|z| json!(z)));
            print(&predict::run(&cfg)?)?;
        }
        Command::Diagnose {
            common,
            fit,
            surprise_threshold,
        } => {
            let mut cfg = base_config(&common)?;
            cfg.set_path("fit", fit.as_deref())?;
            cfg.set("surprise_threshold", surprise_threshold.map(|t| json!(t)));
            print(&diagnose::run(&cfg)?)?;
        }
        Command::Select { manifests, out } => {
            print(&select::run(&manifests, out.as_deref())?)?;
        }
    }
    Ok(Outcome::Done)
}

fn ladder_given_without_tempering(cfg: &RawConfig) -> bool {
    let v = &cfg.value;
    v.pointer("/tempering/ladder").is_some() && v.get("sampler").and_then(Value::as_str) != Some("tempering")
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = init_threads(cli.threads).and_then(|_| dispatch(cli.command));
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
