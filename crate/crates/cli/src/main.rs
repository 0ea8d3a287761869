use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod config;
mod pipeline;

use config::{PipelineConfig, CONFIG_HELP};

#[derive(Parser)]
#[command(name = "stormlens", version, about = "Hurricane attention analytics pipeline", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count n-grams in raw tweets into <output_dir>/counts.tsv
    Ingest(Common),
    /// Attention summary and impact rank correlations per storm
    Metrics(Common),
    /// Bi-exponential, exponential and power-law decay fits
    FitDecay(Common),
    /// Bayesian impact regressions with posterior summaries
    Regress(Common),
    /// Attention-envelope GeoJSON per season
    Map(Common),
    /// Everything above except ingest, plus radar table and attention shares
    Report(Common),
}

#[derive(Args)]
#[command(after_help = CONFIG_HELP)]
struct Common {
    /// JSON pipeline config
    #[arg(long)]
    config: PathBuf,
    /// Worker threads [default: logical cores]
    #[arg(long)]
    jobs: Option<usize>,
    /// RNG seed; overrides `seed` in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Map half-width in degrees for the largest smoothed rate [default: 8]
    #[arg(long)]
    scale_max_degrees: Option<f64>,
}

fn run(command: Command) -> Result<()> {
    let (name, common) = match &command {
        Command::Ingest(c) => ("ingest", c),
        Command::Metrics(c) => ("metrics", c),
        Command::FitDecay(c) => ("fit-decay", c),
        Command::Regress(c) => ("regress", c),
        Command::Map(c) => ("map", c),
        Command::Report(c) => ("report", c),
    };
    let mut cfg = PipelineConfig::load(&common.config)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let half_width = common
        .scale_max_degrees
        .unwrap_or(cfg.map.max_half_width_deg);
    log::info!("running {name}");

    if let Command::Ingest(_) = command {
        return pipeline::ingest(&cfg);
    }
    let seed = match command {
        Command::FitDecay(_) | Command::Regress(_) | Command::Report(_) => {
            Some(cfg.require_seed()?)
        }
        _ => None,
    };
    let inputs = pipeline::load_inputs(&cfg)?;
    match command {
        Command::Metrics(_) => pipeline::metrics(&cfg, &inputs),
        Command::FitDecay(_) => pipeline::fit_decays(&cfg, &inputs, seed.expect("checked")),
        Command::Regress(_) => pipeline::regress(&cfg, &inputs, seed.expect("checked")),
        Command::Map(_) => pipeline::maps(&cfg, &inputs, half_width),
        Command::Report(_) => {
            let seed = seed.expect("checked");
            pipeline::metrics(&cfg, &inputs)?;
            pipeline::radar(&cfg, &inputs)?;
            pipeline::attention_shares(&cfg, &inputs)?;
            pipeline::fit_decays(&cfg, &inputs, seed)?;
            pipeline::regress(&cfg, &inputs, seed)?;
            pipeline::maps(&cfg, &inputs, half_width)
        }
        Command::Ingest(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STORMLENS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
