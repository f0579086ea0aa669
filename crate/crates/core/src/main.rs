use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use feeder_nilm::config::RunConfig;
use feeder_nilm::pipeline::Pipeline;
use feeder_nilm::Result;

/// Count medical devices behind a distribution feeder from aggregate
/// voltage and current.
#[derive(Parser)]
#[command(name = "feeder-nilm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario: waveforms, schedule and ground truth.
    Simulate(Common),
    /// Rank features by Fisher score on device signatures.
    SelectFeatures(Common),
    /// Turn waveforms into a windowed feature dataset.
    Featurize(Common),
    /// Train the count regressor.
    Train(Common),
    /// Evaluate the trained model on the test split.
    Eval(Common),
    /// Run every stage, skipping those whose outputs are current.
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `[output] dir`, else `out`].
    #[arg(long, env = "FEEDER_NILM_OUT")]
    out: Option<PathBuf>,
    /// Override the scenario random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress stage summaries.
    #[arg(long)]
    quiet: bool,
}

fn open(c: &Common) -> Result<Pipeline> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.scenario.rng_seed = seed;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Pipeline::new(cfg, out)
}

fn run(cli: Cli) -> Result<()> {
    let (common, stage): (&Common, fn(&Pipeline) -> Result<String>) = match &cli.command {
        Command::Simulate(c) => (c, Pipeline::simulate),
        Command::SelectFeatures(c) => (c, Pipeline::select_features),
        Command::Featurize(c) => (c, Pipeline::featurize),
        Command::Train(c) => (c, Pipeline::train),
        Command::Eval(c) => (c, Pipeline::eval),
        Command::Pipeline(c) => {
            let p = open(c)?;
            return p.run_all(|line| {
                if !c.quiet {
                    println!("{line}");
                }
            });
        }
    };
    let p = open(common)?;
    let summary = stage(&p)?;
    if !common.quiet {
        println!("{summary}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
