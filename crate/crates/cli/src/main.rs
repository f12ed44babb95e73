use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auctionflow::config::PipelineConfig;
use auctionflow::pipeline::{Pipeline, Stage, StageOutcome};
use auctionflow::synthetic::{generate, write_inputs, SyntheticSpec};
use auctionflow::Error;
use clap::{Args, Parser, Subcommand};

/// Behavioral clustering and flow analysis for auction-house telemetry.
#[derive(Parser)]
#[command(name = "auctionflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Pipeline config (flat TOML).
    #[arg(long, default_value = "auctionflow.toml")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse inputs into normalized records.
    Ingest(RunArgs),
    /// Descriptive statistics, KPIs, cohorts and fees.
    Stats(RunArgs),
    /// K-means per bin with k selection.
    Cluster(RunArgs),
    /// Name clusters with behavioral profiles.
    Label(RunArgs),
    /// Flow graph, retention, insularity and tenure.
    Flows(RunArgs),
    /// Item valuation against street prices.
    Valuation(RunArgs),
    /// Sankey document and report tables.
    Export(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Write a synthetic dataset and a config that points at it.
    Synth {
        /// Directory for the generated files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        players: usize,
        #[arg(long, default_value_t = 180)]
        days: u32,
    },
    /// Print the default config.
    DefaultConfig,
}

fn load(args: &RunArgs) -> Result<PipelineConfig, Error> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    Ok(config)
}

fn report(stage: Stage, outcome: &StageOutcome) {
    for (source, issues) in &outcome.issues {
        if !issues.is_empty() {
            eprintln!("[{stage}] {source}: {issues}");
        }
    }
    for note in &outcome.notes {
        eprintln!("[{stage}] {note}");
    }
    for path in &outcome.written {
        eprintln!("[{stage}] wrote {}", path.display());
    }
}

fn run_stage(args: &RunArgs, stage: Option<Stage>) -> Result<(), Error> {
    let config = load(args)?;
    let pipeline = Pipeline::new(&config)?;
    match stage {
        Some(s) => report(s, &pipeline.run(s)?),
        None => pipeline.run_all(report)?,
    }
    Ok(())
}

fn synth(out: &Path, seed: u64, players: usize, days: u32) -> Result<(), Error> {
    let data = generate(&SyntheticSpec {
        players,
        days,
        seed,
        ..Default::default()
    });
    let files = write_inputs(&data, out)?;
    let config = PipelineConfig {
        auctions: Some("auctions.csv".into()),
        forum: Some("forum.csv".into()),
        street_prices: Some("street_prices.csv".into()),
        forum_flag_column: Some("is_marketplace".into()),
        seed: Some(seed),
        ..PipelineConfig::default()
    };
    let path = out.join("auctionflow.toml");
    std::fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
    eprintln!(
        "wrote {} records to {}, config {}",
        data.records.len(),
        files.auctions.display(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => run_stage(a, Some(Stage::Ingest)),
        Command::Stats(a) => run_stage(a, Some(Stage::Stats)),
        Command::Cluster(a) => run_stage(a, Some(Stage::Cluster)),
        Command::Label(a) => run_stage(a, Some(Stage::Label)),
        Command::Flows(a) => run_stage(a, Some(Stage::Flows)),
        Command::Valuation(a) => run_stage(a, Some(Stage::Valuation)),
        Command::Export(a) => run_stage(a, Some(Stage::Export)),
        Command::All(a) => run_stage(a, None),
        Command::Synth {
            out,
            seed,
            players,
            days,
        } => synth(out, *seed, *players, *days),
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 1 })
        }
    }
}
