use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use coegan_core::coevolution::PairingStrategy;
use coegan_core::experiment::{self, metrics, ConfigOverrides, DatasetKind, EmbeddingKind};

#[derive(Parser)]
#[command(name = "coegan", version, about = "Coevolve GAN generator and discriminator architectures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Mnist,
    FashionMnist,
    Ring2d,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    All,
    Random,
    Best,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Identity,
    Randproj,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new run
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        dataset: Option<DatasetArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        pairing: Option<PairingArg>,
        #[arg(long, value_enum)]
        embedding: Option<EmbeddingArg>,
    },
    /// Continue a run from its checkpoint directory
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write one column file per metric into <run-dir>/plots
    MetricsExport {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn print_outcome(outcome: &experiment::RunOutcome) {
    if let Some(last) = outcome.records.last() {
        println!(
            "generation {}: best FID {:.4}, rmse {:.4}, layers G {:.2} D {:.2}",
            last.generation,
            last.best_fid,
            last.rmse,
            last.generator.mean_layers,
            last.discriminator.mean_layers
        );
    }
    println!("run directory: {}", outcome.run_dir.display());
}

fn execute(cli: Cli) -> coegan_core::Result<()> {
    match cli.command {
        Command::Run {
            config,
            dataset,
            seed,
            generations,
            out_dir,
            pairing,
            embedding,
        } => {
            let overrides = ConfigOverrides {
                dataset: dataset.map(|d| match d {
                    DatasetArg::Mnist => DatasetKind::Mnist,
                    DatasetArg::FashionMnist => DatasetKind::FashionMnist,
                    DatasetArg::Ring2d => DatasetKind::Ring2d,
                }),
                seed,
                generations,
                out_dir,
                pairing: pairing.map(|p| match p {
                    PairingArg::All => PairingStrategy::AllVsAll,
                    PairingArg::Random => PairingStrategy::Random,
                    PairingArg::Best => PairingStrategy::AllVsBest,
                }),
                embedding: embedding.map(|e| match e {
                    EmbeddingArg::Identity => EmbeddingKind::Identity,
                    EmbeddingArg::Randproj => EmbeddingKind::RandomProjection,
                }),
            };
            let config = experiment::load_config(config.as_deref(), &overrides)?;
            print!("{}", config.to_toml());
            print_outcome(&experiment::run(&config, None)?);
        }
        Command::Resume { checkpoint } => {
            print_outcome(&experiment::resume(&checkpoint, None)?);
        }
        Command::MetricsExport { run_dir } => {
            for path in metrics::export_metrics(&run_dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
