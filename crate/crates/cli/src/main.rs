use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ricap_cli::augment::{cmd_augment, AugmentOptions, Variant};
use ricap_cli::embed_cmd::cmd_mix_embeddings;
use ricap_cli::selfcheck::{run_selfcheck, SelfCheckOptions};
use ricap_cli::stats::{cmd_stats, parse_canvas, StatsOptions};
use ricap_cli::train_cmd::{cmd_train, TrainOptions};
use ricap_cli::{CliError, Result};
use ricap_core::train::{Augment, SyntheticConfig, TrainConfig};
use ricap_core::{BetaParam, BoundaryMode, Canvas};

#[derive(Parser)]
#[command(name = "ricap", version, about = "Random image cropping and patching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    PerBatch,
    PerSample,
}

impl From<BoundaryArg> for BoundaryMode {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::PerBatch => BoundaryMode::PerBatch,
            BoundaryArg::PerSample => BoundaryMode::PerSample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainAugment {
    None,
    Ricap,
    RicapImageOnly,
    FourMixup,
}

#[derive(Subcommand)]
enum Command {
    /// Augment the images listed in a manifest.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "ricap")]
        variant: Variant,
        #[arg(long, default_value = "0.3")]
        beta: BetaParam,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, value_enum, default_value = "per-batch")]
        boundary: BoundaryArg,
        /// Drop transformed boxes keeping less than this fraction of their area.
        #[arg(long, default_value_t = 0.0)]
        min_visibility: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram boundary draws and quadrant weights.
    Stats {
        #[arg(long, default_value = "0.3")]
        beta: BetaParam,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value = "32x32", value_parser = parse_canvas)]
        canvas: Canvas,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selfcheck {
        #[arg(long, hide = true)]
        corrupt_pixel: bool,
    },
    /// Mix four embedding vectors by quadrant weights.
    MixEmbeddings {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the linear toy model and write its trace.
    Train {
        #[arg(long, value_enum, default_value = "ricap")]
        augment: TrainAugment,
        #[arg(long, default_value = "0.3")]
        beta: BetaParam,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 100)]
        eval_every: usize,
        #[arg(long, value_enum, default_value = "per-batch")]
        boundary: BoundaryArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Augment {
            manifest,
            variant,
            beta,
            seed,
            batch_size,
            boundary,
            min_visibility,
            out,
        } => {
            let summary = cmd_augment(&AugmentOptions {
                manifest,
                variant,
                beta,
                seed,
                batch_size,
                boundary: boundary.into(),
                min_visibility,
                out,
            })?;
            eprintln!(
                "wrote {} images, records in {}",
                summary.images_written,
                summary.records_path.display()
            );
        }
        Command::Stats {
            beta,
            samples,
            canvas,
            seed,
            out,
        } => {
            let report = cmd_stats(&StatsOptions {
                beta,
                samples,
                canvas,
                seed,
            })?;
            match &out {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
                    report
                        .write_csv(io::BufWriter::new(file))
                        .map_err(|e| CliError::io(path, e))?;
                }
                None => report
                    .write_csv(io::stdout().lock())
                    .map_err(|e| CliError::io("<stdout>", e))?,
            }
            eprintln!("{}", report.summary());
        }
        Command::Selfcheck { corrupt_pixel } => {
            let results = run_selfcheck(SelfCheckOptions { corrupt_pixel });
            let mut stdout = io::stdout().lock();
            for g in &results {
                writeln!(stdout, "{g}").map_err(|e| CliError::io("<stdout>", e))?;
            }
            let failed: Vec<_> = results.iter().filter(|g| !g.passed()).map(|g| g.name).collect();
            writeln!(stdout, "{} of {} groups passed", results.len() - failed.len(), results.len())
                .map_err(|e| CliError::io("<stdout>", e))?;
            if !failed.is_empty() {
                return Err(CliError::Invariant(format!("failing groups: {}", failed.join(", "))));
            }
        }
        Command::MixEmbeddings { input } => {
            let response = cmd_mix_embeddings(&input)?;
            let text = serde_json::to_string(&response)
                .map_err(|e| CliError::Invariant(format!("serializing output: {e}")))?;
            println!("{text}");
        }
        Command::Train {
            augment,
            beta,
            seed,
            steps,
            lr,
            batch_size,
            eval_every,
            boundary,
            out,
        } => {
            let augment = match augment {
                TrainAugment::None => Augment::None,
                TrainAugment::Ricap => Augment::Ricap(beta),
                TrainAugment::RicapImageOnly => Augment::RicapImageOnly(beta),
                TrainAugment::FourMixup => Augment::FourMixup(beta),
            };
            let report = cmd_train(&TrainOptions {
                augment,
                seed,
                data: SyntheticConfig::default(),
                config: TrainConfig {
                    steps,
                    lr,
                    batch_size,
                    eval_every,
                    mode: boundary.into(),
                },
                out,
            })?;
            println!(
                "train_err={:.4} test_err={:.4} tail_kl={:.4}",
                report.final_train_err,
                report.final_test_err,
                report.trace.tail_mean_kl(100)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are validation errors; exit 2 is kept for
            // invariant failures.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
