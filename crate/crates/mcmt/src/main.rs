use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcmt::commands::{cmd_eval, cmd_synth, cmd_track};
use mcmt::config::{load_pipeline, load_scene, StrategyName};
use mcmt::formats::format_report;
use mcmt::CliError;

/// Multi-camera multi-target tracking: track, evaluate, synthesize.
#[derive(Parser)]
#[command(name = "mcmt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track detections from every camera and assign global identities.
    Track {
        /// Directory holding detections.csv (+ embeddings.bin) and calibrations.csv.
        #[arg(long)]
        input: PathBuf,
        /// Directory receiving tracks.csv, associations.csv and summary.txt.
        #[arg(long)]
        output: PathBuf,
        /// Pipeline config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Leftover strategy, overriding the config.
        #[arg(long, value_enum)]
        strategy: Option<StrategyName>,
    },
    /// Score a tracks file against ground truth with the 3D HOTA family.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory receiving eval.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// Scene config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Scene seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Track { input, output, config, strategy } => {
            let mut cfg = load_pipeline(config.as_deref())?;
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            let summary = cmd_track(&input, &output, &cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} detections from {} cameras -> {} tracklets -> {} global ids ({} from the glance window, strategy {})",
                summary.detections, summary.cameras, summary.tracklets, summary.globals, summary.glance_globals, summary.strategy
            );
        }
        Command::Eval { gt, pred, config, output } => {
            let cfg = load_pipeline(config.as_deref())?;
            let outcome = cmd_eval(&gt, &pred, &cfg, output.as_deref())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", format_report(&outcome.report));
        }
        Command::Synth { config, output, seed } => {
            let mut scene = load_scene(config.as_deref())?;
            if let Some(seed) = seed {
                scene.seed = seed;
            }
            let generated = cmd_synth(&scene, &output)?;
            println!(
                "wrote {} detections, {} cameras, {} ground-truth records to {}",
                generated.detections.len(),
                generated.calibrations.len(),
                generated.gt.len(),
                output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
