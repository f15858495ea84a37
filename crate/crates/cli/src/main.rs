use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scfa_core::pipeline::{cmd_estimate, cmd_evaluate, cmd_ingest, cmd_synth, EstimateOptions};
use scfa_core::{ObjectiveKind, ScfaError};

#[derive(Parser)]
#[command(name = "scfa", version, about = "SCFA parameter estimation for microphone arrays")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scene bundle from a JSON scene configuration.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate parameters of a bundle with one method.
    Estimate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames_per_segment: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// ml, ls or gls
        #[arg(long)]
        objective: Option<ObjectiveKind>,
        /// Record the runtime in the estimates.
        #[arg(long)]
        timing: bool,
    },
    /// Score estimate directories against a bundle's ground truth.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        estimates: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert raw interleaved f32 PCM (sidecar `<pcm>.json`) into a bundle.
    Ingest {
        #[arg(long)]
        pcm: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_for(err: &ScfaError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

fn run(cli: Cli) -> Result<ExitCode, ScfaError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ScfaError::Configuration(e.to_string()))?;
    }
    match cli.command {
        Command::Synth { config, out, seed } => {
            let m = cmd_synth(&config, &out, seed)?;
            log::info!("wrote {} frames × {} bins × {} mics to {}", m.frames, m.bins, m.mics, out.display());
        }
        Command::Estimate {
            bundle,
            method,
            out,
            frames_per_segment,
            seed,
            objective,
            timing,
        } => {
            let options = EstimateOptions {
                frames_per_segment,
                seed,
                objective,
                timing,
                ..EstimateOptions::new(&method)
            };
            let est = cmd_estimate(&bundle, &out, &options)?;
            if !est.meta.failures.is_empty() {
                for f in &est.meta.failures {
                    eprintln!("bin {} failed: {}", f.bin, f.error);
                }
                eprintln!("{} of {} bins failed", est.meta.failures.len(), est.meta.failures.len() + est.meta.estimated_bins.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Evaluate { bundle, estimates, out } => {
            cmd_evaluate(&bundle, &estimates, &out)?;
        }
        Command::Ingest { pcm, config, out } => {
            cmd_ingest(&pcm, &config, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => exit_for(&e),
    }
}
