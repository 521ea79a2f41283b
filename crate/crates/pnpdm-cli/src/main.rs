//! Command-line driver for split-Gibbs posterior sampling experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime abort.

use pnpdm_cli::{config, runner};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "pnpdm", version, about = "Split-Gibbs posterior sampling for imaging inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured chain count.
    #[arg(long)]
    chains: Option<usize>,
    /// Ad-hoc config overrides, dotted key = TOML value.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write all artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for samples, metrics, and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the configuration schema without computing anything.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recompute the metrics report from stored sample arrays.
    Metrics {
        /// Run directory containing samples_chain*.npy files.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth array (NPY) to score against.
        #[arg(long)]
        truth: PathBuf,
        /// PSNR peak (data range).
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
}

impl ConfigArgs {
    fn all_overrides(&self) -> Vec<String> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("sampler.seed={seed}"));
        }
        if let Some(chains) = self.chains {
            overrides.push(format!("sampler.chains={chains}"));
        }
        overrides
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    match cli.command {
        Command::Run { config: args, out } => {
            let (config, canonical) = match config::load(&args.config, &args.all_overrides()) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run_experiment(&config, &canonical, &args.config, &out) {
                Ok(output) => {
                    println!(
                        "wrote {} sample arrays, {}, {}",
                        output.sample_paths.len(),
                        output.metrics_path.display(),
                        output.manifest_path.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e:#}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Validate { config: args } => {
            match config::load(&args.config, &args.all_overrides()) {
                Ok(_) => {
                    println!("config ok: {}", args.config.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Metrics { out, truth, peak } => {
            match runner::recompute_metrics(&out, &truth, peak) {
                Ok(report) => match serde_json::to_string_pretty(&report) {
                    Ok(text) => {
                        println!("{text}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("metrics failed: {e:#}");
                        ExitCode::from(EXIT_RUNTIME)
                    }
                },
                Err(e) => {
                    eprintln!("metrics failed: {e:#}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
