use std::path::PathBuf;
use std::process::ExitCode;

use adcdgd_cli::checks::{run_check, CheckOptions, Property};
use adcdgd_cli::{csv_out, parse_config, preset, write_preset, Canonical};
use adcdgd_core::engine;
use clap::{Parser, Subcommand};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "adcdgd", version, about = "Decentralized gradient descent with compressed communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write per-round means across trials instead of every trial.
        #[arg(long)]
        aggregate: bool,
        /// Exit with status 3 if any trial diverges or overflows.
        #[arg(long)]
        strict: bool,
    },
    /// Run a named preset and write its CSV files.
    Preset {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the trial count of every run in the preset.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Run a verification suite.
    Check {
        /// unbiasedness | lemma4 | lyapunov_lipschitz | growth
        #[arg(long)]
        property: String,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        horizon: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, aggregate, strict } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            eprint!("{}", Canonical(&cfg));
            let trace = match engine::run_trials(&cfg) {
                Ok(t) => t,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            if let Err(e) = csv_out::emit_csv(&trace, &cfg, &out, aggregate) {
                return fail(EXIT_INPUT, format!("{}: {e}", out.display()));
            }
            let stopped: Vec<_> = trace.trials.iter().filter(|t| !t.termination.is_completed()).collect();
            for t in &stopped {
                eprintln!("trial {}: {}", t.trial, t.termination.label());
            }
            if strict && !stopped.is_empty() {
                return ExitCode::from(EXIT_DIVERGED);
            }
            ExitCode::SUCCESS
        }
        Command::Preset { name, out_dir, trials } => {
            let p = match preset(&name) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let p = match trials {
                Some(t) => p.with_trials(t),
                None => p,
            };
            eprintln!("{}: {}", p.name, p.note);
            match write_preset(&p, &out_dir) {
                Ok(outputs) => {
                    for o in outputs {
                        let status = if o.completed { "completed" } else { "stopped early" };
                        println!("{} {} ({status})", o.label, o.trials_csv.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_INPUT, e),
            }
        }
        Command::Check { property, beta, gamma, horizon, draws, seed } => {
            let property: Property = match property.parse() {
                Ok(p) => p,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let opts = CheckOptions { beta, gamma, horizon, draws, seed };
            match run_check(property, &opts) {
                Ok(report) => {
                    print!("{report}");
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CHECK_FAILED)
                    }
                }
                Err(e) => fail(EXIT_INPUT, e),
            }
        }
    }
}
