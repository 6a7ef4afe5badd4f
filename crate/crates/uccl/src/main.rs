use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uccl::commands::{self, CheckKind};
use uccl::exit_codes;

/// Certainty-gated consistency training lab: synthetic data, two-view
/// training with uncertainty-weighted losses, and numerical verification.
#[derive(Parser)]
#[command(name = "uccl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and split manifests.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the dataset root from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train per the config; writes one run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Confidence threshold override, must lie in (0, 1).
        #[arg(long)]
        tau: Option<f64>,
        /// Reweighting-loss coefficient override.
        #[arg(long)]
        alpha: Option<f64>,
        /// Regulation-loss coefficient override.
        #[arg(long)]
        beta: Option<f64>,
        /// Disable the uncertain-pixel reweighting term.
        #[arg(long)]
        no_sbu: bool,
        /// Disable the class-prototype regulation term.
        #[arg(long)]
        no_ckr: bool,
        /// Run directory (default: $UCCL_OUT/train-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a run's best checkpoint on the held-out split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory holding the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification campaign; exit 0 iff every check passes.
    Check {
        /// Which campaign to run.
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit loss/mIoU curves and a prediction panel for a finished run.
    Plot {
        /// Run directory with metrics and a checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Oracle,
    Grad,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; bad arguments are usage
            // errors (exit 1).
            let code = if e.use_stderr() {
                exit_codes::USAGE
            } else {
                exit_codes::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };

    let result = match cli.command {
        Command::GenData { config, seed, out } => {
            commands::cmd_gen_data(config.as_deref(), seed, out.as_deref())
        }
        Command::Train {
            config,
            seed,
            tau,
            alpha,
            beta,
            no_sbu,
            no_ckr,
            out,
        } => commands::cmd_train(
            config.as_deref(),
            seed,
            tau,
            alpha,
            beta,
            no_sbu,
            no_ckr,
            out.as_deref(),
        ),
        Command::Eval { config, out } => commands::cmd_eval(config.as_deref(), out.as_deref()),
        Command::Check {
            kind,
            config: _,
            seed,
            out,
        } => {
            let kind = match kind {
                Kind::Oracle => CheckKind::Oracle,
                Kind::Grad => CheckKind::Grad,
            };
            commands::cmd_check(kind, seed, out.as_deref())
        }
        Command::Plot { out } => commands::cmd_plot(out.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::from(exit_codes::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
