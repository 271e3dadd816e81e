mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

/// Batch front end for wavelet and Gabor coorbit computations.
#[derive(Parser)]
#[command(name = "coorbit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Wavelet transform of a signal on an affine chart.
    Cwt(Common),
    /// Short-time Fourier transform on a time-frequency chart.
    Stft(Common),
    /// Admissibility constant of a wavelet; exit 3 if not admissible.
    Admissibility(Common),
    /// Raw and absolute moments and the vanishing-moment count.
    Moments(Common),
    /// Atom checks: oscillation certificate, vanishing moments or window decay.
    CertifyAtom(Common),
    /// Search a geometric schedule for a certified affine lattice.
    DesignLattice(Common),
    /// Empirical frame bounds over random test signals.
    FrameBounds(Common),
    /// Neumann reconstruction of a field from lattice samples.
    Reconstruct(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Parameter overrides as `--key value`; dotted keys reach nested objects.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (name, common, f): (&str, Common, fn(&RunConfig, &Context) -> Result<i32, CliError>) = match cli.command {
        Command::Cwt(c) => ("cwt", c, commands::cmd_cwt),
        Command::Stft(c) => ("stft", c, commands::cmd_stft),
        Command::Admissibility(c) => ("admissibility", c, commands::cmd_admissibility),
        Command::Moments(c) => ("moments", c, commands::cmd_moments),
        Command::CertifyAtom(c) => ("certify-atom", c, commands::cmd_certify),
        Command::DesignLattice(c) => ("design-lattice", c, commands::cmd_design),
        Command::FrameBounds(c) => ("frame-bounds", c, commands::cmd_bounds),
        Command::Reconstruct(c) => ("reconstruct", c, commands::cmd_reconstruct),
    };
    let cfg = RunConfig::load(name, common.config.as_deref(), &common.overrides, common.seed)?;
    f(&cfg, &Context { out_dir: common.out_dir })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("coorbit: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
