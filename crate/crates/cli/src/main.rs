//! `gism`: synthesize, check, simulate and export integral sliding-mode
//! designs.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gism::sim::SimError;
use gism::sos::SosError;
use gism::synth::SynthError;

#[derive(Parser)]
#[command(name = "gism", version, about = "Integral sliding-mode synthesis via SOS programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A model file path or the name of a bundled scenario.
#[derive(Args, Clone)]
pub struct ModelArgs {
    pub model: String,
    /// Parameter file for the glucose scenario.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
pub struct SynthArgs {
    /// Which design route to run; defaults to the model's setting, then 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub theorem: Option<u8>,
    /// Degree overrides, e.g. `Q=2,N=2`.
    #[arg(long, value_delimiter = ',')]
    pub degrees: Vec<String>,
    /// Certify on the ball of this radius instead of globally.
    #[arg(long)]
    pub region_radius: Option<f64>,
    /// Fixed H∞ level; otherwise it is minimized.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub route: Option<Route>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Route {
    Projected,
    Siso,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
pub enum TraceFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the SOS programs and write design.json.
    Synth {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        synth: SynthArgs,
        /// Boundary layer stored with the controller.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-verify the certificates and manifold identities of a design.
    Check {
        design: PathBuf,
        /// Model whose x0 is used for the s(x0) = 0 check and whose
        /// reference design values are audited.
        #[arg(long)]
        against: Option<String>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Coefficient residual tolerance.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Gram eigenvalue tolerance.
        #[arg(long, default_value_t = 1e-8)]
        eig_tol: f64,
        /// Audit the reference design values stored in the `--against` model.
        #[arg(long)]
        reference: bool,
        /// Half-width of the box used for local audit margins.
        #[arg(long, default_value_t = 1.0)]
        audit_radius: f64,
        /// Also write check.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop and write the trace and metrics.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Use this design instead of synthesizing one.
        #[arg(long)]
        design: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Initial manifold offset, one value per input.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offset: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "csv")]
        format: TraceFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the first SOS program of a design route in SDPA sparse format.
    ExportSdpa {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {msg}")]
    Write { path: String, msg: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sos(#[from] SosError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Write { path: path.display().to_string(), msg: e.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Write { .. } => 1,
            CliError::Sim(e) => match e {
                SimError::Schema(_) | SimError::MissingParameters(_) | SimError::Config(_) | SimError::BoundViolation { .. } => 2,
                SimError::Divergence { .. } => 5,
                SimError::Eval(_) => 4,
            },
            CliError::Synth(e) => match e {
                SynthError::Model(_) | SynthError::Unfactorable { .. } => 2,
                SynthError::Infeasible { .. }
                | SynthError::Stall(_)
                | SynthError::NotInvolutive(_)
                | SynthError::Integrability(_) => 3,
                SynthError::Numerical { .. } | SynthError::Singular(_) | SynthError::Poly(_) | SynthError::Eval(_) => 4,
            },
            CliError::Sos(e) => match e {
                SosError::Infeasible { .. } | SosError::InfeasibleByConstruction { .. } | SosError::Unbounded => 3,
                _ => 4,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Synth { model, synth, alpha, out } => commands::synth(&model, &synth, alpha, &out, argv),
        Command::Check { design, against, params, tol, eig_tol, reference, audit_radius, out } => {
            let against = against.map(|model| ModelArgs { model, params });
            let opts = commands::CheckOptions { tol, eig_tol, reference, audit_radius };
            commands::check(&design, against.as_ref(), &opts, out.as_deref())
        }
        Command::Simulate { model, design, synth, alpha, t_end, dt, offset, format, out } => {
            let opts = commands::SimOptions { alpha, t_end, dt, offset, format };
            commands::simulate(&model, design.as_deref(), &synth, &opts, &out, argv)
        }
        Command::ExportSdpa { model, synth, out } => commands::export_sdpa(&model, &synth, &out, argv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
