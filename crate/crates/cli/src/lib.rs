//! Command-line pipeline: phantom → mask → degrade → regularize → eval, plus a
//! runtime benchmark.

pub mod bench;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;

/// Exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const MISSING_INPUT: u8 = 3;
    pub const INVALID_CONFIG: u8 = 4;
    pub const SOLVER_ABORT: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("solver aborted: {0}")]
    SolverAbort(String),
    #[error("{0}")]
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::MissingInput(_) => exit::MISSING_INPUT,
            Self::InvalidConfig(_) => exit::INVALID_CONFIG,
            Self::SolverAbort(_) => exit::SOLVER_ABORT,
            Self::Other(_) => exit::OTHER,
        }
    }

    /// Classifies a library error; `path` names the file being processed, if any.
    pub fn from_core(e: tvreg::Error, path: Option<&std::path::Path>) -> Self {
        use tvreg::Error as E;
        match e {
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => match path {
                Some(p) => Self::MissingInput(p.to_path_buf()),
                None => Self::Other(io.to_string()),
            },
            E::InvalidGrid(_)
            | E::InvalidGeometry(_)
            | E::Nyquist(_)
            | E::InvalidPhantom(_)
            | E::InvalidParams(_)
            | E::InvalidLayout(_)
            | E::DimensionMismatch { .. } => Self::InvalidConfig(e.to_string()),
            E::Diverged { .. } | E::ImaginaryResidue { .. } | E::NonFinite(_) => Self::SolverAbort(e.to_string()),
            other => {
                let msg = other.to_string();
                Self::Other(match path {
                    Some(p) => format!("{}: {msg}", p.display()),
                    None => msg,
                })
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tvreg", version, about = "Missing-cone simulation and split Bregman TV regularization")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for randomized phantom options.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a ground-truth phantom volume.
    Phantom {
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum)]
        kind: Option<PhantomArg>,
    },
    /// Write the Fourier support mask of the optical geometry.
    Mask {
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        optics: OpticsArgs,
    },
    /// Mask the spectrum of a volume; writes the masked spectrum and the
    /// zero-filled reconstruction.
    Degrade {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        spectrum_out: Option<PathBuf>,
        #[arg(long)]
        raw_out: Option<PathBuf>,
    },
    /// Regularize a raw volume or a masked spectrum.
    Regularize {
        /// VOL3 real volume or complex spectrum.
        #[arg(long)]
        input: PathBuf,
        /// Support mask; required unless --patched.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Regularize patch by patch; the mask is rebuilt for the patch grid.
        #[arg(long, conflicts_with = "whole")]
        patched: bool,
        /// Regularize the whole volume at once, overriding the config.
        #[arg(long)]
        whole: bool,
        #[command(flatten)]
        optics: OpticsArgs,
    },
    /// Per-slice MSE, SSIM and Pearson of volume A against volume B.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Half range of evaluated slices around the center, µm; all slices if omitted.
        #[arg(long)]
        z_range: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Time the solver over a ladder of volume sizes.
    Bench {
        /// Sizes as NXxNYxNZ, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<String>>,
        /// Reading of the benchmark iteration count.
        #[arg(long, value_enum, default_value_t = bench::Interpretation::HundredFive)]
        interpretation: bench::Interpretation,
        /// Override the inner iteration count.
        #[arg(long)]
        n_inner: Option<usize>,
        /// Override the outer iteration count.
        #[arg(long)]
        n_outer: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhantomArg {
    Bead,
    SpherePair,
    Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NonnegArg {
    PaperShrink,
    Project,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Circle,
    Spiral,
}

#[derive(Debug, Default, Args)]
pub struct GridArgs {
    /// Grid shape NX,NY,NZ.
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    /// Voxel pitch DX,DY,DZ in µm.
    #[arg(long, value_delimiter = ',')]
    pub pitch: Option<Vec<f64>>,
}

#[derive(Debug, Default, Args)]
pub struct OpticsArgs {
    /// Vacuum wavelength, µm.
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long)]
    pub n_medium: Option<f64>,
    #[arg(long)]
    pub na_illum: Option<f64>,
    #[arg(long)]
    pub na_detect: Option<f64>,
    #[arg(long)]
    pub n_angles: Option<usize>,
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
}

#[derive(Debug, Default, Args)]
pub struct SolverArgs {
    /// Named parameter set: bead, spyogenes or ociaml3.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub n_inner: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub nonneg_mode: Option<NonnegArg>,
}
