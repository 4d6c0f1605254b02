//! `foliate`: batch front-end for the foliation-core library.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 only degenerate
//! characteristic points found, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Marks an error as the caller's fault (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DEGENERATE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "foliate", version, about = "Characteristic foliations, limiting operators and leaf diffusions")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `foliate-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SurfaceArgs {
    /// Registry surface name (see `list-models`).
    #[arg(long)]
    pub surface: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct LeafArgs {
    /// `x-axis`, `y-axis` or `generic`: direction from the characteristic point.
    #[arg(long)]
    pub leaf: Option<String>,
    /// Explicit start point `x,y,z[,w]`, projected onto the surface.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Ambient distance of the start from the characteristic point.
    #[arg(long)]
    pub leaf_distance: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Locate and classify characteristic points.
    Classify {
        #[command(flatten)]
        surface: SurfaceArgs,
    },
    /// Trace leaves of the characteristic foliation to CSV.
    Trace {
        #[command(flatten)]
        surface: SurfaceArgs,
        /// Start point `x,y,z[,w]`; repeatable.
        #[arg(long = "start", allow_hyphen_values = true)]
        starts: Vec<String>,
        /// Place this many starts on a ring around the characteristic point.
        #[arg(long)]
        leaves: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        max_length: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        direction: Option<i8>,
    },
    /// Convergence of Delta_eps to Delta_0 and the curvature sweep.
    Ops {
        #[command(flatten)]
        surface: SurfaceArgs,
        /// Comma-separated, strictly decreasing.
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// K_eps, K_0 and Riccati residuals at sample points.
    Curvature {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Monte Carlo simulation of a reference process or a leaf diffusion.
    Sim {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        leaf: LeafArgs,
        /// `bessel3`, `legendre3`, `hyperbolic-bessel3` or `bessel:<nu>`.
        #[arg(long)]
        process: Option<String>,
        #[arg(long)]
        s0: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        kill_radius: Option<f64>,
        /// Also write per-path outcomes to hit_times.csv.
        #[arg(long)]
        hit_times: bool,
    },
    /// Accessibility of the characteristic point at the end of a leaf.
    Boundary {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[command(flatten)]
        leaf: LeafArgs,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Print the surface registry as JSON.
    ListModels,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use foliation_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter(_) | E::Parse(_) | E::Domain(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_NUMERICAL
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = foliation_core::init_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
