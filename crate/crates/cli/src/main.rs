// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Explicit stability constants for Gagliardo-Nirenberg-Sobolev inequalities and the
/// fast diffusion flow, on radial profiles.
#[derive(Parser, Debug)]
#[command(name = "gns", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Relative tolerance of the quadrature refinement checks.
    #[arg(long, global = true, env = "GNS_QUAD_TOL", default_value_t = 1e-9)]
    quad_tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Constants at (d, p) with the internal consistency report.
    Constants {
        #[command(flatten)]
        problem: Problem,
        /// Quadrature nodes for the cross-checks.
        #[arg(long, default_value_t = 4000)]
        cells: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Constants along an exponent grid (endpoint behaviour).
    Sweep {
        #[arg(long, default_value_t = 2)]
        d: u32,
        /// Number of interior exponents.
        #[arg(long, default_value_t = 40)]
        points: usize,
        /// Upper end of the scan when d = 2 (no critical exponent there).
        #[arg(long, default_value_t = 6.0)]
        p_max: f64,
        #[command(flatten)]
        output: Output,
    },
    /// GN deficit and its lower bounds over a family or an input profile.
    Deficit {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        profiles: Profiles,
        #[command(flatten)]
        output: Output,
    },
    /// Csiszar-Kullback bounds over a family or an input profile.
    Ck {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        profiles: Profiles,
        #[command(flatten)]
        output: Output,
    },
    /// Run the nonlocal flow from the reference mixture (or an input profile).
    Flow {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        save_dt: f64,
        /// Initial profile `r,u` (default: half-half mixture of B_1 and B_4).
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Integrate the reduced (f, sigma, j) comparison system.
    Ode {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = 1.0)]
        f0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        /// Initial Fisher information (default: 4 f0 + C_md sigma0^{-d(1-m)/2} f0^2).
        #[arg(long)]
        j0: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[arg(long)]
        save_dt: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the acceptance suite; exits 1 naming every failing criterion.
    Verify {
        /// Smaller family sweeps.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Print every check, not only the table.
        #[arg(long)]
        details: bool,
        /// Use the uncorrected sigma* numerator everywhere (debugging the negative control).
        #[arg(long, hide = true)]
        corrupt_sigma_star: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct Problem {
    #[arg(long, default_value_t = 2)]
    d: u32,
    /// GN exponent p (exclusive with --m).
    #[arg(long, conflicts_with = "m")]
    p: Option<f64>,
    /// Diffusion exponent m = (p+1)/(2p) (exclusive with --p).
    #[arg(long)]
    m: Option<f64>,
    /// Reference mass (default: the mass M* of the optimal profile).
    #[arg(long)]
    mass: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 2000)]
    cells: usize,
    /// Outer radius (default: wide enough for every profile in use).
    #[arg(long)]
    r_max: Option<f64>,
    /// Grid clustering exponent, r_i = R (i/(n-1))^q.
    #[arg(long, default_value_t = 2.0)]
    q: f64,
}

#[derive(Args, Debug, Clone)]
struct Profiles {
    /// two-scale-mix, tilted-power, compact-bump or mixed.
    #[arg(long, default_value = "mixed", conflicts_with = "input")]
    family: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Density profile `r,u` to evaluate instead of a family.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Output {
    /// Output file, written atomically (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default: json for `constants`, csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<gns_core::GnsError>() {
                Some(gns_core::GnsError::Usage(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Output cut short by the reader (e.g. `gns constants | head`).
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = match c.downcast_ref::<gns_core::GnsError>() {
            Some(gns_core::GnsError::Io(io)) => Some(io.kind()),
            _ => c
                .downcast_ref::<std::io::Error>()
                .map(std::io::Error::kind)
                .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind)),
        };
        kind == Some(std::io::ErrorKind::BrokenPipe)
    })
}
