//! Command-line front end: density grids, transform values, method
//! comparisons, Monte Carlo runs, and spectral reports for a chain given as
//! inline JSON or a JSON file.
//!
//! Exit codes: 0 success, 1 comparison above tolerance, 2 configuration
//! error, 3 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use occutime::chain::{exit_rate, truncate_birth_death, ChainSpec};
use occutime::closed_form::{equal_rate_bd_density_on_grid, two_state_density_on_grid};
use occutime::simulate::{monte_carlo, SimulationResult};
use occutime::spectral::{discrete_spectral_measure, f0_from_series, moments, phi_coefficients};
use occutime::transforms::{
    cosine_grid, density_via_inversion, fourier_laplace_f0, laplace_f0, OccupationDensity,
    DEFAULT_NODES,
};

#[derive(Parser)]
#[command(
    name = "occutime",
    about = "Occupation-time densities of state 0 for continuous-time Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Bessel-function formula (two-state and equal-rate birth-death only)
    ClosedForm,
    /// Numerical Laplace inversion of the resolvent transform
    Inversion,
    /// Moment-based Bessel series (birth-death chains only)
    Series,
    /// Empirical histogram from exact simulation
    MonteCarlo,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::Inversion => "inversion",
            Method::Series => "series",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the density on a grid as CSV plus a JSON sidecar
    Density {
        /// Chain spec: inline JSON or a path to a JSON file
        #[arg(long)]
        chain: String,
        /// Horizon
        #[arg(long)]
        t: f64,
        /// Number of interior grid points
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Method::ClosedForm)]
        method: Method,
        /// CSV output path; the sidecar lands next to it with .json appended
        #[arg(long)]
        out: PathBuf,
        /// Contour nodes for the inversion method
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        /// Override the truncation level for birth-death chains
        #[arg(long)]
        truncate: Option<usize>,
        /// Series order for the series method
        #[arg(long, default_value_t = 40)]
        series_order: usize,
        /// Sample count for the monte-carlo method
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a transform value: Laplace in time at s1, either of the
    /// density at occupation level x or jointly Fourier in x at s2
    Transform {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        s1: f64,
        /// Occupation level for the Laplace transform of the density
        #[arg(long, conflicts_with = "s2")]
        x: Option<f64>,
        /// Fourier frequency; selects the Fourier-Laplace transform
        #[arg(long)]
        s2: Option<f64>,
    },
    /// Compare two methods on a common grid; exit 1 above tolerance
    Compare {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long, value_enum)]
        method_a: Method,
        #[arg(long, value_enum)]
        method_b: Method,
        /// Sup-difference tolerance gating the exit code
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long, default_value_t = 40)]
        series_order: usize,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional path for the JSON report (stdout either way)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte Carlo sampler and print a JSON summary
    Simulate {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional raw-sample CSV (one column, header occupation_time)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the discrete spectral measure and moments as JSON
    Spectral {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        truncate: Option<usize>,
        /// Highest moment order reported
        #[arg(long, default_value_t = 12)]
        series_order: usize,
    },
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

/// 17 significant digits: round-trips any f64 exactly.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_chain(arg: &str) -> Result<ChainSpec, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg)
            .map_err(|e| CliError::Config(format!("cannot read chain file {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad chain spec: {e}")))
}

fn apply_truncate(spec: &ChainSpec, truncate: Option<usize>) -> ChainSpec {
    let mut spec = spec.clone();
    if let Some(n) = truncate {
        match &mut spec {
            ChainSpec::EqualRateBd { truncate, .. } | ChainSpec::BirthDeath { truncate, .. } => {
                *truncate = n;
            }
            _ => {}
        }
    }
    spec
}

fn compute_density(
    spec: &ChainSpec,
    method: Method,
    t: f64,
    grid_n: usize,
    nodes: usize,
    series_order: usize,
    n: usize,
    seed: u64,
) -> Result<OccupationDensity, CliError> {
    if t <= 0.0 {
        return Err(CliError::Config(format!("horizon must be positive, got {t}")));
    }
    if grid_n < 2 {
        return Err(CliError::Config("grid needs at least 2 points".into()));
    }
    match method {
        Method::ClosedForm => match spec {
            ChainSpec::TwoState { lambda, mu } => {
                two_state_density_on_grid(*lambda, *mu, t, &cosine_grid(t, grid_n))
                    .map_err(numeric)
            }
            ChainSpec::EqualRateBd { r, .. } => {
                equal_rate_bd_density_on_grid(*r, t, &cosine_grid(t, grid_n)).map_err(numeric)
            }
            _ => Err(CliError::Config(
                "closed-form unavailable for this chain type".into(),
            )),
        },
        Method::Inversion => {
            let q = spec.to_generator().map_err(config)?;
            density_via_inversion(&q, t, &cosine_grid(t, grid_n), nodes).map_err(numeric)
        }
        Method::Series => {
            let bd = spec
                .to_birth_death()
                .map_err(config)?
                .ok_or_else(|| CliError::Config("series requires a birth-death chain".into()))?;
            let level = bd.truncation_hint();
            let q = truncate_birth_death(&bd, level).map_err(config)?;
            let m = moments(&q, series_order + 5);
            let phi = phi_coefficients(&m, series_order).map_err(numeric)?;
            // the differencing stencil needs room at both endpoints
            let margin = 2e-4 * t;
            let grid: Vec<f64> = cosine_grid(t - 2.0 * margin, grid_n)
                .into_iter()
                .map(|x| x + margin)
                .collect();
            let values = grid
                .iter()
                .map(|&x| f0_from_series(&m, &phi, t, x, series_order))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(numeric)?;
            let atom = (-exit_rate(&q, 0) * t).exp();
            OccupationDensity::new(t, atom, grid, values, None).map_err(numeric)
        }
        Method::MonteCarlo => {
            let q = spec.to_generator().map_err(config)?;
            let result = monte_carlo(&q, 0, t, n, seed);
            histogram_density(&result, grid_n).map_err(numeric)
        }
    }
}

/// Empirical density: uniform bins over [0, t), atom from the exact-horizon
/// fraction.
fn histogram_density(
    result: &SimulationResult,
    bins: usize,
) -> Result<OccupationDensity, occutime::transforms::TransformError> {
    let t = result.horizon();
    let width = t / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in result.samples() {
        if s < t {
            let b = ((s / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let n = result.samples().len() as f64;
    let grid: Vec<f64> = (0..bins).map(|b| (b as f64 + 0.5) * width).collect();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    OccupationDensity::new(t, result.atom_fraction(), grid, values, None)
}

fn write_density(
    density: &OccupationDensity,
    spec: &ChainSpec,
    method: Method,
    out: &PathBuf,
) -> Result<(), CliError> {
    let mut csv = String::from("x,density\n");
    for (x, v) in density.grid().iter().zip(density.values()) {
        csv.push_str(&format!("{},{}\n", sig17(*x), sig17(*v)));
    }
    fs::write(out, csv).map_err(|e| CliError::Config(format!("cannot write {out:?}: {e}")))?;
    let sidecar = serde_json::json!({
        "t": density.horizon(),
        "atom_at_t": density.atom_at_t(),
        "method": method.name(),
        "chain": spec,
        "normalization": density.atom_at_t() + density.trapezoid_mass(),
    });
    let mut path = out.clone();
    path.as_mut_os_string().push(".json");
    fs::write(&path, serde_json::to_string_pretty(&sidecar).unwrap())
        .map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Density {
            chain,
            t,
            grid,
            method,
            out,
            nodes,
            truncate,
            series_order,
            n,
            seed,
        } => {
            let spec = apply_truncate(&parse_chain(&chain)?, truncate);
            let density =
                compute_density(&spec, method, t, grid, nodes, series_order, n, seed)?;
            write_density(&density, &spec, method, &out)?;
            Ok(0)
        }
        Command::Transform { chain, s1, x, s2 } => {
            let spec = parse_chain(&chain)?;
            let q = spec.to_generator().map_err(config)?;
            let s1 = Complex64::new(s1, 0.0);
            let value = match (x, s2) {
                (_, Some(s2)) => fourier_laplace_f0(&q, s1, s2).map_err(numeric)?,
                (x, None) => laplace_f0(&q, s1, x.unwrap_or(0.0)).map_err(numeric)?,
            };
            println!("{} {}", sig17(value.re), sig17(value.im));
            Ok(0)
        }
        Command::Compare {
            chain,
            t,
            grid,
            method_a,
            method_b,
            tol,
            nodes,
            truncate,
            series_order,
            n,
            seed,
            out,
        } => {
            let spec = apply_truncate(&parse_chain(&chain)?, truncate);
            let a = compute_density(&spec, method_a, t, grid, nodes, series_order, n, seed)?;
            let b = compute_density(&spec, method_b, t, grid, nodes, series_order, n, seed)?;
            // identical grids compare sample by sample; otherwise probe on
            // a common interior grid through the interpolating evaluators
            let sup = if a.grid() == b.grid() {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0_f64, f64::max)
            } else {
                let margin = 2e-4 * t;
                cosine_grid(t - 2.0 * margin, grid)
                    .into_iter()
                    .map(|x| (a.eval(x + margin) - b.eval(x + margin)).abs())
                    .fold(0.0_f64, f64::max)
            };
            let report = serde_json::json!({
                "sup_abs_diff": sup,
                "grid": grid,
                "method_a": method_a.name(),
                "method_b": method_b.name(),
                "tol": tol,
            });
            let text = serde_json::to_string_pretty(&report).unwrap();
            println!("{text}");
            if let Some(path) = out {
                fs::write(&path, text)
                    .map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))?;
            }
            Ok(if sup <= tol { 0 } else { 1 })
        }
        Command::Simulate {
            chain,
            t,
            n,
            seed,
            out,
        } => {
            let spec = parse_chain(&chain)?;
            let q = spec.to_generator().map_err(config)?;
            if t <= 0.0 {
                return Err(CliError::Config(format!(
                    "horizon must be positive, got {t}"
                )));
            }
            let result = monte_carlo(&q, 0, t, n, seed);
            let summary = serde_json::json!({
                "n": result.n(),
                "seed": result.seed(),
                "t": result.horizon(),
                "mean": result.mean(),
                "atom_fraction": result.atom_fraction(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            if let Some(path) = out {
                let mut csv = String::from("occupation_time\n");
                for &s in result.samples() {
                    csv.push_str(&sig17(s));
                    csv.push('\n');
                }
                fs::write(&path, csv)
                    .map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))?;
            }
            Ok(0)
        }
        Command::Spectral {
            chain,
            truncate,
            series_order,
        } => {
            let spec = apply_truncate(&parse_chain(&chain)?, truncate);
            let bd = spec
                .to_birth_death()
                .map_err(config)?
                .ok_or_else(|| CliError::Config("spectral requires a birth-death chain".into()))?;
            let level = bd.truncation_hint();
            let measure = discrete_spectral_measure(&bd, level).map_err(numeric)?;
            let q = truncate_birth_death(&bd, level).map_err(numeric)?;
            let report = serde_json::json!({
                "support": measure.support(),
                "weights": measure.weights(),
                "moments": moments(&q, series_order),
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
