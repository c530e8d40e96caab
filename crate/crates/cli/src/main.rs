//! `pairspec`: potential transforms, torus coefficients, pair fields,
//! variational spectra and dispersion curves from the command line.
//!
//! Exit codes: 0 success, 1 computation or verification failure, 2 invalid
//! input.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use crate::config::Format;

#[derive(Parser)]
#[command(name = "pairspec", version, about = "Excitation spectra of nonideal Bose and Fermi gases from a pair potential")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Reduced Planck constant [default: 1]
    #[arg(long, global = true)]
    pub hbar: Option<f64>,
    /// Particle mass [default: 1]
    #[arg(long, global = true)]
    pub mass: Option<f64>,
    /// Output directory [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Format of tabular outputs; reports are always JSON [default: csv]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON run configuration; command-line flags take precedence
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Size of the worker pool; outputs do not depend on it
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Absolute quadrature tolerance per transform sample [default: 1e-10]
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct PotentialArgs {
    /// Potential type (zero, yukawa, gaussian, lennard-jones, r4tail, bump,
    /// table, reference), a JSON spec file, or an inline JSON object
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub volume_integral: Option<f64>,
    #[arg(long)]
    pub core_cutoff: Option<f64>,
}

impl PotentialArgs {
    pub fn params(&self) -> Map<String, Value> {
        [
            ("g", self.g),
            ("mu", self.mu),
            ("amplitude", self.amplitude),
            ("width", self.width),
            ("epsilon", self.epsilon),
            ("sigma", self.sigma),
            ("a", self.a),
            ("radius", self.radius),
            ("power", self.power),
            ("volume_integral", self.volume_integral),
            ("core_cutoff", self.core_cutoff),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), Value::from(v))))
        .collect()
    }
}

#[derive(Args, Debug, Default)]
pub struct GeometryArgs {
    /// Box side along the first axis [default: 2π]
    #[arg(long = "L1")]
    pub l1: Option<f64>,
    /// Side of the two remaining axes [default: 2π]
    #[arg(long = "L2")]
    pub l2: Option<f64>,
    /// Particle number [default: 1]
    #[arg(long = "N")]
    pub n: Option<f64>,
    /// Coefficient table radius per axis [default: 2]
    #[arg(long)]
    pub nmax: Option<i64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Stat {
    Bose,
    Fermi,
}

impl From<Stat> for pairspec::Statistics {
    fn from(s: Stat) -> Self {
        match s {
            Stat::Bose => pairspec::Statistics::Bose,
            Stat::Fermi => pairspec::Statistics::Fermi,
        }
    }
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
        if !o.is_finite() {
            return Err(format!("`{p}` is not finite"));
        }
    }
    Ok(out)
}

fn index_triple(s: &str) -> Result<[i64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated integers, got `{s}`"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not an integer"))?;
    }
    Ok(out)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Radial Fourier transform of a potential on a uniform momentum grid
    Fourier {
        #[command(flatten)]
        potential: PotentialArgs,
        /// Largest momentum [default: 10]
        #[arg(long)]
        pmax: Option<f64>,
        /// Number of grid points, including p = 0 [default: 200]
        #[arg(long)]
        pcount: Option<usize>,
        /// Also check the slope-at-origin theorem and write its report
        #[arg(long)]
        verify_theorem: bool,
    },
    /// Fourier coefficients v_q on the scaled periodic box
    Torus {
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Pair-field solution for one (k1, k2) and its Hamiltonian residuals
    Pairfield {
        #[arg(long, value_enum, default_value = "bose")]
        statistics: Stat,
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Lattice index of k1 [default: 0,0,0]
        #[arg(long, value_parser = index_triple, allow_hyphen_values = true)]
        k1: Option<[i64; 3]>,
        /// Lattice index of k2 [default: 0,1,0]
        #[arg(long, value_parser = index_triple, allow_hyphen_values = true)]
        k2: Option<[i64; 3]>,
        /// Cap on the adaptive mode radius
        #[arg(long, default_value_t = 64)]
        max_lmax: i64,
    },
    /// 4×4 variational spectra along a sweep of k2
    Variational {
        #[arg(long, value_enum, default_value = "bose")]
        statistics: Stat,
        #[command(flatten)]
        potential: PotentialArgs,
        /// Momentum l [default: 0,0,1]
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        l: Option<[f64; 3]>,
        /// Momentum k1 [default: 0,0,0]
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        k1: Option<[f64; 3]>,
        /// Momentum k2, repeatable [default: halving ladder 2^-1 … 2^-8 along y]
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        k2: Vec<[f64; 3]>,
    },
    /// Dispersion curve ε(p) with Landau-curve features
    Dispersion {
        #[arg(long, value_enum, default_value = "fermi")]
        statistics: Stat,
        #[command(flatten)]
        potential: PotentialArgs,
        /// Largest momentum [default: 8]
        #[arg(long)]
        pmax: Option<f64>,
        /// Curve points [default: 200]
        #[arg(long)]
        pcount: Option<usize>,
        /// Transform samples backing the curve
        #[arg(long, default_value_t = 401)]
        spectrum_count: usize,
        /// Drift velocity; adds the column λ = ε - ħ²p|v|
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        v: Option<[f64; 3]>,
    },
    /// Landau features and critical velocities
    Landau {
        #[arg(long, value_enum, default_value = "fermi")]
        statistics: Stat,
        #[command(flatten)]
        potential: PotentialArgs,
        /// Largest momentum [default: 8]
        #[arg(long)]
        pmax: Option<f64>,
        /// Curve points [default: 200]
        #[arg(long)]
        pcount: Option<usize>,
        #[arg(long, default_value_t = 401)]
        spectrum_count: usize,
        /// Also minimize over the lattice of the periodic box
        #[arg(long)]
        lattice: bool,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Run the invariant suites and write a JSON summary
    Verify {
        /// Restrict to one suite (repeatable): potentials, torus,
        /// pairfield, variational, dispersion
        #[arg(long)]
        suite: Vec<String>,
        /// Inject a corrupted pair-field mode; the residual check must fail
        #[arg(long)]
        corrupt_phi: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
