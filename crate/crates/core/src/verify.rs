//! The invariant suite behind `pairspec verify`: round trips, analytic
//! oracles, residual substitution, limit recovery, closed-form comparison
//! and the critical-velocity oracle, summarized as deterministic JSON.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dispersion::{
    critical_velocity_brute, critical_velocity_continuum, critical_velocity_lattice, epsilon_fermi, landau_features,
    uniform_grid, DispersionCurve, FeatureSettings,
};
use crate::eigen::{eigen, CMatrix};
use crate::error::{Error, Result};
use crate::pairfield::{
    hamiltonian_residual, limiting_coefficients, normalization_check, phi0_closed_form, solve_pairfield, SolveSettings,
};
use crate::potentials::{
    fourier_transform, inverse_transform, transform_at, verify_general_position, InverseSettings, RadialPotential,
    RadialSpectrum, TheoremSettings,
};
use crate::quadrature::QuadSettings;
use crate::torus::{fourier_coefficient_direct, FourierCoefficients, RadialFnCouplings, TorusGeometry, ZeroCouplings};
use crate::units::{Statistics, Units};
use crate::variational::{build_matrix_with, discrepancy_report, fermi_limit, limit_consistency};
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Potentials,
    Torus,
    Pairfield,
    Variational,
    Dispersion,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Potentials, Suite::Torus, Suite::Pairfield, Suite::Variational, Suite::Dispersion];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Potentials => "potentials",
            Suite::Torus => "torus",
            Suite::Pairfield => "pairfield",
            Suite::Variational => "variational",
            Suite::Dispersion => "dispersion",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    /// Size of the worker pool; results do not depend on it.
    pub workers: usize,
    /// Scales one pair-field mode before residual substitution, which must
    /// make `hamiltonian_residual` fail.
    pub corrupt_phi: bool,
    pub seed: u64,
    pub units: Units<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suites: Suite::ALL.to_vec(), workers: 1, corrupt_phi: false, seed: 20240917, units: Units::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Measured quantity (deviation, residual, count…).
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, value: f64::from(u8::from(pass)), threshold: 1.0, detail: detail.into() }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self { name: name.into(), pass: false, value: f64::NAN, threshold: 0.0, detail: err.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub pass: bool,
    /// Names of the failed checks, in suite order.
    pub failed: Vec<String>,
    pub suites: Vec<SuiteReport>,
}

impl VerifySummary {
    /// Pretty JSON; NaN values are written as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn run(config: &VerifyConfig) -> Result<VerifySummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut suites = config.suites.clone();
    suites.sort();
    suites.dedup();
    let reports: Vec<SuiteReport> = pool.install(|| {
        suites
            .par_iter()
            .map(|&s| {
                let checks = run_suite(s, config);
                SuiteReport { suite: s, pass: checks.iter().all(|c| c.pass), checks }
            })
            .collect()
    });
    let failed = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()))
        .collect::<Vec<_>>();
    Ok(VerifySummary { pass: failed.is_empty(), failed, suites: reports })
}

fn run_suite(suite: Suite, config: &VerifyConfig) -> Vec<Check> {
    let tasks: Vec<fn(&VerifyConfig) -> Vec<Check>> = match suite {
        Suite::Potentials => vec![analytic_oracles, round_trips, theorem],
        Suite::Torus => vec![torus_checks],
        Suite::Pairfield => vec![pairfield_residuals, limiting_identity],
        Suite::Variational => vec![eigen_residuals, limit_recovery, closed_form],
        Suite::Dispersion => vec![fermi_identity, landau_shape, critical_velocity_oracle],
    };
    tasks.par_iter().map(|t| t(config)).collect::<Vec<_>>().concat()
}

/// Largest relative deviation of `inverse∘forward` from `pot` on `r_grid`.
pub fn round_trip_error(
    pot: &RadialPotential<f64>,
    p_grid: &[f64],
    r_grid: &[f64],
    quad: &QuadSettings<f64>,
) -> Result<f64> {
    let spec = fourier_transform(pot, p_grid, quad)?;
    let back = inverse_transform(&spec, r_grid, &InverseSettings::default())?;
    Ok(r_grid.iter().zip(&back).map(|(&r, &v)| ((v - pot.value(r)) / pot.value(r)).abs()).fold(0.0, f64::max))
}

/// Momentum grid for the Gaussian round trip.
pub fn gaussian_round_trip_grid() -> Vec<f64> {
    uniform_grid(16.0, 641)
}

/// Momentum grid for the Yukawa round trip: uniform to 2, then geometric
/// with ratio 1.01 up to 200.
pub fn yukawa_round_trip_grid() -> Vec<f64> {
    let mut g = uniform_grid(2.0, 101);
    let mut p: f64 = 2.0;
    while p < 200.0 {
        p *= 1.01;
        g.push(p.min(200.0));
    }
    g
}

fn analytic_oracles(_: &VerifyConfig) -> Vec<Check> {
    let quad = QuadSettings::with_tolerance(1e-9);
    let grid = uniform_grid(10.0, 41);
    let cases: [(&str, RadialPotential<f64>, fn(f64) -> f64); 2] = [
        ("analytic_yukawa", RadialPotential::yukawa(1.0, 1.0), |p| 4.0 * std::f64::consts::PI / (p * p + 1.0)),
        ("analytic_gaussian", RadialPotential::gaussian(1.0, 1.0), |p| {
            std::f64::consts::PI.powf(1.5) * (-p * p / 4.0).exp()
        }),
    ];
    cases
        .into_iter()
        .map(|(name, pot, exact)| match fourier_transform(&pot, &grid, &quad) {
            Ok(s) => {
                let (_, v) = s.nodes();
                let err = grid.iter().zip(v).map(|(&p, &v)| ((v - exact(p)) / exact(p)).abs()).fold(0.0, f64::max);
                Check::at_most(name, err, 1e-7, "max relative error on p in [0, 10]")
            }
            Err(e) => Check::failed(name, &e),
        })
        .collect()
}

fn round_trips(_: &VerifyConfig) -> Vec<Check> {
    let quad = QuadSettings::with_tolerance(1e-9);
    let r_grid = uniform_grid(4.9, 50).into_iter().map(|r| r + 0.1).collect::<Vec<_>>();
    [
        ("round_trip_gaussian", RadialPotential::gaussian(1.0, 1.0), gaussian_round_trip_grid()),
        ("round_trip_yukawa", RadialPotential::yukawa(1.0, 1.0), yukawa_round_trip_grid()),
    ]
    .into_iter()
    .map(|(name, pot, grid)| match round_trip_error(&pot, &grid, &r_grid, &quad) {
        Ok(e) => Check::at_most(name, e, 1e-6, "max relative error on r in [0.1, 5]"),
        Err(e) => Check::failed(name, &e),
    })
    .collect()
}

fn theorem(_: &VerifyConfig) -> Vec<Check> {
    let r = verify_general_position(&RadialPotential::reference(), &TheoremSettings::default());
    vec![Check {
        name: "general_position_theorem".into(),
        pass: r.pass,
        value: r.relative_deviation,
        threshold: 0.02,
        detail: format!("slope {:.6e}, predicted {:.6e}", r.slope, r.predicted_slope),
    }]
}

fn torus_checks(_: &VerifyConfig) -> Vec<Check> {
    let geom = TorusGeometry::unit();
    let pot = RadialPotential::bump(1.0, 0.4, 8);
    let quad = QuadSettings::default();
    let table: FourierCoefficients<f64> = match FourierCoefficients::build(&geom, &pot, 2, &quad) {
        Ok(t) => t,
        Err(e) => return vec![Check::failed("coefficient_table", &e)],
    };
    let mut worst_bound = 0.0_f64;
    for (_, v) in table.entries() {
        worst_bound = worst_bound.max(v.abs() / table.bound);
    }
    let mut worst_direct = 0.0_f64;
    for i in [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 1]] {
        match fourier_coefficient_direct(&geom, &pot, &geom.vector(i), 24) {
            Ok(d) => {
                let t = table.get(i).unwrap_or(f64::NAN);
                worst_direct = worst_direct.max(((d - t) / t).abs());
            }
            Err(e) => return vec![Check::failed("coefficient_direct", &e)],
        }
    }
    vec![
        Check::at_most("coefficient_bound", worst_bound, 1.0, "max |v_q| / B"),
        Check::at_most("coefficient_direct", worst_direct, 1e-8, "relative gap, radial vs tensor-product quadrature"),
    ]
}

fn pairfield_residuals(config: &VerifyConfig) -> Vec<Check> {
    let geom = TorusGeometry::unit();
    let pot = RadialPotential::bump(1.0, 1.0, 8);
    let settings = SolveSettings::default();
    let mut worst = 0.0_f64;
    let mut worst_norm = 0.0_f64;
    let mut detail = String::new();
    for stat in [Statistics::Bose, Statistics::Fermi] {
        let (mut sol, coeffs) = match solve_pairfield(stat, &geom, &pot, &config.units, [1, 0, 0], [0, 1, 0], &settings) {
            Ok(s) => s,
            Err(e) => return vec![Check::failed("hamiltonian_residual", &e)],
        };
        if config.corrupt_phi {
            if let Err(e) = sol.scale_mode([1, 1, 0], 1.5) {
                return vec![Check::failed("hamiltonian_residual", &e)];
            }
        }
        match hamiltonian_residual(&sol, &coeffs, settings.boundary_tolerance) {
            Ok(r) => {
                let rel = r.sup_residual_first.max(r.sup_residual_second) / sol.omega.abs();
                worst = worst.max(rel);
                detail.push_str(&format!("{}: l_max {} relative {:.3e}; ", stat.name(), sol.l_max, rel));
            }
            Err(e) => return vec![Check::failed("hamiltonian_residual", &e)],
        }
        worst_norm = worst_norm.max((normalization_check(&sol) - 0.5).abs());
    }
    vec![
        Check::at_most("hamiltonian_residual", worst, 1e-8, detail.trim_end_matches("; ")),
        Check::at_most("normalization", worst_norm, 1e-12, "| |normalization| - 1/2 |"),
    ]
}

fn limiting_identity(config: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let mut v = || Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (k2, l) = (v(), v());
        let v0 = rng.gen_range(0.1..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        match (limiting_coefficients(&k2, &l, v0, &config.units), phi0_closed_form(&k2, &l, v0, &config.units)) {
            (Ok((_, a)), Ok(b)) => worst = worst.max((a - b).norm() / b.norm().max(1.0)),
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed("limiting_coefficients", &e)],
        }
    }
    vec![Check::at_most("limiting_coefficients", worst, 1e-12, "100 random (l, k2, V0)")]
}

/// Random complex matrix with entries uniform in the unit square.
pub fn random_matrix(n: usize, rng: &mut impl Rng) -> CMatrix<f64> {
    let mut m = CMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.data[i * n + j] = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    m
}

fn eigen_residuals(config: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let m = random_matrix(4, &mut rng);
        match eigen(&m) {
            Ok(e) => {
                let trace: Complex<f64> = (0..4).map(|i| m.data[i * 5]).sum();
                let sum: Complex<f64> = e.values().into_iter().sum();
                let r = e.pairs.iter().map(|p| p.residual).fold((trace - sum).norm(), f64::max);
                worst = worst.max(r / m.frobenius());
            }
            Err(e) => return vec![Check::failed("eigen_residual", &e)],
        }
    }
    vec![Check::at_most("eigen_residual", worst, 1e-12, "200 random 4x4 complex matrices")]
}

/// The `k2` ladder `2^-j ŷ`, `j = from..=to`.
pub fn k2_ladder(from: i32, to: i32) -> Vec<Vec3<f64>> {
    (from..=to).map(|j| Vec3::new(0.0, 2f64.powi(-j), 0.0)).collect()
}

fn limit_recovery(config: &VerifyConfig) -> Vec<Check> {
    let pot = RadialPotential::reference();
    let quad = QuadSettings::default();
    let v = RadialFnCouplings(|p: f64| transform_at(&pot, p, &quad).map(|e| e.value).unwrap_or(f64::NAN));
    let l = Vec3::new(0.0, 0.0, 1.0);
    let k1 = Vec3::new(0.3, 0.0, 0.0);
    let ladder = k2_ladder(1, 16);
    [(Statistics::Bose, "bogolyubov_limit"), (Statistics::Fermi, "fermi_limit")]
        .into_iter()
        .map(|(stat, name)| match limit_consistency(stat, &config.units, &v, l, k1, &ladder) {
            Ok(r) => {
                let order = r.order.unwrap_or(f64::NAN);
                let rel = r.terminal_deviation / r.scale.abs();
                Check {
                    name: name.into(),
                    pass: order >= 1.0 && rel < 1e-3,
                    value: rel,
                    threshold: 1e-3,
                    detail: format!("order {order:.3}, terminal deviation {:.3e}", r.terminal_deviation),
                }
            }
            Err(e) => Check::failed(name, &e),
        })
        .collect()
}

fn closed_form(config: &VerifyConfig) -> Vec<Check> {
    let pot = RadialPotential::reference();
    let quad = QuadSettings::default();
    let v = RadialFnCouplings(|p: f64| transform_at(&pot, p, &quad).map(|e| e.value).unwrap_or(f64::NAN));
    let mut blocks = Vec::new();
    for (l, k2) in [((0.0, 0.0, 1.0), 0.25), ((0.5, 0.0, 1.0), 0.5), ((1.0, 1.0, 0.0), 0.125)] {
        let l = Vec3::new(l.0, l.1, l.2);
        match build_matrix_with(Statistics::Bose, &config.units, &v, l, Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.0, k2, 0.0)) {
            Ok(b) => blocks.push(b),
            Err(e) => return vec![Check::failed("closed_form_report", &e)],
        }
    }
    let free = build_matrix_with(Statistics::Bose, &config.units, &ZeroCouplings, Vec3::new(0.0, 0.0, 1.0), Vec3::zero(), Vec3::new(0.0, 0.5, 0.0));
    match (discrepancy_report(&blocks, 1e-9), free) {
        (Ok(r), Ok(_)) => vec![Check::flag(
            "closed_form_report",
            r.zero_potential_match,
            format!(
                "{} blocks, verbatim mismatches {}, block-reading mismatches {}",
                r.entries.len(),
                r.verbatim_mismatches,
                r.block_mismatches
            ),
        )],
        (Err(e), _) | (_, Err(e)) => vec![Check::failed("closed_form_report", &e)],
    }
}

fn reference_spectrum() -> Result<RadialSpectrum<f64>> {
    fourier_transform(&RadialPotential::reference(), &uniform_grid(8.0, 401), &QuadSettings::default())
}

fn fermi_identity(config: &VerifyConfig) -> Vec<Check> {
    let spec = match reference_spectrum() {
        Ok(s) => s,
        Err(e) => return vec![Check::failed("fermi_dispersion_identity", &e)],
    };
    let mut worst = 0.0_f64;
    for p in uniform_grid(8.0, 200) {
        let eps = epsilon_fermi(&config.units, p, &spec);
        let vp = spec.eval(p);
        match (eps, vp) {
            (Ok(e), Ok(vp)) => {
                let (_, l2) = fermi_limit(&config.units, &Vec3::new(p, 0.0, 0.0), &Vec3::zero(), vp, spec.value_at_zero());
                worst = worst.max((e - l2).abs() / e.max(1.0));
            }
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed("fermi_dispersion_identity", &e)],
        }
    }
    vec![Check::at_most("fermi_dispersion_identity", worst, 4.0 * f64::EPSILON, "200-point shared grid")]
}

fn landau_shape(config: &VerifyConfig) -> Vec<Check> {
    let pot = RadialPotential::reference();
    let result = reference_spectrum().and_then(|spec| {
        let curve = DispersionCurve::new(Statistics::Fermi, &config.units, &spec, &uniform_grid(8.0, 200), None)?;
        landau_features(&curve, &spec, Some(&pot), &FeatureSettings::default())
    });
    match result {
        Ok(f) => {
            let ordered = matches!((f.maxon, f.roton), (Some(a), Some(b)) if a.p < b.p && a.eps > b.eps);
            vec![Check::flag(
                "landau_shape",
                f.maxima.len() == 1 && f.minima.len() == 1 && ordered,
                format!("{} maxima, {} minima", f.maxima.len(), f.minima.len()),
            )]
        }
        Err(e) => vec![Check::failed("landau_shape", &e)],
    }
}

/// A randomized smooth spectrum difference `Ṽ(p) - Ṽ(0)` for the
/// critical-velocity oracle: a sum of two Gaussian dips and a linear term.
pub fn random_dip(rng: &mut impl Rng) -> impl Fn(f64) -> Result<f64> + Clone {
    let (a1, c1, w1) = (rng.gen_range(0.0..1.5), rng.gen_range(0.5..3.0), rng.gen_range(0.2..1.0));
    let (a2, c2, w2) = (rng.gen_range(0.0..1.5), rng.gen_range(0.5..3.0), rng.gen_range(0.2..1.0));
    let s = rng.gen_range(-0.5..0.5);
    move |p: f64| {
        let g = |a: f64, c: f64, w: f64| a * ((-((p - c) / w).powi(2)).exp() - (-(c / w).powi(2)).exp());
        Ok(s * p - g(a1, c1, w1) - g(a2, c2, w2))
    }
}

fn critical_velocity_oracle(config: &VerifyConfig) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xc417);
    let p_max = 4.0;
    let coarse = uniform_grid(p_max, 401);
    let dense = 40_000;
    let cell = p_max / dense as f64;
    let mut misses = 0usize;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let f = random_dip(&mut rng);
        let opt = critical_velocity_continuum(Statistics::Fermi, &config.units, f.clone(), 0.0, &coarse, 1e-10);
        let brute = critical_velocity_brute(Statistics::Fermi, &config.units, f.clone(), 0.0, p_max, dense);
        match (opt, brute) {
            (Ok(o), Ok(b)) => {
                // grid resolution: variation of the criterion over one dense
                // cell around the optimizer's minimizer
                let ratio = |p: f64| (f(p).unwrap_or(f64::NAN) / (p * config.units.hbar2_over_m()) + 0.5 * p).abs();
                let resolution = [o.argmin - cell, o.argmin + cell]
                    .into_iter()
                    .filter(|&p| p > 0.0 && p <= p_max)
                    .map(|p| (ratio(p) - o.value).abs())
                    .fold(0.0, f64::max);
                worst = worst.max((b.value - o.value).abs());
                if o.value > b.value + 1e-12 || b.value - o.value > resolution {
                    misses += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed("critical_velocity_oracle", &e)],
        }
    }
    let geom = TorusGeometry::unit();
    let free = FourierCoefficients::from_fn(&geom, 3, 0.0, |_| 0.7)
        .and_then(|t| critical_velocity_lattice(Statistics::Fermi, &config.units, &t));
    let expected = 0.5 * geom.vector([1, 0, 0]).norm();
    vec![
        Check::at_most("critical_velocity_oracle", misses as f64, 0.0, format!("20 random dips, largest optimizer-grid difference {worst:.3e}")),
        match free {
            Ok(c) => Check::at_most(
                "critical_velocity_free_lattice",
                (c.value - expected).abs(),
                0.0,
                "|l|min/2 on the unit torus",
            ),
            Err(e) => Check::failed("critical_velocity_free_lattice", &e),
        },
    ]
}
