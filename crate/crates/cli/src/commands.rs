use std::fmt::Write as _;
use std::path::PathBuf;

use pairspec::dispersion::{
    critical_velocity_continuum, critical_velocity_lattice, landau_features, uniform_grid, DispersionCurve,
    FeatureSettings,
};
use pairspec::pairfield::{hamiltonian_residual, normalization_check, solve_pairfield, SolveSettings};
use pairspec::potentials::{
    fourier_transform, potential_from_json, transform_at, verify_general_position, TheoremSettings,
};
use pairspec::quadrature::QuadSettings;
use pairspec::variational::{build_matrix_with, discrepancy_report, eigenvalues, limit_consistency};
use pairspec::verify::{self, k2_ladder, Suite, VerifyConfig};
use pairspec::{Couplings, FourierCoefficients, Potential, Statistics, TorusGeometry, Units, Vec3};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{positive, resolve_potential, Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::{Command, GeometryArgs, GlobalArgs, PotentialArgs};

/// Residual-zero threshold relative to `|Ω|`.
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const NORMALIZATION_TOLERANCE: f64 = 1e-12;
/// Relative agreement demanded of the closed-form spectrum comparison.
const CLOSED_FORM_TOLERANCE: f64 = 1e-9;

/// Settings shared by every subcommand after merging flags and config.
struct Context {
    cfg: RunConfig,
    units: Units<f64>,
    quad: QuadSettings<f64>,
    out: PathBuf,
    format: Format,
    workers: Option<usize>,
}

impl Context {
    fn new(g: &GlobalArgs) -> CliResult<Self> {
        let cfg = match &g.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let hbar = positive("hbar", g.hbar.or(cfg.units.hbar).unwrap_or(1.0))?;
        let mass = positive("mass", g.mass.or(cfg.units.mass).unwrap_or(1.0))?;
        let units = Units::new(hbar, mass)?;
        let quad = match g.tolerance.or(cfg.quadrature.tolerance) {
            Some(t) => QuadSettings::with_tolerance(positive("tolerance", t)?),
            None => QuadSettings::default(),
        };
        let out = g.out.clone().or_else(|| cfg.output.path.clone()).unwrap_or_else(|| PathBuf::from("."));
        let format = g.format.or(cfg.output.format).unwrap_or(Format::Csv);
        if g.workers == Some(0) {
            return Err(CliError::Invalid("field `workers`: must be at least 1".into()));
        }
        Ok(Self { cfg, units, quad, out, format, workers: g.workers })
    }

    /// Resolved description of the run; its digest tags every output.
    /// Output location and worker count are deliberately left out.
    fn describe(&self, command: &str, extra: Value) -> Value {
        let mut v = json!({
            "command": command,
            "units": { "hbar": self.units.hbar, "mass": self.units.mass },
            "quadrature": { "tolerance": self.quad.tolerance },
            "format": self.format,
        });
        if let (Value::Object(base), Value::Object(extra)) = (&mut v, extra) {
            base.extend(extra);
        }
        v
    }

    fn output(&self, resolved: &Value) -> CliResult<Output> {
        Output::new(&self.out, self.format, resolved)
    }

    fn potential(&self, args: &PotentialArgs) -> CliResult<(Potential, Value)> {
        let (spec, base) = resolve_potential(args.potential.as_deref(), args.params(), &self.cfg)?;
        let pot = potential_from_json(&spec, base.as_deref())?;
        Ok((pot, spec))
    }

    fn geometry(&self, args: &GeometryArgs) -> CliResult<(TorusGeometry<f64>, i64)> {
        let unit = TorusGeometry::<f64>::unit();
        let g = &self.cfg.geometry;
        let geom = TorusGeometry::new(
            args.l1.or(g.l1).unwrap_or(unit.l1),
            args.l2.or(g.l2).unwrap_or(unit.l2),
            args.n.or(g.n).unwrap_or(unit.n),
        )?;
        let n_max = args.nmax.or(g.n_max).unwrap_or(2);
        if n_max < 0 {
            return Err(CliError::Invalid("field `nmax`: must be nonnegative".into()));
        }
        Ok((geom, n_max))
    }

    fn p_sweep(&self, pmax: Option<f64>, pcount: Option<usize>, default_max: f64, default_count: usize) -> CliResult<(f64, usize)> {
        let p_max = positive("pmax", pmax.or(self.cfg.sweep.p_max).unwrap_or(default_max))?;
        let count = pcount.or(self.cfg.sweep.p_count).unwrap_or(default_count);
        if count < 2 {
            return Err(CliError::Invalid(format!("field `pcount`: sweep needs at least 2 points, got {count}")));
        }
        Ok((p_max, count))
    }
}

fn geometry_json(geom: &TorusGeometry<f64>, n_max: i64) -> Value {
    json!({ "L1": geom.l1, "L2": geom.l2, "N": geom.n, "n_max": n_max })
}

/// Couplings `v(q) = Ṽ(|q|)` evaluated by quadrature at each momentum.
struct TransformCouplings<'a> {
    pot: &'a Potential,
    quad: QuadSettings<f64>,
}

impl Couplings<f64> for TransformCouplings<'_> {
    fn coupling(&self, q: &Vec3<f64>) -> pairspec::Result<f64> {
        Ok(transform_at(self.pot, q.norm(), &self.quad)?.value)
    }
}

pub fn run(global: &GlobalArgs, command: Command) -> CliResult<()> {
    let ctx = Context::new(global)?;
    if let Some(n) = ctx.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("field `workers`: {e}")))?;
    }
    match command {
        Command::Fourier { potential, pmax, pcount, verify_theorem } => {
            fourier(&ctx, &potential, pmax, pcount, verify_theorem)
        }
        Command::Torus { potential, geometry } => torus(&ctx, &potential, &geometry),
        Command::Pairfield { statistics, potential, geometry, k1, k2, max_lmax } => {
            pairfield(&ctx, statistics.into(), &potential, &geometry, k1, k2, max_lmax)
        }
        Command::Variational { statistics, potential, l, k1, k2 } => {
            variational(&ctx, statistics.into(), &potential, l, k1, k2)
        }
        Command::Dispersion { statistics, potential, pmax, pcount, spectrum_count, v } => {
            dispersion(&ctx, statistics.into(), &potential, pmax, pcount, spectrum_count, v)
        }
        Command::Landau { statistics, potential, pmax, pcount, spectrum_count, lattice, geometry } => {
            landau(&ctx, statistics.into(), &potential, pmax, pcount, spectrum_count, lattice.then_some(&geometry))
        }
        Command::Verify { suite, corrupt_phi } => verify_cmd(&ctx, &suite, corrupt_phi),
    }
}

fn fourier(ctx: &Context, args: &PotentialArgs, pmax: Option<f64>, pcount: Option<usize>, theorem: bool) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    let (p_max, count) = ctx.p_sweep(pmax, pcount, 10.0, 200)?;
    let resolved = ctx.describe(
        "fourier",
        json!({ "potential": spec_json, "p_max": p_max, "p_count": count, "verify_theorem": theorem }),
    );
    let spectrum = fourier_transform(&pot, &uniform_grid(p_max, count), &ctx.quad)?;
    let mut out = ctx.output(&resolved)?;
    out.table("spectrum", &spectrum.to_csv())?;
    if theorem {
        let settings = TheoremSettings { quad: ctx.quad, ..TheoremSettings::default() };
        let report = verify_general_position(&pot, &settings);
        out.report("theorem", &report)?;
        if !report.pass {
            return Err(CliError::Failed(format!(
                "slope theorem: relative deviation {:e}; {}",
                report.relative_deviation,
                report.notes.join("; ")
            )));
        }
    }
    Ok(())
}

fn torus(ctx: &Context, args: &PotentialArgs, geometry: &GeometryArgs) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    let (geom, n_max) = ctx.geometry(geometry)?;
    let resolved = ctx.describe("torus", json!({ "potential": spec_json, "geometry": geometry_json(&geom, n_max) }));
    let table = FourierCoefficients::build(&geom, &pot, n_max, &ctx.quad)?;
    ctx.output(&resolved)?.table("coefficients", &table.to_csv())
}

fn pairfield(
    ctx: &Context,
    stat: Statistics,
    args: &PotentialArgs,
    geometry: &GeometryArgs,
    k1: Option<[i64; 3]>,
    k2: Option<[i64; 3]>,
    max_lmax: i64,
) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    let (geom, _) = ctx.geometry(geometry)?;
    let k1 = k1.unwrap_or([0, 0, 0]);
    let k2 = k2.unwrap_or([0, 1, 0]);
    if max_lmax < 1 {
        return Err(CliError::Invalid("field `max-lmax`: must be at least 1".into()));
    }
    let resolved = ctx.describe(
        "pairfield",
        json!({
            "statistics": stat,
            "potential": spec_json,
            "geometry": { "L1": geom.l1, "L2": geom.l2, "N": geom.n },
            "k1": k1, "k2": k2, "max_l_max": max_lmax,
        }),
    );
    let settings = SolveSettings { quad: ctx.quad, max_l_max: max_lmax, ..SolveSettings::default() };
    let (sol, table) = solve_pairfield(stat, &geom, &pot, &ctx.units, k1, k2, &settings)?;
    let residual = hamiltonian_residual(&sol, &table, settings.boundary_tolerance)?;
    let norm_gap = (normalization_check(&sol) - 0.5).abs();
    let pass = residual.sup_residual_first <= RESIDUAL_TOLERANCE * sol.omega.abs() && norm_gap <= NORMALIZATION_TOLERANCE;
    let mut out = ctx.output(&resolved)?;
    out.table("pairfield", &sol.to_csv())?;
    out.report(
        "residual",
        &json!({
            "statistics": stat,
            "k1": k1,
            "k2": k2,
            "omega": sol.omega,
            "l_max": sol.l_max,
            "complex_modes": sol.complex_modes,
            "degenerate_modes": sol.degenerate_modes,
            "branch_overrides": sol.branch_overrides,
            "residual": residual,
            "normalization_gap": norm_gap,
            "pass": pass,
        }),
    )?;
    if !pass {
        return Err(CliError::Failed(format!(
            "pair-field residual {:e} (|Ω| = {:e}), normalization gap {:e}",
            residual.sup_residual_first,
            sol.omega.abs(),
            norm_gap
        )));
    }
    Ok(())
}

fn variational(
    ctx: &Context,
    stat: Statistics,
    args: &PotentialArgs,
    l: Option<[f64; 3]>,
    k1: Option<[f64; 3]>,
    k2: Vec<[f64; 3]>,
) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    pot.check_integrable()?;
    let sweep = &ctx.cfg.sweep;
    let l = Vec3(l.or(sweep.l).unwrap_or([0.0, 0.0, 1.0]));
    let k1 = Vec3(k1.or(sweep.k1).unwrap_or([0.0; 3]));
    let k2s: Vec<Vec3<f64>> = if !k2.is_empty() {
        k2.into_iter().map(Vec3).collect()
    } else if let Some(list) = &sweep.k2 {
        list.iter().copied().map(Vec3).collect()
    } else {
        k2_ladder(1, 8)
    };
    let resolved = ctx.describe(
        "variational",
        json!({
            "statistics": stat,
            "potential": spec_json,
            "l": l.0, "k1": k1.0,
            "k2": k2s.iter().map(|k| k.0).collect::<Vec<_>>(),
        }),
    );
    let couplings = TransformCouplings { pot: &pot, quad: ctx.quad };
    let results = k2s
        .par_iter()
        .map(|&k2| {
            let block = build_matrix_with(stat, &ctx.units, &couplings, l, k1, k2)?;
            let spectrum = eigenvalues(&block)?;
            Ok((block, spectrum))
        })
        .collect::<pairspec::Result<Vec<_>>>()?;

    let mut csv = String::from("l_x,l_y,l_z,k2_x,k2_y,k2_z,branch,re_lambda,im_lambda,real\n");
    for (block, spectrum) in &results {
        for (i, z) in spectrum.lambda.iter().enumerate() {
            let [lx, ly, lz] = l.0;
            let [kx, ky, kz] = block.k2.0;
            let real = u8::from(spectrum.real[i]);
            writeln!(csv, "{lx:e},{ly:e},{lz:e},{kx:e},{ky:e},{kz:e},{},{:e},{:e},{real}", spectrum.labels[i], z.re, z.im)
                .expect("writing to a String");
        }
    }
    let mut out = ctx.output(&resolved)?;
    out.table("spectra", &csv)?;
    let limit = limit_consistency(stat, &ctx.units, &couplings, l, k1, &k2s)?;
    out.report("limit", &limit)?;
    if stat == Statistics::Bose {
        let blocks: Vec<_> = results.into_iter().map(|(b, _)| b).collect();
        out.report("discrepancy", &discrepancy_report(&blocks, CLOSED_FORM_TOLERANCE)?)?;
    }
    Ok(())
}

fn dispersion(
    ctx: &Context,
    stat: Statistics,
    args: &PotentialArgs,
    pmax: Option<f64>,
    pcount: Option<usize>,
    spectrum_count: usize,
    v: Option<[f64; 3]>,
) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    let (p_max, count) = ctx.p_sweep(pmax, pcount, 8.0, 200)?;
    if spectrum_count < 7 {
        return Err(CliError::Invalid("field `spectrum-count`: at least 7 transform samples are needed".into()));
    }
    let resolved = ctx.describe(
        "dispersion",
        json!({
            "statistics": stat,
            "potential": spec_json,
            "p_max": p_max, "p_count": count, "spectrum_count": spectrum_count,
            "v": v,
        }),
    );
    let spectrum = fourier_transform(&pot, &uniform_grid(p_max, spectrum_count), &ctx.quad)?;
    let curve = DispersionCurve::new(stat, &ctx.units, &spectrum, &uniform_grid(p_max, count), v.map(Vec3))?;
    let features = landau_features(&curve, &spectrum, Some(&pot), &FeatureSettings::default())?;
    let mut out = ctx.output(&resolved)?;
    out.table("curve", &curve.to_csv())?;
    out.report("features", &features)
}

fn landau(
    ctx: &Context,
    stat: Statistics,
    args: &PotentialArgs,
    pmax: Option<f64>,
    pcount: Option<usize>,
    spectrum_count: usize,
    lattice: Option<&GeometryArgs>,
) -> CliResult<()> {
    let (pot, spec_json) = ctx.potential(args)?;
    let (p_max, count) = ctx.p_sweep(pmax, pcount, 8.0, 200)?;
    if spectrum_count < 7 {
        return Err(CliError::Invalid("field `spectrum-count`: at least 7 transform samples are needed".into()));
    }
    let lattice = lattice.map(|g| ctx.geometry(g)).transpose()?;
    let resolved = ctx.describe(
        "landau",
        json!({
            "statistics": stat,
            "potential": spec_json,
            "p_max": p_max, "p_count": count, "spectrum_count": spectrum_count,
            "lattice": lattice.as_ref().map(|(g, n)| geometry_json(g, *n)),
        }),
    );
    let spectrum = fourier_transform(&pot, &uniform_grid(p_max, spectrum_count), &ctx.quad)?;
    let grid = uniform_grid(p_max, count);
    let curve = DispersionCurve::new(stat, &ctx.units, &spectrum, &grid, None)?;
    let features = landau_features(&curve, &spectrum, Some(&pot), &FeatureSettings::default())?;
    let v0 = spectrum.eval(0.0)?;
    let continuum = critical_velocity_continuum(stat, &ctx.units, |p| spectrum.eval(p), v0, &grid, 1e-10)?;
    let on_lattice = match &lattice {
        Some((geom, n_max)) => {
            let table = FourierCoefficients::build(geom, &pot, *n_max, &ctx.quad)?;
            Some(critical_velocity_lattice(stat, &ctx.units, &table)?)
        }
        None => None,
    };
    ctx.output(&resolved)?.report(
        "landau",
        &json!({
            "statistics": stat,
            "features": features,
            "critical_velocity_continuum": continuum,
            "critical_velocity_lattice": on_lattice,
        }),
    )
}

fn verify_cmd(ctx: &Context, suites: &[String], corrupt_phi: bool) -> CliResult<()> {
    let suites: Vec<Suite> = if suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        suites
            .iter()
            .map(|s| s.parse().map_err(|_| CliError::Invalid(format!("field `suite`: unknown suite `{s}`"))))
            .collect::<CliResult<_>>()?
    };
    let workers = ctx.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let config = VerifyConfig { suites, workers, corrupt_phi, units: ctx.units, ..VerifyConfig::default() };
    let resolved = ctx.describe(
        "verify",
        json!({
            "suites": config.suites.iter().map(|s| s.name()).collect::<Vec<_>>(),
            "corrupt_phi": corrupt_phi,
            "seed": config.seed,
        }),
    );
    let mut out = ctx.output(&resolved)?;
    match verify::run(&config) {
        Ok(summary) => {
            out.report("summary", &summary)?;
            if summary.pass {
                Ok(())
            } else {
                Err(CliError::Failed(format!("failed checks: {}", summary.failed.join(", "))))
            }
        }
        Err(e) => {
            out.report("summary", &json!({ "pass": false, "error": e.to_string() }))?;
            Err(e.into())
        }
    }
}
