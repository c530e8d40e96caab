//! Exact plane-wave solutions of the pair-field Hamiltonian systems.
//!
//! The creation field is `Φ⁺(x,y) = α e^{-ik1(x+y)} c(k2(x-y))` with `c = cos`
//! for bosons and `c = sin` for fermions, and the annihilation field is the
//! Fourier series `Φ(x,y) = β Σ_l φ_l e^{ik1(x+y)+il(x-y)}`. Writing the
//! harmonic of `Φ⁺` as `Σ_σ c_σ e^{iσk2(x-y)}`, the weights are `c_σ = 1/2`
//! (bose) and `c_σ = σ/(2i)` (fermi).
//!
//! Both equations of each system carry the interaction factor 2; with it the
//! closed-form `φ` make every mode residual vanish identically.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lsq::fit_line;
use crate::potentials::{transform_at, RadialPotential};
use crate::quadrature::QuadSettings;
use crate::scalar::{from_i64, lit, to_f64, Real};
use crate::torus::{add, neg, scale, sub, FourierCoefficients, Index, TorusGeometry};
use crate::units::{Statistics, Units};
use crate::vec3::Vec3;

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

fn norm2(i: Index) -> i64 {
    i[0] * i[0] + i[1] * i[1] + i[2] * i[2]
}

/// `true` when `i` is the representative of the pair `{i, -i}` (first
/// nonzero component positive); the origin is its own representative.
fn canonical(i: Index) -> bool {
    for c in i {
        if c != 0 {
            return c > 0;
        }
    }
    true
}

/// Weights `c_σ` of the `e^{iσk2(x-y)}` harmonics of `Φ⁺`, indexed `[c_+, c_-]`.
pub fn harmonic_weights<T: Real>(stat: Statistics) -> [Complex<T>; 2] {
    let half = lit::<T>(0.5);
    match stat {
        Statistics::Bose => [c(half, T::zero()), c(half, T::zero())],
        // σ/(2i) = -iσ/2
        Statistics::Fermi => [c(T::zero(), -half), c(T::zero(), half)],
    }
}

fn weight<T: Real>(w: &[Complex<T>; 2], sigma: i64) -> Complex<T> {
    if sigma > 0 {
        w[0]
    } else {
        w[1]
    }
}

/// Ω for the plane-wave family.
pub fn omega<T: Real>(
    stat: Statistics,
    coeffs: &FourierCoefficients<T>,
    units: &Units<T>,
    k1: Index,
    k2: Index,
) -> Result<T> {
    let g = &coeffs.geometry;
    let kin = units.hbar2_over_m() * (g.vector(k1).norm_sqr() + g.vector(k2).norm_sqr());
    let v0 = coeffs.get([0, 0, 0])?;
    let v2 = coeffs.get(scale(k2, 2))?;
    Ok(match stat {
        Statistics::Bose => kin + v0 + v2,
        Statistics::Fermi => kin + v2 - v0,
    })
}

/// Numerator and denominator of `b_{k2,l}` with couplings looked up by index.
fn b_parts_with<T: Real, V: Fn(Index) -> Result<T>>(
    stat: Statistics,
    geom: &TorusGeometry<T>,
    units: &Units<T>,
    k2: Index,
    l: Index,
    v: V,
) -> Result<(T, T)> {
    let kin = units.hbar2_over_m() * (geom.vector(l).norm_sqr() - geom.vector(k2).norm_sqr());
    let v0 = v([0, 0, 0])?;
    let v2 = v(scale(k2, 2))?;
    let vm = v(sub(l, k2))?;
    let vp = v(add(l, k2))?;
    Ok(match stat {
        Statistics::Bose => (kin - (v0 + v2), vm + vp),
        Statistics::Fermi => (kin + (v0 - v2), vm - vp),
    })
}

fn b_parts<T: Real>(
    stat: Statistics,
    coeffs: &FourierCoefficients<T>,
    units: &Units<T>,
    k2: Index,
    l: Index,
) -> Result<(T, T)> {
    b_parts_with(stat, &coeffs.geometry, units, k2, l, |i| coeffs.get(i))
}

/// `b_{k2,l}`; a vanishing denominator is reported as `DegenerateDenominator`.
pub fn b_coefficient<T: Real>(
    stat: Statistics,
    coeffs: &FourierCoefficients<T>,
    units: &Units<T>,
    k2: Index,
    l: Index,
) -> Result<T> {
    let (num, den) = b_parts(stat, coeffs, units, k2, l)?;
    let b = num / den;
    if den == T::zero() || !b.is_finite() {
        return Err(Error::DegenerateDenominator);
    }
    Ok(b)
}

/// Data selecting the square-root branch of `φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch<T> {
    /// `l² - k2²`; the bose rule takes `+√` when positive.
    pub l_sq_minus_k2_sq: T,
    /// Denominator of `b`; the fermi rule takes `sign(v_{l-k2} - v_{l+k2})`.
    pub denominator: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiValue<T> {
    pub value: Complex<T>,
    /// Bose `b² < 1`: `φ` is complex and the mode is unstable.
    pub complex_branch: bool,
    /// The printed sign rule picked the root with `|φ| > 1/2`; the
    /// reciprocal (decaying) root was used instead.
    pub branch_override: bool,
}

/// `φ_{k2,l}` from `b`.
///
/// For `b² ≥ 1` the two roots of `φ² + bφ + 1/4 = 0` (bose) or
/// `φ² + ibφ - 1/4 = 0` (fermi) are reciprocal up to a constant; the one with
/// `|φ| ≤ 1/2` is returned and evaluated without cancellation. For `b² < 1`
/// the sign rules decide between two roots of modulus 1/2.
pub fn phi_coefficient<T: Real>(stat: Statistics, b: T, branch: &Branch<T>) -> PhiValue<T> {
    let half = lit::<T>(0.5);
    let one = T::one();
    let rule_sign = match stat {
        Statistics::Bose => {
            if branch.l_sq_minus_k2_sq >= T::zero() {
                one
            } else {
                -one
            }
        }
        Statistics::Fermi => {
            if branch.denominator >= T::zero() {
                one
            } else {
                -one
            }
        }
    };
    let bb = b * b;
    if bb >= one {
        let sb = if b >= T::zero() { one } else { -one };
        let q = b + sb * (bb - one).sqrt();
        let small = -half / q;
        // The printed rule agrees with the decaying root when its sign
        // matches sign(b) (or the two roots coincide at |b| = 1).
        let override_ = rule_sign != sb && bb != one;
        let value = match stat {
            Statistics::Bose => c(small, T::zero()),
            Statistics::Fermi => c(T::zero(), small),
        };
        PhiValue { value, complex_branch: false, branch_override: override_ }
    } else {
        let root = half * (one - bb).sqrt();
        match stat {
            Statistics::Bose => {
                PhiValue { value: c(-half * b, rule_sign * root), complex_branch: true, branch_override: false }
            }
            Statistics::Fermi => {
                PhiValue { value: c(rule_sign * root, -half * b), complex_branch: false, branch_override: false }
            }
        }
    }
}

/// One stored mode of the `φ` table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mode<T> {
    /// `None` where the denominator vanished (free-solution branch).
    pub b: Option<T>,
    pub phi: Complex<T>,
    pub complex_branch: bool,
    pub branch_override: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairFieldSolution<T> {
    pub statistics: Statistics,
    pub geometry: TorusGeometry<T>,
    pub units: Units<T>,
    pub k1: Index,
    pub k2: Index,
    /// Modes stored for `n1² + n2² + n3² ≤ l_max²` (index units).
    pub l_max: i64,
    pub omega: T,
    pub modes: BTreeMap<Index, Mode<T>>,
    /// Largest `|φ|` on the outermost shell `l_max - 1 < |l| ≤ l_max`.
    pub boundary_phi: T,
    pub complex_modes: usize,
    pub degenerate_modes: usize,
    pub branch_overrides: usize,
}

impl<T: Real> PairFieldSolution<T> {
    /// `φ_l`, zero outside the stored ball.
    pub fn phi(&self, l: Index) -> Complex<T> {
        self.modes.get(&l).map_or(Complex::new(T::zero(), T::zero()), |m| m.phi)
    }

    pub fn b(&self, l: Index) -> Option<T> {
        self.modes.get(&l).and_then(|m| m.b)
    }

    /// Multiplies one stored coefficient by `factor` (fault injection).
    pub fn scale_mode(&mut self, l: Index, factor: T) -> Result<()> {
        let m = self.modes.get_mut(&l).ok_or(Error::MissingCoefficient(l[0], l[1], l[2]))?;
        m.phi = m.phi * factor;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n1,n2,n3,re_phi,im_phi,b\n");
        for (l, m) in &self.modes {
            let b = m.b.map_or_else(|| "nan".to_string(), |b| format!("{b:e}"));
            out.push_str(&format!("{},{},{},{:e},{:e},{b}\n", l[0], l[1], l[2], m.phi.re, m.phi.im));
        }
        out
    }
}

/// Index ball `|n| ≤ radius`, lexicographic.
pub fn index_ball(radius: i64) -> Vec<Index> {
    let r2 = radius * radius;
    let mut out = Vec::new();
    for a in -radius..=radius {
        for b in -radius..=radius {
            for c in -radius..=radius {
                if norm2([a, b, c]) <= r2 {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn linf(i: Index) -> i64 {
    i.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Coefficient-table radius needed to solve, verify and linearize around a
/// solution with the given `l_max`.
pub fn required_table_radius(l_max: i64, k2: Index) -> i64 {
    l_max + 3 * linf(k2) + 2
}

/// Fills the `φ` table on the ball of radius `l_max`.
pub fn solve_with_coefficients<T: Real>(
    stat: Statistics,
    coeffs: &FourierCoefficients<T>,
    units: &Units<T>,
    k1: Index,
    k2: Index,
    l_max: i64,
) -> Result<PairFieldSolution<T>> {
    if k2 == [0, 0, 0] {
        return Err(Error::InvalidInput("k2 must be a nonzero lattice vector".into()));
    }
    if l_max < 1 || norm2(k2) > l_max * l_max {
        return Err(Error::InvalidInput("l_max must enclose k2".into()));
    }
    let om = omega(stat, coeffs, units, k1, k2)?;
    let g = &coeffs.geometry;
    let k2_sq = g.vector(k2).norm_sqr();
    let half = lit::<T>(0.5);
    let canon: Vec<Index> = index_ball(l_max).into_iter().filter(|&l| canonical(l)).collect();
    let computed: Vec<(Index, Mode<T>)> = canon
        .par_iter()
        .map(|&l| -> Result<(Index, Mode<T>)> {
            if l == k2 || l == neg(k2) {
                let (b, phi) = match stat {
                    Statistics::Bose => (-T::one(), c(half, T::zero())),
                    Statistics::Fermi if l == k2 => (T::one(), c(T::zero(), -half)),
                    Statistics::Fermi => (-T::one(), c(T::zero(), half)),
                };
                return Ok((l, Mode { b: Some(b), phi, complex_branch: false, branch_override: false }));
            }
            let (num, den) = b_parts(stat, coeffs, units, k2, l)?;
            let b = num / den;
            if den == T::zero() || !b.is_finite() {
                let zero = c(T::zero(), T::zero());
                return Ok((l, Mode { b: None, phi: zero, complex_branch: false, branch_override: false }));
            }
            let branch = Branch { l_sq_minus_k2_sq: g.vector(l).norm_sqr() - k2_sq, denominator: den };
            let v = phi_coefficient(stat, b, &branch);
            Ok((l, Mode { b: Some(b), phi: v.value, complex_branch: v.complex_branch, branch_override: v.branch_override }))
        })
        .collect::<Result<_>>()?;

    let mut modes = BTreeMap::new();
    for (l, m) in computed {
        let mirror = match stat {
            Statistics::Bose => m,
            Statistics::Fermi => Mode { b: m.b.map(|b| -b), phi: -m.phi, ..m },
        };
        if l != [0, 0, 0] {
            modes.insert(neg(l), mirror);
        } else if stat == Statistics::Fermi {
            // an odd table vanishes at the origin
            modes.insert(l, Mode { b: None, phi: c(T::zero(), T::zero()), complex_branch: false, branch_override: false });
            continue;
        }
        modes.insert(l, m);
    }
    if stat == Statistics::Fermi {
        // ±k2 are set exactly above and must not be overwritten by mirroring
        modes.insert(k2, Mode { b: Some(T::one()), phi: c(T::zero(), -half), complex_branch: false, branch_override: false });
        modes.insert(neg(k2), Mode { b: Some(-T::one()), phi: c(T::zero(), half), complex_branch: false, branch_override: false });
    }

    let inner = (l_max - 1) * (l_max - 1);
    let boundary_phi = modes
        .iter()
        .filter(|(l, _)| norm2(**l) > inner)
        .map(|(_, m)| m.phi.norm())
        .fold(T::zero(), T::max);
    let complex_modes = modes.values().filter(|m| m.complex_branch).count();
    let degenerate_modes = modes.values().filter(|m| m.b.is_none()).count();
    let branch_overrides = modes.values().filter(|m| m.branch_override).count();
    Ok(PairFieldSolution {
        statistics: stat,
        geometry: *g,
        units: *units,
        k1,
        k2,
        l_max,
        omega: om,
        modes,
        boundary_phi,
        complex_modes,
        degenerate_modes,
        branch_overrides,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSettings<T> {
    pub quad: QuadSettings<T>,
    pub initial_l_max: i64,
    pub max_l_max: i64,
    /// Doubling stops once the boundary `|φ|` drops below this.
    pub boundary_tolerance: T,
}

impl<T: Real> Default for SolveSettings<T> {
    fn default() -> Self {
        Self { quad: QuadSettings::default(), initial_l_max: 4, max_l_max: 64, boundary_tolerance: lit(1e-10) }
    }
}

/// Solves for the pair field, doubling `l_max` until the boundary `|φ|`
/// falls below the tolerance. Returns the solution and the coefficient
/// table it was built from.
pub fn solve_pairfield<T: Real>(
    stat: Statistics,
    geom: &TorusGeometry<T>,
    pot: &RadialPotential<T>,
    units: &Units<T>,
    k1: Index,
    k2: Index,
    settings: &SolveSettings<T>,
) -> Result<(PairFieldSolution<T>, FourierCoefficients<T>)> {
    let mut l_max = settings.initial_l_max.max(1);
    while l_max * l_max < norm2(k2) {
        l_max *= 2;
    }
    let cap = settings.max_l_max.max(l_max);
    let mut coeffs = FourierCoefficients::build(geom, pot, required_table_radius(l_max, k2), &settings.quad)?;
    loop {
        let need = required_table_radius(l_max, k2);
        if coeffs.n_max < need {
            coeffs = FourierCoefficients::build(geom, pot, required_table_radius((2 * l_max).min(cap), k2).max(need), &settings.quad)?;
        }
        let sol = solve_with_coefficients(stat, &coeffs, units, k1, k2, l_max)?;
        if sol.boundary_phi < settings.boundary_tolerance || l_max >= cap {
            return Ok((sol, coeffs));
        }
        l_max = (2 * l_max).min(cap);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport<T> {
    /// Largest mode residual of the first equation over `|l| ≤ l_max - |2k2|`.
    pub sup_residual_first: T,
    /// Largest residual of the second equation (the two `Φ⁺` harmonics).
    pub sup_residual_second: T,
    /// `|∫∫Φ⁺Φ|`, expected to be 1/2.
    pub normalization_magnitude: T,
    pub omega_consistency: T,
    /// Largest first-equation residual on the shell just outside `l_max`,
    /// where the truncated series is zero.
    pub truncation_residual: T,
    pub boundary_phi: T,
    pub truncation_dominated: bool,
    pub modes_checked: usize,
}

fn mode_residual<T: Real>(
    sol: &PairFieldSolution<T>,
    coeffs: &FourierCoefficients<T>,
    w: &[Complex<T>; 2],
    l: Index,
) -> Result<T> {
    let g = &coeffs.geometry;
    let s: T = sol.statistics.exchange_sign();
    let two = lit::<T>(2.0);
    let kin = sol.units.hbar2_over_m() * (g.vector(sol.k1).norm_sqr() + g.vector(l).norm_sqr());
    let phi_l = sol.phi(l);
    let phi_ml = sol.phi(neg(l));
    let mut inter = Complex::new(T::zero(), T::zero());
    for sigma in [1i64, -1] {
        let cs = weight(w, sigma);
        let sk = scale(sol.k2, sigma);
        let v = coeffs.get(sub(l, sk))?;
        inter = inter + cs * sol.phi(sk) * sol.phi(neg(sk)) * v + cs * phi_l * phi_ml * v;
    }
    Ok((phi_l * (kin - sol.omega) + inter * (two * s)).norm())
}

/// Residual of the first equation at a single mode.
pub fn residual_at<T: Real>(sol: &PairFieldSolution<T>, coeffs: &FourierCoefficients<T>, l: Index) -> Result<T> {
    mode_residual(sol, coeffs, &harmonic_weights(sol.statistics), l)
}

/// `∫∫Φ⁺Φ` in Fourier space: `Σ_σ c_σ φ_{-σk2}`.
pub fn normalization<T: Real>(sol: &PairFieldSolution<T>) -> Complex<T> {
    let w = harmonic_weights::<T>(sol.statistics);
    w[0] * sol.phi(neg(sol.k2)) + w[1] * sol.phi(sol.k2)
}

pub fn normalization_check<T: Real>(sol: &PairFieldSolution<T>) -> T {
    normalization(sol).norm()
}

/// Substitutes the solution into both equations of the Hamiltonian system.
pub fn hamiltonian_residual<T: Real>(
    sol: &PairFieldSolution<T>,
    coeffs: &FourierCoefficients<T>,
    boundary_tolerance: T,
) -> Result<ResidualReport<T>> {
    let w = harmonic_weights::<T>(sol.statistics);
    let k2n = (norm2(scale(sol.k2, 2)) as f64).sqrt();
    let r_in = sol.l_max as f64 - k2n;
    let inner: Vec<Index> =
        sol.modes.keys().copied().filter(|&l| (norm2(l) as f64).sqrt() <= r_in + 1e-9).collect();
    let first = inner
        .par_iter()
        .map(|&l| mode_residual(sol, coeffs, &w, l))
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .fold(T::zero(), T::max);

    let outer = sol.l_max + linf(sol.k2) + 1;
    let shell: Vec<Index> = index_ball(outer)
        .into_iter()
        .filter(|&l| norm2(l) > sol.l_max * sol.l_max && coeffs.get(add(l, sol.k2)).is_ok() && coeffs.get(sub(l, sol.k2)).is_ok())
        .collect();
    let truncation = shell
        .par_iter()
        .map(|&l| mode_residual(sol, coeffs, &w, l))
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .fold(T::zero(), T::max);

    // second equation, harmonics μ = ±1
    let g = &coeffs.geometry;
    let s: T = sol.statistics.exchange_sign();
    let two = lit::<T>(2.0);
    let kin2 = sol.units.hbar2_over_m() * (g.vector(sol.k1).norm_sqr() + g.vector(sol.k2).norm_sqr());
    let mut second = T::zero();
    for mu in [1i64, -1] {
        let mut s1 = Complex::new(T::zero(), T::zero());
        let mut s2 = Complex::new(T::zero(), T::zero());
        for sigma in [1i64, -1] {
            s1 = s1 + weight(&w, sigma) * coeffs.get(scale(sol.k2, mu - sigma))?;
            s2 = s2 + weight(&w, sigma) * coeffs.get(scale(sol.k2, mu + sigma))?;
        }
        let n = sol.phi(scale(sol.k2, mu)) * (weight(&w, -mu) * s1 + weight(&w, mu) * s2) * (two * s);
        let r = weight(&w, mu) * (sol.omega - kin2) - n;
        second = second.max(r.norm());
    }

    let om = omega(sol.statistics, coeffs, &sol.units, sol.k1, sol.k2)?;
    Ok(ResidualReport {
        sup_residual_first: first,
        sup_residual_second: second,
        normalization_magnitude: normalization_check(sol),
        omega_consistency: (sol.omega - om).abs(),
        truncation_residual: truncation,
        boundary_phi: sol.boundary_phi,
        truncation_dominated: sol.boundary_phi > boundary_tolerance,
        modes_checked: inner.len(),
    })
}

/// Continuum limit of the pair-field coefficients for a given `V0`.
///
/// Returns `b⁰ = ħ²(l²-k2²)/(2mV0) - 1` and `φ⁰ = -b⁰/2 ± ½√(b⁰²-1)`. The sign
/// is `+` for `l² > k2²` and `-` otherwise when `V0 > 0`; for `V0 < 0` it is
/// reversed so that the result is the same branch as [`phi0_closed_form`].
pub fn limiting_coefficients<T: Real>(
    k2: &Vec3<T>,
    l: &Vec3<T>,
    v0: T,
    units: &Units<T>,
) -> Result<(T, Complex<T>)> {
    if v0 == T::zero() || !v0.is_finite() {
        return Err(Error::InvalidInput("V0 must be finite and nonzero".into()));
    }
    let diff = l.norm_sqr() - k2.norm_sqr();
    let b0 = units.kinetic(diff) / v0 - T::one();
    let mut sign = if diff > T::zero() { T::one() } else { -T::one() };
    if v0 < T::zero() {
        sign = -sign;
    }
    let half = lit::<T>(0.5);
    let root = Complex::new(b0 * b0 - T::one(), T::zero()).sqrt();
    Ok((b0, Complex::new(-half * b0, T::zero()) + root * (sign * half)))
}

/// `φ⁰ = (A' + V0 ± √((A' + V0)² - V0²)) / (2V0)` with `A' = ħ²(k2²-l²)/2m`,
/// plus sign for `l² > k2²`.
pub fn phi0_closed_form<T: Real>(k2: &Vec3<T>, l: &Vec3<T>, v0: T, units: &Units<T>) -> Result<Complex<T>> {
    if v0 == T::zero() || !v0.is_finite() {
        return Err(Error::InvalidInput("V0 must be finite and nonzero".into()));
    }
    let diff = l.norm_sqr() - k2.norm_sqr();
    let a = units.kinetic(-diff) + v0;
    let sign = if diff > T::zero() { T::one() } else { -T::one() };
    let root = Complex::new(a * a - v0 * v0, T::zero()).sqrt();
    Ok((Complex::new(a, T::zero()) + root * sign) / (v0 + v0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport<T> {
    /// Leading energy `E`.
    pub energy: T,
    /// Symbol functional evaluated on the stored Fourier data.
    pub symbol: T,
    /// `N·H - E`.
    pub deviation: T,
    /// `(N·H - E)/E`, or the absolute deviation when `E = 0`.
    pub relative_deviation: T,
}

/// Discrete symbol `H = ∫∫Φ⁺(-ħ²Δ/2m)Φ + 2∫⁴ W Φ⁺Φ⁺ΦΦ` on the solution.
pub fn symbol_value<T: Real>(sol: &PairFieldSolution<T>, coeffs: &FourierCoefficients<T>) -> Result<T> {
    let g = &coeffs.geometry;
    let w = harmonic_weights::<T>(sol.statistics);
    let kin = sol.units.hbar2_over_m() * (g.vector(sol.k1).norm_sqr() + g.vector(sol.k2).norm_sqr());
    let s: T = sol.statistics.exchange_sign();
    let mut inter = Complex::new(T::zero(), T::zero());
    for tau in [1i64, -1] {
        for sigma in [1i64, -1] {
            let sk = scale(sol.k2, sigma);
            inter = inter
                + weight(&w, tau) * weight(&w, sigma) * sol.phi(sk) * sol.phi(neg(sk))
                    * coeffs.get(scale(sol.k2, tau + sigma))?;
        }
    }
    let h = normalization(sol) * kin + inter * (lit::<T>(2.0) * s);
    Ok(h.re)
}

/// Leading energy `E = N(ħ²(k1²+k2²)/2m + V0/2)` for bosons; the fermionic
/// interaction term `(v_{2k2} - v0)/4` vanishes in the limit, leaving the
/// kinetic part.
pub fn energy_leading<T: Real>(
    sol: &PairFieldSolution<T>,
    coeffs: &FourierCoefficients<T>,
    v0: T,
) -> Result<EnergyReport<T>> {
    let g = &sol.geometry;
    let kin = sol.units.kinetic(g.vector(sol.k1).norm_sqr() + g.vector(sol.k2).norm_sqr());
    let per = match sol.statistics {
        Statistics::Bose => kin + v0 * lit(0.5),
        Statistics::Fermi => kin,
    };
    let energy = g.n * per;
    let symbol = symbol_value(sol, coeffs)?;
    let deviation = g.n * symbol - energy;
    let relative_deviation = if energy != T::zero() { deviation / energy.abs() } else { deviation.abs() };
    Ok(EnergyReport { energy, symbol, deviation, relative_deviation })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSettings<T> {
    pub quad: QuadSettings<T>,
    /// Head of the series: `|l| ≤ N^{head_exponent}`.
    pub head_exponent: T,
    /// Tail window: `N^{head_exponent} < |l| ≤ tail_window · N^{head_exponent}`.
    pub tail_window: T,
}

impl<T: Real> Default for ConvergenceSettings<T> {
    fn default() -> Self {
        Self { quad: QuadSettings::default(), head_exponent: lit(1.0 / 6.0), tail_window: lit(4.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow<T> {
    pub n: T,
    pub head_radius: T,
    pub head_modes: usize,
    pub head_deviation: T,
    pub tail_sup: T,
    pub tail_sum: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport<T> {
    pub statistics: Statistics,
    pub rows: Vec<ConvergenceRow<T>>,
    /// Fitted `d log(metric) / d log N`; absent when a metric vanishes.
    pub head_exponent: Option<T>,
    pub tail_sup_exponent: Option<T>,
    pub tail_sum_exponent: Option<T>,
    /// Rate stated for the tail of the series.
    pub claimed_tail_exponent: T,
    pub head_decreasing: bool,
    pub tail_sup_decreasing: bool,
}

fn fitted_exponent<T: Real>(n: &[T], y: &[T]) -> Option<T> {
    if y.iter().any(|&v| !(v > T::zero())) || n.len() < 2 {
        return None;
    }
    let x: Vec<T> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    fit_line(&x, &ly).ok().map(|f| f.coefficients[1])
}

fn non_increasing<T: Real>(y: &[T]) -> bool {
    y.windows(2).all(|w| w[1] < w[0] || (w[0] == T::zero() && w[1] == T::zero()))
}

/// Pair-field coefficients on the transverse lattice `l = (0, n2, n3)` with
/// `k1 = 0`, compared with their `N → ∞` limits across a sequence of
/// particle numbers in a fixed box.
pub fn convergence_study<T: Real>(
    stat: Statistics,
    l1: T,
    l2: T,
    pot: &RadialPotential<T>,
    units: &Units<T>,
    k2: [i64; 2],
    ns: &[T],
    settings: &ConvergenceSettings<T>,
) -> Result<ConvergenceReport<T>> {
    if ns.len() < 2 {
        return Err(Error::InvalidInput("convergence study needs at least two particle numbers".into()));
    }
    if k2 == [0, 0] {
        return Err(Error::InvalidInput("k2 must be a nonzero lattice vector".into()));
    }
    let k2i: Index = [0, k2[0], k2[1]];
    let v0_cont = transform_at(pot, T::zero(), &settings.quad)?.value;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let geom = TorusGeometry::new(l1, l2, n)?;
        geom.check_contains(pot)?;
        let vol = geom.volume();
        let big_v0 = v0_cont / vol;
        let head_r = n.powf(settings.head_exponent);
        let tail_r = head_r * settings.tail_window;
        // lattice radius in index units (transverse spacing 2π/L2)
        let unit = (T::PI() + T::PI()) / l2;
        let r_idx = (to_f64(tail_r / unit)).ceil() as i64 + 1;
        let k2n = k2[0].abs().max(k2[1].abs());
        let reach = r_idx + 2 * k2n + 1;
        let mut keys: Vec<i64> = Vec::new();
        for a in -reach..=reach {
            for b in -reach..=reach {
                if a * a + b * b <= reach * reach {
                    keys.push(a * a + b * b);
                }
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let s = geom.scale();
        let vals: Vec<T> = keys
            .par_iter()
            .map(|&k| transform_at(pot, unit * from_i64::<T>(k).sqrt() / s, &settings.quad).map(|e| e.value / vol))
            .collect::<Result<_>>()?;
        let lookup = |i: Index| -> Result<T> {
            let k = i[1] * i[1] + i[2] * i[2];
            match keys.binary_search(&k) {
                Ok(j) if i[0] == 0 => Ok(vals[j]),
                _ => Err(Error::MissingCoefficient(i[0], i[1], i[2])),
            }
        };
        let sol_modes: Vec<Index> = {
            let mut m = Vec::new();
            for a in -r_idx..=r_idx {
                for b in -r_idx..=r_idx {
                    if a * a + b * b <= r_idx * r_idx {
                        m.push([0, a, b]);
                    }
                }
            }
            m
        };
        let half = lit::<T>(0.5);
        let k2v = geom.vector(k2i);
        let entries: Vec<(T, T, T)> = sol_modes
            .par_iter()
            .map(|&l| -> Result<(T, T, T)> {
                let lv = geom.vector(l);
                let len = lv.norm();
                let phi = if l == k2i || l == neg(k2i) {
                    match stat {
                        Statistics::Bose => c(half, T::zero()),
                        Statistics::Fermi if l == k2i => c(T::zero(), -half),
                        Statistics::Fermi => c(T::zero(), half),
                    }
                } else {
                    let (num, den) = b_parts_with(stat, &geom, units, k2i, l, lookup)?;
                    let b = num / den;
                    if den == T::zero() || !b.is_finite() {
                        c(T::zero(), T::zero())
                    } else {
                        let br = Branch { l_sq_minus_k2_sq: lv.norm_sqr() - k2v.norm_sqr(), denominator: den };
                        phi_coefficient(stat, b, &br).value
                    }
                };
                let limit = if l == k2i || l == neg(k2i) {
                    phi
                } else {
                    match stat {
                        Statistics::Bose if big_v0 != T::zero() => limiting_coefficients(&k2v, &lv, big_v0, units)?.1,
                        _ => c(T::zero(), T::zero()),
                    }
                };
                Ok((len, (phi - limit).norm(), phi.norm()))
            })
            .collect::<Result<_>>()?;
        let mut head_dev = T::zero();
        let mut head_modes = 0;
        let mut tail_sup = T::zero();
        let mut tail = Vec::new();
        for (len, dev, mag) in entries {
            if len <= head_r {
                head_dev = head_dev.max(dev);
                head_modes += 1;
            } else if len <= tail_r {
                tail_sup = tail_sup.max(mag);
                tail.push(mag);
            }
        }
        tail.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let tail_sum = crate::scalar::sum_compensated(tail);
        rows.push(ConvergenceRow { n, head_radius: head_r, head_modes, head_deviation: head_dev, tail_sup, tail_sum });
    }
    let n: Vec<T> = rows.iter().map(|r| r.n).collect();
    let head: Vec<T> = rows.iter().map(|r| r.head_deviation).collect();
    let sup: Vec<T> = rows.iter().map(|r| r.tail_sup).collect();
    let sum: Vec<T> = rows.iter().map(|r| r.tail_sum).collect();
    Ok(ConvergenceReport {
        statistics: stat,
        head_exponent: fitted_exponent(&n, &head),
        tail_sup_exponent: fitted_exponent(&n, &sup),
        tail_sum_exponent: fitted_exponent(&n, &sum),
        claimed_tail_exponent: lit(-1.0 / 6.0),
        head_decreasing: non_increasing(&head),
        tail_sup_decreasing: non_increasing(&sup),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_table(n_max: i64) -> FourierCoefficients<f64> {
        FourierCoefficients::from_fn(&TorusGeometry::unit(), n_max, 0.0, |_| 0.0).unwrap()
    }

    fn bose_branch(d: f64) -> Branch<f64> {
        Branch { l_sq_minus_k2_sq: d, denominator: 1.0 }
    }

    #[test]
    fn phi_examples() {
        let v = phi_coefficient(Statistics::Bose, -1.0, &bose_branch(0.0));
        assert_eq!(v.value, Complex::new(0.5, 0.0));
        let v = phi_coefficient(Statistics::Fermi, 1.0, &bose_branch(0.0));
        assert_eq!(v.value, Complex::new(0.0, -0.5));
        let v = phi_coefficient(Statistics::Bose, 2.0, &bose_branch(1.0));
        assert!((v.value.re - (-1.0 + 3f64.sqrt() / 2.0)).abs() < 1e-15);
        assert!(!v.branch_override);
    }

    #[test]
    fn phi_solves_its_quadratic() {
        for &b in &[-7.5, -1.3, -0.4, 0.0, 0.9, 1.0, 3.0, 1e6] {
            for &d in &[-1.0, 1.0] {
                let bose = phi_coefficient(Statistics::Bose, b, &bose_branch(d)).value;
                let r = bose * bose + bose * b + 0.25;
                assert!(r.norm() < 1e-14, "bose b={b}: {r}");
                let fermi = phi_coefficient(Statistics::Fermi, b, &Branch { l_sq_minus_k2_sq: 0.0, denominator: d }).value;
                let r = fermi * fermi + Complex::new(0.0, b) * fermi - 0.25;
                assert!(r.norm() < 1e-14, "fermi b={b}: {r}");
                assert!(bose.norm() <= 0.5 + 1e-15 && fermi.norm() <= 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn branch_continuous_at_minus_one() {
        let below = phi_coefficient(Statistics::Bose, -1.0 - 1e-12, &bose_branch(-1.0)).value;
        let above = phi_coefficient(Statistics::Bose, -1.0 + 1e-12, &bose_branch(1.0)).value;
        assert!((below - 0.5).norm() < 1e-5 && (above - 0.5).norm() < 1e-5);
    }

    #[test]
    fn zero_potential_is_free_pair() {
        let t = zero_table(12);
        let u = Units::default();
        for stat in [Statistics::Bose, Statistics::Fermi] {
            assert_eq!(b_coefficient(stat, &t, &u, [0, 1, 0], [1, 2, 0]), Err(Error::DegenerateDenominator));
            let sol = solve_with_coefficients(stat, &t, &u, [1, 0, 0], [0, 1, 0], 6).unwrap();
            assert_eq!(sol.omega, 2.0);
            let support: Vec<_> = sol.modes.iter().filter(|(_, m)| m.phi.norm() != 0.0).map(|(l, _)| *l).collect();
            assert_eq!(support, vec![[0, -1, 0], [0, 1, 0]]);
            let rep = hamiltonian_residual(&sol, &t, 1e-10).unwrap();
            assert_eq!(rep.sup_residual_first, 0.0);
            assert_eq!(rep.sup_residual_second, 0.0);
            assert_eq!(rep.normalization_magnitude, 0.5);
            let e = energy_leading(&sol, &t, 0.0).unwrap();
            assert_eq!(e.energy, 1.0);
            assert_eq!(e.deviation, 0.0);
        }
    }

    #[test]
    fn limiting_examples() {
        let u = Units::<f64>::default();
        let k2 = Vec3::new(0.0, 1.0, 0.0);
        // A = ħ²(l²-k2²)/2m = 3 V0 with V0 = 0.5: l² = 4
        let l = Vec3::new(0.0, 2.0, 0.0);
        let (b0, p0) = limiting_coefficients(&k2, &l, 0.5, &u).unwrap();
        assert!((b0 - 2.0).abs() < 1e-15);
        assert!((p0.re - (-1.0 + 3f64.sqrt() / 2.0)).abs() < 1e-15);
        let (b0, p0) = limiting_coefficients(&k2, &Vec3::new(0.0, 0.0, 1.0), 0.5, &u).unwrap();
        assert_eq!((b0, p0), (-1.0, Complex::new(0.5, 0.0)));
        // A = -3 V0: b⁰ = -4, minus branch 2 - √15/2
        let l = Vec3::new(0.0, 0.0, 0.0);
        let (b0, p0) = limiting_coefficients(&Vec3::new(0.0, 3f64.sqrt(), 0.0), &l, 0.5, &u).unwrap();
        assert!((b0 + 4.0).abs() < 1e-14);
        assert!((p0.re - (2.0 - 15f64.sqrt() / 2.0)).abs() < 1e-14);
        let closed = phi0_closed_form(&Vec3::new(0.0, 3f64.sqrt(), 0.0), &l, 0.5, &u).unwrap();
        assert!((closed - p0).norm() < 1e-14);
    }

    #[test]
    fn energy_formula() {
        // ħ = m = 1, k1² + k2² = 1, V0 = 0.2, N = 1000
        let geom = TorusGeometry::new(2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI, 1000.0).unwrap();
        let t = FourierCoefficients::from_fn(&geom, 4, 0.2, |_| 0.2).unwrap();
        let sol = solve_with_coefficients(Statistics::Bose, &t, &Units::default(), [0, 0, 0], [0, 1, 0], 3).unwrap();
        let e = energy_leading(&sol, &t, 0.2).unwrap();
        assert!((e.energy - 600.0).abs() < 1e-12);
        assert!(e.deviation.abs() < 1e-10);
    }
}
