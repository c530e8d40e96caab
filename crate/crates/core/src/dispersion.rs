//! The two dispersion laws, Landau-curve features and the critical velocity.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lsq::fit_powers;
pub use crate::potentials::sound_slope_prediction;
use crate::potentials::{RadialPotential, RadialSpectrum, SoundSlopePrediction, KAPPA};
use crate::scalar::{from_usize, lit, Real};
use crate::torus::FourierCoefficients;
use crate::units::{Statistics, Units};
use crate::vec3::Vec3;

/// `ε(p)`, with the bosonic instability flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Epsilon<T> {
    /// `√|radicand|` for bosons, the modulus for fermions.
    pub value: T,
    /// Bose radicand negative: `ε` is imaginary with modulus `value`.
    pub unstable: bool,
}

/// `√((ħ²p²/2m + Ṽ)² - Ṽ²)` for a given `Ṽ = Ṽ(p)`.
pub fn epsilon_bose_value<T: Real>(units: &Units<T>, p: T, v: T) -> Epsilon<T> {
    let e = units.kinetic(p * p);
    // (e + v)² - v² = e(e + 2v), free of cancellation
    let rad = e * (e + v + v);
    Epsilon { value: rad.abs().sqrt(), unstable: rad < T::zero() }
}

/// `|ħ²p²/2m + Ṽ(p) - Ṽ(0)|`.
pub fn epsilon_fermi_value<T: Real>(units: &Units<T>, p: T, v: T, v0: T) -> T {
    (units.kinetic(p * p) + v - v0).abs()
}

pub fn epsilon_bose<T: Real>(units: &Units<T>, p: T, spec: &RadialSpectrum<T>) -> Result<Epsilon<T>> {
    if !(p >= T::zero()) {
        return Err(Error::InvalidInput("momentum must be nonnegative".into()));
    }
    Ok(epsilon_bose_value(units, p, spec.eval(p)?))
}

pub fn epsilon_fermi<T: Real>(units: &Units<T>, p: T, spec: &RadialSpectrum<T>) -> Result<T> {
    if !(p >= T::zero()) {
        return Err(Error::InvalidInput("momentum must be nonnegative".into()));
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    Ok(epsilon_fermi_value(units, p, spec.eval(p)?, spec.value_at_zero()))
}

pub fn epsilon<T: Real>(stat: Statistics, units: &Units<T>, p: T, spec: &RadialSpectrum<T>) -> Result<Epsilon<T>> {
    match stat {
        Statistics::Bose => epsilon_bose(units, p, spec),
        Statistics::Fermi => Ok(Epsilon { value: epsilon_fermi(units, p, spec)?, unstable: false }),
    }
}

/// `λ = -ħ²(p·v) + ε(|p|)`.
pub fn lambda_full<T: Real>(
    p: &Vec3<T>,
    v: &Vec3<T>,
    stat: Statistics,
    units: &Units<T>,
    spec: &RadialSpectrum<T>,
) -> Result<Epsilon<T>> {
    let e = epsilon(stat, units, p.norm(), spec)?;
    Ok(Epsilon { value: e.value - units.hbar * units.hbar * p.dot(v), unstable: e.unstable })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionCurve<T> {
    pub statistics: Statistics,
    pub units: Units<T>,
    pub p_grid: Vec<T>,
    pub epsilon: Vec<T>,
    pub unstable: Vec<bool>,
    /// Drift velocity; the momentum is taken parallel to it.
    pub velocity: Option<Vec3<T>>,
    pub lambda: Option<Vec<T>>,
}

impl<T: Real> DispersionCurve<T> {
    pub fn new(
        stat: Statistics,
        units: &Units<T>,
        spec: &RadialSpectrum<T>,
        p_grid: &[T],
        velocity: Option<Vec3<T>>,
    ) -> Result<Self> {
        if p_grid.is_empty() {
            return Err(Error::InvalidInput("momentum grid is empty".into()));
        }
        let eps = p_grid.iter().map(|&p| epsilon(stat, units, p, spec)).collect::<Result<Vec<_>>>()?;
        let lambda = velocity.map(|v| {
            let speed = v.norm();
            p_grid.iter().zip(&eps).map(|(&p, e)| e.value - units.hbar * units.hbar * p * speed).collect()
        });
        Ok(Self {
            statistics: stat,
            units: *units,
            p_grid: p_grid.to_vec(),
            epsilon: eps.iter().map(|e| e.value).collect(),
            unstable: eps.iter().map(|e| e.unstable).collect(),
            velocity,
            lambda,
        })
    }

    /// `ε/(ħ²p²/2m)` at the largest grid point.
    pub fn large_p_ratio(&self) -> T {
        let p = *self.p_grid.last().unwrap();
        *self.epsilon.last().unwrap() / self.units.kinetic(p * p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,epsilon");
        if self.lambda.is_some() {
            out.push_str(",lambda");
        }
        if self.statistics == Statistics::Bose {
            out.push_str(",unstable");
        }
        out.push('\n');
        for i in 0..self.p_grid.len() {
            out.push_str(&format!("{:e},{:e}", self.p_grid[i], self.epsilon[i]));
            if let Some(l) = &self.lambda {
                out.push_str(&format!(",{:e}", l[i]));
            }
            if self.statistics == Statistics::Bose {
                out.push_str(if self.unstable[i] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_min<T: Real, F: FnMut(T) -> T>(mut f: F, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = (lit::<T>(5.0).sqrt() - T::one()) * lit(0.5);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Feature<T> {
    pub p: T,
    pub eps: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandauFeatures<T> {
    pub sound_slope: T,
    pub maxon: Option<Feature<T>>,
    pub roton: Option<Feature<T>>,
    pub maxima: Vec<Feature<T>>,
    pub minima: Vec<Feature<T>>,
    /// Runs where the sampled derivative vanishes identically.
    pub plateaus: usize,
    pub critical_velocity: T,
    pub predicted_slope: Option<T>,
    pub predicted_positive: Option<bool>,
    /// `sound_slope / predicted_slope`.
    pub slope_ratio: Option<T>,
    /// Bose phonon slope `ħ√(Ṽ(0)/m)` when `Ṽ(0) > 0`.
    pub phonon_slope: Option<T>,
    pub kappa: T,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureSettings<T> {
    /// Curve points used by the small-`p` slope fit when the spectrum has
    /// too few nodes in the window.
    pub slope_points: usize,
    /// Golden-section tolerance in `p`.
    pub tolerance: T,
}

impl<T: Real> Default for FeatureSettings<T> {
    fn default() -> Self {
        Self { slope_points: 8, tolerance: lit(1e-8) }
    }
}

/// Sound slope, interior extrema and critical velocity of a curve. The
/// extrema are bracketed by sign changes of the centered difference and
/// refined by golden section on the interpolated spectrum.
pub fn landau_features<T: Real>(
    curve: &DispersionCurve<T>,
    spec: &RadialSpectrum<T>,
    pot: Option<&RadialPotential<T>>,
    settings: &FeatureSettings<T>,
) -> Result<LandauFeatures<T>> {
    let n = curve.p_grid.len();
    if n < 5 {
        return Err(Error::InvalidInput("feature extraction needs at least five grid points".into()));
    }
    let units = curve.units;
    let stat = curve.statistics;
    let eval = |p: T| epsilon(stat, &units, p, spec).map(|e| e.value).unwrap_or(T::nan());

    // small-p slope from ε = s p + c p² + d p³, fitted on the exact spectrum
    // nodes below the first feature (the interpolant is
    // even at the origin and would flatten a linear onset)
    let sound_slope = |window: T| -> Result<T> {
        let (np, _) = spec.nodes();
        let mut xs: Vec<T> = np.iter().copied().filter(|&p| p > T::zero() && p <= window).collect();
        if xs.len() < 4 {
            xs = curve.p_grid.iter().copied().filter(|&p| p > T::zero()).take(settings.slope_points).collect();
        }
        let ys = xs.iter().map(|&p| epsilon(stat, &units, p, spec).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
        Ok(fit_powers(&xs, &ys, &[T::one(), lit(2.0), lit(3.0)])?.coefficients[0])
    };

    // centered-difference sign changes
    let mut deriv = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        deriv.push((curve.epsilon[i + 1] - curve.epsilon[i - 1]) / (curve.p_grid[i + 1] - curve.p_grid[i - 1]));
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let mut plateaus = 0;
    let mut i = 0;
    while i + 1 < deriv.len() {
        let (d0, d1) = (deriv[i], deriv[i + 1]);
        if d1 == T::zero() {
            // a run of zero derivative: plateau
            let mut j = i + 1;
            while j < deriv.len() && deriv[j] == T::zero() {
                j += 1;
            }
            if j - i > 2 {
                plateaus += 1;
            }
            i = j;
            continue;
        }
        if d0 > T::zero() && d1 < T::zero() || d0 < T::zero() && d1 > T::zero() {
            // grid indices i+1, i+2 carry the two derivatives; bracket wide
            let a = curve.p_grid[i];
            let b = curve.p_grid[(i + 3).min(n - 1)];
            if d0 > T::zero() {
                let (p, e) = golden_min(|p| -eval(p), a, b, settings.tolerance);
                maxima.push(Feature { p, eps: -e });
            } else {
                let (p, e) = golden_min(eval, a, b, settings.tolerance);
                minima.push(Feature { p, eps: e });
            }
        }
        i += 1;
    }
    let p_max = *curve.p_grid.last().unwrap();
    let first = maxima.iter().chain(&minima).map(|f| f.p).fold(p_max, T::min);
    let sound_slope = sound_slope((first * lit(0.25)).min(p_max * lit(0.02)))?;
    let maxon = maxima.first().copied();
    let roton = maxon.and_then(|m| minima.iter().find(|r| r.p > m.p).copied());

    let grid: Vec<T> = curve.p_grid.iter().copied().filter(|p| *p > T::zero()).collect();
    let crit = critical_velocity_continuum(stat, &units, |p| spec.eval(p), spec.value_at_zero(), &grid, settings.tolerance)?;

    // the linear law ε ≈ |Ṽ'(0)| p belongs to the fermi curve only
    let pred: Option<SoundSlopePrediction<T>> =
        pot.filter(|_| stat == Statistics::Fermi).and_then(|p| sound_slope_prediction(p).ok());
    let predicted_slope = pred.as_ref().map(|p| p.c);
    Ok(LandauFeatures {
        sound_slope,
        monotone: maxima.is_empty() && minima.is_empty(),
        maxon,
        roton,
        maxima,
        minima,
        plateaus,
        critical_velocity: crit.value,
        predicted_positive: pred.as_ref().map(|p| p.positive),
        slope_ratio: predicted_slope.and_then(|c| if c != T::zero() { Some(sound_slope / c) } else { None }),
        predicted_slope,
        phonon_slope: (stat == Statistics::Bose && spec.value_at_zero() > T::zero())
            .then(|| (spec.value_at_zero() * units.hbar2_over_m()).sqrt()),
        kappa: lit(KAPPA),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalVelocity<T> {
    pub value: T,
    /// Minimizing `|l|` (lattice) or `p` (continuum).
    pub argmin: T,
}

/// `(m/ħ²) ε(p)/p` for either statistics given `Ṽ(p) - Ṽ(0)` and `Ṽ(p)`.
fn landau_ratio<T: Real>(stat: Statistics, units: &Units<T>, p: T, v: T, v0: T) -> T {
    let c = units.hbar2_over_m();
    match stat {
        // |(v - v0)/|l| + ħ²|l|/2m| (m/ħ²), written so the free case is exact
        Statistics::Fermi => ((v - v0) / (p * c) + p * lit(0.5)).abs(),
        Statistics::Bose => {
            let e = epsilon_bose_value(units, p, v);
            if e.unstable {
                T::zero()
            } else {
                e.value / p / c
            }
        }
    }
}

/// `(m/ħ²) min_l |(v_l - v0)/|l| + ħ²|l|/2m|` over every nonzero entry of
/// a coefficient table (fermi); for bosons the Landau ratio `ε_bose/|l|`.
pub fn critical_velocity_lattice<T: Real>(
    stat: Statistics,
    units: &Units<T>,
    coeffs: &FourierCoefficients<T>,
) -> Result<CriticalVelocity<T>> {
    let v0 = coeffs.v0();
    let mut best: Option<CriticalVelocity<T>> = None;
    for (i, v) in coeffs.entries() {
        if i == [0, 0, 0] {
            continue;
        }
        let p = coeffs.geometry.vector(i).norm();
        let value = landau_ratio(stat, units, p, v, v0);
        let better = match best {
            None => true,
            Some(b) => value < b.value || (value == b.value && p < b.argmin),
        };
        if better {
            best = Some(CriticalVelocity { value, argmin: p });
        }
    }
    best.ok_or(Error::EmptyLattice)
}

/// Continuum criterion on `(0, p_max]`: coarse scan of `grid`, then golden
/// refinement in the cells around every sampled local minimum.
pub fn critical_velocity_continuum<T: Real, V: Fn(T) -> Result<T>>(
    stat: Statistics,
    units: &Units<T>,
    v_of_p: V,
    v0: T,
    grid: &[T],
    tolerance: T,
) -> Result<CriticalVelocity<T>> {
    let grid: Vec<T> = grid.iter().copied().filter(|p| *p > T::zero()).collect();
    if grid.is_empty() {
        return Err(Error::EmptyLattice);
    }
    let f = |p: T| -> T { v_of_p(p).map(|v| landau_ratio(stat, units, p, v, v0)).unwrap_or(T::infinity()) };
    let vals: Vec<T> = grid.iter().map(|&p| f(p)).collect();
    let mut best = CriticalVelocity { value: T::infinity(), argmin: grid[0] };
    for (i, &v) in vals.iter().enumerate() {
        if v < best.value {
            best = CriticalVelocity { value: v, argmin: grid[i] };
        }
    }
    for i in 0..grid.len() {
        let left = if i == 0 { T::infinity() } else { vals[i - 1] };
        let right = if i + 1 == grid.len() { T::infinity() } else { vals[i + 1] };
        if vals[i] <= left && vals[i] <= right {
            // the infimum may sit at p → 0⁺, below the first sample
            let a = if i == 0 { grid[0] * lit(1e-9) } else { grid[i - 1] };
            let b = if i + 1 == grid.len() { grid[i] } else { grid[i + 1] };
            if b > a {
                let (p, v) = golden_min(f, a, b, tolerance);
                if v < best.value {
                    best = CriticalVelocity { value: v, argmin: p };
                }
            }
        }
    }
    Ok(best)
}

/// Dense brute-force minimum of the continuum criterion on `count` uniform
/// points of `(0, p_max]`.
pub fn critical_velocity_brute<T: Real, V: Fn(T) -> Result<T>>(
    stat: Statistics,
    units: &Units<T>,
    v_of_p: V,
    v0: T,
    p_max: T,
    count: usize,
) -> Result<CriticalVelocity<T>> {
    if count == 0 || !(p_max > T::zero()) {
        return Err(Error::EmptyLattice);
    }
    let mut best = CriticalVelocity { value: T::infinity(), argmin: p_max };
    for i in 1..=count {
        let p = p_max * from_usize::<T>(i) / from_usize::<T>(count);
        let v = landau_ratio(stat, units, p, v_of_p(p)?, v0);
        if v < best.value {
            best = CriticalVelocity { value: v, argmin: p };
        }
    }
    Ok(best)
}

/// Uniform grid of `count` points on `[0, p_max]`.
pub fn uniform_grid<T: Real>(p_max: T, count: usize) -> Vec<T> {
    if count < 2 {
        return vec![T::zero(); count.min(1)];
    }
    (0..count).map(|i| p_max * from_usize::<T>(i) / from_usize::<T>(count - 1)).collect()
}
