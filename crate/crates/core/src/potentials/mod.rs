//! Radial pair potentials, their three-dimensional Fourier transforms and
//! the tail asymptotics linking the two.

mod asymptotics;
mod spec;
mod transform;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub use asymptotics::{
    nonanalytic_exponent, sound_slope_prediction, spectrum_slope_at_zero, tail_limit_r4,
    verify_general_position, ExponentFit, SlopeFit, SoundSlopePrediction, TailLimit, TheoremReport,
    TheoremSettings, KAPPA,
};
pub use spec::potential_from_json;
pub use transform::{fourier_transform, transform_at, inverse_transform, InverseSettings, RadialSpectrum};

/// Tabulated profile: local cubic interpolation in `r`, clamped below the
/// first knot and zero beyond the last.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableProfile<T> {
    pub r: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> TableProfile<T> {
    pub fn new(r: Vec<T>, v: Vec<T>) -> Result<Self> {
        if r.len() < 4 || r.len() != v.len() {
            return Err(Error::InvalidInput("table needs at least 4 matching (r, V) rows".into()));
        }
        if r[0] < T::zero() || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("table column `r` must be nonnegative and strictly increasing".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("table column `V` must be finite".into()));
        }
        Ok(Self { r, v })
    }

    pub fn eval(&self, x: T) -> T {
        let n = self.r.len();
        if x <= self.r[0] {
            return self.v[0];
        }
        if x > self.r[n - 1] {
            return T::zero();
        }
        let i = self.r.partition_point(|&k| k < x).clamp(1, n - 1) - 1;
        let lo = i.saturating_sub(1).min(n - 4);
        let mut acc = T::zero();
        for a in lo..lo + 4 {
            let mut w = T::one();
            for b in lo..lo + 4 {
                if a != b {
                    w = w * (x - self.r[b]) / (self.r[a] - self.r[b]);
                }
            }
            acc = acc + w * self.v[a];
        }
        acc
    }
}

/// Shape of a radial potential.
#[derive(Clone)]
pub enum Profile<T> {
    Zero,
    /// `g e^{-mu r} / r`
    Yukawa { g: T, mu: T },
    /// `amplitude e^{-(r/width)^2}`
    Gaussian { amplitude: T, width: T },
    /// `4 epsilon ((sigma/r)^12 - (sigma/r)^6)`
    LennardJones { epsilon: T, sigma: T },
    /// `g e^{-mu r}/r - amplitude / (r^4 + a^4)`
    R4Tail { g: T, mu: T, amplitude: T, a: T },
    /// `amplitude (1 - (r/radius)^2)^power` inside `radius`, zero outside.
    Bump { amplitude: T, radius: T, power: u32 },
    Table(Arc<TableProfile<T>>),
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for Profile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "Zero"),
            Profile::Yukawa { g, mu } => write!(f, "Yukawa {{ g: {g:?}, mu: {mu:?} }}"),
            Profile::Gaussian { amplitude, width } => {
                write!(f, "Gaussian {{ amplitude: {amplitude:?}, width: {width:?} }}")
            }
            Profile::LennardJones { epsilon, sigma } => {
                write!(f, "LennardJones {{ epsilon: {epsilon:?}, sigma: {sigma:?} }}")
            }
            Profile::R4Tail { g, mu, amplitude, a } => {
                write!(f, "R4Tail {{ g: {g:?}, mu: {mu:?}, amplitude: {amplitude:?}, a: {a:?} }}")
            }
            Profile::Bump { amplitude, radius, power } => {
                write!(f, "Bump {{ amplitude: {amplitude:?}, radius: {radius:?}, power: {power:?} }}")
            }
            Profile::Table(t) => write!(f, "Table({} rows)", t.r.len()),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> Profile<T> {
    pub fn eval(&self, r: T) -> T {
        match self {
            Profile::Zero => T::zero(),
            Profile::Yukawa { g, mu } => *g * (-*mu * r).exp() / r,
            Profile::Gaussian { amplitude, width } => {
                let x = r / *width;
                *amplitude * (-x * x).exp()
            }
            Profile::LennardJones { epsilon, sigma } => {
                let s6 = (*sigma / r).powi(6);
                lit::<T>(4.0) * *epsilon * (s6 * s6 - s6)
            }
            Profile::R4Tail { g, mu, amplitude, a } => {
                let core = if g.is_zero() { T::zero() } else { *g * (-*mu * r).exp() / r };
                let r2 = r * r;
                let a2 = *a * *a;
                core - *amplitude / (r2 * r2 + a2 * a2)
            }
            Profile::Bump { amplitude, radius, power } => {
                if r >= *radius {
                    T::zero()
                } else {
                    let x = r / *radius;
                    *amplitude * (T::one() - x * x).powi(*power as i32)
                }
            }
            Profile::Table(t) => t.eval(r),
            Profile::Custom(f) => f(r),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Zero => "zero",
            Profile::Yukawa { .. } => "yukawa",
            Profile::Gaussian { .. } => "gaussian",
            Profile::LennardJones { .. } => "lennard-jones",
            Profile::R4Tail { .. } => "r4tail",
            Profile::Bump { .. } => "bump",
            Profile::Table(_) => "table",
            Profile::Custom(_) => "custom",
        }
    }
}

/// A radial pair potential together with the metadata needed to transform it.
#[derive(Clone, Debug)]
pub struct RadialPotential<T> {
    pub profile: Profile<T>,
    /// `lim_{r→0} r V(r)`; zero for regular cores.
    pub core_strength: T,
    /// Below this radius the profile is held at `V(core_cutoff)`.
    pub core_cutoff: T,
    /// Asserted decay `V ~ tail_coefficient / r^tail_exponent`. Infinite for
    /// exponentially decaying or compactly supported profiles.
    pub tail_exponent: T,
    pub tail_coefficient: T,
    /// Beyond this radius the profile is replaced by its tail expansion.
    pub tail_start: T,
    /// Subleading tail terms `(coefficient, exponent)`.
    pub tail_corrections: Vec<(T, T)>,
    /// Radius outside which the profile vanishes identically.
    pub support_radius: Option<T>,
}

impl<T: Real> RadialPotential<T> {
    fn with_profile(profile: Profile<T>) -> Self {
        Self {
            profile,
            core_strength: T::zero(),
            core_cutoff: T::zero(),
            tail_exponent: T::infinity(),
            tail_coefficient: T::zero(),
            tail_start: T::one(),
            tail_corrections: Vec::new(),
            support_radius: None,
        }
    }

    pub fn zero() -> Self {
        let mut p = Self::with_profile(Profile::Zero);
        p.support_radius = Some(T::zero());
        p.tail_start = T::zero();
        p
    }

    pub fn yukawa(g: T, mu: T) -> Self {
        let mut p = Self::with_profile(Profile::Yukawa { g, mu });
        p.core_strength = g;
        p.tail_start = lit::<T>(46.0) / mu;
        p
    }

    pub fn gaussian(amplitude: T, width: T) -> Self {
        let mut p = Self::with_profile(Profile::Gaussian { amplitude, width });
        p.tail_start = lit::<T>(6.6) * width;
        p
    }

    /// Lennard–Jones with the repulsive core clamped below `core_cutoff`
    /// (conventionally `sigma / 2`).
    pub fn lennard_jones(epsilon: T, sigma: T, core_cutoff: T) -> Self {
        let mut p = Self::with_profile(Profile::LennardJones { epsilon, sigma });
        let four_eps = lit::<T>(4.0) * epsilon;
        p.core_cutoff = core_cutoff;
        p.tail_exponent = lit(6.0);
        p.tail_coefficient = -four_eps * sigma.powi(6);
        p.tail_corrections = vec![(four_eps * sigma.powi(12), lit(12.0))];
        p.tail_start = (lit::<T>(2.5) * sigma).max(core_cutoff + sigma);
        p
    }

    pub fn r4tail(g: T, mu: T, amplitude: T, a: T) -> Self {
        let mut p = Self::with_profile(Profile::R4Tail { g, mu, amplitude, a });
        p.core_strength = g;
        p.tail_exponent = lit(4.0);
        p.tail_coefficient = -amplitude;
        // -A/(r^4 + a^4) = -A r^-4 (1 - (a/r)^4 + (a/r)^8 - ...)
        let a4 = a.powi(4);
        p.tail_corrections = (1..4)
            .map(|k| {
                let sign = if k % 2 == 1 { T::one() } else { -T::one() };
                (sign * amplitude * a4.powi(k), lit::<T>(4.0 + 4.0 * k as f64))
            })
            .collect();
        let screen = if g.is_zero() { T::zero() } else { lit::<T>(46.0) / mu };
        p.tail_start = screen.max(lit::<T>(12.0) * a);
        p
    }

    pub fn bump(amplitude: T, radius: T, power: u32) -> Self {
        let mut p = Self::with_profile(Profile::Bump { amplitude, radius, power });
        p.support_radius = Some(radius);
        p.tail_start = radius;
        p
    }

    /// Bump whose volume integral equals `volume_integral`.
    pub fn bump_normalized(volume_integral: T, radius: T, power: u32) -> Self {
        Self::bump(volume_integral / bump_unit_integral(radius, power), radius, power)
    }

    pub fn table(table: TableProfile<T>) -> Self {
        let first = table.r[0];
        let last = *table.r.last().unwrap();
        let mut p = Self::with_profile(Profile::Table(Arc::new(table)));
        p.core_cutoff = first;
        p.tail_start = last;
        p.support_radius = Some(last);
        p
    }

    pub fn custom<F: Fn(T) -> T + Send + Sync + 'static>(f: F, tail_start: T) -> Self {
        let mut p = Self::with_profile(Profile::Custom(Arc::new(f)));
        p.tail_start = tail_start;
        p
    }

    /// Reference Fermi potential: screened repulsive core with an attractive
    /// `r^-4` tail whose fermion dispersion curve has the maxon/roton (Landau) shape.
    pub fn reference() -> Self {
        Self::r4tail(lit(0.3), T::one(), lit(0.2), T::one())
    }

    pub fn value(&self, r: T) -> T {
        if r < self.core_cutoff {
            self.profile.eval(self.core_cutoff)
        } else {
            self.profile.eval(r)
        }
    }

    /// The asserted tail expansion at `r`.
    pub fn tail_value(&self, r: T) -> T {
        let mut v = if self.tail_coefficient.is_zero() {
            T::zero()
        } else {
            self.tail_coefficient * r.powf(-self.tail_exponent)
        };
        for &(c, k) in &self.tail_corrections {
            v = v + c * r.powf(-k);
        }
        v
    }

    pub fn is_compact(&self) -> bool {
        self.support_radius.is_some()
    }

    /// Every `(coefficient, exponent)` pair of the tail expansion.
    pub fn tail_terms(&self) -> Vec<(T, T)> {
        let mut terms = Vec::new();
        if !self.tail_coefficient.is_zero() {
            terms.push((self.tail_coefficient, self.tail_exponent));
        }
        terms.extend(self.tail_corrections.iter().copied().filter(|(c, _)| !c.is_zero()));
        terms
    }

    /// Radius beyond which quadrature is replaced by the tail expansion.
    pub fn quadrature_end(&self) -> T {
        self.support_radius.unwrap_or(self.tail_start)
    }

    /// Segment boundaries for the radial quadrature.
    pub fn breakpoints(&self) -> Vec<T> {
        let end = self.quadrature_end();
        let mut pts = vec![T::zero()];
        if self.core_cutoff > T::zero() && self.core_cutoff < end {
            pts.push(self.core_cutoff);
        }
        if let Profile::Table(t) = &self.profile {
            pts.extend(t.r.iter().copied().filter(|&x| x > self.core_cutoff && x < end));
        }
        if end > *pts.last().unwrap() {
            pts.push(end);
        }
        pts
    }

    /// Checks the metadata required for a convergent transform.
    pub fn check_integrable(&self) -> Result<()> {
        let three: T = lit(3.0);
        for (c, k) in self.tail_terms() {
            if !c.is_zero() && k <= three {
                return Err(Error::NonIntegrableTail { exponent: k.to_f64().unwrap_or(f64::NAN) });
            }
        }
        // r^2 V(r) must stay bounded towards the origin.
        let probe = |r: T| (r * r * self.value(r)).abs();
        let mut prev = probe(lit(1e-2));
        for k in 3..9 {
            let r = lit::<T>(10f64.powi(-k));
            let cur = probe(r);
            if !cur.is_finite() || (cur > lit::<T>(10.0) * prev && cur > lit::<T>(1e-12)) {
                return Err(Error::NonIntegrableCore {
                    from: prev.to_f64().unwrap_or(f64::NAN),
                    to: cur.to_f64().unwrap_or(f64::NAN),
                });
            }
            prev = cur;
        }
        Ok(())
    }
}

/// `∫ (1 - (r/a)^2)^n d^3r`.
pub fn bump_unit_integral<T: Real>(radius: T, power: u32) -> T {
    // I_n = ∫_0^1 x^2 (1 - x^2)^n dx obeys I_n = I_{n-1} 2n / (2n + 3).
    let mut i = T::one() / lit(3.0);
    for n in 1..=power {
        i = i * lit::<T>(2.0 * n as f64) / lit(2.0 * n as f64 + 3.0);
    }
    lit::<T>(4.0) * T::PI() * radius.powi(3) * i
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lennard_jones_is_clamped_below_cutoff() {
        let lj = RadialPotential::lennard_jones(1.0_f64, 1.0, 0.5);
        assert_eq!(lj.value(0.1), lj.value(0.5));
        assert!((lj.value(1.0)).abs() < 1e-15);
    }

    #[test]
    fn tail_expansion_matches_profile_beyond_tail_start() {
        for pot in [
            RadialPotential::r4tail(1.0_f64, 1.0, 1.0, 1.0),
            RadialPotential::lennard_jones(1.0, 1.0, 0.5),
            RadialPotential::reference(),
        ] {
            let r0 = pot.tail_start;
            let mut prev = f64::INFINITY;
            for k in 1..4 {
                let r = r0 * f64::from(1 << k);
                let dev = ((pot.value(r) - pot.tail_value(r)) * r.powf(pot.tail_exponent)).abs();
                assert!(dev <= prev + 1e-15, "{:?}", pot.profile);
                assert!(dev < 1e-12);
                prev = dev;
            }
        }
    }

    #[test]
    fn coulomb_core_strength_is_consistent() {
        let y = RadialPotential::yukawa(2.0_f64, 1.0);
        assert!((1e-8 * y.value(1e-8) - y.core_strength).abs() < 1e-7);
    }

    #[test]
    fn bump_normalization_integrates_to_one() {
        let b = RadialPotential::bump_normalized(1.0_f64, 1.5, 8);
        let est = crate::quadrature::integrate(0.0, 1.5, 0.01, |r| {
            4.0 * std::f64::consts::PI * r * r * b.value(r)
        });
        assert!((est.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn slow_tails_and_hard_cores_are_rejected() {
        let mut slow = RadialPotential::r4tail(0.0_f64, 1.0, 1.0, 1.0);
        slow.tail_exponent = 3.0;
        assert!(matches!(slow.check_integrable(), Err(Error::NonIntegrableTail { .. })));
        let hard = RadialPotential::lennard_jones(1.0_f64, 1.0, 0.0);
        assert!(matches!(hard.check_integrable(), Err(Error::NonIntegrableCore { .. })));
        assert!(RadialPotential::yukawa(1.0_f64, 1.0).check_integrable().is_ok());
    }

    #[test]
    fn table_interpolation_reproduces_cubics() {
        let r: Vec<f64> = (1..20).map(|i| i as f64 * 0.25).collect();
        let v: Vec<f64> = r.iter().map(|x| x * x * x - 2.0 * x).collect();
        let t = TableProfile::new(r, v).unwrap();
        let x = 2.13;
        assert!((t.eval(x) - (x * x * x - 2.0 * x)).abs() < 1e-12);
    }
}
