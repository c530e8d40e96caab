//! Periodic box, its momentum lattice, and the Fourier coefficients of the
//! N-scaled potential.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::transform_at;
use crate::potentials::{RadialPotential, RadialSpectrum};
use crate::quadrature::{integrate_segments, kronrod_nodes, QuadSettings};
use crate::scalar::{from_i64, lit, to_f64, CompensatedSum, Real};
use crate::vec3::Vec3;

/// Integer lattice index `(n1, n2, n3)`.
pub type Index = [i64; 3];

pub fn neg(i: Index) -> Index {
    [-i[0], -i[1], -i[2]]
}

pub fn add(a: Index, b: Index) -> Index {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Index, b: Index) -> Index {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Index, k: i64) -> Index {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// Box with sides `L1, L2, L2` holding `N` particles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusGeometry<T> {
    pub l1: T,
    pub l2: T,
    pub n: T,
}

impl<T: Real> TorusGeometry<T> {
    pub fn new(l1: T, l2: T, n: T) -> Result<Self> {
        if !(l1 > T::zero() && l2 > T::zero()) || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::InvalidInput("box sides L1, L2 must be positive".into()));
        }
        if !(n >= T::one()) || !n.is_finite() {
            return Err(Error::InvalidInput("particle count N must be at least 1".into()));
        }
        Ok(Self { l1, l2, n })
    }

    /// The box `L1 = L2 = 2π` holding one particle, where lattice vectors
    /// are integer triples.
    pub fn unit() -> Self {
        let two_pi = T::PI() + T::PI();
        Self { l1: two_pi, l2: two_pi, n: T::one() }
    }

    pub fn volume(&self) -> T {
        self.l1 * self.l2 * self.l2
    }

    /// `N^{1/3}`, the length scale of the potential.
    pub fn scale(&self) -> T {
        self.n.cbrt()
    }

    /// Half-width of the smallest side of the scaled box `N^{1/3} T`.
    pub fn scaled_half_width(&self) -> T {
        self.scale() * self.l1.min(self.l2) * lit(0.5)
    }

    /// `2π (n1/L1, n2/L2, n3/L2)`.
    pub fn lattice_vector(&self, n1: i64, n2: i64, n3: i64) -> Vec3<T> {
        let two_pi = T::PI() + T::PI();
        Vec3::new(
            two_pi * from_i64::<T>(n1) / self.l1,
            two_pi * from_i64::<T>(n2) / self.l2,
            two_pi * from_i64::<T>(n3) / self.l2,
        )
    }

    pub fn vector(&self, i: Index) -> Vec3<T> {
        self.lattice_vector(i[0], i[1], i[2])
    }

    /// Lattice index of `q`, if `q` lies on the lattice (to rounding).
    pub fn index_of(&self, q: &Vec3<T>) -> Option<Index> {
        let two_pi = T::PI() + T::PI();
        let sides = [self.l1, self.l2, self.l2];
        let mut idx = [0i64; 3];
        for k in 0..3 {
            let x = q.0[k] * sides[k] / two_pi;
            let r = x.round();
            if (x - r).abs() > lit::<T>(1e-6) * (T::one() + x.abs()) {
                return None;
            }
            idx[k] = r.to_i64()?;
        }
        Some(idx)
    }

    /// Rejects boxes whose scaled half-width does not contain the
    /// potential's effective support.
    pub fn check_contains(&self, pot: &RadialPotential<T>) -> Result<()> {
        let support = pot.quadrature_end();
        let half = self.scaled_half_width();
        if half < support {
            return Err(Error::BoxTooSmall { half_width: to_f64(half), support: to_f64(support) });
        }
        Ok(())
    }
}

/// Source of the pair couplings `v_q` used by the pair-field and
/// variational solvers.
pub trait Couplings<T: Real>: Sync {
    fn coupling(&self, q: &Vec3<T>) -> Result<T>;
}

/// `v_q = Ṽ(|q| / N^{1/3}) / (L1 L2²)`.
pub fn fourier_coefficient<T: Real>(
    geom: &TorusGeometry<T>,
    pot: &RadialPotential<T>,
    q: &Vec3<T>,
    quad: &QuadSettings<T>,
) -> Result<T> {
    geom.check_contains(pot)?;
    pot.check_integrable()?;
    Ok(transform_at(pot, q.norm() / geom.scale(), quad)?.value / geom.volume())
}

/// Direct cross-check of [`fourier_coefficient`]: tensor-product quadrature
/// of `V(|ξ|) cos(q·ξ / N^{1/3})` over the part of the scaled box inside the
/// cube of half-width `quadrature_end`.
pub fn fourier_coefficient_direct<T: Real>(
    geom: &TorusGeometry<T>,
    pot: &RadialPotential<T>,
    q: &Vec3<T>,
    panels_per_axis: usize,
) -> Result<T> {
    geom.check_contains(pot)?;
    let s = geom.scale();
    let half = [geom.l1 * s * lit(0.5), geom.l2 * s * lit(0.5), geom.l2 * s * lit(0.5)];
    let reach = pot.quadrature_end();
    let axes: Vec<Vec<(T, T)>> = (0..3)
        .map(|k| {
            let h = half[k].min(reach);
            kronrod_nodes(-h, h, panels_per_axis)
        })
        .collect();
    let k = q.scale(T::one() / s);
    let planes: Vec<T> = axes[0]
        .par_iter()
        .map(|&(x, wx)| {
            let mut acc = CompensatedSum::new();
            for &(y, wy) in &axes[1] {
                for &(z, wz) in &axes[2] {
                    let r = (x * x + y * y + z * z).sqrt();
                    let phase = k.0[0] * x + k.0[1] * y + k.0[2] * z;
                    acc.add(wx * wy * wz * pot.value(r) * phase.cos());
                }
            }
            acc.value()
        })
        .collect();
    let total = planes.into_iter().fold(CompensatedSum::new(), |mut a, v| {
        a.add(v);
        a
    });
    Ok(total.value() / geom.volume())
}

/// `B = (1/(L1 L2²)) ∫ |V(ξ)| dξ`, an upper bound for every `|v_q|`.
pub fn coefficient_bound<T: Real>(
    geom: &TorusGeometry<T>,
    pot: &RadialPotential<T>,
    quad: &QuadSettings<T>,
) -> Result<T> {
    pot.check_integrable()?;
    let four_pi = lit::<T>(4.0) * T::PI();
    let body = integrate_segments(&pot.breakpoints(), quad.max_panel, |a, d| {
        let r = a + d;
        (pot.value(r) * r * r).abs()
    });
    let mut tail = T::zero();
    if !pot.is_compact() {
        let start = pot.quadrature_end();
        let three: T = lit(3.0);
        for (c, k) in pot.tail_terms() {
            tail = tail + c.abs() * start.powf(three - k) / (k - three);
        }
    }
    Ok(four_pi * (body.value + tail) / geom.volume())
}

/// `V₀ = (1/(L1 L2²)) ∫ V(x) dx`, the `N → ∞` limit of `v_0`.
pub fn v0_limit<T: Real>(pot: &RadialPotential<T>, geom: &TorusGeometry<T>, quad: &QuadSettings<T>) -> Result<T> {
    pot.check_integrable()?;
    Ok(transform_at(pot, T::zero(), quad)?.value / geom.volume())
}

/// Dense table of `v_q` for `|n_i| ≤ n_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierCoefficients<T> {
    pub geometry: TorusGeometry<T>,
    pub n_max: i64,
    pub bound: T,
    table: Vec<T>,
}

impl<T: Real> FourierCoefficients<T> {
    fn side(n_max: i64) -> usize {
        (2 * n_max + 1) as usize
    }

    fn slot(&self, i: Index) -> Option<usize> {
        if i.iter().any(|c| c.abs() > self.n_max) {
            return None;
        }
        let s = Self::side(self.n_max) as i64;
        let o = self.n_max;
        Some((((i[0] + o) * s + (i[1] + o)) * s + (i[2] + o)) as usize)
    }

    fn indices(n_max: i64) -> impl Iterator<Item = Index> {
        (-n_max..=n_max)
            .flat_map(move |a| (-n_max..=n_max).flat_map(move |b| (-n_max..=n_max).map(move |c| [a, b, c])))
    }

    /// Builds the table from the potential through the radial transform.
    /// Transforms are evaluated once per distinct `|q|`.
    pub fn build(
        geom: &TorusGeometry<T>,
        pot: &RadialPotential<T>,
        n_max: i64,
        quad: &QuadSettings<T>,
    ) -> Result<Self> {
        if n_max < 0 {
            return Err(Error::InvalidInput("n_max must be nonnegative".into()));
        }
        geom.check_contains(pot)?;
        pot.check_integrable()?;
        // In a cubic box |q| depends on n1² + n2² + n3² alone.
        let cubic = geom.l1 == geom.l2;
        let key = |i: Index| {
            if cubic {
                (0, i[0] * i[0] + i[1] * i[1] + i[2] * i[2])
            } else {
                (i[0] * i[0], i[1] * i[1] + i[2] * i[2])
            }
        };
        let mut keys: Vec<(i64, i64)> = Self::indices(n_max).map(key).collect();
        keys.sort_unstable();
        keys.dedup();
        let s = geom.scale();
        let vol = geom.volume();
        let values: Vec<T> = keys
            .par_iter()
            .map(|&(a, b)| {
                let two_pi_sq = (T::PI() + T::PI()).powi(2);
                let q = two_pi_sq * (from_i64::<T>(a) / (geom.l1 * geom.l1) + from_i64::<T>(b) / (geom.l2 * geom.l2));
                transform_at(pot, q.sqrt() / s, quad).map(|e| e.value / vol)
            })
            .collect::<Result<_>>()?;
        let bound = coefficient_bound(geom, pot, quad)?;
        let table = Self::indices(n_max)
            .map(|i| values[keys.binary_search(&key(i)).expect("key present")])
            .collect();
        Ok(Self { geometry: *geom, n_max, bound, table })
    }

    /// Table filled from an arbitrary function of the lattice index; every
    /// entry must satisfy `v_q = v_{-q}` exactly.
    pub fn from_fn<F: Fn(Index) -> T>(geom: &TorusGeometry<T>, n_max: i64, bound: T, f: F) -> Result<Self> {
        let mut out = Self { geometry: *geom, n_max, bound, table: Vec::new() };
        out.table = Self::indices(n_max).map(&f).collect();
        for i in Self::indices(n_max) {
            let (a, b) = (out.get(i)?, out.get(neg(i))?);
            if a != b {
                return Err(Error::InvalidInput(format!("v_q != v_-q at ({}, {}, {})", i[0], i[1], i[2])));
            }
        }
        Ok(out)
    }

    pub fn get(&self, i: Index) -> Result<T> {
        self.slot(i).map(|k| self.table[k]).ok_or(Error::MissingCoefficient(i[0], i[1], i[2]))
    }

    /// Stores `value` at `i` and `-i`, keeping the table symmetric.
    pub fn set(&mut self, i: Index, value: T) -> Result<()> {
        let (a, b) = match (self.slot(i), self.slot(neg(i))) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::MissingCoefficient(i[0], i[1], i[2])),
        };
        self.table[a] = value;
        self.table[b] = value;
        Ok(())
    }

    pub fn v0(&self) -> T {
        self.table[self.slot([0, 0, 0]).unwrap()]
    }

    /// Entries as `(index, v_q)` in lexicographic index order.
    pub fn entries(&self) -> impl Iterator<Item = (Index, T)> + '_ {
        Self::indices(self.n_max).zip(self.table.iter().copied())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n1,n2,n3,v_q\n");
        for (i, v) in self.entries() {
            out.push_str(&format!("{},{},{},{v:e}\n", i[0], i[1], i[2]));
        }
        out
    }
}

impl<T: Real> Couplings<T> for FourierCoefficients<T> {
    fn coupling(&self, q: &Vec3<T>) -> Result<T> {
        let i = self
            .geometry
            .index_of(q)
            .ok_or_else(|| Error::InvalidInput("momentum is not on the coefficient lattice".into()))?;
        self.get(i)
    }
}

/// Couplings interpolated from a sampled spectrum:
/// `v_q = prefactor · Ṽ(|q| · momentum_scale)`.
///
/// With `prefactor = 1/(L1 L2²)` and `momentum_scale = N^{-1/3}` this is the
/// torus coefficient; with both equal to one it is the continuum reading
/// `v_l → Ṽ(l)`.
#[derive(Clone, Debug)]
pub struct SpectrumCouplings<T> {
    pub spectrum: RadialSpectrum<T>,
    pub prefactor: T,
    pub momentum_scale: T,
}

impl<T: Real> SpectrumCouplings<T> {
    pub fn continuum(spectrum: RadialSpectrum<T>) -> Self {
        Self { spectrum, prefactor: T::one(), momentum_scale: T::one() }
    }

    pub fn torus(spectrum: RadialSpectrum<T>, geom: &TorusGeometry<T>) -> Self {
        Self { spectrum, prefactor: T::one() / geom.volume(), momentum_scale: T::one() / geom.scale() }
    }
}

impl<T: Real> Couplings<T> for SpectrumCouplings<T> {
    fn coupling(&self, q: &Vec3<T>) -> Result<T> {
        Ok(self.prefactor * self.spectrum.eval(q.norm() * self.momentum_scale)?)
    }
}

/// Couplings given by a radial closure `v(|q|)`.
pub struct RadialFnCouplings<F>(pub F);

impl<T: Real, F: Fn(T) -> T + Sync> Couplings<T> for RadialFnCouplings<F> {
    fn coupling(&self, q: &Vec3<T>) -> Result<T> {
        Ok((self.0)(q.norm()))
    }
}

/// Couplings that vanish identically (free gas).
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCouplings;

impl<T: Real> Couplings<T> for ZeroCouplings {
    fn coupling(&self, _q: &Vec3<T>) -> Result<T> {
        Ok(T::zero())
    }
}
