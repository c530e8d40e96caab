use rayon::prelude::*;
use serde::Serialize;

use super::RadialPotential;
use crate::error::{Error, Result};
use crate::lsq;
use crate::quadrature::{gk15_local, power_tail_sine, Estimate, QuadSettings};
use crate::scalar::{from_usize, lit, sin_cos_product, to_f64, CompensatedSum, Real};

/// Sampled radial transform `Ṽ(|p|)` with a piecewise polynomial interpolant.
///
/// Each grid interval carries one polynomial of odd degree `order` through
/// the `order + 1` surrounding samples. Near the origin the stencil continues
/// onto the mirrored samples `Ṽ(-p) = Ṽ(p)`, which keeps even functions
/// accurate without one-sided stencils.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialSpectrum<T> {
    pub p_grid: Vec<T>,
    pub values: Vec<T>,
    /// Absolute quadrature error estimate per sample (zero for exact data).
    pub errors: Vec<T>,
    pub order: usize,
    /// Estimated `dṼ/d|p|` at `0+` when the grid resolves it.
    pub slope_at_zero: Option<T>,
}

impl<T: Real> RadialSpectrum<T> {
    pub fn new(p_grid: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::with_order(p_grid, values, 5)
    }

    pub fn with_order(p_grid: Vec<T>, values: Vec<T>, order: usize) -> Result<Self> {
        validate_grid(&p_grid)?;
        if p_grid[0] != T::zero() {
            return Err(Error::InvalidInput("spectrum grid must start at p = 0".into()));
        }
        if values.len() != p_grid.len() {
            return Err(Error::InvalidInput("spectrum values and grid differ in length".into()));
        }
        if order % 2 == 0 || order + 1 > p_grid.len() {
            return Err(Error::InvalidInput(format!("interpolation order {order} must be odd and below the grid size")));
        }
        let errors = vec![T::zero(); p_grid.len()];
        Ok(Self { p_grid, values, errors, order, slope_at_zero: None })
    }

    /// Samples an exactly known transform.
    pub fn from_fn<F: Fn(T) -> T>(p_grid: Vec<T>, f: F) -> Result<Self> {
        let values = p_grid.iter().map(|&p| f(p)).collect();
        Self::new(p_grid, values)
    }

    pub fn p_max(&self) -> T {
        *self.p_grid.last().unwrap()
    }

    /// The sampled `(p, Ṽ)` nodes.
    pub fn nodes(&self) -> (&[T], &[T]) {
        (&self.p_grid, &self.values)
    }

    pub fn value_at_zero(&self) -> T {
        self.values[0]
    }

    fn node(&self, j: isize) -> (T, T) {
        let k = j.unsigned_abs();
        if j < 0 {
            (-self.p_grid[k], self.values[k])
        } else {
            (self.p_grid[k], self.values[k])
        }
    }

    /// First stencil index of the polynomial on interval `i`.
    fn stencil_start(&self, i: usize) -> isize {
        let n = self.p_grid.len() as isize;
        let half = (self.order as isize - 1) / 2;
        let start = i as isize - half;
        start.min(n - 1 - self.order as isize)
    }

    fn interval_of(&self, p: T) -> usize {
        let n = self.p_grid.len();
        self.p_grid.partition_point(|&x| x <= p).clamp(1, n - 1) - 1
    }

    fn eval_on_interval(&self, i: usize, p: T) -> T {
        let start = self.stencil_start(i);
        let m = self.order as isize + 1;
        let mut acc = T::zero();
        for a in start..start + m {
            let (xa, ya) = self.node(a);
            let mut w = T::one();
            for b in start..start + m {
                if a != b {
                    let (xb, _) = self.node(b);
                    w = w * (p - xb) / (xa - xb);
                }
            }
            acc = acc + w * ya;
        }
        acc
    }

    /// Interpolated `Ṽ(p)`; only magnitudes are accepted.
    pub fn eval(&self, p: T) -> Result<T> {
        let p = p.abs();
        let p_max = self.p_max();
        if p > p_max || p.is_nan() {
            return Err(Error::SpectrumRangeExceeded { p: to_f64(p), p_max: to_f64(p_max) });
        }
        Ok(self.eval_on_interval(self.interval_of(p), p))
    }

    /// Rows `p,V_tilde` as CSV text.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,V_tilde\n");
        for (p, v) in self.p_grid.iter().zip(&self.values) {
            out.push_str(&format!("{p:e},{v:e}\n"));
        }
        out
    }
}

fn validate_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("momentum grid is empty".into()));
    }
    if grid.iter().any(|p| !p.is_finite() || *p < T::zero()) {
        return Err(Error::InvalidInput("momenta must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("momentum grid must be strictly increasing".into()));
    }
    Ok(())
}

fn four_pi<T: Real>() -> T {
    lit::<T>(4.0) * T::PI()
}

/// `∫_0^R V(r) r sin(p r) dr` (or `∫ V r^2` at `p = 0`) on panels of length `panel`.
fn radial_body<T: Real>(pot: &RadialPotential<T>, p: T, panel: T) -> Estimate<T> {
    let bps = pot.breakpoints();
    let mut value = CompensatedSum::new();
    let mut error = CompensatedSum::new();
    for seg in bps.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = crate::quadrature::panel_count(a, b, panel);
        let h = (b - a) / from_usize(n);
        for k in 0..n {
            let start = a + h * from_usize(k);
            let (v, e) = if p.is_zero() {
                gk15_local(h, |d| {
                    let r = start + d;
                    pot.value(r) * r * r
                })
            } else {
                // sin(p (start + d)) with the phase of the panel start kept exact.
                let (sa, ca) = sin_cos_product(p, start);
                gk15_local(h, |d| {
                    let r = start + d;
                    let (sd, cd) = (p * d).sin_cos();
                    pot.value(r) * r * (sa * cd + ca * sd)
                })
            };
            value.add(v);
            error.add(e);
        }
    }
    Estimate { value: value.value(), error: error.value() }
}

/// Semi-analytic contribution of the tail expansion beyond the quadrature end.
fn radial_tail<T: Real>(pot: &RadialPotential<T>, p: T) -> Estimate<T> {
    let start = pot.quadrature_end();
    if pot.support_radius.is_some() || start <= T::zero() {
        return Estimate::zero();
    }
    let three: T = lit(3.0);
    let mut value = CompensatedSum::new();
    let mut error = T::zero();
    for (c, k) in pot.tail_terms() {
        if p.is_zero() {
            value.add(c * start.powf(three - k) / (k - three));
        } else {
            let t = power_tail_sine(T::one() - k, start, p);
            value.add(c * t.value);
            error = error + c.abs() * t.error;
        }
    }
    Estimate { value: value.value(), error }
}

/// `Ṽ(p)` for a single momentum magnitude with its error estimate.
pub fn transform_at<T: Real>(pot: &RadialPotential<T>, p: T, quad: &QuadSettings<T>) -> Result<Estimate<T>> {
    let p = p.abs();
    let mut panel = quad.panel_for(p);
    let prefactor = if p.is_zero() { four_pi::<T>() } else { four_pi::<T>() / p };
    let tail = radial_tail(pot, p);
    let mut last = None;
    for _ in 0..=quad.max_refinements {
        let body = radial_body(pot, p, panel);
        let value = prefactor * (body.value + tail.value);
        let error = prefactor * (body.error + tail.error);
        if quad.accepts(value, error) {
            return Ok(Estimate { value, error });
        }
        last = Some(error);
        panel = panel * lit(0.5);
    }
    Err(Error::QuadratureFailure {
        p: to_f64(p),
        estimate: last.map(to_f64).unwrap_or(f64::NAN),
        tolerance: to_f64(quad.tolerance),
    })
}

/// Three-dimensional radial transform `Ṽ(p) = (4π/p)∫ V(r) r sin(pr) dr`
/// sampled on `p_grid` (which must start at zero).
pub fn fourier_transform<T: Real>(
    pot: &RadialPotential<T>,
    p_grid: &[T],
    quad: &QuadSettings<T>,
) -> Result<RadialSpectrum<T>> {
    validate_grid(p_grid)?;
    if !(quad.tolerance > T::zero()) {
        return Err(Error::InvalidInput("quadrature tolerance must be positive".into()));
    }
    pot.check_integrable()?;
    let samples: Vec<Estimate<T>> = p_grid
        .par_iter()
        .map(|&p| transform_at(pot, p, quad))
        .collect::<Result<_>>()?;
    let values = samples.iter().map(|e| e.value).collect();
    let errors = samples.iter().map(|e| e.error).collect();
    let order = if p_grid.len() > 6 { 5 } else if p_grid.len() > 4 { 3 } else { 1 };
    let mut spec = RadialSpectrum {
        p_grid: p_grid.to_vec(),
        values,
        errors,
        order,
        slope_at_zero: None,
    };
    if p_grid[0] == T::zero() {
        spec.slope_at_zero = super::spectrum_slope_at_zero(&spec).ok().map(|f| f.slope);
    }
    Ok(spec)
}

/// Settings for [`inverse_transform`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InverseSettings<T> {
    /// Largest acceptable truncation error estimate of the cutoff tail.
    pub tolerance: T,
    /// Number of trailing samples fitted by the `p^-2, p^-4, p^-6` tail model.
    pub tail_samples: usize,
}

impl<T: Real> Default for InverseSettings<T> {
    fn default() -> Self {
        Self { tolerance: lit(1e-9), tail_samples: 8 }
    }
}

fn tail_fit<T: Real>(spec: &RadialSpectrum<T>, terms: usize, samples: usize) -> Result<Vec<T>> {
    let n = spec.p_grid.len();
    let lo = n - samples;
    let x = &spec.p_grid[lo..];
    if x[0] <= T::zero() {
        return Err(Error::InvalidInput("tail fit needs positive momenta".into()));
    }
    let powers: Vec<T> = (1..=terms).map(|j| lit(-2.0 * j as f64)).collect();
    Ok(lsq::fit_powers(x, &spec.values[lo..], &powers)?.coefficients)
}

fn tail_integral<T: Real>(coeffs: &[T], p_cut: T, r: T) -> T {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let s = T::one() - lit::<T>(2.0 * (j + 1) as f64);
            c * power_tail_sine(s, p_cut, r).value
        })
        .fold(T::zero(), |a, b| a + b)
}

/// `V(r) = (1/(2π² r)) ∫_0^∞ Ṽ(ξ) ξ sin(ξ r) dξ` on `r_grid` (all `r > 0`).
///
/// The sampled range is integrated exactly on the interpolant; beyond the
/// last sample the spectrum is continued by a fitted `p^-2, p^-4, p^-6`
/// series, and the difference to a two-term fit serves as the truncation
/// error estimate.
pub fn inverse_transform<T: Real>(
    spec: &RadialSpectrum<T>,
    r_grid: &[T],
    settings: &InverseSettings<T>,
) -> Result<Vec<T>> {
    if r_grid.iter().any(|r| !(*r > T::zero()) || !r.is_finite()) {
        return Err(Error::InvalidInput("inverse transform radii must be positive".into()));
    }
    let n = spec.p_grid.len();
    let samples = settings.tail_samples.max(4);
    if n < samples + 2 {
        return Err(Error::InvalidInput(format!("spectrum needs more than {samples} samples")));
    }
    let p_cut = spec.p_max();
    let all_zero = spec.values.iter().all(|v| v.is_zero());
    let (fit3, fit2) = if all_zero {
        (vec![], vec![])
    } else {
        (tail_fit(spec, 3, samples)?, tail_fit(spec, 2, samples)?)
    };
    let norm = lit::<T>(2.0) * T::PI() * T::PI();

    r_grid
        .par_iter()
        .map(|&r| {
            let mut acc = CompensatedSum::new();
            let quarter = T::PI() / (lit::<T>(2.0) * r);
            for i in 0..n - 1 {
                let (a, b) = (spec.p_grid[i], spec.p_grid[i + 1]);
                let m = crate::quadrature::panel_count(a, b, quarter);
                let h = (b - a) / from_usize(m);
                for k in 0..m {
                    let start = a + h * from_usize(k);
                    let (sa, ca) = sin_cos_product(start, r);
                    let (v, _) = gk15_local(h, |d| {
                        let xi = start + d;
                        let (sd, cd) = (d * r).sin_cos();
                        spec.eval_on_interval(i, xi) * xi * (sa * cd + ca * sd)
                    });
                    acc.add(v);
                }
            }
            if !all_zero {
                let t3 = tail_integral(&fit3, p_cut, r);
                let t2 = tail_integral(&fit2, p_cut, r);
                let estimate = (t3 - t2).abs() / (norm * r);
                if estimate > settings.tolerance {
                    return Err(Error::InsufficientSpectrum {
                        estimate: to_f64(estimate),
                        tolerance: to_f64(settings.tolerance),
                    });
                }
                acc.add(t3);
            }
            Ok(acc.value() / (norm * r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn yukawa_unit_momentum_matches_closed_form() {
        let pot = RadialPotential::yukawa(1.0_f64, 1.0);
        let v = transform_at(&pot, 1.0, &QuadSettings::default()).unwrap().value;
        assert!((v - 2.0 * PI).abs() < 1e-12 * 2.0 * PI);
    }

    #[test]
    fn gaussian_volume_integral() {
        let pot = RadialPotential::gaussian(1.0_f64, 1.0);
        let v = transform_at(&pot, 0.0, &QuadSettings::default()).unwrap().value;
        assert!((v - PI.powf(1.5)).abs() < 1e-13);
    }

    #[test]
    fn zero_potential_has_zero_transform() {
        let pot = RadialPotential::<f64>::zero();
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = fourier_transform(&pot, &grid, &QuadSettings::default()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolant_reproduces_even_polynomials_near_origin() {
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let s = RadialSpectrum::from_fn(grid, |p| 1.0 - p * p + 0.1 * p.powi(4)).unwrap();
        for &p in &[0.0_f64, 0.013, 0.05, 0.149, 2.87] {
            let exact = 1.0 - p * p + 0.1 * p.powi(4);
            assert!((s.eval(p).unwrap() - exact).abs() < 1e-13);
        }
        assert!(s.eval(3.5).is_err());
        assert_eq!(s.eval(-0.7).unwrap(), s.eval(0.7).unwrap());
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let s = RadialSpectrum::from_fn(grid, |_| 0.0).unwrap();
        let v = inverse_transform(&s, &[0.5, 1.0, 3.0], &InverseSettings::default()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncated_spectrum_is_reported() {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let s = RadialSpectrum::from_fn(grid, |p| 4.0 * PI / (p * p + 4.0)).unwrap();
        let err = inverse_transform(&s, &[0.5], &InverseSettings::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSpectrum { .. }));
    }
}
