//! Composite Gauss–Kronrod quadrature and the semi-analytic power-law tail.

// node and weight tables are quoted to full precision
#![allow(clippy::excessive_precision)]

use num_complex::Complex;
use serde::Serialize;

use crate::scalar::{from_usize, lit, CompensatedSum, Real};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Quadrature value with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
}

impl<T: Real> Estimate<T> {
    pub fn zero() -> Self {
        Self { value: T::zero(), error: T::zero() }
    }
}

/// Settings shared by the oscillatory transforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadSettings<T> {
    /// Absolute error budget per evaluated sample.
    pub tolerance: T,
    /// Relative budget; a sample is accepted when its error estimate is
    /// below `max(tolerance, relative_tolerance · |value|)`.
    pub relative_tolerance: T,
    /// Longest panel used for non-oscillatory stretches.
    pub max_panel: T,
    /// Panels per quarter period of `sin(p r)`; the effective panel is
    /// `min(max_panel, pi / (4 p) / panels_per_quarter_wave)`.
    pub panels_per_quarter_wave: usize,
    /// Number of panel halvings attempted before giving up.
    pub max_refinements: usize,
}

impl<T: Real> Default for QuadSettings<T> {
    fn default() -> Self {
        Self {
            tolerance: lit(1e-10),
            relative_tolerance: lit(1e-12),
            max_panel: lit(0.005),
            panels_per_quarter_wave: 1,
            max_refinements: 3,
        }
    }
}

impl<T: Real> QuadSettings<T> {
    pub fn with_tolerance(tolerance: T) -> Self {
        Self { tolerance, ..Self::default() }
    }

    pub fn accepts(&self, value: T, error: T) -> bool {
        error <= self.tolerance.max(self.relative_tolerance * value.abs())
    }

    /// Panel length used for frequency `p`.
    pub fn panel_for(&self, p: T) -> T {
        if p > T::zero() {
            let quarter = T::PI() / (lit::<T>(4.0) * p);
            let per = T::from_usize(self.panels_per_quarter_wave.max(1)).unwrap();
            self.max_panel.min(quarter / per)
        } else {
            self.max_panel
        }
    }
}

/// QUADPACK's error heuristic: `|K15 - G7|` rescaled by the spread of the
/// integrand, floored at the roundoff level of `∫|f|`.
fn kronrod_error<T: Real>(diff: T, resabs: T, resasc: T) -> T {
    let mut err = diff;
    if resasc > T::zero() && err > T::zero() {
        err = resasc * T::one().min((lit::<T>(200.0) * err / resasc).powf(lit(1.5)));
    }
    let floor = lit::<T>(50.0) * T::epsilon() * resabs;
    if resabs > T::min_positive_value() / (lit::<T>(50.0) * T::epsilon()) {
        err = err.max(floor);
    }
    err
}

/// 15-point Kronrod rule on `[0, h]`; `f` receives the offset from the
/// panel start. Returns the Kronrod value and an error estimate.
pub fn gk15_local<T: Real, F: FnMut(T) -> T>(h: T, mut f: F) -> (T, T) {
    let half = h * lit(0.5);
    let mut fv = [T::zero(); 15];
    fv[7] = f(half);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        fv[j] = f(half - dx);
        fv[14 - j] = f(half + dx);
    }
    let weight = |i: usize| lit::<T>(WGK[if i <= 7 { i } else { 14 - i }]);
    let mut kronrod = T::zero();
    let mut resabs = T::zero();
    for (i, &v) in fv.iter().enumerate() {
        kronrod = kronrod + weight(i) * v;
        resabs = resabs + weight(i) * v.abs();
    }
    let mut gauss = fv[7] * lit(WG[3]);
    for j in [1usize, 3, 5] {
        gauss = gauss + (fv[j] + fv[14 - j]) * lit(WG[j / 2]);
    }
    let mean = kronrod * lit(0.5);
    let resasc = fv.iter().enumerate().fold(T::zero(), |acc, (i, &v)| acc + weight(i) * (v - mean).abs());
    let scale = half.abs();
    let err = kronrod_error(((kronrod - gauss) * half).abs(), resabs * scale, resasc * scale);
    (kronrod * half, err)
}

/// Complex-valued variant of [`gk15_local`].
pub fn gk15_local_complex<T: Real, F: FnMut(T) -> Complex<T>>(h: T, mut f: F) -> (Complex<T>, T) {
    let half = h * lit(0.5);
    let zero = Complex::new(T::zero(), T::zero());
    let mut fv = [zero; 15];
    fv[7] = f(half);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        fv[j] = f(half - dx);
        fv[14 - j] = f(half + dx);
    }
    let weight = |i: usize| lit::<T>(WGK[if i <= 7 { i } else { 14 - i }]);
    let mut kronrod = zero;
    let mut resabs = T::zero();
    for (i, &v) in fv.iter().enumerate() {
        kronrod = kronrod + v * weight(i);
        resabs = resabs + weight(i) * v.norm();
    }
    let mut gauss = fv[7] * lit::<T>(WG[3]);
    for j in [1usize, 3, 5] {
        gauss = gauss + (fv[j] + fv[14 - j]) * lit::<T>(WG[j / 2]);
    }
    let mean = kronrod * lit::<T>(0.5);
    let resasc = fv.iter().enumerate().fold(T::zero(), |acc, (i, &v)| acc + weight(i) * (v - mean).norm());
    let scale = half.abs();
    let err = kronrod_error(((kronrod - gauss) * half).norm(), resabs * scale, resasc * scale);
    (kronrod * half, err)
}

/// Nodes and weights of the composite 15-point Kronrod rule on `[a, b]`
/// with `panels` equal panels.
pub fn kronrod_nodes<T: Real>(a: T, b: T, panels: usize) -> Vec<(T, T)> {
    let panels = panels.max(1);
    let h = (b - a) / from_usize(panels);
    let half = h * lit(0.5);
    let mut out = Vec::with_capacity(15 * panels);
    for k in 0..panels {
        let mid = a + h * from_usize(k) + half;
        for j in 0..15 {
            let (x, w) = if j < 7 {
                (-XGK[j], WGK[j])
            } else if j == 7 {
                (0.0, WGK[7])
            } else {
                (XGK[14 - j], WGK[14 - j])
            };
            out.push((mid + half * lit(x), half * lit(w)));
        }
    }
    out
}

/// Splits `[a, b]` into equal panels no longer than `max_panel`.
pub fn panel_count<T: Real>(a: T, b: T, max_panel: T) -> usize {
    let n = ((b - a) / max_panel).ceil().to_usize().unwrap_or(1);
    n.max(1)
}

/// Integrates `f(panel_start, offset)` over the segments delimited by
/// `breakpoints`, each split into equal panels of length at most `max_panel`.
pub fn integrate_segments<T: Real, F: FnMut(T, T) -> T>(
    breakpoints: &[T],
    max_panel: T,
    mut f: F,
) -> Estimate<T> {
    let mut value = CompensatedSum::new();
    let mut error = CompensatedSum::new();
    for seg in breakpoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b <= a {
            continue;
        }
        let n = panel_count(a, b, max_panel);
        let h = (b - a) / T::from_usize(n).unwrap();
        for k in 0..n {
            let start = a + h * T::from_usize(k).unwrap();
            let (v, e) = gk15_local(h, |d| f(start, d));
            value.add(v);
            error.add(e);
        }
    }
    Estimate { value: value.value(), error: error.value() }
}

/// `∫_a^b f(x) dx` on equal panels.
pub fn integrate<T: Real, F: FnMut(T) -> T>(a: T, b: T, max_panel: T, mut f: F) -> Estimate<T> {
    integrate_segments(&[a, b], max_panel, |start, d| f(start + d))
}

/// `∫_start^∞ r^s e^{i p r} dr` and its error estimate, for `p > 0`, `start > 0`, `s < 0`.
///
/// The contour is rotated to `r = start + i t / p`, which turns the
/// oscillatory integrand into `(1 + i t / (p start))^s e^{-t}`. The integrand
/// is analytic except at `t = i p start`, so panels are graded by the
/// distance to that point.
pub fn power_tail_fourier<T: Real>(s: T, start: T, p: T) -> (Complex<T>, T) {
    let rho = p * start;
    let t_end: T = lit(50.0);
    let mut value = Complex::new(T::zero(), T::zero());
    let mut error = T::zero();
    let mut t = T::zero();
    let half: T = lit(0.5);
    while t < t_end {
        let w = (half * t.max(rho)).min(T::one()).min(t_end - t);
        let t0 = t;
        let (v, e) = gk15_local_complex(w, |d| {
            let u = (t0 + d) / rho;
            let log_mod = half * (u * u).ln_1p();
            let arg = u.atan();
            let ln = Complex::new(log_mod, arg) * s;
            ln.exp() * (-(t0 + d)).exp()
        });
        value = value + v;
        error = error + e;
        t = t + w;
    }
    let (sn, cs) = crate::scalar::sin_cos_product(p, start);
    let phase = Complex::new(cs, sn);
    let prefactor = Complex::new(T::zero(), start.powf(s) / p) * phase;
    let scale = start.powf(s) / p;
    (prefactor * value, error * scale)
}

/// `∫_start^∞ r^s sin(p r) dr`.
///
/// When `p · start < 1` the sine part is a small imaginary component of the
/// rotated-contour value, so the stretch up to `r = 1/p` (where the
/// integrand does not oscillate yet) is integrated directly on geometrically
/// growing panels.
pub fn power_tail_sine<T: Real>(s: T, start: T, p: T) -> Estimate<T> {
    let switch = T::one() / p;
    let mut value = CompensatedSum::new();
    let mut error = T::zero();
    let mut a = start;
    if start < switch {
        let growth: T = lit(1.2);
        while a < switch {
            let b = (a * growth).min(switch);
            let a0 = a;
            let (v, e) = gk15_local(b - a, |d| {
                let r = a0 + d;
                r.powf(s) * (p * r).sin()
            });
            value.add(v);
            error = error + e;
            a = b;
        }
    }
    let (tail, tail_error) = power_tail_fourier(s, a, p);
    value.add(tail.im);
    Estimate { value: value.value(), error: error + tail_error }
}
