//! Dense complex eigensolver for small matrices: Householder reduction to
//! Hessenberg form, shifted QR with deflation, and inverse iteration for the
//! eigenvectors.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CMatrix<T> {
    pub n: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex::new(T::zero(), T::zero()); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_rows<const N: usize>(rows: [[Complex<T>; N]; N]) -> Self {
        Self { n: N, data: rows.iter().flat_map(|r| r.iter().copied()).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn apply(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| (0..self.n).fold(Complex::new(T::zero(), T::zero()), |acc, j| acc + self[(i, j)] * x[j]))
            .collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenPair<T> {
    pub value: Complex<T>,
    pub vector: Vec<Complex<T>>,
    /// `‖Mx - λx‖ / ‖M‖_F` with `‖x‖ = 1`.
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Eigen<T> {
    /// Sorted by real part, then imaginary part.
    pub pairs: Vec<EigenPair<T>>,
    pub iterations: usize,
    /// Eigenvalue clusters whose computed eigenvectors are nearly parallel,
    /// a sign of a defective (non-diagonalizable) matrix.
    pub defective_suspect: bool,
}

impl<T: Real> Eigen<T> {
    pub fn values(&self) -> Vec<Complex<T>> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Reduces `a` to upper Hessenberg form by Householder similarity.
/// Columns that are already reduced are left untouched, so diagonal and
/// triangular inputs pass through bit-for-bit.
pub fn hessenberg<T: Real>(a: &mut CMatrix<T>) {
    let n = a.n;
    for k in 0..n.saturating_sub(2) {
        let tail: T = ((k + 2)..n).map(|i| a[(i, k)].norm_sqr()).fold(T::zero(), |x, y| x + y);
        if tail == T::zero() {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = (tail + x0.norm_sqr()).sqrt();
        let phase = if x0.norm() == T::zero() { Complex::new(T::one(), T::zero()) } else { x0 / x0.norm() };
        // v = x + phase·‖x‖ e1
        let mut v: Vec<Complex<T>> = ((k + 1)..n).map(|i| a[(i, k)]).collect();
        v[0] = v[0] + phase * alpha;
        let vnorm2: T = v.iter().map(|z| z.norm_sqr()).fold(T::zero(), |x, y| x + y);
        let two = lit::<T>(2.0);
        // H = I - 2vv*/v*v applied on the left (rows k+1..n) ...
        for j in 0..n {
            let mut s = zero::<T>();
            for (t, vi) in v.iter().enumerate() {
                s = s + vi.conj() * a[(k + 1 + t, j)];
            }
            let s = s * (two / vnorm2);
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] = a[(k + 1 + t, j)] - *vi * s;
            }
        }
        // ... and on the right (columns k+1..n)
        for i in 0..n {
            let mut s = zero::<T>();
            for (t, vi) in v.iter().enumerate() {
                s = s + a[(i, k + 1 + t)] * *vi;
            }
            let s = s * (two / vnorm2);
            for (t, vi) in v.iter().enumerate() {
                a[(i, k + 1 + t)] = a[(i, k + 1 + t)] - s * vi.conj();
            }
        }
        for i in (k + 2)..n {
            a[(i, k)] = zero();
        }
    }
}

/// Givens rotation `[c s; -s̄ c]` with real `c` mapping `(a, b)` to `(r, 0)`.
fn givens<T: Real>(a: Complex<T>, b: Complex<T>) -> (T, Complex<T>) {
    let na = a.norm();
    let nb = b.norm();
    if nb == T::zero() {
        return (T::one(), zero());
    }
    if na == T::zero() {
        return (T::zero(), Complex::new(T::one(), T::zero()) * (b.conj() / nb));
    }
    let r = na.hypot(nb);
    let c = na / r;
    let s = (a / na) * b.conj() / r;
    (c, s)
}

/// Eigenvalues of an upper Hessenberg matrix by single-shift QR.
fn hessenberg_qr<T: Real>(h: &mut CMatrix<T>, max_iter: usize) -> Result<(Vec<Complex<T>>, usize)> {
    let n = h.n;
    let eps = T::epsilon();
    let mut values = vec![zero::<T>(); n];
    let mut total = 0usize;
    if n == 0 {
        return Ok((values, 0));
    }
    let mut hi = n - 1;
    let mut iter = 0usize;
    loop {
        // locate the active block [lo, hi]
        let mut lo = hi;
        while lo > 0 {
            let s = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let sub = h[(lo, lo - 1)].norm();
            if sub == T::zero() || sub <= eps * s {
                h[(lo, lo - 1)] = zero();
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            values[hi] = h[(hi, hi)];
            iter = 0;
            if hi == 0 {
                break;
            }
            hi -= 1;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > max_iter {
            return Err(Error::InvalidInput("QR iteration did not converge".into()));
        }
        // Wilkinson shift from the trailing 2×2, with exceptional shifts
        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter % 11 == 0 {
            d + Complex::new(h[(hi, hi - 1)].norm() * lit(0.75), T::zero())
        } else {
            let half = lit::<T>(0.5);
            let m = (a + d) * half;
            let disc = ((a - d) * half * ((a - d) * half) + b * c).sqrt();
            let (r1, r2) = (m + disc, m - disc);
            if (r1 - d).norm() <= (r2 - d).norm() {
                r1
            } else {
                r2
            }
        };
        // QR step on the active block: H - μI = QR, H ← RQ + μI
        for k in lo..=hi {
            h[(k, k)] = h[(k, k)] - mu;
        }
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = y * c - s.conj() * x;
            }
            rots.push((c, s));
        }
        for (t, &(c, s)) in rots.iter().enumerate() {
            let k = lo + t;
            for i in lo..=(k + 1).min(hi) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + y * s.conj();
                h[(i, k + 1)] = y * c - x * s;
            }
        }
        for k in lo..=hi {
            h[(k, k)] = h[(k, k)] + mu;
        }
    }
    Ok((values, total))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; zero
/// pivots are replaced by a tiny multiple of the matrix scale.
fn lu_solve<T: Real>(a: &CMatrix<T>, b: &[Complex<T>], floor: T) -> Vec<Complex<T>> {
    let n = a.n;
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[(i, k)].norm().partial_cmp(&m[(j, k)].norm()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(k);
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        if m[(k, k)].norm() < floor {
            m[(k, k)] = Complex::new(floor, T::zero());
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            for j in k..n {
                m[(i, j)] = m[(i, j)] - f * m[(k, j)];
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s = s - m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    x
}

fn normalize<T: Real>(x: &mut [Complex<T>]) -> T {
    let nrm = x.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt();
    if nrm > T::zero() {
        for z in x.iter_mut() {
            *z = *z / nrm;
        }
    }
    nrm
}

fn residual_of<T: Real>(a: &CMatrix<T>, lambda: Complex<T>, x: &[Complex<T>], scale: T) -> T {
    let ax = a.apply(x);
    let r = ax.iter().zip(x).map(|(u, v)| (*u - lambda * *v).norm_sqr()).fold(T::zero(), |s, t| s + t).sqrt();
    if scale > T::zero() {
        r / scale
    } else {
        r
    }
}

/// Eigenvalues and unit eigenvectors of a small complex matrix.
pub fn eigen<T: Real>(a: &CMatrix<T>) -> Result<Eigen<T>> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = a.n;
    let mut h = a.clone();
    hessenberg(&mut h);
    let (mut values, iterations) = hessenberg_qr(&mut h, 60 * n.max(1))?;
    values.sort_by(|x, y| {
        x.re.partial_cmp(&y.re).unwrap_or(std::cmp::Ordering::Equal).then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let scale = a.frobenius();
    let floor = (scale * T::epsilon()).max(T::min_positive_value());
    let mut pairs = Vec::with_capacity(n);
    for (idx, &lambda) in values.iter().enumerate() {
        let mut x: Vec<Complex<T>>;
        let diag_exact = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == zero()));
        if diag_exact {
            // exact eigenvectors of a diagonal matrix: pick the matching
            // diagonal slot, skipping ones taken by equal earlier values
            let taken = values[..idx].iter().filter(|v| **v == lambda).count();
            let slot = (0..n).filter(|&i| a[(i, i)] == lambda).nth(taken).unwrap_or(0);
            x = vec![zero(); n];
            x[slot] = Complex::new(T::one(), T::zero());
        } else {
            let mut shifted = a.clone();
            let delta = floor * lit(8.0);
            for i in 0..n {
                shifted[(i, i)] = shifted[(i, i)] - lambda - Complex::new(delta, T::zero());
            }
            // start vector varies with the index so that clustered
            // eigenvalues pick up different directions
            x = (0..n)
                .map(|i| {
                    let t = from_usize::<T>(i + 1) * from_usize::<T>(idx + 1);
                    Complex::new(T::one() + t.sin() * lit(0.1), t.cos() * lit(0.1))
                })
                .collect();
            normalize(&mut x);
            for _ in 0..3 {
                x = lu_solve(&shifted, &x, floor);
                normalize(&mut x);
            }
        }
        let residual = residual_of(a, lambda, &x, scale);
        pairs.push(EigenPair { value: lambda, vector: x, residual });
    }
    // near-parallel eigenvectors inside clusters hint at a Jordan block
    let mut defective = false;
    let tol = lit::<T>(1e-6) * scale.max(T::min_positive_value());
    for i in 0..n {
        for j in (i + 1)..n {
            if (pairs[i].value - pairs[j].value).norm() <= tol {
                let overlap = pairs[i]
                    .vector
                    .iter()
                    .zip(&pairs[j].vector)
                    .fold(zero::<T>(), |s, (u, v)| s + u.conj() * *v)
                    .norm();
                if overlap > T::one() - lit(1e-6) {
                    defective = true;
                }
            }
        }
    }
    Ok(Eigen { pairs, iterations, defective_suspect: defective })
}
