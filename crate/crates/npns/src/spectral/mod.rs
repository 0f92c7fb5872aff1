//! Fourier representation of real periodic scalar and vector fields on the
//! torus `[0,2pi]^2`, with exact differential operators, Leray projection,
//! the charge-potential Poisson solve, and Parseval-based norms.
//!
//! Coefficient convention: `f(x) = sum_k c(k) exp(i k . x)` with wavevectors
//! `k in [-n/2, n/2)^2` in standard FFT order. A real field satisfies the
//! Hermitian symmetry `c(-k) = conj(c(k))`.

mod fft;

pub mod checkpoint;

use crate::error::{Error, Result};
use num_complex::Complex64;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Uniform `n x n` collocation grid on `[0,2pi]^2` with a 2/3-rule dealias
/// cutoff applied after every nonlinear product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
    dealias_cutoff: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "modes per dimension must be even and >= 8, got {n}"
            )));
        }
        let dealias_cutoff = n / 3;
        debug_assert!(dealias_cutoff < n / 2);
        Ok(Grid { n, dealias_cutoff })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dealias_cutoff(&self) -> usize {
        self.dealias_cutoff
    }

    /// Grid spacing `h = 2pi / n`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    /// Wavenumber for storage index `i`, in `[-n/2, n/2)`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Storage index for wavenumber `k` (must be in `[-n/2, n/2)`).
    #[inline]
    pub fn index_of(&self, k: i64) -> usize {
        debug_assert!(k >= -(self.n as i64) / 2 && k < self.n as i64 / 2);
        k.rem_euclid(self.n as i64) as usize
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            Err(Error::GridMismatch(self.n, other.n))
        } else {
            Ok(())
        }
    }
}

/// One real scalar periodic field stored as truncated Fourier coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
    mean_free: bool,
}

impl SpectralField {
    pub fn zero(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::ZERO; grid.n * grid.n],
            mean_free: true,
        }
    }

    /// Forward transform of real collocation samples (row-major, index
    /// `iy * n + ix`, sample point `(2pi ix/n, 2pi iy/n)`).
    pub fn from_samples(grid: Grid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.n * grid.n {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n * grid.n,
                samples.len()
            )));
        }
        let mut coeffs: Vec<Complex64> =
            samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        fft::fft2(&mut coeffs, grid.n, true);
        let norm = 1.0 / (grid.n * grid.n) as f64;
        for c in &mut coeffs {
            *c *= norm;
        }
        Ok(SpectralField {
            grid,
            coeffs,
            mean_free: false,
        })
    }

    /// Builds a field from a list of `(kx, ky, c)` modes; the conjugate mode
    /// `c(-k) = conj(c)` is set automatically so the field is real-valued.
    pub fn from_modes(grid: Grid, modes: &[(i64, i64, Complex64)]) -> Self {
        let mut f = SpectralField::zero(grid);
        for &(kx, ky, c) in modes {
            f.set_mode_pair(kx, ky, c);
        }
        f.mean_free = f.coeffs[0].norm() == 0.0;
        f
    }

    /// Random real field supported on modes `0 < max(|kx|,|ky|) <= max_mode`,
    /// rescaled to the requested L2 norm. Always mean-free.
    pub fn random(grid: Grid, rng: &mut impl rand::Rng, max_mode: usize, l2_norm: f64) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let m = max_mode.min(grid.dealias_cutoff) as i64;
        let mut f = SpectralField::zero(grid);
        for kx in -m..=m {
            for ky in -m..=m {
                if kx == 0 && ky == 0 {
                    continue;
                }
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                f.set_mode_pair(kx, ky, Complex64::new(re, im));
            }
        }
        f.mean_free = true;
        let cur = f.norm_l2();
        if cur > 0.0 {
            f.scale(l2_norm / cur);
        }
        f
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn is_mean_free(&self) -> bool {
        self.mean_free
    }

    /// Coefficient at wavevector `(kx, ky)`.
    pub fn coeff(&self, kx: i64, ky: i64) -> Complex64 {
        let ix = self.grid.index_of(kx);
        let iy = self.grid.index_of(ky);
        self.coeffs[iy * self.grid.n + ix]
    }

    /// Sets `c(k) = c` and `c(-k) = conj(c)`. For `k = 0` the imaginary part
    /// is dropped.
    pub fn set_mode_pair(&mut self, kx: i64, ky: i64, c: Complex64) {
        let n = self.grid.n;
        let ix = self.grid.index_of(kx);
        let iy = self.grid.index_of(ky);
        if kx == 0 && ky == 0 {
            self.coeffs[0] = Complex64::new(c.re, 0.0);
            self.mean_free = c.re == 0.0;
            return;
        }
        self.coeffs[iy * n + ix] = c;
        let jx = (n - ix) % n;
        let jy = (n - iy) % n;
        self.coeffs[jy * n + jx] = c.conj();
        if jx == ix && jy == iy {
            // self-conjugate (Nyquist) mode must be real
            self.coeffs[iy * n + ix] = Complex64::new(c.re, 0.0);
        }
    }

    /// Mean value of the field, `c(0,0)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn set_mean(&mut self, m: f64) {
        self.coeffs[0] = Complex64::new(m, 0.0);
        self.mean_free = m == 0.0;
    }

    pub fn make_mean_free(&mut self) {
        self.coeffs[0] = Complex64::ZERO;
        self.mean_free = true;
    }

    /// Worst Hermitian-symmetry defect `|c(-k) - conj(c(k))|` and its mode.
    pub fn hermitian_defect(&self) -> (i64, i64, f64) {
        let n = self.grid.n;
        let mut worst = (0i64, 0i64, 0.0f64);
        for iy in 0..n {
            for ix in 0..n {
                let jx = (n - ix) % n;
                let jy = (n - iy) % n;
                let d = (self.coeffs[jy * n + jx] - self.coeffs[iy * n + ix].conj()).norm();
                if d > worst.2 {
                    worst = (self.grid.wavenumber(ix), self.grid.wavenumber(iy), d);
                }
            }
        }
        worst
    }

    fn check_hermitian(&self) -> Result<()> {
        let scale = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let (kx, ky, defect) = self.hermitian_defect();
        if defect > 1e-12 * scale.max(1.0) {
            return Err(Error::HermitianViolation { kx, ky, defect });
        }
        Ok(())
    }

    /// Inverse transform to real collocation samples. Rejects fields whose
    /// coefficients violate Hermitian symmetry.
    pub fn to_physical(&self) -> Result<Vec<f64>> {
        self.check_hermitian()?;
        Ok(self.physical_unchecked())
    }

    pub(crate) fn physical_unchecked(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft::fft2(&mut buf, self.grid.n, false);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Zeroes all modes with `|kx| > cutoff` or `|ky| > cutoff` (2/3 rule).
    pub fn dealias(&mut self) {
        let n = self.grid.n;
        let cut = self.grid.dealias_cutoff as i64;
        for iy in 0..n {
            let ky = self.grid.wavenumber(iy);
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix);
                if kx.abs() > cut || ky.abs() > cut {
                    self.coeffs[iy * n + ix] = Complex64::ZERO;
                }
            }
        }
    }

    /// Partial derivative along axis 0 (`x`) or 1 (`y`): multiply by `i k`.
    /// The Nyquist mode contribution is zeroed to keep the result real.
    pub fn derivative(&self, axis: usize) -> SpectralField {
        let n = self.grid.n;
        let nyq = -(n as i64) / 2;
        let mut out = SpectralField::zero(self.grid);
        for iy in 0..n {
            let ky = self.grid.wavenumber(iy);
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix);
                let k = if axis == 0 { kx } else { ky };
                if k == nyq {
                    continue;
                }
                out.coeffs[iy * n + ix] =
                    self.coeffs[iy * n + ix] * Complex64::new(0.0, k as f64);
            }
        }
        out.mean_free = true;
        out
    }

    /// Gradient as a two-component vector field.
    pub fn gradient(&self) -> VectorField {
        VectorField {
            x: self.derivative(0),
            y: self.derivative(1),
        }
    }

    /// Laplacian: multiply by `-|k|^2`.
    pub fn laplacian(&self) -> SpectralField {
        let n = self.grid.n;
        let mut out = SpectralField::zero(self.grid);
        for iy in 0..n {
            let ky = self.grid.wavenumber(iy) as f64;
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix) as f64;
                out.coeffs[iy * n + ix] = self.coeffs[iy * n + ix] * (-(kx * kx + ky * ky));
            }
        }
        out.mean_free = true;
        out
    }

    /// L2 norm via Parseval: `||f|| = 2pi sqrt(sum |c(k)|^2)`.
    pub fn norm_l2(&self) -> f64 {
        TWO_PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// H1 seminorm via Parseval: `||grad f|| = 2pi sqrt(sum |k|^2 |c(k)|^2)`.
    pub fn seminorm_h1(&self) -> f64 {
        let n = self.grid.n;
        let mut s = 0.0;
        for iy in 0..n {
            let ky = self.grid.wavenumber(iy) as f64;
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix) as f64;
                s += (kx * kx + ky * ky) * self.coeffs[iy * n + ix].norm_sqr();
            }
        }
        TWO_PI * s.sqrt()
    }

    /// Lp norm (p = 3 or 4) by collocation-grid quadrature.
    pub fn norm_lp(&self, p: u32) -> f64 {
        assert!(p == 3 || p == 4, "only L3 and L4 are supported");
        let w = self.grid.spacing() * self.grid.spacing();
        let s: f64 = self
            .physical_unchecked()
            .iter()
            .map(|&v| v.abs().powi(p as i32))
            .sum();
        (w * s).powf(1.0 / p as f64)
    }

    /// L2 inner product via Parseval.
    pub fn inner_l2(&self, other: &SpectralField) -> f64 {
        TWO_PI
            * TWO_PI
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>()
    }

    /// Dealiased pointwise product, the basic pseudo-spectral building block.
    pub fn mul_dealiased(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(&other.grid)?;
        let a = self.physical_unchecked();
        let b = other.physical_unchecked();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let mut out = SpectralField::from_samples(self.grid, &prod)?;
        out.dealias();
        Ok(out)
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
        self.mean_free = self.mean_free && other.mean_free;
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub(crate) fn from_raw(grid: Grid, coeffs: Vec<Complex64>, mean_free: bool) -> Self {
        debug_assert_eq!(coeffs.len(), grid.n * grid.n);
        SpectralField {
            grid,
            coeffs,
            mean_free,
        }
    }
}

/// Two scalar fields sharing one grid, interpreted as a vector field.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub x: SpectralField,
    pub y: SpectralField,
}

impl VectorField {
    pub fn new(x: SpectralField, y: SpectralField) -> Result<Self> {
        x.grid.check_same(&y.grid)?;
        Ok(VectorField { x, y })
    }

    pub fn zero(grid: Grid) -> Self {
        VectorField {
            x: SpectralField::zero(grid),
            y: SpectralField::zero(grid),
        }
    }

    /// Random mean-free divergence-free field with the requested L2 norm.
    pub fn random_divergence_free(
        grid: Grid,
        rng: &mut impl rand::Rng,
        max_mode: usize,
        l2_norm: f64,
    ) -> Self {
        let sf = SpectralField::random(grid, rng, max_mode, 1.0);
        // stream-function construction: u = (d_y psi, -d_x psi) is exactly
        // divergence-free
        let mut vf = VectorField {
            x: sf.derivative(1),
            y: sf.derivative(0).scaled(-1.0),
        };
        let cur = vf.norm_l2();
        if cur > 0.0 {
            vf.scale(l2_norm / cur);
        }
        vf
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.x.grid
    }

    /// `i k . v` in spectral space; exact.
    pub fn divergence(&self) -> SpectralField {
        self.x.derivative(0).add(&self.y.derivative(1))
    }

    /// Leray projection onto divergence-free fields:
    /// `(P v)(k) = v(k) - k (k . v(k)) / |k|^2`, identity at `k = 0`.
    pub fn leray_project(&self) -> VectorField {
        let grid = self.grid();
        let n = grid.n;
        let mut px = self.x.clone();
        let mut py = self.y.clone();
        for iy in 0..n {
            let ky = grid.wavenumber(iy) as f64;
            for ix in 0..n {
                let kx = grid.wavenumber(ix) as f64;
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    continue;
                }
                let idx = iy * n + ix;
                let d = (kx * px.coeffs[idx] + ky * py.coeffs[idx]) / k2;
                px.coeffs[idx] -= kx * d;
                py.coeffs[idx] -= ky * d;
            }
        }
        VectorField { x: px, y: py }
    }

    pub fn norm_l2(&self) -> f64 {
        self.x.norm_l2().hypot(self.y.norm_l2())
    }

    pub fn seminorm_h1(&self) -> f64 {
        self.x.seminorm_h1().hypot(self.y.seminorm_h1())
    }

    pub fn inner_l2(&self, other: &VectorField) -> f64 {
        self.x.inner_l2(&other.x) + self.y.inner_l2(&other.y)
    }

    /// Max pointwise magnitude on the collocation grid.
    pub fn max_abs(&self) -> f64 {
        let ax = self.x.physical_unchecked();
        let ay = self.y.physical_unchecked();
        ax.iter()
            .zip(&ay)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, a: f64) {
        self.x.scale(a);
        self.y.scale(a);
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        VectorField {
            x: self.x.scaled(a),
            y: self.y.scaled(a),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.x.axpy(a, &other.x);
        self.y.axpy(a, &other.y);
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.add(&other.x),
            y: self.y.add(&other.y),
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }

    pub fn dealias(&mut self) {
        self.x.dealias();
        self.y.dealias();
    }
}

/// Solves `-eps0 * Delta Phi = rho` on the torus. Requires a mean-free charge
/// density (periodic solvability / charge neutrality); the potential is
/// normalized to zero mean.
pub fn solve_poisson(rho: &SpectralField, eps0: f64) -> Result<SpectralField> {
    if eps0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    let mean = rho.coeffs[0].norm();
    let scale = rho.norm_l2().max(1.0);
    if mean > 1e-10 * scale {
        return Err(Error::ChargeNotNeutral(mean));
    }
    let grid = rho.grid;
    let n = grid.n;
    let mut out = SpectralField::zero(grid);
    for iy in 0..n {
        let ky = grid.wavenumber(iy) as f64;
        for ix in 0..n {
            let kx = grid.wavenumber(ix) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            out.coeffs[iy * n + ix] = rho.coeffs[iy * n + ix] / (eps0 * k2);
        }
    }
    out.mean_free = true;
    Ok(out)
}

/// Dealiased advection `u . grad s` of a scalar by a vector field.
pub fn advect_scalar(u: &VectorField, s: &SpectralField) -> Result<SpectralField> {
    let gx = s.derivative(0);
    let gy = s.derivative(1);
    let mut out = u.x.mul_dealiased(&gx)?;
    out.axpy(1.0, &u.y.mul_dealiased(&gy)?);
    // for divergence-free u the advection term is a total divergence; its
    // zero mode vanishes analytically, enforce it exactly
    out.make_mean_free();
    Ok(out)
}

/// Dealiased advection `(u . grad) v`, componentwise.
pub fn advect_vector(u: &VectorField, v: &VectorField) -> Result<VectorField> {
    Ok(VectorField {
        x: advect_scalar(u, &v.x)?,
        y: advect_scalar(u, &v.y)?,
    })
}
