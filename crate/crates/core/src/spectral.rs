//! Fourier representation of real, mean-zero functions on the torus `[0, 2π)`.
//!
//! Conventions used throughout the crate:
//!
//! * `u(x) = Σ_{|k|≤N} û_k e^{ikx}` and `û_k = (1/2π) ∫ u e^{-ikx} dx`, so
//!   `∂_x` is the multiplier `ik` and the Airy flow `e^{-t∂_x³}` is `e^{ik³t}`.
//! * Sobolev norms use the coefficient convention
//!   `‖u‖_{H^s}² = Σ_k ⟨k⟩^{2s} |û_k|²` with `⟨k⟩ = 1 + |k|` (no factor 2π).
//! * Integral functionals (mass, momentum, energy) carry the physical
//!   factor: `∫_𝕋 h dx = 2π ĥ_0`.
//!
//! Products are formed on a zero-padded physical grid of `M` points. A
//! degree-`d` product of band-`N` fields is alias free on `|k| ≤ N` as long
//! as `M > (d + 1) N`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// `⟨k⟩ = 1 + |k|`.
#[inline]
pub fn bracket(k: i64) -> f64 {
    1.0 + k.unsigned_abs() as f64
}

/// Discretization of the torus: wavenumbers `|k| ≤ N` sampled on `M` equispaced points.
pub struct Grid {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m
    }
}

impl Grid {
    pub fn new(n: usize, m: usize) -> Result<Arc<Grid>> {
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        if m < 2 * n + 2 {
            return Err(Error::InvalidGrid(format!(
                "M = {m} is below 2N + 2 = {}",
                2 * n + 2
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            n,
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }))
    }

    /// Smallest 5-smooth sample count that resolves products up to `degree`.
    pub fn with_headroom(n: usize, degree: usize) -> Result<Arc<Grid>> {
        let needed = Self::required_samples(n, degree.max(1));
        Self::new(n, next_smooth(needed))
    }

    /// Minimum `M` for an alias-free degree-`degree` product: `(degree + 1) N + 1`.
    pub fn required_samples(n: usize, degree: usize) -> usize {
        ((degree + 1) * n + 1).max(2 * n + 2)
    }

    pub fn max_wavenumber(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|j| j as f64 * self.spacing()).collect()
    }

    pub fn supports_degree(&self, degree: usize) -> bool {
        self.m >= Self::required_samples(self.n, degree)
    }

    pub fn check_degree(&self, degree: usize) -> Result<()> {
        if self.supports_degree(degree) {
            Ok(())
        } else {
            Err(Error::InsufficientPadding {
                degree,
                samples: self.m,
                required: Self::required_samples(self.n, degree),
            })
        }
    }

    /// Number of stored coefficients, `2N + 1`.
    pub fn len(&self) -> usize {
        2 * self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Wavenumbers `-N..=N` in storage order.
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> {
        let n = self.n as i64;
        -n..=n
    }

    /// Evaluate `Σ_{|k|≤N} c_k e^{ikx_j}` on the physical grid (real part).
    pub(crate) fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let n = self.n as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        for (idx, c) in coeffs.iter().enumerate() {
            let k = idx as i64 - n;
            buf[k.rem_euclid(self.m as i64) as usize] = *c;
        }
        self.inverse.process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Complex synthesis, used to check the reality of a spectrum.
    pub(crate) fn synthesize_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        for (idx, c) in coeffs.iter().enumerate() {
            let k = idx as i64 - n;
            buf[k.rem_euclid(self.m as i64) as usize] = *c;
        }
        self.inverse.process(&mut buf);
        buf
    }

    /// Discrete Fourier coefficients `(1/M) Σ_j u_j e^{-ikx_j}` for `|k| ≤ N`,
    /// including the zero mode.
    pub(crate) fn analyze(&self, samples: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(samples.len(), self.m);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.m as f64;
        let n = self.n as i64;
        (-n..=n)
            .map(|k| buf[k.rem_euclid(self.m as i64) as usize] * scale)
            .collect()
    }
}

fn next_smooth(mut m: usize) -> usize {
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

fn ensure_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            left_n: a.n,
            left_m: a.m,
            right_n: b.n,
            right_m: b.m,
        })
    }
}

/// A real, mean-zero function on the torus held as Fourier coefficients `û_k`, `|k| ≤ N`.
///
/// Constructors enforce `û_0 = 0`; Hermitian symmetry `û_{-k} = conj(û_k)` is
/// preserved by every operation in this crate when the inputs satisfy it.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        SpectralField {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Build from the full coefficient list ordered `k = -N..=N`.
    ///
    /// The zero mode is discarded. Rejects non-finite entries and spectra
    /// that are not Hermitian to `1e-12` relative.
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite coefficient at k = {}", i as i64 - grid.n as i64)));
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let n = grid.n;
        for k in 1..=n {
            let d = (coeffs[n + k] - coeffs[n - k].conj()).norm();
            if d > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "spectrum is not Hermitian at k = {k} (mismatch {d:e})"
                )));
            }
        }
        let mut field = SpectralField {
            grid: Arc::clone(grid),
            coeffs,
        };
        field.coeffs[n] = Complex64::new(0.0, 0.0);
        Ok(field)
    }

    /// Build from positive-wavenumber coefficients `û_1..=û_N`; negative
    /// modes are filled by conjugation. Shorter inputs are zero padded.
    pub fn from_positive(grid: &Arc<Grid>, positive: &[Complex64]) -> Self {
        let mut field = Self::zeros(grid);
        for (i, c) in positive.iter().take(grid.n).enumerate() {
            field.set_mode(i as i64 + 1, *c);
        }
        field
    }

    /// Hermitian field with `û_k = f(k)` for `k = 1..=N`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(i64) -> Complex64) -> Self {
        let mut field = Self::zeros(grid);
        for k in 1..=grid.n as i64 {
            field.set_mode(k, f(k));
        }
        field
    }

    /// Sets `û_k = c` and `û_{-k} = conj(c)`. Wavenumbers outside `1..=N` in
    /// absolute value are ignored.
    pub fn set_mode(&mut self, k: i64, c: Complex64) {
        let n = self.grid.n as i64;
        if k == 0 || k.abs() > n {
            return;
        }
        let (kp, cp) = if k > 0 { (k, c) } else { (-k, c.conj()) };
        self.coeffs[(n + kp) as usize] = cp;
        self.coeffs[(n - kp) as usize] = cp.conj();
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Coefficients ordered `k = -N..=N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `û_k`, zero outside the band.
    #[inline]
    pub fn coeff(&self, k: i64) -> Complex64 {
        let n = self.grid.n as i64;
        if k.abs() > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Samples `u(x_j)` on the `M` physical grid points.
    pub fn to_physical(&self) -> Vec<f64> {
        self.grid.synthesize(&self.coeffs)
    }

    /// Largest imaginary part of the synthesized samples.
    pub fn imaginary_residue(&self) -> f64 {
        self.grid
            .synthesize_complex(&self.coeffs)
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }

    /// Projects `M` real samples onto `|k| ≤ N` and removes the mean.
    pub fn to_spectral(grid: &Arc<Grid>, samples: &[f64]) -> Result<Self> {
        Ok(Self::to_spectral_with_mean(grid, samples)?.1)
    }

    /// As [`SpectralField::to_spectral`], also returning the removed zero mode
    /// `(1/M) Σ_j u_j`.
    pub fn to_spectral_with_mean(grid: &Arc<Grid>, samples: &[f64]) -> Result<(f64, Self)> {
        if samples.len() != grid.m {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.m,
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let mut coeffs = grid.analyze(samples);
        let n = grid.n;
        let mean = coeffs[n].re;
        // Symmetrize away the O(eps) Hermitian defect of the real FFT.
        for k in 1..=n {
            let c = 0.5 * (coeffs[n + k] + coeffs[n - k].conj());
            coeffs[n + k] = c;
            coeffs[n - k] = c.conj();
        }
        coeffs[n] = Complex64::new(0.0, 0.0);
        Ok((
            mean,
            SpectralField {
                grid: Arc::clone(grid),
                coeffs,
            },
        ))
    }

    /// `(output)_k = symbol(k) û_k`. The symbol must satisfy
    /// `symbol(-k) = conj(symbol(k))` for the result to stay real.
    pub fn apply_multiplier(&self, symbol: impl Fn(i64) -> Complex64) -> Self {
        let n = self.grid.n as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = i as i64 - n;
                if k == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    symbol(k) * c
                }
            })
            .collect();
        SpectralField {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    pub fn derivative(&self) -> Self {
        self.apply_multiplier(|k| Complex64::new(0.0, k as f64))
    }

    /// `(Σ_k ⟨k⟩^{2s} |û_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let n = self.grid.n as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| bracket(i as i64 - n).powf(2.0 * s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Damped Airy flow `W_t^γ = e^{-t∂_x³ - γt}`: `û_k ↦ e^{(ik³ - γ)t} û_k`.
    pub fn airy_propagator(&self, t: f64, gamma: f64) -> Self {
        self.apply_multiplier(|k| airy_symbol(k, t, gamma))
    }

    pub fn scale(&self, a: f64) -> Self {
        SpectralField {
            grid: Arc::clone(&self.grid),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// `self + a * other`.
    pub fn try_axpy(&self, a: f64, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self.zip_with(other, |x, y| x + y * a))
    }

    /// Largest coefficient-wise distance.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub(crate) fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        SpectralField {
            grid: Arc::clone(&self.grid),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, mut coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        coeffs[grid.n] = Complex64::new(0.0, 0.0);
        SpectralField {
            grid: Arc::clone(grid),
            coeffs,
        }
    }

    /// Re-expresses the field on another grid, truncating or zero-padding in `k`.
    pub fn resample(&self, grid: &Arc<Grid>) -> Self {
        Self::from_fn(grid, |k| self.coeff(k))
    }
}

#[inline]
pub fn airy_symbol(k: i64, t: f64, gamma: f64) -> Complex64 {
    let kf = k as f64;
    Complex64::from_polar((-gamma * t).exp(), kf * kf * kf * t)
}

/// Zero mode `(1/M) Σ_j Π_i u_i(x_j)` together with the projected product.
pub(crate) fn product_with_mean(fields: &[&SpectralField]) -> Result<(f64, SpectralField)> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
    let grid = first.grid();
    for f in &fields[1..] {
        ensure_same_grid(grid, f.grid())?;
    }
    grid.check_degree(fields.len())?;
    let mut acc = first.to_physical();
    for f in &fields[1..] {
        for (a, b) in acc.iter_mut().zip(f.to_physical()) {
            *a *= b;
        }
    }
    SpectralField::to_spectral_with_mean(grid, &acc)
}

/// Alias-free truncation of the pointwise product `Π_i u_i` to `|k| ≤ N`,
/// mean removed.
pub fn dealiased_product(fields: &[&SpectralField]) -> Result<SpectralField> {
    Ok(product_with_mean(fields)?.1)
}

/// Zero mode of `u^p` computed on the padded grid (exact when `M > (p+1)N`).
pub fn power_mean(u: &SpectralField, p: usize) -> Result<f64> {
    u.grid().check_degree(p)?;
    match p {
        0 => return Ok(1.0),
        // fields are mean-zero by construction
        1 => return Ok(0.0),
        _ => {}
    }
    let samples = u.to_physical();
    Ok(samples.iter().map(|v| v.powi(p as i32)).sum::<f64>() / samples.len() as f64)
}
