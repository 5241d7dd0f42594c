//! Right-hand side of `u_t + u_xxx + γu + (g(u))_x = f` and its time integration.
//!
//! In Fourier variables the equation reads
//! `∂_t û_k = (ik³ − γ) û_k − ik ĝ(u)_k + f̂_k`. The stiff linear symbol
//! `ik³ − γ` is integrated exactly by an integrating factor; the remaining
//! terms go through classical RK4 (Lawson's IF-RK4). The gauge phase
//! `θ' = ⨍ g′(u)` is carried through the same stages.
//!
//! Stability: the linear part imposes no restriction. The nonlinear flux
//! behaves like `g′(u) ∂_x`, so `dt · N · max|g′(u)| ≲ 2.8` is needed.
//! IF-RK4 loses accuracy (not stability) when nonlinear and dispersive
//! time scales couple strongly at the top of the band.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gauge::{self, GaugeNormalization};
use crate::spectral::{airy_symbol, Grid, SpectralField};

/// `g(u) = Σ_{j≥2} a_j u^j`. Constant and linear terms are not representable.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PolynomialNonlinearity {
    /// `coeffs[i]` is `a_{i+2}`; no trailing zeros.
    coeffs: Vec<f64>,
}

impl PolynomialNonlinearity {
    /// `g ≡ 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    /// From `[a_2, a_3, …]`.
    pub fn from_coeffs(coeffs: &[f64]) -> Result<Self> {
        if let Some(a) = coeffs.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coefficient {a}")));
        }
        let mut coeffs = coeffs.to_vec();
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Ok(PolynomialNonlinearity { coeffs })
    }

    /// From `(degree, coefficient)` pairs; degrees below 2 are rejected.
    pub fn from_terms(terms: &[(usize, f64)]) -> Result<Self> {
        let max = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let mut coeffs = vec![0.0; max.saturating_sub(1)];
        for &(degree, a) in terms {
            if degree < 2 {
                return Err(Error::InvalidArgument(format!(
                    "g may not contain a term of degree {degree}; shift the frame to remove it"
                )));
            }
            coeffs[degree - 2] += a;
        }
        Self::from_coeffs(&coeffs)
    }

    /// `a u^degree`.
    pub fn monomial(degree: usize, a: f64) -> Result<Self> {
        Self::from_terms(&[(degree, a)])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest degree present, 0 for `g ≡ 0`.
    pub fn degree(&self) -> usize {
        if self.coeffs.is_empty() {
            0
        } else {
            self.coeffs.len() + 1
        }
    }

    /// Nonzero `(degree, a_degree)` pairs in increasing degree.
    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| (i + 2, *a))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        // Horner on a_2 + a_3 x + …, then times x²
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a) * x * x
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * x + (i + 2) as f64 * a)
            * x
    }

    /// `G(x)` with `G′ = g`, `G(0) = 0`.
    pub fn eval_antiderivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * x + a / (i + 3) as f64)
            * x
            * x
            * x
    }

    /// The odd-degree, negative-leading-coefficient class with global bounds.
    pub fn is_defocusing(&self) -> bool {
        let d = self.degree();
        d >= 3 && d % 2 == 1 && self.coeffs[d - 2] < 0.0
    }
}

/// The damped, forced problem on a fixed grid.
#[derive(Clone, Debug)]
pub struct Problem {
    pub g: PolynomialNonlinearity,
    pub gamma: f64,
    pub forcing: SpectralField,
    /// Normalization of the gauge rate; see [`GaugeNormalization`].
    pub gauge: GaugeNormalization,
    grid: Arc<Grid>,
}

impl Problem {
    pub fn new(g: PolynomialNonlinearity, gamma: f64, forcing: SpectralField) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("damping must be finite and nonnegative, got {gamma}")));
        }
        if !forcing.is_finite() {
            return Err(Error::InvalidArgument("forcing has non-finite coefficients".into()));
        }
        let grid = Arc::clone(forcing.grid());
        grid.check_degree(g.degree().max(1))?;
        Ok(Problem {
            g,
            gamma,
            forcing,
            gauge: GaugeNormalization::default(),
            grid,
        })
    }

    pub fn with_gauge(mut self, gauge: GaugeNormalization) -> Self {
        self.gauge = gauge;
        self
    }

    /// Unforced problem on `grid`.
    pub fn unforced(g: PolynomialNonlinearity, gamma: f64, grid: &Arc<Grid>) -> Result<Self> {
        Self::new(g, gamma, SpectralField::zeros(grid))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Grid with headroom for every product the crate forms for `g`
    /// (`g(u)`, `g′(u)` and the energy density `G(u)` of degree `n + 1`).
    pub fn grid_for(n: usize, g: &PolynomialNonlinearity) -> Result<Arc<Grid>> {
        Grid::with_headroom(n, g.degree() + 1)
    }
}

/// `−∂_x g(u)` together with the gauge rate `⨍ g′(u)`, from one physical pass.
pub(crate) fn nonlinear_terms(u: &SpectralField, g: &PolynomialNonlinearity) -> Result<(SpectralField, f64)> {
    let grid = u.grid();
    if g.is_zero() {
        return Ok((SpectralField::zeros(grid), 0.0));
    }
    grid.check_degree(g.degree())?;
    let samples = u.to_physical();
    let mut flux = Vec::with_capacity(samples.len());
    let mut rate = 0.0;
    // the 2a_2 u part of g′ has zero mean; leaving it out keeps θ ≡ 0 for quadratic g
    let higher = &g.coeffs()[1.min(g.coeffs().len())..];
    for &v in &samples {
        flux.push(g.eval(v));
        rate += higher
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * v + (i + 3) as f64 * a)
            * v
            * v;
    }
    rate /= samples.len() as f64;
    let gh = SpectralField::to_spectral(grid, &flux)?;
    Ok((gh.apply_multiplier(|k| Complex64::new(0.0, -(k as f64))), rate))
}

/// `−ik ĝ(u)_k` with dealiased powers.
pub fn nonlinear_rhs(u: &SpectralField, g: &PolynomialNonlinearity) -> Result<SpectralField> {
    Ok(nonlinear_terms(u, g)?.0)
}

/// `(ik³ − γ) û_k − ik ĝ(u)_k + f̂_k`.
pub fn full_rhs(u: &SpectralField, problem: &Problem, _t: f64) -> Result<SpectralField> {
    let linear = u.apply_multiplier(|k| {
        let kf = k as f64;
        Complex64::new(-problem.gamma, kf * kf * kf)
    });
    linear.try_add(&nonlinear_rhs(u, &problem.g)?)?.try_add(&problem.forcing)
}

/// `F̂_k = f̂_k / (γ − ik³)`, the steady state of the linear forced problem.
pub fn steady_state_linear(f: &SpectralField, gamma: f64) -> Result<SpectralField> {
    let n = f.grid().max_wavenumber() as i64;
    for k in 1..=n {
        let kf = k as f64;
        let denom = Complex64::new(gamma, -kf * kf * kf);
        if denom.norm() == 0.0 && f.coeff(k).norm() != 0.0 {
            return Err(Error::InvalidArgument(format!("linear symbol vanishes at k = {k}")));
        }
    }
    Ok(f.apply_multiplier(|k| {
        let kf = k as f64;
        Complex64::new(1.0, 0.0) / Complex64::new(gamma, -kf * kf * kf)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    IntegratingFactorRk4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record a sample every `stride` steps.
    pub stride: usize,
    pub scheme: Scheme,
    /// Abort once `‖u‖_{H¹}` exceeds this.
    pub blowup_cap: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, stride: usize) -> Result<Self> {
        let cfg = SolverConfig {
            dt,
            t_end,
            stride,
            scheme: Scheme::default(),
            blowup_cap: 1e6,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if self.blowup_cap.is_nan() || self.blowup_cap <= 0.0 {
            return Err(Error::InvalidArgument("blow-up cap must be positive".into()));
        }
        Ok(())
    }

    /// `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub enum Abort {
    BlowUp { step: usize, t: f64, h1_norm: f64 },
    NonFinite { step: usize, t: f64 },
}

/// State handed to observers.
pub struct Sample<'a> {
    pub step: usize,
    pub t: f64,
    pub u: &'a SpectralField,
    pub theta: f64,
}

pub trait Observer {
    fn observe(&mut self, sample: &Sample<'_>);
}

impl<F: FnMut(&Sample<'_>)> Observer for F {
    fn observe(&mut self, sample: &Sample<'_>) {
        self(sample)
    }
}

/// Recorded samples of a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    /// Accumulated gauge phase at each sample.
    pub thetas: Vec<f64>,
    pub steps_taken: usize,
    pub abort: Option<Abort>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &SpectralField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &SpectralField {
        self.snapshots.last().expect("trajectory always holds the initial sample")
    }

    pub fn gauged(&self, i: usize) -> SpectralField {
        gauge::apply_gauge(&self.snapshots[i], self.thetas[i])
    }

    /// Index of the sample closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// IF-RK4 stepper with the exponential factors for one `dt` precomputed.
pub struct IfRk4<'p> {
    problem: &'p Problem,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
}

impl<'p> IfRk4<'p> {
    pub fn new(problem: &'p Problem, dt: f64) -> Self {
        let grid = problem.grid();
        let half = grid.wavenumbers().map(|k| airy_symbol(k, 0.5 * dt, problem.gamma)).collect();
        let full = grid.wavenumbers().map(|k| airy_symbol(k, dt, problem.gamma)).collect();
        IfRk4 { problem, dt, half, full }
    }

    fn nonlinear(&self, u: &SpectralField) -> Result<(SpectralField, f64)> {
        let (n, rate) = nonlinear_terms(u, &self.problem.g)?;
        Ok((n.try_add(&self.problem.forcing)?, rate * self.problem.gauge.scale()))
    }

    fn mul(factor: &[Complex64], u: &SpectralField) -> SpectralField {
        let coeffs = u.coeffs().iter().zip(factor).map(|(c, e)| c * e).collect();
        SpectralField::from_raw(u.grid(), coeffs)
    }

    /// One step of `(u, θ)`.
    pub fn step(&self, u: &SpectralField, theta: f64) -> Result<(SpectralField, f64)> {
        let dt = self.dt;
        let (n1, r1) = self.nonlinear(u)?;
        let eu = Self::mul(&self.half, u);
        let u2 = Self::mul(&self.half, &u.try_axpy(0.5 * dt, &n1)?);
        let (n2, r2) = self.nonlinear(&u2)?;
        let u3 = eu.try_axpy(0.5 * dt, &n2)?;
        let (n3, r3) = self.nonlinear(&u3)?;
        let u4 = Self::mul(&self.full, u).try_add(&Self::mul(&self.half, &n3.scale(dt)))?;
        let (n4, r4) = self.nonlinear(&u4)?;

        let mid = n2.try_add(&n3)?;
        let incr = Self::mul(&self.full, &n1)
            .try_axpy(2.0, &Self::mul(&self.half, &mid))?
            .try_add(&n4)?;
        let next = Self::mul(&self.full, u).try_axpy(dt / 6.0, &incr)?;
        let theta_next = theta + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
        Ok((next, theta_next))
    }
}

/// One IF-RK4 step of length `dt` (the problem is autonomous, `t` is unused).
pub fn ifrk4_step(u: &SpectralField, problem: &Problem, _t: f64, dt: f64) -> Result<SpectralField> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
    }
    let next = IfRk4::new(problem, dt).step(u, 0.0)?.0;
    if !next.is_finite() {
        return Err(Error::NonFiniteState { step: 0, time: dt });
    }
    Ok(next)
}

/// Fixed-step integration from `u0` to `config.t_end`, sampling every
/// `config.stride` steps and at the final step.
///
/// Blow-up (`‖u‖_{H¹} > blowup_cap`) or a non-finite state ends the run early
/// with [`Trajectory::abort`] set; samples up to that point are kept.
pub fn simulate(
    problem: &Problem,
    u0: &SpectralField,
    config: &SolverConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    config.validate()?;
    if **u0.grid() != **problem.grid() {
        return Err(Error::GridMismatch {
            left_n: problem.grid().max_wavenumber(),
            left_m: problem.grid().samples(),
            right_n: u0.grid().max_wavenumber(),
            right_m: u0.grid().samples(),
        });
    }
    let steps = config.steps();
    let stepper = IfRk4::new(problem, config.dt);
    let mut traj = Trajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        thetas: Vec::new(),
        steps_taken: 0,
        abort: None,
    };
    let mut record = |traj: &mut Trajectory, step: usize, t: f64, u: &SpectralField, theta: f64| {
        for obs in observers.iter_mut() {
            obs.observe(&Sample { step, t, u, theta });
        }
        traj.times.push(t);
        traj.snapshots.push(u.clone());
        traj.thetas.push(theta);
    };

    let mut u = u0.clone();
    let mut theta = 0.0;
    record(&mut traj, 0, 0.0, &u, theta);
    for step in 1..=steps {
        let t = step as f64 * config.dt;
        let (next, next_theta) = stepper.step(&u, theta)?;
        if !next.is_finite() || !next_theta.is_finite() {
            traj.abort = Some(Abort::NonFinite { step, t });
            break;
        }
        u = next;
        theta = next_theta;
        traj.steps_taken = step;
        let h1 = u.sobolev_norm(1.0);
        if h1 > config.blowup_cap {
            record(&mut traj, step, t, &u, theta);
            traj.abort = Some(Abort::BlowUp { step, t, h1_norm: h1 });
            break;
        }
        if step % config.stride == 0 || step == steps {
            record(&mut traj, step, t, &u, theta);
        }
    }
    Ok(traj)
}
