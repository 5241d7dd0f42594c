//! Gauge transform removing the single-resonance term.
//!
//! The multiplier `L̂_k = e^{ikθ(t)}` with `θ' = ⨍ g′(u) dx` (the spatial mean
//! of `g′(u)`, equal to `Σ_j j a_j (u^{j−1})^_0`) is a time-dependent spatial
//! translation, `ũ(x) = u(x + θ)`. Because translation commutes with products,
//! `(ũ^n)^_k = e^{ikθ} (u^n)^_k`; in particular the zero modes agree, so the
//! rate computed from `ũ` equals the one from `u`.
//!
//! If `u` solves the damped forced equation, `ũ` solves
//! `ũ_t + ũ_xxx + γũ + R²[ũ] + NR[ũ] = f̃` with `f̃ = L f`.

use num_complex::Complex64;

use crate::dynamics::{PolynomialNonlinearity, Problem, Trajectory};
use crate::error::{Error, Result};
use crate::resonance;
use crate::spectral::{power_mean, product_with_mean, SpectralField};

/// Measure used for the spatial average in the gauge rate.
///
/// With `Mean` the rate is `⨍ g′(u)`, the only choice for which `L` removes
/// exactly the single-resonance tuples of the coefficient convention used
/// throughout. `Integral` uses `∫_𝕋 g′(u) dx = 2π ⨍ g′(u)`; the gauged
/// equation then still holds, with `R²` absorbing the extra translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GaugeNormalization {
    #[default]
    Mean,
    Integral,
}

impl GaugeNormalization {
    pub fn scale(self) -> f64 {
        match self {
            GaugeNormalization::Mean => 1.0,
            GaugeNormalization::Integral => 2.0 * std::f64::consts::PI,
        }
    }

    /// `θ'` under this normalization.
    pub fn rate(self, u: &SpectralField, g: &PolynomialNonlinearity) -> Result<f64> {
        Ok(self.scale() * theta_rate(u, g)?)
    }
}

/// `θ'(t) = ⨍ g′(u) dx = Σ_j j a_j (u^{j−1})^_0`.
pub fn theta_rate(u: &SpectralField, g: &PolynomialNonlinearity) -> Result<f64> {
    let mut rate = 0.0;
    for (degree, a) in g.terms() {
        rate += degree as f64 * a * power_mean(u, degree - 1)?;
    }
    Ok(rate)
}

/// `∫_𝕋 g′(u) dx = 2π θ'`, the same rate with the physical integral.
pub fn theta_rate_integral(u: &SpectralField, g: &PolynomialNonlinearity) -> Result<f64> {
    GaugeNormalization::Integral.rate(u, g)
}

/// `ũ_k = e^{ikθ} û_k`, i.e. `ũ(x) = u(x + θ)`.
pub fn apply_gauge(u: &SpectralField, theta: f64) -> SpectralField {
    u.apply_multiplier(|k| Complex64::from_polar(1.0, k as f64 * theta))
}

/// Inverse of [`apply_gauge`]: `u(x) = ũ(x − θ)`.
pub fn ungauge_translate(u_tilde: &SpectralField, theta: f64) -> SpectralField {
    u_tilde.apply_multiplier(|k| Complex64::from_polar(1.0, -(k as f64) * theta))
}

/// `f̃ = L f` with the co-integrated phase.
pub fn gauged_forcing(f: &SpectralField, theta: f64) -> SpectralField {
    apply_gauge(f, theta)
}

/// `max_k |((L u)^n)^_k − e^{ikθ} (u^n)^_k|` over `|k| ≤ N`, zero mode included.
pub fn exp_multiplier_identity_check(u: &SpectralField, theta: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    let gauged = apply_gauge(u, theta);
    let (mean_g, pow_g) = product_with_mean(&vec![&gauged; n])?;
    let (mean_u, pow_u) = product_with_mean(&vec![u; n])?;
    let rotated = apply_gauge(&pow_u, theta);
    Ok(pow_g.max_abs_diff(&rotated)?.max((mean_g - mean_u).abs()))
}

/// Residual of the gauged equation at one interior sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    pub index: usize,
    pub t: f64,
    /// `‖∂_tũ + ũ_xxx + γũ + R²[ũ] + NR[ũ] − f̃‖_{H⁰}`.
    pub residual: f64,
}

/// Indices `i` with `0 < i < len − 1` whose neighbours are equally spaced.
pub(crate) fn centered_indices(times: &[f64], requested: Option<&[usize]>) -> Vec<usize> {
    let uniform = |i: usize| {
        let h0 = times[i] - times[i - 1];
        let h1 = times[i + 1] - times[i];
        (h0 - h1).abs() <= 1e-9 * h0.abs().max(h1.abs())
    };
    let len = times.len();
    let all: Vec<usize> = match requested {
        Some(r) => r.to_vec(),
        None => (1..len.saturating_sub(1)).collect(),
    };
    all.into_iter().filter(|&i| i > 0 && i + 1 < len && uniform(i)).collect()
}

/// Centered difference `(a_{i+1} − a_{i−1}) / (t_{i+1} − t_{i−1})`.
pub(crate) fn centered_difference(prev: &SpectralField, next: &SpectralField, span: f64) -> Result<SpectralField> {
    Ok(next.try_sub(prev)?.scale(1.0 / span))
}

/// Evaluates the gauged equation on the recorded samples, with `∂_t ũ` from
/// centered differences. Endpoints and unevenly spaced samples are skipped.
///
/// `sample_indices` restricts the evaluation; `None` uses every interior sample.
pub fn modified_pde_residual(
    trajectory: &Trajectory,
    problem: &Problem,
    sample_indices: Option<&[usize]>,
) -> Result<Vec<ResidualSample>> {
    if trajectory.len() < 3 {
        return Err(Error::NotEnoughSnapshots {
            needed: 3,
            got: trajectory.len(),
        });
    }
    let mut out = Vec::new();
    for i in centered_indices(&trajectory.times, sample_indices) {
        let span = trajectory.times[i + 1] - trajectory.times[i - 1];
        let prev = trajectory.gauged(i - 1);
        let next = trajectory.gauged(i + 1);
        let u_tilde = trajectory.gauged(i);
        let dudt = centered_difference(&prev, &next, span)?;
        let linear = u_tilde.apply_multiplier(|k| {
            let kf = k as f64;
            Complex64::new(problem.gamma, -kf * kf * kf)
        });
        let mut lhs = dudt.try_add(&linear)?;
        if !problem.g.is_zero() {
            let split = resonance::decompose_r1_r2_nr(&u_tilde, &problem.g, problem.gauge)?;
            lhs = lhs.try_add(&split.r2)?.try_add(&split.nr)?;
        }
        let forcing = gauged_forcing(&problem.forcing, trajectory.thetas[i]);
        let residual = lhs.try_sub(&forcing)?.sobolev_norm(0.0);
        out.push(ResidualSample {
            index: i,
            t: trajectory.times[i],
            residual,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_rate_vanishes_on_mean_zero_data() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let u = SpectralField::from_fn(&grid, |k| c(1.0 / k as f64, 0.5));
        let g = PolynomialNonlinearity::monomial(2, 3.0).unwrap();
        assert!(theta_rate(&u, &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn cubic_rate_of_sine() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let u = SpectralField::from_positive(&grid, &[c(0.0, -0.5)]);
        let g = PolynomialNonlinearity::monomial(3, 1.0).unwrap();
        // ⨍ 3 sin² = 3/2, and ∫ 3 sin² = 3π
        assert!((theta_rate(&u, &g).unwrap() - 1.5).abs() < 1e-15);
        assert!((theta_rate_integral(&u, &g).unwrap() - 3.0 * PI).abs() < 1e-14);
        let g2 = PolynomialNonlinearity::from_coeffs(&[1.0, 1.0]).unwrap();
        let cos = SpectralField::from_positive(&grid, &[c(0.5, 0.0)]);
        assert!((theta_rate_integral(&cos, &g2).unwrap() - 3.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn gauge_is_a_translation() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let cos = SpectralField::from_positive(&grid, &[c(0.5, 0.0)]);
        assert_eq!(apply_gauge(&cos, 0.0), cos);
        let shifted = apply_gauge(&cos, PI);
        assert!(shifted.max_abs_diff(&cos.scale(-1.0)).unwrap() < 1e-15);
        // cos(x + π/2) = −sin x
        let f = gauged_forcing(&cos, PI / 2.0);
        let minus_sin = SpectralField::from_positive(&grid, &[c(0.0, 0.5)]);
        assert!(f.max_abs_diff(&minus_sin).unwrap() < 1e-16);
        assert_eq!(gauged_forcing(&cos, 0.0), cos);
    }

    #[test]
    fn translate_inverts_gauge() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let u = SpectralField::from_fn(&grid, |k| c((k as f64).cos(), 1.0 / k as f64));
        let back = ungauge_translate(&apply_gauge(&u, 0.37), 0.37);
        assert!(back.max_abs_diff(&u).unwrap() < 1e-15);
        let full_turn = ungauge_translate(&u, 2.0 * PI);
        assert!(full_turn.max_abs_diff(&u).unwrap() < 1e-13);
        let v = ungauge_translate(&u, 0.37);
        for k in 1..=8 {
            let expect = u.coeff(k) * Complex64::from_polar(1.0, -0.37 * k as f64);
            assert!((v.coeff(k) - expect).norm() < 1e-16);
        }
    }

    #[test]
    fn shift_direction_matches_translate_formula() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let u = SpectralField::from_fn(&grid, |k| c(1.0 / (k * k) as f64, 0.2 / k as f64));
        let theta = 0.81;
        let samples = apply_gauge(&u, theta).to_physical();
        for (j, x) in grid.points().iter().enumerate() {
            let direct: f64 = (1..=8)
                .map(|k| 2.0 * (u.coeff(k) * Complex64::from_polar(1.0, k as f64 * (x + theta))).re)
                .sum();
            assert!((samples[j] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn multiplier_identity_small_cases() {
        let grid = Grid::with_headroom(8, 3).unwrap();
        let cos = SpectralField::from_positive(&grid, &[c(0.5, 0.0)]);
        assert_eq!(exp_multiplier_identity_check(&cos, 0.0, 2).unwrap(), 0.0);
        assert!(exp_multiplier_identity_check(&cos, 1.1, 2).unwrap() < 1e-12);
    }
}
