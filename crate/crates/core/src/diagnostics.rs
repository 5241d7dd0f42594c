//! Conserved functionals, decay fits, absorbing-ball detection and the
//! resolution-refinement smoothing study.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{simulate, Observer, PolynomialNonlinearity, Problem, Sample, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gauge::apply_gauge;
use crate::spectral::{bracket, Grid, SpectralField};

/// `∫_𝕋 u dx = 2π û_0`; identically zero for stored fields.
pub fn mass(u: &SpectralField) -> f64 {
    2.0 * PI * u.coeff(0).re
}

/// `∫_𝕋 u² dx = 2π Σ |û_k|²`.
pub fn momentum(u: &SpectralField) -> f64 {
    2.0 * PI * u.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>()
}

/// `E(u) = ½ ∫ u_x² dx − ∫ G(u) dx` with `G′ = g`, `G(0) = 0`.
pub fn energy(u: &SpectralField, g: &PolynomialNonlinearity) -> Result<f64> {
    let n = u.grid().max_wavenumber() as i64;
    let kinetic: f64 = (-n..=n).map(|k| (k * k) as f64 * u.coeff(k).norm_sqr()).sum();
    let potential = if g.is_zero() {
        0.0
    } else {
        u.grid().check_degree(g.degree() + 1)?;
        let samples = u.to_physical();
        samples.iter().map(|&v| g.eval_antiderivative(v)).sum::<f64>() / samples.len() as f64
    };
    Ok(PI * kinetic - 2.0 * PI * potential)
}

/// One row of run diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    pub theta: f64,
    /// `(s, ‖u‖_{H^s})`.
    pub sobolev: Vec<(f64, f64)>,
    /// `(ρ, ‖L_t u − W_t^γ u_0‖_{H^{1+ρ}})`.
    pub smoothing: Vec<(f64, f64)>,
}

/// Observer that builds [`DiagnosticsRecord`]s while a run progresses.
pub struct Recorder {
    g: PolynomialNonlinearity,
    gamma: f64,
    s_list: Vec<f64>,
    rho_list: Vec<f64>,
    u0: Option<SpectralField>,
    pub records: Vec<DiagnosticsRecord>,
    pub error: Option<Error>,
}

impl Recorder {
    pub fn new(problem: &Problem, s_list: Vec<f64>, rho_list: Vec<f64>) -> Self {
        Recorder {
            g: problem.g.clone(),
            gamma: problem.gamma,
            s_list,
            rho_list,
            u0: None,
            records: Vec::new(),
            error: None,
        }
    }
}

impl Observer for Recorder {
    fn observe(&mut self, sample: &Sample<'_>) {
        if self.u0.is_none() {
            self.u0 = Some(sample.u.clone());
        }
        let energy = match energy(sample.u, &self.g) {
            Ok(e) => e,
            Err(e) => {
                self.error.get_or_insert(e);
                f64::NAN
            }
        };
        let u0 = self.u0.as_ref().expect("set above");
        let gauged = apply_gauge(sample.u, sample.theta);
        let free = u0.airy_propagator(sample.t, self.gamma);
        let duhamel = gauged.zip_with(&free, |a, b| a - b);
        self.records.push(DiagnosticsRecord {
            step: sample.step,
            t: sample.t,
            mass: mass(sample.u),
            momentum: momentum(sample.u),
            energy,
            theta: sample.theta,
            sobolev: self.s_list.iter().map(|&s| (s, sample.u.sobolev_norm(s))).collect(),
            smoothing: self
                .rho_list
                .iter()
                .map(|&rho| (rho, duhamel.sobolev_norm(1.0 + rho)))
                .collect(),
        });
    }
}

/// `‖L_t[u] u(t) − W_t^γ u_0‖_{H^{1+ρ}}` at every sample of `trajectory`.
pub fn smoothing_metric(trajectory: &Trajectory, u0: &SpectralField, gamma: f64, rho: f64) -> Result<Vec<f64>> {
    trajectory
        .snapshots
        .iter()
        .zip(&trajectory.times)
        .zip(&trajectory.thetas)
        .map(|((u, &t), &theta)| {
            let d = apply_gauge(u, theta).try_sub(&u0.airy_propagator(t, gamma))?;
            Ok(d.sobolev_norm(1.0 + rho))
        })
        .collect()
}

/// Least-squares fit `log(value) ≈ c − rate · t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub points: usize,
}

/// Fits an exponential decay rate to the samples with `window.0 ≤ t ≤ window.1`.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let mut pts = Vec::new();
    for (i, &(t, v)) in series.iter().enumerate() {
        if t < window.0 || t > window.1 {
            continue;
        }
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositive { index: i, value: v });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs two points in [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("decay fit window has a single time".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit {
        rate: -slope,
        residual,
        points: pts.len(),
    })
}

/// First sample time after which `norm ≤ radius` for every remaining sample.
pub fn absorbing_entry_series(times: &[f64], norms: &[f64], radius: f64) -> Option<f64> {
    let mut entry = None;
    for (&t, &v) in times.iter().zip(norms).rev() {
        if v <= radius {
            entry = Some(t);
        } else {
            break;
        }
    }
    entry
}

/// [`absorbing_entry_series`] on `‖u(t)‖_{H^s}` of a trajectory.
pub fn absorbing_entry(trajectory: &Trajectory, radius: f64, s: f64) -> Option<f64> {
    let norms: Vec<f64> = trajectory.snapshots.iter().map(|u| u.sobolev_norm(s)).collect();
    absorbing_entry_series(&trajectory.times, &norms, radius)
}

/// Splitmix64 step; used to expand one seed into independent per-run seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` seeds derived from `master` by successive splitmix64 outputs.
pub fn expand_seed(master: u64, count: usize) -> Vec<u64> {
    let mut state = master;
    (0..count).map(|_| splitmix64(&mut state)).collect()
}

/// `|û_k| = ⟨k⟩^{−exponent}` with uniform random phases, `k = 1..=N`.
///
/// Phases are drawn in increasing `k` from one stream, so data at a smaller
/// `N` is the truncation of data at a larger `N` for the same seed.
pub fn rough_data(grid: &Arc<Grid>, exponent: f64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..grid.max_wavenumber()).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    SpectralField::from_fn(grid, |k| Complex64::from_polar(bracket(k).powf(-exponent), phases[(k - 1) as usize]))
}

/// Smooth random data `|û_k| ∝ ⟨k⟩^{−decay}` on `1 ≤ k ≤ band`, random phases,
/// rescaled to `‖u‖_{H^s} = target`.
pub fn random_smooth_data(grid: &Arc<Grid>, band: usize, decay: f64, s: f64, target: f64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = band.min(grid.max_wavenumber()) as i64;
    let amps: Vec<Complex64> = (1..=band)
        .map(|k| {
            let amp = bracket(k).powf(-decay) * rng.gen_range(0.5..1.5);
            Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let u = SpectralField::from_positive(grid, &amps);
    let norm = u.sobolev_norm(s);
    if norm == 0.0 {
        u
    } else {
        u.scale(target / norm)
    }
}

/// Parameters shared by every row of a refinement study.
#[derive(Clone, Debug)]
pub struct StudySpec {
    pub g: PolynomialNonlinearity,
    pub gamma: f64,
    /// Forcing as `(k, f̂_k)` for `k ≥ 1`.
    pub forcing: Vec<(i64, Complex64)>,
    pub rho: f64,
    /// Data decay `|û_k| = ⟨k⟩^{−exponent}`.
    pub exponent: f64,
    pub resolutions: Vec<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub data_norm: f64,
    pub data_h1_norm: f64,
    pub sup_metric: f64,
    pub aborted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyVerdict {
    Pass,
    Fail,
    InsufficientPoints,
}

impl StudyVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyVerdict::Pass => "pass",
            StudyVerdict::Fail => "fail",
            StudyVerdict::InsufficientPoints => "insufficient-points",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// `max/min` of the sup metric over the three largest resolutions.
    pub spread: Option<f64>,
    pub data_norm_increasing: bool,
    pub verdict: StudyVerdict,
}

/// Allowed `max/min` ratio of the sup metric across the finest resolutions.
pub const STABILIZATION_RATIO: f64 = 2.0;

/// Sup metrics at or below this multiple of `‖u_0‖_{H^{1+ρ}}` are rounding
/// noise (the linear control) and count as zero.
pub const METRIC_FLOOR: f64 = 1e-12;

/// Hermitian field with the given `(k, f̂_k)` modes, `k ≥ 1`.
pub fn forcing_field(grid: &Arc<Grid>, forcing: &[(i64, Complex64)]) -> SpectralField {
    let mut f = SpectralField::zeros(grid);
    for &(k, c) in forcing {
        f.set_mode(k, c);
    }
    f
}

fn study_row(spec: &StudySpec, n: usize) -> Result<StudyRow> {
    let grid = Problem::grid_for(n, &spec.g)?;
    let problem = Problem::new(spec.g.clone(), spec.gamma, forcing_field(&grid, &spec.forcing))?;
    let u0 = rough_data(&grid, spec.exponent, spec.seed);
    let cfg = SolverConfig::new(spec.dt, spec.t_end, spec.stride)?;
    let traj = simulate(&problem, &u0, &cfg, &mut [])?;
    let metric = smoothing_metric(&traj, &u0, spec.gamma, spec.rho)?;
    Ok(StudyRow {
        n,
        data_norm: u0.sobolev_norm(1.0 + spec.rho),
        data_h1_norm: u0.sobolev_norm(1.0),
        sup_metric: metric.iter().copied().fold(0.0, f64::max),
        aborted: traj.abort.is_some(),
    })
}

/// Summarizes rows sorted by resolution into a verdict.
pub fn study_verdict(rows: &[StudyRow]) -> (Option<f64>, bool, StudyVerdict) {
    let increasing = rows.windows(2).all(|w| w[1].data_norm > w[0].data_norm);
    if rows.len() < 2 {
        return (None, increasing, StudyVerdict::InsufficientPoints);
    }
    let tail = &rows[rows.len().saturating_sub(3)..];
    let metric = |r: &StudyRow| {
        if r.sup_metric <= METRIC_FLOOR * r.data_norm {
            0.0
        } else {
            r.sup_metric
        }
    };
    let max = tail.iter().map(metric).fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().map(metric).fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    let ok = increasing && spread <= STABILIZATION_RATIO && rows.iter().all(|r| !r.aborted);
    (Some(spread), increasing, if ok { StudyVerdict::Pass } else { StudyVerdict::Fail })
}

/// Runs the same rough data at each resolution and tabulates
/// `‖u_0‖_{H^{1+ρ}}` against `sup_t ‖L_t u − W_t^γ u_0‖_{H^{1+ρ}}`.
/// Rows run concurrently, one thread per resolution.
pub fn refinement_smoothing_study(spec: &StudySpec) -> Result<StudyTable> {
    let mut ns = spec.resolutions.clone();
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("resolutions must be strictly ascending".into()));
    }
    ns.dedup();
    let results: Vec<Result<StudyRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ns.iter().map(|&n| scope.spawn(move || study_row(spec, n))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("study row panicked"))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (spread, data_norm_increasing, verdict) = study_verdict(&rows);
    Ok(StudyTable {
        rows,
        spread,
        data_norm_increasing,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn energy_of_sine() {
        let kdv = PolynomialNonlinearity::monomial(2, 1.0).unwrap();
        let mkdv = PolynomialNonlinearity::monomial(3, 1.0).unwrap();
        let grid = Problem::grid_for(8, &mkdv).unwrap();
        let u = SpectralField::from_positive(&grid, &[c(0.0, -0.5)]);
        assert!((energy(&u, &kdv).unwrap() - PI / 2.0).abs() < 1e-14);
        assert!((energy(&u, &mkdv).unwrap() - (PI / 2.0 - 3.0 * PI / 16.0)).abs() < 1e-14);
        assert_eq!(energy(&SpectralField::zeros(&grid), &mkdv).unwrap(), 0.0);
        assert!((momentum(&u) - PI).abs() < 1e-14);
        assert_eq!(mass(&u), 0.0);
    }

    #[test]
    fn energy_needs_headroom() {
        let mkdv = PolynomialNonlinearity::monomial(3, 1.0).unwrap();
        let grid = Grid::with_headroom(8, 3).unwrap();
        let u = SpectralField::from_positive(&grid, &[c(0.0, -0.5)]);
        assert!(matches!(energy(&u, &mkdv), Err(Error::InsufficientPadding { degree: 4, .. })));
    }

    #[test]
    fn decay_fit_synthetic() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, (-2.0 * i as f64 * 0.1).exp())).collect();
        let fit = decay_fit(&s, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0)).collect();
        assert!(decay_fit(&flat, (0.0, 10.0)).unwrap().rate.abs() < 1e-15);
        let bad = vec![(0.0, 1.0), (1.0, 0.0)];
        assert_eq!(decay_fit(&bad, (0.0, 1.0)), Err(Error::NonPositive { index: 1, value: 0.0 }));
    }

    #[test]
    fn absorbing_entry_picks_last_crossing() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        let norms = [5.0, 0.5, 2.0, 0.9, 0.8];
        assert_eq!(absorbing_entry_series(&times, &norms, 1.0), Some(3.0));
        assert_eq!(absorbing_entry_series(&times, &norms, 10.0), Some(0.0));
        assert_eq!(absorbing_entry_series(&times, &[2.0; 5], 1.0), None);
    }

    #[test]
    fn splitmix_reference_vectors() {
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(splitmix64(&mut s), 0x06C4_5D18_8009_454F);
        assert_eq!(expand_seed(0, 2), vec![0xE220_A839_7B1D_CDAF, 0x6E78_9E6A_A1B9_65F4]);
    }

    #[test]
    fn rough_data_is_nested_across_resolutions() {
        let small = Grid::with_headroom(16, 4).unwrap();
        let large = Grid::with_headroom(64, 4).unwrap();
        let a = rough_data(&small, 1.51, 7);
        let b = rough_data(&large, 1.51, 7);
        for k in 1..=16 {
            assert_eq!(a.coeff(k), b.coeff(k));
        }
        assert!((b.coeff(3).norm() - 4f64.powf(-1.51)).abs() < 1e-15);
        assert!(b.sobolev_norm(1.5) > a.sobolev_norm(1.5));
    }

    #[test]
    fn random_smooth_data_hits_target() {
        let grid = Grid::with_headroom(32, 4).unwrap();
        let u = random_smooth_data(&grid, 8, 2.0, 1.0, 3.0, 11);
        assert!((u.sobolev_norm(1.0) - 3.0).abs() < 1e-12);
        assert_eq!(u.coeff(9), c(0.0, 0.0));
    }

    #[test]
    fn verdicts() {
        let row = |n, d, m| StudyRow {
            n,
            data_norm: d,
            data_h1_norm: 1.0,
            sup_metric: m,
            aborted: false,
        };
        assert_eq!(study_verdict(&[row(64, 1.0, 1.0)]).2, StudyVerdict::InsufficientPoints);
        let (spread, inc, v) = study_verdict(&[row(64, 1.0, 1.0), row(128, 2.0, 1.5), row(256, 3.0, 1.2)]);
        assert_eq!(v, StudyVerdict::Pass);
        assert!(inc);
        assert_eq!(spread, Some(1.5));
        assert_eq!(study_verdict(&[row(64, 1.0, 1.0), row(128, 2.0, 3.0)]).2, StudyVerdict::Fail);
        assert_eq!(study_verdict(&[row(64, 1.0, 0.0), row(128, 2.0, 0.0)]).2, StudyVerdict::Pass);
        assert_eq!(study_verdict(&[row(64, 1.0, 1e-16), row(128, 2.0, 4e-15)]).2, StudyVerdict::Pass);
        // stable metric but data norm not increasing
        let (_, inc, v) = study_verdict(&[row(64, 2.0, 1.0), row(128, 2.0, 1.0)]);
        assert!(!inc);
        assert_eq!(v, StudyVerdict::Fail);
    }
}
