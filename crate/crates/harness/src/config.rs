//! JSON run configuration. Field reference and an example live in `docs/schema.md`.

use std::path::Path;
use std::sync::Arc;

use gkdv_core::diagnostics::{forcing_field, random_smooth_data, rough_data};
use gkdv_core::dynamics::{PolynomialNonlinearity, Problem, SolverConfig};
use gkdv_core::gauge::GaugeNormalization;
use gkdv_core::resonance::RegionParams;
use gkdv_core::spectral::{Grid, SpectralField};
use gkdv_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Version stamped into every config, CSV row and JSON report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub gauge: GaugeSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// `[degree, coefficient]` pairs, degree ≥ 2.
    pub g: Vec<(usize, f64)>,
    pub gamma: f64,
    #[serde(default)]
    pub forcing: ForcingSpec,
}

/// `"none"`, `"cos1"` (f = cos x) or `{"coeffs": [[k, re, im], ...]}`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingSpec {
    #[default]
    None,
    Cos1,
    Coeffs(Vec<(i64, f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    /// Physical samples; defaults to the smallest FFT-friendly size that
    /// dealiases every product the run needs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_blowup_cap")]
    pub blowup_cap: f64,
}

fn default_stride() -> usize {
    100
}

fn default_blowup_cap() -> f64 {
    1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    /// Explicit `[k, re, im]` modes, `k ≥ 1`.
    Modes { modes: Vec<(i64, f64, f64)> },
    /// `|û_k| = ⟨k⟩^{−exponent}` with seeded phases on every mode.
    Rough { exponent: f64 },
    /// Seeded band-limited data rescaled to `‖u‖_{H^s} = target`.
    Smooth {
        band: usize,
        decay: f64,
        #[serde(default = "default_smooth_s")]
        s: f64,
        target: f64,
    },
}

fn default_smooth_s() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Sobolev indices reported per sample.
    #[serde(default = "default_s_list")]
    pub s: Vec<f64>,
    /// Smoothing exponents; the metric is measured in `H^{1+ρ}`.
    #[serde(default = "default_rho_list")]
    pub rho: Vec<f64>,
}

fn default_s_list() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_rho_list() -> Vec<f64> {
    vec![0.5]
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            s: default_s_list(),
            rho: default_rho_list(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Mean,
    Integral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_c_a")]
    pub c_a: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_lambda() -> f64 {
    RegionParams::default().lambda
}

fn default_c_a() -> f64 {
    RegionParams::default().c_a
}

impl Default for GaugeSpec {
    fn default() -> Self {
        GaugeSpec {
            lambda: default_lambda(),
            c_a: default_c_a(),
            normalization: Normalization::Mean,
        }
    }
}

/// Inputs of `smoothing-study`; data is rough with the config seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub resolutions: Vec<usize>,
    pub rho: f64,
    pub exponent: f64,
}

/// Inputs of `ensemble`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub count: usize,
    /// `‖u_0‖_{H¹}` targets are spaced linearly over `[h1_min, h1_max]`.
    pub h1_min: f64,
    pub h1_max: f64,
    #[serde(default = "default_band")]
    pub band: usize,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_ensemble_rho")]
    pub rho: f64,
    /// Absorbing-ball radius in `H¹`; by default twice the largest norm seen
    /// over the final quarter of any run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn default_band() -> usize {
    8
}

fn default_decay() -> f64 {
    3.0
}

fn default_ensemble_rho() -> f64 {
    0.5
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        finite("problem.gamma", self.problem.gamma)?;
        if self.problem.gamma < 0.0 {
            return Err(HarnessError::Config(format!(
                "problem.gamma must be nonnegative, got {}",
                self.problem.gamma
            )));
        }
        for &(degree, a) in &self.problem.g {
            finite("problem.g coefficient", a)?;
            if degree < 2 {
                return Err(HarnessError::Config(format!(
                    "problem.g degree must be at least 2, got {degree}"
                )));
            }
        }
        if let ForcingSpec::Coeffs(modes) = &self.problem.forcing {
            check_modes("problem.forcing.coeffs", modes)?;
        }
        if self.grid.n == 0 {
            return Err(HarnessError::Config("grid.n must be positive".into()));
        }
        finite("solver.dt", self.solver.dt)?;
        finite("solver.t_end", self.solver.t_end)?;
        match &self.initial {
            InitialSpec::Modes { modes } => check_modes("initial.modes", modes)?,
            InitialSpec::Rough { exponent } => finite("initial.exponent", *exponent)?,
            InitialSpec::Smooth { decay, s, target, .. } => {
                finite("initial.decay", *decay)?;
                finite("initial.s", *s)?;
                finite("initial.target", *target)?;
            }
            InitialSpec::Zero => {}
        }
        for &s in self.diagnostics.s.iter().chain(&self.diagnostics.rho) {
            finite("diagnostics entry", s)?;
        }
        if let Some(study) = &self.study {
            finite("study.rho", study.rho)?;
            finite("study.exponent", study.exponent)?;
            if study.resolutions.is_empty() {
                return Err(HarnessError::Config("study.resolutions is empty".into()));
            }
            if study.resolutions.windows(2).any(|w| w[1] <= w[0]) {
                return Err(HarnessError::Config("study.resolutions must be strictly ascending".into()));
            }
        }
        if let Some(e) = &self.ensemble {
            finite("ensemble.h1_min", e.h1_min)?;
            finite("ensemble.h1_max", e.h1_max)?;
            finite("ensemble.decay", e.decay)?;
            finite("ensemble.rho", e.rho)?;
            if let Some(r) = e.radius {
                finite("ensemble.radius", r)?;
            }
        }
        self.region()?;
        self.solver_config()?;
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<PolynomialNonlinearity> {
        Ok(PolynomialNonlinearity::from_terms(&self.problem.g)?)
    }

    /// Grid at resolution `n`, honouring `grid.m` only at the configured `n`.
    pub fn grid_at(&self, n: usize) -> Result<Arc<Grid>> {
        let g = self.nonlinearity()?;
        match self.grid.m {
            Some(m) if n == self.grid.n => Ok(Grid::new(n, m)?),
            _ => Ok(Problem::grid_for(n, &g)?),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        self.grid_at(self.grid.n)
    }

    pub fn forcing_modes(&self) -> Vec<(i64, Complex64)> {
        match &self.problem.forcing {
            ForcingSpec::None => Vec::new(),
            ForcingSpec::Cos1 => vec![(1, Complex64::new(0.5, 0.0))],
            ForcingSpec::Coeffs(modes) => modes.iter().map(|&(k, re, im)| (k, Complex64::new(re, im))).collect(),
        }
    }

    pub fn gauge_normalization(&self) -> GaugeNormalization {
        match self.gauge.normalization {
            Normalization::Mean => GaugeNormalization::Mean,
            Normalization::Integral => GaugeNormalization::Integral,
        }
    }

    pub fn problem_on(&self, grid: &Arc<Grid>) -> Result<Problem> {
        let forcing = forcing_field(grid, &self.forcing_modes());
        Ok(Problem::new(self.nonlinearity()?, self.problem.gamma, forcing)?.with_gauge(self.gauge_normalization()))
    }

    pub fn initial_on(&self, grid: &Arc<Grid>, seed: u64) -> SpectralField {
        match &self.initial {
            InitialSpec::Zero => SpectralField::zeros(grid),
            InitialSpec::Modes { modes } => {
                let mut u = SpectralField::zeros(grid);
                for &(k, re, im) in modes {
                    u.set_mode(k, Complex64::new(re, im));
                }
                u
            }
            InitialSpec::Rough { exponent } => rough_data(grid, *exponent, seed),
            InitialSpec::Smooth { band, decay, s, target } => random_smooth_data(grid, *band, *decay, *s, *target, seed),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.solver.dt, self.solver.t_end, self.solver.stride)
            .map_err(|e| HarnessError::Config(format!("solver: {e}")))?;
        cfg.blowup_cap = self.solver.blowup_cap;
        cfg.validate().map_err(|e| HarnessError::Config(format!("solver: {e}")))?;
        Ok(cfg)
    }

    pub fn region(&self) -> Result<RegionParams> {
        RegionParams::new(self.gauge.lambda, self.gauge.c_a).map_err(|e| HarnessError::Config(format!("gauge: {e}")))
    }
}

fn check_modes(name: &str, modes: &[(i64, f64, f64)]) -> Result<()> {
    for &(k, re, im) in modes {
        if k < 1 {
            return Err(HarnessError::Config(format!("{name}: wavenumber {k} must be at least 1")));
        }
        finite(name, re)?;
        finite(name, im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "problem": { "g": [[3, -1.0]], "gamma": 0.5 },
        "grid": { "n": 16 },
        "solver": { "dt": 0.001, "t_end": 1.0 },
        "initial": { "profile": "zero" }
    }"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.problem.forcing, ForcingSpec::None);
        assert_eq!(cfg.solver.stride, 100);
        assert_eq!(cfg.diagnostics.s, vec![0.0, 1.0]);
        assert_eq!(cfg.diagnostics.rho, vec![0.5]);
        assert_eq!(cfg.gauge_normalization(), GaugeNormalization::Mean);
        assert_eq!(cfg.seed, 0);
        let grid = cfg.grid().unwrap();
        assert!(grid.supports_degree(3));
    }

    #[test]
    fn forcing_profiles_parse() {
        let cos: ForcingSpec = serde_json::from_str(r#""cos1""#).unwrap();
        assert_eq!(cos, ForcingSpec::Cos1);
        let coeffs: ForcingSpec = serde_json::from_str(r#"{"coeffs": [[2, 0.5, -0.5]]}"#).unwrap();
        assert_eq!(coeffs, ForcingSpec::Coeffs(vec![(2, 0.5, -0.5)]));
    }

    fn rejects(edit: impl Fn(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        edit(&mut v);
        match RunConfig::from_json(&v.to_string()) {
            Err(HarnessError::Config(msg)) => msg,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(rejects(|v| v["schema_version"] = 2.into()).contains("schema_version"));
        assert!(rejects(|v| v["problem"]["gamma"] = (-1.0).into()).contains("gamma"));
        rejects(|v| v["problem"]["g"] = serde_json::json!([[1, 1.0]]));
        rejects(|v| v["solver"]["dt"] = 0.0.into());
        rejects(|v| v["initial"] = serde_json::json!({ "profile": "modes", "modes": [[0, 1.0, 0.0]] }));
        rejects(|v| v["study"] = serde_json::json!({ "resolutions": [32, 16], "rho": 0.5, "exponent": 1.5 }));
    }
}
