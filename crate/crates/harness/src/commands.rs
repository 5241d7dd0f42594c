//! The five subcommands as library functions. Each writes its files into
//! `out` and returns the report it serialized.

use std::path::Path;

use gkdv_core::diagnostics::{
    self, absorbing_entry_series, decay_fit, expand_seed, random_smooth_data, refinement_smoothing_study, Recorder,
    StudySpec,
};
use gkdv_core::dynamics::{nonlinear_rhs, simulate, Abort, Problem, Trajectory};
use gkdv_core::resonance::{
    case_coverage, decompose, h3_factorization_failures, min_case_constant, CaseConstants,
};
use gkdv_core::spectral::SpectralField;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EnsembleSection, Normalization, RunConfig, SCHEMA_VERSION};
use crate::error::{HarnessError, Result};
use crate::output::{ensure_dir, fmt_f64, fmt_index, write_json, CsvTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndexedValue {
    pub index: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbortInfo {
    pub kind: &'static str,
    pub step: usize,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h1_norm: Option<f64>,
}

impl From<&Abort> for AbortInfo {
    fn from(a: &Abort) -> Self {
        match *a {
            Abort::BlowUp { step, t, h1_norm } => AbortInfo {
                kind: "blow-up",
                step,
                t,
                h1_norm: Some(h1_norm),
            },
            Abort::NonFinite { step, t } => AbortInfo {
                kind: "non-finite",
                step,
                t,
                h1_norm: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Drift {
    pub mass_max_abs: f64,
    /// `max_t |P(t) − P(0)| / |P(0)|`, absolute when `P(0) = 0`.
    pub momentum_rel_drift: f64,
    pub energy_rel_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFitReport {
    /// Fitted `λ` in `∫u² ≈ C e^{−λt}` over the whole run.
    pub rate: f64,
    pub residual: f64,
    pub points: usize,
    /// `2γ`, the exact rate when `f = 0`.
    pub unforced_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub steps_taken: usize,
    pub samples: usize,
    pub aborted: bool,
    pub abort: Option<AbortInfo>,
    pub final_t: f64,
    pub final_theta: f64,
    pub drift: Drift,
    pub decay_fit: Option<DecayFitReport>,
    pub final_norms: Vec<IndexedValue>,
    pub max_smoothing: Vec<IndexedValue>,
}

fn relative_drift(values: impl Iterator<Item = f64>, reference: f64) -> f64 {
    let worst = values.map(|v| (v - reference).abs()).fold(0.0, f64::max);
    if reference == 0.0 {
        worst
    } else {
        worst / reference.abs()
    }
}

fn run_id(kind: &str, seed: u64) -> String {
    format!("{kind}-{seed:016x}")
}

/// `simulate`: writes `run.csv` and `summary.json`. An aborted run still
/// writes both, with `aborted = true`.
pub fn simulate_command(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let grid = cfg.grid()?;
    let problem = cfg.problem_on(&grid)?;
    let u0 = cfg.initial_on(&grid, cfg.seed);
    let solver = cfg.solver_config()?;
    let mut recorder = Recorder::new(&problem, cfg.diagnostics.s.clone(), cfg.diagnostics.rho.clone());
    let traj = simulate(&problem, &u0, &solver, &mut [&mut recorder])?;
    if let Some(e) = recorder.error.take() {
        return Err(e.into());
    }
    let records = recorder.records;
    let id = run_id("run", cfg.seed);

    ensure_dir(out)?;
    let mut header: Vec<String> = ["schema_version", "run_id", "step", "t", "theta", "mass", "momentum", "energy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.diagnostics.s.iter().map(|s| format!("norm_h{}", fmt_index(*s))));
    header.extend(cfg.diagnostics.rho.iter().map(|r| format!("metric_rho{}", fmt_index(*r))));
    let mut table = CsvTable::new(header);
    for r in &records {
        let mut row = vec![
            SCHEMA_VERSION.to_string(),
            id.clone(),
            r.step.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.theta),
            fmt_f64(r.mass),
            fmt_f64(r.momentum),
            fmt_f64(r.energy),
        ];
        row.extend(r.sobolev.iter().map(|v| fmt_f64(v.1)));
        row.extend(r.smoothing.iter().map(|v| fmt_f64(v.1)));
        table.push(row);
    }
    table.write(&out.join("run.csv"))?;

    let first = &records[0];
    let last = records.last().expect("initial sample is always recorded");
    let drift = Drift {
        mass_max_abs: records.iter().map(|r| r.mass.abs()).fold(0.0, f64::max),
        momentum_rel_drift: relative_drift(records.iter().map(|r| r.momentum), first.momentum),
        energy_rel_drift: relative_drift(records.iter().map(|r| r.energy), first.energy),
    };
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.momentum)).collect();
    let decay = decay_fit(&series, (0.0, last.t)).ok().map(|fit| DecayFitReport {
        rate: fit.rate,
        residual: fit.residual,
        points: fit.points,
        unforced_rate: 2.0 * problem.gamma,
    });
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        run_id: id,
        seed: cfg.seed,
        n: grid.max_wavenumber(),
        m: grid.samples(),
        dt: solver.dt,
        t_end: solver.t_end,
        stride: solver.stride,
        steps_taken: traj.steps_taken,
        samples: traj.len(),
        aborted: traj.abort.is_some(),
        abort: traj.abort.as_ref().map(AbortInfo::from),
        final_t: last.t,
        final_theta: last.theta,
        drift,
        decay_fit: decay,
        final_norms: last.sobolev.iter().map(|&(index, value)| IndexedValue { index, value }).collect(),
        max_smoothing: cfg
            .diagnostics
            .rho
            .iter()
            .enumerate()
            .map(|(j, &index)| IndexedValue {
                index,
                value: records.iter().map(|r| r.smoothing[j].1).fold(0.0, f64::max),
            })
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionResiduals {
    /// `max_k |ik ĝ(u)_k|`, the scale the residuals are measured against.
    pub scale: f64,
    /// `max_k |(R¹ + R² + NR − ik ĝ(u))_k|`.
    pub resonance_residual: f64,
    /// `max_k |(HL + HH + RE − NR)_k|`.
    pub high_low_residual: f64,
    /// `max_k |R¹_closed − R¹_enumerated|`; zero up to rounding for the mean gauge.
    pub r1_closed_vs_enumerated: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentNorms {
    pub name: &'static str,
    pub norms: Vec<IndexedValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecomposeReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub n: usize,
    pub degree: usize,
    pub lambda: f64,
    pub c_a: f64,
    pub normalization: Normalization,
    pub partition: PartitionResiduals,
    pub components: Vec<ComponentNorms>,
}

/// `decompose`: splits `ik ĝ(u_0)` for the configured initial data and
/// writes `decompose_report.json`.
pub fn decompose_command(cfg: &RunConfig, out: &Path) -> Result<DecomposeReport> {
    let grid = cfg.grid()?;
    let problem = cfg.problem_on(&grid)?;
    let u = cfg.initial_on(&grid, cfg.seed);
    let region = cfg.region()?;
    let d = decompose(&u, &problem.g, region, problem.gauge)?;
    let full = nonlinear_rhs(&u, &problem.g)?.scale(-1.0);
    let r = &d.resonance;
    let h = &d.high_low;
    let resonance_sum = r.r1.try_add(&r.r2)?.try_add(&r.nr)?;
    let nr_sum = h.hl.try_add(&h.hh)?.try_add(&h.re)?;
    let partition = PartitionResiduals {
        scale: full.max_abs_coeff(),
        resonance_residual: resonance_sum.max_abs_diff(&full)?,
        high_low_residual: nr_sum.max_abs_diff(&r.nr)?,
        r1_closed_vs_enumerated: r.r1.max_abs_diff(&d.r1_enumerated)?,
    };
    let norms = |f: &SpectralField| {
        cfg.diagnostics
            .s
            .iter()
            .map(|&s| IndexedValue {
                index: s,
                value: f.sobolev_norm(s),
            })
            .collect()
    };
    let components = [
        ("full", &full),
        ("r1", &r.r1),
        ("r2", &r.r2),
        ("nr", &r.nr),
        ("hl", &h.hl),
        ("hh", &h.hh),
        ("re", &h.re),
    ]
    .into_iter()
    .map(|(name, f)| ComponentNorms { name, norms: norms(f) })
    .collect();
    let report = DecomposeReport {
        schema_version: SCHEMA_VERSION,
        command: "decompose",
        seed: cfg.seed,
        n: grid.max_wavenumber(),
        degree: problem.g.degree(),
        lambda: region.lambda,
        c_a: region.c_a,
        normalization: cfg.gauge.normalization,
        partition,
        components,
    };
    ensure_dir(out)?;
    write_json(&out.join("decompose_report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CasesReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub degree: usize,
    pub bound: usize,
    pub certified_constant: f64,
    pub extremal_tuple: Option<Vec<i64>>,
    /// Constants the coverage counts were taken at.
    pub constants: [f64; 3],
    pub tuples: u64,
    pub count_a: u64,
    pub count_b: u64,
    pub count_c: u64,
    pub count_d: u64,
    pub uncovered: u64,
    pub uncovered_sample: Vec<Vec<i64>>,
    /// Present for `n = 3`: tuples up to the bound where `H_3` differs from
    /// `3(k_1+k_2)(k_2+k_3)(k_3+k_1)`.
    pub h3_factorization_failures: Option<usize>,
}

/// `cases`: exhaustive scan of the case classification; writes
/// `cases_report.json`. Without `constants` the certified constant is used.
pub fn cases_command(degree: usize, bound: usize, constants: Option<CaseConstants>, out: &Path) -> Result<CasesReport> {
    if !(2..=5).contains(&degree) {
        return Err(HarnessError::Config(format!("cases: degree must be in 2..=5, got {degree}")));
    }
    if bound == 0 {
        return Err(HarnessError::Config("cases: bound must be positive".into()));
    }
    let scan = min_case_constant(degree, bound)?;
    let constants = constants.unwrap_or_else(|| CaseConstants::uniform(scan.certified_constant));
    let cov = case_coverage(degree, bound, constants, 20)?;
    let report = CasesReport {
        schema_version: SCHEMA_VERSION,
        command: "cases",
        degree,
        bound,
        certified_constant: scan.certified_constant,
        extremal_tuple: scan.extremal_tuple,
        constants: [constants.a, constants.c, constants.d],
        tuples: cov.tuples,
        count_a: cov.count_a,
        count_b: cov.count_b,
        count_c: cov.count_c,
        count_d: cov.count_d,
        uncovered: cov.uncovered,
        uncovered_sample: cov.uncovered_sample,
        h3_factorization_failures: (degree == 3).then(|| h3_factorization_failures(bound as i64)),
    };
    ensure_dir(out)?;
    write_json(&out.join("cases_report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRowReport {
    pub n: usize,
    pub data_norm: f64,
    pub data_h1_norm: f64,
    pub sup_metric: f64,
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub rho: f64,
    pub exponent: f64,
    pub dt: f64,
    pub t_end: f64,
    pub verdict: &'static str,
    pub spread: Option<f64>,
    pub data_norm_increasing: bool,
    pub rows: Vec<StudyRowReport>,
}

/// `smoothing-study`: writes `study.csv` and `study.json`.
pub fn smoothing_study_command(cfg: &RunConfig, out: &Path) -> Result<StudyReport> {
    let section = cfg
        .study
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing field `study`".into()))?;
    let solver = cfg.solver_config()?;
    let spec = StudySpec {
        g: cfg.nonlinearity()?,
        gamma: cfg.problem.gamma,
        forcing: cfg.forcing_modes(),
        rho: section.rho,
        exponent: section.exponent,
        resolutions: section.resolutions.clone(),
        dt: solver.dt,
        t_end: solver.t_end,
        stride: solver.stride,
        seed: cfg.seed,
    };
    let table = refinement_smoothing_study(&spec)?;
    let rows: Vec<StudyRowReport> = table
        .rows
        .iter()
        .map(|r| StudyRowReport {
            n: r.n,
            data_norm: r.data_norm,
            data_h1_norm: r.data_h1_norm,
            sup_metric: r.sup_metric,
            aborted: r.aborted,
        })
        .collect();
    ensure_dir(out)?;
    let mut csv = CsvTable::new(
        ["schema_version", "n", "data_norm", "data_h1_norm", "sup_metric", "aborted"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in &rows {
        csv.push(vec![
            SCHEMA_VERSION.to_string(),
            r.n.to_string(),
            fmt_f64(r.data_norm),
            fmt_f64(r.data_h1_norm),
            fmt_f64(r.sup_metric),
            r.aborted.to_string(),
        ]);
    }
    csv.write(&out.join("study.csv"))?;
    let report = StudyReport {
        schema_version: SCHEMA_VERSION,
        command: "smoothing-study",
        seed: cfg.seed,
        rho: section.rho,
        exponent: section.exponent,
        dt: solver.dt,
        t_end: solver.t_end,
        verdict: table.verdict.as_str(),
        spread: table.spread,
        data_norm_increasing: table.data_norm_increasing,
        rows,
    };
    write_json(&out.join("study.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRun {
    pub index: usize,
    pub seed: u64,
    pub initial_h1: f64,
    pub aborted: bool,
    pub abort: Option<AbortInfo>,
    /// First time after which `‖u‖_{H¹}` stays within the radius.
    pub entry_time: Option<f64>,
    pub post_entry_sup_h1: Option<f64>,
    /// `sup ‖L_t u − W_t^γ u_0‖_{H^{1+ρ}}` from the entry time on.
    pub post_entry_sup_metric: Option<f64>,
    /// `sup ‖u‖_{H¹}` over the final quarter of the run.
    pub tail_sup_h1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub count: usize,
    pub rho: f64,
    pub t_end: f64,
    pub radius: f64,
    pub radius_from_config: bool,
    pub all_entered: bool,
    pub max_entry_time: Option<f64>,
    pub max_post_entry_sup_h1: Option<f64>,
    pub max_post_entry_sup_metric: Option<f64>,
    pub min_post_entry_sup_metric: Option<f64>,
    pub runs: Vec<EnsembleRun>,
}

struct RawRun {
    seed: u64,
    initial_h1: f64,
    trajectory: Trajectory,
    h1: Vec<f64>,
    metric: Vec<f64>,
}

fn ensemble_run(problem: &Problem, u0: SpectralField, cfg: &RunConfig, rho: f64, seed: u64) -> Result<RawRun> {
    let solver = cfg.solver_config()?;
    let trajectory = simulate(problem, &u0, &solver, &mut [])?;
    let h1 = trajectory.snapshots.iter().map(|u| u.sobolev_norm(1.0)).collect();
    let metric = diagnostics::smoothing_metric(&trajectory, &u0, problem.gamma, rho)?;
    Ok(RawRun {
        seed,
        initial_h1: u0.sobolev_norm(1.0),
        trajectory,
        h1,
        metric,
    })
}

fn sup_from(times: &[f64], values: &[f64], from: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max)
}

/// Default ball radius as a multiple of the largest late-time `‖u‖_{H¹}`.
/// Keep it close to 1: a loose ball admits transients.
pub const BALL_MARGIN: f64 = 1.1;

/// Runs the seeded ensemble and summarizes absorption into a common `H¹` ball.
/// Runs execute on the rayon pool; results are ordered by run index.
pub fn run_ensemble(cfg: &RunConfig, section: &EnsembleSection) -> Result<EnsembleReport> {
    if section.count < 2 {
        return Err(HarnessError::Config(format!(
            "ensemble.count must be at least 2, got {}",
            section.count
        )));
    }
    if section.band == 0 {
        return Err(HarnessError::Config("ensemble.band must be positive".into()));
    }
    let grid = cfg.grid()?;
    let problem = cfg.problem_on(&grid)?;
    let t_end = cfg.solver.t_end;
    let seeds = expand_seed(cfg.seed, section.count);
    let raw: Vec<Result<RawRun>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let target = section.h1_min + (section.h1_max - section.h1_min) * i as f64 / (section.count - 1) as f64;
            let u0 = random_smooth_data(&grid, section.band, section.decay, 1.0, target, seed);
            ensemble_run(&problem, u0, cfg, section.rho, seed)
        })
        .collect();
    let raw = raw.into_iter().collect::<Result<Vec<_>>>()?;

    let tail_start = 0.75 * t_end;
    let tails: Vec<f64> = raw.iter().map(|r| sup_from(&r.trajectory.times, &r.h1, tail_start)).collect();
    let radius = section.radius.unwrap_or_else(|| {
        BALL_MARGIN * raw
            .iter()
            .zip(&tails)
            .filter(|(r, _)| r.trajectory.abort.is_none())
            .map(|(_, t)| *t)
            .fold(0.0, f64::max)
    });

    let runs: Vec<EnsembleRun> = raw
        .iter()
        .zip(&tails)
        .enumerate()
        .map(|(index, (r, &tail))| {
            let times = &r.trajectory.times;
            let entry = if r.trajectory.abort.is_some() {
                None
            } else {
                absorbing_entry_series(times, &r.h1, radius)
            };
            EnsembleRun {
                index,
                seed: r.seed,
                initial_h1: r.initial_h1,
                aborted: r.trajectory.abort.is_some(),
                abort: r.trajectory.abort.as_ref().map(AbortInfo::from),
                entry_time: entry,
                post_entry_sup_h1: entry.map(|e| sup_from(times, &r.h1, e)),
                post_entry_sup_metric: entry.map(|e| sup_from(times, &r.metric, e)),
                tail_sup_h1: tail,
            }
        })
        .collect();
    let all_entered = runs.iter().all(|r| r.entry_time.is_some());
    let max_of = |f: fn(&EnsembleRun) -> Option<f64>| runs.iter().filter_map(f).reduce(f64::max);
    let min_metric = runs.iter().filter_map(|r| r.post_entry_sup_metric).reduce(f64::min);
    Ok(EnsembleReport {
        schema_version: SCHEMA_VERSION,
        command: "ensemble",
        seed: cfg.seed,
        count: section.count,
        rho: section.rho,
        t_end,
        radius,
        radius_from_config: section.radius.is_some(),
        all_entered,
        max_entry_time: max_of(|r| r.entry_time),
        max_post_entry_sup_h1: max_of(|r| r.post_entry_sup_h1),
        max_post_entry_sup_metric: max_of(|r| r.post_entry_sup_metric),
        min_post_entry_sup_metric: min_metric,
        runs,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// `ensemble`: writes `ensemble.csv` (one row per run) and `ensemble.json`.
/// `count` overrides `ensemble.count`.
pub fn ensemble_command(cfg: &RunConfig, count: Option<usize>, out: &Path) -> Result<EnsembleReport> {
    let mut section = cfg
        .ensemble
        .clone()
        .ok_or_else(|| HarnessError::Config("missing field `ensemble`".into()))?;
    if let Some(c) = count {
        section.count = c;
    }
    let report = run_ensemble(cfg, &section)?;
    ensure_dir(out)?;
    let mut csv = CsvTable::new(
        [
            "schema_version",
            "run",
            "seed",
            "initial_h1",
            "aborted",
            "entry_time",
            "post_entry_sup_h1",
            "post_entry_sup_metric",
            "tail_sup_h1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    for r in &report.runs {
        csv.push(vec![
            SCHEMA_VERSION.to_string(),
            r.index.to_string(),
            r.seed.to_string(),
            fmt_f64(r.initial_h1),
            r.aborted.to_string(),
            opt(r.entry_time),
            opt(r.post_entry_sup_h1),
            opt(r.post_entry_sup_metric),
            fmt_f64(r.tail_sup_h1),
        ]);
    }
    csv.write(&out.join("ensemble.csv"))?;
    write_json(&out.join("ensemble.json"), &report)?;
    Ok(report)
}
