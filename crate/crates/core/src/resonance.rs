//! Frequency-interaction analysis of the polynomial nonlinearity.
//!
//! Everything here is built on a deliberately naive tuple enumeration
//! ([`convolve_n`]): for every `(k_1, …, k_n)` of nonzero wavenumbers with
//! `k = Σ k_j`, `|k| ≤ N`, the weight `σ(k, k⃗) Π û_{k_j}` is accumulated into
//! the output mode `k`. It is `O((2N)^n)` and serves as the trusted oracle for
//! the FFT products in [`crate::spectral`].
//!
//! Decompositions of `ik·ĝ(u)` (the Fourier transform of `∂_x g(u)`):
//!
//! * `R¹` – the single-resonance term, in closed form `ik û_k ⨍g′(u)`. By
//!   symmetry it equals the enumeration of tuples weighted by the number of
//!   internal frequencies equal to `k`.
//! * `R²` – the rest of the resonant part (tuples with at least two internal
//!   frequencies equal to `k`), `R² = R − R¹`.
//! * `NR` – tuples with no internal frequency equal to `k`.
//! * `NR = HL + HH + RE`: a unique dominant frequency with large `H_n`; several
//!   high frequencies with large `H_n`; small `H_n`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::dynamics::{steady_state_linear, PolynomialNonlinearity, Problem, Trajectory};
use crate::error::{Error, Result};
use crate::gauge::{self, GaugeNormalization};
use crate::spectral::{Grid, SpectralField};

/// Maximum number of tuples a single enumeration may visit.
pub const CONVOLUTION_BUDGET: u128 = 200_000_000;

/// Maximum number of tuples an exhaustive case scan may visit.
pub const SCAN_BUDGET: u128 = 400_000_000;

/// An `n`-tuple of nonzero wavenumbers, `n ≥ 2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTuple {
    entries: Vec<i64>,
}

impl FrequencyTuple {
    pub fn new(entries: Vec<i64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "frequency tuple needs at least two entries, got {}",
                entries.len()
            )));
        }
        if entries.contains(&0) {
            return Err(Error::InvalidArgument("frequency tuple entries must be nonzero".into()));
        }
        Ok(FrequencyTuple { entries })
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn degree(&self) -> usize {
        self.entries.len()
    }

    /// External frequency `k = Σ k_j`.
    pub fn total(&self) -> i64 {
        self.entries.iter().sum()
    }

    /// `k*`, the largest `|k_j|`.
    pub fn k_star(&self) -> i64 {
        self.kth_largest(1)
    }

    /// `k*_j`, the `j`-th largest of `|k_1|, …, |k_n|` (1-based).
    pub fn kth_largest(&self, j: usize) -> i64 {
        let mut abs: Vec<i64> = self.entries.iter().map(|k| k.abs()).collect();
        abs.sort_unstable_by(|a, b| b.cmp(a));
        abs.get(j.saturating_sub(1)).copied().unwrap_or(0)
    }

    pub fn h(&self) -> Result<i128> {
        h_n(&self.entries)
    }
}

/// `H_n = (Σ k_j)³ − Σ k_j³` in exact integer arithmetic.
pub fn h_n(ks: &[i64]) -> Result<i128> {
    let cube = |k: i128| -> Result<i128> {
        k.checked_mul(k)
            .and_then(|k2| k2.checked_mul(k))
            .ok_or(Error::Overflow("H_n"))
    };
    let mut sum: i128 = 0;
    let mut cubes: i128 = 0;
    for &k in ks {
        let k = k as i128;
        sum = sum.checked_add(k).ok_or(Error::Overflow("H_n"))?;
        cubes = cubes.checked_add(cube(k)?).ok_or(Error::Overflow("H_n"))?;
    }
    cube(sum)?.checked_sub(cubes).ok_or(Error::Overflow("H_n"))
}

/// Unchecked `H_n` for loops whose bounds have been validated up front
/// (`|k_j| ≤ 10⁶`, `n ≤ 64` cannot overflow `i128`).
#[inline]
pub(crate) fn h_n_small(ks: &[i64], total: i64) -> i128 {
    let t = total as i128;
    ks.iter().fold(t * t * t, |acc, &k| {
        let k = k as i128;
        acc - k * k * k
    })
}

/// Exhaustively verifies `H_3 = 3(k₁+k₂)(k₁+k₃)(k₂+k₃)` for nonzero `|k_i| ≤ bound`.
pub fn h3_factorization_check(bound: i64) -> bool {
    h3_factorization_failures(bound) == 0
}

/// Number of triples violating the `H_3` factorization.
pub fn h3_factorization_failures(bound: i64) -> usize {
    let range: Vec<i64> = (-bound..=bound).filter(|&k| k != 0).collect();
    let mut failures = 0;
    for &a in &range {
        for &b in &range {
            for &c in &range {
                let lhs = h_n(&[a, b, c]).expect("bounded entries");
                let rhs = 3 * (a + b) as i128 * (a + c) as i128 * (b + c) as i128;
                if lhs != rhs {
                    failures += 1;
                }
            }
        }
    }
    failures
}

/// Implicit constants of the case analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseConstants {
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

impl CaseConstants {
    pub fn uniform(c: f64) -> Self {
        CaseConstants { a: c, c, d: c }
    }
}

impl Default for CaseConstants {
    fn default() -> Self {
        Self::uniform(0.25)
    }
}

/// Which of the cases A–D hold for a tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseLabel {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
    pub constants: CaseConstants,
}

impl CaseLabel {
    pub fn is_covered(&self) -> bool {
        self.a || self.b || self.c || self.d
    }

    pub fn labels(&self) -> String {
        [(self.a, 'A'), (self.b, 'B'), (self.c, 'C'), (self.d, 'D')]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, l)| *l)
            .collect()
    }
}

/// Case ratios of a tuple: the largest constant for which each case holds.
#[derive(Clone, Copy, Debug)]
struct CaseRatios {
    a: f64,
    b: bool,
    c: Option<f64>,
    d: Option<f64>,
}

fn case_ratios(ks: &[i64]) -> CaseRatios {
    let n = ks.len();
    let k: i64 = ks.iter().sum();
    let mut abs: Vec<i64> = ks.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(|a, b| b.cmp(a));
    let k_star = abs[0] as f64;
    let h = h_n_small(ks, k).unsigned_abs() as f64;
    let kabs = k.unsigned_abs() as f64;
    let ratio = |num: f64| if kabs == 0.0 { f64::INFINITY } else { num / kabs };
    // n = 3: the smallest |k_j| against |k|; n ≥ 4: k*_3 against |k|. Both are abs[2].
    let c = (n >= 3).then(|| ratio(abs[2] as f64));
    let d = (n >= 4).then(|| (abs[2] * abs[2] * abs[3]) as f64 / (k_star * k_star));
    CaseRatios {
        a: h / (k_star * k_star),
        b: n >= 3 && ks.contains(&k),
        c,
        d,
    }
}

/// Labels every case that holds with the given constants:
/// A `|H_n| ≥ c_A (k*)²`; B some `k_j = k`; C (`n = 3`) `min|k_j| ≥ c_C |k|`,
/// (`n ≥ 4`) `k*_3 ≥ c_C |k|`; D (`n ≥ 4`) `(k*_3)² k*_4 ≥ c_D (k*)²`.
pub fn classify_cases(tuple: &FrequencyTuple, constants: CaseConstants) -> CaseLabel {
    let ks = tuple.entries();
    let n = ks.len();
    let k = tuple.total();
    let k_star = tuple.k_star() as f64;
    let h = h_n_small(ks, k).unsigned_abs() as f64;
    let kabs = k.unsigned_abs() as f64;
    let a = h >= constants.a * k_star * k_star;
    let b = ks.contains(&k);
    let c = match n {
        2 => false,
        3 => ks.iter().all(|kj| kj.unsigned_abs() as f64 >= constants.c * kabs),
        _ => tuple.kth_largest(3) as f64 >= constants.c * kabs,
    };
    let d = n >= 4 && {
        let k3 = tuple.kth_largest(3) as f64;
        let k4 = tuple.kth_largest(4) as f64;
        k3 * k3 * k4 >= constants.d * k_star * k_star
    };
    CaseLabel {
        a,
        b,
        c,
        d,
        constants,
    }
}

/// Visits every tuple of nonzero entries in `[-bound, bound]` with nonzero sum.
fn for_each_scan_tuple(n: usize, bound: i64, mut visit: impl FnMut(&[i64])) {
    let values: Vec<i64> = (-bound..=bound).filter(|&k| k != 0).collect();
    let mut idx = vec![0usize; n];
    let mut ks: Vec<i64> = vec![values[0]; n];
    loop {
        if ks.iter().sum::<i64>() != 0 {
            visit(&ks);
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < values.len() {
                ks[pos] = values[idx[pos]];
                break;
            }
            idx[pos] = 0;
            ks[pos] = values[0];
        }
    }
}

fn scan_cost(n: usize, bound: usize) -> u128 {
    (2 * bound as u128).pow(n as u32)
}

fn check_scan(n: usize, bound: usize) -> Result<()> {
    if !(2..=5).contains(&n) {
        return Err(Error::InvalidArgument(format!("case scans support 2 <= n <= 5, got {n}")));
    }
    if bound == 0 {
        return Err(Error::InvalidArgument("scan bound K must be positive".into()));
    }
    let cost = scan_cost(n, bound);
    if cost > SCAN_BUDGET {
        let suggestion = ((SCAN_BUDGET as f64).powf(1.0 / n as f64) / 2.0).floor() as usize;
        return Err(Error::BudgetExceeded {
            operation: "case scan",
            cost,
            budget: SCAN_BUDGET,
            suggestion,
        });
    }
    Ok(())
}

/// Outcome of an exhaustive case scan.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseScan {
    pub degree: usize,
    pub bound: usize,
    /// Largest uniform constant under which every scanned tuple is covered.
    pub certified_constant: f64,
    /// Tuple attaining the constant, if any tuple needed one.
    pub extremal_tuple: Option<Vec<i64>>,
    pub tuples: u64,
}

/// Largest `c` such that every admissible tuple with `|k_i| ≤ bound` satisfies
/// at least one case when `c_A = c_C = c_D = c`.
///
/// The returned value is rounded down by a few ulps so that re-checking the
/// extremal tuple with [`classify_cases`] in floating point still covers it.
pub fn min_case_constant(n: usize, bound: usize) -> Result<CaseScan> {
    check_scan(n, bound)?;
    let mut best = f64::INFINITY;
    let mut extremal = None;
    let mut tuples = 0u64;
    for_each_scan_tuple(n, bound as i64, |ks| {
        tuples += 1;
        let r = case_ratios(ks);
        if r.b {
            return;
        }
        let cover = [Some(r.a), r.c, r.d].into_iter().flatten().fold(0.0, f64::max);
        if cover < best {
            best = cover;
            extremal = Some(ks.to_vec());
        }
    });
    let certified = if best.is_finite() {
        best * (1.0 - 8.0 * f64::EPSILON)
    } else {
        f64::INFINITY
    };
    Ok(CaseScan {
        degree: n,
        bound,
        certified_constant: certified,
        extremal_tuple: extremal,
        tuples,
    })
}

/// Per-case counts over an exhaustive scan at fixed constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseCoverage {
    pub degree: usize,
    pub bound: usize,
    pub constants: CaseConstants,
    pub tuples: u64,
    pub count_a: u64,
    pub count_b: u64,
    pub count_c: u64,
    pub count_d: u64,
    pub uncovered: u64,
    /// Up to `sample_limit` uncovered tuples.
    pub uncovered_sample: Vec<Vec<i64>>,
}

pub fn case_coverage(n: usize, bound: usize, constants: CaseConstants, sample_limit: usize) -> Result<CaseCoverage> {
    check_scan(n, bound)?;
    let mut cov = CaseCoverage {
        degree: n,
        bound,
        constants,
        tuples: 0,
        count_a: 0,
        count_b: 0,
        count_c: 0,
        count_d: 0,
        uncovered: 0,
        uncovered_sample: Vec::new(),
    };
    for_each_scan_tuple(n, bound as i64, |ks| {
        let tuple = FrequencyTuple { entries: ks.to_vec() };
        let label = classify_cases(&tuple, constants);
        cov.tuples += 1;
        cov.count_a += label.a as u64;
        cov.count_b += label.b as u64;
        cov.count_c += label.c as u64;
        cov.count_d += label.d as u64;
        if !label.is_covered() {
            cov.uncovered += 1;
            if cov.uncovered_sample.len() < sample_limit {
                cov.uncovered_sample.push(ks.to_vec());
            }
        }
    });
    Ok(cov)
}

/// A multilinear symbol `σ(k, k⃗)` together with its restriction `Ω_k`:
/// returning `None` excludes the tuple.
pub trait Symbol {
    fn weight(&self, k: i64, ks: &[i64]) -> Option<Complex64>;
}

impl<F> Symbol for F
where
    F: Fn(i64, &[i64]) -> Option<Complex64>,
{
    fn weight(&self, k: i64, ks: &[i64]) -> Option<Complex64> {
        self(k, ks)
    }
}

fn nonzero_modes(field: &SpectralField) -> Vec<(i64, Complex64)> {
    let n = field.grid().max_wavenumber() as i64;
    (-n..=n)
        .filter(|&k| k != 0)
        .map(|k| (k, field.coeff(k)))
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .collect()
}

fn check_fields(fields: &[&SpectralField]) -> Result<Arc<Grid>> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("convolution needs at least one field".into()))?;
    let grid = Arc::clone(first.grid());
    for f in fields {
        if **f.grid() != *grid {
            return Err(Error::GridMismatch {
                left_n: grid.max_wavenumber(),
                left_m: grid.samples(),
                right_n: f.grid().max_wavenumber(),
                right_m: f.grid().samples(),
            });
        }
    }
    let n = grid.max_wavenumber();
    if n > 1_000_000 {
        return Err(Error::Overflow("tuple enumeration bound"));
    }
    let cost = (2 * n as u128).pow(fields.len() as u32);
    if cost > CONVOLUTION_BUDGET {
        let suggestion = ((CONVOLUTION_BUDGET as f64).powf(1.0 / fields.len() as f64) / 2.0).floor() as usize;
        return Err(Error::BudgetExceeded {
            operation: "direct convolution",
            cost,
            budget: CONVOLUTION_BUDGET,
            suggestion,
        });
    }
    Ok(grid)
}

/// Calls `visit(k, k⃗, Π û_{k_j})` for every tuple of nonzero band wavenumbers
/// whose sum `k` is nonzero and within the band.
fn for_each_tuple(fields: &[&SpectralField], n_max: i64, mut visit: impl FnMut(i64, &[i64], Complex64)) {
    let lists: Vec<Vec<(i64, Complex64)>> = fields.iter().map(|f| nonzero_modes(f)).collect();
    let mut ks = vec![0i64; lists.len()];
    fn recurse<F: FnMut(i64, &[i64], Complex64)>(
        lists: &[Vec<(i64, Complex64)>],
        depth: usize,
        ks: &mut [i64],
        sum: i64,
        prod: Complex64,
        n_max: i64,
        visit: &mut F,
    ) {
        let last = depth + 1 == lists.len();
        for &(kj, cj) in &lists[depth] {
            let s = sum + kj;
            if last && (s == 0 || s.abs() > n_max) {
                continue;
            }
            ks[depth] = kj;
            let p = prod * cj;
            if last {
                visit(s, ks, p);
            } else {
                recurse(lists, depth + 1, ks, s, p, n_max, visit);
            }
        }
    }
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    recurse(&lists, 0, &mut ks, 0, Complex64::new(1.0, 0.0), n_max, &mut visit);
}

/// Direct restricted convolution
/// `T_σ(u_1, …, u_n)_k = Σ_{k⃗ ∈ Ω_k} σ(k, k⃗) Π û_{k_j}`, truncated to `|k| ≤ N`.
pub fn convolve_n(fields: &[&SpectralField], symbol: &impl Symbol) -> Result<SpectralField> {
    let grid = check_fields(fields)?;
    let n = grid.max_wavenumber() as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for_each_tuple(fields, n, |k, ks, p| {
        if let Some(w) = symbol.weight(k, ks) {
            out[(k + n) as usize] += w * p;
        }
    });
    Ok(SpectralField::from_raw(&grid, out))
}

/// `σ = ik` on every tuple.
pub fn derivative_symbol(k: i64, _ks: &[i64]) -> Option<Complex64> {
    Some(Complex64::new(0.0, k as f64))
}

/// Parameters of the high-low region: `≫` is `k*_1 ≥ λ·k*_2`, `≳` thresholds
/// on `H_n` use `c_A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionParams {
    pub lambda: f64,
    pub c_a: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams { lambda: 4.0, c_a: 0.25 }
    }
}

impl RegionParams {
    pub fn new(lambda: f64, c_a: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::InvalidArgument(format!("dominance factor must exceed 1, got {lambda}")));
        }
        if !(c_a.is_finite() && c_a > 0.0) {
            return Err(Error::InvalidArgument(format!("c_A must be positive, got {c_a}")));
        }
        Ok(RegionParams { lambda, c_a })
    }

    /// Slot-1 high-low region: `|k_1| ≥ λ max_{j>1}|k_j|`, `Σ_{j>1} k_j ≠ 0`,
    /// `|H_n| ≥ c_A k_1²`, and no internal frequency equal to `k`.
    pub fn in_first_slot_region(&self, k: i64, ks: &[i64]) -> Option<i128> {
        let k1 = ks[0];
        let rest_max = ks[1..].iter().map(|x| x.abs()).max().unwrap_or(0);
        if (k1.abs() as f64) < self.lambda * rest_max as f64 {
            return None;
        }
        if k - k1 == 0 || ks.contains(&k) {
            return None;
        }
        let h = h_n_small(ks, k);
        let k1f = k1 as f64;
        if (h.unsigned_abs() as f64) < self.c_a * k1f * k1f {
            return None;
        }
        Some(h)
    }
}

/// Components of `ik·ĝ(u)` split by resonance count, summed over degrees.
#[derive(Clone, Debug)]
pub struct ResonanceSplit {
    pub r1: SpectralField,
    pub r2: SpectralField,
    pub nr: SpectralField,
}

/// Components of `NR`, with `HL` also kept per degree as `(n, HL_n)`.
#[derive(Clone, Debug)]
pub struct HighLowSplit {
    pub hl: SpectralField,
    pub hl_by_degree: Vec<(usize, SpectralField)>,
    pub hh: SpectralField,
    pub re: SpectralField,
}

/// Every component in a single enumeration pass.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub resonance: ResonanceSplit,
    pub high_low: HighLowSplit,
    /// `R¹` by tuple enumeration (weighted by resonance count).
    pub r1_enumerated: SpectralField,
}

fn zero_vec(grid: &Grid) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); grid.len()]
}

/// Splits `ik·ĝ(u)` into `R¹ + R² + NR` and `NR` into `HL + HH + RE`.
/// `R¹` is `ik û_k θ'` with `θ'` normalized by `gauge`; `R² = R − R¹`.
pub fn decompose(
    u: &SpectralField,
    g: &PolynomialNonlinearity,
    region: RegionParams,
    gauge: GaugeNormalization,
) -> Result<Decomposition> {
    let grid = Arc::clone(u.grid());
    let n_max = grid.max_wavenumber() as i64;
    let rate = gauge.rate(u, g)?;

    let mut resonant = zero_vec(&grid);
    let mut r1_enum = zero_vec(&grid);
    let mut nr = zero_vec(&grid);
    let mut hh = zero_vec(&grid);
    let mut re = zero_vec(&grid);
    let mut hl_by_degree = Vec::new();

    for (degree, a) in g.terms() {
        let fields: Vec<&SpectralField> = vec![u; degree];
        check_fields(&fields)?;
        let mut hl = zero_vec(&grid);
        for_each_tuple(&fields, n_max, |k, ks, p| {
            let idx = (k + n_max) as usize;
            let term = Complex64::new(0.0, k as f64 * a) * p;
            let count = ks.iter().filter(|&&kj| kj == k).count();
            if count > 0 {
                resonant[idx] += term;
                r1_enum[idx] += term * count as f64;
                return;
            }
            nr[idx] += term;
            let h = h_n_small(ks, k).unsigned_abs() as f64;
            // largest and second largest |k_j|
            let (mut first, mut second, mut arg) = (0i64, 0i64, 0usize);
            for (j, kj) in ks.iter().enumerate() {
                let v = kj.abs();
                if v > first {
                    second = first;
                    first = v;
                    arg = j;
                } else if v > second {
                    second = v;
                }
            }
            let kf = first as f64;
            let large_h = h >= region.c_a * kf * kf;
            let dominant = kf >= region.lambda * second as f64 && k - ks[arg] != 0;
            if large_h && dominant {
                hl[idx] += term;
            } else if large_h {
                hh[idx] += term;
            } else {
                re[idx] += term;
            }
        });
        hl_by_degree.push((degree, SpectralField::from_raw(&grid, hl)));
    }

    let r1 = u.apply_multiplier(|k| Complex64::new(0.0, k as f64 * rate));
    let resonant = SpectralField::from_raw(&grid, resonant);
    let r2 = resonant.try_sub(&r1)?;
    let mut hl_total = SpectralField::zeros(&grid);
    for (_, f) in &hl_by_degree {
        hl_total = hl_total.try_add(f)?;
    }
    Ok(Decomposition {
        resonance: ResonanceSplit {
            r1,
            r2,
            nr: SpectralField::from_raw(&grid, nr),
        },
        high_low: HighLowSplit {
            hl: hl_total,
            hl_by_degree,
            hh: SpectralField::from_raw(&grid, hh),
            re: SpectralField::from_raw(&grid, re),
        },
        r1_enumerated: SpectralField::from_raw(&grid, r1_enum),
    })
}

pub fn decompose_r1_r2_nr(
    u: &SpectralField,
    g: &PolynomialNonlinearity,
    gauge: GaugeNormalization,
) -> Result<ResonanceSplit> {
    Ok(decompose(u, g, RegionParams::default(), gauge)?.resonance)
}

pub fn decompose_hl_hh_re(u: &SpectralField, g: &PolynomialNonlinearity, region: RegionParams) -> Result<HighLowSplit> {
    Ok(decompose(u, g, region, GaugeNormalization::Mean)?.high_low)
}

fn multilinear_inputs<'a>(first: &'a SpectralField, rest: &[&'a SpectralField]) -> Result<Vec<&'a SpectralField>> {
    if rest.is_empty() {
        return Err(Error::InvalidArgument("multilinear operator needs n >= 2 inputs".into()));
    }
    let mut fields = Vec::with_capacity(rest.len() + 1);
    fields.push(first);
    fields.extend_from_slice(rest);
    Ok(fields)
}

/// High-low operator with the dominant frequency in the first slot:
/// `Σ_{slot-1 region} ik Π û^{(j)}_{k_j}`.
pub fn high_low(first: &SpectralField, rest: &[&SpectralField], region: RegionParams) -> Result<SpectralField> {
    let fields = multilinear_inputs(first, rest)?;
    convolve_n(&fields, &|k: i64, ks: &[i64]| {
        region
            .in_first_slot_region(k, ks)
            .map(|_| Complex64::new(0.0, k as f64))
    })
}

/// Normal-form transform: symbol `k / H_n` on the slot-1 high-low region.
pub fn t_nf(first: &SpectralField, rest: &[&SpectralField], region: RegionParams) -> Result<SpectralField> {
    let fields = multilinear_inputs(first, rest)?;
    convolve_n(&fields, &|k: i64, ks: &[i64]| {
        region
            .in_first_slot_region(k, ks)
            .map(|h| Complex64::new(k as f64 / h as f64, 0.0))
    })
}

/// `Σ_n n a_n T_NF^n[first, u, …, u]` over the monomials of `g`.
pub fn t_nf_sum(
    first: &SpectralField,
    u: &SpectralField,
    g: &PolynomialNonlinearity,
    region: RegionParams,
) -> Result<SpectralField> {
    let mut acc = SpectralField::zeros(u.grid());
    for (degree, a) in g.terms() {
        let rest: Vec<&SpectralField> = vec![u; degree - 1];
        acc = acc.try_axpy(degree as f64 * a, &t_nf(first, &rest, region)?)?;
    }
    Ok(acc)
}

/// `sup_{k⃗} |k|^{s0-1} |σ(k, k⃗)| / (k* k*_2)^{s1}` over tuples with
/// `|k_j| ≤ bound` accepted by the symbol. Exploration aid only.
pub fn symbol_condition_sup(n: usize, bound: usize, s0: f64, s1: f64, symbol: &impl Symbol) -> Result<f64> {
    check_scan(n, bound)?;
    let mut sup: f64 = 0.0;
    for_each_scan_tuple(n, bound as i64, |ks| {
        let k: i64 = ks.iter().sum();
        if let Some(w) = symbol.weight(k, ks) {
            let t = FrequencyTuple { entries: ks.to_vec() };
            let denom = ((t.kth_largest(1) * t.kth_largest(2)) as f64).powf(s1);
            sup = sup.max((k.abs() as f64).powf(s0 - 1.0) * w.norm() / denom);
        }
    });
    Ok(sup)
}

/// Both sides of the normal-form derivative identity at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NfIdentitySample {
    pub index: usize,
    pub t: f64,
    /// `‖(∂_t − ik³ + γ) T‖_{H⁰}` with `T = Σ n a_n T_NF^n[W_t^γ u_0, ũ, …]`.
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    /// `‖lhs − rhs‖_{H⁰}`.
    pub residual: f64,
}

/// Checks, on recorded samples, the identity
///
/// `(∂_t − ik³ + γ) T_NF[W u_0, ũ, …, ũ] = −HL[W u_0, ũ, …, ũ]
///   + (n − 1) T_NF[W u_0, (∂_t + ∂_x³) ũ, ũ, …, ũ]`
///
/// summed over the monomials of `g` with weights `n a_n`. Time derivatives
/// are centered differences, so the residual is `O(h²)` in the sample spacing.
pub fn nf_time_identity_residual(
    u0: &SpectralField,
    trajectory: &Trajectory,
    problem: &Problem,
    region: RegionParams,
) -> Result<Vec<NfIdentitySample>> {
    if trajectory.len() < 3 {
        return Err(Error::NotEnoughSnapshots {
            needed: 3,
            got: trajectory.len(),
        });
    }
    let gamma = problem.gamma;
    let g = &problem.g;
    let free = |i: usize| u0.airy_propagator(trajectory.times[i], gamma);
    let transformed = |i: usize| t_nf_sum(&free(i), &trajectory.gauged(i), g, region);
    let mut out = Vec::new();
    for i in gauge::centered_indices(&trajectory.times, None) {
        let span = trajectory.times[i + 1] - trajectory.times[i - 1];
        let current = transformed(i)?;
        let lhs = gauge::centered_difference(&transformed(i - 1)?, &transformed(i + 1)?, span)?.try_add(
            &current.apply_multiplier(|k| {
                let kf = k as f64;
                Complex64::new(gamma, -kf * kf * kf)
            }),
        )?;

        let u_tilde = trajectory.gauged(i);
        let dispersive_derivative =
            gauge::centered_difference(&trajectory.gauged(i - 1), &trajectory.gauged(i + 1), span)?.try_add(
                &u_tilde.apply_multiplier(|k| {
                    let kf = k as f64;
                    Complex64::new(0.0, -kf * kf * kf)
                }),
            )?;
        let w = free(i);
        let mut rhs = SpectralField::zeros(u0.grid());
        for (degree, a) in g.terms() {
            let weight = degree as f64 * a;
            let tail: Vec<&SpectralField> = vec![&u_tilde; degree - 1];
            let hl = high_low(&w, &tail, region)?;
            let mut mixed: Vec<&SpectralField> = vec![&dispersive_derivative];
            mixed.extend(std::iter::repeat_n(&u_tilde, degree - 2));
            let nf = t_nf(&w, &mixed, region)?;
            rhs = rhs.try_axpy(-weight, &hl)?.try_axpy(weight * (degree - 1) as f64, &nf)?;
        }
        out.push(NfIdentitySample {
            index: i,
            t: trajectory.times[i],
            lhs_norm: lhs.sobolev_norm(0.0),
            rhs_norm: rhs.sobolev_norm(0.0),
            residual: lhs.try_sub(&rhs)?.sobolev_norm(0.0),
        });
    }
    Ok(out)
}

/// The smooth remainder at one sample, with the pieces it was built from.
#[derive(Clone, Debug)]
pub struct SmoothRemainder {
    pub t: f64,
    /// `v = ũ − W_t^γ u_0 − Σ n a_n T_NF^n[W_t^γ u_0, ũ, …] − L_t F`.
    pub v: SpectralField,
    /// `Σ n a_n T_NF^n[W_t^γ u_0, ũ, …]`.
    pub normal_form: SpectralField,
    /// `L_t F` with `F̂ = f̂ / (γ − ik³)`.
    pub gauged_profile: SpectralField,
    /// `ũ − W_t^γ u_0`.
    pub duhamel: SpectralField,
}

/// Computes `v` from its defining decomposition at every sample.
pub fn v_from_definition(
    trajectory: &Trajectory,
    problem: &Problem,
    region: RegionParams,
) -> Result<Vec<SmoothRemainder>> {
    if trajectory.is_empty() {
        return Err(Error::NotEnoughSnapshots { needed: 1, got: 0 });
    }
    let u0 = trajectory.initial();
    let profile = steady_state_linear(&problem.forcing, problem.gamma)?;
    (0..trajectory.len())
        .map(|i| {
            let t = trajectory.times[i];
            let free = u0.airy_propagator(t, problem.gamma);
            let u_tilde = trajectory.gauged(i);
            let normal_form = t_nf_sum(&free, &u_tilde, &problem.g, region)?;
            let gauged_profile = gauge::apply_gauge(&profile, trajectory.thetas[i]);
            let duhamel = u_tilde.try_sub(&free)?;
            let v = duhamel.try_sub(&normal_form)?.try_sub(&gauged_profile)?;
            Ok(SmoothRemainder {
                t,
                v,
                normal_form,
                gauged_profile,
                duhamel,
            })
        })
        .collect()
}
