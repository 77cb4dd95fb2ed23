//! Decay-constant extraction and per-dot variance solving.
//!
//! Dephasing traces (`J ≈ 0`) decay as `offset + amplitude·e^{-(σt)²/2}`
//! with `σ = σ₁₂` for the standard preparation. Rabi traces follow the
//! large-`J` shape `a + b·cos Jt + c·(1 + cos Jt)·e^{-(σ̄t)²/2}` with
//! `σ̄ = σ̄₂₃` (standard) or `σ̄₁₂` (swapped). Each fitted constant is a
//! linear form in `(σ₁², σ₂², σ₃²)`; [`solve_sigmas`] inverts a set of them.
//!
//! Everything here is dimensionless (times in 1/σ_hf).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{self, LmConfig, Problem};

pub const MIN_TRACE_POINTS: usize = 8;

/// Sampled data to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Optional inverse-variance weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Trace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let t = Trace { times, values, weights };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Trace(format!(
                "{} times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.len() < MIN_TRACE_POINTS {
            return Err(Error::Trace(format!(
                "insufficient points: {} < {MIN_TRACE_POINTS}",
                self.times.len()
            )));
        }
        if self.times.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::Trace("non-finite time or value".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Trace("times must be strictly increasing".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.times.len() {
                return Err(Error::Trace("weights length differs from times".into()));
            }
            if w.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::Trace("weights must be finite and positive".into()));
            }
        }
        Ok(())
    }

    fn sqrt_weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i].sqrt())
    }

    fn t_max(&self) -> f64 {
        *self.times.last().expect("validated")
    }

    fn span(&self) -> f64 {
        self.t_max() - self.times[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub residual_rms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_stderr: Option<BTreeMap<String, f64>>,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }
}

/// Curve models linear in all parameters except a few "shape" ones.
trait Model {
    const NAMES: &'static [&'static str];
    fn value(p: &[f64], t: f64) -> f64;
    fn gradient(p: &[f64], t: f64, out: &mut [f64]);
}

struct Dephasing;

impl Model for Dephasing {
    const NAMES: &'static [&'static str] = &["sigma", "amplitude", "offset"];

    fn value(p: &[f64], t: f64) -> f64 {
        p[2] + p[1] * (-(p[0] * t).powi(2) / 2.0).exp()
    }

    fn gradient(p: &[f64], t: f64, out: &mut [f64]) {
        let e = (-(p[0] * t).powi(2) / 2.0).exp();
        out[0] = -p[1] * e * p[0] * t * t;
        out[1] = e;
        out[2] = 1.0;
    }
}

struct Rabi;

impl Model for Rabi {
    const NAMES: &'static [&'static str] = &["j", "sigma_bar", "offset", "cos_amplitude", "decay_amplitude"];

    fn value(p: &[f64], t: f64) -> f64 {
        let c = (p[0] * t).cos();
        p[2] + p[3] * c + p[4] * (1.0 + c) * (-(p[1] * t).powi(2) / 2.0).exp()
    }

    fn gradient(p: &[f64], t: f64, out: &mut [f64]) {
        let (s, c) = (p[0] * t).sin_cos();
        let e = (-(p[1] * t).powi(2) / 2.0).exp();
        out[0] = -t * s * (p[3] + p[4] * e);
        out[1] = -p[4] * (1.0 + c) * e * p[1] * t * t;
        out[2] = 1.0;
        out[3] = c;
        out[4] = (1.0 + c) * e;
    }
}

struct CurveFit<'a, M> {
    trace: &'a Trace,
    _model: std::marker::PhantomData<M>,
}

impl<M: Model> Problem for CurveFit<'_, M> {
    fn n_params(&self) -> usize {
        M::NAMES.len()
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let tr = self.trace;
        DVector::from_fn(tr.times.len(), |i, _| {
            tr.sqrt_weight(i) * (M::value(p, tr.times[i]) - tr.values[i])
        })
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let tr = self.trace;
        let n = M::NAMES.len();
        let mut jac = DMatrix::zeros(tr.times.len(), n);
        let mut row = vec![0.0; n];
        for i in 0..tr.times.len() {
            M::gradient(p, tr.times[i], &mut row);
            let sw = tr.sqrt_weight(i);
            for (j, g) in row.iter().enumerate() {
                jac[(i, j)] = sw * g;
            }
        }
        jac
    }
}

fn run_fit<M: Model>(trace: &Trace, start: &[f64], warnings: Vec<String>) -> FitResult {
    let problem = CurveFit::<M> {
        trace,
        _model: std::marker::PhantomData,
    };
    let report = lm::minimize(&problem, start, &LmConfig::default());
    let m = trace.times.len();
    let n = M::NAMES.len();
    let unweighted_rms = (trace
        .times
        .iter()
        .zip(&trace.values)
        .map(|(t, v)| (M::value(&report.params, *t) - v).powi(2))
        .sum::<f64>()
        / m as f64)
        .sqrt();
    let dof = (m.saturating_sub(n)).max(1) as f64;
    let scale = 2.0 * report.cost / dof;
    let stderr = if report.converged {
        report.inverse_hessian.as_ref().map(|cov| {
            M::NAMES
                .iter()
                .enumerate()
                .map(|(i, name)| (name.to_string(), (scale * cov[(i, i)]).max(0.0).sqrt()))
                .collect()
        })
    } else {
        None
    };
    FitResult {
        params: M::NAMES
            .iter()
            .zip(&report.params)
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        residual_rms: unweighted_rms,
        param_stderr: stderr,
        converged: report.converged,
        n_iter: report.n_iter,
        warnings,
    }
}

/// Weighted linear least squares for the coefficients of fixed basis
/// functions; returns `(coefficients, weighted SSR)`.
fn linear_fit(trace: &Trace, basis: impl Fn(f64, &mut [f64]), k: usize) -> Option<(Vec<f64>, f64)> {
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    let mut btb = 0.0;
    for (i, (&t, &y)) in trace.times.iter().zip(&trace.values).enumerate() {
        basis(t, &mut row);
        let w = trace.sqrt_weight(i).powi(2);
        for a in 0..k {
            atb[a] += w * row[a] * y;
            for b in 0..k {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
        btb += w * y * y;
    }
    let coef = ata.clone().cholesky()?.solve(&atb);
    let ssr = btb - 2.0 * coef.dot(&atb) + coef.dot(&(&ata * &coef));
    Some((coef.as_slice().to_vec(), ssr.max(0.0)))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// Gaussian dephasing fit; `sigma` is reported nonnegative.
pub fn fit_dephasing(trace: &Trace) -> Result<FitResult> {
    trace.validate()?;
    let mut warnings = vec![];
    let range = trace.values.iter().cloned().fold(f64::MIN, f64::max)
        - trace.values.iter().cloned().fold(f64::MAX, f64::min);
    if range < 1e-9 {
        warnings.push("trace is constant: amplitude indistinguishable from zero".into());
        let mean = trace.values.iter().sum::<f64>() / trace.values.len() as f64;
        return Ok(FitResult {
            params: [("sigma", f64::NAN), ("amplitude", 0.0), ("offset", mean)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            residual_rms: 0.0,
            param_stderr: None,
            converged: false,
            n_iter: 0,
            warnings,
        });
    }

    let t_max = trace.t_max().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, [f64; 3])> = None;
    for sigma in log_grid(0.05 / t_max, 200.0 / t_max, 120) {
        let fit = linear_fit(
            trace,
            |t, row| {
                row[0] = (-(sigma * t).powi(2) / 2.0).exp();
                row[1] = 1.0;
            },
            2,
        );
        if let Some((c, ssr)) = fit {
            if best.is_none_or(|(b, _)| ssr < b) {
                best = Some((ssr, [sigma, c[0], c[1]]));
            }
        }
    }
    let start = best.map(|(_, p)| p).unwrap_or([1.0 / t_max, range, 0.0]);
    let mut result = run_fit::<Dephasing>(trace, &start, warnings);
    let sigma = result.params.get_mut("sigma").expect("named");
    *sigma = sigma.abs();
    if *sigma * t_max < 2.0 {
        result
            .warnings
            .push(format!("trace spans only {:.2} decay constants (< 2)", *sigma * t_max));
    }
    if result.param("amplitude").abs() < 1e-6 {
        result.converged = false;
        result.param_stderr = None;
        result.warnings.push("fitted amplitude is ~0".into());
    }
    Ok(result)
}

/// Large-`J` Rabi fit: `(J, σ̄)` plus three free amplitudes.
///
/// A grid scan over `J ∈ [0.5, 1.5]·j_guess` and `σ̄` (amplitudes solved
/// linearly at each node) picks the basin before local refinement, so the
/// oscillation frequency cannot alias onto a neighbouring minimum.
pub fn fit_rabi(trace: &Trace, j_guess: f64) -> Result<FitResult> {
    trace.validate()?;
    if !(j_guess > 0.0 && j_guess.is_finite()) {
        return Err(Error::Usage(format!("j_guess must be > 0, got {j_guess}")));
    }
    let t_max = trace.t_max();
    if j_guess * t_max < std::f64::consts::PI {
        return Err(Error::Trace(format!(
            "oscillation unresolvable: J·t_max = {:.3} < π",
            j_guess * t_max
        )));
    }
    let mut warnings = vec![];
    let period = 2.0 * std::f64::consts::PI / j_guess;
    let points_per_period = trace.times.len() as f64 * period / trace.span();
    if points_per_period < 8.0 {
        warnings.push(format!(
            "only {points_per_period:.1} points per oscillation period at the guessed J (< 8)"
        ));
    }

    // ΔJ·t_max ≤ 0.25 rad keeps the true minimum inside a scanned basin.
    let j_lo = 0.5 * j_guess;
    let j_hi = 1.5 * j_guess;
    let n_j = (((j_hi - j_lo) * t_max / 0.25).ceil() as usize).clamp(16, 20_000);
    let sigmas: Vec<f64> = log_grid(0.2 / t_max, 50.0 / t_max.min(50.0 / j_guess.max(1e-12)).max(1e-12), 24)
        .collect();
    let mut landscape = Vec::with_capacity(n_j);
    for k in 0..n_j {
        let j = j_lo + (j_hi - j_lo) * k as f64 / (n_j - 1) as f64;
        let mut best_here: Option<(f64, [f64; 5])> = None;
        for &sb in &sigmas {
            let fit = linear_fit(
                trace,
                |t, row| {
                    let c = (j * t).cos();
                    row[0] = 1.0;
                    row[1] = c;
                    row[2] = (1.0 + c) * (-(sb * t).powi(2) / 2.0).exp();
                },
                3,
            );
            if let Some((c, ssr)) = fit {
                if best_here.is_none_or(|(b, _)| ssr < b) {
                    best_here = Some((ssr, [j, sb, c[0], c[1], c[2]]));
                }
            }
        }
        if let Some(b) = best_here {
            landscape.push(b);
        }
    }
    if landscape.is_empty() {
        return Err(Error::Trace("Rabi grid scan found no solvable node".into()));
    }
    // Strict `<` keeps the smaller J on ties.
    let (best_idx, &(best_ssr, start)) = landscape
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, [f64; 5]))>, (i, cand)| match acc {
            Some((_, b)) if cand.0 >= b.0 => acc,
            _ => Some((i, cand)),
        })
        .expect("nonempty");

    // Another local minimum in J almost as good as the best one means the
    // frequency is ambiguous.
    let min_sep = 2.0 * std::f64::consts::PI / t_max;
    for i in 1..landscape.len().saturating_sub(1) {
        let (ssr, p) = landscape[i];
        let is_local_min = ssr <= landscape[i - 1].0 && ssr <= landscape[i + 1].0;
        if is_local_min && i != best_idx && (p[0] - start[0]).abs() > min_sep && ssr <= best_ssr * 1.01 + 1e-300 {
            warnings.push(format!(
                "ambiguous J: competing minimum at J = {:.6} vs {:.6}",
                p[0], start[0]
            ));
            break;
        }
    }

    let mut result = run_fit::<Rabi>(trace, &start, warnings);
    let sb = result.params.get_mut("sigma_bar").expect("named");
    *sb = sb.abs();
    Ok(result)
}

/// Fitted decay constants, each a linear form in `(σ₁², σ₂², σ₃²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// `σ₁₂² = σ₁² + σ₂²` (standard dephasing)
    Sigma12,
    /// `σ₂₃² = σ₂² + σ₃²` (swapped dephasing)
    Sigma23,
    /// `σ̄₁₂² = σ₃² + (σ₁² + σ₂²)/4` (swapped Rabi)
    SigmaBar12,
    /// `σ̄₂₃² = σ₁² + (σ₂² + σ₃²)/4` (standard Rabi)
    SigmaBar23,
}

impl SigmaKind {
    pub const ALL: [SigmaKind; 4] = [
        SigmaKind::Sigma12,
        SigmaKind::Sigma23,
        SigmaKind::SigmaBar12,
        SigmaKind::SigmaBar23,
    ];

    pub fn coefficients(self) -> [f64; 3] {
        match self {
            SigmaKind::Sigma12 => [1.0, 1.0, 0.0],
            SigmaKind::Sigma23 => [0.0, 1.0, 1.0],
            SigmaKind::SigmaBar12 => [0.25, 0.25, 1.0],
            SigmaKind::SigmaBar23 => [1.0, 0.25, 0.25],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaKind::Sigma12 => "sigma12",
            SigmaKind::Sigma23 => "sigma23",
            SigmaKind::SigmaBar12 => "sigma_bar12",
            SigmaKind::SigmaBar23 => "sigma_bar23",
        }
    }
}

/// One squared decay constant with optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: SigmaKind,
    pub value_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr_sq: Option<f64>,
}

impl Measurement {
    pub fn squared(kind: SigmaKind, value_sq: f64) -> Self {
        Measurement { kind, value_sq, stderr_sq: None }
    }

    /// From a fitted `σ ± δσ`; the squared uncertainty is `2σ·δσ`.
    pub fn from_sigma(kind: SigmaKind, sigma: f64, stderr: Option<f64>) -> Self {
        Measurement {
            kind,
            value_sq: sigma * sigma,
            stderr_sq: stderr.map(|e| 2.0 * sigma.abs() * e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSolution {
    /// `(σ₁², σ₂², σ₃²)`.
    pub sigma_sq: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sq_stderr: Option<[f64; 3]>,
    /// `√max(σⱼ², 0)`.
    pub sigma: [f64; 3],
    pub feasible: bool,
    /// RMS of the (unweighted) misfit of the linear forms.
    pub residual_rms: f64,
    pub rank: usize,
}

fn design(kinds: &[SigmaKind]) -> DMatrix<f64> {
    DMatrix::from_fn(kinds.len(), 3, |i, j| kinds[i].coefficients()[j])
}

fn rank_of(kinds: &[SigmaKind]) -> usize {
    if kinds.is_empty() {
        return 0;
    }
    let svd = design(kinds).svd(false, false);
    let top = svd.singular_values.max();
    svd.singular_values.iter().filter(|s| **s > 1e-10 * top.max(1.0)).count()
}

fn completions(kinds: &[SigmaKind]) -> Vec<String> {
    let mut out: Vec<String> = SigmaKind::ALL
        .iter()
        .filter(|k| !kinds.contains(k))
        .filter(|k| {
            let mut extended = kinds.to_vec();
            extended.push(**k);
            rank_of(&extended) > rank_of(kinds)
        })
        .map(|k| k.name().to_string())
        .collect();
    if out.is_empty() {
        out = SigmaKind::ALL
            .iter()
            .filter(|k| !kinds.contains(k))
            .map(|k| k.name().to_string())
            .collect();
    }
    out
}

/// Least-squares `(σ₁², σ₂², σ₃²)` from a rank-3 set of measurements.
///
/// Weighted by `1/stderr²` when every measurement carries an uncertainty;
/// otherwise unweighted, with uncertainties estimated from the misfit when
/// the system is over-determined.
pub fn solve_sigmas(measurements: &[Measurement]) -> Result<SigmaSolution> {
    let kinds: Vec<SigmaKind> = measurements.iter().map(|m| m.kind).collect();
    let rank = rank_of(&kinds);
    if rank < 3 {
        return Err(Error::UnderDetermined {
            rank,
            missing: completions(&kinds),
        });
    }
    if measurements.iter().any(|m| !m.value_sq.is_finite()) {
        return Err(Error::Usage("measurement values must be finite".into()));
    }
    let all_weighted = measurements
        .iter()
        .all(|m| m.stderr_sq.is_some_and(|e| e > 0.0 && e.is_finite()));

    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for m in measurements {
        let row = Vector3::from(m.kind.coefficients());
        let w = if all_weighted { m.stderr_sq.unwrap().powi(-2) } else { 1.0 };
        ata += row * row.transpose() * w;
        atb += row * (w * m.value_sq);
    }
    let inverse = ata
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normal matrix is singular".into()))?;
    let x = inverse * atb;

    let residuals: Vec<f64> = measurements
        .iter()
        .map(|m| Vector3::from(m.kind.coefficients()).dot(&x) - m.value_sq)
        .collect();
    let residual_rms =
        (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();

    let stderr = if all_weighted {
        Some(inverse)
    } else if measurements.len() > 3 {
        let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / (measurements.len() - 3) as f64;
        Some(inverse * s2)
    } else {
        None
    }
    .map(|cov| [0, 1, 2].map(|i| cov[(i, i)].max(0.0).sqrt()));

    let sigma_sq = [x[0], x[1], x[2]];
    let feasible = (0..3).all(|i| {
        let slack = stderr.map_or(1e-12, |e| 3.0 * e[i] + 1e-12);
        sigma_sq[i] >= -slack
    });
    Ok(SigmaSolution {
        sigma_sq,
        sigma_sq_stderr: stderr,
        sigma: sigma_sq.map(|v| v.max(0.0).sqrt()),
        feasible,
        residual_rms,
        rank,
    })
}

/// `σ₃² = σ̄₁² - σ₁₂²/4`, exact for the (σ₁₂, σ̄₁₂) pair.
pub fn sigma3_sq_from_pair12(sigma12_sq: f64, sigma_bar12_sq: f64) -> f64 {
    sigma_bar12_sq - sigma12_sq / 4.0
}

/// `σ₃²` alone, with its standard error when available: from the full solve
/// when the set has rank 3, otherwise from the (σ₁₂, σ̄₁₂) shortcut.
pub fn solve_sigma3(measurements: &[Measurement]) -> Result<(f64, Option<f64>)> {
    match solve_sigmas(measurements) {
        Ok(sol) => Ok((sol.sigma_sq[2], sol.sigma_sq_stderr.map(|e| e[2]))),
        Err(err @ Error::UnderDetermined { .. }) => {
            let find = |k| measurements.iter().find(|m| m.kind == k);
            match (find(SigmaKind::Sigma12), find(SigmaKind::SigmaBar12)) {
                (Some(a), Some(b)) => {
                    let value = sigma3_sq_from_pair12(a.value_sq, b.value_sq);
                    let stderr = match (a.stderr_sq, b.stderr_sq) {
                        (Some(ea), Some(eb)) => Some((eb * eb + ea * ea / 16.0).sqrt()),
                        _ => None,
                    };
                    Ok((value, stderr))
                }
                _ => Err(err),
            }
        }
        Err(e) => Err(e),
    }
}
