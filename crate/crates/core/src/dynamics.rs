//! Exact evolution and Monte Carlo disorder averaging.
//!
//! Every field sample is evolved exactly, either in the full 8-dim spin
//! space or in the 3-dim gauge manifold, and the singlet-return probability
//! is averaged over samples. This is the brute-force reference that the
//! quadrature and closed forms in [`crate::analytic`] are checked against.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperfine::{deltas, DotPair, DotSigmas, FieldSample, FieldSampler};
use crate::spin8::{self, Op8};
use crate::su3::{self, FixedAngles, GaugeSign, Mat3C};

/// Samples per Monte Carlo task. Fixed so results do not depend on the
/// number of worker threads.
pub const MC_CHUNK: u64 = 4096;

/// Strictly increasing, nonnegative evaluation times in units of 1/σ_hf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSpec("time grid is empty".into()));
        }
        if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSpec(
                "time grid must be finite and start at t >= 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("time grid must be strictly increasing".into()));
        }
        Ok(TimeGrid(times))
    }

    /// `count` equally spaced points from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::InvalidSpec("time grid needs at least one point".into())),
            1 => Self::new(vec![start]),
            _ => {
                let step = (stop - start) / (count - 1) as f64;
                Self::new((0..count).map(|i| start + step * i as f64).collect())
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}

/// Which gauge manifold(s) the initial singlet is prepared in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeMode {
    /// Random gauge: equal-weight average of both manifolds.
    #[default]
    Both,
    Up,
    Down,
}

impl GaugeMode {
    fn gauges(self) -> &'static [GaugeSign] {
        match self {
            GaugeMode::Both => &[GaugeSign::Up, GaugeSign::Down],
            GaugeMode::Up => &[GaugeSign::Up],
            GaugeMode::Down => &[GaugeSign::Down],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Dots holding the initial singlet.
    pub prepared_pair: DotPair,
    /// Exchange switched on during free evolution.
    pub pulsed_pair: DotPair,
    /// Exchange strength, units of σ_hf.
    pub j: f64,
    pub times: TimeGrid,
    #[serde(default)]
    pub gauge: GaugeMode,
}

impl ExperimentSpec {
    /// Singlet on dots 1-2, `J_n` pulsed on dots 2-3.
    pub fn standard(j: f64, times: TimeGrid) -> Self {
        ExperimentSpec {
            prepared_pair: DotPair::P12,
            pulsed_pair: DotPair::P23,
            j,
            times,
            gauge: GaugeMode::Both,
        }
    }

    /// Singlet on dots 2-3 (via the (1,0,2) charge state), `J_z` pulsed.
    pub fn swapped(j: f64, times: TimeGrid) -> Self {
        ExperimentSpec {
            prepared_pair: DotPair::P23,
            pulsed_pair: DotPair::P12,
            ..Self::standard(j, times)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prepared_pair == self.pulsed_pair {
            return Err(Error::InvalidSpec(format!(
                "pulsed pair must differ from prepared pair (both {})",
                self.prepared_pair.label()
            )));
        }
        if !(self.j.is_finite() && self.j >= 0.0) {
            return Err(Error::InvalidSpec(format!("J must be finite and >= 0, got {}", self.j)));
        }
        Ok(())
    }

    fn exchange_strengths(&self) -> (f64, f64) {
        match self.pulsed_pair {
            DotPair::P12 => (self.j, 0.0),
            DotPair::P23 => (0.0, self.j),
        }
    }

    /// Hyperfine labels as seen from the standard experiment: the swapped
    /// experiment is the standard one with dots 1 and 3 relabeled.
    pub fn effective_sigmas(&self, sigmas: &DotSigmas) -> DotSigmas {
        match self.prepared_pair {
            DotPair::P12 => *sigmas,
            DotPair::P23 => sigmas.swapped(),
        }
    }
}

/// Which route produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc8,
    Mc3,
    Quadrature,
    InfJ,
    HighJ,
    LowJ,
    ZeroJ,
}

impl Method {
    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Method::Mc8 | Method::Mc3)
    }
}

/// A sampled `P₀(t)` trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub method: Method,
    /// Per-point standard error, Monte Carlo only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    /// Set when parameters fall outside an approximation's validity domain.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Representation {
    #[default]
    #[serde(rename = "8")]
    Full8,
    #[serde(rename = "3")]
    Reduced3,
}

fn hermiticity_defect(h: &DMatrix<Complex64>) -> f64 {
    (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `exp(-iHt)` by spectral decomposition of a Hermitian `H`.
pub fn propagate(h: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    if !h.is_square() {
        return Err(Error::Usage("propagator needs a square matrix".into()));
    }
    let defect = hermiticity_defect(h);
    if defect > 1e-10 {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let eig = SymmetricEigen::new(h.clone());
    let phases = DMatrix::from_diagonal(
        &eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * t)),
    );
    Ok(&eig.eigenvectors * phases * eig.eigenvectors.adjoint())
}

/// Eigen-decomposed return amplitude `Σₖ wₖ e^{-iEₖt}` for one initial state.
#[derive(Debug, Clone)]
struct ReturnAmplitude {
    energies: Vec<f64>,
    weights: Vec<f64>,
}

impl ReturnAmplitude {
    fn probability(&self, t: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (e, w) in self.energies.iter().zip(&self.weights) {
            let (s, c) = (e * t).sin_cos();
            re += w * c;
            im -= w * s;
        }
        re * re + im * im
    }
}

/// Overlap weights below this contribute nothing representable.
const NEGLIGIBLE_WEIGHT: f64 = 1e-300;

fn amplitude_from<I>(energies: I, overlaps: impl Iterator<Item = Complex64>) -> ReturnAmplitude
where
    I: Iterator<Item = f64>,
{
    let mut out = ReturnAmplitude {
        energies: Vec::with_capacity(8),
        weights: Vec::with_capacity(8),
    };
    for (e, c) in energies.zip(overlaps) {
        let w = c.norm_sqr();
        if w > NEGLIGIBLE_WEIGHT {
            out.energies.push(e);
            out.weights.push(w);
        }
    }
    out
}

/// Reduced Hamiltonian `g·H_hf + Jz·E₁₂ + Jn·E₂₃` for one gauge manifold.
pub fn hamiltonian_su3(fields: &FieldSample, jz: f64, jn: f64, gauge: GaugeSign) -> Mat3C {
    let (d, db) = deltas(fields, DotPair::P12);
    su3::hyperfine_su3(d, db, gauge)
        + su3::exchange12() * Complex64::new(jz, 0.0)
        + su3::exchange23() * Complex64::new(jn, 0.0)
}

/// Singlet on `pair` in (|0⟩, |1⟩, |Q⟩) coordinates, up to a global phase.
pub fn singlet_su3(pair: DotPair) -> Vector3<Complex64> {
    let e0 = Vector3::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    match pair {
        DotPair::P12 => e0,
        DotPair::P23 => su3::u2(FixedAngles::PHI) * e0,
    }
}

/// Per-gauge return amplitudes for one field sample.
fn amplitudes(
    spec: &ExperimentSpec,
    fields: &FieldSample,
    rep: Representation,
) -> Vec<ReturnAmplitude> {
    let (jz, jn) = spec.exchange_strengths();
    match rep {
        Representation::Reduced3 => spec
            .gauge
            .gauges()
            .iter()
            .map(|&g| {
                let h: Mat3C = hamiltonian_su3(fields, jz, jn, g);
                let eig = SymmetricEigen::new(h);
                let psi = singlet_su3(spec.prepared_pair);
                amplitude_from(
                    eig.eigenvalues.iter().copied(),
                    eig.eigenvectors.column_iter().map(|v| v.dotc(&psi)),
                )
            })
            .collect(),
        Representation::Full8 => {
            let h: Op8 = spin8::build_hamiltonian(fields, jz, jn);
            let eig = SymmetricEigen::new(h);
            spec.gauge
                .gauges()
                .iter()
                .map(|&g| {
                    let psi = spin8::singlet(spec.prepared_pair, g);
                    amplitude_from(
                        eig.eigenvalues.iter().copied(),
                        eig.eigenvectors.column_iter().map(|v| v.dotc(&psi)),
                    )
                })
                .collect()
        }
    }
}

fn gauge_average(amps: &[ReturnAmplitude], t: f64) -> f64 {
    amps.iter().map(|a| a.probability(t)).sum::<f64>() / amps.len() as f64
}

/// `|⟨ψ₀|e^{-iHt}|ψ₀⟩|²` for a single disorder realization, averaged over
/// the gauges selected by `spec.gauge`.
pub fn p0_single(
    spec: &ExperimentSpec,
    fields: &FieldSample,
    t: f64,
    rep: Representation,
) -> Result<f64> {
    spec.validate()?;
    Ok(gauge_average(&amplitudes(spec, fields, rep), t))
}

/// [`p0_single`] over the whole time grid of `spec`.
pub fn p0_single_curve(
    spec: &ExperimentSpec,
    fields: &FieldSample,
    rep: Representation,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let amps = amplitudes(spec, fields, rep);
    Ok(spec.times.as_slice().iter().map(|&t| gauge_average(&amps, t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub seed: u64,
    #[serde(default)]
    pub rep: Representation,
    /// Negate every field sample; pairs a ⇑ run with a ⇓ run sample by sample.
    #[serde(default)]
    pub mirror: bool,
}

impl McConfig {
    pub fn new(n_samples: u64, seed: u64) -> Self {
        McConfig {
            n_samples,
            seed,
            rep: Representation::Full8,
            mirror: false,
        }
    }
}

/// Running mean and sum of squared deviations per time point.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let d = x - *m;
            *m += d / self.count;
            *s += d * (x - *m);
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        if other.count == 0.0 {
            return self;
        }
        let n = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / n;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / n;
        }
        self.count = n;
        self
    }
}

/// Disorder-averaged `P₀(t)` by exact per-sample evolution.
///
/// Sample `i` uses fields drawn from stream `i` of `seed`. Chunks of
/// [`MC_CHUNK`] samples are reduced independently and merged in index order,
/// so the result is bit-identical for any thread count.
pub fn p0_mc(spec: &ExperimentSpec, sigmas: &DotSigmas, cfg: &McConfig) -> Result<Curve> {
    spec.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::Usage("Monte Carlo needs n_samples >= 1".into()));
    }
    let sampler = FieldSampler::new(*sigmas, cfg.seed);
    let times = spec.times.as_slice();
    let n_chunks = cfg.n_samples.div_ceil(MC_CHUNK);
    let partials: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::new(times.len());
            let mut row = vec![0.0; times.len()];
            let end = ((c + 1) * MC_CHUNK).min(cfg.n_samples);
            for i in c * MC_CHUNK..end {
                let mut fields = sampler.sample(i);
                if cfg.mirror {
                    fields = fields.negated();
                }
                let amps = amplitudes(spec, &fields, cfg.rep);
                for (r, &t) in row.iter_mut().zip(times) {
                    *r = gauge_average(&amps, t);
                }
                acc.push(&row);
            }
            acc
        })
        .collect();
    let total = partials
        .iter()
        .fold(Moments::new(times.len()), |acc, p| acc.merge(p));

    let n = total.count;
    let stderr = total
        .m2
        .iter()
        .map(|m2| if n > 1.0 { (m2 / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 })
        .collect();
    let method = match cfg.rep {
        Representation::Full8 => Method::Mc8,
        Representation::Reduced3 => Method::Mc3,
    };
    Ok(Curve {
        times: times.to_vec(),
        values: total.mean,
        method,
        stderr: Some(stderr),
        warnings: vec![],
        meta: serde_json::json!({
            "sigmas": sigmas,
            "j": spec.j,
            "prepared_pair": spec.prepared_pair,
            "pulsed_pair": spec.pulsed_pair,
            "gauge": spec.gauge,
            "n_samples": cfg.n_samples,
            "seed": cfg.seed,
            "mirror": cfg.mirror,
            "chunk": MC_CHUNK,
        }),
    })
}

/// Convenience: embed a 3×3 matrix for [`propagate`].
pub fn to_dynamic3(m: &Matrix3<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
}

/// Convenience: embed an 8×8 matrix for [`propagate`].
pub fn to_dynamic8(m: &Op8) -> DMatrix<Complex64> {
    DMatrix::from_fn(8, 8, |i, j| m[(i, j)])
}
