//! Gaussian-weighted expectations `E[f(x)] = (2π)^{-1/2} ∫ f(x) e^{-x²/2} dx`.
//!
//! The primary rule is Gauss–Hermite with a node-doubling error estimate.
//! When that estimate misses the tolerance (strongly oscillatory or kinked
//! integrands) the integral is redone with adaptive Gauss–Kronrod on
//! `[-T, 0] ∪ [0, T]`, `T = truncation`.

use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "QuadratureSpec::default_nodes")]
    pub node_count: usize,
    #[serde(default = "QuadratureSpec::default_truncation")]
    pub truncation: f64,
    #[serde(default = "QuadratureSpec::default_tol")]
    pub target_abs_tol: f64,
}

impl QuadratureSpec {
    fn default_nodes() -> usize {
        200
    }
    fn default_truncation() -> f64 {
        8.0
    }
    fn default_tol() -> f64 {
        1e-8
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 32 {
            return Err(Error::Usage(format!(
                "quadrature node_count must be >= 32, got {}",
                self.node_count
            )));
        }
        if !(self.truncation >= 6.0) {
            return Err(Error::Usage(format!(
                "quadrature truncation must be >= 6, got {}",
                self.truncation
            )));
        }
        if !(self.target_abs_tol > 0.0) {
            return Err(Error::Usage("quadrature tolerance must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            node_count: Self::default_nodes(),
            truncation: Self::default_truncation(),
            target_abs_tol: Self::default_tol(),
        }
    }
}

/// Gauss–Hermite rule for the weight `e^{-z²}`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Golub–Welsch eigenvalues of the Jacobi matrix seed a Newton polish on
    /// the orthonormal Hermite recurrence; the weights come from the
    /// polished derivative, which keeps the tiny outer weights accurate.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Hermite rule needs at least one node");
        let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));

        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = if 2 * i + 1 == n { 0.0 } else { guesses[i] };
            let mut pp = 0.0;
            for _ in 0..20 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let step = p1 / pp;
                // Far-out nodes of large rules overflow the recurrence;
                // their weights are below underflow anyway.
                if !step.is_finite() {
                    break;
                }
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = if pp.is_finite() { 2.0 / (pp * pp) } else { 0.0 };
            weights[n - 1 - i] = weights[i];
        }
        HermiteRule { nodes, weights }
    }

    /// Cached rule of order `n`.
    pub fn cached(n: usize) -> Arc<HermiteRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("hermite cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(HermiteRule::new(n)))
            .clone()
    }

    /// `E[f]` under the standard normal.
    pub fn expectation<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        let scale = 1.0 / PI.sqrt();
        let mut acc = Complex64::new(0.0, 0.0);
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            if *w == 0.0 {
                continue;
            }
            acc += f(std::f64::consts::SQRT_2 * z) * *w;
        }
        acc * scale
    }
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let k = kronrod * half;
    let g = gauss * half;
    (k, (k - g).norm())
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_PIECES: usize = 4000;

/// Globally adaptive Gauss–Kronrod over the given breakpoints.
pub fn adaptive_gk<F: Fn(f64) -> Complex64>(
    f: F,
    breakpoints: &[f64],
    tol: f64,
) -> Result<Complex64> {
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        heap.push(Piece { a: w[0], b: w[1], value, error });
    }
    let mut evaluations = 15 * heap.len();
    loop {
        let total_err: f64 = heap.iter().map(|p| p.error).sum();
        if total_err <= tol {
            return Ok(heap.iter().map(|p| p.value).sum());
        }
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature {
                estimate: total_err,
                tolerance: tol,
                evaluations,
                context: format!("adaptive Gauss-Kronrod hit {MAX_PIECES} subintervals"),
            });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&f, a, b);
            heap.push(Piece { a, b, value, error });
        }
        evaluations += 30;
    }
}

/// Standard-normal expectation of `f`, accurate to `q.target_abs_tol`.
pub fn gaussian_expectation<F: Fn(f64) -> Complex64>(f: F, q: &QuadratureSpec) -> Result<Complex64> {
    q.validate()?;
    let coarse = HermiteRule::cached(q.node_count).expectation(&f);
    let fine = HermiteRule::cached(2 * q.node_count).expectation(&f);
    if (fine - coarse).norm() <= q.target_abs_tol {
        return Ok(fine);
    }
    let t = q.truncation;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let weighted = |x: f64| f(x) * ((-0.5 * x * x).exp() * norm);
    adaptive_gk(weighted, &[-t, 0.0, t], q.target_abs_tol * 0.1)
}
