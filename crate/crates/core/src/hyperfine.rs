//! Classical nuclear-field statistics.
//!
//! Each dot sees a static Gaussian field `Bⱼ ~ N(0, σⱼ²)` per shot. The
//! dynamics only ever see two combinations per adjacent pair `(j,k)` with
//! outside dot `l`: the in-pair difference `Δ_jk = B_j - B_k` and the
//! outside-dot offset `Δ̄_jk = B_l - (B_j + B_k)/2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dot hyperfine standard deviations in units of σ_hf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DotSigmas {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl DotSigmas {
    pub fn new(sigma1: f64, sigma2: f64, sigma3: f64) -> Result<Self> {
        for (i, s) in [sigma1, sigma2, sigma3].into_iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Usage(format!(
                    "sigma{} must be finite and >= 0, got {s}",
                    i + 1
                )));
            }
        }
        Ok(DotSigmas {
            sigma1,
            sigma2,
            sigma3,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sigma1, self.sigma2, self.sigma3]
    }

    /// Relabel dots 1 ↔ 3.
    pub fn swapped(&self) -> Self {
        DotSigmas {
            sigma1: self.sigma3,
            sigma2: self.sigma2,
            sigma3: self.sigma1,
        }
    }
}

/// One draw of the three static fields, units of σ_hf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl FieldSample {
    pub const ZERO: FieldSample = FieldSample {
        b1: 0.0,
        b2: 0.0,
        b3: 0.0,
    };

    pub fn new(b1: f64, b2: f64, b3: f64) -> Self {
        FieldSample { b1, b2, b3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }

    pub fn negated(&self) -> Self {
        FieldSample::new(-self.b1, -self.b2, -self.b3)
    }
}

/// An adjacent dot pair. Only these two are ever exchange-coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DotPair {
    #[serde(rename = "12")]
    P12,
    #[serde(rename = "23")]
    P23,
}

impl DotPair {
    /// Zero-based (j, k, outside) indices.
    pub fn indices(self) -> (usize, usize, usize) {
        match self {
            DotPair::P12 => (0, 1, 2),
            DotPair::P23 => (1, 2, 0),
        }
    }

    pub fn other(self) -> Self {
        match self {
            DotPair::P12 => DotPair::P23,
            DotPair::P23 => DotPair::P12,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DotPair::P12 => "12",
            DotPair::P23 => "23",
        }
    }
}

impl std::str::FromStr for DotPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_matches(|c| c == '(' || c == ')').replace(',', "").as_str() {
            "12" => Ok(DotPair::P12),
            "23" => Ok(DotPair::P23),
            other => Err(Error::Usage(format!(
                "dot pair must be 12 or 23, got {other:?}"
            ))),
        }
    }
}

/// Second moments of `(Δ_jk, Δ̄_jk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub sigma_pair: f64,
    pub sigma_bar: f64,
    pub cov: f64,
}

impl PairStats {
    /// Conditional variance of `Δ̄` given `Δ`, times `σ_pair²`. Never negative
    /// in exact arithmetic; rounding is clamped away.
    pub fn schur_numerator(&self) -> f64 {
        let v = self.sigma_pair.powi(2) * self.sigma_bar.powi(2) - self.cov.powi(2);
        v.max(0.0)
    }
}

/// Deterministic, index-addressable field sampler.
///
/// Sample `i` draws from its own ChaCha stream, so it depends only on
/// `(seed, i)` and can be generated in any order or in parallel.
#[derive(Debug, Clone, Copy)]
pub struct FieldSampler {
    sigmas: DotSigmas,
    seed: u64,
}

impl FieldSampler {
    pub fn new(sigmas: DotSigmas, seed: u64) -> Self {
        FieldSampler { sigmas, seed }
    }

    pub fn sample(&self, index: u64) -> FieldSample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut draw = |s: f64| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        };
        let b1 = draw(self.sigmas.sigma1);
        let b2 = draw(self.sigmas.sigma2);
        let b3 = draw(self.sigmas.sigma3);
        FieldSample { b1, b2, b3 }
    }
}

/// First sample of the stream for `seed`.
pub fn sample(sigmas: DotSigmas, seed: u64) -> FieldSample {
    FieldSampler::new(sigmas, seed).sample(0)
}

/// `(Δ, Δ̄)` for the given pair.
pub fn deltas(s: &FieldSample, pair: DotPair) -> (f64, f64) {
    let b = s.as_array();
    let (j, k, l) = pair.indices();
    (b[j] - b[k], b[l] - (b[j] + b[k]) / 2.0)
}

/// Closed-form second moments, derived from the definitions in [`deltas`]:
/// `σ_jk² = σⱼ²+σₖ²`, `σ̄_jk² = σₗ² + (σⱼ²+σₖ²)/4`, `C_jk = (σₖ²-σⱼ²)/2`.
pub fn pair_stats(sigmas: &DotSigmas, pair: DotPair) -> PairStats {
    let v = sigmas.as_array().map(|s| s * s);
    let (j, k, l) = pair.indices();
    PairStats {
        sigma_pair: (v[j] + v[k]).sqrt(),
        sigma_bar: (v[l] + (v[j] + v[k]) / 4.0).sqrt(),
        cov: (v[k] - v[j]) / 2.0,
    }
}
