//! Full three-spin representation, used as the ground truth for the reduced
//! SU(3) algebra.
//!
//! Product basis `|s₁s₂s₃⟩` with `s₁` most significant and `↑ = 0`, so index
//! `4·s₁ + 2·s₂ + s₃`; e.g. `|↑↓↑⟩` is index 2 and `|↓↓↓⟩` is index 7.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperfine::{DotPair, FieldSample};
use crate::su3::{GaugeSign, Mat3C};

pub type Op8 = SMatrix<Complex64, 8, 8>;
pub type Ket8 = SVector<Complex64, 8>;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Logical {
    Zero,
    One,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisLabel {
    Manifold { logical: Logical, gauge: GaugeSign },
    /// `|↑↑↑⟩`, `m_z = +3/2`
    PolarizedUp,
    /// `|↓↓↓⟩`, `m_z = -3/2`
    PolarizedDown,
}

impl BasisLabel {
    pub fn all() -> [BasisLabel; 8] {
        use GaugeSign::*;
        use Logical::*;
        let m = |logical, gauge| BasisLabel::Manifold { logical, gauge };
        [
            BasisLabel::PolarizedUp,
            m(Zero, Up),
            m(One, Up),
            m(Q, Up),
            m(Zero, Down),
            m(One, Down),
            m(Q, Down),
            BasisLabel::PolarizedDown,
        ]
    }
}

fn bit(index: usize, dot: usize) -> usize {
    (index >> (2 - dot)) & 1
}

fn product_index(spins: [usize; 3]) -> usize {
    4 * spins[0] + 2 * spins[1] + spins[2]
}

fn check_dot(j: usize) -> Result<usize> {
    if (1..=3).contains(&j) {
        Ok(j - 1)
    } else {
        Err(Error::Usage(format!("dot index must be in 1..=3, got {j}")))
    }
}

/// `Sⱼᶻ` for dot `j ∈ 1..=3`.
pub fn spin_z(j: usize) -> Result<Op8> {
    let d = check_dot(j)?;
    let mut op = Op8::zeros();
    for i in 0..8 {
        op[(i, i)] = Complex64::new(if bit(i, d) == 0 { 0.5 } else { -0.5 }, 0.0);
    }
    Ok(op)
}

pub fn total_spin_z() -> Op8 {
    (1..=3).map(|j| spin_z(j).unwrap()).sum()
}

/// `Sⱼ·Sₖ = SᶻSᶻ + (S⁺S⁻ + S⁻S⁺)/2`.
pub fn exchange8(j: usize, k: usize) -> Result<Op8> {
    let (a, b) = (check_dot(j)?, check_dot(k)?);
    if a == b {
        return Err(Error::Usage(format!("exchange needs two distinct dots, got ({j},{k})")));
    }
    let mut op = Op8::zeros();
    for i in 0..8 {
        let (sa, sb) = (bit(i, a), bit(i, b));
        op[(i, i)] += Complex64::new(if sa == sb { 0.25 } else { -0.25 }, 0.0);
        if sa != sb {
            let flipped = i ^ (1 << (2 - a)) ^ (1 << (2 - b));
            op[(flipped, i)] += Complex64::new(0.5, 0.0);
        }
    }
    Ok(op)
}

fn flip_all(k: &Ket8) -> Ket8 {
    Ket8::from_fn(|i, _| k[7 - i])
}

/// The named basis state; `⇓` states are global spin flips of their `⇑`
/// partners.
pub fn basis_state(label: BasisLabel) -> Ket8 {
    let mut k = Ket8::zeros();
    match label {
        BasisLabel::PolarizedUp => k[0] = Complex64::new(1.0, 0.0),
        BasisLabel::PolarizedDown => k[7] = Complex64::new(1.0, 0.0),
        BasisLabel::Manifold { logical, gauge } => {
            let udu = product_index([0, 1, 0]);
            let duu = product_index([1, 0, 0]);
            let uud = product_index([0, 0, 1]);
            let amps: [(usize, f64); 3] = match logical {
                Logical::Zero => [(udu, FRAC_1_SQRT_2), (duu, -FRAC_1_SQRT_2), (uud, 0.0)],
                Logical::One => {
                    let a = 1.0 / 6f64.sqrt();
                    [(udu, a), (duu, a), (uud, -(2.0f64 / 3.0).sqrt())]
                }
                Logical::Q => {
                    let a = 1.0 / 3f64.sqrt();
                    [(udu, a), (duu, a), (uud, a)]
                }
            };
            for (i, a) in amps {
                k[i] = Complex64::new(a, 0.0);
            }
            if gauge == GaugeSign::Down {
                k = flip_all(&k);
            }
        }
    }
    k
}

/// Singlet on `pair`, with the remaining spin fixing the gauge.
pub fn singlet(pair: DotPair, gauge: GaugeSign) -> Ket8 {
    let (j, k, l) = pair.indices();
    let outside = if gauge == GaugeSign::Up { 0 } else { 1 };
    let mut ket = Ket8::zeros();
    for (sj, sk, amp) in [(0, 1, FRAC_1_SQRT_2), (1, 0, -FRAC_1_SQRT_2)] {
        let mut spins = [0; 3];
        spins[j] = sj;
        spins[k] = sk;
        spins[l] = outside;
        ket[product_index(spins)] = Complex64::new(amp, 0.0);
    }
    ket
}

/// `Σ Bⱼ Sⱼᶻ + Jz·S₁·S₂ + Jn·S₂·S₃`.
pub fn build_hamiltonian(fields: &FieldSample, jz: f64, jn: f64) -> Op8 {
    let b = fields.as_array();
    let mut h = Op8::zeros();
    for (j, bj) in b.into_iter().enumerate() {
        h += spin_z(j + 1).unwrap() * Complex64::new(bj, 0.0);
    }
    h += exchange8(1, 2).unwrap() * Complex64::new(jz, 0.0);
    h += exchange8(2, 3).unwrap() * Complex64::new(jn, 0.0);
    h
}

fn max_abs8(m: &Op8) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Restrict `h` to the (|0 g⟩, |1 g⟩, |Q g⟩) block and split it into a
/// traceless part plus `shift·I`.
pub fn project_su3(h: &Op8, gauge: GaugeSign) -> Result<(Mat3C, f64)> {
    let sz = total_spin_z();
    let leak = max_abs8(&(h * sz - sz * h));
    if leak > 1e-10 {
        return Err(Error::Contract(format!(
            "operator does not conserve total S_z (max |[H, S_z]| = {leak:e})"
        )));
    }
    let basis = [Logical::Zero, Logical::One, Logical::Q]
        .map(|logical| basis_state(BasisLabel::Manifold { logical, gauge }));
    let block = Mat3C::from_fn(|a, b| basis[a].dotc(&(h * basis[b])));
    let shift = block.trace().re / 3.0;
    let traceless = block - Mat3C::identity() * Complex64::new(shift, 0.0);
    Ok((traceless, shift))
}

/// Magnetic quantum number `m_z` of product-basis index `i`.
pub fn m_z(i: usize) -> f64 {
    (0..3).map(|d| if bit(i, d) == 0 { 0.5 } else { -0.5 }).sum()
}
