//! Operator algebra inside a single gauge manifold.
//!
//! The ordered basis is (|0⟩, |1⟩, |Q⟩): the exchange singlet on dots 1-2,
//! its orthogonal DFS partner, and the fully symmetric leaked state. The
//! Gell-Mann matrices follow the usual particle-physics convention in that
//! order, so `λ₁, λ₂, λ₃` span the logical qubit and `λ₈` weighs `|Q⟩`.
//!
//! Energies are in units of σ_hf. Exchange operators here differ from the
//! three-spin `Sⱼ·Sₖ` by `-I/12`, which only shifts the global phase.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Mat3C = Matrix3<Complex64>;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Which `m_z = ±1/2` manifold a state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeSign {
    Up,
    Down,
}

impl GaugeSign {
    pub fn sign(self) -> f64 {
        match self {
            GaugeSign::Up => 1.0,
            GaugeSign::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            GaugeSign::Up => GaugeSign::Down,
            GaugeSign::Down => GaugeSign::Up,
        }
    }
}

/// The two angles that never change: the rotation axis of `E₂₃` and the
/// `λ₇` mixing that exposes the double-dot structure of the hyperfine term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedAngles {
    pub phi: f64,
    pub beta: f64,
}

impl FixedAngles {
    pub const PHI: f64 = 2.0 * PI / 3.0;

    pub fn get() -> Self {
        FixedAngles {
            phi: Self::PHI,
            beta: PI - 8f64.sqrt().atan(),
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `j`-th Gell-Mann matrix, `1 ≤ j ≤ 8`.
pub fn gell_mann(j: usize) -> Result<Mat3C> {
    let z = real(0.0);
    let one = real(1.0);
    let i = c(0.0, 1.0);
    let m = match j {
        1 => Mat3C::new(z, one, z, one, z, z, z, z, z),
        2 => Mat3C::new(z, -i, z, i, z, z, z, z, z),
        3 => Mat3C::new(one, z, z, z, -one, z, z, z, z),
        4 => Mat3C::new(z, z, one, z, z, z, one, z, z),
        5 => Mat3C::new(z, z, -i, z, z, z, i, z, z),
        6 => Mat3C::new(z, z, z, z, z, one, z, one, z),
        7 => Mat3C::new(z, z, z, z, z, -i, z, i, z),
        8 => {
            let a = real(1.0 / SQRT3);
            Mat3C::new(a, z, z, z, a, z, z, z, real(-2.0 / SQRT3))
        }
        _ => {
            return Err(Error::Usage(format!(
                "Gell-Mann index must be in 1..=8, got {j}"
            )))
        }
    };
    Ok(m)
}

fn lambda(j: usize) -> Mat3C {
    gell_mann(j).expect("index in range")
}

/// `E₁₂ = -λ₈/(2√3) - λ₃/2 = diag(-2/3, 1/3, 1/3)`.
pub fn exchange12() -> Mat3C {
    lambda(8) * real(-1.0 / (2.0 * SQRT3)) - lambda(3) * real(0.5)
}

/// `E₂₃ = -λ₈/(2√3) - (λ₃ cos φ + λ₁ sin φ)/2`.
pub fn exchange23() -> Mat3C {
    let phi = FixedAngles::PHI;
    lambda(8) * real(-1.0 / (2.0 * SQRT3))
        - (lambda(3) * real(phi.cos()) + lambda(1) * real(phi.sin())) * real(0.5)
}

/// `exp(-i·angle·λ₂/2)`: a real rotation by `angle/2` in the (|0⟩,|1⟩) plane.
pub fn u2(angle: f64) -> Mat3C {
    let (s, co) = (angle / 2.0).sin_cos();
    let z = real(0.0);
    Mat3C::new(real(co), real(-s), z, real(s), real(co), z, z, z, real(1.0))
}

/// `exp(-i·angle·λ₇/2)`: a real rotation by `angle/2` in the (|1⟩,|Q⟩) plane.
pub fn u7(angle: f64) -> Mat3C {
    let (s, co) = (angle / 2.0).sin_cos();
    let z = real(0.0);
    Mat3C::new(real(1.0), z, z, z, real(co), real(-s), z, real(s), real(co))
}

/// Angle `η` such that `U₂(η)` diagonalizes `Jz·E₁₂ + Jn·E₂₃`.
pub fn exchange_mix_angle(jz: f64, jn: f64) -> Result<f64> {
    if jz == 0.0 && jn == 0.0 {
        return Err(Error::Degenerate(
            "exchange mixing angle undefined for Jz = Jn = 0".into(),
        ));
    }
    let phi = FixedAngles::PHI;
    Ok((jn * phi.sin()).atan2(jn * phi.cos() + jz))
}

/// Hyperfine Hamiltonian of one gauge manifold,
/// `±U₇(β)[(Δ/2)λ₁ + (Δ̄/√3)λ₈]U₇†(β)`, with `Δ = B₁-B₂`, `Δ̄ = B₃-(B₁+B₂)/2`.
pub fn hyperfine_su3(delta: f64, delta_bar: f64, gauge: GaugeSign) -> Mat3C {
    let u = u7(FixedAngles::get().beta);
    let inner = lambda(1) * real(delta / 2.0) + lambda(8) * real(delta_bar / SQRT3);
    (u * inner * u.adjoint()) * real(gauge.sign())
}

/// Result of [`diagonalize_pulsed`].
#[derive(Debug, Clone, PartialEq)]
pub struct PulsedEigensystem {
    /// Columns are the eigenvectors, in the order of `energies`.
    pub unitary: Mat3C,
    pub energies: [f64; 3],
    pub theta: f64,
}

/// Closed-form eigensystem of `H_hf(⇑) + Jn·E₂₃`, where `delta` and
/// `delta_bar` are the dot-2/3 differences `Δ₂₃ = B₂-B₃`,
/// `Δ̄₂₃ = B₁-(B₂+B₃)/2`.
///
/// `U₂(φ)` relabels the dots cyclically only up to a sign on `|Q⟩`
/// couplings, so the middle rotation is `U₇(-β)` rather than `U₇(β)`.
pub fn diagonalize_pulsed(jn: f64, delta: f64, delta_bar: f64) -> Result<PulsedEigensystem> {
    if !(jn >= 0.0) {
        return Err(Error::Usage(format!("Jn must be >= 0, got {jn}")));
    }
    let angles = FixedAngles::get();
    // atan2(-0, 0) = -0; Jn = 0 with Δ ≠ 0 lands on -sign(Δ)·π/2.
    let theta = if jn == 0.0 && delta == 0.0 {
        0.0
    } else {
        (-delta).atan2(jn)
    };
    let unitary = u2(angles.phi) * u7(-angles.beta) * u2(theta);
    let r = jn.hypot(delta) / 2.0;
    let k = (jn - 2.0 * delta_bar) / (2.0 * SQRT3);
    // -r·diag(λ₃) - k·diag(λ₈)
    let energies = [-r - k / SQRT3, r - k / SQRT3, 2.0 * k / SQRT3];
    Ok(PulsedEigensystem {
        unitary,
        energies,
        theta,
    })
}

/// Largest entry modulus; a cheap matrix distance for checks.
pub fn max_abs(m: &Mat3C) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
