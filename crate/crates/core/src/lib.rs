//! Hyperfine-averaged singlet-return probability `P₀(t)` for exchange-pulsed
//! triple quantum dots, computed three independent ways:
//!
//! * [`dynamics::p0_mc`] averages exact propagation over sampled Overhauser
//!   fields, in the full 8-dimensional spin space or the 3-dimensional
//!   gauge block;
//! * [`analytic::p0_exact`] reduces the average to two one-dimensional
//!   Gaussian integrals evaluated by quadrature;
//! * the closed forms in [`analytic`] cover the infinite, high, low and zero
//!   exchange regimes.
//!
//! [`fitting`] turns measured traces back into per-dot field variances.
//!
//! Energies are in units of the mean hyperfine deviation `σ_hf` and times in
//! `1/σ_hf` throughout.

// `!(x > 0.0)` is how the validators reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod hyperfine;
pub mod lm;
pub mod quadrature;
pub mod special;
pub mod spin8;
pub mod su3;

pub use analytic::{p0_exact, p0_high_j, p0_inf_j, p0_low_j, p0_zero_j};
pub use dynamics::{p0_mc, Curve, ExperimentSpec, GaugeMode, McConfig, Method, Representation, TimeGrid};
pub use error::{Error, Result};
pub use fitting::{fit_dephasing, fit_rabi, solve_sigmas, FitResult, Measurement, SigmaKind, SigmaSolution, Trace};
pub use hyperfine::{DotPair, DotSigmas, FieldSample};
pub use quadrature::QuadratureSpec;
pub use su3::GaugeSign;
