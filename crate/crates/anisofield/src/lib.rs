//! Long-range-dependent linear random fields on `Z^2` with a general
//! (possibly oblique) dependence axis.
//!
//! The model is the moving average `X(t) = sum_s b(t-s) eps(s)` whose
//! coefficients decay like `1/rho(Bt)` for an anisotropic radial function
//! `rho(u) = |u1|^q1 + |u2|^q2` and a nondegenerate matrix `B`. The crate
//! provides:
//!
//! * exponent algebra and regime classification for the anisotropic
//!   scaling limits of rectangle partial sums ([`params`]),
//! * kernel evaluation and the polar (radial/angular) decomposition
//!   ([`kernel`]),
//! * autocovariance oracles and convolution asymptotics ([`convolution`]),
//! * FFT field synthesis and partial-sum processes ([`synth`]),
//! * deterministic covariance-level verification of the scaling limits,
//!   fractional-Brownian-sheet sampling and variance constants ([`limits`]),
//! * dependence-axis estimation from decay exponents ([`axis`]),
//! * a config-driven experiment runner ([`cli`]).

pub mod axis;
pub mod cli;
pub mod config;
pub mod convolution;
pub mod kernel;
pub mod limits;
pub mod params;
pub mod quad;
pub mod report;
pub mod synth;

mod error;
mod fft2;
pub mod moments;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
