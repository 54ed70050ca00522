//! Multiscale dispersion laboratory for nonlocal channel transport.
//!
//! A particle in the channel `-1 < y < 1` makes rightward jumps in `x` with
//! exponentially distributed length of mean `v(y)`, and at unit rate is
//! remixed uniformly across the channel. This crate derives the macroscale
//! advection-diffusion coefficients of that process exactly and numerically,
//! simulates the microscale density deterministically and stochastically,
//! and measures the macroscale model's error as a computable residual field.
//!
//! Main entry points:
//! - [`manifold::derive`] / [`manifold::zero_eigenspace`]: the two coefficient
//!   derivation paths (recursive hierarchy and block-operator eigenspace).
//! - [`micro::Simulator`]: deterministic solver of the nonlocal microscale
//!   evolution equation.
//! - [`mc::simulate`]: jump-process Monte Carlo oracle.
//! - [`macroscale`]: spectral and finite-difference advection-diffusion solvers.
//! - [`diagnostics`]: defect residual, emergence rate, quasistationary shape.
//! - [`config`] + [`pipeline`]: the reproducible CLI surface.

// `!(x > 0.0)`-style guards are deliberate: unlike `x <= 0.0`, they also
// reject NaN. Indexed loops are kept where they mirror the stencil algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fourier;
pub mod kernel;
pub mod macroscale;
pub mod manifold;
pub mod mc;
pub mod micro;
pub mod pipeline;
pub mod poly;
pub mod profile;
pub mod rational;

pub use error::{Error, Result};
pub use kernel::{JumpKernel, MomentOperator};
pub use manifold::SlowManifold;
pub use micro::{MicroField, MicroGrid, Simulator};
pub use poly::YPolynomial;
pub use profile::{CrossField, CrossSection, VelocityProfile};
