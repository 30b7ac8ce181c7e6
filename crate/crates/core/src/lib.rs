//! Numerical core for pricing corporate debt and equity when the firm value
//! follows a nonlinear stochastic delay differential equation.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It provides:
//!
//! * [`market_data`]: validated firm series, the memory path on `[-L, 0]`,
//!   volatility models and piecewise-constant coefficient curves;
//! * [`sdde`]: the θ-semi-implicit Euler–Maruyama scheme for the delayed
//!   firm-value equation and for the Merton baseline;
//! * [`monte_carlo`]: path ensembles and pointwise statistics;
//! * [`pde`]: cell-centred finite-volume discretisation of the claim PDE;
//! * [`expint`]: φ-functions, Krylov matrix-function actions and exponential
//!   time differencing steppers;
//! * [`pricing`]: surface solvers for equity and debt plus closed-form oracles.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod expint;
pub mod market_data;
pub mod monte_carlo;
pub mod pde;
pub mod pricing;
pub mod sdde;
pub mod special;

pub use error::{Error, Result};
