//! Pseudospectral Monte Carlo toolkit for a damped stochastic complex
//! Ginzburg-Landau equation on a truncated line.
//!
//! The flow studied is
//!
//! ```text
//!   du + (a u - nu u_xx + alpha |u|^q u) dt = h dt + dW
//! ```
//!
//! on `[-X, X)` with periodic wrap-around, driven by a Wiener process that
//! is diagonal in a real trigonometric basis. The crate provides:
//!
//! - spectral grid, fields, norms ([`grid`], [`field`]);
//! - the logarithmic spatial weight and its time envelope ([`weights`]);
//! - the forcing basis and low-mode projections ([`basis`]);
//! - counter-based Gaussian streams and Wiener increments ([`stream`],
//!   [`noise`]);
//! - exponential Euler steppers for the free, controlled and heat flows
//!   ([`dynamics`]);
//! - energy functionals, stopping rules and the measure-change ledger
//!   ([`functionals`]);
//! - coupled-pair experiments ([`coupling`]);
//! - ensemble estimators with auditable statistics ([`estimators`]);
//! - snapshot serialization ([`snapshot`]) and self-checks ([`validate`]).

pub mod basis;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod noise;
pub mod snapshot;
pub mod stats;
pub mod stream;
pub mod validate;
pub mod weights;

pub use error::{CglError, Result};
