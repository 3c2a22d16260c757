//! Quantile-function learning on a dense statevector simulator.
//!
//! The crate provides the pieces needed to represent a quantile function as a
//! variational quantum circuit and train it against data and differential
//! constraints of an underlying stochastic process:
//!
//! - [`statevector`]: dense N-qubit state with exact gate kernels and
//!   expectation values,
//! - [`circuits`]: feature maps, hardware-efficient ansatz and the
//!   identity-initialized sandwich layout, expressed as gate programs with
//!   symbolic parameter slots,
//! - [`autodiff`]: first and second order parameter-shift derivatives with
//!   evaluation counting and caching,
//! - [`quantile_model`]: the trainable generator `G(z, t)` with cost readout
//!   and pinned/floating boundary handling,
//! - [`training`]: data + SDE loss assembly and Adam descent,
//! - [`sde_oracle`]: classical ground truth (Euler-Maruyama, analytic
//!   Ornstein-Uhlenbeck density/quantile, histograms, KS statistics),
//! - [`qgan`]: continuous quantum GAN training and quantile-reordering
//!   analysis.
//!
//! Batch evaluation is data-parallel via rayon when the `parallel` feature
//! (default) is enabled; all reductions run in a fixed index order so results
//! are bit-identical regardless of thread count.

pub mod autodiff;
pub mod circuits;
pub mod error;
pub mod exec;
pub mod qgan;
pub mod quantile_model;
pub mod sde_oracle;
pub mod statevector;
pub mod training;

pub use error::{Error, Result};
