//! Inertial fixed-point solvers with explicit learned regularization for
//! imaging inverse problems.
//!
//! The crate provides:
//!
//! - forward models (masked Fourier sampling, inpainting, Rician denoising)
//!   with gradients, closed-form proximal maps, and measurement simulation;
//! - an explicit learned prior `g(x) = 1/2 |x - N(x)|^2` over a small smooth
//!   convolutional network, with exact first- and second-order reverse-mode
//!   derivatives;
//! - fixed-point engines: explicit-gradient and proximal-gradient loops,
//!   their inertial variants with adaptive restart and trajectory averaging,
//!   a backtracking baseline, and one-step unrolled updates;
//! - Jacobian-free training of all solver parameters with Adam, early
//!   stopping, and checkpointing;
//! - an experiment harness: synthetic data generation, benchmarking, and
//!   log-log convergence-rate fitting.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `ideq` binary for the command-line interface.

pub mod bessel;
pub mod conv;
pub mod error;
pub mod fft;
pub mod fidelity;
pub mod grid;
pub mod harness;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod net;
pub mod regularizer;
pub mod rng;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, GridImage};
pub use rng::SeededRng;
