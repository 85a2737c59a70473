//! Measurement-consistent reconstruction for linear inverse problems.
//!
//! Given a forward operator `A`, noisy measurements `y` with known noise
//! level `delta`, the central object is the valid set
//!
//! ```text
//! V = { x : ||A x - y|| <= delta }
//! ```
//!
//! i.e. every reconstruction that explains the data up to the noise level.
//! The crate provides the Euclidean projection onto `V` (a matrix-free
//! Newton-free scheme: conjugate gradients inside a monotone root find on
//! the Lagrange multiplier), its implicit-function-theorem vector-Jacobian
//! product for end-to-end training, and solvers built on top of it:
//!
//! - [`solvers::pm_solve`]: alternate a denoiser with the projection, so the
//!   final iterate is feasible by construction.
//! - [`solvers::red_solve`]: regularization-by-denoising fixed-point
//!   iteration with a fixed trade-off weight.
//! - [`dip`]: deep-image-prior least squares, plus the variant that drives
//!   the residual to the noise level instead of zero.
//! - [`vnpa`]: a chain of small autoencoders interleaved with projections,
//!   trained end-to-end through the projection VJP.
//!
//! Supporting modules: [`operator`] (dense/sparse/Radon/Gaussian sensing
//! operators with exact adjoints), [`cg`] (conjugate gradients on
//! `I + mu A^T A` without materializing it), [`denoise`] (orthonormal Haar
//! with BayesShrink thresholds), [`tikhonov`] (L2 regularization with
//! Morozov-principle weight selection), [`data`] (phantoms, random test
//! signals, exact-norm noise), [`metrics`] (PSNR/SSIM), [`trace`] (per
//! iteration CSV records), and [`io`] (portable binary vector files,
//! PGM images, model checkpoints).

pub mod cg;
pub mod data;
pub mod denoise;
pub mod dip;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod operator;
pub mod projection;
pub mod solvers;
pub mod tikhonov;
pub mod trace;
pub mod vector;
pub mod vnpa;

pub use error::{Error, Result};
pub use vector::Vector;
