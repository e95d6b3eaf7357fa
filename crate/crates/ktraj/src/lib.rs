//! Gradient-based k-space trajectory optimization for non-Cartesian MRI.
//!
//! The toolkit treats the sampling trajectory as a differentiable variable:
//! a non-uniform Fourier system model with analytic Jacobians w.r.t. the
//! sample locations lets losses for image quality, gradient/slew limits,
//! peripheral nerve stimulation and image contrast be minimized by
//! stochastic gradient (Langevin) descent over either freeform B-spline
//! coefficients or trajectory attributes such as rotation angles.
//!
//! Entry points:
//! - [`core`]: trajectory/image types, physical unit conversions,
//!   gradient and slew waveforms.
//! - [`nufft`]: gridding NUFFT (forward/adjoint), Toeplitz normal
//!   operator, exact-DFT reference, sample-location Jacobians.
//! - [`penalties`]: hardware, PNS and contrast losses with analytic
//!   gradients.
//! - [`recon`]: unrolled CG-SENSE / PLS reconstruction with full
//!   backpropagation to the trajectory, plus PSF/density analysis.
//! - [`param`]: B-spline and rotation-angle parameterizations and
//!   standard trajectory generators.
//! - [`optimize`]: loss aggregation, SGLD, multi-level driver.
//! - [`cli`]: configuration, file formats, phantom generation, and the
//!   subcommand implementations behind the `ktraj` binary.

pub mod core;
pub mod nufft;
pub mod penalties;
pub mod recon;
pub mod param;
pub mod optimize;
pub mod cli;

mod error;

pub use error::{Error, Result};
