//! Constraint-derived losses and their analytic gradients with respect
//! to the trajectory: hardware (gradient/slew), peripheral nerve
//! stimulation, and image contrast, all built on the shared
//! soft-threshold penalty.

mod contrast;
mod hardware;
mod pns;

pub use contrast::{loss_contrast, ContrastSpec};
pub use hardware::{loss_hardware, HardwareLoss};
pub use pns::{loss_pns, pns_kernel, pns_response, PnsResponse};

use ndarray::Array3;

/// Soft-threshold penalty `phi_lambda(x) = max(|x| - lambda, 0)`.
#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    (x.abs() - lambda).max(0.0)
}

/// Subgradient of [`soft_threshold`] w.r.t. `x`: `sign(x)` where the
/// penalty is active, 0 elsewhere (including at the kink).
#[inline]
pub fn soft_threshold_subgrad(x: f64, lambda: f64) -> f64 {
    if x.abs() > lambda {
        x.signum()
    } else {
        0.0
    }
}

/// A scalar penalty value with its gradient w.r.t. the trajectory
/// samples (rad/sample), shape `[Nfe, Ns, Nd]`.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub value: f64,
    pub grad: Array3<f64>,
}
