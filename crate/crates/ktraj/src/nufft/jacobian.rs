//! Analytic Jacobians of the NUFFT with respect to the sample
//! locations: `d(Ax)[m]/d omega_d[m] = -i [A(x .* r_d)][m]`, so the
//! Jacobian product is just another NUFFT of a coordinate-weighted
//! image. The adjoint stage `z = A'y` has the companion form
//! `dL/d omega_d[m] = Re( i conj([A(zbar .* r_d)][m]) y[m] )`.

use ndarray::{Array2, ArrayD};
use num_complex::Complex64;

use super::dft::centered_coord;
use super::plan::NufftPlan;
use crate::Result;

/// Multiplies an image elementwise by its centered grid coordinate
/// along dimension `d` (units: samples, matching omega in rad/sample).
pub fn coord_weighted(x: &ArrayD<Complex64>, d: usize) -> ArrayD<Complex64> {
    let len = x.shape()[d];
    let mut out = x.clone();
    for (idx, v) in out.indexed_iter_mut() {
        *v *= centered_coord(idx[d], len);
    }
    out
}

/// Real gradient contribution of one forward NUFFT stage: given the
/// upstream sensitivity `v = dL/d(Ax)` (conjugate-gradient convention:
/// `dL = Re<v, d(Ax)>`), returns `dL/d omega_d[m]` per sample.
pub fn jacobian_forward_apply(
    plan: &NufftPlan,
    x: &ArrayD<Complex64>,
    d: usize,
    v: &[Complex64],
) -> Result<Vec<f64>> {
    if d >= plan.n_dims() {
        return Err(crate::Error::IndexOutOfRange(format!(
            "dimension {d} out of range for {}-d plan",
            plan.n_dims()
        )));
    }
    if v.len() != plan.n_samples() {
        return Err(crate::Error::ShapeMismatch(format!(
            "sensitivity length {} vs plan {}",
            v.len(),
            plan.n_samples()
        )));
    }
    let axr = plan.forward(&coord_weighted(x, d))?;
    Ok(v.iter()
        .zip(axr.iter())
        .map(|(vm, am)| (vm.conj() * Complex64::new(0.0, -1.0) * am).re)
        .collect())
}

/// Accumulates `dL/d omega` for a forward stage `y = A x` with upstream
/// sensitivity `v`, for all dimensions, into `grad_omega` (`[M, Nd]`).
pub fn accum_forward_stage(
    plan: &NufftPlan,
    x: &ArrayD<Complex64>,
    v: &[Complex64],
    grad_omega: &mut Array2<f64>,
) -> Result<()> {
    for d in 0..plan.n_dims() {
        let g = jacobian_forward_apply(plan, x, d, v)?;
        for (m, gm) in g.into_iter().enumerate() {
            grad_omega[[m, d]] += gm;
        }
    }
    Ok(())
}

/// Accumulates `dL/d omega` for an adjoint stage `z = A' y` with
/// upstream sensitivity `zbar = dL/dz`, for all dimensions.
pub fn accum_adjoint_stage(
    plan: &NufftPlan,
    y: &[Complex64],
    zbar: &ArrayD<Complex64>,
    grad_omega: &mut Array2<f64>,
) -> Result<()> {
    for d in 0..plan.n_dims() {
        let azr = plan.forward(&coord_weighted(zbar, d))?;
        for (m, (am, ym)) in azr.iter().zip(y.iter()).enumerate() {
            grad_omega[[m, d]] += (Complex64::new(0.0, 1.0) * am.conj() * ym).re;
        }
    }
    Ok(())
}
