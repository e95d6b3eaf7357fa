//! Unrolled iterative reconstruction and the reconstruction-quality
//! training loss, differentiable with respect to the sample locations
//! and the regularization weight.

mod cg;

pub use cg::{recon_backprop, recon_unrolled, reg_apply, CgTape, ReconGrad, ReconOutput};

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use num_complex::Complex64;
use rand::Rng;

use crate::core::Trajectory;
use crate::nufft::{accum_forward_stage, NufftPlan, SystemModel};
use crate::{Error, Result};

/// Which regularized least-squares problem the reconstruction solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    /// Tikhonov on the image itself: `(A'A + lambda I) x = A'y`.
    CgSense,
    /// Penalized least squares with a roughness operator:
    /// `(A'A + lambda T'T) x = A'y`.
    Pls,
}

/// Roughness operator for the PLS method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoughnessOp {
    Identity,
    /// Periodic first differences along every axis; `T'T` is the
    /// discrete Laplacian.
    FiniteDiff,
}

#[derive(Debug, Clone, Copy)]
pub struct ReconConfig {
    pub method: ReconMethod,
    pub lambda: f64,
    pub n_iter: usize,
    /// Only consulted when `method == Pls`.
    pub pls_roughness: RoughnessOp,
    /// Replace composed `A'A` applications by the Toeplitz-embedded
    /// normal operator (two FFTs, no gridding).
    pub use_toeplitz: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            method: ReconMethod::CgSense,
            lambda: 1e-3,
            n_iter: 30,
            pls_roughness: RoughnessOp::FiniteDiff,
            use_toeplitz: false,
        }
    }
}

impl ReconConfig {
    /// Cheaper settings for the inner loop of trajectory optimization.
    pub fn train(mut self) -> Self {
        self.n_iter = 6;
        self
    }
}

/// Trainable reconstruction parameters. The regularization weight is
/// optimized in log space so it stays positive.
#[derive(Debug, Clone, Copy)]
pub struct ReconParams {
    pub log_lambda: f64,
}

impl ReconParams {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter("lambda must be > 0".into()));
        }
        Ok(Self { log_lambda: lambda.ln() })
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }
}

/// Value and gradients of the reconstruction loss.
#[derive(Debug, Clone)]
pub struct ReconLossEval {
    pub value: f64,
    /// `dL/d omega` on the trajectory layout `[Nfe, Ns, Nd]`.
    pub grad_traj: Array3<f64>,
    pub grad_log_lambda: f64,
}

/// Scatters a flat `[M, Nd]` sample-location gradient back onto the
/// `[Nfe, Ns, Nd]` trajectory layout (shot-major flattening).
pub fn unflatten_grad(traj: &Trajectory, grad_omega: &Array2<f64>) -> Result<Array3<f64>> {
    let (nfe, ns, nd) = (traj.n_readout(), traj.n_shots(), traj.n_dims());
    if grad_omega.shape() != [nfe * ns, nd] {
        return Err(Error::ShapeMismatch(format!(
            "grad shape {:?} vs [{} * {}, {}]",
            grad_omega.shape(),
            ns,
            nfe,
            nd
        )));
    }
    let mut out = Array3::zeros((nfe, ns, nd));
    for i in 0..ns {
        for j in 0..nfe {
            for d in 0..nd {
                out[[j, i, d]] = grad_omega[[i * nfe + j, d]];
            }
        }
    }
    Ok(out)
}

/// Mixed l1/l2 reconstruction error and its image-domain gradient.
/// `l1_frac` blends `mean |e|` against `mean |e|^2`.
fn recon_error(
    x_hat: &ArrayD<Complex64>,
    x_true: &ArrayD<Complex64>,
    l1_frac: f64,
) -> (f64, ArrayD<Complex64>) {
    let n = x_hat.len() as f64;
    let mut value = 0.0;
    let mut xbar = ArrayD::<Complex64>::zeros(x_hat.raw_dim());
    for ((gv, hv), tv) in xbar.iter_mut().zip(x_hat.iter()).zip(x_true.iter()) {
        let e = hv - tv;
        let mag = e.norm();
        value += (l1_frac * mag + (1.0 - l1_frac) * mag * mag) / n;
        let mut g = 2.0 * (1.0 - l1_frac) / n * e;
        if mag > 0.0 {
            g += l1_frac / n * e / mag;
        }
        *gv = g;
    }
    (value, xbar)
}

/// Reconstruction-quality loss over a batch of ground-truth images:
/// simulate data with the model's noise setting, reconstruct with the
/// unrolled CG, and measure the mixed l1/l2 error, backpropagating
/// through every step (including the data simulation `y = A x + eps`)
/// to the sample locations and `log lambda`.
pub fn loss_recon<R: Rng>(
    model: &SystemModel,
    x_batch: &[ArrayD<Complex64>],
    cfg: &ReconConfig,
    params: &ReconParams,
    l1_frac: f64,
    traj: &Trajectory,
    rng: &mut R,
) -> Result<ReconLossEval> {
    if x_batch.is_empty() {
        return Err(Error::InvalidParameter("empty reconstruction batch".into()));
    }
    if !(0.0..=1.0).contains(&l1_frac) {
        return Err(Error::InvalidParameter("l1_frac must be in [0, 1]".into()));
    }
    let mut cfg = *cfg;
    cfg.lambda = params.lambda();
    let plan = &model.plan;
    let nb = x_batch.len() as f64;
    let mut value = 0.0;
    let mut grad_omega = Array2::<f64>::zeros((plan.n_samples(), plan.n_dims()));
    let mut grad_lambda = 0.0;
    for x_true in x_batch {
        if x_true.shape() != plan.matrix_size() {
            return Err(Error::ShapeMismatch(format!(
                "phantom shape {:?} vs matrix {:?}",
                x_true.shape(),
                plan.matrix_size()
            )));
        }
        let y = model.simulate(x_true, rng)?;
        let out = recon_unrolled(model, &y, &cfg)?;
        if out.tape.breakdown && out.tape.residual_norms.len() <= 1 {
            return Err(Error::Numerical("CG broke down on the first iteration".into()));
        }
        let (v, xbar) = recon_error(&out.image, x_true, l1_frac);
        value += v / nb;
        let mut g = recon_backprop(model, &cfg, &out.tape, &xbar)?;
        if nb != 1.0 {
            g.grad_omega.mapv_inplace(|t| t / nb);
            g.grad_lambda /= nb;
            g.grad_y.mapv_inplace(|t| t / nb);
        }
        grad_omega += &g.grad_omega;
        grad_lambda += g.grad_lambda;
        // data stage: y_c = A (s_c x_true) + eps, eps independent of omega
        for c in 0..model.n_coils() {
            let xc = model.coil_image(x_true, c);
            let ybar_c: Vec<Complex64> = g.grad_y.row(c).to_vec();
            accum_forward_stage(plan, &xc, &ybar_c, &mut grad_omega)?;
        }
    }
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite reconstruction loss".into()));
    }
    Ok(ReconLossEval {
        value,
        grad_traj: unflatten_grad(traj, &grad_omega)?,
        grad_log_lambda: grad_lambda * params.lambda(),
    })
}

/// Point-spread function (adjoint of all-ones data) and a smoothed
/// sampling-density map (sum of Gaussian bumps of width `sigma` grid
/// cells at each sample's grid position).
pub fn psf_and_density(
    plan: &NufftPlan,
    sigma: f64,
) -> Result<(ArrayD<Complex64>, ArrayD<f64>)> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter("sigma must be > 0".into()));
    }
    let ones = vec![Complex64::new(1.0, 0.0); plan.n_samples()];
    let psf = plan.adjoint(&ones)?;
    let dims = plan.matrix_size().to_vec();
    let nd = dims.len();
    let mut density = ArrayD::<f64>::zeros(IxDyn(&dims));
    let reach = (4.0 * sigma).ceil() as isize;
    let omega = plan.omega();
    for m in 0..plan.n_samples() {
        // sample position in grid-index units of the target matrix
        let pos: Vec<f64> = (0..nd)
            .map(|d| {
                let n = dims[d] as f64;
                omega[[m, d]] / (2.0 * std::f64::consts::PI) * n + (dims[d] / 2) as f64
            })
            .collect();
        let mut idx = vec![0isize; nd];
        let base: Vec<isize> = pos.iter().map(|&p| p.round() as isize).collect();
        add_bump(&mut density, &pos, &base, &mut idx, 0, reach, sigma);
    }
    Ok((psf, density))
}

fn add_bump(
    density: &mut ArrayD<f64>,
    pos: &[f64],
    base: &[isize],
    idx: &mut [isize],
    d: usize,
    reach: isize,
    sigma: f64,
) {
    if d == idx.len() {
        let dims: Vec<usize> = density.shape().to_vec();
        let mut r2 = 0.0;
        let mut gi = Vec::with_capacity(idx.len());
        for (dd, &i) in idx.iter().enumerate() {
            let delta = i as f64 - pos[dd];
            r2 += delta * delta;
            gi.push(i.rem_euclid(dims[dd] as isize) as usize);
        }
        density[IxDyn(&gi)] += (-0.5 * r2 / (sigma * sigma)).exp();
        return;
    }
    for o in -reach..=reach {
        idx[d] = base[d] + o;
        add_bump(density, pos, base, idx, d + 1, reach, sigma);
    }
}
