//! Unrolled conjugate-gradient solve of the regularized normal
//! equations `(A'A + lambda R) x = A'y`, recording every iterate so the
//! exact computation can be backpropagated to the sample locations and
//! the regularizer weight.

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;

use super::{ReconConfig, ReconMethod, RoughnessOp};
use crate::nufft::{accum_adjoint_stage, accum_forward_stage, SystemModel, ToeplitzKernel};
use crate::{Error, Result};

fn dot_re(a: &ArrayD<Complex64>, b: &ArrayD<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Applies the regularizer operator `R` (either identity or the
/// periodic finite-difference normal operator `T'T`, a discrete
/// Laplacian).
pub fn reg_apply(op: RoughnessOp, x: &ArrayD<Complex64>) -> ArrayD<Complex64> {
    match op {
        RoughnessOp::Identity => x.clone(),
        RoughnessOp::FiniteDiff => {
            let nd = x.ndim();
            let mut out = ArrayD::<Complex64>::zeros(x.raw_dim());
            for ax in 0..nd {
                let n = x.shape()[ax];
                let mut idx_p = vec![0usize; nd];
                let mut idx_m = vec![0usize; nd];
                for (idx, v) in x.indexed_iter() {
                    for d in 0..nd {
                        idx_p[d] = idx[d];
                        idx_m[d] = idx[d];
                    }
                    idx_p[ax] = (idx[ax] + 1) % n;
                    idx_m[ax] = (idx[ax] + n - 1) % n;
                    out[idx.clone()] +=
                        2.0 * v - x[IxDyn(&idx_p)] - x[IxDyn(&idx_m)];
                }
            }
            out
        }
    }
}

impl ReconConfig {
    pub fn roughness(&self) -> RoughnessOp {
        match self.method {
            ReconMethod::CgSense => RoughnessOp::Identity,
            ReconMethod::Pls => self.pls_roughness,
        }
    }
}

/// One recorded CG iteration.
#[derive(Debug, Clone)]
struct CgIter {
    /// Search direction entering the iteration.
    p: ArrayD<Complex64>,
    /// Per-coil forward model of `p` (needed by the Jacobian terms);
    /// absent when the Toeplitz path skipped it, recomputed in backprop.
    t: Option<Array2<Complex64>>,
    q: ArrayD<Complex64>,
    r_next: ArrayD<Complex64>,
    rho: f64,
    dk: f64,
    alpha: f64,
    beta: f64,
    rho_next: f64,
}

/// Full record of one unrolled reconstruction.
#[derive(Debug, Clone)]
pub struct CgTape {
    y: Array2<Complex64>,
    b: ArrayD<Complex64>,
    iters: Vec<CgIter>,
    /// True if CG hit a zero-curvature direction and stopped early.
    pub breakdown: bool,
    /// `||r_k||` per iteration boundary (length n_done + 1).
    pub residual_norms: Vec<f64>,
}

/// Result of [`recon_unrolled`].
#[derive(Debug, Clone)]
pub struct ReconOutput {
    pub image: ArrayD<Complex64>,
    pub tape: CgTape,
}

/// Gradients produced by [`recon_backprop`].
#[derive(Debug, Clone)]
pub struct ReconGrad {
    /// `dL/d omega`, flat `[M, Nd]` plan layout.
    pub grad_omega: Array2<f64>,
    /// `dL/d lambda` (chain to log-lambda is the caller's).
    pub grad_lambda: f64,
    /// `dL/dy` per coil (conjugate-gradient convention).
    pub grad_y: Array2<Complex64>,
}

fn add_reg(q: &mut ArrayD<Complex64>, cfg: &ReconConfig, p: &ArrayD<Complex64>) {
    if cfg.lambda != 0.0 {
        let r = reg_apply(cfg.roughness(), p);
        for (qv, rv) in q.iter_mut().zip(r.iter()) {
            *qv += cfg.lambda * rv;
        }
    }
}

fn normal_apply(
    model: &SystemModel,
    toep: Option<&ToeplitzKernel>,
    cfg: &ReconConfig,
    p: &ArrayD<Complex64>,
) -> Result<(ArrayD<Complex64>, Option<Array2<Complex64>>)> {
    let (mut q, t) = match toep {
        Some(toe) => {
            let mut acc = ArrayD::<Complex64>::zeros(p.raw_dim());
            for c in 0..model.n_coils() {
                let mut u = toe.apply(&model.coil_image(p, c))?;
                if let Some(s) = &model.sense {
                    let map = s.maps.index_axis(ndarray::Axis(0), c);
                    for (v, m) in u.iter_mut().zip(map.iter()) {
                        *v *= m.conj();
                    }
                }
                acc += &u;
            }
            (acc, None)
        }
        None => {
            let t = model.forward(p)?;
            (model.adjoint(&t)?, Some(t))
        }
    };
    add_reg(&mut q, cfg, p);
    Ok((q, t))
}

/// Runs `n_iter` CG iterations on the normal equations from `x0 = 0`,
/// recording the tape. `y` is `[Ncoil, M]`.
pub fn recon_unrolled(
    model: &SystemModel,
    y: &Array2<Complex64>,
    cfg: &ReconConfig,
) -> Result<ReconOutput> {
    if cfg.n_iter < 1 {
        return Err(Error::InvalidParameter("n_iter must be >= 1".into()));
    }
    if cfg.lambda < 0.0 {
        return Err(Error::InvalidParameter("lambda must be >= 0".into()));
    }
    let toep = if cfg.use_toeplitz { Some(ToeplitzKernel::new(&model.plan)?) } else { None };
    let b = model.adjoint(y)?;
    let mut x = ArrayD::<Complex64>::zeros(b.raw_dim());
    let mut r = b.clone();
    let mut p = b.clone();
    let mut rho = dot_re(&r, &r);
    let mut iters = Vec::with_capacity(cfg.n_iter);
    let mut residual_norms = vec![rho.sqrt()];
    let mut breakdown = false;
    for _ in 0..cfg.n_iter {
        if rho == 0.0 {
            break;
        }
        let (q, t) = normal_apply(model, toep.as_ref(), cfg, &p)?;
        let dk = dot_re(&p, &q);
        if dk <= 0.0 || !dk.is_finite() {
            breakdown = true;
            break;
        }
        let alpha = rho / dk;
        for (xv, pv) in x.iter_mut().zip(p.iter()) {
            *xv += alpha * pv;
        }
        let mut r_next = r.clone();
        for (rv, qv) in r_next.iter_mut().zip(q.iter()) {
            *rv -= alpha * qv;
        }
        let rho_next = dot_re(&r_next, &r_next);
        let beta = rho_next / rho;
        let p_entry = p.clone();
        let mut p_next = r_next.clone();
        for (pv, old) in p_next.iter_mut().zip(p.iter()) {
            *pv += beta * old;
        }
        iters.push(CgIter {
            p: p_entry,
            t,
            q,
            r_next: r_next.clone(),
            rho,
            dk,
            alpha,
            beta,
            rho_next,
        });
        residual_norms.push(rho_next.sqrt());
        r = r_next;
        p = p_next;
        rho = rho_next;
    }
    Ok(ReconOutput {
        image: x,
        tape: CgTape { y: y.clone(), b, iters, breakdown, residual_norms },
    })
}

/// Reverse pass through a recorded reconstruction: given
/// `xbar = dL/dx_hat`, accumulates the gradients w.r.t. the sample
/// locations, the regularizer weight, and the input data.
pub fn recon_backprop(
    model: &SystemModel,
    cfg: &ReconConfig,
    tape: &CgTape,
    xbar_out: &ArrayD<Complex64>,
) -> Result<ReconGrad> {
    let plan = &model.plan;
    let nd = plan.n_dims();
    let m = plan.n_samples();
    let nc = model.n_coils();
    let mut grad_omega = Array2::<f64>::zeros((m, nd));
    let mut grad_lambda = 0.0f64;
    let rough = cfg.roughness();

    let zero = || ArrayD::<Complex64>::zeros(xbar_out.raw_dim());
    let xbar = xbar_out.clone();
    let mut rbar = zero();
    let mut pbar = zero();
    let mut rho_bar_next = 0.0f64; // adjoint of rho_{k+1} entering iteration k
    for it in tape.iters.iter().rev() {
        // assemble the full adjoint of r_{k+1}: the carry from the
        // later iteration plus the p_{k+1} = r_{k+1} + beta_k p_k and
        // rho_{k+1} = <r_{k+1}, r_{k+1}> contributions
        let mut r_next_bar = rbar;
        r_next_bar += &pbar;
        let beta_bar = it
            .p
            .iter()
            .zip(pbar.iter())
            .map(|(pv, gb)| (gb.conj() * pv).re)
            .sum::<f64>();
        let mut p_bar_k: ArrayD<Complex64> = pbar.mapv(|v| v * it.beta);
        // beta_k = rho_{k+1} / rho_k
        let rho_next_bar = rho_bar_next + beta_bar / it.rho;
        let mut rho_bar = -beta_bar * it.rho_next / (it.rho * it.rho);
        for (rb, rv) in r_next_bar.iter_mut().zip(it.r_next.iter()) {
            *rb += 2.0 * rho_next_bar * rv;
        }
        // r_{k+1} = r_k - alpha_k q_k
        rbar = r_next_bar.clone();
        let mut alpha_bar = -it
            .q
            .iter()
            .zip(r_next_bar.iter())
            .map(|(qv, gb)| (gb.conj() * qv).re)
            .sum::<f64>();
        let mut qbar: ArrayD<Complex64> = r_next_bar.mapv(|v| v * (-it.alpha));
        // x_{k+1} = x_k + alpha_k p_k
        alpha_bar += it
            .p
            .iter()
            .zip(xbar.iter())
            .map(|(pv, gb)| (gb.conj() * pv).re)
            .sum::<f64>();
        for (pb, xv) in p_bar_k.iter_mut().zip(xbar.iter()) {
            *pb += it.alpha * xv;
        }
        // alpha_k = rho_k / dk
        rho_bar += alpha_bar / it.dk;
        let dk_bar = -alpha_bar * it.rho / (it.dk * it.dk);
        // dk = <p_k, q_k>
        for (pb, qv) in p_bar_k.iter_mut().zip(it.q.iter()) {
            *pb += dk_bar * qv;
        }
        for (qb, pv) in qbar.iter_mut().zip(it.p.iter()) {
            *qb += dk_bar * pv;
        }
        // q_k = sum_c conj(s_c) A'(A (s_c p_k)) + lambda R p_k
        if cfg.lambda != 0.0 {
            let rp = reg_apply(rough, &it.p);
            grad_lambda += dot_re(&qbar, &rp);
            let rq = reg_apply(rough, &qbar); // R is self-adjoint
            for (pb, rv) in p_bar_k.iter_mut().zip(rq.iter()) {
                *pb += cfg.lambda * rv;
            }
        }
        // recompute t when the forward used the Toeplitz path
        let t = match &it.t {
            Some(t) => t.clone(),
            None => model.forward(&it.p)?,
        };
        for c in 0..nc {
            let tc: Vec<Complex64> = t.row(c).to_vec();
            let zbar_c = model.coil_image(&qbar, c); // s_c .* qbar
            // adjoint stage z_c = A' t_c
            accum_adjoint_stage(plan, &tc, &zbar_c, &mut grad_omega)?;
            let tbar_c = plan.forward(&zbar_c)?;
            // forward stage t_c = A (s_c p_k)
            let u_c = model.coil_image(&it.p, c);
            accum_forward_stage(plan, &u_c, &tbar_c, &mut grad_omega)?;
            let mut ubar = plan.adjoint(&tbar_c)?;
            if let Some(s) = &model.sense {
                let map = s.maps.index_axis(ndarray::Axis(0), c);
                for (v, mm) in ubar.iter_mut().zip(map.iter()) {
                    *v *= mm.conj();
                }
            }
            p_bar_k += &ubar;
        }
        // x_k flows through unchanged; rho_k feeds the next (earlier) iteration
        pbar = p_bar_k;
        rho_bar_next = rho_bar;
    }
    // initialization: x0 = 0, r0 = b, p0 = b, rho0 = <r0, r0>
    let mut bbar = rbar;
    bbar += &pbar;
    for (bb, bv) in bbar.iter_mut().zip(tape.b.iter()) {
        *bb += 2.0 * rho_bar_next * bv;
    }
    // b = sum_c conj(s_c) A' y_c
    let mut grad_y = Array2::<Complex64>::zeros((nc, m));
    for c in 0..nc {
        let zbar_c = model.coil_image(&bbar, c);
        let yc: Vec<Complex64> = tape.y.row(c).to_vec();
        accum_adjoint_stage(plan, &yc, &zbar_c, &mut grad_omega)?;
        let ybar_c = plan.forward(&zbar_c)?;
        for (j, v) in ybar_c.into_iter().enumerate() {
            grad_y[[c, j]] = v;
        }
    }
    Ok(ReconGrad { grad_omega, grad_lambda, grad_y })
}
