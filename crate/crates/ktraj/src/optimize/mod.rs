//! Loss aggregation over a trajectory parameterization, the SGLD
//! optimizer, and the single-level / multi-level optimization drivers.

use ndarray::{Array3, ArrayD};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::core::{LossWeights, ScannerLimits, SenseMaps, Trajectory};
use crate::nufft::{AccuracyTier, NoiseLevel, NufftPlan, SystemModel};
use crate::param::{BsplineBasis, BsplineParam, RotationParam};
use crate::penalties::{loss_contrast, loss_hardware, loss_pns, ContrastSpec};
use crate::recon::{loss_recon, ReconConfig, ReconParams};
use crate::{Error, Result};

/// What the optimizer updates: a flat real coefficient vector that
/// expands to a trajectory and pulls trajectory gradients back.
#[derive(Debug, Clone)]
pub enum Parameterization {
    /// The samples themselves, optionally keeping the first sample of
    /// every shot fixed.
    Freeform { traj: Trajectory, pin_first: bool },
    Bspline(BsplineParam, Trajectory),
    Rotation(RotationParam),
}

impl Parameterization {
    pub fn freeform(traj: Trajectory) -> Self {
        Parameterization::Freeform { traj, pin_first: false }
    }

    /// B-spline coefficients fitted to `traj` at the given kernel
    /// width; returns the parameterization and the fit residual.
    pub fn bspline_fit(traj: &Trajectory, width: usize, pin_first: bool) -> Result<(Self, f64)> {
        let basis = BsplineBasis::new(traj.n_readout(), width)?;
        let (param, resid) = BsplineParam::fit(basis, traj, pin_first)?;
        Ok((Parameterization::Bspline(param, traj.clone()), resid))
    }

    pub fn n_params(&self) -> usize {
        match self {
            Parameterization::Freeform { traj, .. } => traj.samples.len(),
            Parameterization::Bspline(p, _) => p.coef.len(),
            Parameterization::Rotation(p) => p.angles.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Parameterization::Freeform { traj, .. } => traj.samples.iter().cloned().collect(),
            Parameterization::Bspline(p, _) => p.coef.iter().cloned().collect(),
            Parameterization::Rotation(p) => p.angles.iter().cloned().collect(),
        }
    }

    pub fn set_params(&mut self, c: &[f64]) -> Result<()> {
        if c.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters vs expected {}",
                c.len(),
                self.n_params()
            )));
        }
        match self {
            Parameterization::Freeform { traj, .. } => {
                for (dst, src) in traj.samples.iter_mut().zip(c) {
                    *dst = *src;
                }
            }
            Parameterization::Bspline(p, _) => {
                for (dst, src) in p.coef.iter_mut().zip(c) {
                    *dst = *src;
                }
            }
            Parameterization::Rotation(p) => {
                for (dst, src) in p.angles.iter_mut().zip(c) {
                    *dst = *src;
                }
            }
        }
        Ok(())
    }

    pub fn expand(&self) -> Trajectory {
        match self {
            Parameterization::Freeform { traj, .. } => traj.clone(),
            Parameterization::Bspline(p, proto) => proto.with_samples(p.expand()),
            Parameterization::Rotation(p) => p.expand(),
        }
    }

    /// Chain rule from a trajectory-sample gradient to the flat
    /// coefficient gradient.
    pub fn backprop(&self, grad_traj: &Array3<f64>) -> Result<Vec<f64>> {
        match self {
            Parameterization::Freeform { traj, pin_first } => {
                let mut g = grad_traj.clone();
                if g.shape() != traj.samples.shape() {
                    return Err(Error::ShapeMismatch("trajectory gradient shape".into()));
                }
                if *pin_first {
                    for i in 0..traj.n_shots() {
                        for d in 0..traj.n_dims() {
                            g[[0, i, d]] = 0.0;
                        }
                    }
                }
                Ok(g.iter().cloned().collect())
            }
            Parameterization::Bspline(p, _) => {
                Ok(p.backprop(grad_traj)?.iter().cloned().collect())
            }
            Parameterization::Rotation(p) => Ok(p.backprop(grad_traj)?.iter().cloned().collect()),
        }
    }
}

/// Reconstruction-loss inputs; absent when `w_recon = 0`.
#[derive(Debug, Clone)]
pub struct ReconSetup {
    pub phantoms: Vec<ArrayD<Complex64>>,
    pub cfg: ReconConfig,
    pub sense: Option<SenseMaps>,
    pub noise: NoiseLevel,
    pub tier: AccuracyTier,
}

/// Everything the loss needs besides the parameters.
#[derive(Debug, Clone)]
pub struct LossProblem {
    pub limits: ScannerLimits,
    pub weights: LossWeights,
    pub contrast: Option<ContrastSpec>,
    pub recon: Option<ReconSetup>,
}

/// Per-term loss values, in weight order.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub recon: f64,
    pub gradient: f64,
    pub slew: f64,
    pub pns: f64,
    pub contrast: f64,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.w_recon * self.recon
            + w.w_grad * self.gradient
            + w.w_slew * self.slew
            + w.w_pns * self.pns
            + w.w_contrast * self.contrast
    }
}

/// Value and gradients of the weighted training loss.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub total: f64,
    pub terms: LossTerms,
    pub grad_params: Vec<f64>,
    pub grad_log_lambda: f64,
}

fn check_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{name} loss is not finite ({v})")))
    }
}

/// Weighted sum of the loss terms and its gradient through the
/// parameterization. `batch` selects which phantoms enter the
/// reconstruction term this step (all of them when empty).
pub fn total_loss<R: Rng>(
    param: &Parameterization,
    problem: &LossProblem,
    theta: &ReconParams,
    batch: &[usize],
    rng: &mut R,
) -> Result<LossEval> {
    problem.weights.validate()?;
    let w = &problem.weights;
    let traj = param.expand();
    if traj.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite trajectory sample before loss".into()));
    }
    let mut terms = LossTerms::default();
    let mut grad_traj = Array3::<f64>::zeros(traj.samples.raw_dim());
    let mut grad_log_lambda = 0.0;
    if w.w_grad != 0.0 || w.w_slew != 0.0 {
        let hw = loss_hardware(&traj, &problem.limits)?;
        terms.gradient = check_finite("gradient", hw.gradient.value)?;
        terms.slew = check_finite("slew", hw.slew.value)?;
        grad_traj.scaled_add(w.w_grad, &hw.gradient.grad);
        grad_traj.scaled_add(w.w_slew, &hw.slew.grad);
    }
    if w.w_pns != 0.0 {
        let p = loss_pns(&traj, &problem.limits)?;
        terms.pns = check_finite("pns", p.value)?;
        grad_traj.scaled_add(w.w_pns, &p.grad);
    }
    if w.w_contrast != 0.0 {
        let spec = problem
            .contrast
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("w_contrast > 0 without contrast points".into()))?;
        let c = loss_contrast(&traj, spec)?;
        terms.contrast = check_finite("contrast", c.value)?;
        grad_traj.scaled_add(w.w_contrast, &c.grad);
    }
    if w.w_recon != 0.0 {
        let setup = problem
            .recon
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("w_recon > 0 without phantoms".into()))?;
        let plan = NufftPlan::from_trajectory(&traj, setup.tier)?;
        let model = SystemModel::new(plan, setup.sense.clone(), setup.noise)?;
        let selected: Vec<ArrayD<Complex64>> = if batch.is_empty() {
            setup.phantoms.clone()
        } else {
            batch.iter().map(|&i| setup.phantoms[i].clone()).collect()
        };
        let eval = loss_recon(
            &model,
            &selected,
            &setup.cfg,
            theta,
            w.recon_l1_frac,
            &traj,
            rng,
        )?;
        terms.recon = check_finite("recon", eval.value)?;
        grad_traj.scaled_add(w.w_recon, &eval.grad_traj);
        grad_log_lambda = w.w_recon * eval.grad_log_lambda;
    }
    let total = check_finite("total", terms.total(w))?;
    Ok(LossEval {
        total,
        terms,
        grad_params: param.backprop(&grad_traj)?,
        grad_log_lambda,
    })
}

/// One SGLD update: `c <- c - eta * g + sqrt(2 eta) * N(0, 1)`.
/// With `noise` off this is plain gradient descent.
pub fn sgld_step<R: Rng>(
    params: &mut [f64],
    grad: &[f64],
    eta: f64,
    noise: bool,
    rng: &mut R,
) -> Result<()> {
    if eta < 0.0 || !eta.is_finite() {
        return Err(Error::InvalidParameter("eta must be finite and >= 0".into()));
    }
    if params.len() != grad.len() {
        return Err(Error::ShapeMismatch("params vs gradient length".into()));
    }
    let scale = (2.0 * eta).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for (c, g) in params.iter_mut().zip(grad) {
        *c -= eta * g;
        if noise {
            *c += scale * normal.sample(rng);
        }
    }
    Ok(())
}

/// Optimizer settings shared by the drivers.
#[derive(Debug, Clone)]
pub struct OptConfig {
    /// Initial trajectory-parameter step size; decays linearly to 0.
    pub eta: f64,
    /// Step size for the trainable reconstruction parameters.
    pub eta_theta: f64,
    pub steps_per_level: usize,
    /// B-spline kernel widths, coarse to fine (multi-level driver).
    pub levels: Vec<usize>,
    pub sgld_noise: bool,
    pub seed: u64,
    /// Phantoms drawn per step, without replacement per epoch; 0 means
    /// the whole set every step.
    pub batch_size: usize,
    /// l-infinity gradient clip at 10x the median |grad|; off by default.
    pub clip_grad: bool,
    /// Update `log lambda` alongside the trajectory.
    pub train_theta: bool,
    pub pin_first: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            eta_theta: 0.0,
            steps_per_level: 200,
            levels: vec![32, 16, 8],
            sgld_noise: true,
            seed: 0,
            batch_size: 1,
            clip_grad: false,
            train_theta: false,
            pin_first: false,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig("eta must be > 0".into()));
        }
        if self.eta_theta < 0.0 {
            return Err(Error::InvalidConfig("eta_theta must be >= 0".into()));
        }
        Ok(())
    }
}

/// One step of recorded history.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub level: usize,
    pub step: usize,
    pub eta: f64,
    pub noise_scale: f64,
    pub total: f64,
    pub terms: LossTerms,
}

/// One level (phase) of a multi-level run.
#[derive(Debug, Clone)]
pub struct PhaseRecord {
    pub width: usize,
    pub steps: usize,
    pub fit_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OptHistory {
    pub records: Vec<StepRecord>,
    pub phases: Vec<PhaseRecord>,
    /// Set when a step failed; the run stops early with the history so
    /// far and the best iterate found.
    pub aborted: Option<String>,
}

/// Result of an optimization run.
#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub traj: Trajectory,
    pub theta: ReconParams,
    pub best_loss: f64,
    pub history: OptHistory,
}

fn clip_inf(grad: &mut [f64]) {
    let mut mags: Vec<f64> = grad.iter().map(|g| g.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = mags[mags.len() / 2];
    if median > 0.0 {
        let cap = 10.0 * median;
        for g in grad.iter_mut() {
            *g = g.clamp(-cap, cap);
        }
    }
}

/// Epoch-based batch sampler: shuffles indices, deals `batch_size` per
/// step, reshuffles when exhausted.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl BatchSampler {
    fn new(n: usize, batch: usize) -> Self {
        Self { order: (0..n).collect(), pos: n, batch: batch.min(n) }
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.batch == 0 || self.order.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos >= self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Runs SGLD on one parameterization, keeping the best-loss iterate.
/// Noise is disabled over the final 10% of steps so the returned
/// iterate comes from a descent phase. `level` only labels history.
pub fn run_sgld(
    param: &mut Parameterization,
    theta: &mut ReconParams,
    problem: &LossProblem,
    cfg: &OptConfig,
    level: usize,
    rng: &mut ChaCha8Rng,
    history: &mut OptHistory,
) -> Result<f64> {
    cfg.validate()?;
    let steps = cfg.steps_per_level;
    let n_phantoms = problem.recon.as_ref().map_or(0, |s| s.phantoms.len());
    let mut sampler = BatchSampler::new(n_phantoms, cfg.batch_size);
    let mut best_loss = f64::INFINITY;
    let mut best_params = param.params();
    let mut best_theta = *theta;
    for k in 0..steps {
        let eta = cfg.eta * (1.0 - k as f64 / steps as f64);
        let noise = cfg.sgld_noise && (k as f64) < 0.9 * steps as f64;
        let batch = sampler.next(rng);
        let eval = match total_loss(param, problem, theta, &batch, rng) {
            Ok(e) => e,
            Err(e) => {
                history.aborted = Some(e.to_string());
                break;
            }
        };
        if eval.total < best_loss {
            best_loss = eval.total;
            best_params = param.params();
            best_theta = *theta;
        }
        history.records.push(StepRecord {
            level,
            step: k,
            eta,
            noise_scale: if noise { (2.0 * eta).sqrt() } else { 0.0 },
            total: eval.total,
            terms: eval.terms,
        });
        let mut grad = eval.grad_params;
        if cfg.clip_grad {
            clip_inf(&mut grad);
        }
        let mut c = param.params();
        sgld_step(&mut c, &grad, eta, noise, rng)?;
        param.set_params(&c)?;
        if cfg.train_theta && cfg.eta_theta > 0.0 {
            let mut th = [theta.log_lambda];
            sgld_step(&mut th, &[eval.grad_log_lambda], cfg.eta_theta, noise, rng)?;
            theta.log_lambda = th[0];
        }
    }
    // final iterate competes with the best recorded one
    if history.aborted.is_none() && steps > 0 {
        if let Ok(eval) = total_loss(param, problem, theta, &sampler.next(rng), rng) {
            if eval.total < best_loss {
                best_loss = eval.total;
                best_params = param.params();
                best_theta = *theta;
            }
        }
    }
    param.set_params(&best_params)?;
    *theta = best_theta;
    Ok(best_loss)
}

/// Multi-level B-spline optimization: per level, project the current
/// trajectory onto the level's basis, optimize, expand, refine.
pub fn run_multilevel(
    init: &Trajectory,
    problem: &LossProblem,
    cfg: &OptConfig,
    theta0: ReconParams,
) -> Result<OptOutcome> {
    cfg.validate()?;
    if cfg.levels.is_empty() {
        return Err(Error::InvalidConfig("at least one level required".into()));
    }
    for w in cfg.levels.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidConfig("levels must go coarse to fine".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traj = init.clone();
    let mut theta = theta0;
    let mut history = OptHistory::default();
    let mut best_loss = f64::INFINITY;
    for (li, &width) in cfg.levels.iter().enumerate() {
        let (mut param, resid) = Parameterization::bspline_fit(&traj, width, cfg.pin_first)?;
        history.phases.push(PhaseRecord { width, steps: cfg.steps_per_level, fit_residual: resid });
        best_loss = run_sgld(&mut param, &mut theta, problem, cfg, li, &mut rng, &mut history)?;
        traj = param.expand();
        if history.aborted.is_some() {
            break;
        }
    }
    Ok(OptOutcome { traj, theta, best_loss, history })
}
