//! Command implementations behind the `ktraj` binary: optimize,
//! validate, psf, simulate, generate-phantoms.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::files::{
    read_trajectory, read_volume, write_table, write_trajectory, write_volume, write_waveforms,
};
use super::metrics::{nrmse, psnr_db};
use super::phantom::{birdcage_maps, random_phantom};
use crate::core::{traj_to_gradient, traj_to_slew, ScannerLimits, SenseMaps, Trajectory};
use crate::nufft::{AccuracyTier, NoiseLevel, NufftPlan, SystemModel};
use crate::param::{check_feasibility, generate_initial, RotationAxis, RotationParam};
use crate::penalties::{pns_response, ContrastSpec};
use crate::recon::{psf_and_density, recon_unrolled, ReconParams};
use crate::optimize::{
    run_multilevel, run_sgld, LossProblem, OptConfig, OptHistory, OptOutcome, Parameterization,
    ReconSetup,
};
use crate::{Error, Result};

/// FNV-1a over the raw config bytes; stable across runs and platforms.
fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn max_norm(rows: &ndarray::Array3<f64>) -> f64 {
    let (nt, ns, nd) = (rows.shape()[0], rows.shape()[1], rows.shape()[2]);
    let mut peak = 0.0f64;
    for j in 0..nt {
        for i in 0..ns {
            let n2: f64 = (0..nd).map(|d| rows[[j, i, d]].powi(2)).sum();
            peak = peak.max(n2.sqrt());
        }
    }
    peak
}

/// Loads the phantom set: from `dataset.phantom_dir` when present
/// (files `phantom_NNN.cplx/.hdr`), otherwise seeded generation.
fn load_phantoms(cfg: &RunConfig, seed: u64) -> Result<Vec<ArrayD<Complex64>>> {
    let dims = &cfg.geometry.matrix;
    if let Some(dir) = &cfg.dataset.phantom_dir {
        let mut out = Vec::new();
        for i in 0.. {
            let base = dir.join(format!("phantom_{i:03}"));
            if !base.with_extension("hdr").exists() {
                break;
            }
            let (vol, _) = read_volume(&base)?;
            if vol.shape() != &dims[..] {
                return Err(Error::ShapeMismatch(format!(
                    "phantom {} dims {:?} vs matrix {:?}",
                    base.display(),
                    vol.shape(),
                    dims
                )));
            }
            out.push(vol);
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no phantom_NNN volumes in {}",
                dir.display()
            )));
        }
        Ok(out)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cfg.dataset.n_phantoms.max(1)).map(|_| random_phantom(dims, &mut rng)).collect()
    }
}

fn sense(cfg: &RunConfig) -> Result<Option<SenseMaps>> {
    if cfg.dataset.n_coils > 1 {
        Ok(Some(birdcage_maps(cfg.dataset.n_coils, &cfg.geometry.matrix)?))
    } else {
        Ok(None)
    }
}

fn noise_level(noise: f64) -> NoiseLevel {
    if noise > 0.0 {
        NoiseLevel::Relative(noise)
    } else {
        NoiseLevel::None
    }
}

/// Builds the initial trajectory from `[init]`. Generated baselines
/// are checked against the limits only when no penalty in the loss
/// could repair a violation.
fn initial_trajectory(cfg: &RunConfig, limits: &ScannerLimits) -> Result<Trajectory> {
    let w = cfg.loss_weights();
    let enforce = w.w_grad == 0.0 && w.w_slew == 0.0 && w.w_pns == 0.0;
    match cfg.traj_kind()? {
        Some(kind) => {
            generate_initial(&kind, &cfg.geometry(), if enforce { Some(limits) } else { None })
        }
        None => {
            let path = cfg.init.path.as_ref().expect("validated");
            let traj = read_trajectory(path)?;
            if enforce {
                check_feasibility(&traj, limits)?;
            }
            Ok(traj)
        }
    }
}

fn build_problem(cfg: &RunConfig, limits: &ScannerLimits, seed: u64) -> Result<LossProblem> {
    let weights = cfg.loss_weights();
    let recon = if weights.w_recon > 0.0 {
        Some(ReconSetup {
            phantoms: load_phantoms(cfg, seed)?,
            cfg: cfg.recon_config()?,
            sense: sense(cfg)?,
            noise: noise_level(cfg.dataset.noise),
            tier: cfg.train_tier(),
        })
    } else {
        None
    };
    // the contrast spec needs the concrete trajectory; filled by the caller
    Ok(LossProblem { limits: limits.clone(), weights, contrast: None, recon })
}

/// Physical k-space table `shot, time_s, k..._cyc_per_m`.
fn write_physical_table(path: &Path, traj: &Trajectory) -> Result<()> {
    let k = traj.to_physical();
    let nd = traj.n_dims();
    let mut header = vec!["shot", "time_s"];
    let names = ["kx_cyc_per_m", "ky_cyc_per_m", "kz_cyc_per_m"];
    header.extend(names.iter().take(nd));
    let mut rows = Vec::with_capacity(traj.n_shots() * traj.n_readout());
    for i in 0..traj.n_shots() {
        for j in 0..traj.n_readout() {
            let mut row = vec![i as f64, j as f64 * traj.raster_s];
            for d in 0..nd {
                row.push(k[[j, i, d]]);
            }
            rows.push(row);
        }
    }
    write_table(path, &header, &rows)
}

fn write_loss_curve(path: &Path, history: &OptHistory) -> Result<()> {
    let rows: Vec<Vec<f64>> = history
        .records
        .iter()
        .map(|r| {
            vec![
                r.level as f64,
                r.step as f64,
                r.eta,
                r.noise_scale,
                r.terms.recon,
                r.terms.gradient,
                r.terms.slew,
                r.terms.pns,
                r.terms.contrast,
                r.total,
            ]
        })
        .collect();
    write_table(
        path,
        &["level", "step", "eta", "noise_scale", "recon", "gradient", "slew", "pns", "contrast", "total"],
        &rows,
    )
}

fn write_manifest(
    path: &Path,
    config_bytes: &[u8],
    seed: u64,
    outcome: Option<&OptOutcome>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("tool ktraj {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("config_hash {}\n", fnv1a_hex(config_bytes)));
    out.push_str(&format!("seed {seed}\n"));
    if let Some(o) = outcome {
        out.push_str(&format!("best_loss {}\n", o.best_loss));
        out.push_str(&format!("lambda {}\n", o.theta.lambda()));
        out.push_str(&format!(
            "status {}\n",
            o.history.aborted.as_deref().unwrap_or("ok")
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs the configured optimization and writes all artifacts into the
/// output directory. Returns the optimized trajectory.
pub fn cmd_optimize(config_path: &Path, cfg: &RunConfig, out_dir: &Path, seed: u64) -> Result<Trajectory> {
    fs::create_dir_all(out_dir)?;
    let limits = cfg.scanner_limits()?;
    let init = initial_trajectory(cfg, &limits)?;
    let mut problem = build_problem(cfg, &limits, seed ^ 0x9e3779b97f4a7c15)?;
    if let Some(c) = &cfg.contrast {
        problem.contrast = Some(ContrastSpec::lock_all_shots(&init, c.time_index));
    }
    let opt = OptConfig {
        eta: cfg.optimizer.eta,
        eta_theta: cfg.optimizer.eta_theta,
        steps_per_level: cfg.optimizer.steps_per_level,
        levels: cfg.optimizer.levels.clone(),
        sgld_noise: cfg.optimizer.sgld_noise,
        seed,
        batch_size: cfg.optimizer.batch_size,
        clip_grad: cfg.optimizer.clip_grad,
        train_theta: cfg.optimizer.train_theta,
        pin_first: cfg.optimizer.pin_first,
    };
    let theta0 = ReconParams::from_lambda(cfg.recon.lambda.max(1e-12))?;
    let outcome = match cfg.optimizer.mode.as_str() {
        "bspline" => run_multilevel(&init, &problem, &opt, theta0)?,
        "freeform" | "rotation" => {
            let mut param = match cfg.optimizer.mode.as_str() {
                "freeform" => Parameterization::Freeform {
                    traj: init.clone(),
                    pin_first: cfg.optimizer.pin_first,
                },
                _ => Parameterization::Rotation(RotationParam::new(
                    init.clone(),
                    RotationAxis::InPlaneZ,
                    ndarray::Array2::zeros((init.n_shots(), 1)),
                )?),
            };
            let mut theta = theta0;
            let mut history = OptHistory::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let best_loss =
                run_sgld(&mut param, &mut theta, &problem, &opt, 0, &mut rng, &mut history)?;
            OptOutcome { traj: param.expand(), theta, best_loss, history }
        }
        other => return Err(Error::InvalidConfig(format!("unknown optimizer mode: {other}"))),
    };
    let mut outcome = outcome;
    // unconstrained steps can push boundary samples epsilon past the
    // [-pi, pi) range; box-project them so the file reads back verbatim
    // instead of wrapping across the k-space boundary
    let below_pi = f64::from_bits(std::f64::consts::PI.to_bits() - 1);
    for v in outcome.traj.samples.iter_mut() {
        *v = v.clamp(-std::f64::consts::PI, below_pi);
    }
    let config_bytes = fs::read(config_path).unwrap_or_default();
    write_trajectory(&out_dir.join("trajectory.ktr"), &outcome.traj)?;
    write_physical_table(&out_dir.join("trajectory_phys.tsv"), &outcome.traj)?;
    write_waveforms(out_dir, &outcome.traj, &limits)?;
    write_loss_curve(&out_dir.join("loss_curve.tsv"), &outcome.history)?;
    write_manifest(&out_dir.join("manifest.txt"), &config_bytes, seed, Some(&outcome))?;
    if let Some(reason) = &outcome.history.aborted {
        return Err(Error::Numerical(format!(
            "optimization aborted ({reason}); partial artifacts written to {}",
            out_dir.display()
        )));
    }
    Ok(outcome.traj)
}

/// Validation report for a trajectory against scanner limits.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub max_grad_mt_m: f64,
    pub max_slew_t_m_s: f64,
    pub peak_pns_frac: f64,
    /// Max |omega| over the locked contrast points, if a lock is set.
    pub max_contrast_offset: Option<f64>,
    pub grad_ok: bool,
    pub slew_ok: bool,
    pub pns_ok: bool,
    pub pass: bool,
}

impl ValidationReport {
    /// Machine-readable `key=value` lines plus a final verdict line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("max_grad_mt_m={}\n", self.max_grad_mt_m));
        out.push_str(&format!("max_slew_t_m_s={}\n", self.max_slew_t_m_s));
        out.push_str(&format!("peak_pns_frac={}\n", self.peak_pns_frac));
        if let Some(c) = self.max_contrast_offset {
            out.push_str(&format!("max_contrast_offset_rad={c}\n"));
        }
        out.push_str(&format!("grad_ok={}\n", self.grad_ok));
        out.push_str(&format!("slew_ok={}\n", self.slew_ok));
        out.push_str(&format!("pns_ok={}\n", self.pns_ok));
        out.push_str(&format!("result={}\n", if self.pass { "PASS" } else { "FAIL" }));
        out
    }
}

pub fn cmd_validate(
    traj_path: &Path,
    limits: &ScannerLimits,
    contrast_time_index: Option<usize>,
) -> Result<ValidationReport> {
    let traj = read_trajectory(traj_path)?;
    validate_trajectory(&traj, limits, contrast_time_index)
}

pub fn validate_trajectory(
    traj: &Trajectory,
    limits: &ScannerLimits,
    contrast_time_index: Option<usize>,
) -> Result<ValidationReport> {
    let max_g = max_norm(&traj_to_gradient(traj, limits)?);
    let max_s = max_norm(&traj_to_slew(traj, limits)?);
    let pns = pns_response(traj, limits)?;
    let peak_pns = pns.combined.iter().cloned().fold(0.0, f64::max);
    let max_contrast_offset = contrast_time_index.map(|idx| {
        let spec = ContrastSpec::lock_all_shots(traj, idx);
        spec.points
            .iter()
            .map(|&(i, j, d)| traj.samples[[j, i, d]].abs())
            .fold(0.0, f64::max)
    });
    let grad_ok = max_g <= limits.gmax_mt_m;
    let slew_ok = max_s <= limits.smax_t_m_s;
    let pns_ok = peak_pns <= limits.pmax;
    Ok(ValidationReport {
        max_grad_mt_m: max_g,
        max_slew_t_m_s: max_s,
        peak_pns_frac: peak_pns,
        max_contrast_offset,
        grad_ok,
        slew_ok,
        pns_ok,
        pass: grad_ok && slew_ok && pns_ok,
    })
}

/// Central line profiles along each axis through the volume center.
fn axis_profiles(data: &ArrayD<f64>) -> Vec<Vec<Vec<f64>>> {
    let dims = data.shape().to_vec();
    let center: Vec<usize> = dims.iter().map(|&n| n / 2).collect();
    let mut tables = Vec::new();
    for ax in 0..dims.len() {
        let mut rows = Vec::with_capacity(dims[ax]);
        for i in 0..dims[ax] {
            let mut idx = center.clone();
            idx[ax] = i;
            rows.push(vec![i as f64, data[IxDyn(&idx)]]);
        }
        tables.push(rows);
    }
    tables
}

/// Computes and writes the PSF (log magnitude, dB below peak) and the
/// Gaussian-smoothed sampling density, with central profiles.
pub fn cmd_psf(traj_path: &Path, sigma: f64, out_dir: &Path) -> Result<()> {
    let traj = read_trajectory(traj_path)?;
    fs::create_dir_all(out_dir)?;
    let plan = NufftPlan::from_trajectory(&traj, AccuracyTier::Eval)?;
    let (psf, density) = psf_and_density(&plan, sigma)?;
    let peak = psf.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let psf_db = psf.mapv(|v| 20.0 * ((v.norm() / peak).max(1e-12)).log10());
    write_volume(
        &out_dir.join("psf_log"),
        &psf_db.mapv(|v| Complex64::new(v, 0.0)),
        &vec![1.0; psf.ndim()],
    )?;
    write_volume(
        &out_dir.join("density"),
        &density.mapv(|v| Complex64::new(v, 0.0)),
        &vec![1.0; density.ndim()],
    )?;
    let psf_mag = psf.mapv(|v| v.norm() / peak);
    for (ax, rows) in axis_profiles(&psf_mag).into_iter().enumerate() {
        write_table(&out_dir.join(format!("psf_profile_axis{ax}.tsv")), &["index", "value"], &rows)?;
    }
    for (ax, rows) in axis_profiles(&density).into_iter().enumerate() {
        write_table(
            &out_dir.join(format!("density_profile_axis{ax}.tsv")),
            &["index", "value"],
            &rows,
        )?;
    }
    Ok(())
}

/// Per-volume and mean reconstruction metrics.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub per_volume: Vec<(f64, f64)>,
    pub mean_psnr_db: f64,
    pub mean_nrmse: f64,
}

/// Simulates acquisition along the trajectory for every phantom,
/// reconstructs, and reports PSNR/NRMSE against the ground truth.
pub fn cmd_simulate(
    traj_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    seed: u64,
) -> Result<SimulationReport> {
    let traj = read_trajectory(traj_path)?;
    if traj.matrix_size != cfg.geometry.matrix {
        return Err(Error::ShapeMismatch(format!(
            "trajectory matrix {:?} vs config {:?}",
            traj.matrix_size, cfg.geometry.matrix
        )));
    }
    fs::create_dir_all(out_dir)?;
    let phantoms = load_phantoms(cfg, seed ^ 0x517cc1b727220a95)?;
    let plan = NufftPlan::from_trajectory(&traj, AccuracyTier::Eval)?;
    let model = SystemModel::new(plan, sense(cfg)?, noise_level(cfg.dataset.noise))?;
    let recon_cfg = cfg.recon_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_volume = Vec::new();
    let mut rows = Vec::new();
    for (i, x) in phantoms.iter().enumerate() {
        let y = model.simulate(x, &mut rng)?;
        let out = recon_unrolled(&model, &y, &recon_cfg)?;
        let p = psnr_db(&out.image, x)?;
        let e = nrmse(&out.image, x)?;
        per_volume.push((p, e));
        rows.push(vec![i as f64, p, e]);
    }
    let n = per_volume.len() as f64;
    let mean_psnr_db = per_volume.iter().map(|v| v.0).sum::<f64>() / n;
    let mean_nrmse = per_volume.iter().map(|v| v.1).sum::<f64>() / n;
    rows.push(vec![-1.0, mean_psnr_db, mean_nrmse]);
    write_table(&out_dir.join("metrics.tsv"), &["volume", "psnr_db", "nrmse"], &rows)?;
    Ok(SimulationReport { per_volume, mean_psnr_db, mean_nrmse })
}

/// Writes `count` phantom volumes (and sensitivity maps when
/// configured) for later runs.
pub fn cmd_generate_phantoms(
    cfg: &RunConfig,
    out_dir: &Path,
    seed: u64,
    count: usize,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let dims = &cfg.geometry.matrix;
    let spacing: Vec<f64> = cfg
        .geometry
        .fov_mm
        .iter()
        .zip(dims)
        .map(|(f, &n)| f / n as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();
    for i in 0..count {
        let p = random_phantom(dims, &mut rng)?;
        let base = out_dir.join(format!("phantom_{i:03}"));
        write_volume(&base, &p, &spacing)?;
        written.push(base);
    }
    if cfg.dataset.n_coils > 1 {
        let maps = birdcage_maps(cfg.dataset.n_coils, dims)?;
        let mut map_spacing = vec![1.0];
        map_spacing.extend_from_slice(&spacing);
        write_volume(&out_dir.join("sense_maps"), &maps.maps, &map_spacing)?;
    }
    Ok(written)
}
