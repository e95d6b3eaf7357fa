//! Domain types shared by every other module: the trajectory, scanner
//! limits, image volumes, sensitivity maps, and the conversions between
//! normalized k-space (radians per grid sample) and physical units.
//!
//! The internal trajectory unit is rad/sample in [-pi, pi); physical
//! units (cycles/m, mT/m, T/m/s) appear only at I/O boundaries and in
//! constraint evaluation.

use ndarray::{Array3, ArrayD};
use num_complex::Complex64;

use crate::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Proton gyromagnetic ratio in Hz/T.
pub const GAMMA_PROTON_HZ_PER_T: f64 = 42.5774e6;

/// A k-space sampling pattern: `samples[[j, i, d]]` is the normalized
/// coordinate of readout sample `j` of shot `i` along dimension `d`,
/// in rad/sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Array3<f64>,
    /// Field of view per dimension in mm.
    pub fov_mm: Vec<f64>,
    /// Reconstruction grid size per dimension.
    pub matrix_size: Vec<usize>,
    /// Sample time interval (raster) in seconds.
    pub raster_s: f64,
}

impl Trajectory {
    /// Builds a trajectory, validating metadata and wrapping any
    /// coordinate outside [-pi, pi) back into range (with a warning,
    /// since optimizer iterates may legitimately overshoot).
    pub fn new(
        samples: Array3<f64>,
        fov_mm: Vec<f64>,
        matrix_size: Vec<usize>,
        raster_s: f64,
    ) -> Result<Self> {
        let nd = samples.shape()[2];
        if nd != 2 && nd != 3 {
            return Err(Error::InvalidParameter(format!(
                "trajectory must be 2D or 3D, got Nd={nd}"
            )));
        }
        if fov_mm.len() != nd || matrix_size.len() != nd {
            return Err(Error::ShapeMismatch(format!(
                "fov/matrix length must equal Nd={nd}"
            )));
        }
        if fov_mm.iter().any(|&f| !(f > 0.0)) || matrix_size.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("fov and matrix must be positive".into()));
        }
        if !(raster_s > 0.0) {
            return Err(Error::InvalidParameter("raster time must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite trajectory sample".into()));
        }
        let mut samples = samples;
        let mut wrapped = 0usize;
        for v in samples.iter_mut() {
            if *v < -std::f64::consts::PI || *v >= std::f64::consts::PI {
                *v = wrap_to_pi(*v);
                wrapped += 1;
            }
        }
        if wrapped > 0 {
            log::warn!("wrapped {wrapped} trajectory coordinates into [-pi, pi)");
        }
        Ok(Self { samples, fov_mm, matrix_size, raster_s })
    }

    /// Same trajectory metadata with different samples; no wrapping, for
    /// optimizer-internal iterates.
    pub fn with_samples(&self, samples: Array3<f64>) -> Self {
        Self {
            samples,
            fov_mm: self.fov_mm.clone(),
            matrix_size: self.matrix_size.clone(),
            raster_s: self.raster_s,
        }
    }

    pub fn n_readout(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn n_shots(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn n_dims(&self) -> usize {
        self.samples.shape()[2]
    }

    /// Scale factor from rad/sample to cycles/m along dimension `d`:
    /// `k_phys = samples * matrix_size[d] / (2 pi fov_m[d])`.
    pub fn phys_scale(&self, d: usize) -> f64 {
        self.matrix_size[d] as f64 / (TWO_PI * self.fov_mm[d] * 1e-3)
    }

    /// Physical k-space coordinates in cycles/m, same shape as `samples`.
    pub fn to_physical(&self) -> Array3<f64> {
        let mut k = self.samples.clone();
        for d in 0..self.n_dims() {
            let s = self.phys_scale(d);
            k.index_axis_mut(ndarray::Axis(2), d).mapv_inplace(|v| v * s);
        }
        k
    }

    /// Inverse of [`Self::to_physical`]; `k_phys` in cycles/m.
    pub fn from_physical(&self, k_phys: &Array3<f64>) -> Array3<f64> {
        let mut w = k_phys.clone();
        for d in 0..self.n_dims() {
            let s = self.phys_scale(d);
            w.index_axis_mut(ndarray::Axis(2), d).mapv_inplace(|v| v / s);
        }
        w
    }
}

fn wrap_to_pi(v: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut r = (v + pi).rem_euclid(TWO_PI) - pi;
    if r >= pi {
        r = -pi;
    }
    r
}

/// Scanner hardware limits and PNS model parameters.
#[derive(Debug, Clone)]
pub struct ScannerLimits {
    /// Maximum gradient strength, mT/m.
    pub gmax_mt_m: f64,
    /// Maximum slew rate, T/m/s.
    pub smax_t_m_s: f64,
    /// Gyromagnetic ratio, Hz/T.
    pub gamma_hz_t: f64,
    /// PNS chronaxie time constant, seconds.
    pub chronaxie_s: f64,
    /// PNS minimum stimulation slew rate, T/m/s.
    pub smin_t_m_s: f64,
    /// PNS threshold as a fraction of the stimulation limit, in (0, 1].
    pub pmax: f64,
}

impl Default for ScannerLimits {
    fn default() -> Self {
        Self {
            gmax_mt_m: 50.0,
            smax_t_m_s: 150.0,
            gamma_hz_t: GAMMA_PROTON_HZ_PER_T,
            chronaxie_s: 334e-6,
            smin_t_m_s: 70.0,
            pmax: 0.8,
        }
    }
}

impl ScannerLimits {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gmax", self.gmax_mt_m),
            ("smax", self.smax_t_m_s),
            ("gamma", self.gamma_hz_t),
            ("chronaxie", self.chronaxie_s),
            ("smin", self.smin_t_m_s),
            ("pmax", self.pmax),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.pmax > 1.0 {
            return Err(Error::InvalidParameter(format!("pmax must be <= 1, got {}", self.pmax)));
        }
        Ok(())
    }
}

/// A complex image volume (2D or 3D).
#[derive(Debug, Clone)]
pub struct ImageVolume {
    pub data: ArrayD<Complex64>,
    pub spacing_mm: Vec<f64>,
}

impl ImageVolume {
    pub fn new(data: ArrayD<Complex64>, spacing_mm: Vec<f64>) -> Result<Self> {
        if data.ndim() != spacing_mm.len() {
            return Err(Error::ShapeMismatch(format!(
                "image is {}-d but spacing has {} entries",
                data.ndim(),
                spacing_mm.len()
            )));
        }
        Ok(Self { data, spacing_mm })
    }

    pub fn dims(&self) -> &[usize] {
        self.data.shape()
    }
}

/// Coil sensitivity maps; axis 0 is the coil index, remaining axes are
/// the spatial dimensions of the associated image.
#[derive(Debug, Clone)]
pub struct SenseMaps {
    pub maps: ArrayD<Complex64>,
}

impl SenseMaps {
    pub fn new(maps: ArrayD<Complex64>) -> Result<Self> {
        if maps.ndim() < 3 {
            return Err(Error::ShapeMismatch(
                "sense maps need a coil axis plus at least 2 spatial axes".into(),
            ));
        }
        if maps.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("NaN/inf in sense maps".into()));
        }
        Ok(Self { maps })
    }

    pub fn n_coils(&self) -> usize {
        self.maps.shape()[0]
    }

    pub fn spatial_dims(&self) -> &[usize] {
        &self.maps.shape()[1..]
    }
}

/// Weights of the combined training loss, plus the l1 fraction of the
/// reconstruction error norm.
#[derive(Debug, Clone)]
pub struct LossWeights {
    pub w_recon: f64,
    pub w_grad: f64,
    pub w_slew: f64,
    pub w_pns: f64,
    pub w_contrast: f64,
    /// Mixing fraction alpha in `alpha*l1 + (1-alpha)*l2^2`.
    pub recon_l1_frac: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_recon, self.w_grad, self.w_slew, self.w_pns, self.w_contrast];
        if ws.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("loss weights must be nonnegative".into()));
        }
        if ws.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParameter("at least one loss weight must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.recon_l1_frac) {
            return Err(Error::InvalidParameter("recon_l1_frac must be in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_recon: 1.0,
            w_grad: 0.1,
            w_slew: 0.1,
            w_pns: 1.0,
            w_contrast: 0.0,
            recon_l1_frac: 0.5,
        }
    }
}

/// Gradient waveform `[Nfe-1, Ns, Nd]` in mT/m: first difference of the
/// physical k-space trajectory divided by gamma*dt.
pub fn traj_to_gradient(traj: &Trajectory, limits: &ScannerLimits) -> Result<Array3<f64>> {
    let nfe = traj.n_readout();
    if nfe < 2 {
        return Err(Error::TooShort { need: 2, got: nfe });
    }
    let (ns, nd) = (traj.n_shots(), traj.n_dims());
    let mut g = Array3::zeros((nfe - 1, ns, nd));
    for d in 0..nd {
        // rad/sample -> mT/m in one factor
        let scale = gradient_scale(traj, limits, d);
        for i in 0..ns {
            for j in 0..nfe - 1 {
                g[[j, i, d]] = (traj.samples[[j + 1, i, d]] - traj.samples[[j, i, d]]) * scale;
            }
        }
    }
    Ok(g)
}

/// Slew waveform `[Nfe-2, Ns, Nd]` in T/m/s: second difference of the
/// physical k-space trajectory divided by gamma*dt^2.
pub fn traj_to_slew(traj: &Trajectory, limits: &ScannerLimits) -> Result<Array3<f64>> {
    let nfe = traj.n_readout();
    if nfe < 3 {
        return Err(Error::TooShort { need: 3, got: nfe });
    }
    let (ns, nd) = (traj.n_shots(), traj.n_dims());
    let mut s = Array3::zeros((nfe - 2, ns, nd));
    for d in 0..nd {
        let scale = slew_scale(traj, limits, d);
        for i in 0..ns {
            for j in 0..nfe - 2 {
                s[[j, i, d]] = (traj.samples[[j + 2, i, d]]
                    - 2.0 * traj.samples[[j + 1, i, d]]
                    + traj.samples[[j, i, d]])
                    * scale;
            }
        }
    }
    Ok(s)
}

/// mT/m produced per rad/sample of first difference along dimension `d`.
pub fn gradient_scale(traj: &Trajectory, limits: &ScannerLimits, d: usize) -> f64 {
    traj.phys_scale(d) / (limits.gamma_hz_t * traj.raster_s) * 1e3
}

/// T/m/s produced per rad/sample of second difference along dimension `d`.
pub fn slew_scale(traj: &Trajectory, limits: &ScannerLimits, d: usize) -> f64 {
    traj.phys_scale(d) / (limits.gamma_hz_t * traj.raster_s * traj.raster_s)
}
