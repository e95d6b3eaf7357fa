//! Gridding NUFFT: Kaiser-Bessel interpolation on an oversampled FFT
//! grid, with the deapodization table built from the kernel transform.
//!
//! Conventions: sample locations `omega` are in rad/sample; image grid
//! coordinates are the integers `-N/2 .. N/2-1` with DC at the center
//! (see [`super::dft::centered_coord`]). The forward operator evaluates
//! `y[m] = sum_n x[n] exp(-i omega_m . r_n)` and the adjoint is its
//! exact conjugate transpose.

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;

use super::dft::centered_coord;
use super::fftn::FftN;
use super::kernel::KbKernel;
use crate::core::{Trajectory, TWO_PI};
use crate::{Error, Result};

/// NUFFT accuracy tier. Training uses a cheaper, lower-accuracy plan;
/// evaluation uses the accurate one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyTier {
    /// Oversampling 2.0, kernel width 6 (relative error ~1e-5).
    Eval,
    /// Oversampling 1.25, kernel width 4 (relative error ~1e-2).
    Train,
}

impl AccuracyTier {
    pub fn oversampling(self) -> f64 {
        match self {
            AccuracyTier::Eval => 2.0,
            AccuracyTier::Train => 1.25,
        }
    }

    pub fn kernel_width(self) -> usize {
        match self {
            AccuracyTier::Eval => 6,
            AccuracyTier::Train => 4,
        }
    }
}

/// Precomputed interpolation state for a fixed set of sample locations.
#[derive(Debug, Clone)]
pub struct NufftPlan {
    omega: Array2<f64>,
    matrix_size: Vec<usize>,
    grid_size: Vec<usize>,
    oversampling: f64,
    kernel: KbKernel,
    /// Per-dimension deapodization table, indexed by image index.
    deapod: Vec<Vec<f64>>,
    fft: FftN,
    tier: AccuracyTier,
}

impl NufftPlan {
    /// Plan for a trajectory; samples are flattened shot-major
    /// (`m = shot * Nfe + readout_index`).
    pub fn from_trajectory(traj: &Trajectory, tier: AccuracyTier) -> Result<Self> {
        Self::from_omega(flatten_trajectory(traj), traj.matrix_size.clone(), tier)
    }

    pub fn from_omega(
        omega: Array2<f64>,
        matrix_size: Vec<usize>,
        tier: AccuracyTier,
    ) -> Result<Self> {
        Self::with_params(omega, matrix_size, tier.oversampling(), tier.kernel_width(), tier)
    }

    pub fn with_params(
        omega: Array2<f64>,
        matrix_size: Vec<usize>,
        oversampling: f64,
        width: usize,
        tier: AccuracyTier,
    ) -> Result<Self> {
        let nd = matrix_size.len();
        if omega.shape()[1] != nd {
            return Err(Error::ShapeMismatch(format!(
                "omega has {} dims, matrix has {}",
                omega.shape()[1],
                nd
            )));
        }
        if !(oversampling >= 1.0) {
            return Err(Error::InvalidParameter("oversampling must be >= 1".into()));
        }
        if width < 2 {
            return Err(Error::InvalidParameter("kernel width must be >= 2".into()));
        }
        let grid_size: Vec<usize> = matrix_size
            .iter()
            .map(|&n| {
                let g = (oversampling * n as f64).ceil() as usize;
                let g = g.max(n).max(width + 1);
                g + (g & 1) // round up to even
            })
            .collect();
        let kernel = KbKernel::new(oversampling, width);
        let deapod = matrix_size
            .iter()
            .zip(grid_size.iter())
            .map(|(&n, &ng)| {
                (0..n)
                    .map(|i| kernel.transform(centered_coord(i, n) / ng as f64))
                    .collect::<Vec<f64>>()
            })
            .collect();
        let fft = FftN::new(&grid_size);
        Ok(Self { omega, matrix_size, grid_size, oversampling, kernel, deapod, fft, tier })
    }

    pub fn n_samples(&self) -> usize {
        self.omega.shape()[0]
    }

    pub fn n_dims(&self) -> usize {
        self.matrix_size.len()
    }

    pub fn matrix_size(&self) -> &[usize] {
        &self.matrix_size
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn tier(&self) -> AccuracyTier {
        self.tier
    }

    pub fn oversampling(&self) -> f64 {
        self.oversampling
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel.width
    }

    fn check_image(&self, x: &ArrayD<Complex64>) -> Result<()> {
        if x.shape() != self.matrix_size.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "image dims {:?} vs plan matrix {:?}",
                x.shape(),
                self.matrix_size
            )));
        }
        Ok(())
    }

    /// Type-2 NUFFT: image to non-uniform samples.
    pub fn forward(&self, x: &ArrayD<Complex64>) -> Result<Vec<Complex64>> {
        self.check_image(x)?;
        let mut grid = ArrayD::<Complex64>::zeros(IxDyn(&self.grid_size));
        self.embed(x, &mut grid);
        self.fft.forward(&mut grid);
        let mut y = vec![Complex64::default(); self.n_samples()];
        let mut interp = InterpIndex::new(self);
        for (m, out) in y.iter_mut().enumerate() {
            interp.locate(self, m);
            *out = interp.gather(&grid);
        }
        Ok(y)
    }

    /// Type-1 (adjoint) NUFFT: non-uniform samples to image; exact
    /// conjugate transpose of [`Self::forward`].
    pub fn adjoint(&self, y: &[Complex64]) -> Result<ArrayD<Complex64>> {
        if y.len() != self.n_samples() {
            return Err(Error::ShapeMismatch(format!(
                "sample vector length {} vs plan {}",
                y.len(),
                self.n_samples()
            )));
        }
        let mut grid = ArrayD::<Complex64>::zeros(IxDyn(&self.grid_size));
        let mut interp = InterpIndex::new(self);
        for (m, &v) in y.iter().enumerate() {
            if v == Complex64::default() {
                continue;
            }
            interp.locate(self, m);
            interp.scatter(&mut grid, v);
        }
        self.fft.inverse(&mut grid);
        let mut x = ArrayD::<Complex64>::zeros(IxDyn(&self.matrix_size));
        self.extract(&grid, &mut x);
        Ok(x)
    }

    /// Places the deapodized image at wrapped centered coordinates of
    /// the oversampled grid.
    fn embed(&self, x: &ArrayD<Complex64>, grid: &mut ArrayD<Complex64>) {
        let nd = self.n_dims();
        let mut pos = vec![0usize; nd];
        for (idx, &v) in x.indexed_iter() {
            let mut w = 1.0;
            for d in 0..nd {
                let r = centered_coord(idx[d], self.matrix_size[d]) as i64;
                pos[d] = r.rem_euclid(self.grid_size[d] as i64) as usize;
                w *= self.deapod[d][idx[d]];
            }
            grid[IxDyn(&pos)] = v / w;
        }
    }

    fn extract(&self, grid: &ArrayD<Complex64>, x: &mut ArrayD<Complex64>) {
        let nd = self.n_dims();
        let mut pos = vec![0usize; nd];
        for (idx, v) in x.indexed_iter_mut() {
            let mut w = 1.0;
            for d in 0..nd {
                let r = centered_coord(idx[d], self.matrix_size[d]) as i64;
                pos[d] = r.rem_euclid(self.grid_size[d] as i64) as usize;
                w *= self.deapod[d][idx[d]];
            }
            *v = grid[IxDyn(&pos)] / w;
        }
    }
}

/// Converts `[Nfe, Ns, Nd]` samples to the flat `[M, Nd]` plan layout,
/// shot-major.
pub fn flatten_trajectory(traj: &Trajectory) -> Array2<f64> {
    let (nfe, ns, nd) = (traj.n_readout(), traj.n_shots(), traj.n_dims());
    let mut omega = Array2::zeros((nfe * ns, nd));
    for i in 0..ns {
        for j in 0..nfe {
            for d in 0..nd {
                omega[[i * nfe + j, d]] = traj.samples[[j, i, d]];
            }
        }
    }
    omega
}

/// Scatter/gather workspace: per-dimension wrapped grid indices and
/// kernel weights for one sample location.
struct InterpIndex {
    width: usize,
    idx: Vec<Vec<usize>>,
    wts: Vec<Vec<f64>>,
}

impl InterpIndex {
    fn new(plan: &NufftPlan) -> Self {
        let nd = plan.n_dims();
        let w = plan.kernel.width;
        Self {
            width: w,
            idx: vec![vec![0; w]; nd],
            wts: vec![vec![0.0; w]; nd],
        }
    }

    fn locate(&mut self, plan: &NufftPlan, m: usize) {
        let half = self.width as f64 / 2.0;
        for d in 0..plan.n_dims() {
            let ng = plan.grid_size[d];
            let kappa = plan.omega[[m, d]] * ng as f64 / TWO_PI;
            let base = (kappa - half).ceil() as i64;
            for j in 0..self.width {
                let k = base + j as i64;
                self.idx[d][j] = k.rem_euclid(ng as i64) as usize;
                self.wts[d][j] = plan.kernel.eval(kappa - k as f64);
            }
        }
    }

    fn gather(&self, grid: &ArrayD<Complex64>) -> Complex64 {
        let mut acc = Complex64::default();
        match self.idx.len() {
            1 => {
                for a in 0..self.width {
                    acc += grid[IxDyn(&[self.idx[0][a]])] * self.wts[0][a];
                }
            }
            2 => {
                for a in 0..self.width {
                    let wa = self.wts[0][a];
                    for b in 0..self.width {
                        acc += grid[[self.idx[0][a], self.idx[1][b]]] * (wa * self.wts[1][b]);
                    }
                }
            }
            3 => {
                for a in 0..self.width {
                    let wa = self.wts[0][a];
                    for b in 0..self.width {
                        let wab = wa * self.wts[1][b];
                        for c in 0..self.width {
                            acc += grid[[self.idx[0][a], self.idx[1][b], self.idx[2][c]]]
                                * (wab * self.wts[2][c]);
                        }
                    }
                }
            }
            nd => unreachable!("unsupported dimensionality {nd}"),
        }
        acc
    }

    fn scatter(&self, grid: &mut ArrayD<Complex64>, v: Complex64) {
        match self.idx.len() {
            1 => {
                for a in 0..self.width {
                    grid[IxDyn(&[self.idx[0][a]])] += v * self.wts[0][a];
                }
            }
            2 => {
                for a in 0..self.width {
                    let wa = self.wts[0][a];
                    for b in 0..self.width {
                        grid[[self.idx[0][a], self.idx[1][b]]] += v * (wa * self.wts[1][b]);
                    }
                }
            }
            3 => {
                for a in 0..self.width {
                    let wa = self.wts[0][a];
                    for b in 0..self.width {
                        let wab = wa * self.wts[1][b];
                        for c in 0..self.width {
                            grid[[self.idx[0][a], self.idx[1][b], self.idx[2][c]]] +=
                                v * (wab * self.wts[2][c]);
                        }
                    }
                }
            }
            nd => unreachable!("unsupported dimensionality {nd}"),
        }
    }
}
