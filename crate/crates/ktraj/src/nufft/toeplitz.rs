//! Toeplitz embedding of the NUFFT normal operator: A'A applied with
//! two FFTs on a doubled grid and no gridding, after a one-time kernel
//! precomputation.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use super::dft::centered_coord;
use super::fftn::FftN;
use super::plan::NufftPlan;
use crate::Result;

#[derive(Debug, Clone)]
pub struct ToeplitzKernel {
    /// FFT of the embedding kernel on the 2x grid.
    kernel_hat: ArrayD<Complex64>,
    fft: FftN,
    matrix_size: Vec<usize>,
    double_size: Vec<usize>,
}

impl ToeplitzKernel {
    /// Precomputes the embedding kernel `t[n] = sum_m exp(i omega_m . n)`
    /// on the doubled grid via an adjoint NUFFT of all-ones samples.
    pub fn new(plan: &NufftPlan) -> Result<Self> {
        let matrix_size = plan.matrix_size().to_vec();
        let double_size: Vec<usize> = matrix_size.iter().map(|&n| 2 * n).collect();
        let double_plan = NufftPlan::with_params(
            plan.omega().clone(),
            double_size.clone(),
            plan.oversampling(),
            plan.kernel_width(),
            plan.tier(),
        )?;
        let ones = vec![Complex64::new(1.0, 0.0); plan.n_samples()];
        let t = double_plan.adjoint(&ones)?;
        // place t at wrapped centered coordinates, then transform
        let mut kernel_hat = ArrayD::<Complex64>::zeros(IxDyn(&double_size));
        let nd = matrix_size.len();
        let mut pos = vec![0usize; nd];
        for (idx, &v) in t.indexed_iter() {
            for d in 0..nd {
                let r = centered_coord(idx[d], double_size[d]) as i64;
                pos[d] = r.rem_euclid(double_size[d] as i64) as usize;
            }
            kernel_hat[IxDyn(&pos)] = v;
        }
        let fft = FftN::new(&double_size);
        fft.forward(&mut kernel_hat);
        Ok(Self { kernel_hat, fft, matrix_size, double_size })
    }

    /// Applies A'A to an image without any gridding interpolation.
    pub fn apply(&self, x: &ArrayD<Complex64>) -> Result<ArrayD<Complex64>> {
        if x.shape() != self.matrix_size.as_slice() {
            return Err(crate::Error::ShapeMismatch(format!(
                "image dims {:?} vs Toeplitz kernel {:?}",
                x.shape(),
                self.matrix_size
            )));
        }
        let nd = self.matrix_size.len();
        let mut grid = ArrayD::<Complex64>::zeros(IxDyn(&self.double_size));
        let mut pos = vec![0usize; nd];
        for (idx, &v) in x.indexed_iter() {
            for d in 0..nd {
                let r = centered_coord(idx[d], self.matrix_size[d]) as i64;
                pos[d] = r.rem_euclid(self.double_size[d] as i64) as usize;
            }
            grid[IxDyn(&pos)] = v;
        }
        self.fft.forward(&mut grid);
        grid *= &self.kernel_hat;
        self.fft.inverse(&mut grid);
        let scale = 1.0 / self.double_size.iter().product::<usize>() as f64;
        let mut out = ArrayD::<Complex64>::zeros(IxDyn(&self.matrix_size));
        for (idx, v) in out.indexed_iter_mut() {
            for d in 0..nd {
                let r = centered_coord(idx[d], self.matrix_size[d]) as i64;
                pos[d] = r.rem_euclid(self.double_size[d] as i64) as usize;
            }
            *v = grid[IxDyn(&pos)] * scale;
        }
        Ok(out)
    }
}
