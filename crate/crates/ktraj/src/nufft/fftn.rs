//! Multi-dimensional FFT on `ArrayD<Complex64>` built from 1D rustfft
//! plans applied along each axis.

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Per-axis FFT plans for a fixed n-dimensional shape.
#[derive(Clone)]
pub struct FftN {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftN {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftN").field("shape", &self.shape).finish()
    }
}

impl FftN {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Forward))
            .collect();
        let inverse = shape
            .iter()
            .map(|&n| planner.plan_fft(n, FftDirection::Inverse))
            .collect();
        Self { shape: shape.to_vec(), forward, inverse }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Unnormalized forward transform (kernel `e^{-i 2 pi k n / N}`), in place.
    pub fn forward(&self, data: &mut ArrayD<Complex64>) {
        self.run(data, true);
    }

    /// Unnormalized inverse transform (kernel `e^{+i 2 pi k n / N}`), in place.
    /// Note: no 1/N scaling is applied.
    pub fn inverse(&self, data: &mut ArrayD<Complex64>) {
        self.run(data, false);
    }

    fn run(&self, data: &mut ArrayD<Complex64>, fwd: bool) {
        assert_eq!(data.shape(), self.shape.as_slice(), "FFT shape mismatch");
        for ax in 0..self.shape.len() {
            let fft = if fwd { &self.forward[ax] } else { &self.inverse[ax] };
            let n = self.shape[ax];
            let mut buf = vec![Complex64::default(); n];
            for mut lane in data.lanes_mut(Axis(ax)) {
                for (b, v) in buf.iter_mut().zip(lane.iter()) {
                    *b = *v;
                }
                fft.process(&mut buf);
                for (v, b) in lane.iter_mut().zip(buf.iter()) {
                    *v = *b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn matches_direct_dft_2d() {
        let shape = [4usize, 6usize];
        let mut data = ArrayD::<Complex64>::zeros(IxDyn(&shape));
        let mut seed = 1234567u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for v in data.iter_mut() {
            *v = Complex64::new(rnd(), rnd());
        }
        let orig = data.clone();
        let fft = FftN::new(&shape);
        fft.forward(&mut data);
        // direct check at a few bins
        for &(k0, k1) in &[(0usize, 0usize), (1, 2), (3, 5)] {
            let mut acc = Complex64::default();
            for n0 in 0..shape[0] {
                for n1 in 0..shape[1] {
                    let ph = -2.0
                        * std::f64::consts::PI
                        * (k0 as f64 * n0 as f64 / shape[0] as f64
                            + k1 as f64 * n1 as f64 / shape[1] as f64);
                    acc += orig[[n0, n1]] * Complex64::from_polar(1.0, ph);
                }
            }
            let got = data[[k0, k1]];
            assert!((got - acc).norm() < 1e-10, "bin ({k0},{k1}): {got} vs {acc}");
        }
        // round trip with manual normalization
        fft.inverse(&mut data);
        let scale = (shape[0] * shape[1]) as f64;
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a / scale - b).norm() < 1e-12);
        }
    }
}
