//! Non-uniform Fourier system model `A(omega)`: gridding NUFFT,
//! adjoint, Toeplitz-embedded normal operator, exact-DFT reference, and
//! analytic Jacobians with respect to the sample locations.

pub mod dft;
mod fftn;
mod jacobian;
mod kernel;
mod plan;
mod toeplitz;

pub use fftn::FftN;
pub use jacobian::{
    accum_adjoint_stage, accum_forward_stage, coord_weighted, jacobian_forward_apply,
};
pub use kernel::{bessel_i0, kb_beta, KbKernel};
pub use plan::{flatten_trajectory, AccuracyTier, NufftPlan};
pub use toeplitz::ToeplitzKernel;

use ndarray::{Array2, ArrayD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::core::SenseMaps;
use crate::{Error, Result};

/// Simulated measurement noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    None,
    /// Standard deviation as a fraction of `max |Ax|`.
    Relative(f64),
    /// Absolute standard deviation per real/imaginary component.
    Absolute(f64),
}

impl Default for NoiseLevel {
    fn default() -> Self {
        NoiseLevel::Relative(0.01)
    }
}

/// Multi-coil forward model: per coil `y_c = A(s_c .* x)`, with `s_c = 1`
/// when no sensitivity maps are attached.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub plan: NufftPlan,
    pub sense: Option<SenseMaps>,
    pub noise: NoiseLevel,
}

impl SystemModel {
    pub fn new(plan: NufftPlan, sense: Option<SenseMaps>, noise: NoiseLevel) -> Result<Self> {
        if let Some(s) = &sense {
            if s.spatial_dims() != plan.matrix_size() {
                return Err(Error::ShapeMismatch(format!(
                    "sense maps spatial dims {:?} vs plan matrix {:?}",
                    s.spatial_dims(),
                    plan.matrix_size()
                )));
            }
        }
        Ok(Self { plan, sense, noise })
    }

    pub fn n_coils(&self) -> usize {
        self.sense.as_ref().map_or(1, |s| s.n_coils())
    }

    /// Image for coil `c` as seen by the NUFFT: `s_c .* x`.
    pub fn coil_image(&self, x: &ArrayD<Complex64>, c: usize) -> ArrayD<Complex64> {
        match &self.sense {
            None => x.clone(),
            Some(s) => {
                let map = s.maps.index_axis(ndarray::Axis(0), c);
                let mut out = x.clone();
                for (o, m) in out.iter_mut().zip(map.iter()) {
                    *o *= *m;
                }
                out
            }
        }
    }

    /// `y[[c, m]] = [A(s_c .* x)][m]`.
    pub fn forward(&self, x: &ArrayD<Complex64>) -> Result<Array2<Complex64>> {
        let nc = self.n_coils();
        let m = self.plan.n_samples();
        let mut y = Array2::zeros((nc, m));
        for c in 0..nc {
            let xc = self.coil_image(x, c);
            let yc = self.plan.forward(&xc)?;
            for (j, v) in yc.into_iter().enumerate() {
                y[[c, j]] = v;
            }
        }
        Ok(y)
    }

    /// `x = sum_c conj(s_c) .* A'(y_c)`.
    pub fn adjoint(&self, y: &Array2<Complex64>) -> Result<ArrayD<Complex64>> {
        let nc = self.n_coils();
        if y.shape() != [nc, self.plan.n_samples()] {
            return Err(Error::ShapeMismatch(format!(
                "samples shape {:?} vs expected [{}, {}]",
                y.shape(),
                nc,
                self.plan.n_samples()
            )));
        }
        let mut out: Option<ArrayD<Complex64>> = None;
        for c in 0..nc {
            let yc: Vec<Complex64> = y.row(c).to_vec();
            let mut xc = self.plan.adjoint(&yc)?;
            if let Some(s) = &self.sense {
                let map = s.maps.index_axis(ndarray::Axis(0), c);
                for (v, m) in xc.iter_mut().zip(map.iter()) {
                    *v *= m.conj();
                }
            }
            out = Some(match out {
                None => xc,
                Some(mut acc) => {
                    acc += &xc;
                    acc
                }
            });
        }
        Ok(out.expect("at least one coil"))
    }

    /// Forward model plus circularly-symmetric complex Gaussian noise.
    pub fn simulate<R: Rng>(&self, x: &ArrayD<Complex64>, rng: &mut R) -> Result<Array2<Complex64>> {
        let mut y = self.forward(x)?;
        let sigma = match self.noise {
            NoiseLevel::None => return Ok(y),
            NoiseLevel::Absolute(s) => s,
            NoiseLevel::Relative(rel) => {
                let peak = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
                rel * peak
            }
        };
        if sigma > 0.0 {
            let dist = Normal::new(0.0, sigma).expect("valid sigma");
            for v in y.iter_mut() {
                *v += Complex64::new(dist.sample(rng), dist.sample(rng));
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nufft::dft::{dft_adjoint, dft_forward};
    use ndarray::{IxDyn, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_image(rng: &mut ChaCha8Rng, dims: &[usize]) -> ArrayD<Complex64> {
        let mut x = ArrayD::<Complex64>::zeros(IxDyn(dims));
        for v in x.iter_mut() {
            *v = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        x
    }

    fn rand_omega(rng: &mut ChaCha8Rng, m: usize, nd: usize) -> Array2<f64> {
        let mut om = Array2::zeros((m, nd));
        for v in om.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 2.0 * std::f64::consts::PI * 0.999;
        }
        om
    }

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn forward_zero_omega_sums_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_image(&mut rng, &[8, 8]);
        let om = Array2::zeros((5, 2));
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let y = plan.forward(&x).unwrap();
        let total: Complex64 = x.iter().sum();
        for v in &y {
            assert!((v - total).norm() < 1e-4 * total.norm().max(1.0), "{v} vs {total}");
        }
    }

    #[test]
    fn forward_center_impulse_gives_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = ArrayD::<Complex64>::zeros(IxDyn(&[8, 8]));
        x[[4, 4]] = Complex64::new(1.0, 0.0); // centered coord (0, 0)
        let om = rand_omega(&mut rng, 16, 2);
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let y = plan.forward(&x).unwrap();
        for v in &y {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-4, "{v}");
        }
    }

    #[test]
    fn forward_matches_dft_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_image(&mut rng, &[8, 8]);
        let om = rand_omega(&mut rng, 32, 2);
        let plan = NufftPlan::from_omega(om.clone(), vec![8, 8], AccuracyTier::Eval).unwrap();
        let y = plan.forward(&x).unwrap();
        let y_ref = dft_forward(&om, &x);
        assert!(rel_l2(&y, &y_ref) < 1e-4, "rel err {}", rel_l2(&y, &y_ref));
    }

    #[test]
    fn train_tier_is_coarser_but_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_image(&mut rng, &[16, 16]);
        let om = rand_omega(&mut rng, 64, 2);
        let plan = NufftPlan::from_omega(om.clone(), vec![16, 16], AccuracyTier::Train).unwrap();
        let y = plan.forward(&x).unwrap();
        let y_ref = dft_forward(&om, &x);
        assert!(rel_l2(&y, &y_ref) < 1e-2, "rel err {}", rel_l2(&y, &y_ref));
    }

    #[test]
    fn adjoint_dot_product_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_image(&mut rng, &[12, 10]);
        let om = rand_omega(&mut rng, 40, 2);
        let plan = NufftPlan::from_omega(om, vec![12, 10], AccuracyTier::Eval).unwrap();
        let y: Vec<Complex64> =
            (0..40).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let ax = plan.forward(&x).unwrap();
        let aty = plan.adjoint(&y).unwrap();
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(aty.iter()).map(|(a, b)| a * b.conj()).sum();
        let scale = ax.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
            * y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((lhs - rhs).norm() / scale < 1e-4, "adjoint mismatch {}", (lhs - rhs).norm() / scale);
    }

    #[test]
    fn adjoint_zero_omega_ones_gives_constant() {
        let om = Array2::zeros((7, 2));
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let y = vec![Complex64::new(1.0, 0.0); 7];
        let x = plan.adjoint(&y).unwrap();
        for v in x.iter() {
            assert!((v - Complex64::new(7.0, 0.0)).norm() < 1e-3, "{v}");
        }
    }

    #[test]
    fn adjoint_single_zero_sample_gives_ones() {
        let om = Array2::zeros((1, 2));
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let x = plan.adjoint(&[Complex64::new(1.0, 0.0)]).unwrap();
        for v in x.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-4, "{v}");
        }
    }

    #[test]
    fn toeplitz_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let om = rand_omega(&mut rng, 48, 2);
        let plan = NufftPlan::from_omega(om, vec![12, 12], AccuracyTier::Eval).unwrap();
        let toep = ToeplitzKernel::new(&plan).unwrap();
        for _ in 0..5 {
            let x = rand_image(&mut rng, &[12, 12]);
            let composed = plan.adjoint(&plan.forward(&x).unwrap()).unwrap();
            let direct = toep.apply(&x).unwrap();
            let err = rel_l2(
                &direct.iter().cloned().collect::<Vec<_>>(),
                &composed.iter().cloned().collect::<Vec<_>>(),
            );
            assert!(err < 1e-3, "toeplitz rel err {err}");
        }
    }

    #[test]
    fn toeplitz_zero_and_rank_one_cases() {
        let om = Array2::zeros((1, 2));
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let toep = ToeplitzKernel::new(&plan).unwrap();
        let zero = ArrayD::<Complex64>::zeros(IxDyn(&[8, 8]));
        let out = toep.apply(&zero).unwrap();
        assert!(out.iter().all(|v| v.norm() < 1e-12));
        // single sample at omega = 0: A'A x = (sum x) * ones
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_image(&mut rng, &[8, 8]);
        let total: Complex64 = x.iter().sum();
        let out = toep.apply(&x).unwrap();
        for v in out.iter() {
            assert!((v - total).norm() < 1e-3 * total.norm().max(1.0), "{v} vs {total}");
        }
    }

    #[test]
    fn jacobian_center_impulse_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = ArrayD::<Complex64>::zeros(IxDyn(&[8, 8]));
        x[[4, 4]] = Complex64::new(2.0, -1.0);
        let om = rand_omega(&mut rng, 16, 2);
        let plan = NufftPlan::from_omega(om, vec![8, 8], AccuracyTier::Eval).unwrap();
        let v = vec![Complex64::new(1.0, 1.0); 16];
        for d in 0..2 {
            let g = jacobian_forward_apply(&plan, &x, d, &v).unwrap();
            assert!(g.iter().all(|&gi| gi.abs() < 1e-6), "grad not ~0: {g:?}");
        }
    }

    #[test]
    fn jacobian_matches_1d_closed_form() {
        // single 1D sample: d/domega sum_n x_n e^{-i omega n} = -i sum_n n x_n e^{-i omega n}
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = rand_image(&mut rng, &[16]);
        let omega = 0.7f64;
        let mut om = Array2::zeros((1, 1));
        om[[0, 0]] = omega;
        let plan = NufftPlan::from_omega(om, vec![16], AccuracyTier::Eval).unwrap();
        let mut closed = Complex64::default();
        for (n, &v) in x.iter().enumerate() {
            let r = dft::centered_coord(n, 16);
            closed += Complex64::new(0.0, -1.0) * r * v * Complex64::from_polar(1.0, -omega * r);
        }
        let v = vec![Complex64::new(1.0, 0.0)];
        let g = jacobian_forward_apply(&plan, &x, 0, &v).unwrap();
        // dL = Re(conj(v) * dy): with v = 1 this is Re(closed)
        assert!((g[0] - closed.re).abs() < 1e-4 * closed.norm().max(1.0), "{} vs {}", g[0], closed.re);
    }

    #[test]
    fn jacobian_matches_finite_differences_on_quadratic_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dims = vec![16usize, 16];
        let x = rand_image(&mut rng, &dims);
        let m = 32;
        let om = rand_omega(&mut rng, m, 2);
        let y0: Vec<Complex64> =
            (0..m).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let loss = |omega: &Array2<f64>| -> f64 {
            let plan = NufftPlan::from_omega(omega.clone(), dims.clone(), AccuracyTier::Eval).unwrap();
            let y = plan.forward(&x).unwrap();
            y.iter().zip(&y0).map(|(a, b)| (a - b).norm_sqr()).sum()
        };
        let plan = NufftPlan::from_omega(om.clone(), dims.clone(), AccuracyTier::Eval).unwrap();
        let y = plan.forward(&x).unwrap();
        let v: Vec<Complex64> = y.iter().zip(&y0).map(|(a, b)| 2.0 * (a - b)).collect();
        let mut grad = Array2::zeros((m, 2));
        accum_forward_stage(&plan, &x, &v, &mut grad).unwrap();
        let delta = 1e-5;
        for &(mi, d) in &[(0usize, 0usize), (3, 1), (7, 0), (12, 1), (20, 0), (31, 1)] {
            let mut op = om.clone();
            op[[mi, d]] += delta;
            let mut omn = om.clone();
            omn[[mi, d]] -= delta;
            let fd = (loss(&op) - loss(&omn)) / (2.0 * delta);
            let an = grad[[mi, d]];
            assert!(
                (fd - an).abs() <= 1e-3 * fd.abs().max(1e-6),
                "sample {mi} dim {d}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn multicoil_ones_maps_equals_single_coil() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = vec![8usize, 8];
        let x = rand_image(&mut rng, &dims);
        let om = rand_omega(&mut rng, 24, 2);
        let plan = NufftPlan::from_omega(om, dims.clone(), AccuracyTier::Eval).unwrap();
        let single = SystemModel::new(plan.clone(), None, NoiseLevel::None).unwrap();
        let maps = ArrayD::from_elem(IxDyn(&[3, 8, 8]), Complex64::new(1.0, 0.0));
        let multi =
            SystemModel::new(plan, Some(SenseMaps::new(maps).unwrap()), NoiseLevel::None).unwrap();
        let ys = single.forward(&x).unwrap();
        let ym = multi.forward(&x).unwrap();
        for c in 0..3 {
            for j in 0..24 {
                assert!((ym[[c, j]] - ys[[0, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dft_oracles_are_mutually_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = rand_image(&mut rng, &[6, 5]);
        let om = rand_omega(&mut rng, 11, 2);
        let y: Vec<Complex64> =
            (0..11).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let ax = dft_forward(&om, &x);
        let aty = dft_adjoint(&om, &y, &[6, 5]);
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(aty.iter()).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }
}
