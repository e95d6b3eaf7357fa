//! Freeform trajectory parameterization on a uniform quadratic B-spline
//! basis: `omega = B c`, with the transpose contraction for backprop and
//! least-squares projection for multi-level refinement.

use ndarray::{Array2, Array3};
use nalgebra::DMatrix;

use crate::core::Trajectory;
use crate::{Error, Result};

/// Uniform quadratic B-spline evaluated on `[0, 3)`.
#[inline]
pub fn quad_bspline(u: f64) -> f64 {
    if u <= 0.0 || u >= 3.0 {
        0.0
    } else if u < 1.0 {
        0.5 * u * u
    } else if u < 2.0 {
        0.5 * (-2.0 * u * u + 6.0 * u - 3.0)
    } else {
        0.5 * (3.0 - u) * (3.0 - u)
    }
}

/// Dense sampled basis `B[t, k]` for `Nfe` time samples with knot
/// spacing `width` time samples. Columns are shifted dilated quadratic
/// B-splines; rows sum to 1 (partition of unity).
#[derive(Debug, Clone)]
pub struct BsplineBasis {
    pub n_time: usize,
    pub width: usize,
    matrix: Array2<f64>,
}

impl BsplineBasis {
    pub fn new(n_time: usize, width: usize) -> Result<Self> {
        if width == 0 || n_time < 2 {
            return Err(Error::InvalidParameter(
                "basis needs width >= 1 and at least 2 time samples".into(),
            ));
        }
        let umax = (n_time - 1) as f64 / width as f64;
        let n_coef = umax.floor() as usize + 3;
        let mut matrix = Array2::zeros((n_time, n_coef));
        for t in 0..n_time {
            let u = t as f64 / width as f64;
            for k in 0..n_coef {
                matrix[[t, k]] = quad_bspline(u - k as f64 + 2.0);
            }
        }
        Ok(Self { n_time, width, matrix })
    }

    pub fn n_coef(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// B-spline coefficients for every shot and dimension, optionally with
/// the first time sample pinned to a fixed k-space location (the
/// effective basis column `B[t,k] - B[0,k]` keeps the map linear).
#[derive(Debug, Clone)]
pub struct BsplineParam {
    pub basis: BsplineBasis,
    /// `[Ncoef, Ns, Nd]`.
    pub coef: Array3<f64>,
    /// Pinned first sample per shot/dimension, `[Ns, Nd]`.
    pub pin_first: Option<Array2<f64>>,
}

impl BsplineParam {
    pub fn new(
        basis: BsplineBasis,
        coef: Array3<f64>,
        pin_first: Option<Array2<f64>>,
    ) -> Result<Self> {
        if coef.shape()[0] != basis.n_coef() {
            return Err(Error::InvalidParameter(format!(
                "coefficient count {} inconsistent with basis ({} for width {} over {} samples)",
                coef.shape()[0],
                basis.n_coef(),
                basis.width,
                basis.n_time
            )));
        }
        if let Some(p) = &pin_first {
            if p.shape() != [coef.shape()[1], coef.shape()[2]] {
                return Err(Error::ShapeMismatch("pin_first shape vs coefficients".into()));
            }
        }
        Ok(Self { basis, coef, pin_first })
    }

    /// `omega[t,s,d] = sum_k B[t,k] c[k,s,d]` (plus pin correction).
    pub fn expand(&self) -> Array3<f64> {
        let (nt, nc) = (self.basis.n_time, self.basis.n_coef());
        let (ns, nd) = (self.coef.shape()[1], self.coef.shape()[2]);
        let b = self.basis.matrix();
        let mut omega = Array3::zeros((nt, ns, nd));
        for s in 0..ns {
            for d in 0..nd {
                for t in 0..nt {
                    let mut acc = 0.0;
                    for k in 0..nc {
                        let basis_tk = match &self.pin_first {
                            None => b[[t, k]],
                            Some(_) => b[[t, k]] - b[[0, k]],
                        };
                        acc += basis_tk * self.coef[[k, s, d]];
                    }
                    if let Some(p) = &self.pin_first {
                        acc += p[[s, d]];
                    }
                    omega[[t, s, d]] = acc;
                }
            }
        }
        omega
    }

    /// Transpose contraction: `grad_c = B^T grad_omega`.
    pub fn backprop(&self, grad_omega: &Array3<f64>) -> Result<Array3<f64>> {
        let (nt, nc) = (self.basis.n_time, self.basis.n_coef());
        let (ns, nd) = (self.coef.shape()[1], self.coef.shape()[2]);
        if grad_omega.shape() != [nt, ns, nd] {
            return Err(Error::ShapeMismatch(format!(
                "grad_omega shape {:?} vs [{nt}, {ns}, {nd}]",
                grad_omega.shape()
            )));
        }
        let b = self.basis.matrix();
        let mut grad_c = Array3::zeros((nc, ns, nd));
        for s in 0..ns {
            for d in 0..nd {
                for k in 0..nc {
                    let mut acc = 0.0;
                    for t in 0..nt {
                        let basis_tk = match &self.pin_first {
                            None => b[[t, k]],
                            Some(_) => b[[t, k]] - b[[0, k]],
                        };
                        acc += basis_tk * grad_omega[[t, s, d]];
                    }
                    grad_c[[k, s, d]] = acc;
                }
            }
        }
        Ok(grad_c)
    }

    /// Least-squares fit of coefficients to a target trajectory
    /// (multi-level refinement and initialization). Returns the
    /// parameterization and the max-abs projection residual.
    pub fn fit(
        basis: BsplineBasis,
        traj: &Trajectory,
        pin_first: bool,
    ) -> Result<(Self, f64)> {
        let (nt, ns, nd) = (traj.n_readout(), traj.n_shots(), traj.n_dims());
        if nt != basis.n_time {
            return Err(Error::ShapeMismatch(format!(
                "basis covers {} time samples, trajectory has {nt}",
                basis.n_time
            )));
        }
        let nc = basis.n_coef();
        let pin = if pin_first {
            let mut p = Array2::zeros((ns, nd));
            for s in 0..ns {
                for d in 0..nd {
                    p[[s, d]] = traj.samples[[0, s, d]];
                }
            }
            Some(p)
        } else {
            None
        };
        // effective basis (pin subtracts row 0)
        let bmat = basis.matrix();
        let mut beff = DMatrix::<f64>::zeros(nt, nc);
        for t in 0..nt {
            for k in 0..nc {
                beff[(t, k)] = match pin {
                    None => bmat[[t, k]],
                    Some(_) => bmat[[t, k]] - bmat[[0, k]],
                };
            }
        }
        let svd = beff.clone().svd(true, true);
        let mut coef = Array3::zeros((nc, ns, nd));
        let mut max_resid = 0.0f64;
        for s in 0..ns {
            for d in 0..nd {
                let mut rhs = nalgebra::DVector::<f64>::zeros(nt);
                for t in 0..nt {
                    let offset = pin.as_ref().map_or(0.0, |p| p[[s, d]]);
                    rhs[t] = traj.samples[[t, s, d]] - offset;
                }
                let sol = svd
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Numerical(format!("B-spline projection: {e}")))?;
                let resid = (&beff * &sol - &rhs).amax();
                max_resid = max_resid.max(resid);
                for k in 0..nc {
                    coef[[k, s, d]] = sol[k];
                }
            }
        }
        let param = Self::new(basis, coef, pin)?;
        Ok((param, max_resid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_of_unity() {
        let basis = BsplineBasis::new(40, 8).unwrap();
        for t in 0..40 {
            let row: f64 = (0..basis.n_coef()).map(|k| basis.matrix()[[t, k]]).sum();
            assert!((row - 1.0).abs() < 1e-12, "t={t}: sum {row}");
        }
    }

    #[test]
    fn constant_coefficients_give_constant_trajectory() {
        let basis = BsplineBasis::new(33, 8).unwrap();
        let nc = basis.n_coef();
        let coef = Array3::from_elem((nc, 2, 2), 0.37);
        let p = BsplineParam::new(basis, coef, None).unwrap();
        let omega = p.expand();
        for &v in omega.iter() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_coefficients_give_linear_trajectory() {
        let basis = BsplineBasis::new(64, 8).unwrap();
        let nc = basis.n_coef();
        let mut coef = Array3::zeros((nc, 1, 2));
        for k in 0..nc {
            coef[[k, 0, 0]] = 0.01 * k as f64 - 0.02;
        }
        let p = BsplineParam::new(basis, coef, None).unwrap();
        let omega = p.expand();
        // second difference of a linear sequence vanishes
        for t in 0..62 {
            let dd = omega[[t + 2, 0, 0]] - 2.0 * omega[[t + 1, 0, 0]] + omega[[t, 0, 0]];
            assert!(dd.abs() < 1e-12, "t={t}: {dd}");
        }
    }

    #[test]
    fn backprop_matches_dense_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = BsplineBasis::new(24, 4).unwrap();
        let nc = basis.n_coef();
        let coef = Array3::zeros((nc, 1, 2));
        let p = BsplineParam::new(basis, coef, None).unwrap();
        let mut g = Array3::zeros((24, 1, 2));
        for v in g.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let gc = p.backprop(&g).unwrap();
        for k in 0..nc {
            for d in 0..2 {
                let oracle: f64 =
                    (0..24).map(|t| p.basis.matrix()[[t, k]] * g[[t, 0, d]]).sum();
                assert!((gc[[k, 0, d]] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expansion_is_linear_and_adjoint_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = BsplineBasis::new(30, 6).unwrap();
        let nc = basis.n_coef();
        let rand_coef = |rng: &mut ChaCha8Rng| {
            let mut c = Array3::zeros((nc, 1, 2));
            for v in c.iter_mut() {
                *v = rng.gen::<f64>() - 0.5;
            }
            c
        };
        let c1 = rand_coef(&mut rng);
        let c2 = rand_coef(&mut rng);
        let (a, b) = (1.7, -0.4);
        let mk = |c: Array3<f64>| BsplineParam::new(BsplineBasis::new(30, 6).unwrap(), c, None).unwrap();
        let combo = mk(&c1 * a + &c2 * b).expand();
        let lin = mk(c1.clone()).expand() * a + mk(c2.clone()).expand() * b;
        for (x, y) in combo.iter().zip(lin.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // <expand(c), g> == <c, backprop(g)>
        let p = mk(c1.clone());
        let mut g = Array3::zeros((30, 1, 2));
        for v in g.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let lhs: f64 = p.expand().iter().zip(g.iter()).map(|(x, y)| x * y).sum();
        let rhs: f64 = c1.iter().zip(p.backprop(&g).unwrap().iter()).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn coarse_basis_range_nested_in_fine() {
        // a width-32-representable trajectory projects onto width 16 and 8
        // with negligible residual
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nt = 128;
        let coarse = BsplineBasis::new(nt, 32).unwrap();
        let mut coef = Array3::zeros((coarse.n_coef(), 1, 2));
        for v in coef.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let p = BsplineParam::new(coarse, coef, None).unwrap();
        let omega = p.expand();
        let traj = Trajectory::new(omega, vec![200.0, 200.0], vec![64, 64], 4e-6).unwrap();
        for w in [16usize, 8] {
            let basis = BsplineBasis::new(nt, w).unwrap();
            let (_, resid) = BsplineParam::fit(basis, &traj, false).unwrap();
            assert!(resid < 1e-10, "width {w}: residual {resid}");
        }
    }

    #[test]
    fn pinned_first_sample_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nt = 48;
        let mut omega = Array3::zeros((nt, 2, 2));
        for v in omega.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 2.0;
        }
        let traj = Trajectory::new(omega, vec![200.0, 200.0], vec![64, 64], 4e-6).unwrap();
        let basis = BsplineBasis::new(nt, 8).unwrap();
        let (p, _) = BsplineParam::fit(basis, &traj, true).unwrap();
        let expanded = p.expand();
        for s in 0..2 {
            for d in 0..2 {
                assert!(
                    (expanded[[0, s, d]] - traj.samples[[0, s, d]]).abs() < 1e-12,
                    "pin not exact"
                );
            }
        }
        // stays exact after perturbing coefficients
        let mut p2 = p.clone();
        for v in p2.coef.iter_mut() {
            *v += rng.gen::<f64>() - 0.5;
        }
        let e2 = p2.expand();
        for s in 0..2 {
            for d in 0..2 {
                assert!((e2[[0, s, d]] - traj.samples[[0, s, d]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inconsistent_coefficient_count_errors() {
        let basis = BsplineBasis::new(33, 8).unwrap();
        let coef = Array3::zeros((basis.n_coef() + 1, 1, 2));
        assert!(BsplineParam::new(basis, coef, None).is_err());
    }
}
