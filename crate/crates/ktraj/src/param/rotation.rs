//! Attribute parameterization: per-shot rotations of fixed base shots,
//! with analytic angle derivatives.

use ndarray::{Array2, Array3};

use crate::core::Trajectory;
use crate::{Error, Result};

/// Which rotation family the angles parameterize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationAxis {
    /// One angle per shot rotating dimensions (0, 1); dimension 2 (if
    /// any) is untouched. Stack-of-stars style.
    InPlaneZ,
    /// Three ZYZ Euler angles per shot; requires 3D trajectories.
    Full3d,
}

impl RotationAxis {
    pub fn angles_per_shot(self) -> usize {
        match self {
            RotationAxis::InPlaneZ => 1,
            RotationAxis::Full3d => 3,
        }
    }
}

/// Rotation angles applied per shot to a base trajectory.
#[derive(Debug, Clone)]
pub struct RotationParam {
    pub base: Trajectory,
    pub axis: RotationAxis,
    /// `[Ns, angles_per_shot]`.
    pub angles: Array2<f64>,
}

fn rot_z(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn rot_y(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn drot_z(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]
}

fn drot_y(t: f64) -> [[f64; 3]; 3] {
    let (s, c) = t.sin_cos();
    [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

impl RotationParam {
    pub fn new(base: Trajectory, axis: RotationAxis, angles: Array2<f64>) -> Result<Self> {
        if angles.shape() != [base.n_shots(), axis.angles_per_shot()] {
            return Err(Error::ShapeMismatch(format!(
                "angles shape {:?} vs [{}, {}]",
                angles.shape(),
                base.n_shots(),
                axis.angles_per_shot()
            )));
        }
        if axis == RotationAxis::Full3d && base.n_dims() != 3 {
            return Err(Error::InvalidParameter("Full3d rotation needs a 3D trajectory".into()));
        }
        Ok(Self { base, axis, angles })
    }

    /// Per-shot rotation matrix and its derivative w.r.t. each angle.
    fn matrices(&self, shot: usize) -> ([[f64; 3]; 3], Vec<[[f64; 3]; 3]>) {
        match self.axis {
            RotationAxis::InPlaneZ => {
                let t = self.angles[[shot, 0]];
                (rot_z(t), vec![drot_z(t)])
            }
            RotationAxis::Full3d => {
                let (a, b, g) = (
                    self.angles[[shot, 0]],
                    self.angles[[shot, 1]],
                    self.angles[[shot, 2]],
                );
                let r = matmul(&rot_z(a), &matmul(&rot_y(b), &rot_z(g)));
                let da = matmul(&drot_z(a), &matmul(&rot_y(b), &rot_z(g)));
                let db = matmul(&rot_z(a), &matmul(&drot_y(b), &rot_z(g)));
                let dg = matmul(&rot_z(a), &matmul(&rot_y(b), &drot_z(g)));
                (r, vec![da, db, dg])
            }
        }
    }

    /// `shot_i = R(c_i) . base_shot_i` samplewise.
    pub fn expand(&self) -> Trajectory {
        let (nfe, ns, nd) = (self.base.n_readout(), self.base.n_shots(), self.base.n_dims());
        let mut out = Array3::zeros((nfe, ns, nd));
        for i in 0..ns {
            let (r, _) = self.matrices(i);
            for j in 0..nfe {
                let mut v = [0.0f64; 3];
                for d in 0..nd {
                    v[d] = self.base.samples[[j, i, d]];
                }
                for d in 0..nd {
                    out[[j, i, d]] = (0..3).map(|k| r[d][k] * v[k]).sum();
                }
            }
        }
        self.base.with_samples(out)
    }

    /// Gradient of a loss w.r.t. the angles given its gradient w.r.t.
    /// the expanded trajectory samples.
    pub fn backprop(&self, grad_omega: &Array3<f64>) -> Result<Array2<f64>> {
        let (nfe, ns, nd) = (self.base.n_readout(), self.base.n_shots(), self.base.n_dims());
        if grad_omega.shape() != [nfe, ns, nd] {
            return Err(Error::ShapeMismatch("grad_omega vs base trajectory".into()));
        }
        let mut grad = Array2::zeros(self.angles.raw_dim());
        for i in 0..ns {
            let (_, derivs) = self.matrices(i);
            for (a, dr) in derivs.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..nfe {
                    let mut v = [0.0f64; 3];
                    for d in 0..nd {
                        v[d] = self.base.samples[[j, i, d]];
                    }
                    for d in 0..nd {
                        let dv: f64 = (0..3).map(|k| dr[d][k] * v[k]).sum();
                        acc += grad_omega[[j, i, d]] * dv;
                    }
                }
                grad[[i, a]] = acc;
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base_2d(rng: &mut ChaCha8Rng, ns: usize) -> Trajectory {
        let mut s = Array3::zeros((12, ns, 2));
        for v in s.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 2.0;
        }
        Trajectory::new(s, vec![200.0, 200.0], vec![64, 64], 4e-6).unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = base_2d(&mut rng, 3);
        let p = RotationParam::new(base.clone(), RotationAxis::InPlaneZ, Array2::zeros((3, 1)))
            .unwrap();
        let out = p.expand();
        for (a, b) in out.samples.iter().zip(base.samples.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn quarter_turn_maps_kx_to_ky() {
        let mut s = Array3::zeros((2, 1, 2));
        s[[0, 0, 0]] = -1.0;
        s[[1, 0, 0]] = 1.0;
        let base = Trajectory::new(s, vec![200.0, 200.0], vec![64, 64], 4e-6).unwrap();
        let mut angles = Array2::zeros((1, 1));
        angles[[0, 0]] = std::f64::consts::FRAC_PI_2;
        let p = RotationParam::new(base, RotationAxis::InPlaneZ, angles).unwrap();
        let out = p.expand();
        assert!(out.samples[[1, 0, 0]].abs() < 1e-15);
        assert!((out.samples[[1, 0, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_preserves_sample_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = base_2d(&mut rng, 2);
        let mut angles = Array2::zeros((2, 1));
        angles[[0, 0]] = 0.83;
        angles[[1, 0]] = -2.11;
        let p = RotationParam::new(base.clone(), RotationAxis::InPlaneZ, angles).unwrap();
        let out = p.expand();
        for i in 0..2 {
            for j in 0..12 {
                let r0 = (base.samples[[j, i, 0]].powi(2) + base.samples[[j, i, 1]].powi(2)).sqrt();
                let r1 = (out.samples[[j, i, 0]].powi(2) + out.samples[[j, i, 1]].powi(2)).sqrt();
                assert!((r0 - r1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn angle_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for axis in [RotationAxis::InPlaneZ, RotationAxis::Full3d] {
            let nd = if axis == RotationAxis::Full3d { 3 } else { 2 };
            let mut s = Array3::zeros((8, 2, nd));
            for v in s.iter_mut() {
                *v = (rng.gen::<f64>() - 0.5) * 2.0;
            }
            let base =
                Trajectory::new(s, vec![200.0; nd], vec![64; nd], 4e-6).unwrap();
            let mut angles = Array2::zeros((2, axis.angles_per_shot()));
            for v in angles.iter_mut() {
                *v = (rng.gen::<f64>() - 0.5) * 3.0;
            }
            let mut g = Array3::zeros((8, 2, nd));
            for v in g.iter_mut() {
                *v = rng.gen::<f64>() - 0.5;
            }
            // synthetic loss L = <g, omega(c)>
            let p = RotationParam::new(base.clone(), axis, angles.clone()).unwrap();
            let ga = p.backprop(&g).unwrap();
            let delta = 1e-7;
            for i in 0..2 {
                for a in 0..axis.angles_per_shot() {
                    let mut ap = angles.clone();
                    ap[[i, a]] += delta;
                    let lp: f64 = RotationParam::new(base.clone(), axis, ap)
                        .unwrap()
                        .expand()
                        .samples
                        .iter()
                        .zip(g.iter())
                        .map(|(x, y)| x * y)
                        .sum();
                    let mut an = angles.clone();
                    an[[i, a]] -= delta;
                    let ln: f64 = RotationParam::new(base.clone(), axis, an)
                        .unwrap()
                        .expand()
                        .samples
                        .iter()
                        .zip(g.iter())
                        .map(|(x, y)| x * y)
                        .sum();
                    let fd = (lp - ln) / (2.0 * delta);
                    assert!(
                        (fd - ga[[i, a]]).abs() < 1e-6 * fd.abs().max(1.0),
                        "shot {i} angle {a}: {fd} vs {}",
                        ga[[i, a]]
                    );
                }
            }
        }
    }
}
