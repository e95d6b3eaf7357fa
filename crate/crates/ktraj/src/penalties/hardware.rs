//! Gradient-strength and slew-rate soft penalties on the Euclidean norm
//! across spatial axes, so any 3D rotation of the trajectory leaves the
//! penalty unchanged.

use ndarray::Array3;

use super::{soft_threshold, PenaltyEval};
use crate::core::{
    gradient_scale, slew_scale, traj_to_gradient, traj_to_slew, ScannerLimits, Trajectory,
};
use crate::Result;

/// Both hardware penalties; gradients are kept separate so the caller
/// can weight them independently.
#[derive(Debug, Clone)]
pub struct HardwareLoss {
    pub gradient: PenaltyEval,
    pub slew: PenaltyEval,
}

/// `L_g = sum_ij phi_gmax(||g_i[j,:]||_2)` and likewise `L_s` with smax;
/// gradients via the chain rule through the finite differences and the
/// Euclidean norm (norm subgradient 0 at the origin).
pub fn loss_hardware(traj: &Trajectory, limits: &ScannerLimits) -> Result<HardwareLoss> {
    let g = traj_to_gradient(traj, limits)?;
    let s = traj_to_slew(traj, limits)?;
    let (nfe, ns, nd) = (traj.n_readout(), traj.n_shots(), traj.n_dims());

    let mut l_g = 0.0;
    let mut grad_g = Array3::zeros((nfe, ns, nd));
    for i in 0..ns {
        for j in 0..nfe - 1 {
            let norm: f64 = (0..nd).map(|d| g[[j, i, d]].powi(2)).sum::<f64>().sqrt();
            l_g += soft_threshold(norm, limits.gmax_mt_m);
            if norm > limits.gmax_mt_m && norm > 0.0 {
                for d in 0..nd {
                    let dg = g[[j, i, d]] / norm;
                    let scale = gradient_scale(traj, limits, d);
                    grad_g[[j + 1, i, d]] += dg * scale;
                    grad_g[[j, i, d]] -= dg * scale;
                }
            }
        }
    }

    let mut l_s = 0.0;
    let mut grad_s = Array3::zeros((nfe, ns, nd));
    for i in 0..ns {
        for j in 0..nfe - 2 {
            let norm: f64 = (0..nd).map(|d| s[[j, i, d]].powi(2)).sum::<f64>().sqrt();
            l_s += soft_threshold(norm, limits.smax_t_m_s);
            if norm > limits.smax_t_m_s && norm > 0.0 {
                for d in 0..nd {
                    let ds = s[[j, i, d]] / norm;
                    let scale = slew_scale(traj, limits, d);
                    grad_s[[j, i, d]] += ds * scale;
                    grad_s[[j + 1, i, d]] -= 2.0 * ds * scale;
                    grad_s[[j + 2, i, d]] += ds * scale;
                }
            }
        }
    }

    Ok(HardwareLoss {
        gradient: PenaltyEval { value: l_g, grad: grad_g },
        slew: PenaltyEval { value: l_s, grad: grad_s },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_traj(rng: &mut ChaCha8Rng, nfe: usize, scale: f64) -> Trajectory {
        let mut s = Array3::zeros((nfe, 2, 2));
        for v in s.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * scale;
        }
        Trajectory::new(s, vec![220.0, 220.0], vec![64, 64], 4e-6).unwrap()
    }

    #[test]
    fn feasible_trajectory_zero_loss() {
        let limits = ScannerLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // tiny amplitude: gradients/slews well under limits
        let traj = small_traj(&mut rng, 16, 1e-4);
        let hw = loss_hardware(&traj, &limits).unwrap();
        assert_eq!(hw.gradient.value, 0.0);
        assert_eq!(hw.slew.value, 0.0);
        assert!(hw.gradient.grad.iter().all(|&v| v == 0.0));
        assert!(hw.slew.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_violating_sample_penalty_value() {
        let limits = ScannerLimits::default();
        // one first-difference step sized for ||g|| = gmax + 3 mT/m
        let mut s = Array3::zeros((4, 1, 2));
        let traj0 = Trajectory::new(s.clone(), vec![220.0, 220.0], vec![64, 64], 4e-6).unwrap();
        let gscale = gradient_scale(&traj0, &limits, 0);
        let step = (limits.gmax_mt_m + 3.0) / gscale;
        // only samples 0->1 differ; later samples equal to keep one active term
        s[[1, 0, 0]] = step;
        s[[2, 0, 0]] = step;
        s[[3, 0, 0]] = step;
        let traj = traj0.with_samples(s);
        // slews will violate too; only check L_g here
        let hw = loss_hardware(&traj, &limits).unwrap();
        assert!((hw.gradient.value - 3.0).abs() < 1e-9, "L_g = {}", hw.gradient.value);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = small_traj(&mut rng, 10, 0.4);
        // limits chosen so that some terms are active, none near the kink
        let mut limits = ScannerLimits::default();
        let g = traj_to_gradient(&traj, &limits).unwrap();
        let norms: Vec<f64> = (0..9)
            .flat_map(|j| (0..2).map(move |i| (j, i)))
            .map(|(j, i)| (g[[j, i, 0]].powi(2) + g[[j, i, 1]].powi(2)).sqrt())
            .collect();
        let mut sorted = norms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        limits.gmax_mt_m = sorted[sorted.len() / 2] * 1.001;
        let s = traj_to_slew(&traj, &limits).unwrap();
        let snorms: Vec<f64> = (0..8)
            .flat_map(|j| (0..2).map(move |i| (j, i)))
            .map(|(j, i)| (s[[j, i, 0]].powi(2) + s[[j, i, 1]].powi(2)).sqrt())
            .collect();
        let mut ssorted = snorms.clone();
        ssorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        limits.smax_t_m_s = ssorted[ssorted.len() / 2] * 1.001;

        let hw = loss_hardware(&traj, &limits).unwrap();
        let delta = 1e-7;
        for &(j, i, d) in &[(0usize, 0usize, 0usize), (3, 1, 1), (5, 0, 0), (8, 1, 1)] {
            let mut sp = traj.samples.clone();
            sp[[j, i, d]] += delta;
            let lp = loss_hardware(&traj.with_samples(sp), &limits).unwrap();
            let mut sn = traj.samples.clone();
            sn[[j, i, d]] -= delta;
            let ln = loss_hardware(&traj.with_samples(sn), &limits).unwrap();
            let fd_g = (lp.gradient.value - ln.gradient.value) / (2.0 * delta);
            let fd_s = (lp.slew.value - ln.slew.value) / (2.0 * delta);
            let an_g = hw.gradient.grad[[j, i, d]];
            let an_s = hw.slew.grad[[j, i, d]];
            assert!(
                (fd_g - an_g).abs() <= 1e-4 * fd_g.abs().max(1.0),
                "grad penalty fd {fd_g} vs {an_g}"
            );
            assert!(
                (fd_s - an_s).abs() <= 1e-4 * fd_s.abs().max(1.0),
                "slew penalty fd {fd_s} vs {an_s}"
            );
        }
    }

    #[test]
    fn penalty_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nfe = 12;
        let mut s = Array3::zeros((nfe, 1, 3));
        for v in s.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 0.5;
        }
        let traj = Trajectory::new(s.clone(), vec![220.0; 3], vec![64; 3], 4e-6).unwrap();
        let (c1, s1) = (0.6f64, 0.8f64);
        let mut rot = Array3::zeros((nfe, 1, 3));
        for j in 0..nfe {
            let (x, y, z) = (s[[j, 0, 0]], s[[j, 0, 1]], s[[j, 0, 2]]);
            rot[[j, 0, 0]] = c1 * x - s1 * z;
            rot[[j, 0, 1]] = y;
            rot[[j, 0, 2]] = s1 * x + c1 * z;
        }
        let mut limits = ScannerLimits::default();
        limits.gmax_mt_m = 20.0;
        limits.smax_t_m_s = 50.0;
        let a = loss_hardware(&traj, &limits).unwrap();
        let b = loss_hardware(&traj.with_samples(rot), &limits).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1e-30);
        assert!(rel(a.gradient.value, b.gradient.value) < 1e-9);
        assert!(rel(a.slew.value, b.slew.value) < 1e-9);
    }
}
