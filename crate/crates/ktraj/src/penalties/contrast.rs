//! Image-contrast penalty: selected trajectory coordinates are pushed
//! to cross the k-space center (e.g. the echo-time sample of each shot).

use ndarray::Array3;

use super::{soft_threshold, soft_threshold_subgrad, PenaltyEval};
use crate::core::Trajectory;
use crate::{Error, Result};

/// Set of (shot, time-index, dimension) triples constrained to zero.
#[derive(Debug, Clone, Default)]
pub struct ContrastSpec {
    pub points: Vec<(usize, usize, usize)>,
}

impl ContrastSpec {
    /// Locks every dimension of the sample at `time_index` in all shots,
    /// e.g. `time_index = round(TE / dt)` for an echo-time lock.
    pub fn lock_all_shots(traj: &Trajectory, time_index: usize) -> Self {
        let mut points = Vec::new();
        for i in 0..traj.n_shots() {
            for d in 0..traj.n_dims() {
                points.push((i, time_index, d));
            }
        }
        Self { points }
    }

    pub fn validate(&self, traj: &Trajectory) -> Result<()> {
        for &(i, j, d) in &self.points {
            if i >= traj.n_shots() || j >= traj.n_readout() || d >= traj.n_dims() {
                return Err(Error::IndexOutOfRange(format!(
                    "contrast point (shot {i}, sample {j}, dim {d}) outside trajectory \
                     [{} shots, {} samples, {} dims]",
                    traj.n_shots(),
                    traj.n_readout(),
                    traj.n_dims()
                )));
            }
        }
        Ok(())
    }
}

/// `L_c = sum_{(i,j,d) in C} |omega[j,i,d]|` with subgradient `sign`.
pub fn loss_contrast(traj: &Trajectory, spec: &ContrastSpec) -> Result<PenaltyEval> {
    spec.validate(traj)?;
    let mut value = 0.0;
    let mut grad = Array3::zeros(traj.samples.raw_dim());
    for &(i, j, d) in &spec.points {
        let w = traj.samples[[j, i, d]];
        value += soft_threshold(w, 0.0);
        grad[[j, i, d]] += soft_threshold_subgrad(w, 0.0);
    }
    Ok(PenaltyEval { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn traj() -> Trajectory {
        Trajectory::new(
            Array3::zeros((8, 2, 2)),
            vec![200.0, 200.0],
            vec![32, 32],
            4e-6,
        )
        .unwrap()
    }

    #[test]
    fn exact_crossing_zero_loss() {
        let t = traj();
        let spec = ContrastSpec::lock_all_shots(&t, 4);
        let l = loss_contrast(&t, &spec).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_offset_point() {
        let t = traj();
        let mut s = t.samples.clone();
        s[[3, 1, 0]] = 0.1;
        let t = t.with_samples(s);
        let spec = ContrastSpec { points: vec![(1, 3, 0)] };
        let l = loss_contrast(&t, &spec).unwrap();
        assert!((l.value - 0.1).abs() < 1e-15);
        assert_eq!(l.grad[[3, 1, 0]], 1.0);
    }

    #[test]
    fn te_lock_index_from_protocol() {
        // TE = 7.4 ms at 4 us raster -> sample 1850
        let te = 7.4e-3f64;
        let dt = 4e-6f64;
        let idx = (te / dt).round() as usize;
        assert_eq!(idx, 1850);
        let t = Trajectory::new(
            Array3::zeros((2650, 1, 2)),
            vec![200.0, 200.0],
            vec![64, 64],
            dt,
        )
        .unwrap();
        let spec = ContrastSpec::lock_all_shots(&t, idx);
        assert!(spec.validate(&t).is_ok());
        assert_eq!(spec.points.len(), 2);
    }

    #[test]
    fn out_of_range_index_errors() {
        let t = traj();
        let spec = ContrastSpec { points: vec![(0, 99, 0)] };
        assert!(loss_contrast(&t, &spec).is_err());
    }
}
