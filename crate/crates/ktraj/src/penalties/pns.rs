//! Peripheral nerve stimulation model: causal convolution of each axis
//! slew waveform with a chronaxie-parameterized kernel, combined across
//! axes by root-sum-of-squares, and the associated soft penalty.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::{soft_threshold, soft_threshold_subgrad, PenaltyEval};
use crate::core::{slew_scale, traj_to_slew, ScannerLimits, Trajectory};
use crate::Result;

/// Fraction-of-threshold stimulation response per axis and combined
/// across axes. Time axis has length `Nfe - 2` (the slew length).
#[derive(Debug, Clone)]
pub struct PnsResponse {
    /// `[Nfe-2, Ns, Nd]`.
    pub per_axis: Array3<f64>,
    /// Root-sum-of-squares over axes, `[Nfe-2, Ns]`.
    pub combined: Array2<f64>,
}

/// Discrete stimulation kernel `h[m] = c dt / (smin (c + m dt)^2)`.
pub fn pns_kernel(limits: &ScannerLimits, dt: f64, len: usize) -> Vec<f64> {
    let c = limits.chronaxie_s;
    (0..len)
        .map(|m| c * dt / (limits.smin_t_m_s * (c + m as f64 * dt).powi(2)))
        .collect()
}

/// Causal convolution `out[j] = sum_{m<=j} h[m] a[j-m]` via zero-padded
/// FFT; output truncated to `a.len()`.
fn causal_conv(h: &[f64], a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let fft_len = (2 * n).max(2).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft(fft_len, FftDirection::Forward);
    let inv = planner.plan_fft(fft_len, FftDirection::Inverse);
    let mut ha: Vec<Complex64> = h
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(fft_len)
        .collect();
    let mut aa: Vec<Complex64> = a
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(fft_len)
        .collect();
    fwd.process(&mut ha);
    fwd.process(&mut aa);
    for (x, y) in aa.iter_mut().zip(ha.iter()) {
        *x *= *y;
    }
    inv.process(&mut aa);
    let scale = 1.0 / fft_len as f64;
    aa.iter().take(n).map(|v| v.re * scale).collect()
}

/// Causal correlation (adjoint of [`causal_conv`]):
/// `out[k] = sum_{j>=k} h[j-k] a[j]`.
fn causal_corr(h: &[f64], a: &[f64]) -> Vec<f64> {
    let rev: Vec<f64> = a.iter().rev().cloned().collect();
    let mut out = causal_conv(h, &rev);
    out.reverse();
    out
}

/// Stimulation response of a trajectory under the convolution model.
pub fn pns_response(traj: &Trajectory, limits: &ScannerLimits) -> Result<PnsResponse> {
    let slew = traj_to_slew(traj, limits)?;
    let (nt, ns, nd) = (slew.shape()[0], slew.shape()[1], slew.shape()[2]);
    let h = pns_kernel(limits, traj.raster_s, nt);
    let mut per_axis = Array3::zeros((nt, ns, nd));
    for i in 0..ns {
        for d in 0..nd {
            let col: Vec<f64> = (0..nt).map(|j| slew[[j, i, d]]).collect();
            let p = causal_conv(&h, &col);
            for (j, v) in p.into_iter().enumerate() {
                per_axis[[j, i, d]] = v;
            }
        }
    }
    let mut combined = Array2::zeros((nt, ns));
    for i in 0..ns {
        for j in 0..nt {
            combined[[j, i]] =
                (0..nd).map(|d| per_axis[[j, i, d]].powi(2)).sum::<f64>().sqrt();
        }
    }
    Ok(PnsResponse { per_axis, combined })
}

/// `L_pns = sum_ij phi_pmax(combined[j,i])` with the gradient chained
/// through the root-sum-of-squares, the convolution (adjoint =
/// correlation with the kernel), and the slew finite difference.
pub fn loss_pns(traj: &Trajectory, limits: &ScannerLimits) -> Result<PenaltyEval> {
    let resp = pns_response(traj, limits)?;
    let (nt, ns, nd) = (
        resp.per_axis.shape()[0],
        resp.per_axis.shape()[1],
        resp.per_axis.shape()[2],
    );
    let (nfe,) = (traj.n_readout(),);
    let h = pns_kernel(limits, traj.raster_s, nt);

    let mut value = 0.0;
    let mut grad = Array3::zeros((nfe, ns, nd));
    for i in 0..ns {
        // dL/dp for this shot, all axes
        let mut dp = Array2::<f64>::zeros((nt, nd));
        for j in 0..nt {
            let comb = resp.combined[[j, i]];
            value += soft_threshold(comb, limits.pmax);
            let dcomb = soft_threshold_subgrad(comb, limits.pmax);
            if dcomb != 0.0 && comb > 0.0 {
                for d in 0..nd {
                    dp[[j, d]] = dcomb * resp.per_axis[[j, i, d]] / comb;
                }
            }
        }
        for d in 0..nd {
            let col: Vec<f64> = (0..nt).map(|j| dp[[j, d]]).collect();
            let dslew = causal_corr(&h, &col);
            let scale = slew_scale(traj, limits, d);
            for (j, ds) in dslew.into_iter().enumerate() {
                let v = ds * scale;
                grad[[j, i, d]] += v;
                grad[[j + 1, i, d]] -= 2.0 * v;
                grad[[j + 2, i, d]] += v;
            }
        }
    }
    Ok(PenaltyEval { value, grad })
}
