//! Exact (slow) non-uniform DFT, used as the accuracy reference for the
//! gridding NUFFT and in test oracles. O(M * N) per call.

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;

/// Centered grid coordinate of flat index `n` along a dimension of size `len`:
/// integers `-floor(len/2) .. len - floor(len/2) - 1` (DC at index `len/2`).
#[inline]
pub fn centered_coord(n: usize, len: usize) -> f64 {
    n as f64 - (len / 2) as f64
}

/// `y[m] = sum_n x[n] exp(-i omega_m . r_n)`, omega `[M, Nd]` in rad/sample.
pub fn dft_forward(omega: &Array2<f64>, x: &ArrayD<Complex64>) -> Vec<Complex64> {
    let nd = omega.shape()[1];
    assert_eq!(x.ndim(), nd, "image dims vs omega dims");
    let m = omega.shape()[0];
    let mut y = vec![Complex64::default(); m];
    for (idx, &v) in x.indexed_iter() {
        if v == Complex64::default() {
            continue;
        }
        let r: Vec<f64> = (0..nd).map(|d| centered_coord(idx[d], x.shape()[d])).collect();
        for (ym, om) in y.iter_mut().zip(omega.rows()) {
            let phase: f64 = (0..nd).map(|d| om[d] * r[d]).sum();
            *ym += v * Complex64::from_polar(1.0, -phase);
        }
    }
    y
}

/// `x[n] = sum_m y[m] exp(+i omega_m . r_n)`.
pub fn dft_adjoint(omega: &Array2<f64>, y: &[Complex64], dims: &[usize]) -> ArrayD<Complex64> {
    let nd = omega.shape()[1];
    assert_eq!(dims.len(), nd);
    assert_eq!(y.len(), omega.shape()[0]);
    let mut x = ArrayD::<Complex64>::zeros(IxDyn(dims));
    for (idx, v) in x.indexed_iter_mut() {
        let r: Vec<f64> = (0..nd).map(|d| centered_coord(idx[d], dims[d])).collect();
        let mut acc = Complex64::default();
        for (ym, om) in y.iter().zip(omega.rows()) {
            let phase: f64 = (0..nd).map(|d| om[d] * r[d]).sum();
            acc += ym * Complex64::from_polar(1.0, phase);
        }
        *v = acc;
    }
    x
}
