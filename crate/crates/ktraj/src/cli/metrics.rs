//! Image-quality metrics between a reconstruction and its ground
//! truth.

use ndarray::ArrayD;
use num_complex::Complex64;

use crate::{Error, Result};

/// Reported instead of +inf when the images are numerically identical.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Peak signal-to-noise ratio in dB on complex images:
/// `20 log10(max |ref| / rmse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_db(recon: &ArrayD<Complex64>, reference: &ArrayD<Complex64>) -> Result<f64> {
    if recon.shape() != reference.shape() {
        return Err(Error::ShapeMismatch("psnr image shapes".into()));
    }
    let n = reference.len() as f64;
    let mse: f64 =
        recon.iter().zip(reference.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n;
    let peak = reference.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidParameter("reference image is all zero".into()));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * (peak / mse.sqrt()).log10()).min(PSNR_CAP_DB))
}

/// `||recon - ref|| / ||ref||`.
pub fn nrmse(recon: &ArrayD<Complex64>, reference: &ArrayD<Complex64>) -> Result<f64> {
    if recon.shape() != reference.shape() {
        return Err(Error::ShapeMismatch("nrmse image shapes".into()));
    }
    let num: f64 = recon.iter().zip(reference.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = reference.iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::InvalidParameter("reference image is all zero".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn img(vals: &[f64]) -> ArrayD<Complex64> {
        ArrayD::from_shape_vec(IxDyn(&[vals.len()]), vals.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            .unwrap()
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let a = img(&[1.0, 0.5, 0.25]);
        assert_eq!(psnr_db(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn known_error_gives_known_psnr() {
        // peak 1, uniform error 0.1 -> rmse 0.1 -> 20 dB
        let a = img(&[1.0, 0.5]);
        let b = img(&[1.1, 0.6]);
        let p = psnr_db(&b, &a).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
        let e = nrmse(&b, &a).unwrap();
        let expect = (0.02f64 / 1.25).sqrt();
        assert!((e - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_an_error() {
        let a = img(&[0.0, 0.0]);
        let b = img(&[1.0, 1.0]);
        assert!(psnr_db(&b, &a).is_err());
        assert!(nrmse(&b, &a).is_err());
    }
}
