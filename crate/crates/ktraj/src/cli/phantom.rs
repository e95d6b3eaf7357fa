//! Synthetic datasets: randomized ellipse/ellipsoid phantoms and
//! smooth simulated coil-sensitivity maps.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::Rng;

use crate::core::SenseMaps;
use crate::{Error, Result};

/// One random phantom on `dims` (2D or 3D): a handful of rotated
/// ellipses with random amplitudes on an elliptical background,
/// normalized to peak magnitude 1.
pub fn random_phantom<R: Rng>(dims: &[usize], rng: &mut R) -> Result<ArrayD<Complex64>> {
    if !(dims.len() == 2 || dims.len() == 3) {
        return Err(Error::InvalidParameter("phantoms are 2D or 3D".into()));
    }
    let nd = dims.len();
    let mut img = ArrayD::<Complex64>::zeros(IxDyn(dims));
    let n_shapes = rng.gen_range(3..=7);
    // background ellipse plus inner shapes; the background comes first
    // so inner shapes add on top of it
    let mut shapes = Vec::with_capacity(n_shapes + 1);
    shapes.push(Shape {
        center: vec![0.0; nd],
        axes: vec![0.85; nd],
        angle: 0.0,
        amp: 0.4,
    });
    for _ in 0..n_shapes {
        shapes.push(Shape {
            center: (0..nd).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            axes: (0..nd).map(|_| rng.gen_range(0.08..0.4)).collect(),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            amp: rng.gen_range(-0.4..0.8),
        });
    }
    for (idx, v) in img.indexed_iter_mut() {
        // normalized coordinates in [-1, 1)
        let u: Vec<f64> = (0..nd)
            .map(|d| 2.0 * (idx[d] as f64 + 0.5) / dims[d] as f64 - 1.0)
            .collect();
        let mut val = 0.0;
        for s in &shapes {
            if s.contains(&u) {
                val += s.amp;
            }
        }
        *v = Complex64::new(val.max(0.0), 0.0);
    }
    let peak = img.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        img.mapv_inplace(|v| v / peak);
    }
    Ok(img)
}

struct Shape {
    center: Vec<f64>,
    axes: Vec<f64>,
    /// In-plane rotation of the first two axes.
    angle: f64,
    amp: f64,
}

impl Shape {
    fn contains(&self, u: &[f64]) -> bool {
        let nd = u.len();
        let mut p: Vec<f64> = (0..nd).map(|d| u[d] - self.center[d]).collect();
        let (s, c) = self.angle.sin_cos();
        let (x, y) = (p[0], p[1]);
        p[0] = c * x + s * y;
        p[1] = -s * x + c * y;
        let q: f64 = (0..nd).map(|d| (p[d] / self.axes[d]).powi(2)).sum();
        q <= 1.0
    }
}

/// Smooth simulated sensitivity maps: `n_coils` Gaussian-weighted
/// coils on a ring around the FOV with linear phase, normalized to
/// unit root-sum-of-squares inside the support.
pub fn birdcage_maps(n_coils: usize, dims: &[usize]) -> Result<SenseMaps> {
    if n_coils == 0 {
        return Err(Error::InvalidParameter("need at least one coil".into()));
    }
    if !(dims.len() == 2 || dims.len() == 3) {
        return Err(Error::InvalidParameter("maps are 2D or 3D".into()));
    }
    let nd = dims.len();
    let mut shape = vec![n_coils];
    shape.extend_from_slice(dims);
    let mut maps = ArrayD::<Complex64>::zeros(IxDyn(&shape));
    let radius = 1.3;
    let sigma = 1.0;
    for (idx, v) in maps.indexed_iter_mut() {
        let c = idx[0];
        let u: Vec<f64> = (0..nd)
            .map(|d| 2.0 * (idx[d + 1] as f64 + 0.5) / dims[d] as f64 - 1.0)
            .collect();
        let phi = 2.0 * std::f64::consts::PI * c as f64 / n_coils as f64;
        // coil centers on a ring in the first two dimensions
        let cx = radius * phi.cos();
        let cy = radius * phi.sin();
        let mut r2 = (u[0] - cx).powi(2) + (u[1] - cy).powi(2);
        if nd == 3 {
            r2 += u[2].powi(2);
        }
        let mag = (-0.5 * r2 / (sigma * sigma)).exp();
        let phase = 0.7 * (u[0] * phi.cos() + u[1] * phi.sin());
        *v = Complex64::from_polar(mag, phase);
    }
    // normalize the root-sum-of-squares so A'A is well scaled
    let spatial: usize = dims.iter().product();
    for p in 0..spatial {
        let mut rss = 0.0;
        for c in 0..n_coils {
            let v = maps.as_slice().expect("contiguous")[c * spatial + p];
            rss += v.norm_sqr();
        }
        let rss = rss.sqrt();
        if rss > 0.0 {
            for c in 0..n_coils {
                maps.as_slice_mut().expect("contiguous")[c * spatial + p] /= rss;
            }
        }
    }
    SenseMaps::new(maps)
}
