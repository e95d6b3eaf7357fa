//! Kaiser-Bessel interpolation kernel and its deapodization transform.

/// Modified Bessel function of the first kind, order 0, by power series.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-Bessel shape parameter for a given oversampling ratio and full
/// kernel width (Beatty et al. 2005 minimal-aliasing formula).
pub fn kb_beta(oversampling: f64, width: usize) -> f64 {
    let w = width as f64;
    let a = oversampling;
    std::f64::consts::PI * ((w * w / (a * a)) * (a - 0.5).powi(2) - 0.8).max(0.0).sqrt()
}

/// Kaiser-Bessel kernel sampled at offset `u` grid units from its
/// center; full support is `|u| <= width/2`. Normalized to 1 at u = 0.
#[derive(Debug, Clone)]
pub struct KbKernel {
    pub width: usize,
    pub beta: f64,
    inv_i0: f64,
}

impl KbKernel {
    pub fn new(oversampling: f64, width: usize) -> Self {
        let beta = kb_beta(oversampling, width);
        Self { width, beta, inv_i0: 1.0 / bessel_i0(beta) }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let half = self.width as f64 / 2.0;
        let t = 1.0 - (u / half) * (u / half);
        if t <= 0.0 {
            0.0
        } else {
            bessel_i0(self.beta * t.sqrt()) * self.inv_i0
        }
    }

    /// Continuous Fourier transform of the kernel at frequency `f`
    /// (cycles per grid unit), by Simpson quadrature over the support.
    /// Used to build the deapodization table; quadrature avoids any
    /// branch issues in the closed form near beta = pi*W*f.
    pub fn transform(&self, f: f64) -> f64 {
        let half = self.width as f64 / 2.0;
        let n = 2048; // intervals (even)
        let h = 2.0 * half / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let u = -half + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.eval(u) * (2.0 * std::f64::consts::PI * f * u).cos();
        }
        acc * h / 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn i0_reference_values() {
        // Abramowitz & Stegun table values
        assert_relative_eq!(bessel_i0(0.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(bessel_i0(1.0), 1.2660658777520084, max_relative = 1e-12);
        assert_relative_eq!(bessel_i0(5.0), 27.239871823604442, max_relative = 1e-12);
    }

    #[test]
    fn kernel_is_normalized_and_compact() {
        let k = KbKernel::new(2.0, 6);
        assert_relative_eq!(k.eval(0.0), 1.0, max_relative = 1e-14);
        assert_eq!(k.eval(3.01), 0.0);
        assert!(k.eval(1.0) > 0.0 && k.eval(1.0) < 1.0);
        // symmetry
        assert_relative_eq!(k.eval(1.3), k.eval(-1.3), max_relative = 1e-14);
    }

    #[test]
    fn transform_at_zero_is_kernel_area() {
        let k = KbKernel::new(2.0, 6);
        // trapezoid oracle at fine resolution
        let n = 20000;
        let half = 3.0;
        let h = 2.0 * half / n as f64;
        let mut area = 0.0;
        for i in 0..n {
            let u = -half + (i as f64 + 0.5) * h;
            area += k.eval(u) * h;
        }
        assert_relative_eq!(k.transform(0.0), area, max_relative = 1e-7);
    }
}
