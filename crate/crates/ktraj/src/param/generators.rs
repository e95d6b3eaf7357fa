//! Standard trajectory generators used as optimization initializations
//! and baselines: 2D radial, stack-of-stars, 3D radial ("kooshball"),
//! and a 3D EPI readout.

use ndarray::Array3;

use crate::core::{traj_to_gradient, traj_to_slew, ScannerLimits, Trajectory};
use crate::{Error, Result};

/// Golden-angle increment between successive radial spokes, degrees:
/// `180 * (sqrt(5) - 1) / 2` (~111.246).
pub fn golden_angle_deg() -> f64 {
    180.0 * (5.0f64.sqrt() - 1.0) / 2.0
}

/// Angle schedule for radial spokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleScheme {
    /// Equispaced over pi.
    Uniform,
    /// Successive golden-angle increments.
    GoldenAngle,
}

impl AngleScheme {
    pub fn angle(self, spoke: usize, n_spokes: usize) -> f64 {
        match self {
            AngleScheme::Uniform => spoke as f64 * std::f64::consts::PI / n_spokes as f64,
            AngleScheme::GoldenAngle => {
                (spoke as f64 * golden_angle_deg()).to_radians() % (2.0 * std::f64::consts::PI)
            }
        }
    }
}

/// Acquisition geometry shared by all generators.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub fov_mm: Vec<f64>,
    pub matrix_size: Vec<usize>,
    pub n_readout: usize,
    pub raster_s: f64,
}

/// Initialization kind plus its shape parameters.
#[derive(Debug, Clone)]
pub enum TrajKind {
    Radial2d { n_spokes: usize, scheme: AngleScheme },
    StackOfStars { n_kz: usize, spokes_per_plane: usize, scheme: AngleScheme },
    Kooshball3d { n_spokes: usize },
    /// Single-shot 3D EPI readout: zigzag kx lines stepping through ky,
    /// at kz = 0.
    Epi { n_lines: usize },
}

/// Radial readout coordinate for sample `j`: full diameter
/// `-pi .. pi - 2pi/Nfe`, crossing the center.
fn spoke_radius(j: usize, nfe: usize) -> f64 {
    -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / nfe as f64
}

/// Generates a hardware-feasible baseline trajectory. When `limits` is
/// given, gradient and slew feasibility are checked and violations are
/// reported as errors.
pub fn generate_initial(
    kind: &TrajKind,
    geom: &Geometry,
    limits: Option<&ScannerLimits>,
) -> Result<Trajectory> {
    let nfe = geom.n_readout;
    if nfe < 2 {
        return Err(Error::InvalidParameter("need at least 2 readout samples".into()));
    }
    let traj = match kind {
        TrajKind::Radial2d { n_spokes, scheme } => {
            if geom.matrix_size.len() != 2 {
                return Err(Error::InvalidParameter("radial2d needs 2D geometry".into()));
            }
            let mut s = Array3::zeros((nfe, *n_spokes, 2));
            for i in 0..*n_spokes {
                let th = scheme.angle(i, *n_spokes);
                let (sin, cos) = th.sin_cos();
                for j in 0..nfe {
                    let r = spoke_radius(j, nfe);
                    s[[j, i, 0]] = r * cos;
                    s[[j, i, 1]] = r * sin;
                }
            }
            Trajectory::new(s, geom.fov_mm.clone(), geom.matrix_size.clone(), geom.raster_s)?
        }
        TrajKind::StackOfStars { n_kz, spokes_per_plane, scheme } => {
            if geom.matrix_size.len() != 3 {
                return Err(Error::InvalidParameter("stack_of_stars needs 3D geometry".into()));
            }
            let ns = n_kz * spokes_per_plane;
            let mut s = Array3::zeros((nfe, ns, 3));
            for p in 0..*n_kz {
                let kz = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * p as f64 / *n_kz as f64;
                for q in 0..*spokes_per_plane {
                    let i = p * spokes_per_plane + q;
                    let th = scheme.angle(q, *spokes_per_plane);
                    let (sin, cos) = th.sin_cos();
                    for j in 0..nfe {
                        let r = spoke_radius(j, nfe);
                        s[[j, i, 0]] = r * cos;
                        s[[j, i, 1]] = r * sin;
                        s[[j, i, 2]] = kz;
                    }
                }
            }
            Trajectory::new(s, geom.fov_mm.clone(), geom.matrix_size.clone(), geom.raster_s)?
        }
        TrajKind::Kooshball3d { n_spokes } => {
            if geom.matrix_size.len() != 3 {
                return Err(Error::InvalidParameter("kooshball needs 3D geometry".into()));
            }
            let mut s = Array3::zeros((nfe, *n_spokes, 3));
            // spiral phyllotaxis over the sphere; center-out spokes
            let ga = (std::f64::consts::PI * (3.0 - 5.0f64.sqrt())) * 2.0;
            for i in 0..*n_spokes {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / *n_spokes as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = i as f64 * ga;
                let dir = [rho * phi.cos(), rho * phi.sin(), z];
                for j in 0..nfe {
                    let r = std::f64::consts::PI * j as f64 / nfe as f64;
                    for d in 0..3 {
                        s[[j, i, d]] = r * dir[d];
                    }
                }
            }
            Trajectory::new(s, geom.fov_mm.clone(), geom.matrix_size.clone(), geom.raster_s)?
        }
        TrajKind::Epi { n_lines } => {
            if geom.matrix_size.len() != 3 {
                return Err(Error::InvalidParameter("epi needs 3D geometry".into()));
            }
            if *n_lines < 1 || nfe % n_lines != 0 {
                return Err(Error::InvalidParameter(format!(
                    "n_lines must divide the readout length ({nfe})"
                )));
            }
            let per_line = nfe / n_lines;
            let mut s = Array3::zeros((nfe, 1, 3));
            let kmax = std::f64::consts::PI * 0.99;
            for l in 0..*n_lines {
                let ky = if *n_lines == 1 {
                    0.0
                } else {
                    -kmax + 2.0 * kmax * l as f64 / (*n_lines as f64 - 1.0)
                };
                for j in 0..per_line {
                    let frac = j as f64 / (per_line as f64 - 1.0).max(1.0);
                    let kx = if l % 2 == 0 {
                        -kmax + 2.0 * kmax * frac
                    } else {
                        kmax - 2.0 * kmax * frac
                    };
                    let t = l * per_line + j;
                    s[[t, 0, 0]] = kx;
                    s[[t, 0, 1]] = ky;
                    s[[t, 0, 2]] = 0.0;
                }
            }
            Trajectory::new(s, geom.fov_mm.clone(), geom.matrix_size.clone(), geom.raster_s)?
        }
    };
    if let Some(lim) = limits {
        check_feasibility(&traj, lim)?;
    }
    Ok(traj)
}

/// Errors when the trajectory exceeds gmax or smax (Euclidean norm).
pub fn check_feasibility(traj: &Trajectory, limits: &ScannerLimits) -> Result<()> {
    let g = traj_to_gradient(traj, limits)?;
    let nd = traj.n_dims();
    let mut peak_g = 0.0f64;
    for i in 0..traj.n_shots() {
        for j in 0..traj.n_readout() - 1 {
            let n: f64 = (0..nd).map(|d| g[[j, i, d]].powi(2)).sum::<f64>().sqrt();
            peak_g = peak_g.max(n);
        }
    }
    if peak_g > limits.gmax_mt_m {
        return Err(Error::InfeasibleGeometry(format!(
            "required gradient {peak_g:.3} mT/m exceeds gmax {:.3} mT/m",
            limits.gmax_mt_m
        )));
    }
    if traj.n_readout() >= 3 {
        let s = traj_to_slew(traj, limits)?;
        let mut peak_s = 0.0f64;
        for i in 0..traj.n_shots() {
            for j in 0..traj.n_readout() - 2 {
                let n: f64 = (0..nd).map(|d| s[[j, i, d]].powi(2)).sum::<f64>().sqrt();
                peak_s = peak_s.max(n);
            }
        }
        if peak_s > limits.smax_t_m_s {
            return Err(Error::InfeasibleGeometry(format!(
                "required slew {peak_s:.3} T/m/s exceeds smax {:.3} T/m/s",
                limits.smax_t_m_s
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom2d() -> Geometry {
        Geometry {
            fov_mm: vec![220.0, 220.0],
            matrix_size: vec![64, 64],
            n_readout: 128,
            raster_s: 4e-6,
        }
    }

    #[test]
    fn single_spoke_is_kx_diameter() {
        let traj = generate_initial(
            &TrajKind::Radial2d { n_spokes: 1, scheme: AngleScheme::Uniform },
            &geom2d(),
            None,
        )
        .unwrap();
        assert_relative_eq!(traj.samples[[0, 0, 0]], -std::f64::consts::PI, max_relative = 1e-12);
        assert!(traj.samples[[127, 0, 0]] > 3.0);
        for j in 0..128 {
            assert_eq!(traj.samples[[j, 0, 1]], 0.0);
        }
        // crosses center
        let mid = traj.samples[[64, 0, 0]];
        assert!(mid.abs() < 1e-12);
    }

    #[test]
    fn golden_angle_value() {
        assert_relative_eq!(golden_angle_deg(), 111.24611797498108, max_relative = 1e-12);
        let a0 = AngleScheme::GoldenAngle.angle(0, 16);
        let a1 = AngleScheme::GoldenAngle.angle(1, 16);
        assert_relative_eq!((a1 - a0).to_degrees(), 111.24611797498108, max_relative = 1e-10);
    }

    #[test]
    fn stack_of_stars_shape() {
        let geom = Geometry {
            fov_mm: vec![220.0, 220.0, 64.0],
            matrix_size: vec![64, 64, 4],
            n_readout: 64,
            raster_s: 4e-6,
        };
        let traj = generate_initial(
            &TrajKind::StackOfStars { n_kz: 4, spokes_per_plane: 8, scheme: AngleScheme::GoldenAngle },
            &geom,
            None,
        )
        .unwrap();
        assert_eq!(traj.n_shots(), 32);
        let mut kzs: Vec<f64> = (0..32).map(|i| traj.samples[[0, i, 2]]).collect();
        kzs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        kzs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(kzs.len(), 4);
        let spacing = kzs[1] - kzs[0];
        for w in kzs.windows(2) {
            assert_relative_eq!(w[1] - w[0], spacing, max_relative = 1e-12);
        }
    }

    #[test]
    fn kooshball_spokes_start_at_center() {
        let geom = Geometry {
            fov_mm: vec![200.0; 3],
            matrix_size: vec![32; 3],
            n_readout: 32,
            raster_s: 4e-6,
        };
        let traj =
            generate_initial(&TrajKind::Kooshball3d { n_spokes: 24 }, &geom, None).unwrap();
        for i in 0..24 {
            for d in 0..3 {
                assert_eq!(traj.samples[[0, i, d]], 0.0);
            }
        }
        // directions roughly cover both hemispheres
        let nz_pos = (0..24).filter(|&i| traj.samples[[31, i, 2]] > 0.0).count();
        assert!(nz_pos >= 8 && nz_pos <= 16);
    }

    #[test]
    fn infeasible_geometry_reports_violation() {
        // absurdly small FOV at short raster forces huge gradients
        let geom = Geometry {
            fov_mm: vec![10.0, 10.0],
            matrix_size: vec![256, 256],
            n_readout: 16,
            raster_s: 1e-6,
        };
        let limits = ScannerLimits::default();
        let err = generate_initial(
            &TrajKind::Radial2d { n_spokes: 1, scheme: AngleScheme::Uniform },
            &geom,
            Some(&limits),
        )
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("exceeds"), "{msg}");
    }

    #[test]
    fn epi_zigzag_structure() {
        let geom = Geometry {
            fov_mm: vec![200.0, 200.0, 12.0],
            matrix_size: vec![32, 32, 2],
            n_readout: 64,
            raster_s: 4e-6,
        };
        let traj = generate_initial(&TrajKind::Epi { n_lines: 4 }, &geom, None).unwrap();
        assert_eq!(traj.n_shots(), 1);
        // alternating line directions
        assert!(traj.samples[[0, 0, 0]] < 0.0);
        assert!(traj.samples[[15, 0, 0]] > 0.0);
        assert!(traj.samples[[16, 0, 0]] > 0.0);
        assert!(traj.samples[[31, 0, 0]] < 0.0);
        // ky monotone across lines
        let ky0 = traj.samples[[0, 0, 1]];
        let ky3 = traj.samples[[63, 0, 1]];
        assert!(ky3 > ky0);
    }
}
