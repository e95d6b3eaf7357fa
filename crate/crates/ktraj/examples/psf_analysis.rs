//! Point-spread function and sampling-density comparison between a
//! golden-angle and a uniformly spaced radial trajectory.
//!
//! Run with `cargo run --example psf_analysis`.

use ktraj::nufft::{AccuracyTier, NufftPlan};
use ktraj::param::{generate_initial, AngleScheme, Geometry, TrajKind};
use ktraj::recon::psf_and_density;

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0],
        matrix_size: vec![64, 64],
        n_readout: 64,
        raster_s: 4e-6,
    };
    for scheme in [AngleScheme::GoldenAngle, AngleScheme::Uniform] {
        let kind = TrajKind::Radial2d { n_spokes: 12, scheme };
        let traj = generate_initial(&kind, &geom, None)?;
        let plan = NufftPlan::from_trajectory(&traj, AccuracyTier::Eval)?;
        let (psf, density) = psf_and_density(&plan, 1.5)?;

        let peak = psf.iter().map(|v| v.norm()).fold(0.0, f64::max);
        // highest sidelobe outside a small box around the main lobe
        let c = 32usize;
        let mut sidelobe: f64 = 0.0;
        for ((i, j), v) in psf
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("2d")
            .indexed_iter()
        {
            if i.abs_diff(c) > 2 || j.abs_diff(c) > 2 {
                sidelobe = sidelobe.max(v.norm());
            }
        }
        let dmin = density.iter().cloned().fold(f64::INFINITY, f64::min);
        let dmax = density.iter().cloned().fold(0.0, f64::max);
        println!(
            "{scheme:?}: peak sidelobe {:.1} dB, density min/max ratio {:.3}",
            20.0 * (sidelobe / peak).log10(),
            dmin / dmax
        );
    }
    Ok(())
}
