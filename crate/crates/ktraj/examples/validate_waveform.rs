//! Converts a trajectory to gradient and slew waveforms and checks
//! them against scanner limits and the nerve-stimulation model.
//!
//! Run with `cargo run --example validate_waveform`.

use ktraj::cli::validate_trajectory;
use ktraj::core::{traj_to_gradient, traj_to_slew, ScannerLimits};
use ktraj::param::{generate_initial, Geometry, TrajKind};

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0, 220.0],
        matrix_size: vec![64, 64, 64],
        n_readout: 96,
        raster_s: 4e-6,
    };
    let kind = TrajKind::Epi { n_lines: 16 };
    let traj = generate_initial(&kind, &geom, None)?;
    let limits = ScannerLimits::default();

    let g = traj_to_gradient(&traj, &limits)?;
    let s = traj_to_slew(&traj, &limits)?;
    println!(
        "waveforms: {} samples x {} shots, gradient range [{:.2}, {:.2}] mT/m, \
         peak slew {:.1} T/m/s",
        g.shape()[0],
        g.shape()[1],
        g.iter().cloned().fold(f64::INFINITY, f64::min),
        g.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        s.iter().map(|v| v.abs()).fold(0.0, f64::max),
    );

    let report = validate_trajectory(&traj, &limits, Some(traj.n_readout() / 2))?;
    print!("{}", report.to_lines());
    Ok(())
}
