//! Optimizes only the per-shot rotation angles of a radial trajectory,
//! a low-dimensional parameterization that preserves each shot's shape
//! and hence its hardware feasibility.
//!
//! Run with `cargo run --release --example optimize_rotations`.

use ktraj::cli::random_phantom;
use ktraj::core::{LossWeights, ScannerLimits};
use ktraj::nufft::{AccuracyTier, NoiseLevel};
use ktraj::optimize::{
    run_sgld, LossProblem, OptConfig, OptHistory, Parameterization, ReconSetup,
};
use ktraj::param::{generate_initial, AngleScheme, Geometry, RotationAxis, RotationParam, TrajKind};
use ktraj::recon::{ReconConfig, ReconParams};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0],
        matrix_size: vec![32, 32],
        n_readout: 48,
        raster_s: 4e-6,
    };
    let kind = TrajKind::Radial2d { n_spokes: 8, scheme: AngleScheme::Uniform };
    let init = generate_initial(&kind, &geom, Some(&ScannerLimits::default()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phantoms: Vec<_> = (0..4)
        .map(|_| random_phantom(&geom.matrix_size, &mut rng))
        .collect::<ktraj::Result<_>>()?;

    let mut weights = LossWeights::default();
    weights.w_recon = 1.0;
    let problem = LossProblem {
        limits: ScannerLimits::default(),
        weights,
        contrast: None,
        recon: Some(ReconSetup {
            phantoms,
            cfg: ReconConfig::default().train(),
            sense: None,
            noise: NoiseLevel::None,
            tier: AccuracyTier::Train,
        }),
    };

    let angles = Array2::zeros((init.n_shots(), 1));
    let rotation = RotationParam::new(init, RotationAxis::InPlaneZ, angles)?;
    let mut param = Parameterization::Rotation(rotation);
    let mut theta = ReconParams::from_lambda(1e-3)?;
    let cfg = OptConfig { eta: 1e-2, steps_per_level: 30, sgld_noise: false, ..OptConfig::default() };
    let mut history = OptHistory::default();
    let mut opt_rng = ChaCha8Rng::seed_from_u64(0);
    let best = run_sgld(&mut param, &mut theta, &problem, &cfg, 0, &mut opt_rng, &mut history)?;

    println!("optimized shot angles (radians):");
    for (i, a) in param.params().iter().enumerate() {
        println!("  shot {i}: {a:+.4}");
    }
    println!(
        "loss {:.4e} -> best {:.4e}",
        history.records.first().map_or(0.0, |r| r.total),
        best
    );
    Ok(())
}
