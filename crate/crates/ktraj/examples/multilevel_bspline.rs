//! Multi-level optimization: fits B-spline coefficients at a coarse
//! kernel width, optimizes, then refines through finer widths. Coarse
//! levels move whole shot shapes; fine levels adjust local detail.
//!
//! Run with `cargo run --release --example multilevel_bspline`.

use ktraj::cli::random_phantom;
use ktraj::core::{LossWeights, ScannerLimits};
use ktraj::nufft::{AccuracyTier, NoiseLevel};
use ktraj::optimize::{run_multilevel, LossProblem, OptConfig, ReconSetup};
use ktraj::param::{generate_initial, AngleScheme, Geometry, TrajKind};
use ktraj::recon::{ReconConfig, ReconParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0],
        matrix_size: vec![32, 32],
        n_readout: 64,
        raster_s: 4e-6,
    };
    let kind = TrajKind::Radial2d { n_spokes: 8, scheme: AngleScheme::GoldenAngle };
    let init = generate_initial(&kind, &geom, None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phantoms: Vec<_> = (0..3)
        .map(|_| random_phantom(&geom.matrix_size, &mut rng))
        .collect::<ktraj::Result<_>>()?;

    let mut weights = LossWeights::default();
    weights.w_recon = 1.0;
    weights.w_slew = 0.01;
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
    let cfg = OptConfig {
        eta: 3e-4,
        steps_per_level: 15,
        levels: vec![32, 16, 8],
        sgld_noise: false,
        ..OptConfig::default()
    };

    let outcome = run_multilevel(&init, &problem, &cfg, ReconParams::from_lambda(1e-3)?)?;
    for p in &outcome.history.phases {
        println!(
            "level width {:>2}: {} steps, projection residual {:.3e}",
            p.width, p.steps, p.fit_residual
        );
    }
    println!("best loss {:.4e}", outcome.best_loss);
    Ok(())
}
