//! Optimizes the sample locations of a small radial trajectory for
//! reconstruction quality, with hardware penalties as guard rails.
//!
//! Run with `cargo run --release --example optimize_freeform`.

use ktraj::cli::random_phantom;
use ktraj::core::{LossWeights, ScannerLimits};
use ktraj::nufft::{AccuracyTier, NoiseLevel, NufftPlan, SystemModel};
use ktraj::optimize::{
    run_sgld, LossProblem, OptConfig, OptHistory, Parameterization, ReconSetup,
};
use ktraj::param::{generate_initial, AngleScheme, Geometry, TrajKind};
use ktraj::recon::{recon_unrolled, ReconConfig, ReconParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0],
        matrix_size: vec![32, 32],
        n_readout: 48,
        raster_s: 4e-6,
    };
    let kind = TrajKind::Radial2d { n_spokes: 10, scheme: AngleScheme::GoldenAngle };
    let init = generate_initial(&kind, &geom, None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phantoms: Vec<_> = (0..4)
        .map(|_| random_phantom(&geom.matrix_size, &mut rng))
        .collect::<ktraj::Result<_>>()?;

    let mut weights = LossWeights::default();
    weights.w_recon = 1.0;
    weights.w_grad = 0.01;
    weights.w_slew = 0.01;
    let problem = LossProblem {
        limits: ScannerLimits::default(),
        weights,
        contrast: None,
        recon: Some(ReconSetup {
            phantoms: phantoms.clone(),
            cfg: ReconConfig::default().train(),
            sense: None,
            noise: NoiseLevel::None,
            tier: AccuracyTier::Train,
        }),
    };

    let cfg = OptConfig {
        eta: 3e-4,
        steps_per_level: 40,
        sgld_noise: false,
        batch_size: 1,
        ..OptConfig::default()
    };
    let mut param = Parameterization::freeform(init.clone());
    let mut theta = ReconParams::from_lambda(1e-3)?;
    let mut history = OptHistory::default();
    let mut opt_rng = ChaCha8Rng::seed_from_u64(0);
    let best = run_sgld(&mut param, &mut theta, &problem, &cfg, 0, &mut opt_rng, &mut history)?;
    let optimized = param.expand();

    // held-out evaluation on a fresh phantom, initial vs optimized
    let test = random_phantom(&geom.matrix_size, &mut rng)?;
    for (label, traj) in [("initial", &init), ("optimized", &optimized)] {
        let plan = NufftPlan::from_trajectory(traj, AccuracyTier::Eval)?;
        let model = SystemModel::new(plan, None, NoiseLevel::None)?;
        let y = model.simulate(&test, &mut rng)?;
        let out = recon_unrolled(&model, &y, &ReconConfig::default())?;
        let psnr = ktraj::cli::psnr_db(&out.image, &test)?;
        println!("{label:>9}: held-out PSNR {psnr:.2} dB");
    }
    println!("best training loss {best:.4e} after {} steps", history.records.len());
    Ok(())
}
