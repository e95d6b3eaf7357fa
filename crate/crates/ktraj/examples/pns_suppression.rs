//! Reduces peripheral nerve stimulation of a wiggly radial trajectory
//! by gradient descent on the PNS penalty alone.
//!
//! Run with `cargo run --example pns_suppression`.

use ktraj::core::ScannerLimits;
use ktraj::optimize::{run_sgld, LossProblem, OptConfig, OptHistory, Parameterization};
use ktraj::param::{generate_initial, AngleScheme, Geometry, TrajKind};
use ktraj::penalties::pns_response;
use ktraj::recon::ReconParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ktraj::Result<()> {
    let geom = Geometry {
        fov_mm: vec![220.0, 220.0],
        matrix_size: vec![64, 64],
        n_readout: 128,
        raster_s: 4e-6,
    };
    let kind = TrajKind::Radial2d { n_spokes: 12, scheme: AngleScheme::GoldenAngle };
    let mut traj = generate_initial(&kind, &geom, None)?;

    // inject a fast oscillation so the baseline actually stimulates
    for j in 0..traj.n_readout() {
        let wobble = 0.35 * (j as f64 * 1.3).sin();
        for i in 0..traj.n_shots() {
            traj.samples[[j, i, 1]] += wobble;
        }
    }

    // tight threshold so the oscillation is over the limit
    let mut limits = ScannerLimits::default();
    limits.pmax = 0.2;
    let peak0 = peak_pns(&traj, &limits)?;

    let mut weights = ktraj::core::LossWeights::default();
    weights.w_recon = 0.0;
    weights.w_pns = 1.0;
    let problem = LossProblem { limits: limits.clone(), weights, contrast: None, recon: None };

    let cfg = OptConfig {
        eta: 2e-5,
        steps_per_level: 150,
        sgld_noise: false,
        ..OptConfig::default()
    };
    let mut param = Parameterization::freeform(traj);
    let mut theta = ReconParams::from_lambda(1e-3)?;
    let mut history = OptHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    run_sgld(&mut param, &mut theta, &problem, &cfg, 0, &mut rng, &mut history)?;

    let optimized = param.expand();
    let peak1 = peak_pns(&optimized, &limits)?;
    println!("peak PNS fraction before: {peak0:.3}");
    println!("peak PNS fraction after:  {peak1:.3} (threshold {})", limits.pmax);
    println!(
        "loss {:.3e} -> {:.3e} over {} steps",
        history.records.first().map_or(0.0, |r| r.total),
        history.records.last().map_or(0.0, |r| r.total),
        history.records.len()
    );
    Ok(())
}

fn peak_pns(traj: &ktraj::core::Trajectory, limits: &ScannerLimits) -> ktraj::Result<f64> {
    Ok(pns_response(traj, limits)?.combined.iter().cloned().fold(0.0, f64::max))
}
