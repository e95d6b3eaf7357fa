//! Command-line surface: run configuration, file formats, synthetic
//! datasets, metrics, and the command implementations.

pub mod commands;
pub mod config;
pub mod files;
pub mod metrics;
pub mod phantom;

pub use commands::{
    cmd_generate_phantoms, cmd_optimize, cmd_psf, cmd_simulate, cmd_validate, validate_trajectory,
    SimulationReport, ValidationReport,
};
pub use config::RunConfig;
pub use files::{
    read_trajectory, read_volume, write_table, write_trajectory, write_volume, write_waveforms,
};
pub use metrics::{nrmse, psnr_db, PSNR_CAP_DB};
pub use phantom::{birdcage_maps, random_phantom};
