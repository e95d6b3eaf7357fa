use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ktraj::cli::{
    cmd_generate_phantoms, cmd_optimize, cmd_psf, cmd_simulate, cmd_validate, RunConfig,
};
use ktraj::Error;

#[derive(Parser)]
#[command(name = "ktraj", version, about = "k-space trajectory optimization toolkit")]
struct Cli {
    /// Verbose logging (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a trajectory per a run configuration file.
    Optimize {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trajectory file against scanner limits.
    Validate {
        /// Trajectory file to check.
        trajectory: PathBuf,
        /// TOML run configuration supplying the limits; defaults apply
        /// when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Point-spread function and sampling density of a trajectory.
    Psf {
        trajectory: PathBuf,
        /// Density smoothing width in grid cells.
        #[arg(long, default_value_t = 1.5)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate acquisition and reconstruction, reporting image metrics.
    Simulate {
        trajectory: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic phantom volumes (and coil maps when configured).
    GeneratePhantoms {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of volumes; defaults to the config dataset size.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Optimize { config, seed, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            cmd_optimize(&config, &cfg, &out_dir, seed)?;
            println!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::Validate { trajectory, config } => {
            let (limits, contrast) = match config {
                Some(p) => {
                    let cfg = RunConfig::from_path(&p)?;
                    (cfg.scanner_limits()?, cfg.contrast.as_ref().map(|c| c.time_index))
                }
                None => (ktraj::core::ScannerLimits::default(), None),
            };
            let report = cmd_validate(&trajectory, &limits, contrast)?;
            print!("{}", report.to_lines());
            Ok(())
        }
        Command::Psf { trajectory, sigma, out } => {
            cmd_psf(&trajectory, sigma, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Simulate { trajectory, config, seed, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let report = cmd_simulate(&trajectory, &cfg, &out_dir, seed)?;
            println!("mean_psnr_db={}", report.mean_psnr_db);
            println!("mean_nrmse={}", report.mean_nrmse);
            Ok(())
        }
        Command::GeneratePhantoms { config, seed, out, count } => {
            let cfg = RunConfig::from_path(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let n = count.unwrap_or(cfg.dataset.n_phantoms);
            let written = cmd_generate_phantoms(&cfg, &out_dir, seed, n)?;
            println!("wrote {} volumes to {}", written.len(), out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
