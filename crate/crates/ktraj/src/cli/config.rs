//! Run configuration file: a single TOML document, schema-validated
//! with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core::{LossWeights, ScannerLimits};
use crate::nufft::AccuracyTier;
use crate::param::{AngleScheme, Geometry, TrajKind};
use crate::recon::{ReconConfig, ReconMethod, RoughnessOp};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub geometry: GeometrySec,
    pub init: InitSec,
    #[serde(default)]
    pub limits: LimitsSec,
    #[serde(default)]
    pub weights: WeightsSec,
    #[serde(default)]
    pub recon: ReconSec,
    #[serde(default)]
    pub optimizer: OptimizerSec,
    #[serde(default)]
    pub contrast: Option<ContrastSec>,
    #[serde(default)]
    pub dataset: DatasetSec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySec {
    pub fov_mm: Vec<f64>,
    pub matrix: Vec<usize>,
    pub n_readout: usize,
    pub raster_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSec {
    /// `radial2d`, `stack_of_stars`, `kooshball`, `epi`, or `file`.
    pub kind: String,
    #[serde(default)]
    pub n_spokes: Option<usize>,
    /// `uniform` or `golden`.
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub n_kz: Option<usize>,
    #[serde(default)]
    pub spokes_per_plane: Option<usize>,
    #[serde(default)]
    pub n_lines: Option<usize>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

/// Limits default to 90% of the physical scanner limits, leaving
/// headroom for the soft penalties.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSec {
    pub gmax_mt_m: f64,
    pub smax_t_m_s: f64,
    pub pmax: f64,
    pub smin_t_m_s: f64,
    pub chronaxie_s: f64,
}

impl Default for LimitsSec {
    fn default() -> Self {
        let phys = ScannerLimits::default();
        Self {
            gmax_mt_m: 0.9 * phys.gmax_mt_m,
            smax_t_m_s: 0.9 * phys.smax_t_m_s,
            pmax: phys.pmax,
            smin_t_m_s: phys.smin_t_m_s,
            chronaxie_s: phys.chronaxie_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSec {
    pub recon: f64,
    pub gradient: f64,
    pub slew: f64,
    pub pns: f64,
    pub contrast: f64,
    pub recon_l1_frac: f64,
}

impl Default for WeightsSec {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            recon: w.w_recon,
            gradient: w.w_grad,
            slew: w.w_slew,
            pns: w.w_pns,
            contrast: w.w_contrast,
            recon_l1_frac: w.recon_l1_frac,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSec {
    /// `cg_sense` or `pls`.
    pub method: String,
    pub lambda: f64,
    pub n_iter: usize,
    pub use_toeplitz: bool,
}

impl Default for ReconSec {
    fn default() -> Self {
        Self { method: "cg_sense".into(), lambda: 1e-3, n_iter: 6, use_toeplitz: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSec {
    pub eta: f64,
    pub eta_theta: f64,
    pub steps_per_level: usize,
    pub levels: Vec<usize>,
    pub sgld_noise: bool,
    pub batch_size: usize,
    /// `bspline`, `freeform`, or `rotation`.
    pub mode: String,
    pub pin_first: bool,
    pub train_theta: bool,
    pub clip_grad: bool,
}

impl Default for OptimizerSec {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            eta_theta: 0.0,
            steps_per_level: 200,
            levels: vec![32, 16, 8],
            sgld_noise: true,
            batch_size: 1,
            mode: "bspline".into(),
            pin_first: false,
            train_theta: false,
            clip_grad: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSec {
    /// Readout sample locked to the k-space center in every shot.
    pub time_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSec {
    /// Directory of volume files; generated phantoms when absent.
    #[serde(default)]
    pub phantom_dir: Option<PathBuf>,
    pub n_phantoms: usize,
    pub n_coils: usize,
    /// Relative measurement-noise level (fraction of peak |y|).
    pub noise: f64,
}

impl Default for DatasetSec {
    fn default() -> Self {
        Self { phantom_dir: None, n_phantoms: 8, n_coils: 1, noise: 0.01 }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.fov_mm.len() != g.matrix.len() || !(g.fov_mm.len() == 2 || g.fov_mm.len() == 3) {
            return Err(Error::InvalidConfig("geometry must be 2D or 3D, fov and matrix consistent".into()));
        }
        if g.raster_s <= 0.0 || g.n_readout < 3 {
            return Err(Error::InvalidConfig("raster_s must be > 0, n_readout >= 3".into()));
        }
        self.scanner_limits()?.validate()?;
        self.loss_weights().validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.traj_kind()?;
        self.recon_config()?;
        if self.weights.contrast > 0.0 {
            let c = self
                .contrast
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("contrast weight > 0 needs [contrast]".into()))?;
            if c.time_index >= g.n_readout {
                return Err(Error::InvalidConfig("contrast time_index beyond readout".into()));
            }
        }
        match self.optimizer.mode.as_str() {
            "bspline" | "freeform" | "rotation" => {}
            other => {
                return Err(Error::InvalidConfig(format!("unknown optimizer mode: {other}")))
            }
        }
        if self.optimizer.eta <= 0.0 {
            return Err(Error::InvalidConfig("optimizer eta must be > 0".into()));
        }
        if self.weights.recon > 0.0 && self.dataset.phantom_dir.is_none() && self.dataset.n_phantoms == 0 {
            return Err(Error::InvalidConfig("recon weight > 0 needs phantoms".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            fov_mm: self.geometry.fov_mm.clone(),
            matrix_size: self.geometry.matrix.clone(),
            n_readout: self.geometry.n_readout,
            raster_s: self.geometry.raster_s,
        }
    }

    pub fn scanner_limits(&self) -> Result<ScannerLimits> {
        let l = ScannerLimits {
            gmax_mt_m: self.limits.gmax_mt_m,
            smax_t_m_s: self.limits.smax_t_m_s,
            pmax: self.limits.pmax,
            smin_t_m_s: self.limits.smin_t_m_s,
            chronaxie_s: self.limits.chronaxie_s,
            ..ScannerLimits::default()
        };
        l.validate()?;
        Ok(l)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            w_recon: self.weights.recon,
            w_grad: self.weights.gradient,
            w_slew: self.weights.slew,
            w_pns: self.weights.pns,
            w_contrast: self.weights.contrast,
            recon_l1_frac: self.weights.recon_l1_frac,
        }
    }

    fn scheme(&self) -> Result<AngleScheme> {
        match self.init.scheme.as_deref() {
            None | Some("golden") => Ok(AngleScheme::GoldenAngle),
            Some("uniform") => Ok(AngleScheme::Uniform),
            Some(other) => Err(Error::InvalidConfig(format!("unknown angle scheme: {other}"))),
        }
    }

    /// The generator described by `[init]`; `None` for `kind = "file"`.
    pub fn traj_kind(&self) -> Result<Option<TrajKind>> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Error::InvalidConfig(format!("init.{name} required for {}", self.init.kind)))
        };
        match self.init.kind.as_str() {
            "radial2d" => Ok(Some(TrajKind::Radial2d {
                n_spokes: need(self.init.n_spokes, "n_spokes")?,
                scheme: self.scheme()?,
            })),
            "stack_of_stars" => Ok(Some(TrajKind::StackOfStars {
                n_kz: need(self.init.n_kz, "n_kz")?,
                spokes_per_plane: need(self.init.spokes_per_plane, "spokes_per_plane")?,
                scheme: self.scheme()?,
            })),
            "kooshball" => Ok(Some(TrajKind::Kooshball3d {
                n_spokes: need(self.init.n_spokes, "n_spokes")?,
            })),
            "epi" => Ok(Some(TrajKind::Epi { n_lines: need(self.init.n_lines, "n_lines")? })),
            "file" => {
                if self.init.path.is_none() {
                    return Err(Error::InvalidConfig("init.path required for kind = file".into()));
                }
                Ok(None)
            }
            other => Err(Error::InvalidConfig(format!("unknown init kind: {other}"))),
        }
    }

    pub fn recon_config(&self) -> Result<ReconConfig> {
        let method = match self.recon.method.as_str() {
            "cg_sense" => ReconMethod::CgSense,
            "pls" => ReconMethod::Pls,
            other => return Err(Error::InvalidConfig(format!("unknown recon method: {other}"))),
        };
        if self.recon.lambda < 0.0 || self.recon.n_iter == 0 {
            return Err(Error::InvalidConfig("recon lambda must be >= 0, n_iter >= 1".into()));
        }
        Ok(ReconConfig {
            method,
            lambda: self.recon.lambda,
            n_iter: self.recon.n_iter,
            pls_roughness: RoughnessOp::FiniteDiff,
            use_toeplitz: self.recon.use_toeplitz,
        })
    }

    /// NUFFT accuracy used during optimization steps.
    pub fn train_tier(&self) -> AccuracyTier {
        AccuracyTier::Train
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
out_dir = "out"

[geometry]
fov_mm = [220.0, 220.0]
matrix = [64, 64]
n_readout = 64
raster_s = 4e-6

[init]
kind = "radial2d"
n_spokes = 16
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.limits.gmax_mt_m, 45.0);
        assert_eq!(cfg.limits.smax_t_m_s, 135.0);
        assert_eq!(cfg.optimizer.levels, vec![32, 16, 8]);
        assert!(matches!(cfg.traj_kind().unwrap(), Some(TrajKind::Radial2d { n_spokes: 16, .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\ntypo_key = 1\n");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
        let bad2 = MINIMAL.replace("[init]", "[init]\nbogus = 2");
        assert!(toml::from_str::<RunConfig>(&bad2).is_err());
    }

    #[test]
    fn contrast_weight_requires_section() {
        let cfg_text = format!(
            "{MINIMAL}\n[weights]\nrecon = 0.0\ngradient = 0.01\nslew = 0.01\npns = 1.0\ncontrast = 1.0\nrecon_l1_frac = 0.5\n"
        );
        let cfg: RunConfig = toml::from_str(&cfg_text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn file_kind_requires_path() {
        let cfg_text = MINIMAL.replace("kind = \"radial2d\"\nn_spokes = 16", "kind = \"file\"");
        let cfg: RunConfig = toml::from_str(&cfg_text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
