//! Session configuration shared by the command line tools and the studio.
//!
//! Every default here is taken from the module that owns the setting, so a
//! config file only needs to list what it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::albedo::AlbedoConfig;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, FitConfig, LossConfig, PixelNorm, DEFAULT_TARGET_LUMA};
use crate::geometry::DEFAULT_Z_GAIN;
use crate::io::Transfer;
use crate::lighting::{ParamBounds, ParamStats};
use crate::render::ShadingConfig;
use crate::temporal::DEFAULT_BETA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub input: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub stats: Option<PathBuf>,

    pub k: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma_c: f64,
    pub sigma_l: f64,
    pub lambda_r: f64,
    pub pixel_norm: PixelNorm,
    pub include_roi: bool,
    pub c_max: f64,
    pub s_max: f64,
    pub ambient_max: f64,
    pub lambda_amb: f64,

    pub working_short_side: usize,
    pub coarse_factor: usize,
    pub coarse_iters: usize,
    pub refine_iters: usize,
    pub step_size: f64,
    pub seed: u64,
    pub z_gain: f64,
    pub depth_normalize: bool,
    pub target_luma: f64,

    pub beta: f64,
    pub keyframe_interval: usize,

    pub albedo: bool,
    pub tau: f64,
    pub blur_frac: f64,

    pub transfer: Transfer,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        let loss = LossConfig::default();
        let shading = ShadingConfig::default();
        let bounds = ParamBounds::default();
        let albedo = AlbedoConfig::default();
        Self {
            input: None,
            depth: None,
            target: None,
            output: None,
            stats: None,
            k: fit.k,
            sigma1: shading.sigma1,
            sigma2: shading.sigma2,
            sigma_c: loss.sigma_c,
            sigma_l: loss.sigma_l,
            lambda_r: loss.lambda_r,
            pixel_norm: loss.pixel_norm,
            include_roi: loss.include_roi,
            c_max: bounds.c_max,
            s_max: bounds.s_max,
            ambient_max: bounds.ambient_max,
            lambda_amb: bounds.lambda_amb,
            working_short_side: fit.working_short_side,
            coarse_factor: fit.coarse_factor,
            coarse_iters: fit.coarse_iters,
            refine_iters: fit.refine_iters,
            step_size: fit.step_size,
            seed: fit.seed,
            z_gain: DEFAULT_Z_GAIN,
            depth_normalize: false,
            target_luma: DEFAULT_TARGET_LUMA,
            beta: DEFAULT_BETA,
            keyframe_interval: 1,
            albedo: false,
            tau: albedo.tau,
            blur_frac: albedo.blur_sigma_frac,
            transfer: Transfer::AsIs,
            threads: 0,
        }
    }
}

impl SessionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            field: e.path().to_string(),
            message: e.inner().message().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&crate::io::read_text(path.as_ref())?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every path the config names must exist, except the output.
    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.input, &self.depth, &self.target, &self.stats]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::NotFound(p.clone()));
            }
        }
        Ok(())
    }

    pub fn shading(&self) -> ShadingConfig {
        ShadingConfig {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            sigma_c: self.sigma_c,
            sigma_l: self.sigma_l,
            lambda_r: self.lambda_r,
            pixel_norm: self.pixel_norm,
            include_roi: self.include_roi,
        }
    }

    pub fn bounds(&self) -> ParamBounds {
        ParamBounds {
            c_max: self.c_max,
            s_max: self.s_max,
            ambient_max: self.ambient_max,
            lambda_amb: self.lambda_amb,
        }
    }

    pub fn albedo_config(&self) -> AlbedoConfig {
        AlbedoConfig {
            tau: self.tau,
            blur_sigma_frac: self.blur_frac,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.k,
            working_short_side: self.working_short_side,
            coarse_factor: self.coarse_factor,
            coarse_iters: self.coarse_iters,
            refine_iters: self.refine_iters,
            step_size: self.step_size,
            seed: self.seed,
            z_gain: self.z_gain,
        }
    }

    /// Estimator with stats read from `self.stats` when set.
    pub fn estimator(&self) -> Result<Estimator> {
        let stats = match &self.stats {
            Some(p) => crate::io::load_stats(p)?,
            None => ParamStats::default_for(self.k),
        };
        let est = Estimator {
            fit: self.fit_config(),
            loss: self.loss(),
            shading: self.shading(),
            stats,
            bounds: self.bounds(),
        };
        est.validate()?;
        Ok(est)
    }
}
