//! Pixel, ROI and total losses with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lighting::{regularization_loss, LightingParams, ParamBounds, ParamVector};
use crate::raster::{DepthMap, Raster64};
use crate::render::{light_map64, light_map_vjp, ShadingConfig, ShadingGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelNorm {
    /// Mean absolute difference.
    L1,
    /// Root of the mean squared difference.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Floor on the depth weight.
    pub sigma_c: f64,
    /// Floor on the target-luminance weight.
    pub sigma_l: f64,
    /// Weight of the lighting regularization term.
    pub lambda_r: f64,
    pub pixel_norm: PixelNorm,
    /// Whether the ROI term participates; off for pixel-only ablations.
    #[serde(default = "default_true")]
    pub include_roi: bool,
}

fn default_true() -> bool {
    true
}

impl LossConfig {
    pub const DEFAULT_SIGMA_C: f64 = 0.2;
    pub const DEFAULT_SIGMA_L: f64 = 0.2;
    pub const DEFAULT_LAMBDA_R: f64 = 0.1;

    /// `L_pixel` only.
    pub fn pixel_only() -> Self {
        Self {
            include_roi: false,
            lambda_r: 0.0,
            ..Self::default()
        }
    }

    /// `L_pixel + L_roi`.
    pub fn pixel_roi() -> Self {
        Self {
            lambda_r: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_c", self.sigma_c), ("sigma_l", self.sigma_l)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        if !(self.lambda_r >= 0.0) {
            return Err(Error::invalid(format!("lambda_r = {} must be >= 0", self.lambda_r)));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma_c: Self::DEFAULT_SIGMA_C,
            sigma_l: Self::DEFAULT_SIGMA_L,
            lambda_r: Self::DEFAULT_LAMBDA_R,
            pixel_norm: PixelNorm::L1,
            include_roi: true,
        }
    }
}

/// Pixel reconstruction loss and its gradient with respect to `output`.
pub fn pixel_loss(output: &Raster64, target: &Raster64, norm: PixelNorm) -> Result<(f64, Raster64)> {
    output.ensure_same_dims(target)?;
    let n = output.as_slice().len().max(1) as f64;
    let diffs = output.as_slice().iter().zip(target.as_slice()).map(|(o, t)| o - t);
    let (loss, grad): (f64, Vec<f64>) = match norm {
        PixelNorm::L1 => {
            let grad: Vec<f64> = diffs.clone().map(|d| sign(d) / n).collect();
            (diffs.map(f64::abs).sum::<f64>() / n, grad)
        }
        PixelNorm::L2 => {
            let d: Vec<f64> = diffs.collect();
            let rms = (d.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let grad = if rms > 0.0 {
                d.iter().map(|v| v / (n * rms)).collect()
            } else {
                vec![0.0; d.len()]
            };
            (rms, grad)
        }
    };
    Ok((loss, Raster64::from_vec(output.width(), output.height(), grad)?))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Depth- and luminance-weighted squared error, averaged over pixel-channels.
pub fn roi_loss(
    output: &Raster64,
    target: &Raster64,
    depth: &DepthMap,
    sigma_c: f64,
    sigma_l: f64,
) -> Result<(f64, Raster64)> {
    output.ensure_same_dims(target)?;
    depth.ensure_dims(output.dims())?;
    let n = output.as_slice().len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; output.as_slice().len()];
    for (i, ((o, t), g)) in output
        .as_slice()
        .chunks_exact(3)
        .zip(target.as_slice().chunks_exact(3))
        .zip(grad.chunks_exact_mut(3))
        .enumerate()
    {
        let wd = f64::from(depth.values()[i]).max(sigma_c);
        for c in 0..3 {
            let w = wd * t[c].max(sigma_l);
            let d = o[c] - t[c];
            loss += (w * d) * (w * d);
            g[c] = 2.0 * w * w * d / n;
        }
    }
    Ok((loss / n, Raster64::from_vec(output.width(), output.height(), grad)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pixel: f64,
    pub roi: f64,
    pub reg: f64,
    pub total: f64,
}

/// Everything a loss evaluation needs except the parameters.
#[derive(Debug, Clone)]
pub struct FitScene {
    pub base: Raster64,
    pub target: Raster64,
    pub geometry: ShadingGeometry,
}

impl FitScene {
    pub fn new(base: Raster64, target: Raster64, geometry: ShadingGeometry) -> Result<Self> {
        base.ensure_same_dims(&target)?;
        geometry.depth().ensure_dims(base.dims())?;
        Ok(Self { base, target, geometry })
    }
}

/// Rendered output for `params` on `scene` in double precision.
pub fn render_scene(params: &LightingParams, scene: &FitScene, shading: &ShadingConfig) -> Result<Raster64> {
    let light = light_map64(params, &scene.geometry, shading)?;
    crate::render::compose64(&scene.base, &light)
}

/// `L_pixel + L_roi + lambda_r * L_reg` and its gradient in physical parameter space.
pub fn total_loss(
    params: &LightingParams,
    scene: &FitScene,
    shading: &ShadingConfig,
    loss: &LossConfig,
    bounds: &ParamBounds,
) -> Result<(LossBreakdown, ParamVector)> {
    let light = light_map64(params, &scene.geometry, shading)?;
    let output = crate::render::compose64(&scene.base, &light)?;
    let (pixel, mut grad_out) = pixel_loss(&output, &scene.target, loss.pixel_norm)?;
    let mut roi = 0.0;
    if loss.include_roi {
        let (r, g) = roi_loss(
            &output,
            &scene.target,
            scene.geometry.depth(),
            loss.sigma_c,
            loss.sigma_l,
        )?;
        roi = r;
        for (a, b) in grad_out.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += b;
        }
    }
    // dO/dL = base
    for (g, b) in grad_out.as_mut_slice().iter_mut().zip(scene.base.as_slice()) {
        *g *= b;
    }
    let mut grad = light_map_vjp(&grad_out, params, &scene.geometry, shading)?;
    let mut reg = 0.0;
    if loss.lambda_r > 0.0 {
        let (r, rg) = regularization_loss(params, bounds);
        reg = r;
        for (a, b) in grad.as_mut_slice().iter_mut().zip(rg.as_slice()) {
            *a += loss.lambda_r * b;
        }
    }
    let total = pixel + roi + loss.lambda_r * reg;
    Ok((LossBreakdown { pixel, roi, reg, total }, grad))
}
