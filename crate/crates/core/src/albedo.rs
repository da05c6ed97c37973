//! Classical illumination-mask baseline and albedo extraction `A = I - Z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, Raster};

/// Nonnegative three-channel glare mask `Z`.
pub type IlluminationMask = Raster<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbedoConfig {
    /// Blurred-luma threshold above which light is treated as glare.
    pub tau: f64,
    /// Gaussian sigma as a fraction of image width.
    pub blur_sigma_frac: f64,
}

impl AlbedoConfig {
    pub const DEFAULT_TAU: f64 = 0.85;
    pub const DEFAULT_BLUR_SIGMA_FRAC: f64 = 0.02;

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        if !(self.blur_sigma_frac > 0.0) {
            return Err(Error::invalid(format!(
                "blur_sigma_frac = {} must be > 0",
                self.blur_sigma_frac
            )));
        }
        Ok(())
    }
}

impl Default for AlbedoConfig {
    fn default() -> Self {
        Self {
            tau: Self::DEFAULT_TAU,
            blur_sigma_frac: Self::DEFAULT_BLUR_SIGMA_FRAC,
        }
    }
}

/// Channel-symmetric luma `(R + G + B) / 3`.
fn luma(px: &[f32]) -> f32 {
    let mut v = [f64::from(px[0]), f64::from(px[1]), f64::from(px[2])];
    v.sort_by(f64::total_cmp);
    ((v[0] + v[1] + v[2]) / 3.0) as f32
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn blur_axis(src: &[f32], w: usize, h: usize, kernel: &[f64], horizontal: bool) -> Vec<f32> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (t, &kv) in kernel.iter().enumerate() {
                let off = t as isize - radius;
                let (sx, sy) = if horizontal {
                    ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                };
                acc += kv * f64::from(src[sy * w + sx]);
            }
            *o = acc as f32;
        }
    });
    out
}

/// Separable Gaussian blur with replicated borders; a constant field is a fixed point.
pub(crate) fn gaussian_blur(values: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let tmp = blur_axis(values, w, h, &kernel, true);
    blur_axis(&tmp, w, h, &kernel, false)
}

/// Blurred luma of `image`, the quantity the glare threshold acts on.
pub fn blurred_luma(image: &Image, blur_sigma_frac: f64) -> Vec<f32> {
    let (w, h) = image.dims();
    let y: Vec<f32> = image.as_slice().chunks_exact(3).map(luma).collect();
    gaussian_blur(&y, w, h, blur_sigma_frac * w as f64)
}

/// `Z_c = max(0, blur(luma) - tau)` replicated across channels.
pub fn estimate_illumination_mask(image: &Image, cfg: &AlbedoConfig) -> Result<IlluminationMask> {
    cfg.validate()?;
    let tau = cfg.tau as f32;
    let blurred = blurred_luma(image, cfg.blur_sigma_frac);
    let data = blurred
        .iter()
        .flat_map(|&b| {
            let e = (b - tau).max(0.0);
            [e, e, e]
        })
        .collect();
    Raster::from_vec(image.width(), image.height(), data)
}

/// `A = max(I - Z, 0)`.
pub fn apply_albedo(image: &Image, mask: &IlluminationMask) -> Result<Image> {
    image.ensure_same_dims(mask)?;
    let data = image
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(i, z)| (i - z).max(0.0))
        .collect();
    Raster::from_vec(image.width(), image.height(), data)
}
