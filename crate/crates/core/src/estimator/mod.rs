//! Lighting parameter estimation by gradient descent on the total loss.

mod fit;
mod loss;
mod optim;

pub use fit::{Estimator, FitConfig, FitResult, FALLBACK_DEPTH};
pub use loss::{pixel_loss, render_scene, roi_loss, total_loss, FitScene, LossBreakdown, LossConfig, PixelNorm};
pub use optim::{minimize, AdamConfig, Minimized};

use crate::error::{Error, Result};
use crate::raster::Image;

/// Floor on the input's mean luma in [`auto_target`].
pub const AUTO_TARGET_LUMA_FLOOR: f64 = 1e-4;
pub const DEFAULT_TARGET_LUMA: f64 = 0.5;

/// Mean of `(R + G + B) / 3` over all pixels.
pub fn mean_luma(image: &Image) -> f64 {
    let n = image.pixel_count().max(1) as f64;
    image
        .as_slice()
        .chunks_exact(3)
        .map(|p| (f64::from(p[0]) + f64::from(p[1]) + f64::from(p[2])) / 3.0)
        .sum::<f64>()
        / n
}

/// Global gamma curve mapping the input's mean luma onto `target_mean_luma`.
pub fn auto_target(input: &Image, target_mean_luma: f64) -> Result<Image> {
    if !(target_mean_luma > 0.0 && target_mean_luma < 1.0) {
        return Err(Error::invalid(format!(
            "target mean luma {target_mean_luma} must lie in (0, 1)"
        )));
    }
    // an all-white input would make the exponent infinite
    let mean = mean_luma(input).clamp(AUTO_TARGET_LUMA_FLOOR, 1.0 - 1e-9);
    let gamma = target_mean_luma.ln() / mean.ln();
    Ok(input.map(|v| (f64::from(v.max(0.0))).powf(gamma) as f32))
}
