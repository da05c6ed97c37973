//! Seeded synthetic scenes: smooth depth, textured base images and planted
//! lighting. Used by the ablation and benchmark harnesses and by tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::lighting::{LightingParams, VirtualLight};
use crate::raster::{DepthMap, Image};
use crate::render::{compose64, light_map_reference, ShadingConfig, ShadingGeometry};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth depth in `[0.1, 0.9]`: a tilted plane plus a few Gaussian bumps.
pub fn smooth_depth(width: usize, height: usize, seed: u64) -> DepthMap {
    smooth_depth_between(width, height, 0.1, 0.9, seed)
}

/// The same surface family as [`smooth_depth`], remapped into `[lo, hi]`.
pub fn smooth_depth_between(width: usize, height: usize, lo: f64, hi: f64, seed: u64) -> DepthMap {
    let mut r = rng(seed);
    let tilt = [r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)];
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                r.gen_range(0.2..0.8),
                r.gen_range(0.2..0.8),
                r.gen_range(0.1..0.3),
                r.gen_range(-0.25..0.25),
            )
        })
        .collect();
    DepthMap::from_fn(width, height, |u, v| {
        let x = (u as f64 + 0.5) / width as f64;
        let y = (v as f64 + 0.5) / height as f64;
        let mut z = 0.5 + tilt[0] * (x - 0.5) + tilt[1] * (y - 0.5);
        for &(cx, cy, rad, amp) in &bumps {
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            z += amp * (-d2 / (2.0 * rad * rad)).exp();
        }
        let unit = (z.clamp(0.1, 0.9) - 0.1) / 0.8;
        (lo + (hi - lo) * unit).clamp(0.0, 1.0) as f32
    })
    .expect("in range by construction")
}

/// Textured base in `[0.05, 0.95]`: low-frequency colour gradients plus noise.
pub fn textured_image(width: usize, height: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let phase: [f64; 6] = std::array::from_fn(|_| r.gen_range(0.0..std::f64::consts::TAU));
    let freq: [f64; 6] = std::array::from_fn(|_| r.gen_range(1.0..4.0));
    Image::from_fn(width, height, |u, v| {
        let x = (u as f64 + 0.5) / width as f64;
        let y = (v as f64 + 0.5) / height as f64;
        std::array::from_fn(|c| {
            let wave = 0.5
                + 0.2 * (freq[c] * x * std::f64::consts::TAU + phase[c]).sin()
                + 0.15 * (freq[c + 3] * y * std::f64::consts::TAU + phase[c + 3]).cos();
            (wave + r.gen_range(-0.1..0.1)).clamp(0.05, 0.95) as f32
        })
    })
}

/// Uniformly random pixels in `[lo, hi)`.
pub fn noise_image(width: usize, height: usize, lo: f32, hi: f32, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(width, height, |_, _| std::array::from_fn(|_| r.gen_range(lo..hi)))
}

/// Random unit vector with a positive z component of at least `min_z`.
fn toward_camera(r: &mut ChaCha8Rng, min_z: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(min_z..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 && v[2] / n >= min_z {
            return v.map(|c| c / n);
        }
    }
}

/// Surfaces used by planted scenes stay in this depth band, behind every
/// planted light, so no light sits inside the surface.
pub const PLANTED_DEPTH: (f64, f64) = (0.05, 0.35);

/// Plausible random lighting: moderate colours, broad falloff, facing the
/// camera, placed in front of [`PLANTED_DEPTH`].
pub fn random_lighting(k: usize, seed: u64) -> LightingParams {
    let mut r = rng(seed);
    let lights = (0..k)
        .map(|_| {
            let tint: f64 = r.gen_range(0.05..0.25);
            VirtualLight::new(
                [0; 3].map(|_| tint * r.gen_range(0.7..1.3)),
                toward_camera(&mut r, 0.5),
                [r.gen_range(0.1..0.9), r.gen_range(0.1..0.9), r.gen_range(0.6..1.0)],
                r.gen_range(2.0..12.0),
            )
        })
        .collect();
    let a: f64 = r.gen_range(0.4..0.8);
    LightingParams {
        lights,
        ambient: [a; 3],
    }
}

/// Noise half-width on [`PlantedScene::grid`] targets.
pub const GRID_NOISE: f32 = 0.04;

/// Nine localized lights on a jittered 3x3 grid, each with its own hue.
/// Fewer lights cannot reproduce the nine separate pools.
pub fn grid_lighting(seed: u64) -> LightingParams {
    let mut r = rng(seed);
    let lights = (0..9)
        .map(|i| {
            let (gx, gy) = ((i % 3) as f64, (i / 3) as f64);
            let hue = r.gen_range(0.0..std::f64::consts::TAU);
            let color = [0.0, 2.094, 4.189].map(|o| 0.03 * (1.0 + (hue + o).cos()));
            VirtualLight::new(
                color,
                toward_camera(&mut r, 0.7),
                [
                    (gx + 0.5) / 3.0 + r.gen_range(-0.05..0.05),
                    (gy + 0.5) / 3.0 + r.gen_range(-0.05..0.05),
                    r.gen_range(0.42..0.45),
                ],
                r.gen_range(4.0..8.0),
            )
        })
        .collect();
    LightingParams {
        lights,
        ambient: [r.gen_range(0.4..0.6); 3],
    }
}

/// Depth for planted scenes, within [`PLANTED_DEPTH`].
pub fn planted_depth(width: usize, height: usize, seed: u64) -> DepthMap {
    smooth_depth_between(width, height, PLANTED_DEPTH.0, PLANTED_DEPTH.1, seed)
}

/// The single white light from the recovery check: colour 2, straight on,
/// centred, falloff 5, over unit ambient.
pub fn single_light() -> LightingParams {
    LightingParams {
        lights: vec![VirtualLight::new([2.0; 3], [0.0, 0.0, 1.0], [0.5; 3], 5.0)],
        ambient: [1.0; 3],
    }
}

/// Input, depth and a target rendered from known lighting.
#[derive(Debug, Clone)]
pub struct PlantedScene {
    pub input: Image,
    pub depth: DepthMap,
    pub target: Image,
    pub truth: LightingParams,
}

impl PlantedScene {
    /// Renders `truth` over `input` with the double-precision reference path.
    pub fn render(
        input: Image,
        depth: DepthMap,
        truth: LightingParams,
        shading: &ShadingConfig,
        z_gain: f64,
    ) -> Result<Self> {
        let geom = ShadingGeometry::from_depth(depth.clone(), z_gain)?;
        let light = light_map_reference(&truth, geom.depth(), geom.normals(), shading)?;
        let target = compose64(&input.to_f64(), &light)?.to_f32();
        Ok(Self {
            input,
            depth,
            target,
            truth,
        })
    }

    /// Textured base and a shallow smooth surface under [`grid_lighting`],
    /// with uniform noise of half-width [`GRID_NOISE`] added to the target.
    /// The noise sets a loss floor that any sufficient light count reaches.
    pub fn grid(width: usize, height: usize, seed: u64) -> Result<Self> {
        let mut scene = Self::render(
            textured_image(width, height, seed ^ 0x1111),
            smooth_depth_between(width, height, 0.25, 0.35, seed ^ 0x2222),
            grid_lighting(seed ^ 0x3333),
            &ShadingConfig::default(),
            1.0,
        )?;
        let mut r = rng(seed ^ 0x4444);
        for v in scene.target.as_mut_slice() {
            *v += r.gen_range(-GRID_NOISE..GRID_NOISE);
        }
        Ok(scene)
    }

    /// Textured base, smooth depth and `random_lighting(k)`, all from one seed.
    pub fn random(width: usize, height: usize, k: usize, seed: u64) -> Result<Self> {
        Self::render(
            textured_image(width, height, seed ^ 0x1111),
            planted_depth(width, height, seed ^ 0x2222),
            random_lighting(k, seed ^ 0x3333),
            &ShadingConfig::default(),
            1.0,
        )
    }
}
