//! Virtual-light shading.
//!
//! For pixel `i` with position `p_i` and normal `N(i)`:
//!
//! ```text
//! L(i)   = ambient + sum_k c_k * max(sigma2, N(i) . d_k) / (s_k * |p_k - p_i|^2 + sigma1)
//! O(i)   = I(i) * L(i)
//! ```
//!
//! Three evaluators share that formula: a tiled fast path with
//! single-precision output (`render_light_map`, `light_map`), a scalar
//! double-precision reference (`light_map_reference`) and a row-parallel
//! double-precision path used by the estimator together with the
//! vector-Jacobian product. The fast path still does its arithmetic in double
//! precision: single-precision position differences lose too much near a
//! light. Light contributions are always summed in index order, so output
//! never depends on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normals_from_depth, pixel_center, NormalMap};
use crate::lighting::{
    dot, LightingParams, ParamVector, Vec3, AMBIENT_DIM, ATTENUATION, COLOR, DIRECTION, PER_LIGHT, POSITION,
};
use crate::raster::{DepthMap, Image, LightMap, Raster, Raster64};

/// Rows per work item on the fast path.
const TILE_ROWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadingConfig {
    /// Denominator floor.
    pub sigma1: f64,
    /// Lambertian floor.
    pub sigma2: f64,
}

impl ShadingConfig {
    pub const DEFAULT_SIGMA1: f64 = 0.01;
    pub const DEFAULT_SIGMA2: f64 = 0.05;

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0) {
            return Err(Error::invalid(format!("sigma1 = {} must be > 0", self.sigma1)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::invalid(format!("sigma2 = {} must be >= 0", self.sigma2)));
        }
        Ok(())
    }
}

impl Default for ShadingConfig {
    fn default() -> Self {
        Self {
            sigma1: Self::DEFAULT_SIGMA1,
            sigma2: Self::DEFAULT_SIGMA2,
        }
    }
}

/// Depth and normals of one scene, checked for matching size.
#[derive(Debug, Clone)]
pub struct ShadingGeometry {
    depth: DepthMap,
    normals: NormalMap,
}

impl ShadingGeometry {
    pub fn new(depth: DepthMap, normals: NormalMap) -> Result<Self> {
        depth.ensure_dims(normals.dims())?;
        Ok(Self { depth, normals })
    }

    pub fn from_depth(depth: DepthMap, z_gain: f64) -> Result<Self> {
        let normals = normals_from_depth(&depth, z_gain)?;
        Self::new(depth, normals)
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    #[inline]
    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    #[inline]
    pub fn normals(&self) -> &NormalMap {
        &self.normals
    }
}

fn check_inputs(depth: &DepthMap, normals: &NormalMap, cfg: &ShadingConfig) -> Result<()> {
    depth.ensure_dims(normals.dims())?;
    cfg.validate()
}

fn fast_tile(
    out: &mut [f32],
    first_row: usize,
    width: usize,
    height: usize,
    params: &LightingParams,
    geom: &ShadingGeometry,
    cfg: &ShadingConfig,
) {
    let depth = geom.depth.values();
    let normals = geom.normals.as_slice();
    for (r, row) in out.chunks_exact_mut(width * 3).enumerate() {
        let v = first_row + r;
        let y = pixel_center(v, height);
        for (u, px) in row.chunks_exact_mut(3).enumerate() {
            let i = v * width + u;
            let p = [pixel_center(u, width), y, f64::from(depth[i])];
            let acc = pixel_light64(params, p, normals[i], cfg);
            px[0] = acc[0] as f32;
            px[1] = acc[1] as f32;
            px[2] = acc[2] as f32;
        }
    }
}

/// Tiled, data-parallel light map with single-precision output.
pub fn render_light_map(params: &LightingParams, geom: &ShadingGeometry, cfg: &ShadingConfig) -> Result<LightMap> {
    cfg.validate()?;
    let (width, height) = geom.dims();
    let mut out = vec![0.0f32; width * height * 3];
    if width > 0 {
        out.par_chunks_mut(TILE_ROWS * width * 3)
            .enumerate()
            .for_each(|(t, tile)| fast_tile(tile, t * TILE_ROWS, width, height, params, geom, cfg));
    }
    Raster::from_vec(width, height, out)
}

/// Fast-path light map from separate depth and normal maps.
pub fn light_map(
    params: &LightingParams,
    depth: &DepthMap,
    normals: &NormalMap,
    cfg: &ShadingConfig,
) -> Result<LightMap> {
    check_inputs(depth, normals, cfg)?;
    let geom = ShadingGeometry::new(depth.clone(), normals.clone())?;
    render_light_map(params, &geom, cfg)
}

/// Per-pixel double-precision evaluation, shared by the reference and the
/// estimator's forward pass.
#[inline]
fn pixel_light64(params: &LightingParams, p: Vec3, n: Vec3, cfg: &ShadingConfig) -> Vec3 {
    let mut acc = params.ambient;
    for l in &params.lights {
        let lambert = dot(n, l.direction).max(cfg.sigma2);
        let d = [l.position[0] - p[0], l.position[1] - p[1], l.position[2] - p[2]];
        let gain = lambert / (l.attenuation * dot(d, d) + cfg.sigma1);
        for c in 0..3 {
            acc[c] += l.color[c] * gain;
        }
    }
    acc
}

#[inline]
fn position_at(depth: &DepthMap, u: usize, v: usize) -> Vec3 {
    let (w, h) = depth.dims();
    [pixel_center(u, w), pixel_center(v, h), f64::from(depth.get(u, v))]
}

/// Scalar double-precision reference light map.
pub fn light_map_reference(
    params: &LightingParams,
    depth: &DepthMap,
    normals: &NormalMap,
    cfg: &ShadingConfig,
) -> Result<Raster64> {
    check_inputs(depth, normals, cfg)?;
    let (w, h) = depth.dims();
    Ok(Raster::from_fn(w, h, |u, v| {
        pixel_light64(params, position_at(depth, u, v), normals.get(u, v), cfg)
    }))
}

/// Row-parallel double-precision light map (same values as the reference).
pub fn light_map64(params: &LightingParams, geom: &ShadingGeometry, cfg: &ShadingConfig) -> Result<Raster64> {
    cfg.validate()?;
    let (w, h) = geom.dims();
    let mut out = vec![0.0f64; w * h * 3];
    out.par_chunks_mut(w * 3).enumerate().for_each(|(v, row)| {
        for (u, px) in row.chunks_exact_mut(3).enumerate() {
            px.copy_from_slice(&pixel_light64(
                params,
                position_at(&geom.depth, u, v),
                geom.normals.get(u, v),
                cfg,
            ));
        }
    });
    Raster::from_vec(w, h, out)
}

/// `O = base * L`, elementwise, unclamped.
pub fn compose(base: &Image, light: &LightMap) -> Result<Image> {
    base.ensure_same_dims(light)?;
    let data = base
        .as_slice()
        .iter()
        .zip(light.as_slice())
        .map(|(b, l)| b * l)
        .collect();
    Raster::from_vec(base.width(), base.height(), data)
}

pub fn compose64(base: &Raster64, light: &Raster64) -> Result<Raster64> {
    base.ensure_same_dims(light)?;
    let data = base
        .as_slice()
        .iter()
        .zip(light.as_slice())
        .map(|(b, l)| b * l)
        .collect();
    Raster::from_vec(base.width(), base.height(), data)
}

/// Light map and composite in one call on the fast path.
pub fn render(params: &LightingParams, base: &Image, geom: &ShadingGeometry, cfg: &ShadingConfig) -> Result<Image> {
    if base.dims() != geom.dims() {
        return Err(Error::dims(
            format!("{}x{}", geom.dims().0, geom.dims().1),
            format!("{}x{}", base.width(), base.height()),
        ));
    }
    compose(base, &render_light_map(params, geom, cfg)?)
}

/// `sum_i sum_ch upstream(i, ch) * dL(i, ch)/dtheta` for all `10K + 3` parameters.
///
/// The Lambertian floor contributes a zero subgradient wherever
/// `N . d <= sigma2`. Partial sums are accumulated per row and combined in
/// row order.
pub fn light_map_vjp(
    upstream: &Raster64,
    params: &LightingParams,
    geom: &ShadingGeometry,
    cfg: &ShadingConfig,
) -> Result<ParamVector> {
    cfg.validate()?;
    let (w, h) = geom.dims();
    if upstream.dims() != (w, h) {
        return Err(Error::dims(
            format!("{w}x{h}"),
            format!("{}x{}", upstream.width(), upstream.height()),
        ));
    }
    let k = params.k();
    let dim = ParamVector::dim_for(k);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut g = vec![0.0f64; dim];
            let up_row = &upstream.as_slice()[v * w * 3..(v + 1) * w * 3];
            for u in 0..w {
                let up = [up_row[u * 3], up_row[u * 3 + 1], up_row[u * 3 + 2]];
                let p = position_at(&geom.depth, u, v);
                let n = geom.normals.get(u, v);
                for (j, l) in params.lights.iter().enumerate() {
                    let base = j * PER_LIGHT;
                    let ndotd = dot(n, l.direction);
                    let lit = ndotd > cfg.sigma2;
                    let lambert = if lit { ndotd } else { cfg.sigma2 };
                    let d = [l.position[0] - p[0], l.position[1] - p[1], l.position[2] - p[2]];
                    let r2 = dot(d, d);
                    let inv = 1.0 / (l.attenuation * r2 + cfg.sigma1);
                    let gain = lambert * inv;
                    let weighted = dot(up, l.color);
                    for c in 0..3 {
                        g[base + COLOR + c] += up[c] * gain;
                    }
                    if lit {
                        for c in 0..3 {
                            g[base + DIRECTION + c] += weighted * inv * n[c];
                        }
                    }
                    // d/dden of lambert/den is -gain/den
                    let dden = -weighted * gain * inv;
                    g[base + ATTENUATION] += dden * r2;
                    for c in 0..3 {
                        g[base + POSITION + c] += dden * l.attenuation * 2.0 * d[c];
                    }
                }
                for c in 0..AMBIENT_DIM {
                    g[k * PER_LIGHT + c] += up[c];
                }
            }
            g
        })
        .collect();
    let mut total = vec![0.0f64; dim];
    for row in rows {
        for (t, r) in total.iter_mut().zip(row) {
            *t += r;
        }
    }
    Ok(ParamVector(total))
}
