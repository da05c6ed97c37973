//! Per-pixel positions and surface normals derived from a depth map.
//!
//! Both live in the same normalized frame: `x = (u + 0.5) / W`,
//! `y = (v + 0.5) / H`, `z = M(u, v)`. Gradients are taken in that frame so
//! shading does not depend on resolution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lighting::Vec3;
use crate::raster::DepthMap;

pub const DEFAULT_Z_GAIN: f64 = 1.0;

/// Unit surface normals facing the camera (`n_z > 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Vec3>,
}

impl NormalMap {
    /// All normals `(0, 0, 1)`.
    pub fn flat(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normals: vec![[0.0, 0.0, 1.0]; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        self.normals[y * self.width + x]
    }

    #[inline]
    pub fn as_slice(&self) -> &[Vec3] {
        &self.normals
    }
}

/// Pixel-centre coordinate along an axis of `n` pixels.
#[inline]
pub fn pixel_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// `p_i = (x, y, M(i))` for every pixel, row-major.
pub fn pixel_positions(width: usize, height: usize, depth: &DepthMap) -> Result<Vec<Vec3>> {
    depth.ensure_dims((width, height))?;
    Ok((0..height)
        .flat_map(|v| {
            (0..width).map(move |u| {
                [
                    pixel_center(u, width),
                    pixel_center(v, height),
                    f64::from(depth.get(u, v)),
                ]
            })
        })
        .collect())
}

/// Central-difference normals with replicated borders.
pub fn normals_from_depth(depth: &DepthMap, z_gain: f64) -> Result<NormalMap> {
    if !(z_gain > 0.0) {
        return Err(Error::invalid(format!("z_gain = {z_gain} must be > 0")));
    }
    let (w, h) = depth.dims();
    let sx = z_gain * w as f64 / 2.0;
    let sy = z_gain * h as f64 / 2.0;
    let normals = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let up = v.saturating_sub(1);
            let down = (v + 1).min(h - 1);
            (0..w).map(move |u| {
                let left = u.saturating_sub(1);
                let right = (u + 1).min(w - 1);
                let gx = sx * (f64::from(depth.get(right, v)) - f64::from(depth.get(left, v)));
                let gy = sy * (f64::from(depth.get(u, down)) - f64::from(depth.get(u, up)));
                let n = (gx * gx + gy * gy + 1.0).sqrt();
                [-gx / n, -gy / n, 1.0 / n]
            })
        })
        .collect();
    Ok(NormalMap {
        width: w,
        height: h,
        normals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_center_values() {
        let depth = DepthMap::constant(2, 2, 0.5).unwrap();
        let p = pixel_positions(2, 2, &depth).unwrap();
        assert_eq!(p[0], [0.25, 0.25, 0.5]);
        assert_eq!(p[3], [0.75, 0.75, 0.5]);

        let mut values = vec![0.0; 8];
        values[3] = 0.2;
        let depth = DepthMap::new(4, 2, values).unwrap();
        let p = pixel_positions(4, 2, &depth).unwrap();
        assert_eq!(p[3], [0.875, 0.25, f64::from(0.2f32)]);
    }

    #[test]
    fn positions_reject_mismatched_depth() {
        let depth = DepthMap::constant(2, 2, 0.5).unwrap();
        assert!(pixel_positions(3, 2, &depth).is_err());
    }

    #[test]
    fn flat_depth_faces_camera() {
        let n = normals_from_depth(&DepthMap::constant(5, 4, 0.3).unwrap(), 1.0).unwrap();
        assert!(n.as_slice().iter().all(|&v| v == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn ramp_along_u() {
        let depth = DepthMap::from_fn(3, 3, |u, _| u as f32 / 2.0).unwrap();
        let n = normals_from_depth(&depth, 1.0).unwrap().get(1, 1);
        let len = (1.5f64 * 1.5 + 1.0).sqrt();
        assert!((n[0] + 1.5 / len).abs() < 1e-12);
        assert_eq!(n[1], 0.0);
        assert!((n[2] - 1.0 / len).abs() < 1e-12);
        assert!((n[0] + 0.8321).abs() < 1e-4 && (n[2] - 0.5547).abs() < 1e-4);
    }

    #[test]
    fn ramp_along_v() {
        let depth = DepthMap::from_fn(3, 3, |_, v| v as f32 / 2.0).unwrap();
        let n = normals_from_depth(&depth, 1.0).unwrap().get(1, 1);
        assert_eq!(n[0], 0.0);
        assert!((n[1] + 0.8321).abs() < 1e-4 && (n[2] - 0.5547).abs() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_gain() {
        let depth = DepthMap::constant(2, 2, 0.5).unwrap();
        assert!(normals_from_depth(&depth, 0.0).is_err());
    }

    fn dyadic_depth(w: usize, h: usize, raw: &[u16]) -> DepthMap {
        DepthMap::from_fn(w, h, |u, v| f32::from(raw[(v * w + u) % raw.len()] % 512) / 1024.0).unwrap()
    }

    proptest! {
        #[test]
        fn normals_are_unit_and_face_camera(w in 1usize..12, h in 1usize..12, raw in prop::collection::vec(any::<u16>(), 1..64), gain in 0.1f64..20.0) {
            let n = normals_from_depth(&dyadic_depth(w, h, &raw), gain).unwrap();
            for v in n.as_slice() {
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                prop_assert!((len - 1.0).abs() <= 1e-5);
                prop_assert!(v[2] > 0.0);
            }
        }

        #[test]
        fn transpose_swaps_components(w in 1usize..10, h in 1usize..10, raw in prop::collection::vec(any::<u16>(), 1..64)) {
            let depth = dyadic_depth(w, h, &raw);
            let n = normals_from_depth(&depth, 1.0).unwrap();
            let t = normals_from_depth(&depth.transposed(), 1.0).unwrap();
            for v in 0..h {
                for u in 0..w {
                    let a = n.get(u, v);
                    let b = t.get(v, u);
                    prop_assert_eq!([a[1], a[0], a[2]], b);
                }
            }
        }

        #[test]
        fn constant_offset_is_invisible(w in 1usize..10, h in 1usize..10, raw in prop::collection::vec(any::<u16>(), 1..64), shift in 0u16..512) {
            let depth = dyadic_depth(w, h, &raw);
            let offset = f32::from(shift) / 1024.0;
            let shifted = DepthMap::from_fn(w, h, |u, v| depth.get(u, v) + offset).unwrap();
            prop_assert_eq!(
                normals_from_depth(&depth, 1.0).unwrap(),
                normals_from_depth(&shifted, 1.0).unwrap()
            );
        }
    }
}
