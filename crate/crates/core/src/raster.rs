//! Row-major rasters: three-channel images and light maps, and single-channel
//! depth maps, plus the area-averaging resampler used to build working scales.

use crate::error::{Error, Result};

/// Three interleaved channels per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Linear three-channel single-precision image.
pub type Image = Raster<f32>;
/// Per-pixel multiplier field `L` with `output = input * L`.
pub type LightMap = Raster<f32>;
/// Double-precision raster used by the reference renderer and the estimator.
pub type Raster64 = Raster<f64>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::dims(
                format!("{} samples for {width}x{height}x3", width * height * 3),
                data.len(),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
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
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&value);
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_same_dims<U: Copy>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }
}

impl Raster<f32> {
    pub fn to_f64(&self) -> Raster<f64> {
        self.map(f64::from)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Raster<f64> {
    pub fn to_f32(&self) -> Raster<f32> {
        self.map(|v| v as f32)
    }
}

/// Per-pixel depth in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth map must be at least 1x1"));
        }
        if values.len() != width * height {
            return Err(Error::dims(width * height, values.len()));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("depth value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, values)
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
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Rescales values so the minimum maps to 0 and the maximum to 1.
    /// A constant map is left unchanged.
    pub fn renormalized(&self) -> Self {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi <= lo {
            return self.clone();
        }
        let span = hi - lo;
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn transposed(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.get(x, y));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            values,
        }
    }

    pub fn resized(&self, width: usize, height: usize) -> Self {
        let values = resample_area(&self.values, 1, self.width, self.height, width, height)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Self { width, height, values }
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(
                format!("{}x{}", dims.0, dims.1),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

impl Raster<f32> {
    /// Area-averaging resize; an integer factor reduces to a plain box filter.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: resample_area(&self.data, 3, self.width, self.height, width, height),
        }
    }
}

/// Output size that scales the shorter side down to `short_side`; never upsamples.
pub fn fit_short_side(width: usize, height: usize, short_side: usize) -> (usize, usize) {
    let short = width.min(height);
    if short <= short_side || short_side == 0 {
        return (width, height);
    }
    let scale = short_side as f64 / short as f64;
    let w = ((width as f64 * scale).round() as usize).max(1);
    let h = ((height as f64 * scale).round() as usize).max(1);
    if width <= height {
        (short_side, h)
    } else {
        (w, short_side)
    }
}

/// Output size after dividing both sides by `factor`, rounding to nearest and
/// keeping at least one pixel.
pub fn downscaled_dims(width: usize, height: usize, factor: usize) -> (usize, usize) {
    let factor = factor.max(1);
    (
        ((width + factor / 2) / factor).max(1),
        ((height + factor / 2) / factor).max(1),
    )
}

/// Per-output-sample overlap weights along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let mut taps: Vec<(usize, f64)> = (first..last)
                .map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (s, overlap)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = taps.iter().map(|&(_, w)| w).sum();
            for tap in &mut taps {
                tap.1 /= total;
            }
            taps
        })
        .collect()
}

fn resample_area(src: &[f32], channels: usize, sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if (sw, sh) == (dw, dh) {
        return src.to_vec();
    }
    let wx = area_weights(sw, dw);
    let wy = area_weights(sh, dh);
    let mut out = vec![0.0f32; dw * dh * channels];
    let mut acc = vec![0.0f64; channels];
    for (oy, ty) in wy.iter().enumerate() {
        for (ox, tx) in wx.iter().enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(sy, wyv) in ty {
                for &(sx, wxv) in tx {
                    let w = wyv * wxv;
                    let base = (sy * sw + sx) * channels;
                    for c in 0..channels {
                        acc[c] += w * f64::from(src[base + c]);
                    }
                }
            }
            let base = (oy * dw + ox) * channels;
            for c in 0..channels {
                out[base + c] = acc[c] as f32;
            }
        }
    }
    out
}
