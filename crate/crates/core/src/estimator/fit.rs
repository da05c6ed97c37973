//! Two-stage lighting fit.
//!
//! Stage 1 optimizes a normalized parameter vector `theta0` on a
//! `coarse_factor`-downsampled copy of the working images. Stage 2 freezes
//! `theta0` and optimizes an offset at the working resolution. The physical
//! parameters are `mu + sigma * (theta0 + offset)`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss, FitScene, LossBreakdown, LossConfig};
use super::optim::{minimize_boxed, AdamConfig};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_Z_GAIN;
use crate::lighting::{LightingParams, ParamBounds, ParamStats, ParamVector, PER_LIGHT, POSITION};
use crate::raster::{downscaled_dims, fit_short_side, DepthMap, Image};
use crate::render::{ShadingConfig, ShadingGeometry};

/// Fallback depth when none is supplied.
pub const FALLBACK_DEPTH: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub working_short_side: usize,
    pub coarse_factor: usize,
    pub coarse_iters: usize,
    pub refine_iters: usize,
    pub step_size: f64,
    pub seed: u64,
    pub z_gain: f64,
}

impl FitConfig {
    pub const DEFAULT_K: usize = 9;
    pub const DEFAULT_WORKING_SHORT_SIDE: usize = 512;
    pub const DEFAULT_COARSE_FACTOR: usize = 4;
    pub const DEFAULT_COARSE_ITERS: usize = 200;
    pub const DEFAULT_REFINE_ITERS: usize = 100;
    pub const DEFAULT_STEP_SIZE: f64 = 0.05;

    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("fit needs at least one light"));
        }
        if self.coarse_factor < 1 {
            return Err(Error::invalid("coarse_factor must be >= 1"));
        }
        if self.working_short_side < 1 {
            return Err(Error::invalid("working_short_side must be >= 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid(format!("step_size = {} must be > 0", self.step_size)));
        }
        if !(self.z_gain > 0.0) {
            return Err(Error::invalid(format!("z_gain = {} must be > 0", self.z_gain)));
        }
        Ok(())
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: Self::DEFAULT_K,
            working_short_side: Self::DEFAULT_WORKING_SHORT_SIDE,
            coarse_factor: Self::DEFAULT_COARSE_FACTOR,
            coarse_iters: Self::DEFAULT_COARSE_ITERS,
            refine_iters: Self::DEFAULT_REFINE_ITERS,
            step_size: Self::DEFAULT_STEP_SIZE,
            seed: 0,
            z_gain: DEFAULT_Z_GAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Physical parameters, `denormalize(theta0, theta_offset)`.
    pub params: LightingParams,
    pub theta0: ParamVector,
    pub theta_offset: ParamVector,
    /// Coarse-stage objective, initial value then one entry per iteration.
    pub coarse_trace: Vec<f64>,
    /// Refine-stage objective at working resolution; the first entry is the
    /// coarse result evaluated there.
    pub refine_trace: Vec<f64>,
    /// Loss breakdown of `params` at working resolution.
    pub final_loss: LossBreakdown,
    pub working_dims: (usize, usize),
    pub coarse_dims: (usize, usize),
    #[serde(skip)]
    pub coarse_time: Duration,
    #[serde(skip)]
    pub refine_time: Duration,
    #[serde(skip)]
    pub resize_time: Duration,
}

impl FitResult {
    /// Both stage traces back to back.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.coarse_trace.iter().chain(&self.refine_trace).copied().collect()
    }

    pub fn wall_time(&self) -> Duration {
        self.resize_time + self.coarse_time + self.refine_time
    }
}

/// All configuration for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub fit: FitConfig,
    pub loss: LossConfig,
    pub shading: ShadingConfig,
    pub stats: ParamStats,
    pub bounds: ParamBounds,
}

impl Estimator {
    /// Defaults everywhere, `k` lights.
    pub fn new(k: usize) -> Self {
        Self {
            fit: FitConfig::with_k(k),
            loss: LossConfig::default(),
            shading: ShadingConfig::default(),
            stats: ParamStats::default_for(k),
            bounds: ParamBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.loss.validate()?;
        self.shading.validate()?;
        self.bounds.validate()?;
        if self.stats.k() != self.fit.k || self.stats.mu.len() != ParamVector::dim_for(self.fit.k) {
            return Err(Error::dims(
                format!("stats for K={}", self.fit.k),
                format!("stats of length {}", self.stats.mu.len()),
            ));
        }
        Ok(())
    }

    /// Loss and gradient in normalized space at `theta0 + offset`.
    fn objective(&self, scene: &FitScene, theta0: &[f64], offset: &[f64]) -> Result<(f64, Vec<f64>)> {
        let params = self
            .stats
            .denormalize(&ParamVector(theta0.to_vec()), &ParamVector(offset.to_vec()))?;
        let (loss, grad) = total_loss(&params, scene, &self.shading, &self.loss, &self.bounds)?;
        // d theta* / d theta = sigma
        let g = grad
            .as_slice()
            .iter()
            .zip(self.stats.sigma.as_slice())
            .map(|(g, s)| g * s)
            .collect();
        Ok((loss.total, g))
    }

    /// Starting point: zeros, except light positions, which are spread over
    /// a jittered grid of image cells so that lights do not start identical.
    pub fn initial_theta0(&self) -> ParamVector {
        let k = self.fit.k;
        let cols = (1..=k).find(|c| c * c >= k).unwrap_or(1);
        let rows = k.div_ceil(cols);
        let mut rng = ChaCha8Rng::seed_from_u64(self.fit.seed);
        let mut theta = ParamVector::zeros(k);
        for j in 0..k {
            let cell = [(j % cols) as f64, (j / cols) as f64];
            let n = [cols as f64, rows as f64];
            for axis in 0..2 {
                let idx = j * PER_LIGHT + POSITION + axis;
                let jitter: f64 = rng.gen_range(-0.25..0.25);
                let raw = (cell[axis] + 0.5 + jitter) / n[axis];
                theta.0[idx] = (raw - self.stats.mu.0[idx]) / self.stats.sigma.0[idx];
            }
        }
        theta
    }

    /// The valid box expressed in normalized coordinates.
    fn normalized_limits(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.bounds.box_limits(self.fit.k);
        let to_norm = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(self.stats.mu.as_slice().iter().zip(self.stats.sigma.as_slice()))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        };
        (to_norm(&lo), to_norm(&hi))
    }

    /// Builds working and coarse scenes from full-size inputs.
    pub fn prepare(&self, input: &Image, target: &Image, depth: Option<&DepthMap>) -> Result<(FitScene, FitScene)> {
        let (w, h) = input.dims();
        if w == 0 || h == 0 {
            return Err(Error::invalid("cannot fit a zero-size image"));
        }
        input.ensure_same_dims(target)?;
        let depth = match depth {
            Some(d) => {
                d.ensure_dims((w, h))?;
                d.clone()
            }
            None => DepthMap::constant(w, h, FALLBACK_DEPTH)?,
        };
        let (ww, wh) = fit_short_side(w, h, self.fit.working_short_side);
        let (cw, ch) = downscaled_dims(ww, wh, self.fit.coarse_factor);
        let scene_at = |sw: usize, sh: usize| -> Result<FitScene> {
            let d = depth.resized(sw, sh);
            FitScene::new(
                input.resized(sw, sh).to_f64(),
                target.resized(sw, sh).to_f64(),
                ShadingGeometry::from_depth(d, self.fit.z_gain)?,
            )
        };
        Ok((scene_at(ww, wh)?, scene_at(cw, ch)?))
    }

    pub fn fit(&self, input: &Image, target: &Image, depth: Option<&DepthMap>) -> Result<FitResult> {
        self.validate()?;
        let started = Instant::now();
        let (working, coarse) = self.prepare(input, target, depth)?;
        let resize_time = started.elapsed();
        self.fit_prepared(&working, &coarse, resize_time)
    }

    pub fn fit_prepared(&self, working: &FitScene, coarse: &FitScene, resize_time: Duration) -> Result<FitResult> {
        self.validate()?;
        let k = self.fit.k;
        let adam = AdamConfig::with_step(self.fit.step_size);
        let zeros = vec![0.0; ParamVector::dim_for(k)];

        let (lo, hi) = self.normalized_limits();

        let t0 = Instant::now();
        let stage1 = minimize_boxed(self.initial_theta0().0, &lo, &hi, self.fit.coarse_iters, &adam, |x| {
            self.objective(coarse, x, &zeros)
        })?;
        let coarse_time = t0.elapsed();
        let theta0 = stage1.x;

        let shift = |b: &[f64]| -> Vec<f64> { b.iter().zip(&theta0).map(|(b, t)| b - t).collect() };
        let t1 = Instant::now();
        let stage2 = minimize_boxed(
            zeros.clone(),
            &shift(&lo),
            &shift(&hi),
            self.fit.refine_iters,
            &adam,
            |x| self.objective(working, &theta0, x),
        )?;
        let refine_time = t1.elapsed();

        let theta0 = ParamVector(theta0);
        let theta_offset = ParamVector(stage2.x);
        let params = self.stats.denormalize(&theta0, &theta_offset)?;
        let (final_loss, _) = total_loss(&params, working, &self.shading, &self.loss, &self.bounds)?;
        Ok(FitResult {
            params,
            theta0,
            theta_offset,
            coarse_trace: stage1.trace,
            refine_trace: stage2.trace,
            final_loss,
            working_dims: working.base.dims(),
            coarse_dims: coarse.base.dims(),
            coarse_time,
            refine_time,
            resize_time,
        })
    }
}
