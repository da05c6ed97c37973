//! Exponential smoothing of lighting parameters across frames, keyframe
//! scheduling and a flicker measure.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::lighting::{normalize_direction, LightingParams, ParamVector, DIRECTION, PER_LIGHT};
use crate::raster::{DepthMap, Image, LightMap};
use crate::render::{render, ShadingGeometry};

pub const DEFAULT_BETA: f64 = 0.9;
/// Smoothing factors outside this range are accepted with a warning.
pub const RECOMMENDED_BETA: (f64, f64) = (0.8, 0.99);

/// EMA state: `s_t = beta * s_{t-1} + (1 - beta) * theta_t`, starting at `theta_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoother {
    beta: f64,
    prev: Option<ParamVector>,
}

impl Smoother {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("beta = {beta} must lie in [0, 1)")));
        }
        if beta < RECOMMENDED_BETA.0 || beta > RECOMMENDED_BETA.1 {
            log::warn!(
                "beta = {beta} is outside the recommended range [{}, {}]",
                RECOMMENDED_BETA.0,
                RECOMMENDED_BETA.1
            );
        }
        Ok(Self { beta, prev: None })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn previous(&self) -> Option<&ParamVector> {
        self.prev.as_ref()
    }

    /// Blends `theta` into the running average and renormalizes directions.
    pub fn step(&mut self, theta: &ParamVector) -> Result<ParamVector> {
        let k = theta
            .light_count()
            .ok_or_else(|| Error::dims("10K+3 parameters", theta.len()))?;
        let mut next = match &self.prev {
            None => theta.clone(),
            Some(prev) => {
                if prev.len() != theta.len() {
                    return Err(Error::dims(prev.len(), theta.len()));
                }
                let b = self.beta;
                ParamVector(
                    prev.as_slice()
                        .iter()
                        .zip(theta.as_slice())
                        .map(|(p, t)| b * p + (1.0 - b) * t)
                        .collect(),
                )
            }
        };
        if self.prev.is_some() {
            for j in 0..k {
                let at = j * PER_LIGHT + DIRECTION;
                let s = next.as_mut_slice();
                let (d, _) = normalize_direction([s[at], s[at + 1], s[at + 2]]);
                s[at..at + 3].copy_from_slice(&d);
            }
        }
        self.prev = Some(next.clone());
        Ok(next)
    }

    pub fn step_params(&mut self, params: &LightingParams) -> Result<LightingParams> {
        let smoothed = self.step(&params.flatten())?;
        LightingParams::unflatten(&smoothed, params.k())
    }
}

/// Re-estimate lighting every `interval` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSchedule {
    interval: usize,
}

impl KeyframeSchedule {
    pub fn new(interval: usize) -> Result<Self> {
        if interval < 1 {
            return Err(Error::invalid("keyframe interval must be >= 1"));
        }
        Ok(Self { interval })
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    #[inline]
    pub fn is_keyframe(&self, frame: usize) -> bool {
        frame.is_multiple_of(self.interval)
    }

    /// Number of fits for a sequence of `frames` frames.
    pub fn fit_count(&self, frames: usize) -> usize {
        frames.div_ceil(self.interval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub frame: usize,
    /// Present on keyframes only.
    pub fit_ms: Option<f64>,
    pub render_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub frames: Vec<Image>,
    pub timings: Vec<FrameTiming>,
    /// Smoothed parameters used for each frame.
    pub params: Vec<LightingParams>,
    pub fits: usize,
}

/// Fits on keyframes, holds the last fit in between, smooths and renders every frame.
///
/// `depths`, when given, must align with `frames`; otherwise the fallback
/// depth is used. `target_for` produces the fitting target of a keyframe.
pub fn enhance_sequence<T>(
    frames: &[Image],
    depths: Option<&[DepthMap]>,
    schedule: KeyframeSchedule,
    beta: f64,
    estimator: &Estimator,
    mut target_for: T,
) -> Result<SequenceOutput>
where
    T: FnMut(usize, &Image) -> Result<Image>,
{
    let mut out = SequenceOutput {
        frames: Vec::with_capacity(frames.len()),
        timings: Vec::with_capacity(frames.len()),
        params: Vec::with_capacity(frames.len()),
        fits: 0,
    };
    if frames.is_empty() {
        return Ok(out);
    }
    if let Some(d) = depths {
        if d.len() != frames.len() {
            return Err(Error::dims(format!("{} depth maps", frames.len()), d.len()));
        }
    }
    let dims = frames[0].dims();
    let mut smoother = Smoother::new(beta)?;
    let mut held: Option<LightingParams> = None;
    for (t, frame) in frames.iter().enumerate() {
        if frame.dims() != dims {
            return Err(Error::dims(
                format!("frame {t} of {}x{}", dims.0, dims.1),
                format!("{}x{}", frame.width(), frame.height()),
            ));
        }
        let depth = match depths {
            Some(d) => {
                d[t].ensure_dims(dims)?;
                d[t].clone()
            }
            None => DepthMap::constant(dims.0, dims.1, crate::estimator::FALLBACK_DEPTH)?,
        };
        let started = Instant::now();
        let mut fit_ms = None;
        if schedule.is_keyframe(t) || held.is_none() {
            let target = target_for(t, frame)?;
            let fit = estimator.fit(frame, &target, Some(&depth))?;
            fit_ms = Some(started.elapsed().as_secs_f64() * 1e3);
            held = Some(fit.params);
            out.fits += 1;
        }
        let render_start = Instant::now();
        let params = smoother.step_params(held.as_ref().expect("set on first frame"))?;
        let geom = ShadingGeometry::from_depth(depth, estimator.fit.z_gain)?;
        let rendered = render(&params, frame, &geom, &estimator.shading)?;
        let render_ms = render_start.elapsed().as_secs_f64() * 1e3;
        out.frames.push(rendered);
        out.params.push(params);
        out.timings.push(FrameTiming {
            frame: t,
            fit_ms,
            render_ms,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(out)
}

/// Mean over consecutive pairs of the mean absolute light-map difference.
pub fn flicker_index(maps: &[LightMap]) -> Result<f64> {
    if maps.len() < 2 {
        return Err(Error::invalid("flicker index needs at least two frames"));
    }
    let mut total = 0.0;
    for pair in maps.windows(2) {
        pair[0].ensure_same_dims(&pair[1])?;
        let n = pair[0].as_slice().len().max(1) as f64;
        let d: f64 = pair[0]
            .as_slice()
            .iter()
            .zip(pair[1].as_slice())
            .map(|(a, b)| f64::from((a - b).abs()))
            .sum();
        total += d / n;
    }
    Ok(total / (maps.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_stream_is_fixed_point() {
        let mut p = LightingParams::neutral(2);
        p.lights[0].color = [0.3, 0.2, 0.1];
        p.lights[1].direction = [0.6, 0.0, 0.8];
        let theta = p.flatten();
        let mut s = Smoother::new(0.9).unwrap();
        for _ in 0..10 {
            let out = s.step(&theta).unwrap();
            for (a, b) in out.as_slice().iter().zip(theta.as_slice()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_response_closed_form() {
        let (a, b, beta) = (0.0, 1.0, 0.9f64);
        let mut s = Smoother::new(beta).unwrap();
        let mut v = s.step(&ParamVector(vec![a, 0.0, 0.0])).unwrap();
        for t in 1..=3 {
            v = s.step(&ParamVector(vec![b, 0.0, 0.0])).unwrap();
            let expected = b + beta.powi(t) * (a - b);
            assert!((v.0[0] - expected).abs() <= 1e-12);
        }
        assert!((v.0[0] - 0.271).abs() <= 1e-12);
    }

    #[test]
    fn directions_renormalized_after_blend() {
        let mut first = LightingParams::neutral(1);
        first.lights[0].direction = [0.0, 0.0, 1.0];
        let mut second = first.clone();
        second.lights[0].direction = [1.0, 0.0, 0.0];
        let mut s = Smoother::new(0.5).unwrap();
        s.step_params(&first).unwrap();
        let out = s.step_params(&second).unwrap();
        let d = out.lights[0].direction;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[0] - r).abs() < 1e-12 && d[1] == 0.0 && (d[2] - r).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_tracks_input() {
        let mut s = Smoother::new(0.0).unwrap();
        s.step(&ParamVector(vec![5.0, 1.0, 2.0])).unwrap();
        let x = ParamVector(vec![-1.0, 0.25, 7.0]);
        assert_eq!(s.step(&x).unwrap(), x);
    }

    #[test]
    fn rejects_bad_beta_and_dims() {
        assert!(Smoother::new(1.0).is_err());
        assert!(Smoother::new(-0.1).is_err());
        let mut s = Smoother::new(0.9).unwrap();
        s.step(&ParamVector::zeros(1)).unwrap();
        assert!(s.step(&ParamVector::zeros(2)).is_err());
        assert!(s.step(&ParamVector(vec![0.0; 5])).is_err());
    }

    #[test]
    fn keyframe_counts() {
        assert_eq!(KeyframeSchedule::new(1).unwrap().fit_count(5), 5);
        assert_eq!(KeyframeSchedule::new(10).unwrap().fit_count(10), 1);
        let s = KeyframeSchedule::new(3).unwrap();
        assert_eq!(s.fit_count(7), 3);
        assert_eq!((0..7).filter(|&t| s.is_keyframe(t)).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert!(KeyframeSchedule::new(0).is_err());
    }

    #[test]
    fn flicker_examples() {
        let a = LightMap::filled(4, 4, 1.0);
        let b = LightMap::filled(4, 4, 1.1);
        assert_eq!(flicker_index(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        let f = flicker_index(&[a.clone(), b.clone(), a.clone(), b]).unwrap();
        assert!((f - 0.1).abs() < 1e-6, "{f}");
        assert!(flicker_index(&[a]).is_err());
    }

    proptest! {
        #[test]
        fn schedule_count_is_ceiling(frames in 1usize..500, interval in 1usize..50) {
            let s = KeyframeSchedule::new(interval).unwrap();
            prop_assert_eq!((0..frames).filter(|&t| s.is_keyframe(t)).count(), s.fit_count(frames));
            prop_assert_eq!(s.fit_count(frames), (frames + interval - 1) / interval);
        }

        #[test]
        fn ema_stays_within_envelope(values in prop::collection::vec(-10.0f64..10.0, 1..40), beta in 0.0f64..0.999) {
            let mut s = Smoother::new(beta).unwrap();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in values {
                lo = lo.min(v);
                hi = hi.max(v);
                let out = s.step(&ParamVector(vec![v, 0.0, 0.0])).unwrap();
                prop_assert!(out.0[0] >= lo - 1e-12 && out.0[0] <= hi + 1e-12);
            }
        }
    }
}
