//! Virtual-light parameter set, its flat vector form, reverse normalization,
//! validity projection and the lighting regularization penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalars per light in the flat layout: color(3), direction(3), position(3), attenuation(1).
pub const PER_LIGHT: usize = 10;
pub const AMBIENT_DIM: usize = 3;
pub const COLOR: usize = 0;
pub const DIRECTION: usize = 3;
pub const POSITION: usize = 6;
pub const ATTENUATION: usize = 9;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// A parametric light: per-channel intensity, unit direction toward the light,
/// position in the normalized scene cube and a distance attenuation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualLight {
    pub color: Vec3,
    pub direction: Vec3,
    pub position: Vec3,
    pub attenuation: f64,
}

impl VirtualLight {
    /// Builds a light with `direction` normalized. A zero direction becomes `+z`.
    pub fn new(color: Vec3, direction: Vec3, position: Vec3, attenuation: f64) -> Self {
        let (direction, _) = normalize_direction(direction);
        Self {
            color,
            direction,
            position,
            attenuation,
        }
    }

    /// The light that contributes nothing: zero color, facing the camera, scene centre.
    pub fn off() -> Self {
        Self {
            color: [0.0; 3],
            direction: [0.0, 0.0, 1.0],
            position: [0.5; 3],
            attenuation: 1.0,
        }
    }
}

/// Normalizes `d`; returns `(+z, true)` when `d` has zero or non-finite length.
/// Vectors already unit to within rounding are returned unchanged, which
/// keeps projection idempotent.
pub fn normalize_direction(d: Vec3) -> (Vec3, bool) {
    let n = norm(d);
    if (n - 1.0).abs() <= 2.0 * f64::EPSILON {
        (d, false)
    } else if n > 0.0 && n.is_finite() {
        ([d[0] / n, d[1] / n, d[2] / n], false)
    } else {
        ([0.0, 0.0, 1.0], true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingParams {
    pub lights: Vec<VirtualLight>,
    pub ambient: Vec3,
}

impl LightingParams {
    /// Ambient 1, all `k` lights off: renders the identity.
    pub fn neutral(k: usize) -> Self {
        Self {
            lights: vec![VirtualLight::off(); k],
            ambient: [1.0; 3],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.lights.len()
    }

    pub fn flatten(&self) -> ParamVector {
        let mut values = Vec::with_capacity(ParamVector::dim_for(self.k()));
        for light in &self.lights {
            values.extend_from_slice(&light.color);
            values.extend_from_slice(&light.direction);
            values.extend_from_slice(&light.position);
            values.push(light.attenuation);
        }
        values.extend_from_slice(&self.ambient);
        ParamVector(values)
    }

    pub fn unflatten(v: &ParamVector, k: usize) -> Result<Self> {
        v.check_dim(k)?;
        let s = v.as_slice();
        let lights = s[..k * PER_LIGHT]
            .chunks_exact(PER_LIGHT)
            .map(|c| VirtualLight {
                color: [c[0], c[1], c[2]],
                direction: [c[3], c[4], c[5]],
                position: [c[6], c[7], c[8]],
                attenuation: c[9],
            })
            .collect();
        let a = &s[k * PER_LIGHT..];
        Ok(Self {
            lights,
            ambient: [a[0], a[1], a[2]],
        })
    }
}

/// Flat parameter vector, `10K + 3` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    #[inline]
    pub const fn dim_for(k: usize) -> usize {
        k * PER_LIGHT + AMBIENT_DIM
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; Self::dim_for(k)])
    }

    /// Light count implied by the length, if the length is valid.
    pub fn light_count(&self) -> Option<usize> {
        let n = self.0.len();
        (n >= AMBIENT_DIM && (n - AMBIENT_DIM).is_multiple_of(PER_LIGHT)).then(|| (n - AMBIENT_DIM) / PER_LIGHT)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn check_dim(&self, k: usize) -> Result<()> {
        let want = Self::dim_for(k);
        if self.0.len() != want {
            return Err(Error::dims(format!("{want} (K={k})"), self.0.len()));
        }
        Ok(())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::dims(self.0.len(), other.0.len()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Per-dimension mean and spread of the reverse normalization `mu + sigma * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mu: ParamVector,
    pub sigma: ParamVector,
}

impl ParamStats {
    pub const DEFAULT_SIGMA: f64 = 0.25;

    /// Neutral lighting at the origin of normalized space, uniform spread 0.25.
    pub fn default_for(k: usize) -> Self {
        let mu = LightingParams::neutral(k).flatten();
        let sigma = ParamVector(vec![Self::DEFAULT_SIGMA; mu.len()]);
        Self { mu, sigma }
    }

    pub fn new(mu: ParamVector, sigma: ParamVector) -> Result<Self> {
        mu.check_same(&sigma)?;
        if mu.light_count().is_none() {
            return Err(Error::invalid(format!("stats length {} is not 10K+3", mu.len())));
        }
        if let Some((j, s)) = sigma.0.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
            return Err(Error::invalid(format!("sigma[{j}] = {s} must be > 0")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn k(&self) -> usize {
        self.mu.light_count().unwrap_or(0)
    }

    /// `mu + sigma * (theta0 + offset)`, unprojected.
    pub fn denormalize_flat(&self, theta0: &ParamVector, offset: &ParamVector) -> Result<ParamVector> {
        theta0.check_same(offset)?;
        theta0.check_same(&self.mu)?;
        Ok(ParamVector(
            theta0
                .0
                .iter()
                .zip(&offset.0)
                .zip(self.sigma.0.iter().zip(&self.mu.0))
                .map(|((a, b), (s, m))| s * (a + b) + m)
                .collect(),
        ))
    }

    pub fn denormalize(&self, theta0: &ParamVector, offset: &ParamVector) -> Result<LightingParams> {
        let flat = self.denormalize_flat(theta0, offset)?;
        LightingParams::unflatten(&flat, self.k())
    }

    /// Inverse map from physical parameters to normalized space.
    pub fn normalize(&self, params: &LightingParams) -> Result<ParamVector> {
        let flat = params.flatten();
        flat.check_same(&self.mu)?;
        Ok(ParamVector(
            flat.0
                .iter()
                .zip(self.sigma.0.iter().zip(&self.mu.0))
                .map(|(v, (s, m))| (v - m) / s)
                .collect(),
        ))
    }
}

/// Reverse normalization `theta* = sigma * (theta0 + offset) + mu`.
pub fn denormalize(theta0: &ParamVector, offset: &ParamVector, stats: &ParamStats) -> Result<LightingParams> {
    stats.denormalize(theta0, offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub c_max: f64,
    pub s_max: f64,
    pub ambient_max: f64,
    pub lambda_amb: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            c_max: 10.0,
            s_max: 100.0,
            ambient_max: 4.0,
            lambda_amb: 1.0,
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_max", self.c_max),
            ("s_max", self.s_max),
            ("ambient_max", self.ambient_max),
            ("lambda_amb", self.lambda_amb),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }
}

impl ParamBounds {
    /// Per-dimension physical limits of the valid set for `k` lights.
    /// Directions are left unbounded; the penalty keeps them near unit length.
    pub fn box_limits(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = ParamVector::dim_for(k);
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for j in 0..k {
            let b = j * PER_LIGHT;
            for a in 0..3 {
                (lo[b + COLOR + a], hi[b + COLOR + a]) = (0.0, self.c_max);
                (lo[b + POSITION + a], hi[b + POSITION + a]) = (0.0, 1.0);
            }
            (lo[b + ATTENUATION], hi[b + ATTENUATION]) = (0.0, self.s_max);
        }
        for a in 0..AMBIENT_DIM {
            (lo[k * PER_LIGHT + a], hi[k * PER_LIGHT + a]) = (0.0, self.ambient_max);
        }
        (lo, hi)
    }
}

/// Side information from [`project_valid`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectionReport {
    /// Lights whose direction had zero length and was replaced by `+z`.
    pub degenerate_directions: Vec<usize>,
}

fn clamp3(v: Vec3, lo: f64, hi: f64) -> Vec3 {
    v.map(|x| x.clamp(lo, hi))
}

/// Projection onto the valid set: positions into the unit cube, colors into
/// `[0, c_max]`, attenuation into `[0, s_max]`, unit directions, ambient into
/// `[0, ambient_max]`.
pub fn project_valid(params: &LightingParams, bounds: &ParamBounds) -> (LightingParams, ProjectionReport) {
    let mut report = ProjectionReport::default();
    let lights = params
        .lights
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let (direction, degenerate) = normalize_direction(l.direction);
            if degenerate {
                report.degenerate_directions.push(k);
            }
            VirtualLight {
                color: clamp3(l.color, 0.0, bounds.c_max),
                direction,
                position: clamp3(l.position, 0.0, 1.0),
                attenuation: l.attenuation.clamp(0.0, bounds.s_max),
            }
        })
        .collect();
    let projected = LightingParams {
        lights,
        ambient: clamp3(params.ambient, 0.0, bounds.ambient_max),
    };
    (projected, report)
}

/// Quadratic penalty on the distance to the valid set, with the projection
/// held fixed at the current point when differentiating.
pub fn regularization_loss(params: &LightingParams, bounds: &ParamBounds) -> (f64, ParamVector) {
    let (projected, _) = project_valid(params, bounds);
    let raw = params.flatten();
    let proj = projected.flatten();
    let k = params.k();
    let ambient_start = k * PER_LIGHT;
    let mut loss = 0.0;
    let mut grad = vec![0.0; raw.len()];
    for (j, (&v, &p)) in raw.0.iter().zip(&proj.0).enumerate() {
        let gap = v - p;
        if gap == 0.0 {
            continue;
        }
        let weight = if j >= ambient_start { bounds.lambda_amb } else { 1.0 };
        loss += weight * gap * gap;
        grad[j] = 2.0 * weight * gap;
    }
    (loss, ParamVector(grad))
}
