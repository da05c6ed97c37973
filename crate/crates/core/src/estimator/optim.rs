//! Adam with an accept-if-improved backtracking guard.
//!
//! A proposed step is only taken when it does not increase the objective. A
//! rejected step is retried at half length; when every retry fails the
//! moment estimates restart from the current gradient and the trust scale
//! shrinks. Steps that succeed at the first attempt grow the scale, up to
//! `max_scale`. The recorded objective sequence is therefore nonincreasing.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_backtracks: usize,
    /// Largest multiple of `step_size` the step may grow to after a run of
    /// accepted first attempts.
    pub max_scale: f64,
}

impl AdamConfig {
    pub fn with_step(step_size: f64) -> Self {
        Self {
            step_size,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_backtracks: 8,
            max_scale: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimized {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start and after every iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Minimizes `objective` (value and gradient) from `x0` for `iters` iterations.
pub fn minimize<F>(x0: Vec<f64>, iters: usize, cfg: &AdamConfig, objective: F) -> Result<Minimized>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    minimize_boxed(
        x0,
        &vec![f64::NEG_INFINITY; n],
        &vec![f64::INFINITY; n],
        iters,
        cfg,
        objective,
    )
}

/// [`minimize`] with every candidate clamped into `[lower, upper]`.
/// `x0` is clamped first.
pub fn minimize_boxed<F>(
    x0: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    iters: usize,
    cfg: &AdamConfig,
    mut objective: F,
) -> Result<Minimized>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(crate::error::Error::dims(n, lower.len().min(upper.len())));
    }
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(j, v)| v.clamp(lower[j], upper[j]))
        .collect();
    let (mut value, mut grad) = objective(&x)?;
    let mut evaluations = 1;
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push(value);
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut t = 0i32;
    let mut scale = 1.0f64;
    let mut candidate = vec![0.0; n];
    for _ in 0..iters {
        if !value.is_finite() {
            break;
        }
        t += 1;
        for j in 0..n {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        }
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let direction: Vec<f64> = (0..n).map(|j| (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps)).collect();

        let mut step = cfg.step_size * scale;
        let mut accepted = false;
        for attempt in 0..=cfg.max_backtracks {
            for j in 0..n {
                candidate[j] = (x[j] - step * direction[j]).clamp(lower[j], upper[j]);
            }
            let (cv, cg) = objective(&candidate)?;
            evaluations += 1;
            if cv.is_finite() && cv <= value {
                std::mem::swap(&mut x, &mut candidate);
                value = cv;
                grad = cg;
                accepted = true;
                scale = if attempt == 0 {
                    (scale * 1.25).min(cfg.max_scale)
                } else {
                    step / cfg.step_size
                };
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            m.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            t = 0;
            scale = (step / cfg.step_size).max(1e-12);
        }
        trace.push(value);
    }
    Ok(Minimized {
        x,
        value,
        trace,
        evaluations,
    })
}
