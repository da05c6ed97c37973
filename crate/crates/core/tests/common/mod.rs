#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relight_core::{LightingParams, VirtualLight};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random lights anywhere in front of the unit cube's back face, including
/// grazing directions so the Lambertian floor is exercised.
pub fn wild_lighting(k: usize, seed: u64) -> LightingParams {
    let mut r = rng(seed);
    let lights = (0..k)
        .map(|_| {
            let d: [f64; 3] = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-0.3..1.0)];
            VirtualLight::new(
                [0; 3].map(|_| r.gen_range(0.0..0.5)),
                d,
                [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.5..1.0)],
                r.gen_range(0.5..20.0),
            )
        })
        .collect();
    LightingParams {
        lights,
        ambient: [0; 3].map(|_| r.gen_range(0.2..1.5)),
    }
}

pub struct FdReport {
    pub checked: usize,
    pub worst: f64,
    pub worst_index: usize,
}

/// Five-point central differences of `f` at `x`, compared with `grad`.
/// Components for which `skip(j, h)` holds are not compared.
pub fn check_gradient(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    grad: &[f64],
    h: f64,
    skip: impl Fn(usize, f64) -> bool,
) -> FdReport {
    let mut report = FdReport {
        checked: 0,
        worst: 0.0,
        worst_index: 0,
    };
    let at = |j: usize, delta: f64| {
        let mut y = x.to_vec();
        y[j] += delta;
        f(&y)
    };
    for j in 0..x.len() {
        if skip(j, h) {
            continue;
        }
        let fd = (-at(j, 2.0 * h) + 8.0 * at(j, h) - 8.0 * at(j, -h) + at(j, -2.0 * h)) / (12.0 * h);
        let a = grad[j];
        let scale = a.abs().max(fd.abs());
        if scale < 1e-9 {
            continue;
        }
        let rel = (a - fd).abs() / scale;
        report.checked += 1;
        if rel > report.worst {
            report.worst = rel;
            report.worst_index = j;
        }
    }
    report
}
