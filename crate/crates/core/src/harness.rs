//! Ablation sweeps over light count and loss configuration, and the render
//! benchmark with keyframe amortization.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, LossConfig};
use crate::io::{load_depth, load_image};
use crate::lighting::ParamStats;
use crate::raster::{DepthMap, Image};
use crate::render::{compose, render_light_map, ShadingGeometry};
use crate::synth::PlantedScene;

pub const DEFAULT_ABLATION_KS: [usize; 4] = [3, 6, 9, 12];
pub const AMORTIZATION_INTERVALS: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone)]
pub struct AblationScene {
    pub name: String,
    pub input: Image,
    pub target: Image,
    pub depth: Option<DepthMap>,
}

/// `count` planted nine-light scenes of `size` x `size`, seeded from `seed`.
pub fn planted_scenes(count: usize, size: usize, seed: u64) -> Result<Vec<AblationScene>> {
    (0..count as u64)
        .map(|i| {
            let s = PlantedScene::grid(size, size, seed.wrapping_add(i))?;
            Ok(AblationScene {
                name: format!("planted_{i}"),
                input: s.input,
                target: s.target,
                depth: Some(s.depth),
            })
        })
        .collect()
}

/// Scenes from a directory of subdirectories, each holding `input.png`,
/// `target.png` and optionally `depth.png`. Sorted by name.
pub fn load_scene_dir(dir: impl AsRef<Path>) -> Result<Vec<AblationScene>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => Error::Io {
            path: dir.to_path_buf(),
            source: e,
        },
    })?;
    let mut subdirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    subdirs
        .into_iter()
        .map(|p| {
            let depth_path = p.join("depth.png");
            Ok(AblationScene {
                name: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                input: load_image(p.join("input.png"))?,
                target: load_image(p.join("target.png"))?,
                depth: if depth_path.exists() {
                    Some(load_depth(depth_path, false)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `k` for the light-count sweep, otherwise the loss configuration name.
    pub sweep: String,
    pub config: String,
    pub k: usize,
    pub mean_loss: f64,
    #[serde(skip)]
    pub mean_fit_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub scenes: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, sweep: &str, config: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.sweep == sweep && r.config == config)
    }

    pub fn k_loss(&self, k: usize) -> Option<f64> {
        self.row("k", &k.to_string()).map(|r| r.mean_loss)
    }

    /// Losses only; identical for identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,config,k,mean_loss\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.sweep, r.config, r.k, r.mean_loss);
        }
        out
    }

    /// Wall times, kept apart from [`to_csv`](Self::to_csv) since they vary run to run.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("sweep,config,k,mean_fit_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.sweep,
                r.config,
                r.k,
                r.mean_fit_time.as_secs_f64() * 1e3
            );
        }
        out
    }
}

/// The three loss stacks compared by the loss sweep.
pub fn standard_loss_configs() -> Vec<(String, LossConfig)> {
    vec![
        ("pixel".into(), LossConfig::pixel_only()),
        ("pixel+roi".into(), LossConfig::pixel_roi()),
        ("full".into(), LossConfig::default()),
    ]
}

fn mean_fit(scenes: &[AblationScene], est: &Estimator) -> Result<(f64, Duration)> {
    let mut loss = 0.0;
    let mut time = Duration::ZERO;
    for s in scenes {
        let r = est.fit(&s.input, &s.target, s.depth.as_ref())?;
        log::debug!("{}: K={} loss {}", s.name, est.fit.k, r.final_loss.total);
        loss += r.final_loss.total;
        time += r.wall_time();
    }
    let n = scenes.len() as f64;
    Ok((loss / n, time.div_f64(n)))
}

/// Fits every scene once per light count in `ks` (with `base`'s loss) and
/// once per entry of `losses` (with `base`'s light count), reporting the
/// mean final total loss of each configuration.
pub fn run_ablation(
    scenes: &[AblationScene],
    ks: &[usize],
    losses: &[(String, LossConfig)],
    base: &Estimator,
) -> Result<AblationReport> {
    if scenes.is_empty() {
        return Err(Error::invalid("ablation needs at least one scene"));
    }
    let mut rows = Vec::with_capacity(ks.len() + losses.len());
    for &k in ks {
        let est = Estimator {
            fit: crate::estimator::FitConfig { k, ..base.fit },
            stats: if k == base.fit.k {
                base.stats.clone()
            } else {
                ParamStats::default_for(k)
            },
            ..base.clone()
        };
        let (mean_loss, mean_fit_time) = mean_fit(scenes, &est)?;
        rows.push(AblationRow {
            sweep: "k".into(),
            config: k.to_string(),
            k,
            mean_loss,
            mean_fit_time,
        });
    }
    for (name, loss) in losses {
        let est = Estimator {
            loss: *loss,
            ..base.clone()
        };
        let (mean_loss, mean_fit_time) = mean_fit(scenes, &est)?;
        rows.push(AblationRow {
            sweep: "loss".into(),
            config: name.clone(),
            k: base.fit.k,
            mean_loss,
            mean_fit_time,
        });
    }
    Ok(AblationReport {
        scenes: scenes.iter().map(|s| s.name.clone()).collect(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub iters: usize,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub seed: u64,
    /// Also time a full fit on the scene for the amortization table.
    pub measure_fit: bool,
}

impl BenchConfig {
    pub fn new(width: usize, height: usize, k: usize) -> Self {
        Self {
            width,
            height,
            k,
            iters: 10,
            threads: 0,
            seed: 0,
            measure_fit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amortized {
    pub interval: usize,
    pub ms_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Per-iteration light map plus compose time.
    pub samples_ms: Vec<f64>,
    pub min_ms: f64,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// Full fit wall time, including the resize to working resolution.
    pub fit_ms: Option<f64>,
    /// The resize part of `fit_ms`.
    pub resize_ms: Option<f64>,
    /// `(t_fit + (N - 1) * t_render) / N` with `t_render` the median.
    pub amortized: Vec<Amortized>,
    /// FNV-1a over the bits of the rendered frame.
    pub checksum: u64,
}

pub fn checksum(image: &Image) -> u64 {
    image.as_slice().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
        v.to_bits()
            .to_le_bytes()
            .iter()
            .fold(h, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x100_0000_01b3))
    })
}

pub fn amortized_cost(fit_ms: f64, render_ms: f64, interval: usize) -> f64 {
    let n = interval.max(1) as f64;
    (fit_ms + (n - 1.0) * render_ms) / n
}

/// Times `iters` renders of a seeded planted scene.
pub fn bench_render(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.width == 0 || cfg.height == 0 || cfg.iters == 0 || cfg.k == 0 {
        return Err(Error::invalid(
            "bench needs positive dimensions, light count and iterations",
        ));
    }
    let run = || -> Result<BenchReport> {
        let scene = PlantedScene::random(cfg.width, cfg.height, cfg.k, cfg.seed)?;
        let est = Estimator::new(cfg.k);
        let geom = ShadingGeometry::from_depth(scene.depth.clone(), est.fit.z_gain)?;
        let mut samples_ms = Vec::with_capacity(cfg.iters);
        let mut frame = None;
        for _ in 0..cfg.iters {
            let t = Instant::now();
            let light = render_light_map(&scene.truth, &geom, &est.shading)?;
            let out = compose(&scene.input, &light)?;
            samples_ms.push(t.elapsed().as_secs_f64() * 1e3);
            frame = Some(out);
        }
        let frame = frame.expect("iters > 0");

        let (fit_ms, resize_ms) = if cfg.measure_fit {
            let r = est.fit(&scene.input, &scene.target, Some(&scene.depth))?;
            (
                Some(r.wall_time().as_secs_f64() * 1e3),
                Some(r.resize_time.as_secs_f64() * 1e3),
            )
        } else {
            (None, None)
        };

        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_ms = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let amortized = fit_ms
            .map(|f| {
                AMORTIZATION_INTERVALS
                    .iter()
                    .map(|&interval| Amortized {
                        interval,
                        ms_per_frame: amortized_cost(f, median_ms, interval),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(BenchReport {
            config: *cfg,
            min_ms: sorted[0],
            median_ms,
            mean_ms: samples_ms.iter().sum::<f64>() / n as f64,
            samples_ms,
            fit_ms,
            resize_ms,
            amortized,
            checksum: checksum(&frame),
        })
    };
    if cfg.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run)
    }
}
