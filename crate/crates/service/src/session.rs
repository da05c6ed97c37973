use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use relight_core::albedo::{apply_albedo, estimate_illumination_mask, AlbedoConfig};
use relight_core::estimator::{Estimator, FALLBACK_DEPTH};
use relight_core::io::{encode_png, LightsPreset};
use relight_core::protocol::{Ack, Snapshot};
use relight_core::raster::fit_short_side;
use relight_core::{
    project_valid, render, DepthMap, Error, Image, LightingParams, Result, ShadingConfig, ShadingGeometry,
};
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;

/// Shorter side of preview frames.
pub const DEFAULT_PREVIEW_SHORT_SIDE: usize = 512;

#[derive(Debug, Clone)]
pub struct StudioConfig {
    pub preview_short_side: usize,
    /// Light count, bounds, shading and fit budgets for the session.
    pub estimator: Estimator,
    /// Render from the estimated albedo instead of the raw image.
    pub albedo: Option<AlbedoConfig>,
}

impl Default for StudioConfig {
    fn default() -> Self {
        Self {
            preview_short_side: DEFAULT_PREVIEW_SHORT_SIDE,
            estimator: Estimator::new(9),
            albedo: None,
        }
    }
}

/// Parameters waiting to be rendered, tagged with the sequence number they
/// were acknowledged with.
#[derive(Debug, Clone)]
struct Job {
    seq: u64,
    params: LightingParams,
    shading: ShadingConfig,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub seq: u64,
    pub width: usize,
    pub height: usize,
    pub png: Bytes,
}

/// One image and depth map with the lighting currently applied to them.
pub struct Session {
    base: Image,
    geometry: ShadingGeometry,
    preview_base: Image,
    preview_geometry: ShadingGeometry,
    estimator: Estimator,
    current: Mutex<Job>,
    pending: watch::Sender<Job>,
    frames: broadcast::Sender<Frame>,
    rendered: AtomicU64,
}

impl Session {
    /// `depth` defaults to the constant fallback when absent.
    pub fn new(image: Image, depth: Option<DepthMap>, cfg: StudioConfig) -> Result<Arc<Self>> {
        cfg.estimator.validate()?;
        let (w, h) = image.dims();
        if w == 0 || h == 0 {
            return Err(Error::invalid("session image is empty"));
        }
        let depth = match depth {
            Some(d) => {
                if d.dims() != (w, h) {
                    return Err(Error::dims(format!("{w}x{h}"), format!("{}x{}", d.width(), d.height())));
                }
                d
            }
            None => {
                log::warn!("no depth map; using constant {FALLBACK_DEPTH}");
                DepthMap::constant(w, h, FALLBACK_DEPTH)?
            }
        };
        let base = match &cfg.albedo {
            Some(a) => apply_albedo(&image, &estimate_illumination_mask(&image, a)?)?,
            None => image,
        };
        let z_gain = cfg.estimator.fit.z_gain;
        let (pw, ph) = fit_short_side(w, h, cfg.preview_short_side);
        let preview_base = base.resized(pw, ph);
        let preview_geometry = ShadingGeometry::from_depth(depth.resized(pw, ph), z_gain)?;
        let geometry = ShadingGeometry::from_depth(depth, z_gain)?;
        let initial = Job {
            seq: 0,
            params: LightingParams::neutral(cfg.estimator.fit.k),
            shading: cfg.estimator.shading,
        };
        let (pending, _) = watch::channel(initial.clone());
        let (frames, _) = broadcast::channel(64);
        Ok(Arc::new(Self {
            base,
            geometry,
            preview_base,
            preview_geometry,
            estimator: cfg.estimator,
            current: Mutex::new(initial),
            pending,
            frames,
            rendered: AtomicU64::new(0),
        }))
    }

    pub fn k(&self) -> usize {
        self.estimator.fit.k
    }

    pub fn dims(&self) -> (usize, usize) {
        self.base.dims()
    }

    pub fn preview_dims(&self) -> (usize, usize) {
        self.preview_base.dims()
    }

    fn current(&self) -> Job {
        self.current.lock().expect("state lock").clone()
    }

    pub fn snapshot(&self) -> Snapshot {
        let job = self.current();
        let (width, height) = self.dims();
        let (preview_width, preview_height) = self.preview_dims();
        Snapshot {
            seq: job.seq,
            k: self.k(),
            width,
            height,
            preview_width,
            preview_height,
            sigma1: job.shading.sigma1,
            sigma2: job.shading.sigma2,
            params: LightsPreset::from_params(&job.params, &job.shading),
            frames_rendered: self.rendered.load(Ordering::SeqCst),
        }
    }

    /// Validates, projects and stores `preset`, then queues a render.
    /// Absent shading constants keep their current values.
    pub fn set_params(&self, preset: LightsPreset) -> Result<Ack> {
        let keep = (preset.sigma1.is_none(), preset.sigma2.is_none());
        let loaded = preset.into_loaded()?;
        if loaded.params.k() != self.k() {
            return Err(Error::Schema {
                field: "k".into(),
                message: format!("session has {} lights, update has {}", self.k(), loaded.params.k()),
            });
        }
        let (params, report) = project_valid(&loaded.params, &self.estimator.bounds);
        if !report.degenerate_directions.is_empty() {
            log::warn!(
                "zero-length directions replaced for lights {:?}",
                report.degenerate_directions
            );
        }
        let mut current = self.current.lock().expect("state lock");
        let shading = ShadingConfig {
            sigma1: if keep.0 {
                current.shading.sigma1
            } else {
                loaded.shading.sigma1
            },
            sigma2: if keep.1 {
                current.shading.sigma2
            } else {
                loaded.shading.sigma2
            },
        };
        let job = Job {
            seq: current.seq + 1,
            params,
            shading,
        };
        *current = job.clone();
        // still under the lock so queued jobs follow seq order
        self.pending.send_replace(job.clone());
        Ok(Ack {
            seq: job.seq,
            params: LightsPreset::from_params(&job.params, &job.shading),
        })
    }

    /// Fits the session's lights to `target` at full resolution and applies them.
    pub fn fit(&self, target: &Image) -> Result<Ack> {
        if target.dims() != self.dims() {
            let (w, h) = self.dims();
            return Err(Error::dims(
                format!("{w}x{h}"),
                format!("{}x{}", target.width(), target.height()),
            ));
        }
        let shading = self.current().shading;
        let est = Estimator {
            shading,
            ..self.estimator.clone()
        };
        let result = est.fit(&self.base, target, Some(self.geometry.depth()))?;
        self.set_params(LightsPreset::from_params(&result.params, &shading))
    }

    /// Full-resolution 8-bit PNG of the current lighting.
    pub fn export(&self) -> Result<Vec<u8>> {
        let job = self.current();
        Ok(encode_png(&render(
            &job.params,
            &self.base,
            &self.geometry,
            &job.shading,
        )?))
    }

    fn render_preview(&self, job: &Job) -> Result<Frame> {
        let out = render(&job.params, &self.preview_base, &self.preview_geometry, &job.shading)?;
        Ok(Frame {
            seq: job.seq,
            width: out.width(),
            height: out.height(),
            png: Bytes::from(encode_png(&out)),
        })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Frame> {
        self.frames.subscribe()
    }

    /// Starts the single render worker. Updates that arrive while a frame is
    /// being rendered collapse into the newest one.
    pub fn spawn_renderer(self: &Arc<Self>) -> JoinHandle<()> {
        let session = Arc::clone(self);
        let mut rx = session.pending.subscribe();
        tokio::spawn(async move {
            while rx.changed().await.is_ok() {
                let job = rx.borrow_and_update().clone();
                let s = Arc::clone(&session);
                match tokio::task::spawn_blocking(move || s.render_preview(&job)).await {
                    Ok(Ok(frame)) => {
                        session.rendered.fetch_add(1, Ordering::SeqCst);
                        // no subscribers is fine
                        let _ = session.frames.send(frame);
                    }
                    Ok(Err(e)) => log::error!("preview render failed: {e}"),
                    Err(e) => log::error!("render worker panicked: {e}"),
                }
            }
        })
    }
}
