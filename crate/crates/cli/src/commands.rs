use std::fmt;
use std::path::{Path, PathBuf};

use relight_client::{ClientError, StudioClient};
use relight_core::albedo::{apply_albedo, estimate_illumination_mask};
use relight_core::config::SessionConfig;
use relight_core::estimator::{auto_target, Estimator};
use relight_core::harness::{
    bench_render, load_scene_dir, planted_scenes, run_ablation, standard_loss_configs, BenchConfig,
};
use relight_core::io::{
    self, frame_name, list_frames, load_depth, load_image_with, load_lights, parse_preset, save_image_with,
    save_lights, BitDepth, Transfer,
};
use relight_core::temporal::{enhance_sequence, KeyframeSchedule};
use relight_core::{render, DepthMap, Image, ShadingGeometry};
use relight_service::{Session, StudioConfig};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(relight_core::Error),
    Client(Box<ClientError>),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
            CliError::Client(e) => e.fmt(f),
        }
    }
}

impl From<relight_core::Error> for CliError {
    fn from(e: relight_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Client(Box::new(e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn required(flag: &Option<PathBuf>, from_file: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| from_file.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (not set in the config file either)")))
}

fn set<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    io::write_file(path, text.as_bytes()).map_err(Into::into)
}

fn base_config(cli: &Cli) -> Result<SessionConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SessionConfig::load(p)?,
        None => SessionConfig::default(),
    };
    set(&mut cfg.threads, cli.threads);
    cfg.check_paths()?;
    Ok(cfg)
}

fn apply_scene(cfg: &mut SessionConfig, scene: &SceneArgs) {
    if scene.image.is_some() {
        cfg.input = scene.image.clone();
    }
    if scene.depth.is_some() {
        cfg.depth = scene.depth.clone();
    }
    cfg.depth_normalize |= scene.depth_normalize;
    if scene.srgb {
        cfg.transfer = Transfer::Srgb;
    }
    set(&mut cfg.z_gain, scene.z_gain);
}

fn apply_glare(cfg: &mut SessionConfig, glare: &GlareArgs) {
    set(&mut cfg.tau, glare.tau);
    set(&mut cfg.blur_frac, glare.blur_frac);
}

fn apply_budget(cfg: &mut SessionConfig, b: &FitBudget) {
    set(&mut cfg.k, b.k);
    set(&mut cfg.coarse_iters, b.coarse_iters);
    set(&mut cfg.refine_iters, b.refine_iters);
    set(&mut cfg.seed, b.seed);
    set(&mut cfg.working_short_side, b.working_short_side);
    set(&mut cfg.lambda_r, b.lambda_r);
}

fn input_and_depth(cfg: &SessionConfig) -> Result<(Image, Option<DepthMap>)> {
    let image = load_image_with(required(&None, &cfg.input, "image")?, cfg.transfer)?;
    let depth = match &cfg.depth {
        Some(p) => Some(load_depth(p, cfg.depth_normalize)?),
        None => {
            log::warn!("no depth map; using a constant plane");
            None
        }
    };
    Ok((image, depth))
}

fn geometry_for(image: &Image, depth: Option<DepthMap>, z_gain: f64) -> Result<ShadingGeometry> {
    let (w, h) = image.dims();
    let depth = match depth {
        Some(d) => {
            d.ensure_dims((w, h))?;
            d
        }
        None => DepthMap::constant(w, h, relight_core::estimator::FALLBACK_DEPTH)?,
    };
    Ok(ShadingGeometry::from_depth(depth, z_gain)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = base_config(&cli)?;
    if cfg.threads > 0 {
        // only fails if a pool already exists, which keeps the first setting
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match cli.command {
        Command::Render(a) => render_cmd(cfg, a),
        Command::Fit(a) => fit_cmd(cfg, a),
        Command::EnhanceVideo(a) => video_cmd(cfg, a),
        Command::Albedo(a) => albedo_cmd(cfg, a),
        Command::Ablate(a) => ablate_cmd(cfg, a),
        Command::Bench(a) => bench_cmd(cfg, a),
        Command::Serve(a) => serve_cmd(cfg, a),
        Command::Studio(a) => studio_cmd(a),
    }
}

fn render_cmd(mut cfg: SessionConfig, a: RenderArgs) -> Result<()> {
    apply_scene(&mut cfg, &a.scene);
    apply_glare(&mut cfg, &a.glare);
    cfg.albedo |= a.albedo;
    let out = required(&a.out, &cfg.output, "out")?;
    let lights_path = a.lights.ok_or_else(|| CliError::Usage("missing --lights".into()))?;
    let (image, depth) = input_and_depth(&cfg)?;
    let lights = load_lights(&lights_path)?;
    for note in &lights.notes {
        log::info!("{}: {note}", lights_path.display());
    }
    let base = if cfg.albedo {
        apply_albedo(&image, &estimate_illumination_mask(&image, &cfg.albedo_config())?)?
    } else {
        image
    };
    let geom = geometry_for(&base, depth, cfg.z_gain)?;
    let rendered = render(&lights.params, &base, &geom, &lights.shading)?;
    let bits = match a.bits {
        Bits::Eight => BitDepth::Eight,
        Bits::Sixteen => BitDepth::Sixteen,
    };
    save_image_with(out, &rendered, bits, cfg.transfer)?;
    Ok(())
}

fn fit_cmd(mut cfg: SessionConfig, a: FitArgs) -> Result<()> {
    apply_scene(&mut cfg, &a.scene);
    apply_budget(&mut cfg, &a.budget);
    if a.target.is_some() {
        cfg.target = a.target.clone();
    }
    if a.out_lights.is_none() && a.out_image.is_none() && a.out_trace.is_none() {
        return Err(CliError::Usage(
            "nothing to write: pass --out-lights, --out-image or --out-trace".into(),
        ));
    }
    let est = cfg.estimator()?;
    let (image, depth) = input_and_depth(&cfg)?;
    let target = match (a.auto_target_luma, &cfg.target) {
        (Some(luma), _) => auto_target(&image, luma)?,
        (None, Some(path)) => load_image_with(path, cfg.transfer)?,
        (None, None) => auto_target(&image, cfg.target_luma)?,
    };
    let result = est.fit(&image, &target, depth.as_ref())?;
    log::info!(
        "fit {} lights: loss {:.6} in {:.2} s",
        est.fit.k,
        result.final_loss.total,
        result.wall_time().as_secs_f64()
    );
    if let Some(p) = &a.out_lights {
        save_lights(p, &result.params, &est.shading)?;
    }
    if let Some(p) = &a.out_image {
        let geom = geometry_for(&image, depth, cfg.z_gain)?;
        save_image_with(
            p,
            &render(&result.params, &image, &geom, &est.shading)?,
            BitDepth::Eight,
            cfg.transfer,
        )?;
    }
    if let Some(p) = &a.out_trace {
        write_json(p, &result)?;
    }
    Ok(())
}

fn video_cmd(mut cfg: SessionConfig, a: VideoArgs) -> Result<()> {
    apply_budget(&mut cfg, &a.budget);
    set(&mut cfg.keyframe_interval, a.keyframe_interval);
    set(&mut cfg.beta, a.beta);
    set(&mut cfg.target_luma, a.auto_target_luma);
    cfg.depth_normalize |= a.depth_normalize;
    let est = cfg.estimator()?;
    let schedule = KeyframeSchedule::new(cfg.keyframe_interval)?;

    let paths = list_frames(&a.frames)?;
    if paths.is_empty() {
        return Err(relight_core::Error::invalid(format!("no frame_NNNNNN images in {}", a.frames.display())).into());
    }
    let frames = paths
        .iter()
        .map(|p| load_image_with(p, cfg.transfer))
        .collect::<relight_core::Result<Vec<_>>>()?;
    let depths = match &a.depth_dir {
        Some(dir) => {
            let dp = list_frames(dir)?;
            if dp.len() != frames.len() {
                return Err(relight_core::Error::dims(format!("{} depth frames", frames.len()), dp.len()).into());
            }
            Some(
                dp.iter()
                    .map(|p| load_depth(p, cfg.depth_normalize))
                    .collect::<relight_core::Result<Vec<_>>>()?,
            )
        }
        None => {
            log::warn!("no depth directory; using a constant plane for every frame");
            None
        }
    };
    let luma = cfg.target_luma;
    let out = enhance_sequence(&frames, depths.as_deref(), schedule, cfg.beta, &est, |_, f| {
        auto_target(f, luma)
    })?;

    io::create_dir(&a.out)?;
    for (i, frame) in out.frames.iter().enumerate() {
        save_image_with(a.out.join(frame_name(i, "png")), frame, BitDepth::Eight, cfg.transfer)?;
    }
    if let Some(p) = &a.out_params {
        let presets: Vec<_> = out
            .params
            .iter()
            .map(|p| relight_core::io::LightsPreset::from_params(p, &est.shading))
            .collect();
        write_json(p, &presets)?;
    }
    if let Some(p) = &a.out_timings {
        write_json(p, &out.timings)?;
    }
    log::info!("{} frames, {} fits", out.frames.len(), out.fits);
    Ok(())
}

fn albedo_cmd(mut cfg: SessionConfig, a: AlbedoArgs) -> Result<()> {
    apply_glare(&mut cfg, &a.glare);
    if a.image.is_some() {
        cfg.input = a.image.clone();
    }
    if a.srgb {
        cfg.transfer = Transfer::Srgb;
    }
    let out = required(&a.out, &cfg.output, "out")?;
    let image = load_image_with(required(&None, &cfg.input, "image")?, cfg.transfer)?;
    let mask = estimate_illumination_mask(&image, &cfg.albedo_config())?;
    save_image_with(out, &apply_albedo(&image, &mask)?, BitDepth::Eight, cfg.transfer)?;
    if let Some(p) = &a.mask_out {
        save_image_with(p, &mask, BitDepth::Sixteen, Transfer::AsIs)?;
    }
    Ok(())
}

fn ablate_cmd(mut cfg: SessionConfig, a: AblateArgs) -> Result<()> {
    apply_budget(&mut cfg, &a.budget);
    if a.k_list.is_empty() || a.k_list.contains(&0) {
        return Err(CliError::Usage("--k-list needs positive light counts".into()));
    }
    let scenes = match (&a.scenes, a.planted) {
        (Some(dir), _) => load_scene_dir(dir)?,
        (None, Some(n)) => planted_scenes(n, a.size, cfg.seed)?,
        (None, None) => return Err(CliError::Usage("pass --scenes or --planted".into())),
    };
    let base: Estimator = cfg.estimator()?;
    let losses = if a.no_loss_sweep {
        Vec::new()
    } else {
        standard_loss_configs()
    };
    let report = run_ablation(&scenes, &a.k_list, &losses, &base)?;
    io::write_file(&a.out_report, report.to_csv().as_bytes())?;
    match &a.out_timings {
        Some(p) => io::write_file(p, report.timings_csv().as_bytes())?,
        None => print!("{}", report.timings_csv()),
    }
    Ok(())
}

fn bench_cmd(cfg: SessionConfig, a: BenchArgs) -> Result<()> {
    let bench = BenchConfig {
        iters: a.iters,
        threads: cfg.threads,
        seed: a.seed,
        measure_fit: !a.no_fit,
        ..BenchConfig::new(a.width, a.height, a.k)
    };
    let report = bench_render(&bench)?;
    if let Some(p) = &a.out {
        return write_json(p, &report);
    }
    println!(
        "{}x{} K={} iters={}: min {:.2} ms, median {:.2} ms, mean {:.2} ms",
        a.width, a.height, a.k, a.iters, report.min_ms, report.median_ms, report.mean_ms
    );
    if let (Some(fit), Some(resize)) = (report.fit_ms, report.resize_ms) {
        println!("fit {fit:.1} ms (resize {resize:.1} ms)");
    }
    for row in &report.amortized {
        println!("keyframe every {:>2}: {:.2} ms/frame", row.interval, row.ms_per_frame);
    }
    println!("checksum {:016x}", report.checksum);
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("cannot start async runtime: {e}")))
}

fn serve_cmd(mut cfg: SessionConfig, a: ServeArgs) -> Result<()> {
    apply_scene(&mut cfg, &a.scene);
    apply_glare(&mut cfg, &a.glare);
    set(&mut cfg.k, a.k);
    cfg.albedo |= a.albedo;
    let (image, depth) = input_and_depth(&cfg)?;
    let studio = StudioConfig {
        preview_short_side: a.preview_short_side,
        estimator: cfg.estimator()?,
        albedo: cfg.albedo.then(|| cfg.albedo_config()),
    };
    let session = Session::new(image, depth, studio)?;
    let addr = format!("{}:{}", a.host, a.port);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {addr}: {e}")))?;
        println!("listening on http://{}", listener.local_addr().expect("bound socket"));
        relight_service::serve(session, listener)
            .await
            .map_err(|e| CliError::Usage(format!("server stopped: {e}")))
    })
}

fn studio_cmd(a: StudioArgs) -> Result<()> {
    let client = StudioClient::new(a.url);
    runtime()?.block_on(async move {
        match a.action {
            StudioAction::Snapshot => print_json(&client.snapshot().await?),
            StudioAction::SetParams { lights } => {
                let preset = parse_preset(&io::read_text(&lights)?)?;
                print_json(&client.set_params(&preset).await?)
            }
            StudioAction::Export { out } => {
                let png = client.export().await?;
                io::write_file(&out, &png)?;
                Ok(())
            }
            StudioAction::Fit { target } => {
                let bytes = std::fs::read(&target).map_err(|_| relight_core::Error::NotFound(target.clone()))?;
                print_json(&client.fit(bytes).await?)
            }
        }
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).expect("reply serializes"));
    Ok(())
}
