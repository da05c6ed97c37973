use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "relight", version, about = "Depth-aware virtual-light relighting")]
pub struct Cli {
    /// TOML session config. Flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for rendering and fitting (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Shade an image with a lights preset.
    Render(RenderArgs),
    /// Fit lights that turn an image into a target.
    Fit(FitArgs),
    /// Relight a directory of numbered frames with keyframed fits and smoothing.
    EnhanceVideo(VideoArgs),
    /// Remove bright glare with the illumination mask baseline.
    Albedo(AlbedoArgs),
    /// Sweep light counts and loss configurations over a scene set.
    Ablate(AblateArgs),
    /// Time rendering and fitting on a seeded scene.
    Bench(BenchArgs),
    /// Run the live studio service for one image.
    Serve(ServeArgs),
    /// Talk to a running studio service.
    Studio(StudioArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Bits {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Args, Debug, Default)]
pub struct SceneArgs {
    /// Input image (PNG or PPM).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Depth map; a constant plane is used when absent.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Stretch depth values to [0, 1] after loading.
    #[arg(long)]
    pub depth_normalize: bool,
    /// Linearize sRGB input and re-encode output.
    #[arg(long)]
    pub srgb: bool,
    #[arg(long)]
    pub z_gain: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct GlareArgs {
    /// Blurred-luma threshold for glare.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Blur sigma as a fraction of image width.
    #[arg(long)]
    pub blur_frac: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct FitBudget {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub coarse_iters: Option<usize>,
    #[arg(long)]
    pub refine_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub working_short_side: Option<usize>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Lights preset JSON.
    #[arg(long)]
    pub lights: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Render from the estimated albedo instead of the raw image.
    #[arg(long)]
    pub albedo: bool,
    #[command(flatten)]
    pub glare: GlareArgs,
    #[arg(long, value_enum, default_value = "8")]
    pub bits: Bits,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Target image of the same size.
    #[arg(long, conflicts_with = "auto_target_luma")]
    pub target: Option<PathBuf>,
    /// Build the target by a gamma curve reaching this mean luma.
    #[arg(long)]
    pub auto_target_luma: Option<f64>,
    #[command(flatten)]
    pub budget: FitBudget,
    #[arg(long)]
    pub out_lights: Option<PathBuf>,
    /// Full-resolution render of the fitted lights.
    #[arg(long)]
    pub out_image: Option<PathBuf>,
    /// Fit result with both loss traces, as JSON.
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VideoArgs {
    /// Directory of frame_NNNNNN.png files.
    #[arg(long)]
    pub frames: PathBuf,
    /// Matching directory of depth frames.
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    #[arg(long)]
    pub depth_normalize: bool,
    /// Fit every N-th frame.
    #[arg(long)]
    pub keyframe_interval: Option<usize>,
    /// Smoothing factor on the previous parameters.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Keyframe targets use a gamma curve reaching this mean luma.
    #[arg(long)]
    pub auto_target_luma: Option<f64>,
    #[command(flatten)]
    pub budget: FitBudget,
    #[arg(long)]
    pub out: PathBuf,
    /// Smoothed parameters of every frame, as JSON.
    #[arg(long)]
    pub out_params: Option<PathBuf>,
    /// Per-frame timings, as JSON.
    #[arg(long)]
    pub out_timings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AlbedoArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub glare: GlareArgs,
    /// Write the glare mask as a 16-bit image.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    #[arg(long)]
    pub srgb: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Directory of scene subdirectories with input.png, target.png and optional depth.png.
    #[arg(long, required_unless_present = "planted", conflicts_with = "planted")]
    pub scenes: Option<PathBuf>,
    /// Use this many generated nine-light scenes instead.
    #[arg(long)]
    pub planted: Option<usize>,
    /// Side length of generated scenes.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,6,9,12")]
    pub k_list: Vec<usize>,
    /// Skip the loss configuration sweep.
    #[arg(long)]
    pub no_loss_sweep: bool,
    #[command(flatten)]
    pub budget: FitBudget,
    /// CSV of mean final losses.
    #[arg(long)]
    pub out_report: PathBuf,
    /// CSV of mean fit times; printed when absent.
    #[arg(long)]
    pub out_timings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the fit timing and the amortization table.
    #[arg(long)]
    pub no_fit: bool,
    /// Write the report as JSON instead of printing a summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub k: Option<usize>,
    /// Shorter side of streamed preview frames.
    #[arg(long, default_value_t = relight_service::DEFAULT_PREVIEW_SHORT_SIDE)]
    pub preview_short_side: usize,
    #[arg(long)]
    pub albedo: bool,
    #[command(flatten)]
    pub glare: GlareArgs,
}

#[derive(Args, Debug)]
pub struct StudioArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[command(subcommand)]
    pub action: StudioAction,
}

#[derive(Subcommand, Debug)]
pub enum StudioAction {
    /// Print the session state as JSON.
    Snapshot,
    /// Apply a lights preset and print the acknowledgment.
    SetParams {
        #[arg(long)]
        lights: PathBuf,
    },
    /// Save the full-resolution render.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the session lights to a target image.
    Fit {
        #[arg(long)]
        target: PathBuf,
    },
}
