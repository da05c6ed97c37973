//! Image, depth and lights-preset codecs.
//!
//! Images decode to floats as `value / maxval` with no transfer function
//! unless sRGB linearization is requested. Encoding clamps to `[0, 1]` and
//! quantizes with round-half-up.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lighting::{LightingParams, ParamStats, ParamVector, VirtualLight};
use crate::raster::{DepthMap, Image};
use crate::render::ShadingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    /// Pixel values used as stored.
    #[default]
    AsIs,
    /// sRGB-encoded files, linearized on load and re-encoded on save.
    Srgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Clamp to `[0, 1]`, scale to `maxval` and round half up.
#[inline]
pub fn quantize(v: f32, depth: BitDepth) -> u16 {
    let x = f64::from(v).clamp(0.0, 1.0);
    (x * depth.max() + 0.5).floor() as u16
}

fn read_dynamic(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    decode_bytes(&bytes, path)
}

fn decode_bytes(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: match other {
                    Some(f) => format!("{f:?} is not supported (PNG or PPM expected)"),
                    None => "unrecognized file signature".into(),
                },
            })
        }
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::Corrupt {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

fn from_dynamic(img: DynamicImage, transfer: Transfer) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    let data: Vec<f32> = if wide {
        img.into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .map(|v| apply_load_transfer(v, transfer))
            .collect()
    } else {
        img.into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .map(|v| apply_load_transfer(v, transfer))
            .collect()
    };
    Image::from_vec(w, h, data).expect("decoder output has w*h*3 samples")
}

#[inline]
fn apply_load_transfer(v: f64, transfer: Transfer) -> f32 {
    match transfer {
        Transfer::AsIs => v as f32,
        Transfer::Srgb => srgb_to_linear(v) as f32,
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_image_with(path, Transfer::AsIs)
}

pub fn load_image_with(path: impl AsRef<Path>, transfer: Transfer) -> Result<Image> {
    let path = path.as_ref();
    Ok(from_dynamic(read_dynamic(path)?, transfer))
}

/// Decodes PNG or PPM bytes already in memory.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    Ok(from_dynamic(
        decode_bytes(bytes, Path::new("<memory>"))?,
        Transfer::AsIs,
    ))
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "output extension must be .png or .ppm".into(),
        }),
    }
}

fn to_dynamic(image: &Image, depth: BitDepth, transfer: Transfer) -> DynamicImage {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let encode = |v: f32| match transfer {
        Transfer::AsIs => v,
        Transfer::Srgb => linear_to_srgb(f64::from(v).clamp(0.0, 1.0)) as f32,
    };
    match depth {
        BitDepth::Eight => {
            let raw = image
                .as_slice()
                .iter()
                .map(|&v| quantize(encode(v), depth) as u8)
                .collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("sized"))
        }
        BitDepth::Sixteen => {
            let raw = image.as_slice().iter().map(|&v| quantize(encode(v), depth)).collect();
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).expect("sized"))
        }
    }
}

fn write_dynamic(img: &DynamicImage, path: &Path) -> Result<()> {
    let format = format_for(path)?;
    let file = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BufWriter::new(file);
    img.write_to(&mut out, format).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    save_image_with(path, image, BitDepth::Eight, Transfer::AsIs)
}

pub fn save_image_with(path: impl AsRef<Path>, image: &Image, depth: BitDepth, transfer: Transfer) -> Result<()> {
    write_dynamic(&to_dynamic(image, depth, transfer), path.as_ref())
}

/// 8-bit PNG bytes of the clamped image.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    to_dynamic(image, BitDepth::Eight, Transfer::AsIs)
        .write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Single-channel 8- or 16-bit depth; colour inputs are reduced to luma.
pub fn load_depth(path: impl AsRef<Path>, renormalize: bool) -> Result<DepthMap> {
    let path = path.as_ref();
    let img = read_dynamic(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f32> = match img.color() {
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::Rgb8 | image::ColorType::Rgba8 => img
            .into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| (f64::from(v) / 255.0) as f32)
            .collect(),
        _ => img
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| (f64::from(v) / 65535.0) as f32)
            .collect(),
    };
    let depth = DepthMap::new(w, h, values).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(if renormalize { depth.renormalized() } else { depth })
}

pub fn save_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let raw = depth.values().iter().map(|&v| quantize(v, BitDepth::Sixteen)).collect();
    let buf =
        ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(depth.width() as u32, depth.height() as u32, raw).expect("sized");
    write_dynamic(&DynamicImage::ImageLuma16(buf), path.as_ref())
}

/// Wire and file form of one light.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightDoc {
    pub color: [f64; 3],
    pub direction: [f64; 3],
    pub position: [f64; 3],
    pub attenuation: f64,
}

/// Lights preset document, shared by files, the HTTP API and the socket protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightsPreset {
    pub k: usize,
    pub ambient: [f64; 3],
    pub lights: Vec<LightDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

/// A decoded preset plus notes about defaults that were filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLights {
    pub params: LightingParams,
    pub shading: ShadingConfig,
    pub notes: Vec<String>,
}

impl LightsPreset {
    pub fn from_params(params: &LightingParams, shading: &ShadingConfig) -> Self {
        Self {
            k: params.k(),
            ambient: params.ambient,
            lights: params
                .lights
                .iter()
                .map(|l| LightDoc {
                    color: l.color,
                    direction: l.direction,
                    position: l.position,
                    attenuation: l.attenuation,
                })
                .collect(),
            sigma1: Some(shading.sigma1),
            sigma2: Some(shading.sigma2),
        }
    }

    /// Checks the document and converts it; directions are taken as given.
    pub fn into_loaded(self) -> Result<LoadedLights> {
        if self.lights.len() != self.k {
            return Err(Error::Schema {
                field: "k".into(),
                message: format!("k is {} but {} lights are listed", self.k, self.lights.len()),
            });
        }
        let finite = |field: String, vals: &[f64]| -> Result<()> {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Schema {
                    field,
                    message: "values must be finite".into(),
                })
            }
        };
        finite("ambient".into(), &self.ambient)?;
        let mut notes = Vec::new();
        for (i, l) in self.lights.iter().enumerate() {
            finite(format!("lights[{i}].color"), &l.color)?;
            finite(format!("lights[{i}].direction"), &l.direction)?;
            finite(format!("lights[{i}].position"), &l.position)?;
            finite(format!("lights[{i}].attenuation"), &[l.attenuation])?;
        }
        let sigma1 = self.sigma1.unwrap_or_else(|| {
            notes.push(format!(
                "sigma1 missing, using default {}",
                ShadingConfig::DEFAULT_SIGMA1
            ));
            ShadingConfig::DEFAULT_SIGMA1
        });
        let sigma2 = self.sigma2.unwrap_or_else(|| {
            notes.push(format!(
                "sigma2 missing, using default {}",
                ShadingConfig::DEFAULT_SIGMA2
            ));
            ShadingConfig::DEFAULT_SIGMA2
        });
        let shading = ShadingConfig { sigma1, sigma2 };
        shading.validate().map_err(|e| Error::Schema {
            field: if sigma1 > 0.0 { "sigma2" } else { "sigma1" }.into(),
            message: e.to_string(),
        })?;
        let params = LightingParams {
            lights: self
                .lights
                .into_iter()
                .map(|l| VirtualLight {
                    color: l.color,
                    direction: l.direction,
                    position: l.position,
                    attenuation: l.attenuation,
                })
                .collect(),
            ambient: self.ambient,
        };
        Ok(LoadedLights { params, shading, notes })
    }
}

fn schema_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::Schema {
        field: if path == "." { "<document>".into() } else { path },
        message: err.inner().to_string(),
    }
}

/// Parses a preset document from JSON text.
pub fn parse_preset(text: &str) -> Result<LightsPreset> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(schema_error)
}

pub fn parse_lights(text: &str) -> Result<LoadedLights> {
    parse_preset(text)?.into_loaded()
}

pub fn preset_to_json(params: &LightingParams, shading: &ShadingConfig) -> String {
    serde_json::to_string_pretty(&LightsPreset::from_params(params, shading)).expect("preset serializes")
}

pub fn load_lights(path: impl AsRef<Path>) -> Result<LoadedLights> {
    parse_lights(&read_text(path.as_ref())?)
}

pub fn save_lights(path: impl AsRef<Path>, params: &LightingParams, shading: &ShadingConfig) -> Result<()> {
    write_text(path.as_ref(), &(preset_to_json(params, shading) + "\n"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsDoc {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

/// Normalization statistics from `{"mu": [...], "sigma": [...]}`.
pub fn load_stats(path: impl AsRef<Path>) -> Result<ParamStats> {
    let text = read_text(path.as_ref())?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let doc: StatsDoc = serde_path_to_error::deserialize(de).map_err(schema_error)?;
    ParamStats::new(ParamVector(doc.mu), ParamVector(doc.sigma)).map_err(|e| Error::Schema {
        field: "sigma".into(),
        message: e.to_string(),
    })
}

pub fn save_stats(path: impl AsRef<Path>, stats: &ParamStats) -> Result<()> {
    let doc = StatsDoc {
        mu: stats.mu.0.clone(),
        sigma: stats.sigma.0.clone(),
    };
    write_text(
        path.as_ref(),
        &(serde_json::to_string_pretty(&doc).expect("serializes") + "\n"),
    )
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Creates `dir` and its parents if missing.
pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// `frame_000042.png` style file name.
pub fn frame_name(index: usize, ext: &str) -> String {
    format!("frame_{index:06}.{ext}")
}

/// Numbered frames in `dir`, sorted by index.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => Error::Io {
            path: dir.to_path_buf(),
            source: e,
        },
    })?;
    let mut frames: Vec<(usize, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let (stem, ext) = name.rsplit_once('.')?;
            let digits = stem.strip_prefix("frame_")?;
            let ok_ext = matches!(ext.to_ascii_lowercase().as_str(), "png" | "ppm");
            if !(ok_ext && digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit())) {
                return None;
            }
            Some((digits.parse().ok()?, p.clone()))
        })
        .collect();
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}
