use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ImageKind, SkeletalImage};
use crate::error::{Error, Result};
use crate::normalize::{scale_channels, unscale_channels, ChannelScale};

pub const RAW_MAGIC: &[u8; 4] = b"SKPX";
const RAW_HEADER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportMode {
    /// Lossless `f32` container.
    #[serde(rename = "raw-f32")]
    RawF32,
    /// Per-channel min-max scaled 8-bit RGB PNGs.
    #[serde(rename = "png8")]
    Png8,
}

impl std::str::FromStr for ExportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw-f32" => Ok(ExportMode::RawF32),
            "png" | "png8" => Ok(ExportMode::Png8),
            _ => Err(Error::Validation(format!("unknown export mode {s:?}"))),
        }
    }
}

/// Decoded `SKPX` container.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// `SKPX` magic, `u32` H, W, C (little endian), then `H*W*C` little-endian `f32`.
pub fn encode_raw(img: &SkeletalImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + 4 * img.data().len());
    out.extend_from_slice(RAW_MAGIC);
    for dim in [img.height(), img.width(), img.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawTensor> {
    if bytes.len() < RAW_HEADER || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format("missing SKPX header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (height, width, channels) = (dim(0), dim(1), dim(2));
    let count = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Format("SKPX dimensions overflow".into()))?;
    if bytes.len() != RAW_HEADER + 4 * count {
        return Err(Error::Format(format!(
            "SKPX header declares {height}x{width}x{channels} but payload has {} bytes",
            bytes.len() - RAW_HEADER
        )));
    }
    let data = bytes[RAW_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(RawTensor {
        height,
        width,
        channels,
        data,
    })
}

/// Per-video context recorded next to every exported image.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportContext {
    pub source: String,
    pub label: Option<String>,
    pub stride: usize,
    pub fps: f64,
}

/// JSON sidecar written next to each exported image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetadata {
    pub source: String,
    pub label: Option<String>,
    /// `[start frame, n]`
    pub window: (f64, usize),
    pub stride: usize,
    pub arrangement_set: String,
    pub kind: ImageKind,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<[f64; 2]>>,
}

fn file_stem(source: &str, start: f64) -> String {
    let clean: String = source
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.+~".contains(c) { c } else { '_' })
        .collect();
    format!("{clean}_{:05}", start as usize)
}

fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(rgb).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!("{} is not 8-bit RGB", path.display())));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

fn png_names(stem: &str, kind: ImageKind) -> Vec<String> {
    match kind {
        ImageKind::LocationVelocity => vec![format!("{stem}_loc.png"), format!("{stem}_vel.png")],
        _ => vec![format!("{stem}.png")],
    }
}

/// Writes an image and its JSON sidecar into `dir`, returning the files written.
///
/// `RawF32` writes `<stem>.skpx`; `Png8` scales every channel to `[0, 255]`
/// and writes one RGB PNG per three channels. The stem is derived from the
/// source id and window start, so images of different windows never collide.
pub fn export_image(img: &SkeletalImage, ctx: &ExportContext, mode: ExportMode, dir: &Path) -> Result<Vec<PathBuf>> {
    let stem = file_stem(&ctx.source, img.window_start);
    let mut meta = ImageMetadata {
        source: ctx.source.clone(),
        label: ctx.label.clone(),
        window: (img.window_start, img.window_len),
        stride: ctx.stride,
        arrangement_set: img.arrangement_set_id.clone(),
        kind: img.kind,
        fps: ctx.fps,
        scale: None,
    };
    let mut written = Vec::new();
    match mode {
        ExportMode::RawF32 => {
            let path = dir.join(format!("{stem}.skpx"));
            std::fs::write(&path, encode_raw(img))?;
            written.push(path);
        }
        ExportMode::Png8 => {
            let scaled = scale_channels(img.data(), img.channels())?;
            for (g, name) in png_names(&stem, img.kind).into_iter().enumerate() {
                let rgb: Vec<u8> = scaled
                    .pixels
                    .chunks_exact(img.channels())
                    .flat_map(|px| px[3 * g..3 * g + 3].iter().copied())
                    .collect();
                let path = dir.join(name);
                write_png(&path, img.width(), img.height(), &rgb)?;
                written.push(path);
            }
            meta.scale = Some(scaled.scales.iter().map(|s| [s.min, s.max]).collect());
        }
    }
    let sidecar = dir.join(format!("{stem}.json"));
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta)?)?;
    written.push(sidecar);
    Ok(written)
}

/// Reads an image back from its sidecar path.
///
/// Raw images come back bit-exact; PNG images are dequantized with the
/// recorded channel scales.
pub fn import_image(sidecar: &Path) -> Result<(SkeletalImage, ImageMetadata)> {
    let meta: ImageMetadata = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let stem = sidecar
        .file_stem()
        .ok_or_else(|| Error::Format("sidecar path has no file name".into()))?
        .to_string_lossy()
        .into_owned();
    let channels = meta.kind.channels();
    let mut img = match &meta.scale {
        None => {
            let raw = decode_raw(&std::fs::read(dir.join(format!("{stem}.skpx")))?)?;
            if raw.channels != channels {
                return Err(Error::Format(format!(
                    "{stem}: {} channels stored for a {} image",
                    raw.channels,
                    meta.kind.as_str()
                )));
            }
            SkeletalImage::from_parts(raw.height, raw.width, meta.kind, raw.data, meta.window, &meta.arrangement_set)?
        }
        Some(scale) => {
            let scales: Vec<ChannelScale> = scale.iter().map(|&[min, max]| ChannelScale { min, max }).collect();
            if scales.len() != channels {
                return Err(Error::Format(format!("{stem}: scale list does not match channel count")));
            }
            let mut dims = None;
            let mut pixels: Vec<u8> = Vec::new();
            for (g, name) in png_names(&stem, meta.kind).into_iter().enumerate() {
                let (w, h, rgb) = read_png(&dir.join(name))?;
                if dims.is_some_and(|d| d != (w, h)) {
                    return Err(Error::Format(format!("{stem}: PNG channel groups differ in size")));
                }
                dims = Some((w, h));
                if g == 0 {
                    pixels = vec![0; w * h * channels];
                }
                for (px, src) in pixels.chunks_exact_mut(channels).zip(rgb.chunks_exact(3)) {
                    px[3 * g..3 * g + 3].copy_from_slice(src);
                }
            }
            let (w, h) = dims.expect("at least one PNG");
            let data = unscale_channels(&pixels, &scales).into_iter().map(|v| v as f32).collect();
            let mut img = SkeletalImage::from_parts(h, w, meta.kind, data, meta.window, &meta.arrangement_set)?;
            img.scale = Some(scales);
            img
        }
    };
    img.window_start = meta.window.0;
    Ok((img, meta))
}
