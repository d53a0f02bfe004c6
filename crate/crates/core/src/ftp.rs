//! Fourier Temporal Pyramid over a video's per-image feature series.
//!
//! A video yields `Q` skeletal images and therefore `Q` feature vectors of
//! dimension `D`. Each feature dimension is treated as a time series of
//! length `Q`. Level `k` (1-based) of the pyramid splits the time axis into
//! `2^(k-1)` contiguous segments and keeps the magnitudes of the `z` lowest
//! DFT coefficients of every segment. All levels are concatenated in
//! (level, segment, dimension, frequency) order, giving
//! `D * (2^levels - 1) * z` values.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FSER";
const FEATURE_HEADER: usize = 16;

/// Magnitudes of DFT coefficients `k = 0..z` of `series`.
///
/// Coefficients past the series length are reported as zero.
pub fn dft_low_freq(series: &[f64], z: usize) -> Vec<f64> {
    let len = series.len();
    (0..z)
        .map(|k| {
            if k >= len {
                return 0.0;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in series.iter().enumerate() {
                // reduce k*t mod len before scaling to keep the angle exact
                let angle = TAU * ((k * t) % len) as f64 / len as f64;
                re += x * angle.cos();
                im -= x * angle.sin();
            }
            re.hypot(im)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidConfig {
    pub levels: usize,
    pub z: usize,
    pub min_series_len: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            levels: 3,
            z: 4,
            min_series_len: 8,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 16 {
            return Err(Error::Validation(format!("pyramid levels must be in 1..=16, got {}", self.levels)));
        }
        if self.z == 0 {
            return Err(Error::Validation("z must be at least 1".into()));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        (1 << self.levels) - 1
    }

    /// Length short series are interpolated up to: at least
    /// `min_series_len`, and long enough that every finest-level segment
    /// holds `z` samples.
    pub fn target_len(&self) -> usize {
        self.min_series_len.max(self.z << (self.levels - 1)).max(1)
    }

    pub fn descriptor_len(&self, dim: usize) -> usize {
        dim * self.segments() * self.z
    }
}

/// `Q x D` feature matrix of one video (row `i` = features of image `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    q: usize,
    d: usize,
    vectors: Vec<f32>,
    pub video_id: String,
    pub label: Option<String>,
}

impl FeatureSeries {
    pub fn new(q: usize, d: usize, vectors: Vec<f32>, video_id: impl Into<String>, label: Option<String>) -> Result<Self> {
        if q == 0 || d == 0 {
            return Err(Error::EmptyInput(format!("feature series must be non-empty (Q = {q}, D = {d})")));
        }
        if vectors.len() != q * d {
            return Err(Error::Dimension(format!("{} values for a {q}x{d} feature series", vectors.len())));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {} contains NaN or infinity", i / d)));
        }
        Ok(FeatureSeries {
            q,
            d,
            vectors,
            video_id: video_id.into(),
            label,
        })
    }

    /// Builds a series from rows of equal length.
    pub fn from_rows(rows: &[Vec<f32>], video_id: impl Into<String>, label: Option<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("feature rows differ in length".into()));
        }
        FeatureSeries::new(rows.len(), d, rows.concat(), video_id, label)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f32] {
        &self.vectors
    }

    /// `FSER` magic, `u32` Q, `u32` D, `u32` reserved, then `Q*D` little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEATURE_HEADER + 4 * self.vectors.len());
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [self.q as u32, self.d as u32, 0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], video_id: impl Into<String>, label: Option<String>) -> Result<Self> {
        if bytes.len() < FEATURE_HEADER || &bytes[..4] != FEATURE_MAGIC {
            return Err(Error::Format("missing FSER header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (q, d) = (word(0), word(1));
        let payload = (bytes.len() - FEATURE_HEADER) / 4;
        if (bytes.len() - FEATURE_HEADER) % 4 != 0 || Some(payload) != q.checked_mul(d) {
            return Err(Error::Format(format!(
                "FSER header declares Q = {q}, D = {d} but the payload holds {payload} values"
            )));
        }
        let vectors = bytes[FEATURE_HEADER..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        FeatureSeries::new(q, d, vectors, video_id, label)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureSidecar {
    video: String,
    label: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `<path>` (binary series) and `<path>.json` with `.json` replacing the extension.
pub fn write_features(series: &FeatureSeries, path: &Path) -> Result<()> {
    std::fs::write(path, series.to_bytes())?;
    let sidecar = FeatureSidecar {
        video: series.video_id.clone(),
        label: series.label.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Loads a feature series written by any extractor following the `FSER` layout.
///
/// The JSON sidecar is optional; without it the file stem is the video id.
pub fn load_external_features(path: &Path) -> Result<FeatureSeries> {
    let bytes = std::fs::read(path)?;
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?
    } else {
        FeatureSidecar {
            video: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            label: None,
        }
    };
    FeatureSeries::from_bytes(&bytes, meta.video, meta.label)
}

/// Fixed-length video descriptor produced by [`ftp_encode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtpDescriptor {
    pub values: Vec<f64>,
    pub config: PyramidConfig,
}

/// Linear resampling of a column-major `len x d` matrix to `target` rows.
fn resample(columns: &[Vec<f64>], target: usize) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|col| {
            let len = col.len();
            if len == target {
                return col.clone();
            }
            (0..target)
                .map(|i| {
                    if len == 1 {
                        return col[0];
                    }
                    let t = (len - 1) as f64 * i as f64 / (target - 1) as f64;
                    let lo = (t.floor() as usize).min(len - 1);
                    let frac = t - lo as f64;
                    if frac == 0.0 {
                        col[lo]
                    } else {
                        col[lo] + frac * (col[lo + 1] - col[lo])
                    }
                })
                .collect()
        })
        .collect()
}

/// Encodes a feature series as a Fourier Temporal Pyramid descriptor.
///
/// Series shorter than [`PyramidConfig::target_len`] are first linearly
/// interpolated to that length. Segment `s` of `S` at a level covers rows
/// `floor(s*L/S) .. floor((s+1)*L/S)`.
pub fn ftp_encode(series: &FeatureSeries, cfg: &PyramidConfig) -> Result<FtpDescriptor> {
    cfg.validate()?;
    let columns: Vec<Vec<f64>> = (0..series.d)
        .map(|d| (0..series.q).map(|i| f64::from(series.vectors[i * series.d + d])).collect())
        .collect();
    let target = cfg.target_len();
    let columns = if series.q < target {
        resample(&columns, target)
    } else {
        columns
    };
    let len = columns[0].len();
    let mut values = Vec::with_capacity(cfg.descriptor_len(series.d));
    for level in 0..cfg.levels {
        let parts = 1usize << level;
        for s in 0..parts {
            let (lo, hi) = (s * len / parts, (s + 1) * len / parts);
            for col in &columns {
                values.extend(dft_low_freq(&col[lo..hi], cfg.z));
            }
        }
    }
    debug_assert_eq!(values.len(), cfg.descriptor_len(series.d));
    Ok(FtpDescriptor { values, config: *cfg })
}
