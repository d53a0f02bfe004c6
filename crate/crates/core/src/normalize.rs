//! Pose normalization, Gaussian augmentation and pixel-range scaling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Point3, SkeletonFrame, SkeletonSequence};

/// Shoulder vectors at or below this norm carry no usable direction.
pub const DEGENERATE_SHOULDER_NORM: f64 = 1e-8;

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn apply(r: &Mat3, p: Point3) -> Point3 {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
    ]
}

fn norm(v: Point3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Minimal rotation taking the direction of `v` onto `+x`.
///
/// Rodrigues form with unit axis `k = (v/|v|) x x_hat / |.|`. The axis always
/// lies in the y-z plane, so errors in its direction do not move `+x`; this
/// keeps the result accurate even when `v` is nearly anti-parallel to `+x`.
/// For exactly anti-parallel input the axis defaults to `+z`.
fn rotation_to_x(v: Point3) -> Mat3 {
    let n = norm(v);
    let u = [v[0] / n, v[1] / n, v[2] / n];
    // u x x_hat = (0, u_z, -u_y)
    let axis = [0.0, u[2], -u[1]];
    let sin = norm(axis);
    let cos = u[0];
    if sin == 0.0 {
        return if cos > 0.0 {
            IDENTITY
        } else {
            [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]
        };
    }
    let k = [0.0, axis[1] / sin, axis[2] / sin];
    let one_minus_cos = 1.0 - cos;
    // R = I + sin [k]x + (1 - cos) [k]x^2
    let kx: Mat3 = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            let kx2 = (0..3).map(|l| kx[i][l] * kx[l][j]).sum::<f64>();
            r[i][j] += sin * kx[i][j] + one_minus_cos * kx2;
        }
    }
    r
}

/// Result of [`normalize_pose_report`].
#[derive(Debug, Clone)]
pub struct NormalizedSequence {
    pub sequence: SkeletonSequence,
    /// Frames whose shoulder vector was degenerate and reused a previous rotation.
    pub degenerate_frames: Vec<usize>,
}

/// Moves the hip to the origin and turns the shoulder line onto `+x`, frame by frame.
pub fn normalize_pose(seq: &SkeletonSequence) -> SkeletonSequence {
    normalize_pose_report(seq).sequence
}

/// [`normalize_pose`] plus the list of frames with a degenerate shoulder vector.
///
/// A degenerate frame reuses the rotation of the previous frame; if the
/// first frame is degenerate the identity is used and a warning is logged.
pub fn normalize_pose_report(seq: &SkeletonSequence) -> NormalizedSequence {
    let layout = seq.layout();
    let mut previous: Option<Mat3> = None;
    let mut degenerate_frames = Vec::new();
    let mut frames = Vec::with_capacity(seq.len());
    for (f, frame) in seq.frames().iter().enumerate() {
        let hip = frame.joint(layout.hip);
        let centered: Vec<Point3> = frame
            .joints()
            .iter()
            .map(|p| [p[0] - hip[0], p[1] - hip[1], p[2] - hip[2]])
            .collect();
        let l = centered[layout.left_shoulder];
        let r = centered[layout.right_shoulder];
        let shoulders = [r[0] - l[0], r[1] - l[1], r[2] - l[2]];
        let rotation = if norm(shoulders) > DEGENERATE_SHOULDER_NORM {
            rotation_to_x(shoulders)
        } else {
            degenerate_frames.push(f);
            match previous {
                Some(r) => r,
                None => {
                    log::warn!(
                        "{}: degenerate shoulder vector in the first frame, using identity rotation",
                        seq.source_id()
                    );
                    IDENTITY
                }
            }
        };
        previous = Some(rotation);
        let mut joints: Vec<Point3> = centered.into_iter().map(|p| apply(&rotation, p)).collect();
        joints[layout.hip] = [0.0; 3];
        frames.push(SkeletonFrame::from_trusted(joints));
    }
    if degenerate_frames.len() > 1 || degenerate_frames.first().is_some_and(|&f| f != 0) {
        log::debug!(
            "{}: {} frame(s) with degenerate shoulder vectors",
            seq.source_id(),
            degenerate_frames.len()
        );
    }
    NormalizedSequence {
        sequence: seq.with_frames(frames).expect("normalization preserves the layout"),
        degenerate_frames,
    }
}

/// Additive Gaussian jitter on joint coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub sigma: f64,
    pub copies: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            sigma: 0.02,
            copies: 1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Validation(format!(
                "augmentation sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Returns `cfg.copies` noisy copies of `seq`.
///
/// Every coordinate gets an independent `N(0, sigma^2)` offset. Copy `c`
/// draws from ChaCha stream `c` of `cfg.seed`, so copies are reproducible
/// individually.
pub fn augment_gaussian(seq: &SkeletonSequence, cfg: &AugmentationConfig) -> Result<Vec<SkeletonSequence>> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Validation(e.to_string()))?;
    (0..cfg.copies)
        .map(|copy| {
            if cfg.sigma == 0.0 {
                return Ok(seq.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(copy as u64);
            let frames = seq
                .frames()
                .iter()
                .map(|frame| {
                    let joints = frame
                        .joints()
                        .iter()
                        .map(|p| {
                            let mut q = *p;
                            for v in &mut q {
                                *v += normal.sample(&mut rng);
                            }
                            q
                        })
                        .collect();
                    SkeletonFrame::from_trusted(joints)
                })
                .collect();
            seq.with_frames(frames)
        })
        .collect()
}

/// Min/max of one channel before quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub min: f64,
    pub max: f64,
}

impl ChannelScale {
    /// Constant channels map to 0 and cannot be inverted.
    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn quantize(&self, v: f64) -> u8 {
        if self.is_degenerate() {
            0
        } else {
            (255.0 * (v - self.min) / (self.max - self.min)).round().clamp(0.0, 255.0) as u8
        }
    }

    pub fn dequantize(&self, q: u8) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + (self.max - self.min) * f64::from(q) / 255.0
        }
    }
}

/// Channel-interleaved `u8` pixels plus the per-channel affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledChannels {
    pub pixels: Vec<u8>,
    pub scales: Vec<ChannelScale>,
}

/// Per-channel min-max scaling of a channel-minor tensor to `[0, 255]`.
pub fn scale_channels(data: &[f32], channels: usize) -> Result<ScaledChannels> {
    if channels == 0 || data.len() % channels != 0 {
        return Err(Error::Dimension(format!(
            "{} values do not split into {channels} channels",
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("image tensor contains NaN or infinity".into()));
    }
    let mut scales = vec![
        ChannelScale {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        channels
    ];
    for px in data.chunks_exact(channels) {
        for (s, &v) in scales.iter_mut().zip(px) {
            s.min = s.min.min(f64::from(v));
            s.max = s.max.max(f64::from(v));
        }
    }
    if data.is_empty() {
        scales.iter_mut().for_each(|s| *s = ChannelScale { min: 0.0, max: 0.0 });
    }
    let pixels = data
        .chunks_exact(channels)
        .flat_map(|px| px.iter().zip(&scales).map(|(&v, s)| s.quantize(f64::from(v))))
        .collect();
    Ok(ScaledChannels { pixels, scales })
}

/// Inverse of [`scale_channels`] up to quantization.
pub fn unscale_channels(pixels: &[u8], scales: &[ChannelScale]) -> Vec<f64> {
    pixels
        .chunks_exact(scales.len())
        .flat_map(|px| px.iter().zip(scales).map(|(&q, s)| s.dequantize(q)))
        .collect()
}
