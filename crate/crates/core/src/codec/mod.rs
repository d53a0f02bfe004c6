//! Skepxels, frame tensors and skeletal images.
//!
//! For one frame, each arrangement of the set yields an `h x w x 3`
//! [`Skepxel`]; stacking the `m` Skepxels vertically gives a
//! [`FrameTensor`] of height `H = m*h`. Placing the frame tensors of `n`
//! consecutive (or interpolated) frames side by side gives a
//! [`SkeletalImage`] of width `W = n*w`.
//!
//! Pixel `(b*h + r, f*w + c)` of a location image holds the coordinates of
//! joint `members[b].at(r, c)` in sampled frame `f`. Velocity images use the
//! same layout on frame-to-frame differences.

mod export;

pub use export::{
    decode_raw, encode_raw, export_image, import_image, ExportContext, ExportMode, ImageMetadata, RawTensor,
    RAW_MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::arrangement::{Arrangement, ArrangementSet};
use crate::error::{Error, Result};
use crate::normalize::ChannelScale;
use crate::skeleton::{Point3, SkeletonFrame, SkeletonLayout, SkeletonSequence};

/// Midpoint recipe lifting a 14-joint DeeperCut skeleton to 16 joints:
/// mid-hip from the two hips, then the midpoint of mid-hip and neck.
pub const DEEPERCUT14_PAD_RECIPE: [(usize, usize); 2] = [(2, 3), (14, 12)];

/// Joint coordinates of one frame under one arrangement (`h x w x 3`).
#[derive(Debug, Clone, PartialEq)]
pub struct Skepxel {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Skepxel {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn get(&self, row: usize, col: usize) -> Point3 {
        let i = (row * self.w + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Row-major, channel-minor values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn check_frame(frame: &SkeletonFrame, joints: usize) -> Result<()> {
    if frame.len() != joints {
        return Err(Error::Dimension(format!(
            "frame has {} joints, arrangement grid holds {joints}",
            frame.len()
        )));
    }
    Ok(())
}

pub fn build_skepxel(frame: &SkeletonFrame, arrangement: &Arrangement) -> Result<Skepxel> {
    check_frame(frame, arrangement.joint_count())?;
    let data = arrangement
        .grid()
        .iter()
        .flat_map(|&j| frame.joint(j))
        .collect();
    Ok(Skepxel {
        h: arrangement.h(),
        w: arrangement.w(),
        data,
    })
}

/// The `m` Skepxels of one frame stacked vertically (`m*h x w x 3`).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    m: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl FrameTensor {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn height(&self) -> usize {
        self.m * self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn get(&self, row: usize, col: usize) -> Point3 {
        let i = (row * self.w + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn build_frame_tensor(frame: &SkeletonFrame, set: &ArrangementSet) -> Result<FrameTensor> {
    let mut data = Vec::with_capacity(set.m() * set.h() * set.w() * 3);
    for member in set.members() {
        data.extend_from_slice(&build_skepxel(frame, member)?.data);
    }
    Ok(FrameTensor {
        m: set.m(),
        h: set.h(),
        w: set.w(),
        data,
    })
}

/// One window of `n` sample positions (frame indices, possibly fractional).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub positions: Vec<f64>,
}

impl Window {
    pub fn n(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub n: usize,
    pub stride: usize,
    pub windows: Vec<Window>,
}

impl WindowPlan {
    /// Number of images the plan produces.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Cuts a sequence of `seq_len` frames into windows of `n` samples.
///
/// Long sequences get integer windows starting every `stride` frames, with a
/// final window right-aligned to the last frame when the strides do not land
/// on it. Sequences shorter than `n` get a single window of `n` evenly spaced
/// fractional positions over `[0, seq_len - 1]`, sampled by interpolation.
pub fn plan_windows(seq_len: usize, n: usize, stride: usize) -> Result<WindowPlan> {
    if seq_len == 0 {
        return Err(Error::EmptyInput("cannot plan windows over zero frames".into()));
    }
    if n < 2 {
        return Err(Error::Validation(format!("window length n must be at least 2, got {n}")));
    }
    if stride == 0 {
        return Err(Error::Validation("window stride must be at least 1".into()));
    }
    let integer_window = |start: usize| Window {
        start: start as f64,
        positions: (start..start + n).map(|t| t as f64).collect(),
    };
    let windows = if seq_len >= n {
        let last = seq_len - n;
        let mut windows: Vec<Window> = (0..=last).step_by(stride).map(integer_window).collect();
        if windows.last().is_some_and(|w| w.start as usize != last) {
            windows.push(integer_window(last));
        }
        windows
    } else {
        let span = (seq_len - 1) as f64;
        vec![Window {
            start: 0.0,
            positions: (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect(),
        }]
    };
    Ok(WindowPlan { n, stride, windows })
}

/// Frames at the window's positions; fractional positions interpolate linearly.
pub fn sample_frames(seq: &SkeletonSequence, window: &Window) -> Result<Vec<SkeletonFrame>> {
    let last = (seq.len() - 1) as f64;
    window
        .positions
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t <= last) {
                return Err(Error::Validation(format!(
                    "sample position {t} outside frames 0..={last}"
                )));
            }
            let lo = t.floor() as usize;
            let frac = t - lo as f64;
            if frac == 0.0 {
                return Ok(seq.frame(lo).clone());
            }
            let a = seq.frame(lo).joints();
            let b = seq.frame(lo + 1).joints();
            let joints = a
                .iter()
                .zip(b)
                .map(|(p, q)| {
                    [
                        p[0] + frac * (q[0] - p[0]),
                        p[1] + frac * (q[1] - p[1]),
                        p[2] + frac * (q[2] - p[2]),
                    ]
                })
                .collect();
            Ok(SkeletonFrame::from_trusted(joints))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImageKind {
    #[serde(rename = "location")]
    Location,
    #[serde(rename = "velocity")]
    Velocity,
    #[serde(rename = "location+velocity")]
    LocationVelocity,
}

impl ImageKind {
    pub fn channels(self) -> usize {
        match self {
            ImageKind::LocationVelocity => 6,
            _ => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::Location => "location",
            ImageKind::Velocity => "velocity",
            ImageKind::LocationVelocity => "location+velocity",
        }
    }
}

impl std::str::FromStr for ImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location" | "loc" => Ok(ImageKind::Location),
            "velocity" | "vel" => Ok(ImageKind::Velocity),
            "location+velocity" | "loc+vel" | "locvel" => Ok(ImageKind::LocationVelocity),
            _ => Err(Error::Validation(format!("unknown image kind {s:?}"))),
        }
    }
}

/// `H x W x C` image, `C` = 3 (location or velocity) or 6 (both).
///
/// Values are stored row-major with channels innermost, as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletalImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    pub window_start: f64,
    pub window_len: usize,
    pub arrangement_set_id: String,
    pub kind: ImageKind,
    /// Per-channel scaling applied at 8-bit export, when one was.
    pub scale: Option<Vec<ChannelScale>>,
}

impl SkeletalImage {
    pub fn from_parts(
        height: usize,
        width: usize,
        kind: ImageKind,
        data: Vec<f32>,
        window: (f64, usize),
        arrangement_set_id: impl Into<String>,
    ) -> Result<Self> {
        let channels = kind.channels();
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(SkeletalImage {
            height,
            width,
            channels,
            data,
            window_start: window.0,
            window_len: window.1,
            arrangement_set_id: arrangement_set_id.into(),
            kind,
            scale: None,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Channels `range` as a new buffer (still channel-minor).
    pub fn channel_slice(&self, range: std::ops::Range<usize>) -> Vec<f32> {
        self.data
            .chunks_exact(self.channels)
            .flat_map(|px| px[range.clone()].iter().copied())
            .collect()
    }
}

fn fill_blocks(frames: &[Point3Frame<'_>], set: &ArrangementSet, out: &mut [f32], channels: usize, offset: usize) {
    let (h, w) = (set.h(), set.w());
    let width = frames.len() * w;
    for (b, member) in set.members().iter().enumerate() {
        for r in 0..h {
            let row = b * h + r;
            let joints = &member.grid()[r * w..(r + 1) * w];
            for (f, frame) in frames.iter().enumerate() {
                let base = (row * width + f * w) * channels + offset;
                for (c, &j) in joints.iter().enumerate() {
                    let p = frame[j];
                    let i = base + c * channels;
                    out[i] = p[0] as f32;
                    out[i + 1] = p[1] as f32;
                    out[i + 2] = p[2] as f32;
                }
            }
        }
    }
}

type Point3Frame<'a> = &'a [Point3];

fn check_inputs(seq: &SkeletonSequence, set: &ArrangementSet) -> Result<()> {
    if seq.layout().joint_count != set.joint_count() {
        return Err(Error::Dimension(format!(
            "sequence has {} joints, arrangement grid holds {}",
            seq.layout().joint_count,
            set.joint_count()
        )));
    }
    Ok(())
}

fn differences(frames: &[SkeletonFrame]) -> Result<Vec<Vec<Point3>>> {
    if frames.len() < 2 {
        return Err(Error::Validation("velocity images need at least 2 frames".into()));
    }
    let mut out: Vec<Vec<Point3>> = frames
        .windows(2)
        .map(|pair| {
            pair[0]
                .joints()
                .iter()
                .zip(pair[1].joints())
                .map(|(p, q)| [q[0] - p[0], q[1] - p[1], q[2] - p[2]])
                .collect()
        })
        .collect();
    // keep n blocks: the last difference is repeated
    out.push(out.last().expect("n >= 2").clone());
    Ok(out)
}

fn image_from(
    set: &ArrangementSet,
    window: &Window,
    kind: ImageKind,
    location: Option<&[SkeletonFrame]>,
    velocity: Option<&[Vec<Point3>]>,
) -> SkeletalImage {
    let n = window.n();
    let (height, width, channels) = (set.m() * set.h(), n * set.w(), kind.channels());
    let mut data = vec![0f32; height * width * channels];
    if let Some(frames) = location {
        let views: Vec<Point3Frame<'_>> = frames.iter().map(SkeletonFrame::joints).collect();
        fill_blocks(&views, set, &mut data, channels, 0);
    }
    if let Some(diffs) = velocity {
        let views: Vec<Point3Frame<'_>> = diffs.iter().map(Vec::as_slice).collect();
        let offset = if kind == ImageKind::LocationVelocity { 3 } else { 0 };
        fill_blocks(&views, set, &mut data, channels, offset);
    }
    SkeletalImage {
        height,
        width,
        channels,
        data,
        window_start: window.start,
        window_len: n,
        arrangement_set_id: set.id(),
        kind,
        scale: None,
    }
}

/// Location image: frame tensors of the `n` sampled frames side by side.
pub fn build_location_image(seq: &SkeletonSequence, set: &ArrangementSet, window: &Window) -> Result<SkeletalImage> {
    encode_window(seq, set, window, ImageKind::Location)
}

/// Velocity image built from differences of consecutive sampled frames.
///
/// Block `f < n-1` holds `p[f+1] - p[f]`; the last block repeats the
/// previous difference. Units are coordinate units per frame interval.
pub fn build_velocity_image(seq: &SkeletonSequence, set: &ArrangementSet, window: &Window) -> Result<SkeletalImage> {
    encode_window(seq, set, window, ImageKind::Velocity)
}

/// Stacks location channels 0-2 and velocity channels 3-5.
pub fn compose_locvel(loc: &SkeletalImage, vel: &SkeletalImage) -> Result<SkeletalImage> {
    if loc.kind != ImageKind::Location || vel.kind != ImageKind::Velocity {
        return Err(Error::Validation("compose needs a location and a velocity image".into()));
    }
    if (loc.height, loc.width) != (vel.height, vel.width) {
        return Err(Error::Dimension(format!(
            "location image is {}x{}, velocity image is {}x{}",
            loc.height, loc.width, vel.height, vel.width
        )));
    }
    if (loc.window_start, loc.window_len) != (vel.window_start, vel.window_len)
        || loc.arrangement_set_id != vel.arrangement_set_id
    {
        return Err(Error::Validation(
            "location and velocity images come from different windows or arrangement sets".into(),
        ));
    }
    let data = loc
        .data
        .chunks_exact(3)
        .zip(vel.data.chunks_exact(3))
        .flat_map(|(a, b)| a.iter().chain(b).copied())
        .collect();
    Ok(SkeletalImage {
        channels: 6,
        data,
        kind: ImageKind::LocationVelocity,
        scale: None,
        ..loc.clone()
    })
}

/// Samples the window once and builds the requested kind of image.
pub fn encode_window(
    seq: &SkeletonSequence,
    set: &ArrangementSet,
    window: &Window,
    kind: ImageKind,
) -> Result<SkeletalImage> {
    check_inputs(seq, set)?;
    let frames = sample_frames(seq, window)?;
    Ok(match kind {
        ImageKind::Location => image_from(set, window, kind, Some(&frames), None),
        ImageKind::Velocity => image_from(set, window, kind, None, Some(&differences(&frames)?)),
        ImageKind::LocationVelocity => image_from(set, window, kind, Some(&frames), Some(&differences(&frames)?)),
    })
}

/// Appends midpoint joints so the joint count fills a Skepxel grid.
///
/// Pair `k` of the recipe yields joint `J + k` as the midpoint of its two
/// joints; pairs may refer to joints appended earlier in the recipe.
pub fn pad_joints(seq: &SkeletonSequence, target_joints: usize, recipe: &[(usize, usize)]) -> Result<SkeletonSequence> {
    let joints = seq.layout().joint_count;
    if target_joints < joints || recipe.len() != target_joints - joints {
        return Err(Error::Validation(format!(
            "padding {joints} -> {target_joints} joints needs {} recipe pairs, got {}",
            target_joints.saturating_sub(joints),
            recipe.len()
        )));
    }
    for (k, &(a, b)) in recipe.iter().enumerate() {
        if a >= joints + k || b >= joints + k {
            return Err(Error::Validation(format!(
                "recipe pair {k} ({a}, {b}) refers to a joint that does not exist yet"
            )));
        }
    }
    if recipe.is_empty() {
        return Ok(seq.clone());
    }
    let frames = seq
        .frames()
        .iter()
        .map(|frame| {
            let mut js = frame.joints().to_vec();
            for &(a, b) in recipe {
                let (p, q) = (js[a], js[b]);
                js.push([
                    p[0] + 0.5 * (q[0] - p[0]),
                    p[1] + 0.5 * (q[1] - p[1]),
                    p[2] + 0.5 * (q[2] - p[2]),
                ]);
            }
            SkeletonFrame::from_trusted(js)
        })
        .collect();
    let old = seq.layout();
    let layout = SkeletonLayout::new(
        format!("{}+pad{}", old.name, recipe.len()),
        target_joints,
        old.hip,
        old.left_shoulder,
        old.right_shoulder,
    )?;
    seq.with_layout_and_frames(layout, frames)
}
