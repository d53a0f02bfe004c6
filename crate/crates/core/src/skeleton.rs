//! Skeleton sequences and their on-disk formats.
//!
//! Two input formats are understood:
//!
//! * the NTU RGB+D `.skeleton` plain-text layout ([`parse_ntu_skeleton`]),
//!   which may hold several body tracks per file;
//! * a generic JSON document ([`parse_generic_json`]), the canonical
//!   interchange format written by this crate.
//!
//! Joint coordinates are kept as `f64` triples. Every constructor rejects
//! non-finite coordinates so they can never reach the encoders.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian joint position `(x, y, z)`.
pub type Point3 = [f64; 3];

/// Joint count of the NTU RGB+D skeleton.
pub const NTU_JOINTS: usize = 25;

/// Frame rate of the Kinect v2 captures in NTU RGB+D.
pub const NTU_FPS: f64 = 30.0;

/// Joint count and the anatomical joints used by pose normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonLayout {
    pub name: String,
    pub joint_count: usize,
    pub hip: usize,
    pub left_shoulder: usize,
    pub right_shoulder: usize,
}

impl SkeletonLayout {
    pub fn new(
        name: impl Into<String>,
        joint_count: usize,
        hip: usize,
        left_shoulder: usize,
        right_shoulder: usize,
    ) -> Result<Self> {
        let layout = SkeletonLayout {
            name: name.into(),
            joint_count,
            hip,
            left_shoulder,
            right_shoulder,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// The public NTU 25-joint layout: spine base, left and right shoulder.
    pub fn ntu25() -> Self {
        SkeletonLayout {
            name: "ntu25".into(),
            joint_count: NTU_JOINTS,
            hip: 0,
            left_shoulder: 4,
            right_shoulder: 8,
        }
    }

    /// Fallback layout for arbitrary joint counts: hip 0, shoulders 1 and 2.
    pub fn generic(joint_count: usize) -> Result<Self> {
        SkeletonLayout::new("generic", joint_count, 0, 1, 2)
    }

    /// Default layout for a joint count (NTU for 25 joints, generic otherwise).
    pub fn default_for(joint_count: usize) -> Result<Self> {
        if joint_count == NTU_JOINTS {
            Ok(Self::ntu25())
        } else {
            Self::generic(joint_count)
        }
    }

    /// Builds a layout from indices, naming it after a known preset if it matches one.
    pub fn from_indices(
        joint_count: usize,
        hip: usize,
        left_shoulder: usize,
        right_shoulder: usize,
    ) -> Result<Self> {
        let mut layout = SkeletonLayout::new("custom", joint_count, hip, left_shoulder, right_shoulder)?;
        let ntu = Self::ntu25();
        if layout.same_joints(&ntu) {
            layout.name = ntu.name;
        } else if (hip, left_shoulder, right_shoulder) == (0, 1, 2) {
            layout.name = "generic".into();
        }
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_count < 4 {
            return Err(Error::Layout(format!(
                "joint_count must be at least 4, got {}",
                self.joint_count
            )));
        }
        let idx = [self.hip, self.left_shoulder, self.right_shoulder];
        if let Some(bad) = idx.iter().find(|&&i| i >= self.joint_count) {
            return Err(Error::Layout(format!(
                "anatomical index {bad} out of range for {} joints",
                self.joint_count
            )));
        }
        if idx[0] == idx[1] || idx[0] == idx[2] || idx[1] == idx[2] {
            return Err(Error::Layout(
                "hip, left_shoulder and right_shoulder must be distinct".into(),
            ));
        }
        Ok(())
    }

    /// Equality ignoring the display name.
    pub fn same_joints(&self, other: &SkeletonLayout) -> bool {
        self.joint_count == other.joint_count
            && self.hip == other.hip
            && self.left_shoulder == other.left_shoulder
            && self.right_shoulder == other.right_shoulder
    }
}

/// One frame: exactly `joint_count` finite joint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    joints: Vec<Point3>,
}

impl SkeletonFrame {
    pub fn new(joints: Vec<Point3>) -> Result<Self> {
        if let Some(j) = joints.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("joint {j} has a non-finite coordinate")));
        }
        Ok(SkeletonFrame { joints })
    }

    pub(crate) fn from_trusted(joints: Vec<Point3>) -> Self {
        debug_assert!(joints.iter().flatten().all(|v| v.is_finite()));
        SkeletonFrame { joints }
    }

    pub fn joints(&self) -> &[Point3] {
        &self.joints
    }

    pub fn joint(&self, index: usize) -> Point3 {
        self.joints[index]
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn into_joints(self) -> Vec<Point3> {
        self.joints
    }
}

/// A time-ordered skeleton track of one performer.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    layout: SkeletonLayout,
    frames: Vec<SkeletonFrame>,
    fps: f64,
    label: Option<String>,
    source_id: String,
}

impl SkeletonSequence {
    pub fn new(
        layout: SkeletonLayout,
        frames: Vec<SkeletonFrame>,
        fps: f64,
        label: Option<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        layout.validate()?;
        if frames.is_empty() {
            return Err(Error::EmptyInput("a sequence needs at least one frame".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {fps}")));
        }
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.len() != layout.joint_count)
        {
            return Err(Error::Validation(format!(
                "frame {i} has {} joints, layout expects {}",
                f.len(),
                layout.joint_count
            )));
        }
        Ok(SkeletonSequence {
            layout,
            frames,
            fps,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn layout(&self) -> &SkeletonLayout {
        &self.layout
    }

    pub fn frames(&self) -> &[SkeletonFrame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &SkeletonFrame {
        &self.frames[index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; sequences hold at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Same metadata, new frames. Frames must match the layout.
    pub fn with_frames(&self, frames: Vec<SkeletonFrame>) -> Result<Self> {
        SkeletonSequence::new(
            self.layout.clone(),
            frames,
            self.fps,
            self.label.clone(),
            self.source_id.clone(),
        )
    }

    pub(crate) fn with_layout_and_frames(
        &self,
        layout: SkeletonLayout,
        frames: Vec<SkeletonFrame>,
    ) -> Result<Self> {
        SkeletonSequence::new(layout, frames, self.fps, self.label.clone(), self.source_id.clone())
    }
}

/// Alternates the frames of two performers: `a1, b1, a2, b2, ...`.
///
/// The shorter track is extended by repeating its last frame, so the output
/// always has `2 * max(len(a), len(b))` frames. The frame rate doubles.
pub fn interleave_bodies(a: &SkeletonSequence, b: &SkeletonSequence) -> Result<SkeletonSequence> {
    if !a.layout.same_joints(&b.layout) {
        return Err(Error::Layout(format!(
            "cannot interleave layouts with {} and {} joints",
            a.layout.joint_count, b.layout.joint_count
        )));
    }
    let len = a.len().max(b.len());
    let mut frames = Vec::with_capacity(2 * len);
    for i in 0..len {
        frames.push(a.frames[i.min(a.len() - 1)].clone());
        frames.push(b.frames[i.min(b.len() - 1)].clone());
    }
    let source = if a.source_id == b.source_id {
        a.source_id.clone()
    } else {
        format!("{}+{}", a.source_id, b.source_id)
    };
    SkeletonSequence::new(
        a.layout.clone(),
        frames,
        2.0 * a.fps,
        a.label.clone().or_else(|| b.label.clone()),
        source,
    )
}

/// Reduces the body tracks of one recording to a single sequence.
///
/// One track is returned as-is. With two or more, the two longest tracks
/// (ties resolved by order of appearance) are interleaved, earlier track first.
pub fn merge_tracks(tracks: Vec<SkeletonSequence>) -> Result<SkeletonSequence> {
    match tracks.len() {
        0 => Err(Error::EmptyInput("no body tracks".into())),
        1 => Ok(tracks.into_iter().next().expect("one track")),
        _ => {
            let mut order: Vec<usize> = (0..tracks.len()).collect();
            order.sort_by(|&i, &j| tracks[j].len().cmp(&tracks[i].len()).then(i.cmp(&j)));
            let (first, second) = (order[0].min(order[1]), order[0].max(order[1]));
            interleave_bodies(&tracks[first], &tracks[second])
        }
    }
}

// ---------------------------------------------------------------------------
// NTU RGB+D text format

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Some((i + 1, line.trim()));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_line()
            .ok_or_else(|| Error::parse(self.last + 1, format!("unexpected end of input, expected {what}")))
    }

    fn count(&mut self, what: &str) -> Result<(usize, usize)> {
        let (n, line) = self.expect(what)?;
        let value = line
            .split_whitespace()
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| Error::parse(n, format!("malformed {what}: {line:?}")))?;
        Ok((n, value))
    }
}

fn parse_coordinate(line_no: usize, token: Option<&str>, axis: char) -> Result<f64> {
    let token = token.ok_or_else(|| {
        Error::parse(line_no, "joint line needs at least 3 numeric fields (x y z)")
    })?;
    let value: f64 = token
        .parse()
        .map_err(|_| Error::parse(line_no, format!("joint {axis} coordinate {token:?} is not a number")))?;
    if !value.is_finite() {
        return Err(Error::parse(line_no, format!("joint {axis} coordinate is not finite")));
    }
    Ok(value)
}

/// Parses an NTU RGB+D `.skeleton` file into one sequence per body ID.
///
/// Only the first three fields (x, y, z) of each joint line are read; the
/// depth/colour projections, orientation quaternion and tracking state are
/// ignored. Tracks are returned in order of first appearance and take the
/// body ID as their `source_id`.
pub fn parse_ntu_skeleton(text: &str, layout: &SkeletonLayout) -> Result<Vec<SkeletonSequence>> {
    layout.validate()?;
    if layout.joint_count != NTU_JOINTS {
        return Err(Error::Layout(format!(
            "NTU skeletons have {NTU_JOINTS} joints, layout declares {}",
            layout.joint_count
        )));
    }
    let mut lines = Lines::new(text);
    let frame_count = match lines.next_line() {
        None => return Err(Error::EmptyInput("skeleton file is empty".into())),
        Some((n, line)) => line
            .parse::<usize>()
            .map_err(|_| Error::parse(n, format!("malformed frame count: {line:?}")))?,
    };
    if frame_count == 0 {
        return Err(Error::EmptyInput("skeleton file declares zero frames".into()));
    }

    let mut ids: Vec<String> = Vec::new();
    let mut tracks: Vec<Vec<SkeletonFrame>> = Vec::new();
    for frame in 0..frame_count {
        let bodies = match lines.next_line() {
            Some((n, line)) => line
                .parse::<usize>()
                .map_err(|_| Error::parse(n, format!("malformed body count: {line:?}")))?,
            None => {
                return Err(Error::parse(
                    lines.last + 1,
                    format!("file declares {frame_count} frames but only {frame} are present"),
                ))
            }
        };
        for _ in 0..bodies {
            let (n, info) = lines.expect("body info line")?;
            let body_id = info
                .split_whitespace()
                .next()
                .ok_or_else(|| Error::parse(n, "empty body info line"))?
                .to_string();
            let (n, joint_count) = lines.count("joint count")?;
            if joint_count != NTU_JOINTS {
                return Err(Error::parse(
                    n,
                    format!("joint count {joint_count}, expected {NTU_JOINTS}"),
                ));
            }
            let mut joints = Vec::with_capacity(NTU_JOINTS);
            for _ in 0..NTU_JOINTS {
                let (n, line) = lines.expect("joint line")?;
                let mut fields = line.split_whitespace();
                let x = parse_coordinate(n, fields.next(), 'x')?;
                let y = parse_coordinate(n, fields.next(), 'y')?;
                let z = parse_coordinate(n, fields.next(), 'z')?;
                joints.push([x, y, z]);
            }
            let slot = match ids.iter().position(|id| *id == body_id) {
                Some(slot) => slot,
                None => {
                    ids.push(body_id);
                    tracks.push(Vec::new());
                    ids.len() - 1
                }
            };
            tracks[slot].push(SkeletonFrame::from_trusted(joints));
        }
    }
    if tracks.is_empty() {
        return Err(Error::EmptyInput("no bodies found in any frame".into()));
    }
    ids.into_iter()
        .zip(tracks)
        .map(|(id, frames)| SkeletonSequence::new(layout.clone(), frames, NTU_FPS, None, id))
        .collect()
}

/// Writes body tracks in the NTU text layout.
///
/// Tracks are emitted in lockstep; a track shorter than the longest simply
/// stops appearing. Unused per-joint fields are written as zeros.
pub fn to_ntu_text(tracks: &[SkeletonSequence]) -> String {
    use std::fmt::Write;
    let frames = tracks.iter().map(SkeletonSequence::len).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{frames}");
    for f in 0..frames {
        let present: Vec<&SkeletonSequence> = tracks.iter().filter(|t| f < t.len()).collect();
        let _ = writeln!(out, "{}", present.len());
        for track in present {
            let _ = writeln!(out, "{} 0 1 1 1 1 0 0 0 2", track.source_id);
            let _ = writeln!(out, "{}", track.layout.joint_count);
            for p in track.frames[f].joints() {
                let _ = writeln!(out, "{} {} {} 0 0 0 0 0 0 0 0 2", p[0], p[1], p[2]);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generic JSON

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutBlock {
    hip: usize,
    left_shoulder: usize,
    right_shoulder: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceDocument {
    joints: usize,
    fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<LayoutBlock>,
    frames: Vec<Vec<Point3>>,
}

/// Parses the generic JSON sequence document.
///
/// Without a `layout` block the default layout for the joint count applies
/// (see [`SkeletonLayout::default_for`]).
pub fn parse_generic_json(text: &str, source_id: &str) -> Result<SkeletonSequence> {
    let doc: SequenceDocument = serde_json::from_str(text)?;
    let layout = match &doc.layout {
        Some(b) => SkeletonLayout::from_indices(doc.joints, b.hip, b.left_shoulder, b.right_shoulder)?,
        None => SkeletonLayout::default_for(doc.joints)?,
    };
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (i, joints) in doc.frames.into_iter().enumerate() {
        if joints.len() != doc.joints {
            return Err(Error::Validation(format!(
                "frame {i} has {} joints, document declares {}",
                joints.len(),
                doc.joints
            )));
        }
        frames.push(SkeletonFrame::new(joints).map_err(|e| Error::Validation(format!("frame {i}: {e}")))?);
    }
    SkeletonSequence::new(layout, frames, doc.fps, doc.label, source_id)
}

/// Serializes a sequence to the generic JSON document (layout block included).
pub fn to_generic_json(seq: &SkeletonSequence) -> String {
    let doc = SequenceDocument {
        joints: seq.layout.joint_count,
        fps: seq.fps,
        label: seq.label.clone(),
        layout: Some(LayoutBlock {
            hip: seq.layout.hip,
            left_shoulder: seq.layout.left_shoulder,
            right_shoulder: seq.layout.right_shoulder,
        }),
        frames: seq.frames.iter().map(|f| f.joints.clone()).collect(),
    };
    serde_json::to_string(&doc).expect("sequence documents always serialize")
}

// ---------------------------------------------------------------------------
// Dataset manifests

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub split: Split,
}

/// Labeled list of sequence files sharing one layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub layout: SkeletonLayout,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(layout: SkeletonLayout, entries: Vec<ManifestEntry>) -> Result<Self> {
        let manifest = DatasetManifest { layout, entries };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::Validation(format!(
                    "duplicate manifest path {}",
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests always serialize")
    }
}

/// Loads one manifest entry (relative paths resolve against `base`).
///
/// `.skeleton` files go through the NTU parser with multi-body tracks
/// merged by [`merge_tracks`]; anything else is read as generic JSON. The
/// result carries the manifest label and the file stem as `source_id`.
pub fn load_entry(base: &Path, entry: &ManifestEntry, layout: &SkeletonLayout) -> Result<SkeletonSequence> {
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        base.join(&entry.path)
    };
    let text = std::fs::read_to_string(&path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = if path.extension().is_some_and(|e| e == "skeleton") {
        merge_tracks(parse_ntu_skeleton(&text, layout)?)?
    } else {
        parse_generic_json(&text, &stem)?
    };
    if seq.layout().joint_count != layout.joint_count {
        return Err(Error::Layout(format!(
            "{} has {} joints, manifest layout expects {}",
            path.display(),
            seq.layout().joint_count,
            layout.joint_count
        )));
    }
    seq.with_layout_and_frames(layout.clone(), seq.frames.clone())
        .map(|s| s.with_label(Some(entry.label.clone())).with_source_id(stem))
}
