//! End-to-end encode → features → FTP → classify runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrangement::ArrangementSet;
use crate::codec::{encode_window, pad_joints, plan_windows, ImageKind, SkeletalImage};
use crate::error::{Error, Result};
use crate::ftp::{ftp_encode, FeatureSeries, PyramidConfig};
use crate::normalize::{augment_gaussian, normalize_pose, AugmentationConfig};
use crate::recognizer::{
    evaluate, BaselineExtractor, BaselineExtractorConfig, ClassifierModel, ClassifierSpec, EvalReport,
};
use crate::skeleton::{SkeletonSequence, Split};

/// How sequences become skeletal images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeOptions {
    /// Frames per image.
    pub n: usize,
    /// Window stride; `n / 2` when absent.
    pub stride: Option<usize>,
    pub kind: ImageKind,
    /// Midpoint pairs appended when the arrangement grid holds more joints
    /// than the skeleton has.
    pub pad_recipe: Vec<(usize, usize)>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            n: 36,
            stride: None,
            kind: ImageKind::LocationVelocity,
            pad_recipe: Vec::new(),
        }
    }
}

impl EncodeOptions {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or((self.n / 2).max(1))
    }
}

/// Pads the skeleton to the set's joint count if needed, then normalizes it.
pub fn prepare_sequence(seq: &SkeletonSequence, set: &ArrangementSet, opts: &EncodeOptions) -> Result<SkeletonSequence> {
    let joints = seq.layout().joint_count;
    let target = set.joint_count();
    let padded = if joints == target {
        seq.clone()
    } else if joints < target {
        pad_joints(seq, target, &opts.pad_recipe)?
    } else {
        return Err(Error::Dimension(format!(
            "{} has {joints} joints, the arrangement grid holds only {target}",
            seq.source_id()
        )));
    };
    Ok(normalize_pose(&padded))
}

/// Seed for one video's augmentation: the base seed mixed with a hash of the
/// video id, so it does not depend on processing order.
pub fn video_seed(base: u64, video_id: &str) -> u64 {
    let digest = Sha256::digest(video_id.as_bytes());
    base ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The prepared video plus, for training videos, its augmented copies.
///
/// Copy `c` keeps the source id with a `~aug{c}` suffix.
pub fn video_variants(
    prepared: SkeletonSequence,
    split: Split,
    augment: Option<&AugmentationConfig>,
) -> Result<Vec<SkeletonSequence>> {
    let Some(cfg) = augment.filter(|c| split == Split::Train && c.copies > 0) else {
        return Ok(vec![prepared]);
    };
    let cfg = AugmentationConfig {
        seed: video_seed(cfg.seed, prepared.source_id()),
        ..*cfg
    };
    let id = prepared.source_id().to_string();
    let copies = augment_gaussian(&prepared, &cfg)?;
    let mut out = vec![prepared];
    out.extend(
        copies
            .into_iter()
            .enumerate()
            .map(|(c, s)| s.with_source_id(format!("{id}~aug{c}"))),
    );
    Ok(out)
}

/// One image per window of an already prepared sequence.
pub fn encode_prepared(seq: &SkeletonSequence, set: &ArrangementSet, opts: &EncodeOptions) -> Result<Vec<SkeletalImage>> {
    let plan = plan_windows(seq.len(), opts.n, opts.stride())?;
    plan.windows
        .iter()
        .map(|w| encode_window(seq, set, w, opts.kind))
        .collect()
}

/// Whether each video or each image is a classification sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Video,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    pub encode: EncodeOptions,
    pub augment: Option<AugmentationConfig>,
    pub extractor: BaselineExtractorConfig,
    pub ftp: PyramidConfig,
    pub classifier: ClassifierSpec,
    pub granularity: Granularity,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        RecognitionConfig {
            encode: EncodeOptions::default(),
            augment: None,
            extractor: BaselineExtractorConfig::default(),
            ftp: PyramidConfig::default(),
            classifier: ClassifierSpec::default(),
            granularity: Granularity::Video,
        }
    }
}

/// A classification sample: an FTP video descriptor, or a single image feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub id: String,
    pub label: Option<String>,
    pub split: Split,
    /// Images behind the descriptor.
    pub q: usize,
    pub values: Vec<f64>,
}

/// Descriptors of a dataset with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub config: serde_json::Value,
    pub records: Vec<DescriptorRecord>,
}

impl DescriptorSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: DescriptorSet = serde_json::from_str(text)?;
        let dim = set.records.first().map_or(0, |r| r.values.len());
        if let Some(r) = set.records.iter().find(|r| r.values.len() != dim) {
            return Err(Error::Dimension(format!(
                "descriptor {} has {} values, expected {dim}",
                r.id,
                r.values.len()
            )));
        }
        Ok(set)
    }

    /// `(values, label)` pairs of one split; unlabeled records are an error.
    pub fn samples(&self, split: Split) -> Result<Vec<(Vec<f64>, String)>> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let label = r
                    .label
                    .clone()
                    .ok_or_else(|| Error::Validation(format!("descriptor {} has no label", r.id)))?;
                Ok((r.values.clone(), label))
            })
            .collect()
    }

    /// All descriptor values, little-endian, in record order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.records
            .iter()
            .flat_map(|r| r.values.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}

/// Per-image features of one video as a `Q x D` series.
pub fn image_features(images: &[SkeletalImage], extractor: &BaselineExtractor, video_id: &str, label: Option<String>) -> Result<FeatureSeries> {
    let rows = images
        .iter()
        .map(|img| extractor.extract(img).map(|f| f.values))
        .collect::<Result<Vec<_>>>()?;
    FeatureSeries::from_rows(&rows, video_id, label)
}

fn describe(
    seq: &SkeletonSequence,
    split: Split,
    set: &ArrangementSet,
    cfg: &RecognitionConfig,
    extractor: &BaselineExtractor,
) -> Result<Vec<DescriptorRecord>> {
    let prepared = prepare_sequence(seq, set, &cfg.encode)?;
    let mut records = Vec::new();
    for variant in video_variants(prepared, split, cfg.augment.as_ref())? {
        let images = encode_prepared(&variant, set, &cfg.encode)?;
        let label = variant.label().map(str::to_string);
        let series = image_features(&images, extractor, variant.source_id(), label.clone())?;
        match cfg.granularity {
            Granularity::Video => records.push(DescriptorRecord {
                id: variant.source_id().to_string(),
                label,
                split,
                q: series.q(),
                values: ftp_encode(&series, &cfg.ftp)?.values,
            }),
            Granularity::Image => records.extend((0..series.q()).map(|i| DescriptorRecord {
                id: format!("{}#{i}", variant.source_id()),
                label: label.clone(),
                split,
                q: 1,
                values: series.row(i).iter().map(|&v| f64::from(v)).collect(),
            })),
        }
    }
    Ok(records)
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Descriptors for every video, computed in parallel; output order follows input order.
pub fn describe_videos(
    videos: &[(SkeletonSequence, Split)],
    set: &ArrangementSet,
    cfg: &RecognitionConfig,
    workers: usize,
) -> Result<DescriptorSet> {
    let extractor = BaselineExtractor::new(cfg.extractor, cfg.encode.kind.channels())?;
    let per_video = with_workers(workers, || {
        videos
            .par_iter()
            .map(|(seq, split)| describe(seq, *split, set, cfg, &extractor))
            .collect::<Vec<_>>()
    })?;
    let mut records = Vec::new();
    for r in per_video {
        records.extend(r?);
    }
    Ok(DescriptorSet {
        config: serde_json::json!({
            "recognition": cfg,
            "arrangement_set": set.id(),
        }),
        records,
    })
}

/// Descriptors, trained model and test report of one run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub descriptors: DescriptorSet,
    pub model: ClassifierModel,
    pub report: EvalReport,
}

/// Trains on the train split and evaluates on the test split.
pub fn run_experiment(
    videos: &[(SkeletonSequence, Split)],
    set: &ArrangementSet,
    cfg: &RecognitionConfig,
    workers: usize,
) -> Result<ExperimentOutcome> {
    let descriptors = describe_videos(videos, set, cfg, workers)?;
    let train = descriptors.samples(Split::Train)?;
    if train.is_empty() {
        return Err(Error::EmptyInput("no training videos".into()));
    }
    let model = ClassifierModel::train(cfg.classifier, &train)?;
    let report = evaluate(&model, &descriptors.samples(Split::Test)?)?;
    Ok(ExperimentOutcome {
        descriptors,
        model,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangement::{generate_set, GammaThreshold};
    use crate::recognizer::{synth_actions, SynthConfig};

    fn tiny() -> (Vec<(SkeletonSequence, Split)>, ArrangementSet) {
        let data = synth_actions(&SynthConfig {
            classes: 2,
            per_class: 3,
            frames: 24,
            ..Default::default()
        })
        .unwrap();
        let videos = data
            .sequences
            .iter()
            .cloned()
            .zip(data.manifest.entries.iter().map(|e| e.split))
            .collect();
        let set = generate_set(5, 5, 4, GammaThreshold::Value(0.0), 3, 100).unwrap();
        (videos, set)
    }

    fn cfg() -> RecognitionConfig {
        RecognitionConfig {
            encode: EncodeOptions {
                n: 8,
                ..Default::default()
            },
            extractor: BaselineExtractorConfig {
                out_dim: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn default_stride_is_half_window() {
        assert_eq!(EncodeOptions::default().stride(), 18);
        let odd = EncodeOptions {
            n: 3,
            ..Default::default()
        };
        assert_eq!(odd.stride(), 1);
    }

    #[test]
    fn augmentation_only_on_train() {
        let (videos, _) = tiny();
        let aug = AugmentationConfig {
            copies: 2,
            ..Default::default()
        };
        let seq = videos[0].0.clone();
        assert_eq!(video_variants(seq.clone(), Split::Train, Some(&aug)).unwrap().len(), 3);
        assert_eq!(video_variants(seq.clone(), Split::Test, Some(&aug)).unwrap().len(), 1);
        assert_eq!(video_variants(seq, Split::Train, None).unwrap().len(), 1);
    }

    #[test]
    fn video_descriptor_length() {
        let (videos, set) = tiny();
        let d = describe_videos(&videos, &set, &cfg(), 1).unwrap();
        assert_eq!(d.records.len(), videos.len());
        assert!(d.records.iter().all(|r| r.values.len() == 16 * 7 * 4));
        // 24 frames, n = 8, stride 4 -> starts 0, 4, ..., 16
        assert!(d.records.iter().all(|r| r.q == 5));
    }

    #[test]
    fn image_granularity() {
        let (videos, set) = tiny();
        let c = RecognitionConfig {
            granularity: Granularity::Image,
            ..cfg()
        };
        let d = describe_videos(&videos, &set, &c, 1).unwrap();
        assert_eq!(d.records.len(), 5 * videos.len());
        assert!(d.records.iter().all(|r| r.values.len() == 16));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let (videos, set) = tiny();
        let c = RecognitionConfig {
            augment: Some(AugmentationConfig::default()),
            ..cfg()
        };
        let a = run_experiment(&videos, &set, &c, 1).unwrap();
        let b = run_experiment(&videos, &set, &c, 3).unwrap();
        assert_eq!(a.descriptors.to_le_bytes(), b.descriptors.to_le_bytes());
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn descriptor_json_roundtrip() {
        let (videos, set) = tiny();
        let d = describe_videos(&videos[..2], &set, &cfg(), 1).unwrap();
        let back = DescriptorSet::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn too_many_joints_rejected() {
        let (videos, _) = tiny();
        let set = generate_set(4, 4, 2, GammaThreshold::Value(0.0), 0, 10).unwrap();
        assert!(prepare_sequence(&videos[0].0, &set, &EncodeOptions::default()).is_err());
    }
}
