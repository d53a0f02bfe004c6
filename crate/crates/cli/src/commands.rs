use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use skepxel::arrangement::{generate_set, ArrangementSet};
use skepxel::codec::{export_image, import_image, ExportContext};
use skepxel::ftp::{ftp_encode, load_external_features, write_features, FeatureSeries};
use skepxel::pipeline::{
    encode_prepared, image_features, prepare_sequence, video_variants, with_workers, DescriptorRecord, DescriptorSet,
    Granularity,
};
use skepxel::recognizer::{evaluate, synth_actions, BaselineExtractor, ClassifierModel, SynthConfig};
use skepxel::skeleton::{load_entry, to_generic_json, DatasetManifest, Split};

use crate::config::PipelineConfig;

/// Order-preserving parallel map on a pool of `workers` threads.
fn par_map<T: Sync, U: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Result<Vec<U>> {
    Ok(with_workers(workers, || items.par_iter().map(&f).collect())?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn arrange(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let a = &cfg.arrangement;
    let threshold = a.gamma_t.resolve()?;
    let set = with_workers(cfg.workers, || generate_set(a.h, a.w, a.m, threshold, a.seed, a.max_attempts))??;
    log::info!(
        "accepted set {} after {} attempt(s): gamma {} > gamma_t {}",
        set.id(),
        set.attempts(),
        set.gamma(),
        set.gamma_t()
    );
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, set.to_json() + "\n").with_context(|| format!("writing {}", out.display()))
}

/// One encoded (or augmented) video in `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedVideo {
    pub id: String,
    pub label: Option<String>,
    pub split: Split,
    pub source: PathBuf,
    pub q: usize,
    /// Sidecar paths relative to the output directory.
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub source: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub config: serde_json::Value,
    pub arrangement_set: String,
    pub videos: Vec<EncodedVideo>,
    pub images: usize,
    pub failures: Vec<Failure>,
}

fn encode_entry(
    cfg: &PipelineConfig,
    base: &Path,
    manifest: &DatasetManifest,
    index: usize,
    set: &ArrangementSet,
    out: &Path,
) -> skepxel::Result<Vec<EncodedVideo>> {
    let entry = &manifest.entries[index];
    let opts = cfg.encode_options();
    let seq = load_entry(base, entry, &manifest.layout)?;
    let prepared = prepare_sequence(&seq, set, &opts)?;
    let augment = cfg.augmentation();
    let dir = out.join(entry.split.as_str());
    let mut videos = Vec::new();
    for variant in video_variants(prepared, entry.split, augment.as_ref())? {
        let images = encode_prepared(&variant, set, &opts)?;
        let ctx = ExportContext {
            source: variant.source_id().to_string(),
            label: Some(entry.label.clone()),
            stride: opts.stride(),
            fps: variant.fps(),
        };
        let mut sidecars = Vec::new();
        for img in &images {
            let written = export_image(img, &ctx, cfg.codec.export, &dir)?;
            let sidecar = written.last().expect("sidecar is always written");
            sidecars.push(PathBuf::from(entry.split.as_str()).join(sidecar.file_name().expect("file name")));
        }
        videos.push(EncodedVideo {
            id: ctx.source,
            label: ctx.label,
            split: entry.split,
            source: entry.path.clone(),
            q: images.len(),
            images: sidecars,
        });
    }
    Ok(videos)
}

/// Returns `false` when some videos failed (they are listed in the summary).
pub fn encode(cfg: &PipelineConfig, manifest_path: &Path, set_path: &Path, out: &Path) -> Result<bool> {
    let manifest = DatasetManifest::from_json(&read_text(manifest_path)?)
        .with_context(|| format!("parsing manifest {}", manifest_path.display()))?;
    let set = ArrangementSet::from_json(&read_text(set_path)?)
        .with_context(|| format!("parsing arrangement set {}", set_path.display()))?;
    cfg.check_set(&set)?;
    let padded = manifest.layout.joint_count + cfg.codec.pad_recipe.len();
    if padded != set.joint_count() {
        bail!(
            "manifest skeletons have {} joints (+{} padded) but the arrangement grid holds {}",
            manifest.layout.joint_count,
            cfg.codec.pad_recipe.len(),
            set.joint_count()
        );
    }
    for split in [Split::Train, Split::Test, Split::Val] {
        if manifest.entries.iter().any(|e| e.split == split) {
            std::fs::create_dir_all(out.join(split.as_str()))?;
        }
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let indices: Vec<usize> = (0..manifest.entries.len()).collect();
    let results = par_map(cfg.workers, &indices, |&i| encode_entry(cfg, base, &manifest, i, &set, out))?;

    let mut videos = Vec::new();
    let mut failures = Vec::new();
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok(v) => videos.extend(v),
            Err(e) => {
                log::error!("{}: {e}", entry.path.display());
                failures.push(Failure {
                    source: entry.path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let images = videos.iter().map(|v| v.q).sum();
    log::info!(
        "encoded {} video(s) into {images} image(s), {} failure(s)",
        videos.len(),
        failures.len()
    );
    let ok = failures.is_empty();
    write_json(
        &out.join("summary.json"),
        &EncodeSummary {
            config: cfg.echo(),
            arrangement_set: set.id(),
            videos,
            images,
            failures,
        },
    )?;
    Ok(ok)
}

/// One video's feature series in the features `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub id: String,
    pub label: Option<String>,
    pub split: Split,
    pub q: usize,
    pub dim: usize,
    /// Relative to the summary's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSummary {
    #[serde(default)]
    pub config: serde_json::Value,
    pub videos: Vec<FeatureEntry>,
}

fn file_name_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.+~".contains(c) { c } else { '_' })
        .collect()
}

fn extract_video(images_dir: &Path, video: &EncodedVideo, extractor: &BaselineExtractor, out: &Path) -> Result<FeatureEntry> {
    let images = video
        .images
        .iter()
        .map(|p| import_image(&images_dir.join(p)).map(|(img, _)| img))
        .collect::<skepxel::Result<Vec<_>>>()
        .with_context(|| format!("loading images of {}", video.id))?;
    let series = image_features(&images, extractor, &video.id, video.label.clone())?;
    let rel = PathBuf::from(video.split.as_str()).join(format!("{}.fser", file_name_for(&video.id)));
    write_features(&series, &out.join(&rel))?;
    Ok(FeatureEntry {
        id: video.id.clone(),
        label: video.label.clone(),
        split: video.split,
        q: series.q(),
        dim: series.d(),
        path: rel,
    })
}

pub fn features(cfg: &PipelineConfig, images_dir: &Path, out: &Path) -> Result<bool> {
    let summary: EncodeSummary = read_json(&images_dir.join("summary.json"))
        .context("the images directory must hold the summary.json written by `encode`")?;
    let kind = summary
        .videos
        .first()
        .and_then(|v| v.images.first())
        .map(|p| import_image(&images_dir.join(p)).map(|(img, _)| img.kind))
        .transpose()?
        .unwrap_or(cfg.codec.kind);
    let extractor = BaselineExtractor::new(cfg.recognizer.extractor, kind.channels())?;
    for split in [Split::Train, Split::Test, Split::Val] {
        if summary.videos.iter().any(|v| v.split == split) {
            std::fs::create_dir_all(out.join(split.as_str()))?;
        }
    }
    let results = par_map(cfg.workers, &summary.videos, |v| extract_video(images_dir, v, &extractor, out))?;
    let mut videos = Vec::new();
    let mut failed = 0;
    for (v, r) in summary.videos.iter().zip(results) {
        match r {
            Ok(entry) => videos.push(entry),
            Err(e) => {
                failed += 1;
                log::error!("{}: {e:#}", v.id);
            }
        }
    }
    log::info!("extracted features for {} video(s), {failed} failure(s)", videos.len());
    write_json(
        &out.join("summary.json"),
        &FeatureSummary {
            config: cfg.echo(),
            videos,
        },
    )?;
    Ok(failed == 0)
}

fn describe_series(cfg: &PipelineConfig, series: &FeatureSeries, entry: &FeatureEntry) -> Result<Vec<DescriptorRecord>> {
    Ok(match cfg.recognizer.granularity {
        Granularity::Video => vec![DescriptorRecord {
            id: entry.id.clone(),
            label: entry.label.clone().or_else(|| series.label.clone()),
            split: entry.split,
            q: series.q(),
            values: ftp_encode(series, &cfg.ftp)?.values,
        }],
        Granularity::Image => (0..series.q())
            .map(|i| DescriptorRecord {
                id: format!("{}#{i}", entry.id),
                label: entry.label.clone().or_else(|| series.label.clone()),
                split: entry.split,
                q: 1,
                values: series.row(i).iter().map(|&v| f64::from(v)).collect(),
            })
            .collect(),
    })
}

pub fn ftp(cfg: &PipelineConfig, features_dir: &Path, out: &Path) -> Result<()> {
    let summary: FeatureSummary = read_json(&features_dir.join("summary.json"))
        .context("the features directory must hold a summary.json listing its series")?;
    if summary.videos.is_empty() {
        bail!("{} lists no feature series", features_dir.join("summary.json").display());
    }
    let results = par_map(cfg.workers, &summary.videos, |entry| {
        let path = features_dir.join(&entry.path);
        let series = load_external_features(&path).with_context(|| format!("loading {}", path.display()))?;
        describe_series(cfg, &series, entry)
    })?;
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    let dim = records[0].values.len();
    if let Some(r) = records.iter().find(|r| r.values.len() != dim) {
        bail!("{} has a {}-value descriptor, others have {dim}", r.id, r.values.len());
    }
    log::info!("{} descriptor(s) of length {dim}", records.len());
    let set = DescriptorSet {
        config: cfg.echo(),
        records,
    };
    write_json(out, &set)
}

pub fn train(cfg: &PipelineConfig, descriptors: &Path, out: &Path) -> Result<()> {
    let set = DescriptorSet::from_json(&read_text(descriptors)?)?;
    let samples = set.samples(Split::Train)?;
    if samples.is_empty() {
        bail!("{} holds no train-split descriptors", descriptors.display());
    }
    let model = ClassifierModel::train(cfg.recognizer.classifier, &samples)?;
    log::info!(
        "trained {:?} on {} sample(s) of {} class(es)",
        cfg.recognizer.classifier,
        samples.len(),
        model.classes().len()
    );
    let mut value: serde_json::Value = serde_json::from_str(&model.to_json())?;
    value["config"] = cfg.echo();
    write_json(out, &value)
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a skepxel::recognizer::EvalReport,
    config: serde_json::Value,
}

pub fn eval(cfg: &PipelineConfig, model_path: &Path, descriptors: &Path, out: &Path) -> Result<()> {
    let model = ClassifierModel::from_json(&read_text(model_path)?)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let set = DescriptorSet::from_json(&read_text(descriptors)?)?;
    let test = set.samples(Split::Test)?;
    if test.is_empty() {
        bail!("{} holds no test-split descriptors", descriptors.display());
    }
    let report = evaluate(&model, &test)?;
    print!("{}", report.to_table());
    println!("accuracy: {:.4}", report.accuracy);
    write_json(
        out,
        &ReportFile {
            report: &report,
            config: cfg.echo(),
        },
    )
}

pub fn synth(cfg: &PipelineConfig, synth: &SynthConfig, out: &Path) -> Result<()> {
    if synth.frames < cfg.codec.n {
        bail!("synthetic videos need at least n = {} frames, got {}", cfg.codec.n, synth.frames);
    }
    let data = synth_actions(synth)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (entry, seq) in data.manifest.entries.iter().zip(&data.sequences) {
        std::fs::write(out.join(&entry.path), to_generic_json(seq) + "\n")?;
    }
    std::fs::write(out.join("manifest.json"), data.manifest.to_json() + "\n")?;
    log::info!(
        "wrote {} sequences of {} classes to {}",
        data.sequences.len(),
        synth.classes,
        out.display()
    );
    Ok(())
}
