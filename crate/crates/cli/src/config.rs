use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use skepxel::arrangement::{ArrangementSet, GammaThreshold};
use skepxel::codec::{ExportMode, ImageKind};
use skepxel::ftp::PyramidConfig;
use skepxel::normalize::AugmentationConfig;
use skepxel::pipeline::{EncodeOptions, Granularity};
use skepxel::recognizer::{BaselineExtractorConfig, ClassifierSpec};
use skepxel::skeleton::SkeletonLayout;

/// Whole-pipeline configuration. Every block has defaults, so an empty file is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads; 0 uses every CPU.
    pub workers: usize,
    pub layout: LayoutBlock,
    pub arrangement: ArrangementBlock,
    pub codec: CodecBlock,
    pub augment: AugmentBlock,
    pub ftp: PyramidConfig,
    pub recognizer: RecognizerBlock,
    pub paths: PathsBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutBlock {
    pub joints: usize,
    pub hip: Option<usize>,
    pub left_shoulder: Option<usize>,
    pub right_shoulder: Option<usize>,
}

impl Default for LayoutBlock {
    fn default() -> Self {
        LayoutBlock {
            joints: 25,
            hip: None,
            left_shoulder: None,
            right_shoulder: None,
        }
    }
}

impl LayoutBlock {
    pub fn resolve(&self) -> Result<SkeletonLayout> {
        let layout = match (self.hip, self.left_shoulder, self.right_shoulder) {
            (None, None, None) => SkeletonLayout::default_for(self.joints)?,
            (Some(h), Some(l), Some(r)) => SkeletonLayout::from_indices(self.joints, h, l, r)?,
            _ => bail!("layout: give all of hip, left_shoulder and right_shoulder, or none"),
        };
        Ok(layout)
    }
}

/// `gamma_t` is either a number or the string `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdValue {
    Number(f64),
    Text(String),
}

impl ThresholdValue {
    pub fn resolve(&self) -> Result<GammaThreshold> {
        Ok(match self {
            ThresholdValue::Number(v) => GammaThreshold::Value(*v),
            ThresholdValue::Text(s) => s.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrangementBlock {
    pub h: usize,
    pub w: usize,
    pub m: usize,
    pub gamma_t: ThresholdValue,
    pub seed: u64,
    pub max_attempts: u64,
}

impl Default for ArrangementBlock {
    fn default() -> Self {
        ArrangementBlock {
            h: 5,
            w: 5,
            m: 36,
            gamma_t: ThresholdValue::Text("auto".into()),
            seed: 0,
            max_attempts: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecBlock {
    pub n: usize,
    pub stride: Option<usize>,
    pub kind: ImageKind,
    pub export: ExportMode,
    pub pad_recipe: Vec<(usize, usize)>,
    /// Expected image height `m*h`, checked when given.
    pub image_height: Option<usize>,
    /// Expected image width `n*w`, checked when given.
    pub image_width: Option<usize>,
}

impl Default for CodecBlock {
    fn default() -> Self {
        CodecBlock {
            n: 36,
            stride: None,
            kind: ImageKind::LocationVelocity,
            export: ExportMode::RawF32,
            pad_recipe: Vec::new(),
            image_height: None,
            image_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentBlock {
    pub enabled: bool,
    pub sigma: f64,
    pub copies: usize,
    pub seed: u64,
}

impl Default for AugmentBlock {
    fn default() -> Self {
        let d = AugmentationConfig::default();
        AugmentBlock {
            enabled: false,
            sigma: d.sigma,
            copies: d.copies,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerBlock {
    pub extractor: BaselineExtractorConfig,
    pub classifier: ClassifierSpec,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsBlock {
    pub manifest: Option<PathBuf>,
    pub arrangement: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.manifest,
            &mut p.arrangement,
            &mut p.images,
            &mut p.features,
            &mut p.descriptors,
            &mut p.model,
            &mut p.report,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        Ok(cfg)
    }

    /// Cross-field checks, run before any command does work.
    pub fn validate(&self) -> Result<()> {
        let layout = self.layout.resolve()?;
        let a = &self.arrangement;
        let c = &self.codec;
        if a.h == 0 || a.w == 0 || a.m == 0 {
            bail!("arrangement: h, w and m must be positive");
        }
        a.gamma_t.resolve()?;
        if a.max_attempts == 0 {
            bail!("arrangement: max_attempts must be at least 1");
        }
        let padded = layout.joint_count + c.pad_recipe.len();
        if a.h * a.w != padded {
            bail!(
                "h*w = {}x{} = {} but the skeleton has {} joints ({} + {} padded)",
                a.h,
                a.w,
                a.h * a.w,
                padded,
                layout.joint_count,
                c.pad_recipe.len()
            );
        }
        if c.n < 2 {
            bail!("codec: n must be at least 2");
        }
        if c.stride == Some(0) {
            bail!("codec: stride must be at least 1");
        }
        if let Some(h) = c.image_height {
            if h != a.m * a.h {
                bail!("codec: image_height {h} != m*h = {}*{} = {}", a.m, a.h, a.m * a.h);
            }
        }
        if let Some(w) = c.image_width {
            if w != c.n * a.w {
                bail!("codec: image_width {w} != n*w = {}*{} = {}", c.n, a.w, c.n * a.w);
            }
        }
        self.augmentation().unwrap_or_default().validate()?;
        self.ftp.validate()?;
        self.recognizer.extractor.validate()?;
        match self.recognizer.classifier {
            ClassifierSpec::Knn { k } if k == 0 => bail!("recognizer: k must be at least 1"),
            ClassifierSpec::Ridge { lambda } if !(lambda.is_finite() && lambda > 0.0) => {
                bail!("recognizer: lambda must be positive")
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks a loaded arrangement set against the arrangement block.
    pub fn check_set(&self, set: &ArrangementSet) -> Result<()> {
        let a = &self.arrangement;
        if (set.h(), set.w(), set.m()) != (a.h, a.w, a.m) {
            bail!(
                "arrangement file is {}x{} with m={}, config expects {}x{} with m={}",
                set.h(),
                set.w(),
                set.m(),
                a.h,
                a.w,
                a.m
            );
        }
        Ok(())
    }

    pub fn augmentation(&self) -> Option<AugmentationConfig> {
        self.augment.enabled.then_some(AugmentationConfig {
            sigma: self.augment.sigma,
            copies: self.augment.copies,
            seed: self.augment.seed,
        })
    }

    pub fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            n: self.codec.n,
            stride: self.codec.stride,
            kind: self.codec.kind,
            pad_recipe: self.codec.pad_recipe.clone(),
        }
    }

    /// JSON echo stored in every artifact.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn full_file_parses() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            workers = 2
            [layout]
            joints = 14
            hip = 0
            left_shoulder = 1
            right_shoulder = 2
            [arrangement]
            h = 4
            w = 4
            m = 8
            gamma_t = 120.5
            [codec]
            n = 16
            stride = 4
            kind = "location"
            export = "png8"
            pad_recipe = [[2, 3], [14, 12]]
            image_height = 32
            image_width = 64
            [augment]
            enabled = true
            sigma = 0.01
            [ftp]
            levels = 2
            z = 3
            [recognizer]
            granularity = "image"
            classifier = { kind = "ridge", lambda = 0.1 }
            [recognizer.extractor]
            pool = [6, 6]
            out_dim = 64
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.arrangement.gamma_t.resolve().unwrap(), GammaThreshold::Value(120.5));
        assert_eq!(cfg.recognizer.classifier, ClassifierSpec::Ridge { lambda: 0.1 });
        assert_eq!(cfg.augmentation().unwrap().sigma, 0.01);
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let mut cfg = PipelineConfig::default();
        cfg.arrangement.h = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.codec.image_width = Some(170);
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.codec.image_height = Some(180);
        cfg.codec.image_width = Some(180);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<PipelineConfig>("[codec]\nwindow = 3").is_err());
    }

    #[test]
    fn rejects_bad_threshold_text() {
        let mut cfg = PipelineConfig::default();
        cfg.arrangement.gamma_t = ThresholdValue::Text("high".into());
        assert!(cfg.validate().is_err());
    }
}
