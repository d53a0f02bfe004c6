//! Image features, classifiers and evaluation.

mod classifier;
mod eval;
mod extractor;
mod synth;

pub use classifier::{ClassifierModel, ClassifierSpec, KnnModel, RidgeModel};
pub use eval::{evaluate, EvalReport};
pub use extractor::{baseline_extract, BaselineExtractor, BaselineExtractorConfig, Feature};
pub use synth::{synth_actions, SynthConfig, SynthDataset};
