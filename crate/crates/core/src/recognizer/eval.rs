use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::classifier::ClassifierModel;
use crate::error::{Error, Result};

/// Accuracy, confusion matrix and per-class recall of one test run.
///
/// `classes` is the sorted union of the model's classes and the test labels;
/// a test label the model has never seen gets a row but can never be
/// predicted, so its samples always count as errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub recall: Vec<Option<f64>>,
    pub total: usize,
}

impl EvalReport {
    pub fn from_predictions(model_classes: &[String], pairs: &[(String, String)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("test set is empty".into()));
        }
        let mut classes: Vec<String> = model_classes
            .iter()
            .cloned()
            .chain(pairs.iter().flat_map(|(t, p)| [t.clone(), p.clone()]))
            .collect();
        classes.sort();
        classes.dedup();
        let index = |l: &str| classes.binary_search_by(|c| c.as_str().cmp(l)).expect("label listed");
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (truth, pred) in pairs {
            confusion[index(truth)][index(pred)] += 1;
        }
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let recall = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            accuracy: correct as f64 / pairs.len() as f64,
            total: pairs.len(),
            classes,
            confusion,
            recall,
        })
    }

    /// Aligned text rendering of the confusion matrix and recalls.
    pub fn to_table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(String::len)
            .chain(self.confusion.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:>width$}", "true\\pred");
        for c in &self.classes {
            let _ = write!(out, " {c:>width$}");
        }
        let _ = writeln!(out, " {:>width$}", "recall");
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:>width$}", self.classes[i]);
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            match self.recall[i] {
                Some(r) => {
                    let _ = writeln!(out, " {r:>width$.3}");
                }
                None => {
                    let _ = writeln!(out, " {:>width$}", "-");
                }
            }
        }
        let _ = writeln!(out, "accuracy {:.4} ({} samples)", self.accuracy, self.total);
        out
    }
}

/// Predicts every `(descriptor, true label)` pair and tallies the results.
pub fn evaluate(model: &ClassifierModel, test: &[(Vec<f64>, String)]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set is empty".into()));
    }
    let pairs = test
        .iter()
        .map(|(d, l)| Ok((l.clone(), model.predict(d)?)))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&model.classes(), &pairs)
}
