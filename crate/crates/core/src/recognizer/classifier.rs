use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn cosine_distance(a: &[f32], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let x = f64::from(x);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

/// k-nearest-neighbour classifier under cosine distance.
///
/// Descriptors are stored as `f32`, the same precision they are persisted
/// with, so a reloaded model predicts exactly like the original.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    dim: usize,
    descriptors: Vec<f32>,
    labels: Vec<String>,
}

impl KnnModel {
    pub fn new(k: usize, samples: &[(Vec<f64>, String)]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Model("k must be at least 1".into()));
        }
        let dim = samples
            .first()
            .map(|(d, _)| d.len())
            .ok_or_else(|| Error::Model("k-NN needs at least one training sample".into()))?;
        if samples.iter().any(|(d, _)| d.len() != dim) {
            return Err(Error::Dimension("training descriptors differ in length".into()));
        }
        Ok(KnnModel {
            k,
            dim,
            descriptors: samples.iter().flat_map(|(d, _)| d.iter().map(|&v| v as f32)).collect(),
            labels: samples.iter().map(|(_, l)| l.clone()).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> Vec<String> {
        let mut c = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    /// Majority label among the `k` nearest stored descriptors.
    ///
    /// Equal distances keep training order; tied votes go to the class with
    /// the smaller mean distance, then to the lexicographically smaller label.
    pub fn predict(&self, query: &[f64]) -> Result<String> {
        if self.is_empty() {
            return Err(Error::Model("k-NN model holds no samples".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Dimension(format!(
                "query has {} values, model expects {}",
                query.len(),
                self.dim
            )));
        }
        let mut dist: Vec<(f64, usize)> = self
            .descriptors
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, d)| (cosine_distance(d, query), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for &(d, i) in dist.iter().take(self.k) {
            let v = votes.entry(&self.labels[i]).or_insert((0, 0.0));
            v.0 += 1;
            v.1 += d;
        }
        let best = votes
            .into_iter()
            .min_by(|(la, (ca, sa)), (lb, (cb, sb))| {
                cb.cmp(ca)
                    .then((sa / *ca as f64).total_cmp(&(sb / *cb as f64)))
                    .then(la.cmp(lb))
            })
            .expect("k >= 1");
        Ok(best.0.to_string())
    }
}

/// One-vs-rest ridge regression on `+1/-1` targets with a bias column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub classes: Vec<String>,
    pub lambda: f64,
    pub dim: usize,
    /// One row of `dim + 1` weights per class; the last entry is the bias.
    pub weights: Vec<Vec<f64>>,
}

impl RidgeModel {
    /// Solves `(X^T X + lambda I) W = X^T Y`.
    ///
    /// When there are fewer samples than features the equivalent dual system
    /// `W = X^T (X X^T + lambda I)^-1 Y` is solved instead; both are positive
    /// definite for `lambda > 0`.
    pub fn train(samples: &[(Vec<f64>, String)], lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Model(format!("ridge lambda must be positive, got {lambda}")));
        }
        let dim = samples
            .first()
            .map(|(d, _)| d.len())
            .ok_or_else(|| Error::Model("ridge needs at least one training sample".into()))?;
        if samples.iter().any(|(d, _)| d.len() != dim) {
            return Err(Error::Dimension("training descriptors differ in length".into()));
        }
        let mut classes: Vec<String> = samples.iter().map(|(_, l)| l.clone()).collect();
        classes.sort();
        classes.dedup();
        Self::train_with_classes(samples, classes, lambda)
    }

    /// Like [`RidgeModel::train`] with an explicit class list; every class
    /// must have at least one sample.
    pub fn train_with_classes(samples: &[(Vec<f64>, String)], classes: Vec<String>, lambda: f64) -> Result<Self> {
        if let Some(missing) = classes.iter().find(|c| !samples.iter().any(|(_, l)| l == *c)) {
            return Err(Error::Model(format!("class {missing:?} has no training samples")));
        }
        if let Some((_, l)) = samples.iter().find(|(_, l)| !classes.contains(l)) {
            return Err(Error::Model(format!("sample label {l:?} is not in the class list")));
        }
        let n = samples.len();
        let dim = samples[0].0.len();
        let cols = dim + 1;
        let x = DMatrix::from_fn(n, cols, |i, j| if j < dim { samples[i].0[j] } else { 1.0 });
        let y = DMatrix::from_fn(n, classes.len(), |i, k| if samples[i].1 == classes[k] { 1.0 } else { -1.0 });
        let w = if cols <= n {
            let gram = x.transpose() * &x + DMatrix::identity(cols, cols) * lambda;
            let chol = gram.cholesky().ok_or_else(|| Error::Model("normal equations not positive definite".into()))?;
            chol.solve(&(x.transpose() * &y))
        } else {
            let gram = &x * x.transpose() + DMatrix::identity(n, n) * lambda;
            let chol = gram.cholesky().ok_or_else(|| Error::Model("normal equations not positive definite".into()))?;
            x.transpose() * chol.solve(&y)
        };
        let weights = (0..classes.len()).map(|k| w.column(k).iter().copied().collect()).collect();
        Ok(RidgeModel {
            classes,
            lambda,
            dim,
            weights,
        })
    }

    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::Dimension(format!(
                "query has {} values, model expects {}",
                query.len(),
                self.dim
            )));
        }
        Ok(self
            .weights
            .iter()
            .map(|w| w[..self.dim].iter().zip(query).map(|(a, b)| a * b).sum::<f64>() + w[self.dim])
            .collect())
    }

    /// Class with the highest score. Scores within `1e-12` of each other are
    /// tied and go to the lexicographically smaller class.
    pub fn predict(&self, query: &[f64]) -> Result<String> {
        let scores = self.scores(query)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] + 1e-12 {
                best = k;
            }
        }
        Ok(self.classes[best].clone())
    }

    /// Mean squared residual on `+1/-1` targets over `samples`.
    pub fn training_loss(&self, samples: &[(Vec<f64>, String)]) -> Result<f64> {
        let mut total = 0.0;
        for (d, l) in samples {
            let scores = self.scores(d)?;
            for (c, s) in self.classes.iter().zip(scores) {
                let target = if c == l { 1.0 } else { -1.0 };
                total += (s - target).powi(2);
            }
        }
        Ok(total / (samples.len() * self.classes.len()) as f64)
    }
}

/// Trained classifier, persisted as JSON tagged by `kind`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Knn(KnnModel),
    Ridge(RidgeModel),
}

/// Which classifier to train and its hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn { k: usize },
    Ridge { lambda: f64 },
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Knn { k: 1 }
    }
}

impl ClassifierModel {
    pub fn train(spec: ClassifierSpec, samples: &[(Vec<f64>, String)]) -> Result<Self> {
        match spec {
            ClassifierSpec::Knn { k } => KnnModel::new(k, samples).map(ClassifierModel::Knn),
            ClassifierSpec::Ridge { lambda } => RidgeModel::train(samples, lambda).map(ClassifierModel::Ridge),
        }
    }

    pub fn predict(&self, query: &[f64]) -> Result<String> {
        match self {
            ClassifierModel::Knn(m) => m.predict(query),
            ClassifierModel::Ridge(m) => m.predict(query),
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            ClassifierModel::Knn(m) => m.classes(),
            ClassifierModel::Ridge(m) => m.classes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            ClassifierModel::Knn(m) => ModelFile::Knn {
                k: m.k,
                metric: "cosine".into(),
                dim: m.dim,
                labels: m.labels.clone(),
                descriptors: BASE64.encode(m.descriptors.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()),
            },
            ClassifierModel::Ridge(m) => ModelFile::Ridge(m.clone()),
        };
        serde_json::to_string_pretty(&file).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str(text)? {
            ModelFile::Knn {
                k,
                metric,
                dim,
                labels,
                descriptors,
            } => {
                if metric != "cosine" {
                    return Err(Error::Model(format!("unsupported k-NN metric {metric:?}")));
                }
                let bytes = BASE64
                    .decode(descriptors)
                    .map_err(|e| Error::Model(format!("descriptor payload: {e}")))?;
                if bytes.len() != 4 * dim * labels.len() || k == 0 {
                    return Err(Error::Model("k-NN payload does not match dim x samples".into()));
                }
                let descriptors = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Ok(ClassifierModel::Knn(KnnModel {
                    k,
                    dim,
                    descriptors,
                    labels,
                }))
            }
            ModelFile::Ridge(m) => {
                if m.weights.len() != m.classes.len() || m.weights.iter().any(|w| w.len() != m.dim + 1) {
                    return Err(Error::Model("ridge weight matrix has the wrong shape".into()));
                }
                Ok(ClassifierModel::Ridge(m))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Knn {
        k: usize,
        metric: String,
        dim: usize,
        labels: Vec<String>,
        /// Little-endian `f32`, base64.
        descriptors: String,
    },
    Ridge(RidgeModel),
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn s(v: &[f64], l: &str) -> (Vec<f64>, String) {
        (v.to_vec(), l.to_string())
    }

    #[test]
    fn one_nn_returns_stored_label() {
        let train = vec![s(&[1.0, 0.0], "a"), s(&[0.0, 1.0], "b"), s(&[1.0, 1.0], "c")];
        let m = KnnModel::new(1, &train).unwrap();
        for (d, l) in &train {
            assert_eq!(&m.predict(d).unwrap(), l);
        }
    }

    #[test]
    fn three_nn_majority() {
        // cosine distances from the query (1, 0): 0.1, 0.1, 0.9-ish
        let c = 0.9f64;
        let far = 0.1f64;
        let train = vec![
            s(&[c, (1.0 - c * c).sqrt()], "x"),
            s(&[c, -(1.0 - c * c).sqrt()], "x"),
            s(&[far, (1.0 - far * far).sqrt()], "y"),
        ];
        let m = KnnModel::new(3, &train).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), "x");
    }

    #[test]
    fn knn_vote_ties() {
        // k = 2, one vote each: the nearer class wins
        let train = vec![s(&[1.0, 0.2], "b"), s(&[1.0, 0.5], "a")];
        let m = KnnModel::new(2, &train).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), "b");
        // identical distances: lexicographic
        let train = vec![s(&[1.0, 0.0], "b"), s(&[1.0, 0.0], "a")];
        let m = KnnModel::new(2, &train).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), "a");
    }

    #[test]
    fn knn_scale_invariance() {
        let train = vec![s(&[1.0, 0.3, -0.2], "a"), s(&[-0.5, 1.0, 0.0], "b"), s(&[0.1, 0.1, 1.0], "c")];
        let m = KnnModel::new(1, &train).unwrap();
        let q = [0.4, 0.9, 0.05];
        let p = m.predict(&q).unwrap();
        for scale in [1e-3, 0.5, 7.0, 1e4] {
            let scaled: Vec<f64> = q.iter().map(|v| v * scale).collect();
            assert_eq!(m.predict(&scaled).unwrap(), p);
        }
    }

    #[test]
    fn knn_errors() {
        assert!(KnnModel::new(1, &[]).is_err());
        assert!(KnnModel::new(0, &[s(&[1.0], "a")]).is_err());
        let m = KnnModel::new(1, &[s(&[1.0, 2.0], "a")]).unwrap();
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn ridge_huge_lambda_ties_to_first_class() {
        let train = vec![s(&[1.0, 0.0], "b"), s(&[0.0, 1.0], "a"), s(&[0.0, 2.0], "a")];
        let m = RidgeModel::train(&train, 1e30).unwrap();
        assert!(m.weights.iter().flatten().all(|w| w.abs() < 1e-20));
        assert_eq!(m.predict(&[1.0, 0.0]).unwrap(), "a");
    }

    #[test]
    fn ridge_primal_and_dual_agree() {
        let train: Vec<_> = (0..6)
            .map(|i| {
                let x = i as f64;
                s(&[x, x * x - 3.0, (x * 0.7).sin()], if i % 2 == 0 { "p" } else { "q" })
            })
            .collect();
        // 6 samples, 4 columns: primal
        let primal = RidgeModel::train(&train, 0.5).unwrap();
        // 3 samples, 4 columns: dual; compare against a primal solve on the same subset
        let few = &train[..3];
        let dual = RidgeModel::train(few, 0.5).unwrap();
        let x = DMatrix::from_fn(3, 4, |i, j| if j < 3 { few[i].0[j] } else { 1.0 });
        let y = DVector::from_fn(3, |i, _| if few[i].1 == "p" { 1.0 } else { -1.0 });
        let direct = (x.transpose() * &x + DMatrix::identity(4, 4) * 0.5)
            .lu()
            .solve(&(x.transpose() * y))
            .unwrap();
        for (a, b) in dual.weights[0].iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(primal.weights.len(), 2);
    }

    #[test]
    fn ridge_rejects_bad_inputs() {
        let train = vec![s(&[1.0], "a")];
        assert!(RidgeModel::train(&train, 0.0).is_err());
        assert!(RidgeModel::train_with_classes(&train, vec!["a".into(), "b".into()], 1.0).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let train = vec![s(&[0.1, 0.25], "a"), s(&[1.0 / 3.0, -2.0], "b")];
        for spec in [ClassifierSpec::Knn { k: 1 }, ClassifierSpec::Ridge { lambda: 0.1 }] {
            let m = ClassifierModel::train(spec, &train).unwrap();
            let back = ClassifierModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
    }
}
