use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::SkeletalImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineExtractorConfig {
    /// Pooled grid `(rows, cols)`.
    pub pool: (usize, usize),
    pub out_dim: usize,
    pub seed: u64,
}

impl Default for BaselineExtractorConfig {
    fn default() -> Self {
        BaselineExtractorConfig {
            pool: (12, 12),
            out_dim: 256,
            seed: 0,
        }
    }
}

impl BaselineExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool.0 == 0 || self.pool.1 == 0 || self.out_dim == 0 {
            return Err(Error::Validation("pool size and out_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`BaselineExtractor::extract`].
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub values: Vec<f32>,
    /// The projection was zero, so no unit vector exists; `values` is all zeros.
    pub degenerate: bool,
}

/// Network-free image descriptor: average pooling, a seeded Gaussian random
/// projection, then L2 normalization.
#[derive(Debug, Clone)]
pub struct BaselineExtractor {
    cfg: BaselineExtractorConfig,
    channels: usize,
    /// `out_dim x (ph*pw*channels)`, row-major, entries `N(0, 1/out_dim)`.
    projection: Vec<f64>,
}

impl BaselineExtractor {
    pub fn new(cfg: BaselineExtractorConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        if channels == 0 {
            return Err(Error::Validation("extractor needs at least one channel".into()));
        }
        let inputs = cfg.pool.0 * cfg.pool.1 * channels;
        let scale = 1.0 / (cfg.out_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let projection: Vec<f64> = (0..cfg.out_dim * inputs)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        Ok(BaselineExtractor {
            cfg,
            channels,
            projection,
        })
    }

    pub fn config(&self) -> &BaselineExtractorConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn input_dim(&self) -> usize {
        self.cfg.pool.0 * self.cfg.pool.1 * self.channels
    }

    /// Average-pools every channel onto the configured grid, flattened as
    /// `(pool row, pool col, channel)`.
    ///
    /// Bin `i` of `P` over an axis of length `L` spans
    /// `floor(i*L/P) .. floor((i+1)*L/P)`, widened to one pixel if empty.
    pub fn pool(&self, img: &SkeletalImage) -> Result<Vec<f64>> {
        if img.channels() != self.channels {
            return Err(Error::Dimension(format!(
                "extractor built for {} channels, image has {}",
                self.channels,
                img.channels()
            )));
        }
        let (ph, pw) = self.cfg.pool;
        let bins = |len: usize, parts: usize| -> Vec<(usize, usize)> {
            (0..parts)
                .map(|i| {
                    let lo = (i * len / parts).min(len - 1);
                    (lo, ((i + 1) * len / parts).max(lo + 1))
                })
                .collect()
        };
        let rows = bins(img.height(), ph);
        let cols = bins(img.width(), pw);
        let c = self.channels;
        let mut out = Vec::with_capacity(ph * pw * c);
        let data = img.data();
        for &(r0, r1) in &rows {
            for &(c0, c1) in &cols {
                let mut acc = vec![0.0f64; c];
                for r in r0..r1 {
                    let line = &data[(r * img.width() + c0) * c..(r * img.width() + c1) * c];
                    for px in line.chunks_exact(c) {
                        for (a, &v) in acc.iter_mut().zip(px) {
                            *a += f64::from(v);
                        }
                    }
                }
                let count = ((r1 - r0) * (c1 - c0)) as f64;
                out.extend(acc.into_iter().map(|a| a / count));
            }
        }
        Ok(out)
    }

    /// Random projection of an already pooled vector (no normalization).
    pub fn project(&self, pooled: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        debug_assert_eq!(pooled.len(), n);
        self.projection
            .chunks_exact(n)
            .map(|row| row.iter().zip(pooled).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn extract(&self, img: &SkeletalImage) -> Result<Feature> {
        let projected = self.project(&self.pool(img)?);
        let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Ok(Feature {
                values: vec![0.0; self.cfg.out_dim],
                degenerate: true,
            });
        }
        Ok(Feature {
            values: projected.iter().map(|v| (v / norm) as f32).collect(),
            degenerate: false,
        })
    }
}

/// Alias matching the operation name used across the docs.
pub fn baseline_extract(img: &SkeletalImage, extractor: &BaselineExtractor) -> Result<Feature> {
    extractor.extract(img)
}
