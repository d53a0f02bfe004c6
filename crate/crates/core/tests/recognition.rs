use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use skepxel::arrangement::{generate_set, GammaThreshold};
use skepxel::codec::{ImageKind, SkeletalImage};
use skepxel::ftp::{dft_low_freq, ftp_encode, FeatureSeries, PyramidConfig};
use skepxel::pipeline::{run_experiment, EncodeOptions, RecognitionConfig};
use skepxel::recognizer::{
    BaselineExtractor, BaselineExtractorConfig, ClassifierModel, ClassifierSpec, KnnModel, RidgeModel, synth_actions,
    SynthConfig,
};
use skepxel::skeleton::{SkeletonSequence, Split};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

#[test]
fn projection_roughly_preserves_inner_products() {
    let ex = BaselineExtractor::new(
        BaselineExtractorConfig {
            pool: (12, 12),
            out_dim: 256,
            seed: 3,
        },
        3,
    )
    .unwrap();
    let n = ex.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut errors = Vec::new();
    for _ in 0..1000 {
        let u = gaussian(&mut rng, n);
        // correlated partner so inner products are not all near zero
        let noise = gaussian(&mut rng, n);
        let v: Vec<f64> = u.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let exact = dot(&u, &v) / (norm(&u) * norm(&v));
        let (pu, pv) = (ex.project(&u), ex.project(&v));
        let approx = dot(&pu, &pv) / (norm(&pu) * norm(&pv));
        errors.push(((approx - exact) / exact).abs());
    }
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    assert!(median < 0.15, "median relative error {median}");
}

#[test]
fn extractor_output_is_unit_or_flagged() {
    let ex = BaselineExtractor::new(BaselineExtractorConfig::default(), 3).unwrap();
    let zero = SkeletalImage::from_parts(20, 20, ImageKind::Location, vec![0.0; 1200], (0.0, 4), "z").unwrap();
    let f = ex.extract(&zero).unwrap();
    assert!(f.degenerate);
    assert!(f.values.iter().all(|&v| v == 0.0));

    let data: Vec<f32> = (0..1200).map(|i| (i as f32 * 0.37).cos()).collect();
    let img = SkeletalImage::from_parts(20, 20, ImageKind::Location, data, (0.0, 4), "z").unwrap();
    let f = ex.extract(&img).unwrap();
    assert!(!f.degenerate);
    let n: f64 = f.values.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
    assert!((n - 1.0).abs() < 1e-5);
}

/// Four Gaussian blobs in the plane, well separated.
fn blobs(seed: u64, per_class: usize) -> Vec<(Vec<f64>, String)> {
    let centres = [[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0], [0.0, -3.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let p = vec![centre[0] + rng.random_range(-0.8..0.8), centre[1] + rng.random_range(-0.8..0.8)];
            out.push((p, format!("c{c}")));
        }
    }
    out
}

fn nearest_centroid(train: &[(Vec<f64>, String)], query: &[f64]) -> String {
    let mut labels: Vec<&String> = train.iter().map(|(_, l)| l).collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .map(|l| {
            let pts: Vec<&Vec<f64>> = train.iter().filter(|(_, x)| x == l).map(|(p, _)| p).collect();
            let c: Vec<f64> = (0..query.len())
                .map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64)
                .collect();
            let d: f64 = c.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
            (d, l.clone())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1
}

#[test]
fn ridge_agrees_with_nearest_centroid_on_separated_blobs() {
    let train = blobs(1, 25);
    let test = blobs(2, 25);
    let model = RidgeModel::train(&train, 0.1).unwrap();
    for (q, label) in &test {
        assert_eq!(&model.predict(q).unwrap(), label);
        assert_eq!(&nearest_centroid(&train, q), label);
    }
}

#[test]
fn ridge_loss_grows_with_lambda() {
    let train = blobs(5, 10);
    let losses: Vec<f64> = [0.01, 1.0, 100.0]
        .iter()
        .map(|&l| RidgeModel::train(&train, l).unwrap().training_loss(&train).unwrap())
        .collect();
    assert!(losses[0] <= losses[1] && losses[1] <= losses[2], "{losses:?}");
}

#[test]
fn ridge_solutions_satisfy_normal_equations() {
    // 3 samples in 6 dims goes through the dual form, 30 samples through the primal
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let few: Vec<(Vec<f64>, String)> = (0..3).map(|i| (gaussian(&mut rng, 6), format!("l{}", i % 2))).collect();
    let mut many = few.clone();
    let model_few = RidgeModel::train(&few, 0.7).unwrap();
    for i in 0..27 {
        many.push((gaussian(&mut rng, 6), format!("l{}", i % 2)));
    }
    let model_many = RidgeModel::train(&many, 0.7).unwrap();
    // closed-form check of both against the normal equations
    for (model, samples) in [(&model_few, &few), (&model_many, &many)] {
        for (c, w) in model.classes.iter().zip(&model.weights) {
            // gradient of sum (x.w - y)^2 + lambda |w|^2 with bias appended to x
            let mut grad = vec![0.0; w.len()];
            for (x, l) in samples.iter() {
                let mut xb = x.clone();
                xb.push(1.0);
                let y = if l == c { 1.0 } else { -1.0 };
                let r = dot(&xb, w) - y;
                for (g, xi) in grad.iter_mut().zip(&xb) {
                    *g += 2.0 * r * xi;
                }
            }
            for (g, wi) in grad.iter_mut().zip(w) {
                *g += 2.0 * 0.7 * wi;
            }
            assert!(norm(&grad) < 1e-8, "gradient {}", norm(&grad));
        }
    }
}

#[test]
fn knn_majority_and_ties() {
    let s = |v: [f64; 2], l: &str| (v.to_vec(), l.to_string());
    let train = vec![
        s([1.0, 0.0], "a"),
        s([1.0, 0.05], "a"),
        s([0.0, 1.0], "b"),
        s([0.1, 1.0], "b"),
        s([0.95, 0.3], "b"),
    ];
    let model = KnnModel::new(3, &train).unwrap();
    assert_eq!(model.predict(&[1.0, 0.01]).unwrap(), "a");
    assert_eq!(model.predict(&[0.0, 2.0]).unwrap(), "b");
    // k = 2 with one vote each: the closer class wins
    let model = KnnModel::new(2, &[s([1.0, 0.0], "z"), s([0.0, 1.0], "y")]).unwrap();
    assert_eq!(model.predict(&[1.0, 0.2]).unwrap(), "z");
    // exact tie in votes and distance: smaller label
    assert_eq!(model.predict(&[1.0, 1.0]).unwrap(), "y");
    // k beyond the training set votes over every stored sample
    assert_eq!(KnnModel::new(9, &train).unwrap().predict(&[0.0, 1.0]).unwrap(), "b");
    assert!(KnnModel::new(0, &train).is_err());
}

#[test]
fn classifier_json_roundtrip() {
    let train = blobs(8, 5);
    for spec in [ClassifierSpec::Knn { k: 3 }, ClassifierSpec::Ridge { lambda: 0.5 }] {
        let model = ClassifierModel::train(spec, &train).unwrap();
        let back = ClassifierModel::from_json(&model.to_json()).unwrap();
        for (q, _) in blobs(9, 5) {
            assert_eq!(model.predict(&q).unwrap(), back.predict(&q).unwrap());
        }
    }
}

fn naive_magnitudes(x: &[f64], z: usize) -> Vec<f64> {
    (0..z)
        .map(|k| {
            if k >= x.len() {
                return 0.0;
            }
            let n = x.len() as f64;
            let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let a = TAU * k as f64 * t as f64 / n;
                (re + v * a.cos(), im - v * a.sin())
            });
            re.hypot(im)
        })
        .collect()
}

#[test]
fn dft_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for len in [1, 2, 5, 16, 37] {
        let x = gaussian(&mut rng, len);
        for (a, b) in dft_low_freq(&x, 6).iter().zip(naive_magnitudes(&x, 6)) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b));
        }
    }
}

fn series(rows: &[Vec<f32>]) -> FeatureSeries {
    FeatureSeries::from_rows(rows, "v", None).unwrap()
}

#[test]
fn single_level_pyramid_ignores_circular_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f32>> = (0..16).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let cfg = PyramidConfig {
        levels: 1,
        z: 4,
        min_series_len: 1,
    };
    let base = ftp_encode(&series(&rows), &cfg).unwrap();
    for shift in 1..16 {
        let mut shifted = rows.clone();
        shifted.rotate_left(shift);
        let other = ftp_encode(&series(&shifted), &cfg).unwrap();
        for (a, b) in base.values.iter().zip(&other.values) {
            assert!((a - b).abs() < 1e-9, "shift {shift}: {a} vs {b}");
        }
    }
}

#[test]
fn pyramid_is_linear_in_scale() {
    let rows: Vec<Vec<f32>> = (0..11).map(|t| vec![(t as f32 * 0.4).sin(), t as f32 * 0.1]).collect();
    let scaled: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v * 4.0).collect()).collect();
    let cfg = PyramidConfig::default();
    let a = ftp_encode(&series(&rows), &cfg).unwrap();
    let b = ftp_encode(&series(&scaled), &cfg).unwrap();
    assert_eq!(a.values.len(), cfg.descriptor_len(2));
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((4.0 * x - y).abs() < 1e-9 * (1.0 + y.abs()));
    }
}

#[test]
fn pyramid_layout_matches_segment_spectra() {
    let rows: Vec<Vec<f32>> = (0..16).map(|t| vec![t as f32, (t * t % 7) as f32]).collect();
    let cfg = PyramidConfig {
        levels: 3,
        z: 2,
        min_series_len: 1,
    };
    let desc = ftp_encode(&series(&rows), &cfg).unwrap();
    let mut expected = Vec::new();
    for parts in [1, 2, 4] {
        for s in 0..parts {
            for d in 0..2 {
                let col: Vec<f64> = rows[s * 16 / parts..(s + 1) * 16 / parts].iter().map(|r| f64::from(r[d])).collect();
                expected.extend(naive_magnitudes(&col, 2));
            }
        }
    }
    assert_eq!(desc.values.len(), expected.len());
    for (a, b) in desc.values.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b));
    }
}

#[test]
fn identical_classes_stay_near_chance() {
    let data = synth_actions(&SynthConfig {
        classes: 5,
        per_class: 12,
        frames: 60,
        seed: 77,
        identical_classes: true,
        ..Default::default()
    })
    .unwrap();
    let videos: Vec<(SkeletonSequence, Split)> = data
        .sequences
        .iter()
        .cloned()
        .zip(data.manifest.entries.iter().map(|e| e.split))
        .collect();
    let set = generate_set(5, 5, 12, GammaThreshold::Auto, 3, 100_000).unwrap();
    let cfg = RecognitionConfig {
        encode: EncodeOptions {
            n: 36,
            stride: Some(12),
            kind: ImageKind::LocationVelocity,
            pad_recipe: Vec::new(),
        },
        ..Default::default()
    };
    let out = run_experiment(&videos, &set, &cfg, 1).unwrap();
    // 20 test videos over 5 classes: chance is 0.2
    assert!(out.report.accuracy <= 0.5, "accuracy {}", out.report.accuracy);
}
