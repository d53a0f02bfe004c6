use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skepxel::arrangement::{set_metric, Arrangement, ArrangementSet};
use skepxel::codec::{build_frame_tensor, build_location_image, encode_raw, encode_window, plan_windows, ImageKind};
use skepxel::normalize::{normalize_pose, scale_channels, unscale_channels};
use skepxel::recognizer::{ClassifierModel, ClassifierSpec, EvalReport};
use skepxel::skeleton::{SkeletonFrame, SkeletonLayout, SkeletonSequence};

fn coord() -> impl Strategy<Value = f64> {
    -5.0f64..5.0
}

/// (h, w, frames of h*w joints)
fn sequence(max_frames: usize) -> impl Strategy<Value = (usize, usize, SkeletonSequence)> {
    (1usize..=4, 4usize..=5, 1..=max_frames).prop_flat_map(|(h, w, frames)| {
        prop::collection::vec(prop::collection::vec([coord(), coord(), coord()], h * w), frames).prop_map(
            move |frames| {
                let layout = SkeletonLayout::generic(h * w).unwrap();
                let frames = frames.into_iter().map(|f| SkeletonFrame::new(f).unwrap()).collect();
                (h, w, SkeletonSequence::new(layout, frames, 30.0, None, "p").unwrap())
            },
        )
    })
}

fn arrangement_set(h: usize, w: usize, m: usize, seed: u64) -> ArrangementSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = (0..m).map(|_| Arrangement::random(h, w, &mut rng)).collect();
    ArrangementSet::new(members, -1.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn location_pixels_follow_the_arrangement(
        (h, w, seq) in sequence(20),
        m in 1usize..4,
        n in 2usize..8,
        stride in 1usize..5,
        seed: u64,
    ) {
        let set = arrangement_set(h, w, m, seed);
        let plan = plan_windows(seq.len(), n, stride).unwrap();
        for window in &plan.windows {
            let img = build_location_image(&seq, &set, window).unwrap();
            prop_assert_eq!((img.height(), img.width(), img.channels()), (m * h, n * w, 3));
            for (f, &pos) in window.positions.iter().enumerate() {
                if pos.fract() != 0.0 {
                    continue;
                }
                let frame = seq.frame(pos as usize);
                for (b, member) in set.members().iter().enumerate() {
                    for r in 0..h {
                        for c in 0..w {
                            for ch in 0..3 {
                                prop_assert_eq!(
                                    img.get(b * h + r, f * w + c, ch),
                                    frame.joint(member.at(r, c))[ch] as f32
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frame_tensor_stacks_members((h, w, seq) in sequence(3), m in 1usize..5, seed: u64) {
        let set = arrangement_set(h, w, m, seed);
        let t = build_frame_tensor(seq.frame(0), &set).unwrap();
        prop_assert_eq!((t.height(), t.width()), (m * h, w));
        for (b, member) in set.members().iter().enumerate() {
            for r in 0..h {
                for c in 0..w {
                    prop_assert_eq!(t.get(b * h + r, c), seq.frame(0).joint(member.at(r, c)));
                }
            }
        }
    }

    #[test]
    fn windows_cover_the_sequence(len in 1usize..300, n in 2usize..60, stride in 1usize..60) {
        let plan = plan_windows(len, n, stride).unwrap();
        prop_assert!(!plan.is_empty());
        let mut last_start = -1.0;
        for w in &plan.windows {
            prop_assert_eq!(w.n(), n);
            prop_assert!(w.start > last_start);
            last_start = w.start;
            prop_assert!(w.positions.iter().all(|&p| p >= 0.0 && p <= (len - 1) as f64));
        }
        let end = plan.windows.last().unwrap().positions.last().copied().unwrap();
        prop_assert_eq!(end, (len - 1) as f64);
        if len >= n {
            let expected = (len - n) / stride + 1 + usize::from((len - n) % stride != 0);
            prop_assert_eq!(plan.len(), expected);
        }
    }

    #[test]
    fn static_sequences_have_zero_velocity(
        (h, w, seq) in sequence(1),
        frames in 1usize..30,
        n in 2usize..10,
        seed: u64,
    ) {
        let fixed = seq.with_frames(vec![seq.frame(0).clone(); frames]).unwrap();
        let set = arrangement_set(h, w, 2, seed);
        for window in &plan_windows(frames, n, 3).unwrap().windows {
            let img = encode_window(&fixed, &set, window, ImageKind::LocationVelocity).unwrap();
            prop_assert!(img.channel_slice(3..6).iter().all(|&v| v == 0.0));
            let loc = build_location_image(&fixed, &set, window).unwrap();
            prop_assert_eq!(img.channel_slice(0..3), loc.data().to_vec());
        }
    }

    #[test]
    fn encoding_is_deterministic((h, w, seq) in sequence(12), seed: u64) {
        let set = arrangement_set(h, w, 3, seed);
        let plan = plan_windows(seq.len(), 4, 2).unwrap();
        for window in &plan.windows {
            let a = encode_window(&seq, &set, window, ImageKind::LocationVelocity).unwrap();
            let b = encode_window(&seq, &set, window, ImageKind::LocationVelocity).unwrap();
            prop_assert_eq!(encode_raw(&a), encode_raw(&b));
        }
    }

    #[test]
    fn normalization_postconditions((_, _, seq) in sequence(10), shift in [coord(), coord(), coord()]) {
        let out = normalize_pose(&seq);
        let layout = seq.layout();
        for (f, orig) in out.frames().iter().zip(seq.frames()) {
            prop_assert_eq!(f.joint(layout.hip), [0.0; 3]);
            let l = orig.joint(layout.left_shoulder);
            let r = orig.joint(layout.right_shoulder);
            let v = [r[0] - l[0], r[1] - l[1], r[2] - l[2]];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > 1e-6 {
                let nl = f.joint(layout.left_shoulder);
                let nr = f.joint(layout.right_shoulder);
                prop_assert!(((nr[1] - nl[1]).abs() / norm) < 1e-9);
                prop_assert!(((nr[2] - nl[2]).abs() / norm) < 1e-9);
                prop_assert!(nr[0] - nl[0] > 0.0);
            }
            // rotation preserves distances to the hip
            let hip = orig.joint(layout.hip);
            for (p, q) in orig.joints().iter().zip(f.joints()) {
                let d0 = ((p[0] - hip[0]).powi(2) + (p[1] - hip[1]).powi(2) + (p[2] - hip[2]).powi(2)).sqrt();
                let d1 = (q[0].powi(2) + q[1].powi(2) + q[2].powi(2)).sqrt();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
        let moved = seq.with_frames(
            seq.frames().iter().map(|f| SkeletonFrame::new(
                f.joints().iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect()
            ).unwrap()).collect()
        ).unwrap();
        for (a, b) in normalize_pose(&moved).frames().iter().zip(out.frames()) {
            for (p, q) in a.joints().iter().zip(b.joints()) {
                for k in 0..3 {
                    prop_assert!((p[k] - q[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn quantization_error_is_bounded(values in prop::collection::vec(-100.0f32..100.0, 3..300)) {
        let len = values.len() / 3 * 3;
        let data = &values[..len];
        let scaled = scale_channels(data, 3).unwrap();
        let back = unscale_channels(&scaled.pixels, &scaled.scales);
        for (i, (&orig, &rec)) in data.iter().zip(&back).enumerate() {
            let s = scaled.scales[i % 3];
            let bound = if s.is_degenerate() { 0.0 } else { (s.max - s.min) / 510.0 };
            prop_assert!((f64::from(orig) - rec).abs() <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn metric_ignores_member_order(seed: u64, m in 2usize..6) {
        let set = arrangement_set(3, 3, m, seed);
        let mut members = set.members().to_vec();
        let forward = set_metric(&members).unwrap();
        members.reverse();
        prop_assert_eq!(set_metric(&members).unwrap(), forward);
        prop_assert!(forward >= 0.0);
    }

    #[test]
    fn knn_ignores_descriptor_scale(
        points in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 3..12),
        query in prop::collection::vec(-1.0f64..1.0, 4),
        s in 0.01f64..100.0,
        k in prop::sample::select(vec![1usize, 3]),
    ) {
        let train: Vec<(Vec<f64>, String)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), format!("c{}", i % 3)))
            .collect();
        let scaled_train: Vec<(Vec<f64>, String)> =
            train.iter().map(|(p, l)| (p.iter().map(|v| v * s).collect(), l.clone())).collect();
        let a = ClassifierModel::train(ClassifierSpec::Knn { k }, &train).unwrap();
        let b = ClassifierModel::train(ClassifierSpec::Knn { k }, &scaled_train).unwrap();
        let scaled_query: Vec<f64> = query.iter().map(|v| v * s).collect();
        let pa = a.predict(&query).unwrap();
        prop_assert_eq!(&pa, &a.predict(&scaled_query).unwrap());
        prop_assert_eq!(&pa, &b.predict(&query).unwrap());
    }

    #[test]
    fn confusion_rows_count_the_test_labels(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let names = ["a", "b", "c", "d"];
        let pairs: Vec<(String, String)> =
            pairs.iter().map(|&(t, p)| (names[t].to_string(), names[p].to_string())).collect();
        let report = EvalReport::from_predictions(&["a".to_string(), "b".to_string()], &pairs).unwrap();
        for (i, class) in report.classes.iter().enumerate() {
            let count = pairs.iter().filter(|(t, _)| t == class).count();
            prop_assert_eq!(report.confusion[i].iter().sum::<usize>(), count);
        }
        let trace: usize = (0..report.classes.len()).map(|i| report.confusion[i][i]).sum();
        prop_assert_eq!(report.accuracy, trace as f64 / pairs.len() as f64);
    }
}
