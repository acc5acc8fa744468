use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprite_gan::dataset::{
    build_pairs, generate_synthetic_dataset, split, DatasetSplit, PairedExample, PartLibrary, Pose, Sprite,
    SplitGranularity,
};
use sprite_gan::evaluation::*;
use sprite_gan::Error;
use sprite_nn::{Shape, Tensor};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_features(n: usize, d: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|j| gaussian(&mut rng) * (1.0 + j as f64 * 0.3) + shift).collect())
        .collect()
}

/// Textbook two-pass sample mean and covariance, element by element.
fn naive_stats(x: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| x.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect();
    (mean, cov)
}

fn stats_1d(mean: f64, var: f64) -> FeatureStats {
    FeatureStats {
        mean: DVector::from_element(1, mean),
        covariance: DMatrix::from_element(1, 1, var),
        n: 2,
    }
}

fn synthetic_split(n: usize) -> DatasetSplit {
    let records = generate_synthetic_dataset(5, n, &PartLibrary::default()).unwrap();
    let pairs = build_pairs(&records, Pose::Front, Pose::Right).unwrap().pairs;
    split(pairs, 0.85, 3, SplitGranularity::Character).unwrap()
}

#[test]
fn identical_stats_have_zero_distance() {
    for seed in 0..5 {
        let s = gaussian_stats(&random_features(40, 8, 0.0, seed)).unwrap();
        assert!(frechet_distance(&s, &s).unwrap().abs() < 1e-6);
    }
}

#[test]
fn distance_is_symmetric() {
    for seed in 0..5 {
        let a = gaussian_stats(&random_features(60, 6, 0.0, seed)).unwrap();
        let b = gaussian_stats(&random_features(60, 6, 0.7, seed + 100)).unwrap();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!(ab > 0.0);
        assert!((ab - ba).abs() < 1e-6, "{ab} vs {ba}");
    }
}

#[test]
fn one_dimensional_closed_forms() {
    // (mu1 - mu2)^2 + (sigma1 - sigma2)^2
    let cases: [(f64, f64, f64, f64); 4] = [(0.0, 1.0, 1.0, 1.0), (0.0, 1.0, 0.0, 4.0), (2.0, 9.0, -1.0, 0.25), (0.5, 0.0, 0.5, 16.0)];
    for (m1, v1, m2, v2) in cases {
        let want = (m1 - m2) * (m1 - m2) + (v1.sqrt() - v2.sqrt()).powi(2);
        let got = frechet_distance(&stats_1d(m1, v1), &stats_1d(m2, v2)).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn diagonal_covariances_match_per_axis_sum() {
    // Independent axes decompose into a sum of 1-D distances.
    let a = FeatureStats {
        mean: DVector::from_vec(vec![0.0, 1.0, 2.0]),
        covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 9.0])),
        n: 10,
    };
    let b = FeatureStats {
        mean: DVector::from_vec(vec![1.0, 1.0, 0.0]),
        covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 9.0])),
        n: 10,
    };
    // means: 1 + 0 + 4; standard deviations: 1 + 1 + 0
    let want = 7.0;
    assert!((frechet_distance(&a, &b).unwrap() - want).abs() < 1e-9);
}

#[test]
fn stats_match_two_pass_reference() {
    for seed in 0..8 {
        let x = random_features(25 + seed as usize, 7, 3.0, seed);
        let s = gaussian_stats(&x).unwrap();
        let (mean, cov) = naive_stats(&x);
        for j in 0..7 {
            assert!((s.mean[j] - mean[j]).abs() < 1e-9);
            for k in 0..7 {
                assert!((s.covariance[(j, k)] - cov[j][k]).abs() < 1e-9);
                assert_eq!(s.covariance[(j, k)], s.covariance[(k, j)]);
            }
        }
    }
}

#[test]
fn stats_reject_single_sample_and_ragged_rows() {
    assert!(matches!(gaussian_stats(&[vec![1.0, 2.0]]), Err(Error::Invalid(_))));
    assert!(gaussian_stats(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    let a = stats_1d(0.0, 1.0);
    let b = gaussian_stats(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    assert!(frechet_distance(&a, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_invariant_under_row_permutation(seed in 0u64..1000, n in 3usize..20) {
        let x = random_features(n, 4, 0.0, seed);
        let mut y = x.clone();
        y.reverse();
        y.rotate_left(seed as usize % n);
        let a = gaussian_stats(&x).unwrap();
        let b = gaussian_stats(&y).unwrap();
        for (p, q) in a.mean.iter().zip(b.mean.iter()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in a.covariance.iter().zip(b.covariance.iter()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_nonnegative_and_self_zero(seed in 0u64..1000, shift in -2.0f64..2.0) {
        let a = gaussian_stats(&random_features(30, 5, 0.0, seed)).unwrap();
        let b = gaussian_stats(&random_features(30, 5, shift, seed ^ 0xabc)).unwrap();
        let d = frechet_distance(&a, &b).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
        prop_assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
    }
}

#[test]
fn oracle_generator_scores_zero() {
    let s = synthetic_split(24);
    let ex = RandomConvExtractor::new(0);
    let report = evaluate_with(&s, &ex, WHITE, 4, |p| Ok(p.target.pixels().clone())).unwrap();
    assert!(report.fid_train.abs() < 1e-6, "{}", report.fid_train);
    assert!(report.fid_test.abs() < 1e-6, "{}", report.fid_test);
    assert_eq!((report.n_train, report.n_test), (s.train.len(), s.test.len()));
    assert_eq!(report.extractor_hash, ex.weights_hash());
    assert_eq!(report.preprocessing.resize, "nearest");
}

#[test]
fn fid_grows_with_noise() {
    let s = synthetic_split(60);
    let ex = RandomConvExtractor::new(0);
    let truth: Vec<&Tensor> = s.train.iter().map(|p| p.target.pixels()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise: Vec<Vec<f64>> = truth.iter().map(|t| (0..t.len()).map(|_| gaussian(&mut rng)).collect()).collect();
    let mut last = 0.0;
    for sigma in [0.05, 0.1, 0.2] {
        let noisy: Vec<Tensor> = truth
            .iter()
            .zip(&noise)
            .map(|(t, n)| {
                let mut t = (*t).clone();
                for (v, z) in t.data_mut().iter_mut().zip(n) {
                    *v = (*v + (sigma * z) as f32).clamp(-1.0, 1.0);
                }
                t
            })
            .collect();
        let fid = fid_between(&noisy.iter().collect::<Vec<_>>(), &truth, &ex, WHITE).unwrap().distance;
        assert!(fid > last, "sigma {sigma}: {fid} not above {last}");
        last = fid;
    }
}

#[test]
fn tiny_split_is_rejected() {
    let mut s = synthetic_split(10);
    s.test.truncate(1);
    let ex = RandomConvExtractor::new(0);
    assert!(matches!(
        evaluate_with(&s, &ex, WHITE, 4, |p| Ok(p.target.pixels().clone())),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn untrained_generator_is_far_from_truth() {
    let s = synthetic_split(20);
    let g = sprite_gan::model::Generator::build(Default::default(), 1).unwrap();
    let ex = RandomConvExtractor::new(0);
    let report = evaluate_model(&g, &s, &ex, WHITE).unwrap();
    assert!(report.fid_test > 1.0 && report.fid_train > 1.0, "{report:?}");
}

#[test]
fn report_round_trips_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run/eval-100.json");
    let report = FidReport {
        fid_train: 1.5,
        fid_test: 2.5,
        n_train: 10,
        n_test: 2,
        extractor_id: "x".into(),
        extractor_hash: "00".into(),
        preprocessing: FidPreprocessing {
            background: WHITE,
            resize: "nearest".into(),
            size: 64,
        },
        jittered: false,
        step: Some(100),
    };
    write_report(&path, &report).unwrap();
    assert_eq!(read_report(&path).unwrap(), report);
    let leftovers: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn extractor_is_seeded_and_sized() {
    let a = RandomConvExtractor::new(3);
    let b = RandomConvExtractor::new(3);
    let c = RandomConvExtractor::new(4);
    assert_eq!(a.weights_hash(), b.weights_hash());
    assert_ne!(a.weights_hash(), c.weights_hash());
    assert_eq!(a.weights_hash().len(), 64);
    let img = image::RgbImage::from_fn(64, 64, |x, y| image::Rgb([x as u8 * 4, y as u8 * 4, 100]));
    let f = a.features(&img).unwrap();
    assert_eq!(f.len(), a.feature_dim());
    assert_eq!(f, b.features(&img).unwrap());
    assert!(a.features(&image::RgbImage::new(32, 32)).is_err());
}

fn sprite_from(f: impl FnMut(usize, usize, usize) -> f32, id: &str, frame: usize) -> Sprite {
    Sprite::new(Tensor::from_fn(Shape::new(4, 64, 64), f), Pose::Front, id, frame).unwrap()
}

fn pair_with_source(source: Sprite) -> PairedExample {
    let target = Sprite::new(source.pixels().clone(), Pose::Right, source.character_id.clone(), source.frame_index).unwrap();
    PairedExample::new(source, target).unwrap()
}

/// Independent argmin: collect all distances, sort, take the first.
fn brute_force(test: &Sprite, train: &[PairedExample]) -> (String, usize, f64) {
    let mut all: Vec<(f64, String, usize)> = train
        .iter()
        .map(|p| {
            let d = test
                .pixels()
                .data()
                .iter()
                .zip(p.source.pixels().data())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / test.pixels().len() as f64;
            (d, p.character_id.clone(), p.frame_index)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (&a.1, a.2).cmp(&(&b.1, b.2))));
    let (d, id, f) = all.swap_remove(0);
    (id, f, d)
}

#[test]
fn nearest_match_agrees_with_exhaustive_scan() {
    let s = synthetic_split(40);
    for t in &s.test {
        let (best, d) = nearest_training_match(&t.source, &s.train, MatchMetric::L1).unwrap();
        let (id, frame, bd) = brute_force(&t.source, &s.train);
        assert_eq!((&best.character_id, best.frame_index), (&id, frame));
        assert!((d - bd).abs() < 1e-9);
        for p in &s.train {
            assert!(d <= sprite_distance(t.source.pixels(), p.source.pixels(), MatchMetric::L1).unwrap());
        }
    }
}

#[test]
fn nearest_match_finds_itself_and_breaks_ties_by_id() {
    let s = synthetic_split(12);
    let probe = &s.train[3];
    let (best, d) = nearest_training_match(&probe.source, &s.train, MatchMetric::L1).unwrap();
    assert_eq!(d, 0.0);
    assert_eq!(best.character_id, probe.character_id);

    let blank = |id: &str| pair_with_source(sprite_from(|_, _, _| -1.0, id, 0));
    let train = vec![blank("b"), blank("a"), blank("c")];
    let (best, _) = nearest_training_match(&train[0].source, &train, MatchMetric::L1).unwrap();
    assert_eq!(best.character_id, "a");
    assert!(nearest_training_match(&train[0].source, &[], MatchMetric::L1).is_err());
}

fn in_square(y: usize, x: usize) -> bool {
    (16..48).contains(&y) && (16..48).contains(&x)
}

fn in_bar(y: usize, x: usize) -> bool {
    (8..56).contains(&y) && (28..36).contains(&x)
}

/// A solid shape on a transparent canvas.
fn shape(rgb: [f32; 3], inside: fn(usize, usize) -> bool) -> impl FnMut(usize, usize, usize) -> f32 {
    move |c, y, x| match (inside(y, x), c) {
        (true, 3) => 1.0,
        (true, c) => rgb[c],
        _ => -1.0,
    }
}

#[test]
fn palette_swap_outranks_unrelated_shape_under_alpha_weighting() {
    let probe = sprite_from(shape([1.0, -1.0, -1.0], in_square), "probe", 0);
    // Same silhouette, opposite palette.
    let swap = pair_with_source(sprite_from(shape([-1.0, 1.0, 1.0], in_square), "swap", 0));
    // Different silhouette, same palette.
    let other = pair_with_source(sprite_from(shape([1.0, -1.0, -1.0], in_bar), "other", 0));
    let train = vec![other, swap];
    let metric = MatchMetric::AlphaWeightedL1 { alpha_weight: 8.0 };
    let (best, _) = nearest_training_match(&probe, &train, metric).unwrap();
    assert_eq!(best.character_id, "swap");
}

#[test]
fn grid_layout_and_pixels() {
    let s = synthetic_split(6);
    let p = &s.train[0];
    let rows = vec![vec![p.source.pixels(), p.target.pixels(), p.target.pixels()]];
    let scale = 4;
    let img = render_grid(&rows, &["source", "target", "generated"], scale).unwrap();
    assert_eq!(img.dimensions(), (3 * 64 * scale, 64 * scale + LABEL_BAND));
    let src = sprite_gan::dataset::denormalize(p.source.pixels()).unwrap();
    for y in 0..64 * scale {
        for x in 0..64 * scale {
            assert_eq!(img.get_pixel(x, y + LABEL_BAND), src.get_pixel(x / scale, y / scale));
        }
    }
    assert_eq!(img, render_grid(&rows, &["source", "target", "generated"], scale).unwrap());
    assert!(render_grid(&[], &[], 4).is_err());
}
