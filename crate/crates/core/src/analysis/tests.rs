use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::*;
use crate::data::{generate_synthetic, Label, SyntheticSpec};
use crate::model::ModelConfig;
use crate::tensor::Tensor;

fn record(word: &str, utt: &str, label: f64, shifted: Vec<f64>) -> ShiftRecord {
    let dim = shifted.len();
    ShiftRecord {
        word: word.into(),
        utterance_id: utt.into(),
        position: 0,
        label: Label::Regression(label),
        embedding: Tensor::zeros(&[dim]),
        shift: Tensor::zeros(&[dim]),
        alpha: 0.5,
        shifted: Tensor::vector(shifted),
        gate_visual: 0.5,
        gate_acoustic: 0.5,
    }
}

fn small_data() -> crate::data::SyntheticSplits {
    generate_synthetic(&SyntheticSpec {
        train_size: 40,
        valid_size: 1,
        test_size: 1,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn model(ablation: Ablation, beta: f64) -> RavenModel {
    RavenModel::new(ModelConfig {
        visual_hidden: 4,
        acoustic_hidden: 4,
        utterance_hidden: 5,
        ablation,
        beta,
        seed: 9,
        ..ModelConfig::new(12, 6, 8)
    })
    .unwrap()
}

#[test]
fn groups_count_occurrences() {
    let recs = vec![
        record("a", "u1", 1.0, vec![0.0, 1.0]),
        record("b", "u1", 1.0, vec![1.0, 1.0]),
        record("a", "u2", -1.0, vec![0.0, 2.0]),
        record("a", "u3", 0.0, vec![0.0, 3.0]),
    ];
    let c = ShiftCorpus::from_records(recs);
    assert_eq!(c.groups["a"], vec![0, 2, 3]);
    assert_eq!(c.groups["b"], vec![1]);
    assert_eq!(c.polarity(3), None);
    assert_eq!(c.polarity(2), Some(Polarity::Negative));
}

#[test]
fn unsupported_ablations() {
    let data = small_data();
    for ab in [Ablation::NoShift, Ablation::NoSubShift] {
        assert!(matches!(
            extract_shifts(&model(ab, 1.0), &data.train),
            Err(AnalysisError::UnsupportedAblation(_))
        ));
    }
    let corpus = extract_shifts(&model(Ablation::NoSub, 1.0), &data.train).unwrap();
    let words: usize = data.train.iter().map(|u| u.len()).sum();
    assert_eq!(corpus.records.len(), words);
}

#[test]
fn zero_beta_means_no_shift_and_all_neutral() {
    // Fixed per-word embeddings, so only the shift could separate polarities.
    let data = generate_synthetic(&SyntheticSpec {
        train_size: 40,
        valid_size: 1,
        test_size: 1,
        intensity_jitter: 0.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let m = model(Ablation::Full, 0.0);
    let corpus = extract_shifts(&m, &data.train).unwrap();
    for r in &corpus.records {
        assert_eq!(r.alpha, 0.0);
        assert_eq!(r.shifted, r.embedding);
    }
    let rule = PatternRule { tau: 0.5, min_count: 1 };
    let a = analyze_corpus(&corpus, &rule).unwrap();
    for w in &a.words {
        assert!(
            matches!(w.pattern, ShiftPattern::Neutral | ShiftPattern::InsufficientData),
            "{} {:?}",
            w.word,
            w.pattern
        );
    }
    assert!(a.words.iter().any(|w| w.pattern == ShiftPattern::Neutral));
}

#[test]
fn identical_points_are_neutral() {
    let pts = vec![[1.0, 2.0]; 12];
    let pols: Vec<_> = (0..12)
        .map(|i| Some(if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative }))
        .collect();
    let s = summarize_word("w", &pts, &pols, &PatternRule::default());
    assert_eq!(s.pattern, ShiftPattern::Neutral);
    assert_eq!(s.positive.centroid, s.negative.centroid);
    assert_eq!(s.spread, Some(0.0));
}

fn cloud(rng: &mut ChaCha8Rng, center: [f64; 2], sd: f64, n: usize) -> Vec<[f64; 2]> {
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| [center[0] + d.sample(rng), center[1] + d.sample(rng)]).collect()
}

fn labelled(pos: Vec<[f64; 2]>, neg: Vec<[f64; 2]>) -> (Vec<[f64; 2]>, Vec<Option<Polarity>>) {
    let pols = std::iter::repeat_n(Some(Polarity::Positive), pos.len())
        .chain(std::iter::repeat_n(Some(Polarity::Negative), neg.len()))
        .collect();
    (pos.into_iter().chain(neg).collect(), pols)
}

#[test]
fn planted_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rule = PatternRule::default();
    // Mostly positive occurrences, a separated negative cluster.
    let (p, l) = labelled(cloud(&mut rng, [0.0, 0.0], 0.5, 170), cloud(&mut rng, [2.0, 0.0], 0.5, 30));
    let s = summarize_word("good", &p, &l, &rule);
    assert_eq!(s.pattern, ShiftPattern::InherentPolarity);
    assert!(s.offset_negative.unwrap() > s.offset_positive.unwrap());

    let (p, l) = labelled(cloud(&mut rng, [1.0, 1.0], 0.5, 100), cloud(&mut rng, [-1.0, -1.0], 0.5, 100));
    let s = summarize_word("movie", &p, &l, &rule);
    assert_eq!(s.pattern, ShiftPattern::Polarizable);

    let (p, l) = labelled(cloud(&mut rng, [3.0, 0.0], 0.5, 100), cloud(&mut rng, [3.0, 0.0], 0.5, 100));
    assert_eq!(summarize_word("the", &p, &l, &rule).pattern, ShiftPattern::Neutral);

    let (p, l) = labelled(cloud(&mut rng, [0.0, 0.0], 0.5, 100), cloud(&mut rng, [0.0, 0.0], 0.5, 4));
    assert_eq!(summarize_word("rare", &p, &l, &rule).pattern, ShiftPattern::InsufficientData);
}

#[test]
fn zero_labels_do_not_enter_buckets() {
    let pts = vec![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]];
    let pols = vec![Some(Polarity::Positive), Some(Polarity::Negative), None];
    let s = summarize_word("w", &pts, &pols, &PatternRule { tau: 0.5, min_count: 1 });
    assert_eq!(s.excluded, 1);
    assert_eq!(s.positive.count, 1);
    assert_eq!(s.centroid, [2.0, 5.0 / 3.0]);
}

#[test]
fn tags_are_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..200 {
        let n = rng.gen_range(6..40);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let pols: Vec<_> = (0..n)
            .map(|_| match rng.gen_range(0..5) {
                0 => None,
                1 | 2 => Some(Polarity::Positive),
                _ => Some(Polarity::Negative),
            })
            .collect();
        let rule = PatternRule { tau: 0.5, min_count: 2 };
        let base = summarize_word("w", &pts, &pols, &rule).pattern;
        // Powers of two keep the arithmetic exact.
        for c in [0.25, 4.0, 1024.0] {
            let scaled: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] * c, p[1] * c]).collect();
            assert_eq!(summarize_word("w", &scaled, &pols, &rule).pattern, base, "trial {trial}");
        }
    }
}

#[test]
fn covariances_are_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let sd = rng.gen_range(0.01..3.0);
        let n = rng.gen_range(2..10);
        let pts = cloud(&mut rng, [0.0, 0.0], sd, n);
        let c = covariance2(&pts, mean2(&pts));
        assert_eq!(c[1], c[2]);
        assert!(c[0] >= 0.0 && c[3] >= 0.0);
        assert!(c[0] * c[3] - c[1] * c[2] >= -1e-12);
    }
}

#[test]
fn pca_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        // Anisotropic 5-D data so the top two directions are well defined.
        let scales = [3.0, 2.0, 1.0, 0.5, 0.25];
        let mix: Vec<f64> = (0..25).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let z: Vec<f64> = scales
                    .iter()
                    .map(|s| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        s * g
                    })
                    .collect();
                (0..5).map(|i| (0..5).map(|j| mix[i * 5 + j] * z[j]).sum()).collect()
            })
            .collect();
        let pca = pca_fit(&pts, 2).unwrap();

        let n = pts.len();
        let mean: Vec<f64> = (0..5).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let x = DMatrix::from_fn(n, 5, |i, j| pts[i][j] - mean[j]);
        let cov = (x.transpose() * &x) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let v = DMatrix::from_fn(5, 2, |i, j| eig.eigenvectors[(i, order[j])]);

        // sin of the largest principal angle between the two subspaces.
        let u = DMatrix::from_fn(5, 2, |i, j| pca.components[j][i]);
        let residual = &u - &v * (v.transpose() * &u);
        let sin_max = residual.singular_values().max();
        assert!(sin_max.asin() < 1e-6, "angle {}", sin_max.asin());
        for j in 0..2 {
            let rel = (pca.explained_variance[j] - eig.eigenvalues[order[j]]).abs() / eig.eigenvalues[order[j]];
            assert!(rel < 1e-9);
        }
    }
}

#[test]
fn export_files() {
    let dir = tempfile::tempdir().unwrap();
    let recs = vec![
        record("a", "u1", 1.0, vec![0.0, 1.0, 0.5]),
        record("a", "u2", -1.0, vec![2.0, 0.0, 0.25]),
        record("b", "u3", 1.0, vec![1.0, 1.0, 1.0]),
    ];
    let analysis = analyze_corpus(&ShiftCorpus::from_records(recs), &PatternRule::default()).unwrap();
    let (summary, points) = export_analysis(&analysis, dir.path()).unwrap();
    let csv_text = std::fs::read_to_string(&points).unwrap();
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines[0], "word,x,y,polarity,alpha,utterance_id");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines.iter().filter(|l| l.starts_with("a,")).count(), 2);

    let first = (std::fs::read(&summary).unwrap(), std::fs::read(&points).unwrap());
    export_analysis(&analysis, dir.path()).unwrap();
    assert_eq!(first, (std::fs::read(&summary).unwrap(), std::fs::read(&points).unwrap()));

    // Recompute centroids from the CSV alone.
    let mut reader = csv::Reader::from_path(&points).unwrap();
    let rows: Vec<PointRow> = reader.deserialize().map(Result::unwrap).collect();
    for w in &analysis.words {
        let mine: Vec<&PointRow> = rows.iter().filter(|r| r.word == w.word).collect();
        let cx = mine.iter().map(|r| r.x).sum::<f64>() / mine.len() as f64;
        let cy = mine.iter().map(|r| r.y).sum::<f64>() / mine.len() as f64;
        assert!((cx - w.centroid[0]).abs() < 1e-9 && (cy - w.centroid[1]).abs() < 1e-9);
    }
    let json: serde_json::Value = serde_json::from_slice(&first.0).unwrap();
    assert_eq!(json["words"][0]["word"], "a");
}

#[test]
fn empty_export_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let analysis = ShiftAnalysis {
        pca: Pca {
            mean: vec![],
            components: vec![],
            explained_variance: vec![],
        },
        rule: PatternRule::default(),
        words: vec![],
        points: vec![],
    };
    assert!(matches!(export_analysis(&analysis, dir.path()), Err(AnalysisError::Empty)));
}
