mod common;

use std::path::Path;

use carapace::eval::{
    average_accuracy, build_report, make_folds, random_guess_baseline, score_queries,
    sweep_thresholds, ConfusionMatrix, DistanceMatrix, EvalError, FoldMode, QueryResult,
};
use carapace::imgproc::GrayImage;
use carapace::nndr::Outcome;
use carapace::pipeline::{evaluate_rois, DescriptorConfig, EvalSettings};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{class_label, noise_image};

fn load_reference_confusion() -> ConfusionMatrix {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference_confusion.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.get(17), Some("MANY"));
    let mut classes = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.unwrap();
        classes.push(record[0].to_string());
        rows.push(
            record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().unwrap())
                .collect(),
        );
    }
    ConfusionMatrix::from_proportions(classes, rows).unwrap()
}

#[test]
fn reference_confusion_average_accuracy() {
    let cm = load_reference_confusion();
    assert_eq!(cm.n_classes(), 16);
    for (i, s) in cm.row_sums().into_iter().enumerate() {
        assert!((s - 1.0).abs() <= 1e-9, "row {i} sums to {s}");
    }
    let acc = average_accuracy(&cm).unwrap();
    assert!((acc - 0.655).abs() <= 0.0005, "{acc}");
    assert_eq!(random_guess_baseline(16).unwrap(), 0.0625);
}

/// Points on a line; class `i % classes`; distances are absolute differences.
fn scalar_problem(
    seed: u64,
    n: usize,
    classes: usize,
) -> (Vec<String>, Vec<String>, DistanceMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
    let ids = (0..n).map(|i| format!("q{i:03}")).collect();
    let labels = (0..n).map(|i| class_label(i % classes)).collect();
    let m =
        DistanceMatrix::from_fn(n, |q, g| Ok::<f64, EvalError>((pos[q] - pos[g]).abs())).unwrap();
    (ids, labels, m)
}

fn loo_queries(seed: u64, n: usize, classes: usize) -> Vec<QueryResult> {
    let (ids, labels, m) = scalar_problem(seed, n, classes);
    let plan = make_folds(n, FoldMode::LeaveOneOut, 0).unwrap();
    score_queries(&plan, &ids, &labels, &m).unwrap()
}

#[test]
fn threshold_zero_accepts_nothing_without_duplicates() {
    let queries = loo_queries(1, 40, 5);
    let sweep = sweep_thresholds(&queries, &[0.0]).unwrap();
    let c = sweep[0].counts;
    assert_eq!((c.tp, c.fp), (0, 0));
    assert_eq!((sweep[0].rates.tpr, sweep[0].rates.fpr), (0.0, 0.0));
}

#[test]
fn threshold_one_accepts_every_nearest_neighbour() {
    let (ids, labels, m) = scalar_problem(2, 50, 4);
    let plan = make_folds(50, FoldMode::LeaveOneOut, 0).unwrap();
    let queries = score_queries(&plan, &ids, &labels, &m).unwrap();
    let mut same = 0;
    for q in 0..50 {
        let nn = (0..50)
            .filter(|&g| g != q)
            .min_by(|&a, &b| m.get(q, a).total_cmp(&m.get(q, b)))
            .unwrap();
        same += u64::from(labels[nn] == labels[q]);
    }
    let c = sweep_thresholds(&queries, &[1.0]).unwrap()[0].counts;
    assert_eq!(c.tp, same);
    assert_eq!(c.fp, 50 - same);
    assert_eq!((c.tn, c.fn_), (0, 0));
}

#[test]
fn duplicate_images_are_always_identified() {
    let a = noise_image(96, 128, 1);
    let b = noise_image(96, 128, 2);
    let rois = vec![a.clone(), a, b.clone(), b];
    let labels: Vec<String> = ["A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
    let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
    for t in [0.0, 0.5, 0.9, 1.0] {
        let settings = EvalSettings {
            operating_threshold: t,
            ..EvalSettings::default()
        };
        let r = evaluate_rois(
            &ids,
            &labels,
            &rois,
            &DescriptorConfig::default(),
            &settings,
        )
        .unwrap();
        assert_eq!(r.macro_accuracy, Some(1.0));
        assert_eq!(r.micro_accuracy, Some(1.0));
        assert!(r.decisions.iter().all(|d| d.beta == 0.0));
    }
}

#[test]
fn single_sample_class_is_flagged() {
    let (ids, mut labels, m) = scalar_problem(3, 10, 3);
    labels[9] = "loner".into();
    let plan = make_folds(10, FoldMode::LeaveOneOut, 0).unwrap();
    let queries = score_queries(&plan, &ids, &labels, &m).unwrap();
    let mut classes: Vec<String> = labels.clone();
    classes.sort();
    classes.dedup();
    let report = build_report(&queries, &classes, &[0.5, 1.0], 0.9).unwrap();
    assert_eq!(report.unmatched_class_queries, vec![ids[9].clone()]);
    let o = carapace::nndr::outcome_of(&queries[9].score, "loner", 1.0);
    assert!(matches!(o, Outcome::FalsePositive | Outcome::FalseNegative));
}

fn report_json(rois: &[GrayImage], labels: &[String], settings: &EvalSettings) -> String {
    let ids: Vec<String> = (0..rois.len()).map(|i| format!("s{i:02}")).collect();
    let r = evaluate_rois(&ids, labels, rois, &DescriptorConfig::default(), settings).unwrap();
    serde_json::to_string(&r).unwrap()
}

#[test]
fn evaluation_is_deterministic_across_thread_counts() {
    let rois: Vec<GrayImage> = (0..12).map(|s| noise_image(96, 128, s)).collect();
    let labels: Vec<String> = (0..12).map(|i| class_label(i % 4)).collect();
    let settings = EvalSettings {
        fold_mode: FoldMode::KFold(3),
        seed: 17,
        ..EvalSettings::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| report_json(&rois, &labels, &settings))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, report_json(&rois, &labels, &settings));
}

proptest! {
    #[test]
    fn folds_partition_samples(n in 2usize..80, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        for mode in [FoldMode::LeaveOneOut, FoldMode::KFold(k)] {
            let plan = make_folds(n, mode, seed).unwrap();
            let mut seen = vec![0usize; n];
            for f in &plan.folds {
                prop_assert!(f.test.iter().all(|t| !f.train.contains(t)));
                prop_assert_eq!(f.test.len() + f.train.len(), n);
                for &t in &f.test {
                    seen[t] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            if let FoldMode::KFold(k) = mode {
                let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
                prop_assert_eq!(sizes.len(), k);
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
            prop_assert_eq!(&plan, &make_folds(n, mode, seed).unwrap());
        }
    }

    #[test]
    fn sweep_is_monotone(seed in any::<u64>(), n in 3usize..40, classes in 1usize..6) {
        let queries = loo_queries(seed, n, classes);
        let grid: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
        let sweep = sweep_thresholds(&queries, &grid).unwrap();
        for p in &sweep {
            prop_assert_eq!(p.counts.total(), n as u64);
            prop_assert!((0.0..=1.0).contains(&p.rates.tpr));
            prop_assert!((0.0..=1.0).contains(&p.rates.fpr));
        }
        for w in sweep.windows(2) {
            prop_assert!(w[1].counts.tp + w[1].counts.fp >= w[0].counts.tp + w[0].counts.fp);
            prop_assert!(w[1].counts.tn + w[1].counts.fn_ <= w[0].counts.tn + w[0].counts.fn_);
        }
        for q in &queries {
            prop_assert!((0.0..=1.0).contains(&q.score.beta));
        }
    }

    #[test]
    fn confusion_rows_are_distributions(seed in any::<u64>(), n in 4usize..40, classes in 2usize..6, t in 0.0f64..=1.0) {
        prop_assume!(n >= classes);
        let queries = loo_queries(seed, n, classes);
        let names: Vec<String> = (0..classes).map(class_label).collect();
        let report = build_report(&queries, &names, &[0.0, 1.0], t).unwrap();
        for s in report.confusion.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
        prop_assert!((0.0..=1.0).contains(&report.roc_auc));
        let acc = report.macro_accuracy.unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }
}
