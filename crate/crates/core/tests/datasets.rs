use proptest::prelude::*;
use punn::datasets::{make_synthetic, read_csv, standardize, stratified_split_indices, LabelColumn};
use punn::{Data, StandardizationStats, SyntheticKind};

const KINDS: [SyntheticKind; 5] = [
    SyntheticKind::Moons,
    SyntheticKind::Circles,
    SyntheticKind::Xor,
    SyntheticKind::Helix,
    SyntheticKind::Rings,
];

proptest! {
    #[test]
    fn split_is_a_disjoint_cover(
        labels in prop::collection::vec(0usize..4, 8..200),
        fraction in 0.0..0.9f64,
        seed in 0u64..1000,
    ) {
        let classes = 4;
        let counts: Vec<usize> = (0..classes).map(|c| labels.iter().filter(|&&y| y == c).count()).collect();
        prop_assume!(counts.iter().all(|&c| c != 1));
        let s = stratified_split_indices(&labels, classes, fraction, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let target = (fraction * labels.len() as f64).round() as i64;
        // every present class keeps one training sample, which can cap the test set
        let present = counts.iter().filter(|&&c| c > 0).count() as i64;
        let target = target.min(labels.len() as i64 - present);
        prop_assert!((s.test.len() as i64 - target).abs() <= 1, "{} vs {target}", s.test.len());
        for c in 0..classes {
            if counts[c] > 0 {
                prop_assert!(s.train.iter().any(|&i| labels[i] == c));
            }
        }
        prop_assert_eq!(stratified_split_indices(&labels, classes, fraction, seed).unwrap(), s);
    }

    #[test]
    fn generators_are_deterministic(kind in prop::sample::select(KINDS.to_vec()), n in 10usize..200, seed in 0u64..100) {
        let a: Data = make_synthetic(kind, n, 0.1, seed).unwrap();
        let b: Data = make_synthetic(kind, n, 0.1, seed).unwrap();
        prop_assert_eq!(&a.features, &b.features);
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(a.len(), n);
        prop_assert!(a.labels.iter().all(|&y| y < kind.classes()));
    }

    #[test]
    fn standardization_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 3), 2..40)) {
        let labels = vec![0; rows.len()];
        let ds = Data::new(punn::Matrix::from_rows(&rows).unwrap(), labels, 1).unwrap();
        let (once, _, _) = standardize(&ds, &[]).unwrap();
        let (twice, _, stats) = standardize(&once, &[]).unwrap();
        for (a, b) in once.features.as_slice().iter().zip(twice.features.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        for (m, s) in stats.mean.iter().zip(&stats.std) {
            prop_assert!(m.abs() <= 1e-9);
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn generators_balance_classes() {
    for kind in KINDS {
        let ds: Data = make_synthetic(kind, 600, 0.1, 1).unwrap();
        let counts = ds.class_counts();
        assert!(counts.iter().all(|&c| c == 600 / kind.classes()), "{kind:?} {counts:?}");
    }
}

#[test]
fn constant_features_pass_through() {
    let x = punn::Matrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0]]).unwrap();
    let stats = StandardizationStats::fit(&x).unwrap();
    assert_eq!(stats.mean, vec![0.0, 2.0]);
    assert_eq!(stats.std, vec![1.0, 1.0]);
}

#[test]
fn csv_labels_are_encoded_by_first_appearance() {
    let text = "a,b,class\n1,2,setosa\n3,4,virginica\n5,6,setosa\n";
    let ds: Data = read_csv(text.as_bytes(), &LabelColumn::default(), true).unwrap();
    assert_eq!(ds.labels, vec![0, 1, 0]);
    assert_eq!(ds.class_names.as_deref(), Some(&["setosa".to_string(), "virginica".to_string()][..]));
    assert_eq!(ds.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
}

#[test]
fn csv_errors_name_row_and_column() {
    let text = "a,b,class\n1,2,x\n3,oops,y\n";
    let err = read_csv::<f64, _>(text.as_bytes(), &LabelColumn::default(), true).unwrap_err().to_string();
    assert!(err.contains("row 3") && err.contains("column 2"), "{err}");
}

#[test]
fn shipped_csv_files_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    for (name, n, d, c) in [("iris", 150, 4, 3), ("wine", 178, 13, 3), ("breast_cancer", 569, 30, 2), ("digits", 1797, 64, 10)] {
        let ds: Data = punn::datasets::load_csv(&dir.join(format!("{name}.csv")), &LabelColumn::default(), true).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes), (n, d, c), "{name}");
    }
}
