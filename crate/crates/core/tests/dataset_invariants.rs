use std::fs;
use std::path::Path;

use selbench_core::baselines::threshold_train;
use selbench_core::dataset::{
    DatasetError, GeneratorConfig, MANIFEST_FILE, SplitSpec, benchmark_files, generate_suites, load_suite,
    split_suite, store_suite, suite_failure_rate, write_benchmark,
};
use selbench_core::fixtures::{fixture_suites, separable_suite};
use selbench_core::geometry::{curvature_profile, is_self_intersecting};
use selbench_core::model::{LabeledCase, Outcome, Point, TestSuite};
use selbench_core::protocol::InitializationItem;
use selbench_core::validate::validate_suite;

fn small() -> GeneratorConfig {
    GeneratorConfig { n_suites: 4, cases_per_suite: 60, seed: 3, ..Default::default() }
}

#[test]
fn split_of_973_is_778_195() {
    let cases =
        (0..973).map(|i| LabeledCase::new(format!("t{i}"), vec![Point::new(0.0, 0.0)], Outcome::Pass, 1.0)).collect();
    let suite = TestSuite::new("big", cases);
    let (init, eval) = split_suite(&suite, &SplitSpec::default()).unwrap();
    assert_eq!((init.len(), eval.len()), (778, 195));
    // Without a shuffle seed the stored order is kept.
    assert_eq!(init.cases[777].test_id(), "t777");
    assert_eq!(eval.cases[0].test_id(), "t778");
}

#[test]
fn shuffled_split_is_a_seeded_partition() {
    let suite = fixture_suites(8).pop().unwrap();
    let spec = SplitSpec { init_fraction: 0.8, shuffle_seed: Some(17) };
    let (a_init, a_eval) = split_suite(&suite, &spec).unwrap();
    let (b_init, b_eval) = split_suite(&suite, &spec).unwrap();
    assert_eq!((&a_init, &a_eval), (&b_init, &b_eval));
    let mut ids: Vec<&str> = a_init.ids().chain(a_eval.ids()).collect();
    ids.sort();
    let mut all: Vec<&str> = suite.ids().collect();
    all.sort();
    assert_eq!(ids, all);
    let unshuffled = split_suite(&suite, &SplitSpec::default()).unwrap().0;
    assert_ne!(a_init, unshuffled);
}

#[test]
fn degenerate_splits_are_rejected() {
    let suite = fixture_suites(1).pop().unwrap();
    for f in [0.0, 1.0, -0.5, f64::NAN] {
        let spec = SplitSpec { init_fraction: f, shuffle_seed: None };
        assert!(matches!(split_suite(&suite, &spec), Err(DatasetError::InvalidFraction(_))), "{f}");
    }
    let spec = SplitSpec { init_fraction: 0.01, shuffle_seed: None };
    assert!(matches!(split_suite(&suite, &spec), Err(DatasetError::DegenerateSplit { .. })));
}

#[test]
fn generated_suites_are_valid_and_labeled_by_curvature() {
    let config = small();
    for suite in generate_suites(&config).unwrap() {
        assert!(validate_suite(&suite).is_valid(), "{}", validate_suite(&suite));
        for case in &suite.cases {
            assert!(!is_self_intersecting(&case.case.road_points, config.road_width));
            let max = curvature_profile(&case.case.road_points).unwrap().max_abs_kappa();
            assert_eq!(case.oracle.outcome.is_fault(), max > config.fail_curvature_threshold, "{}", case.test_id());
            assert!(case.oracle.sim_time_sec >= config.sim_time.base_sec);
        }
    }
}

#[test]
fn label_noise_flips_some_labels() {
    let clean = generate_suites(&small()).unwrap();
    let noisy = generate_suites(&GeneratorConfig { label_noise: 0.3, ..small() }).unwrap();
    let mut flipped = 0;
    let mut total = 0;
    for (a, b) in clean.iter().zip(&noisy) {
        for (x, y) in a.cases.iter().zip(&b.cases) {
            // Noise draws do not shift the road stream.
            assert_eq!(x.case, y.case);
            total += 1;
            flipped += (x.oracle.outcome != y.oracle.outcome) as usize;
        }
    }
    let rate = flipped as f64 / total as f64;
    assert!((0.2..0.4).contains(&rate), "{rate}");
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn benchmark_directory_is_deterministic_and_round_trips() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = write_benchmark(&small(), a.path()).unwrap();
    write_benchmark(&small(), b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(dir_bytes(a.path()).len(), 4 + 1);

    let files = benchmark_files(a.path()).unwrap();
    assert_eq!(files.len(), 4);
    let generated = generate_suites(&small()).unwrap();
    for ((path, entry), suite) in files.iter().zip(&manifest.suites).zip(&generated) {
        let loaded = load_suite(path).unwrap();
        assert_eq!(&loaded, suite);
        assert_eq!(entry.failure_rate, suite_failure_rate(suite));
    }
    let other = generate_suites(&GeneratorConfig { seed: 4, ..small() }).unwrap();
    assert_ne!(generated, other);
}

#[test]
fn files_without_manifest_are_read_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    for s in fixture_suites(3).iter().rev() {
        store_suite(s, dir.path().join(format!("{}.json", s.suite_id))).unwrap();
    }
    assert!(!dir.path().join(MANIFEST_FILE).exists());
    let names: Vec<String> = benchmark_files(dir.path())
        .unwrap()
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["fixture_00", "fixture_01", "fixture_02"]);
}

#[test]
fn load_errors_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let truncated = write("truncated.json", r#"{"suite_id": "s", "cases": [ {"test_id": "a""#);
    assert!(matches!(load_suite(truncated), Err(DatasetError::Parse { .. })));
    let wrong_type = write("schema.json", r#"{"suite_id": "s", "cases": 5}"#);
    assert!(matches!(load_suite(wrong_type), Err(DatasetError::Schema { .. })));
    let bad_outcome = write(
        "outcome.json",
        r#"{"suite_id": "s", "cases": [{"test_id": "a", "road_points": [[0,0],[1,0],[2,1]], "outcome": "MAYBE", "sim_time_sec": 1.0}]}"#,
    );
    assert!(matches!(load_suite(bad_outcome), Err(DatasetError::Schema { .. })));
    let missing = dir.path().join("absent.json");
    assert!(matches!(load_suite(missing), Err(DatasetError::Io { .. })));

    let mut suite = fixture_suites(1).pop().unwrap();
    let dup = suite.cases[0].clone();
    suite.cases.push(dup);
    let p = dir.path().join("dup.json");
    store_suite(&suite, &p).unwrap();
    match load_suite(&p) {
        Err(DatasetError::Validation { report, .. }) => assert!(report.to_string().contains("duplicate")),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn three_dimensional_points_drop_elevation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("3d.json");
    let cases: Vec<String> = (0..5)
        .map(|i| {
            format!(
                r#"{{"test_id": "c{i}", "road_points": [[0,0,1.5],[1,0,2.5],[2,1,0]], "outcome": "PASS", "sim_time_sec": 3.0}}"#
            )
        })
        .collect();
    fs::write(&p, format!(r#"{{"suite_id": "s3", "cases": [{}]}}"#, cases.join(","))).unwrap();
    let suite = load_suite(&p).unwrap();
    assert_eq!(suite.cases[0].case.road_points[2], Point::new(2.0, 1.0));
}

#[test]
fn fixtures_are_valid_suites() {
    for s in fixture_suites(10).iter().chain([&separable_suite()]) {
        assert!(validate_suite(s).is_valid(), "{}: {}", s.suite_id, validate_suite(s));
        let rate = suite_failure_rate(s);
        assert!(rate > 0.0 && rate < 1.0, "{}: {rate}", s.suite_id);
    }
}

#[test]
fn threshold_separates_the_separable_fixture() {
    let suite = separable_suite();
    let items: Vec<InitializationItem> = suite.cases.iter().map(InitializationItem::from).collect();
    let state = threshold_train(&items).unwrap();
    assert_eq!(state.training_accuracy, Some(1.0));
    let t = state.threshold.unwrap();
    // Curvature magnitudes on the fixture step by 0.005; the boundary lies
    // between 0.04 and 0.045.
    assert!(t > 0.04 && t < 0.045 + 1e-9, "{t}");
}
