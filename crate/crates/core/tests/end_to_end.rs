use std::path::Path;

use hyfe_core::config::{DataSource, RunConfig};
use hyfe_core::hsio::{self, LabelRaster};
use hyfe_core::pipeline::{self, make_split, stratified_sample, Scene};
use hyfe_core::synth::{gen_synthetic, Noise, SyntheticSpec};
use proptest::prelude::*;

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        rows: 30,
        cols: 26,
        bands: 14,
        classes: 4,
        cells: 12,
        noise: Noise::SnrDb(20.0),
        ..SyntheticSpec::default()
    }
}

/// Writes a synthetic scene to disk with explicit train/test masks.
fn write_scene(dir: &Path) -> (LabelRaster, Vec<usize>) {
    let scene = gen_synthetic(&spec(), 21).unwrap();
    hsio::write_cube(&scene.cube, dir.join("cube.hdr")).unwrap();
    hsio::save_labels_csv(&scene.labels, dir.join("labels.csv")).unwrap();
    let train_idx = stratified_sample(&scene.labels, 12, 4).unwrap();
    let mut train = vec![0u32; scene.labels.labels().len()];
    let mut test = scene.labels.labels().to_vec();
    for &i in &train_idx {
        train[i] = scene.labels.labels()[i];
        test[i] = 0;
    }
    // Leave every third remaining pixel out of both sets.
    for (i, t) in test.iter_mut().enumerate() {
        if i % 3 == 0 {
            *t = 0;
        }
    }
    let (r, c) = scene.labels.shape();
    hsio::save_labels_csv(
        &LabelRaster::new(r, c, train).unwrap(),
        dir.join("train.csv"),
    )
    .unwrap();
    hsio::save_labels_csv(&LabelRaster::new(r, c, test).unwrap(), dir.join("test.csv")).unwrap();
    (scene.labels, train_idx)
}

#[test]
fn file_based_run_uses_the_given_masks() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, train_idx) = write_scene(dir.path());
    let text = "[data]\ncube = cube.hdr\nlabels = labels.csv\ntrain = train.csv\ntest = test.csv\n\
                [method]\nid = lfda\n[classifier]\nn_trees = 50\n[run]\noutput = out\n";
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert!(matches!(cfg.data, DataSource::Files(_)));
    let out = pipeline::run_benchmark(&cfg).unwrap();
    assert_eq!(out.split.train, train_idx);
    let expected_test: Vec<usize> = (0..labels.labels().len())
        .filter(|&i| i % 3 != 0 && !train_idx.contains(&i))
        .collect();
    assert_eq!(out.split.test, expected_test);
    assert!(out.report.oa > 0.8, "OA {}", out.report.oa);
    let metrics = std::fs::read_to_string(dir.path().join("out").join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("class,accuracy\n"));
    let total: u64 = out.report.confusion.iter().flatten().sum();
    assert_eq!(total as usize, expected_test.len());

    let ppm = std::fs::read(dir.path().join("out").join("classmap.ppm")).unwrap();
    let (rows, cols, pixels) = hsio::decode_ppm(&ppm).unwrap();
    assert_eq!((rows, cols, pixels.len()), (30, 26, 30 * 26));
}

#[test]
fn manifest_records_config_traces_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::synthetic(spec(), "sslra".parse().unwrap(), dir.path().join("m"));
    cfg.train_per_class = 10;
    cfg.classifier.n_trees = 30;
    let out = pipeline::run_benchmark(&cfg).unwrap();
    let m = &out.manifest;
    let echoed = RunConfig::parse(m["config"].as_str().unwrap(), Path::new("/")).unwrap();
    assert_eq!(echoed, cfg);
    let trace = m["objective_traces"]["sslra"].as_array().unwrap();
    assert!(trace.len() >= 2);
    for stage in ["load", "split", "extract", "classify", "evaluate"] {
        assert!(m["timings_ms"][stage].as_f64().unwrap() >= 0.0, "{stage}");
    }
    assert!(m["resolved"]["method"]["lambda2"].as_f64().unwrap() > 0.0);
}

#[test]
fn knn_classifier_is_selectable() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[synthetic]\nrows = 24\ncols = 24\nbands = 10\nclasses = 3\n\
                [method]\nid = pca\n[classifier]\nkind = knn\nk_nn = 3\n[run]\ntrain_per_class = 10\n";
    let cfg = RunConfig::parse(text, dir.path()).unwrap();
    let out = pipeline::run_benchmark(&cfg).unwrap();
    assert_eq!(out.manifest["resolved"]["classifier"]["kind"], "knn");
    assert!(out.report.oa > 0.6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stratified_splits_never_leak(seed in 0u64..1000, per_class in 1usize..20) {
        let scene = gen_synthetic(&spec(), seed % 7).unwrap();
        let scene = Scene { cube: scene.cube, labels: scene.labels, train_mask: None, test_mask: None };
        let split = make_split(&scene, per_class, seed).unwrap();
        prop_assert_eq!(split.train.len(), per_class * 4);
        let mut in_train = vec![false; scene.labels.labels().len()];
        for &i in &split.train {
            prop_assert!(!in_train[i]);
            in_train[i] = true;
        }
        prop_assert!(split.test.iter().all(|&i| !in_train[i]));
        prop_assert_eq!(split.train.len() + split.test.len(), scene.labels.labeled_count());
        for (i, &l) in split.train.iter().zip(&split.train_labels) {
            prop_assert_eq!(scene.labels.labels()[*i] as usize, l);
        }
    }

    #[test]
    fn config_render_round_trips(
        rows in 4usize..200, classes in 2usize..16, seed in any::<u64>(),
        lambda in proptest::option::of(0.0f64..10.0), k_nn in proptest::option::of(1usize..40),
        layers in proptest::option::of(proptest::collection::vec(1usize..64, 1..4)),
    ) {
        let mut cfg = RunConfig::synthetic(
            SyntheticSpec { rows, cols: rows, classes, cells: classes * 2, ..SyntheticSpec::default() },
            "jplay".parse().unwrap(),
            "/tmp/out",
        );
        cfg.seed = seed;
        cfg.method.lambda = lambda;
        cfg.method.k_nn = k_nn;
        cfg.method.layers = layers;
        let back = RunConfig::parse(&cfg.render(), Path::new("/")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
