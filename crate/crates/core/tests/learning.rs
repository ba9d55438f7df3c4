//! Training flow on a generated dataset: overfit a single scenario, then run
//! the full train/evaluate/package loop at toy scale.

use std::collections::BTreeMap;

use radiomap_core::dataset::{
    apply_assignment, split_kfold, DatasetConfig, SceneSource, Split,
};
use radiomap_core::learn::{
    evaluate, fit, load_split_samples, load_weights, predict_radio_map, save_weights, train,
    write_history_csv, TrainConfig,
};
use radiomap_core::propagate::PropagationConfig;
use radiomap_core::raster::{load_image, CityParams};
use radiomap_core::{dataset, NetworkSpec};

fn toy_source(count: usize) -> SceneSource {
    SceneSource::Synthetic {
        params: CityParams {
            width_px: 48,
            height_px: 48,
            resolution_m: 10.0,
            street_spacing_m: 160.0,
            street_width_m: 60.0,
            building_density: 0.3,
            height_min_m: 6.0,
            height_max_m: 18.0,
        },
        count,
    }
}

fn toy_cfg() -> DatasetConfig {
    DatasetConfig {
        propagation: PropagationConfig {
            max_depth: 2,
            diffraction_enabled: true,
            ..PropagationConfig::default()
        },
        out_px: 16,
        extent_min_m: 500.0,
        extent_max_m: 640.0,
        augment_variants: 2,
        tx_height_m: 10.0,
    }
}

/// A network with enough capacity must drive one scenario's training loss
/// below 10% of its starting value within 200 epochs.
#[test]
fn overfitting_one_scenario_collapses_its_loss() {
    let dir = tempfile::tempdir().unwrap();
    let manifest =
        dataset::generate_dataset(&toy_source(1), 1, &toy_cfg(), dir.path(), 11).unwrap();
    let rec = &manifest.records[0];
    let input = load_image(&dir.path().join(&rec.input)).unwrap();
    let target = load_image(&dir.path().join(&rec.target)).unwrap();
    let sample =
        radiomap_core::learn::TrainSample::from_pair(&rec.id, &input, &target).unwrap();

    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        learning_rate: 0.05,
        lr_min: 0.005,
        momentum: 0.9,
        patience: 200,
        seed: 7,
    };
    let init = radiomap_core::learn::build_network(&NetworkSpec::toy(), cfg.seed).unwrap();
    let (_, history) = fit(init, std::slice::from_ref(&sample), &[], &cfg).unwrap();
    let first = history.first().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    assert!(
        last < 0.10 * first,
        "loss {last} after {} epochs, started at {first}",
        history.len()
    );
}

#[test]
fn train_evaluate_and_package_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest =
        dataset::generate_dataset(&toy_source(4), 2, &toy_cfg(), dir.path(), 42).unwrap();
    let folds = split_kfold(&manifest, 3, 1).unwrap();
    apply_assignment(&mut manifest, &folds, 0).unwrap();

    let spec = NetworkSpec::toy();
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 4,
        learning_rate: 0.03,
        lr_min: 0.003,
        momentum: 0.9,
        patience: 6,
        seed: 3,
    };
    let (w, history) = train(dir.path(), &manifest, &spec, &cfg).unwrap();
    assert_eq!(history.len(), 6);
    assert!(history.iter().all(|r| r.train_loss.is_finite()));
    assert!(history.iter().all(|r| r.val_loss.is_finite()));

    let csv = dir.path().join("history.csv");
    write_history_csv(&csv, &history).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_loss,lr\n"));
    assert_eq!(text.lines().count(), history.len() + 1);

    // Held-out metrics are finite and bounded by the dynamic range.
    let metrics = evaluate(&w, dir.path(), &manifest, Split::Test).unwrap();
    assert!(metrics.n_samples > 0 && metrics.n_cells > 0);
    assert!(metrics.rmse_db.is_finite() && metrics.rmse_db >= 0.0);
    assert!((0.0..=100.0).contains(&metrics.median_error_percent));

    // Package, reload, and verify the reloaded model is the quantized twin:
    // identical forward outputs after a second save/load.
    let base = dir.path().join("model");
    let mut summary = BTreeMap::new();
    summary.insert("rmse_db".to_string(), metrics.rmse_db);
    save_weights(&base, &w, history.len(), &summary).unwrap();
    let (w1, header) = load_weights(&base).unwrap();
    assert_eq!(header.spec, spec);
    assert_eq!(header.metrics["rmse_db"], metrics.rmse_db);
    let base2 = dir.path().join("model2");
    save_weights(&base2, &w1, history.len(), &summary).unwrap();
    let (w2, _) = load_weights(&base2).unwrap();
    assert_eq!(w1.data, w2.data, "second save/load must be lossless");

    // The packaged model predicts a georeferenced map on a held-out input.
    let test_rec = manifest.records_in_split(Split::Test)[0];
    let elevation = load_image(&dir.path().join(&test_rec.input)).unwrap();
    let (map, elapsed) = predict_radio_map(&w1, &elevation).unwrap();
    assert_eq!(map.width_px, elevation.px);
    assert!(map.gains_db.iter().all(|g| (-150.0..=-50.0).contains(g)));
    let tx_col = ((map.tx.x_m - map.origin_x_m) / map.resolution_m) as usize;
    assert_eq!(tx_col, elevation.px / 2);
    assert!(elapsed.as_secs() < 5);

    // Reloading samples through the split loader agrees with the manifest.
    let train_samples = load_split_samples(dir.path(), &manifest, Split::Train).unwrap();
    assert_eq!(
        train_samples.len(),
        manifest.records_in_split(Split::Train).len()
    );
}
