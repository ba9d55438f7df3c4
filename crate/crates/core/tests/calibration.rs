//! Calibration trials against a generated dataset: manifest-driven scenario
//! loading, a short trial run, report artifacts, and thread-count invariance.

use radiomap_core::calibrate::{
    calibration_trials, scenarios_from_manifest, write_trial_report, CalibrationConfig,
    Perturbation, TrialReport, TrialScenario,
};
use radiomap_core::dataset::{self, DatasetConfig, SceneSource};
use radiomap_core::learn::{build_network, Weights};
use radiomap_core::propagate::PropagationConfig;
use radiomap_core::raster::CityParams;
use radiomap_core::stats::Ecdf;
use radiomap_core::NetworkSpec;

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

fn fast_cfg() -> CalibrationConfig {
    CalibrationConfig {
        trials: 4,
        epochs: 2,
        route_points: 80,
        n_clusters: 4,
        ..CalibrationConfig::default()
    }
}

fn setup(dir: &std::path::Path) -> (Weights, Vec<TrialScenario>) {
    let manifest = dataset::generate_dataset(&toy_source(2), 1, &toy_cfg(), dir, 9).unwrap();
    let scenarios = scenarios_from_manifest(dir, &manifest, None, None).unwrap();
    assert_eq!(scenarios.len(), 2, "one identity record per scene");
    let w = build_network(&NetworkSpec::toy(), 5).unwrap();
    (w, scenarios)
}

fn ecdf_points(e: &Option<Ecdf>) -> Vec<(f64, f64)> {
    e.as_ref().map(|e| e.points().collect()).unwrap_or_default()
}

#[test]
fn calibration_runs_end_to_end_on_a_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (w, scenarios) = setup(dir.path());
    let prop = toy_cfg().propagation;
    let report = calibration_trials(
        &w,
        &scenarios,
        &prop,
        &Perturbation::default(),
        &fast_cfg(),
        29,
    )
    .unwrap();
    assert_eq!(report.trials_completed, 4, "{:?}", report.failures);

    let s = report.summary();
    assert!(s.n_test_points > 0);
    assert_eq!(s.median_error_percent.len(), 3);
    for (name, v) in &s.median_error_percent {
        assert!((0.0..=100.0).contains(v), "{name}: {v}");
    }

    let base = dir.path().join("calibration");
    write_trial_report(&base, &report).unwrap();
    let json = std::fs::read_to_string(base.with_extension("json")).unwrap();
    assert!(json.contains("\"trials_completed\": 4"));
    let csv = std::fs::read_to_string(base.with_extension("ecdf.csv")).unwrap();
    assert!(csv.starts_with("metric,error,cumulative_prob\n"));
    assert_eq!(csv.lines().count() - 1, 3 * s.n_test_points);
}

#[test]
fn trial_reports_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (w, scenarios) = setup(dir.path());
    let prop = toy_cfg().propagation;
    let run = |threads: usize| -> TrialReport {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                calibration_trials(
                    &w,
                    &scenarios,
                    &prop,
                    &Perturbation::default(),
                    &fast_cfg(),
                    77,
                )
                .unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.summary(), b.summary());
    assert_eq!(ecdf_points(&a.misconfigured), ecdf_points(&b.misconfigured));
    assert_eq!(ecdf_points(&a.uncalibrated), ecdf_points(&b.uncalibrated));
    assert_eq!(ecdf_points(&a.calibrated), ecdf_points(&b.calibrated));
}
