use std::path::Path;

use mmnn::imageio::{self, encode_rgb_png, load_mask, points_to_csv, read_raw_f32};
use mmnn::pipeline::{run_experiment, ArchSpec, NetworkSource, PipelineConfig};
use mmnn::synthetic::two_blob_scene;
use mmnn::{Error, FeatureConfig, TrainConfig};

fn write_scene(dir: &Path, size: usize, seed: u64) -> mmnn::synthetic::Scene {
    let scene = two_blob_scene(size, 0.02, seed).unwrap();
    std::fs::write(dir.join("image.png"), encode_rgb_png(size, size, scene.rgb.clone()).unwrap()).unwrap();
    imageio::write_mask_png(dir.join("gold.png"), &scene.gold()).unwrap();
    std::fs::write(dir.join("points.csv"), points_to_csv(&scene.points)).unwrap();
    scene
}

fn bean_arch() -> ArchSpec {
    ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5).unwrap()
}

fn config(dir: &Path, network: NetworkSource, gold: bool, out: &str) -> PipelineConfig {
    PipelineConfig {
        image: dir.join("image.png"),
        gold: gold.then(|| dir.join("gold.png")),
        network,
        features: FeatureConfig::new(3, true),
        threshold: 0.5,
        subsample: 10,
        out_dir: Some(dir.join(out)),
    }
}

#[test]
fn bean_parameters_train_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scene(d, 128, 7);
    let build = NetworkSource::Build {
        arch: bean_arch(),
        points: d.join("points.csv"),
        train: Some(TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        }),
    };
    let out = run_experiment(&config(d, build, true, "trained")).unwrap();
    let ba = out.metrics.balanced_accuracy.unwrap();
    assert!(ba > 0.95, "{ba}");
    assert_eq!(out.trajectories.len(), 10);
    assert_eq!(out.files.len(), 6);

    let raw = read_raw_f32(d.join("trained/raw.f32")).unwrap();
    assert_eq!(raw.len(), 128 * 128);
    assert!(raw.iter().zip(&out.result.raw).all(|(&a, &b)| a == b as f32));
    let mask = load_mask(d.join("trained/mask.pgm")).unwrap();
    assert_eq!(mask, out.result.mask);

    // Loading the written network without gold gives the same mask and no BA.
    let load = NetworkSource::Load {
        path: d.join("trained/network.json"),
    };
    let again = run_experiment(&config(d, load, false, "loaded")).unwrap();
    assert_eq!(again.result.mask, out.result.mask);
    assert!(again.metrics.balanced_accuracy.is_none() && again.result.confusion.is_none());
    assert!(d.join("loaded/mask.pgm").exists());
    assert!(!d.join("loaded/trajectories.csv").exists());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("loaded/metrics.json")).unwrap()).unwrap();
    assert!(metrics.get("balanced_accuracy").is_none());
}

#[test]
fn gold_equal_to_output_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scene(d, 64, 3);
    let untrained = NetworkSource::Build {
        arch: bean_arch(),
        points: d.join("points.csv"),
        train: None,
    };
    let first = run_experiment(&config(d, untrained.clone(), false, "first")).unwrap();
    assert!(first.trajectories.is_empty());
    let count = first.result.mask.count();
    assert!(count > 0 && count < 64 * 64);
    imageio::write_mask_png(d.join("gold.png"), &first.result.mask).unwrap();
    let second = run_experiment(&config(d, untrained, true, "second")).unwrap();
    assert_eq!(second.metrics.balanced_accuracy, Some(1.0));
}

#[test]
fn missing_and_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scene(d, 16, 1);
    let load = |p: &str| NetworkSource::Load { path: d.join(p) };
    match run_experiment(&config(d, load("absent.json"), false, "x")) {
        Err(Error::FileNotFound(p)) => assert!(p.ends_with("absent.json")),
        other => panic!("{other:?}"),
    }
    std::fs::write(d.join("broken.json"), "{\"input_dim\": ").unwrap();
    assert!(matches!(run_experiment(&config(d, load("broken.json"), false, "x")), Err(Error::Parse { .. })));
    assert!(PipelineConfig::from_json("{\"image\": 3}").is_err());
    assert!(!d.join("x").exists());
}
