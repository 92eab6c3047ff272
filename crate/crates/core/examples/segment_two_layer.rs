//! Two-layer segmentation of a synthetic scene from one prototype and one
//! counter-prototype. Training runs on the factor-10 subsample, segmentation
//! at full resolution.
//!
//!     cargo run --release -p mmnn --example segment_two_layer -- [size] [seed] [out_dir]

use std::time::Instant;

use mmnn::pipeline::{segment_image, train_network, write_artifacts, ArchSpec, Metrics};
use mmnn::synthetic::two_blob_scene;
use mmnn::{FeatureConfig, TrainConfig};

fn main() -> mmnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().map_or(256, |s| s.parse().expect("size"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let out_dir = args.next();

    let scene = two_blob_scene(size, 0.02, seed)?;
    let gold = scene.gold();
    let arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5)?;
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };

    let t0 = Instant::now();
    let trained = train_network(&scene.image, &gold, &scene.points, &arch, &cfg, 10)?;
    let train_time = t0.elapsed();
    let mut result = segment_image(&scene.image, &trained.network, &arch.features, arch.threshold)?;
    result.evaluate(&gold)?;

    let w = trained.network.layers()[1][0].weights();
    println!("winning start   {}", trained.winner);
    println!("layer-2 weights ({:.4}, {:.4})", w[0], w[1]);
    println!("objective A     {:.3}", trained.best_objective);
    println!("confusion       {:?}", result.confusion.unwrap());
    println!("balanced acc.   {:.4}", result.balanced_accuracy.unwrap());
    println!("train {:.2?}, segment {:.0} ms", train_time, result.diagnostics.elapsed_ms);

    if let Some(dir) = out_dir {
        let metrics = Metrics {
            width: result.width,
            height: result.height,
            threshold: arch.threshold,
            object_pixels: result.mask.count(),
            confusion: result.confusion,
            balanced_accuracy: result.balanced_accuracy,
            training_objective: Some(trained.best_objective),
            winning_start: Some(trained.winner),
            diagnostics: result.diagnostics,
        };
        let files = write_artifacts(dir.as_ref(), &result, &trained.network, &trained.trajectories, &metrics)?;
        mmnn::imageio::write_rgb_png(std::path::Path::new(&dir).join("scene.png"), size, size, scene.rgb.clone())?;
        for f in files {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}
