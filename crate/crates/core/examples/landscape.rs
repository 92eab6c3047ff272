//! Balanced-accuracy landscape of the two output weights, with the training
//! trajectories that climb it.
//!
//!     cargo run --release -p mmnn --example landscape -- [out_dir]

use mmnn::landscape::{basin_count, contours_to_csv, level_sets, sweep};
use mmnn::pipeline::{prepare_training, ArchSpec};
use mmnn::synthetic::two_blob_scene;
use mmnn::training::{multi_start_train, trajectories_to_csv, Evaluator};
use mmnn::{FeatureConfig, Objective, TrainConfig, WeightRef};

fn main() -> mmnn::Result<()> {
    let out_dir = std::env::args().nth(1);
    let scene = two_blob_scene(256, 0.02, 7)?;
    let arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5)?;
    let (net, pixels) = prepare_training(&scene.image, &scene.gold(), &scene.points, &arch, 10)?;

    let ba = Objective::BalancedAccuracy { threshold: 0.5 };
    let free = [WeightRef::new(1, 0, 0), WeightRef::new(1, 0, 1)];
    let grid = sweep(&net, &pixels, free, [(-1.0, 1.0); 2], 0.05, &ba)?;
    let (bx, by) = grid.argmax_point();
    println!("grid {}x{}, best BA {:.4} at ({bx:.2}, {by:.2})", grid.nx, grid.ny, grid.max_value());
    println!("flagged cells {}", grid.flagged.iter().filter(|&&f| f).count());
    println!("basins {}", basin_count(&grid));

    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let trained = multi_start_train(&net, &pixels, &cfg)?;
    let eval = Evaluator::for_refs(&net, &pixels, &trained.refs)?;
    let w = trained.network.get_weights(&trained.refs);
    println!(
        "trained ({:.3}, {:.3}) BA {:.4}",
        w[0],
        w[1],
        eval.objective(&trained.network, &ba)?
    );
    for (i, t) in trained.trajectories.iter().enumerate() {
        let (s, e) = (t.start(), t.last());
        println!(
            "  start {i}: ({:+.2}, {:+.2}) -> ({:+.2}, {:+.2}) in {} steps, A {:.2}",
            s.weights[0],
            s.weights[1],
            e.weights[0],
            e.weights[1],
            t.len() - 1,
            e.objective
        );
    }

    if let Some(dir) = out_dir {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("grid.csv"), grid.to_csv())?;
        std::fs::write(dir.join("grid.pgm"), grid.to_pgm_scaled(0.5, 1.0))?;
        let contours = level_sets(&grid, &[0.6, 0.7, 0.8, 0.9]);
        std::fs::write(dir.join("contours.csv"), contours_to_csv(&contours))?;
        std::fs::write(dir.join("trajectories.csv"), trajectories_to_csv(&trained.trajectories, true))?;
        println!("wrote grid.csv, grid.pgm, contours.csv, trajectories.csv to {}", dir.display());
    }
    Ok(())
}
