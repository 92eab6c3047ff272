//! A config-driven run: writes a synthetic scene, its gold mask and points to
//! disk, then trains and segments through a JSON experiment config.
//!
//!     cargo run --release -p mmnn --example run_experiment -- [out_dir]

use mmnn::imageio::{points_to_csv, write_mask_png, write_rgb_png};
use mmnn::synthetic::two_blob_scene;
use mmnn::{run_experiment, PipelineConfig};

fn main() -> mmnn::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mmnn-experiment"), Into::into);
    std::fs::create_dir_all(&dir)?;

    let scene = two_blob_scene(200, 0.02, 11)?;
    write_rgb_png(dir.join("scene.png"), 200, 200, scene.rgb.clone())?;
    write_mask_png(dir.join("gold.png"), &scene.gold())?;
    std::fs::write(dir.join("points.csv"), points_to_csv(&scene.points))?;

    let config = format!(
        r#"{{
  "image": "{d}/scene.png",
  "gold": "{d}/gold.png",
  "features": {{"radius": 3}},
  "threshold": 0.5,
  "subsample": 10,
  "out_dir": "{d}/out",
  "network": {{
    "kind": "build",
    "points": "{d}/points.csv",
    "arch": {{
      "features": {{"radius": 3}},
      "first_layer": {{"d": 5, "mode": "non_negative", "activation": {{"kind": "linear"}}}},
      "upper_layers": [{{"neurons": 1, "d": 1, "mode": "signed",
                         "activation": {{"kind": "sigmoid", "a": 5000, "b": 0}}}}]
    }},
    "train": {{"num_starts": 10, "max_steps": 30, "seed": 11}}
  }}
}}"#,
        d = dir.display()
    );
    std::fs::write(dir.join("experiment.json"), &config)?;

    let out = run_experiment(&PipelineConfig::from_json(&config)?)?;
    println!("{}", serde_json::to_string_pretty(&out.metrics).expect("metrics"));
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
