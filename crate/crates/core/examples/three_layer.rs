//! Two object classes segmented two ways:
//!
//! * one two-layer network per class, each thresholded, masks OR-ed;
//! * one three-layer network over all points, layers 2 and 3 trained jointly.
//!
//! Both use the same trainer budget, optimize balanced accuracy directly and
//! keep the default initial weights as their first start.
//!
//!     cargo run --release -p mmnn --example three_layer -- [seed]

use mmnn::network::or_combine;
use mmnn::pipeline::{segment_image, train_network, ArchSpec};
use mmnn::synthetic::two_object_scene;
use mmnn::training::StartPoints;
use mmnn::{confusion, FeatureConfig, Objective, TrainConfig};

fn main() -> mmnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(3, |s| s.parse().expect("seed"));

    let scene = two_object_scene(256, 0.02, seed)?;
    let gold = scene.gold();
    let features = FeatureConfig::new(3, true);
    let cfg = TrainConfig {
        seed,
        start_points: StartPoints::IncludeCurrent,
        objective: Objective::BalancedAccuracy { threshold: 0.5 },
        ..TrainConfig::default()
    };

    let mut masks = Vec::new();
    for (class, class_gold) in &scene.class_masks {
        let arch = ArchSpec::two_layer(features, 5.0, 5000.0, 0.0, 0.5)?;
        let trained = train_network(&scene.image, class_gold, &scene.points_for(class), &arch, &cfg, 10)?;
        let r = segment_image(&scene.image, &trained.network, &features, arch.threshold)?;
        let c = confusion(&r.mask, class_gold)?;
        println!("class {class}: weights {:?}, class BA {:.4}", trained.network.layers()[1][0].weights().as_slice(), c.balanced_accuracy()?);
        masks.push(r.mask);
    }
    let or_mask = or_combine(&masks)?;
    let or_ba = confusion(&or_mask, &gold)?.balanced_accuracy()?;

    let arch = ArchSpec::three_layer(features, 5.0, 2, 5000.0, 0.0, 0.5)?;
    let trained = train_network(&scene.image, &gold, &scene.points, &arch, &cfg, 10)?;
    let mut joint = segment_image(&scene.image, &trained.network, &features, arch.threshold)?;
    joint.evaluate(&gold)?;
    for (l, layer) in trained.network.layers().iter().enumerate().skip(1) {
        for (k, n) in layer.iter().enumerate() {
            println!("layer {} neuron {k}: {:?}", l + 1, n.weights().as_slice());
        }
    }
    println!("thresholded OR BA {or_ba:.4}");
    println!("joint BA          {:.4}", joint.balanced_accuracy.unwrap());
    Ok(())
}
