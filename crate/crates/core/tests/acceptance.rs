//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//!     cargo test -p mmnn --test acceptance

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{logistic, ref_features, ref_indices, secant_gradient};
use mmnn::landscape::{basin_count, level_sets, sweep, LandscapeGrid};
use mmnn::multiset::{ms_cardinality, ms_intersection, ms_union, SimilarityTerms};
use mmnn::network::or_combine;
use mmnn::pipeline::{prepare_training, segment_image, train_network, ArchSpec};
use mmnn::synthetic::{two_blob_scene, two_object_scene};
use mmnn::training::{fd_gradient, multi_start_train, Evaluator, StartPoints};
use mmnn::{
    confusion, prototype_init, Activation, AnnotatedPoint, FeatureConfig, Image, IntegerMultiset, NetworkSpec,
    Neuron, Objective, SimilarityConfig, SimilarityMode, TrainConfig, WeightRef,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: mmnn::Error) -> String {
    e.to_string()
}

fn multiset_arithmetic() -> Check {
    let x = IntegerMultiset::from_counts([('a', 3), ('b', 2)]);
    let y = IntegerMultiset::from_counts([('a', 1), ('b', 3), ('d', 1)]);
    let (cx, cy) = (ms_cardinality(&x), ms_cardinality(&y));
    let cu = ms_cardinality(&ms_union(&x, &y));
    let ci = ms_cardinality(&ms_intersection(&x, &y));
    ensure((cx, cy, cu, ci) == (5, 5, 7, 3), || format!("got |X|={cx} |Y|={cy} |X∪Y|={cu} |X∩Y|={ci}"))?;
    Ok(format!(
        "|X|={cx} |Y|={cy} |X∪Y|={cu} |X∩Y|={ci} (min rule)"
    ))
}

fn similarity_suite() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs = 1200;
    for k in 0..pairs {
        let mode = if k % 2 == 0 {
            SimilarityMode::NonNegative
        } else {
            SimilarityMode::Signed
        };
        let n = rng.random_range(1..=64);
        let lo = if mode == SimilarityMode::Signed { -3.0 } else { 0.0 };
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(lo..3.0) })
                .collect()
        };
        let x = draw(&mut rng);
        let mut y = draw(&mut rng);
        if x.iter().chain(&y).all(|v| *v == 0.0) {
            y[0] = 1.0;
        }
        let d = rng.random_range(1.0..6.0);
        let a = SimilarityTerms::compute(&x, &y, mode).map_err(err)?;
        let b = SimilarityTerms::compute(&y, &x, mode).map_err(err)?;
        let (j, i, c) = (a.jaccard(), a.interiority(), a.coincidence(d));

        ensure(
            j.to_bits() == b.jaccard().to_bits()
                && i.to_bits() == b.interiority().to_bits()
                && c.to_bits() == b.coincidence(d).to_bits(),
            || format!("pair {k}: not commutative"),
        )?;
        let lo_bound = if mode == SimilarityMode::Signed { -1.0 } else { 0.0 };
        ensure(
            (lo_bound..=1.0).contains(&j) && (0.0..=1.0).contains(&i) && (lo_bound..=1.0).contains(&c),
            || format!("pair {k}: out of range J={j} I={i} C={c}"),
        )?;

        if x.iter().any(|v| *v != 0.0) {
            let s = SimilarityTerms::compute(&x, &x, mode).map_err(err)?;
            ensure(
                s.jaccard() == 1.0 && s.interiority() == 1.0 && s.coincidence(d) == 1.0,
                || format!("pair {k}: self-similarity != 1"),
            )?;
        }

        let alpha = rng.random_range(0.01..100.0);
        let sx: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        let sy: Vec<f64> = y.iter().map(|v| v * alpha).collect();
        let s = SimilarityTerms::compute(&sx, &sy, mode).map_err(err)?;
        ensure(
            (s.jaccard() - j).abs() <= 1e-12
                && (s.interiority() - i).abs() <= 1e-12
                && (s.coincidence(d) - c).abs() <= 1e-12,
            || format!("pair {k}: scale invariance broken at alpha={alpha}"),
        )?;

        if mode == SimilarityMode::NonNegative {
            ensure(c <= j && j <= i, || format!("pair {k}: C≤J≤I fails: C={c} J={j} I={i}"))?;
        }

        if j > 0.0 && j < 1.0 && i > 0.0 && j.powf(d + 1.0) > 1e-300 {
            ensure(a.coincidence(d + 1.0) < c, || format!("pair {k}: C not decreasing in D"))?;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{pairs} pairs, lengths 1-64, both modes, {secs:.2} s"))
}

fn brute_force_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut pixels = 0;
    for case in 0..20 {
        let rgb: Vec<u8> = (0..5 * 5 * 3).map(|_| rng.random()).collect();
        let img = Image::from_rgb8(5, 5, &rgb).map_err(err)?;
        let r = rng.random_range(1..=2u32);
        let d = [1.0, 3.0, 5.0][rng.random_range(0..3)];
        let fcfg = FeatureConfig::new(r, true);
        let points = [
            AnnotatedPoint::prototype(rng.random_range(0..5), rng.random_range(0..5), "o"),
            AnnotatedPoint::counter(rng.random_range(0..5), rng.random_range(0..5), "o"),
        ];
        let layer1 = prototype_init(&img, &points, &fcfg, &SimilarityConfig::non_negative(d).map_err(err)?, &Activation::Linear)
            .map_err(err)?;
        let w2 = [rng.random_range(0.05..1.0), -rng.random_range(0.05..1.0)];
        let out = Neuron::from_weights(w2.to_vec(), 1.0, SimilarityMode::Signed, Activation::sigmoid(2000.0, 0.0).map_err(err)?)
            .map_err(err)?;
        let net = NetworkSpec::new(fcfg.feature_len(3), vec![layer1, vec![out]]).map_err(err)?;
        let res = segment_image(&img, &net, &fcfg, 0.5).map_err(err)?;

        let data = img.data();
        let protos: Vec<Vec<f64>> = points
            .iter()
            .map(|p| ref_features(data, 5, 5, 3, p.x, p.y, i64::from(r)))
            .collect();
        for y in 0..5 {
            for x in 0..5 {
                let f = ref_features(data, 5, 5, 3, x, y, i64::from(r));
                let z1: Vec<f64> = protos.iter().map(|w| ref_indices(&f, w, d).unwrap().2).collect();
                let expect = if z1.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    logistic(ref_indices(&z1, &w2, 1.0).unwrap().2, 2000.0, 0.0)
                };
                let got = res.raw[y * 5 + x];
                ensure(got.to_bits() == expect.to_bits(), || {
                    format!("image {case} pixel ({x},{y}): {got:e} vs oracle {expect:e}")
                })?;
                ensure(res.mask.get(x, y) == (expect >= 0.5), || format!("image {case} pixel ({x},{y}): mask"))?;
                pixels += 1;
            }
        }
    }
    Ok(format!("20 images, {pixels} pixels bit-identical to the per-pixel oracle"))
}

fn gradient_correctness() -> Check {
    let scene = two_blob_scene(256, 0.02, 7).map_err(err)?;
    let mut arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 1.0, 0.0, 0.5).map_err(err)?;
    arch.upper_layers[0].params.activation = Activation::Linear;
    let (net, pixels) = prepare_training(&scene.image, &scene.gold(), &scene.points, &arch, 10).map_err(err)?;
    let refs = [WeightRef::new(1, 0, 0), WeightRef::new(1, 0, 1)];
    let eval = Evaluator::for_refs(&net, &pixels, &refs).map_err(err)?;
    let a = |w: &[f64]| -> mmnn::Result<f64> { eval.objective(&net.with_weights(&refs, w)?, &Objective::ObjectiveA) };

    let rel_error = |w: [f64; 2]| -> Result<(f64, Vec<f64>, Vec<f64>), String> {
        let g = fd_gradient(a, &w, 0.01).map_err(err)?;
        let o = secant_gradient(|v| a(v).unwrap(), &w, 0.001);
        let diff = ((g[0] - o[0]).powi(2) + (g[1] - o[1]).powi(2)).sqrt();
        Ok((diff / (o[0].powi(2) + o[1].powi(2)).sqrt(), g, o))
    };
    // Layer-1 outputs lie in [0, 1], so every pixel puts a kink of min(Z, |w|)
    // somewhere inside the unit box. Beyond it objective A is smooth.
    let mut worst: f64 = 0.0;
    for w in [[1.3, -1.2], [1.1, -1.6], [-1.4, 1.2], [1.25, 1.5], [1.7, -1.05]] {
        let (rel, g, o) = rel_error(w)?;
        ensure(rel < 1e-3, || format!("at {w:?}: fd {g:?} vs secant {o:?}, rel {rel:e}"))?;
        worst = worst.max(rel);
    }
    let mut kinked: f64 = 0.0;
    for w in [[0.5, -0.5], [0.8, -0.3], [0.2, -0.9]] {
        kinked = kinked.max(rel_error(w)?.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_affine: f64 = 0.0;
    for _ in 0..200 {
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b = rng.random_range(-3.0..3.0);
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |v: &[f64]| Ok(c.iter().zip(v).map(|(ci, vi)| ci * vi).sum::<f64>() + b);
        let g = fd_gradient(f, &w, 0.01).map_err(err)?;
        for (gi, ci) in g.iter().zip(&c) {
            worst_affine = worst_affine.max((gi - ci).abs());
        }
    }
    ensure(worst_affine <= 1e-12, || format!("affine error {worst_affine:e}"))?;
    Ok(format!(
        "objective A rel. error {worst:.1e} (< 1e-3) off the kinks, {kinked:.1e} inside the unit box (reported only); affine error {worst_affine:.1e} (≤ 1e-12)"
    ))
}

fn two_blob_training_set() -> mmnn::Result<(NetworkSpec, mmnn::PixelSet)> {
    let scene = two_blob_scene(256, 0.02, 7)?;
    let arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5)?;
    prepare_training(&scene.image, &scene.gold(), &scene.points, &arch, 10)
}

fn optimization_vs_search() -> Check {
    let started = Instant::now();
    let (net, pixels) = two_blob_training_set().map_err(err)?;
    let ba = Objective::BalancedAccuracy { threshold: 0.5 };
    let free = [WeightRef::new(1, 0, 0), WeightRef::new(1, 0, 1)];
    let grid = sweep(&net, &pixels, free, [(-1.0, 1.0); 2], 0.05, &ba).map_err(err)?;
    let cfg = TrainConfig {
        num_starts: 10,
        max_steps: 30,
        fd_resolution: 0.01,
        step_size: 0.05,
        seed: 7,
        ..TrainConfig::default()
    };
    let trained = multi_start_train(&net, &pixels, &cfg).map_err(err)?;
    let w = trained.network.get_weights(&free);
    let final_ba = Evaluator::for_refs(&net, &pixels, &free)
        .and_then(|e| e.objective(&trained.network, &ba))
        .map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    ensure(final_ba >= grid.max_value() - 0.02, || {
        format!("trained BA {final_ba:.4} vs grid best {:.4}", grid.max_value())
    })?;
    ensure(w[0] > 0.0 && w[1] < 0.0, || format!("winning weights {w:?}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "trained BA {final_ba:.4} at ({:.3}, {:.3}); grid best {:.4} at ({:.2}, {:.2}); {secs:.1} s",
        w[0],
        w[1],
        grid.max_value(),
        grid.argmax_point().0,
        grid.argmax_point().1
    ))
}

fn end_to_end() -> Check {
    let scene = two_blob_scene(256, 0.02, 7).map_err(err)?;
    let gold = scene.gold();
    let arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5).map_err(err)?;
    let started = Instant::now();
    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let trained = train_network(&scene.image, &gold, &scene.points, &arch, &cfg, 10).map_err(err)?;
    let mut res = segment_image(&scene.image, &trained.network, &arch.features, arch.threshold).map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    res.evaluate(&gold).map_err(err)?;
    let ba = res.balanced_accuracy.unwrap();
    ensure(ba >= 0.95, || format!("BA {ba:.4}"))?;
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("256x256, r=3, factor-10 training: BA {ba:.4} in {secs:.2} s"))
}

fn three_layer_joint_beats_or() -> Check {
    let seed = 3;
    let scene = two_object_scene(256, 0.02, seed).map_err(err)?;
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
        let arch = ArchSpec::two_layer(features, 5.0, 5000.0, 0.0, 0.5).map_err(err)?;
        let t = train_network(&scene.image, class_gold, &scene.points_for(class), &arch, &cfg, 10).map_err(err)?;
        masks.push(segment_image(&scene.image, &t.network, &features, 0.5).map_err(err)?.mask);
    }
    let or_ba = confusion(&or_combine(&masks).map_err(err)?, &gold)
        .and_then(|c| c.balanced_accuracy())
        .map_err(err)?;

    let arch = ArchSpec::three_layer(features, 5.0, 2, 5000.0, 0.0, 0.5).map_err(err)?;
    let t = train_network(&scene.image, &gold, &scene.points, &arch, &cfg, 10).map_err(err)?;
    let mut joint = segment_image(&scene.image, &t.network, &features, 0.5).map_err(err)?;
    joint.evaluate(&gold).map_err(err)?;
    let joint_ba = joint.balanced_accuracy.unwrap();
    ensure(joint_ba > or_ba, || format!("joint {joint_ba:.4} vs OR {or_ba:.4}"))?;
    Ok(format!("joint BA {joint_ba:.4} > thresholded-OR BA {or_ba:.4}"))
}

fn landscape_sanity() -> Check {
    let (net, pixels) = two_blob_training_set().map_err(err)?;
    let ba = Objective::BalancedAccuracy { threshold: 0.5 };
    let free = [WeightRef::new(1, 0, 0), WeightRef::new(1, 0, 1)];
    let grid = sweep(&net, &pixels, free, [(-1.0, 1.0); 2], 0.05, &ba).map_err(err)?;
    let basins = basin_count(&grid);
    ensure((1..=10).contains(&basins), || format!("{basins} basins"))?;

    let cfg = TrainConfig {
        seed: 7,
        objective: ba,
        ..TrainConfig::default()
    };
    let trained = multi_start_train(&net, &pixels, &cfg).map_err(err)?;
    let mut confined = 0;
    let mut best_traj = f64::NEG_INFINITY;
    for t in &trained.trajectories {
        if t.steps.iter().all(|s| s.weights.iter().all(|w| (-1.0..=1.0).contains(w))) {
            confined += 1;
            best_traj = best_traj.max(t.final_objective());
            ensure(grid.max_value() >= t.final_objective() - 0.02, || {
                format!("trajectory ends at {:.4} above grid max {:.4}", t.final_objective(), grid.max_value())
            })?;
        }
    }
    ensure(confined > 0, || "no trajectory stayed inside the swept range".into())?;

    let bowl = LandscapeGrid::evaluate((-1.0, 1.0), (-1.0, 1.0), 0.05, |x, y| Ok(x * x + y * y)).map_err(err)?;
    let pitch = bowl.pitch().0;
    let contours = level_sets(&bowl, &[0.25]);
    let mut dev: f64 = 0.0;
    let mut n = 0;
    for c in &contours {
        for (x, y) in &c.points {
            dev = dev.max(((x * x + y * y).sqrt() - 0.5).abs());
            n += 1;
        }
    }
    ensure(n > 0 && dev < pitch, || format!("{n} contour points, deviation {dev:e} vs pitch {pitch}"))?;
    Ok(format!(
        "{basins} basin(s); grid max {:.4} vs best confined trajectory {best_traj:.4} ({confined}/{}); circle deviation {dev:.4} < {pitch}",
        grid.max_value(),
        trained.trajectories.len()
    ))
}

fn determinism() -> Check {
    let run = || -> mmnn::Result<(Vec<bool>, Vec<Vec<u64>>, String)> {
        let scene = two_blob_scene(128, 0.02, 21)?;
        let arch = ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5)?;
        let cfg = TrainConfig {
            seed: 21,
            ..TrainConfig::default()
        };
        let t = train_network(&scene.image, &scene.gold(), &scene.points, &arch, &cfg, 10)?;
        let res = segment_image(&scene.image, &t.network, &arch.features, 0.5)?;
        let traj = t
            .trajectories
            .iter()
            .flat_map(|tr| &tr.steps)
            .map(|s| s.weights.iter().chain([&s.objective]).map(|v| v.to_bits()).collect())
            .collect();
        Ok((res.mask.bits().to_vec(), traj, t.network.to_json()))
    };
    let a = run().map_err(err)?;
    let b = run().map_err(err)?;
    ensure(a.0 == b.0, || "masks differ".into())?;
    ensure(a.1 == b.1, || "trajectories differ".into())?;
    ensure(a.2 == b.2, || "serialized networks differ".into())?;
    Ok(format!("masks, {} trajectory points and network JSON bit-identical", a.1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("multiset arithmetic", multiset_arithmetic),
        ("similarity property suite", similarity_suite),
        ("brute-force segmentation oracle", brute_force_oracle),
        ("gradient correctness", gradient_correctness),
        ("optimization vs exhaustive search", optimization_vs_search),
        ("end-to-end synthetic segmentation", end_to_end),
        ("three-layer joint training vs thresholded OR", three_layer_joint_beats_or),
        ("landscape sanity", landscape_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
