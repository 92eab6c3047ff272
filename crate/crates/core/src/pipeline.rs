//! End-to-end segmentation: build or load a network, train it on a
//! subsampled image, scan every pixel and write the artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AnnotatedPoint, BinaryMask, FeatureConfig, FeatureExtractor, Image, PointRole};
use crate::imageio;
use crate::multiset::{SimilarityConfig, SimilarityMode};
use crate::network::{Activation, ForwardDiagnostics, NetworkSpec, Neuron};
use crate::training::{
    confusion, multi_start_train, prototype_init, trajectories_to_csv, ConfusionCounts, PixelSet, TrainConfig,
    Trajectory,
};

/// Neuron parameters shared by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub d: f64,
    pub mode: SimilarityMode,
    pub activation: Activation,
}

impl LayerParams {
    pub fn similarity(&self) -> Result<SimilarityConfig> {
        SimilarityConfig::new(self.d, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperLayer {
    pub neurons: usize,
    #[serde(flatten)]
    pub params: LayerParams,
    /// Initial weights, one row per neuron; defaults are described on [`ArchSpec::build`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<Vec<f64>>>,
}

/// Network architecture: a prototype layer followed by trainable layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    #[serde(default)]
    pub features: FeatureConfig,
    pub first_layer: LayerParams,
    pub upper_layers: Vec<UpperLayer>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl ArchSpec {
    /// One prototype layer and one signed sigmoid output neuron.
    pub fn two_layer(features: FeatureConfig, d: f64, a: f64, b: f64, threshold: f64) -> Result<Self> {
        Ok(Self {
            features,
            first_layer: LayerParams {
                d,
                mode: SimilarityMode::NonNegative,
                activation: Activation::Linear,
            },
            upper_layers: vec![UpperLayer {
                neurons: 1,
                params: LayerParams {
                    d: 1.0,
                    mode: SimilarityMode::Signed,
                    activation: Activation::sigmoid(a, b)?,
                },
                init: None,
            }],
            threshold,
        })
    }

    /// Prototype layer, `hidden` signed sigmoid neurons, one signed sigmoid output.
    pub fn three_layer(features: FeatureConfig, d: f64, hidden: usize, a: f64, b: f64, threshold: f64) -> Result<Self> {
        let mut arch = Self::two_layer(features, d, a, b, threshold)?;
        let params = arch.upper_layers[0].params;
        arch.upper_layers = vec![
            UpperLayer {
                neurons: hidden,
                params,
                init: None,
            },
            UpperLayer {
                neurons: 1,
                params,
                init: None,
            },
        ];
        Ok(arch)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("architecture JSON", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }

    /// Builds the network for `points` on `img`.
    ///
    /// Without explicit `init`, the first upper layer gives neuron `k` weight +1
    /// for prototypes and −1 for counter-prototypes of the `k`-th class (in order
    /// of first appearance, all classes when the layer has one neuron) and 0
    /// elsewhere; deeper layers start at all +1.
    pub fn build(&self, img: &Image, points: &[AnnotatedPoint]) -> Result<NetworkSpec> {
        let first = prototype_init(
            img,
            points,
            &self.features,
            &self.first_layer.similarity()?,
            &self.first_layer.activation,
        )?;
        let input_dim = self.features.feature_len(img.channels());
        let mut classes: Vec<&str> = Vec::new();
        for p in points {
            if !classes.contains(&p.class_label.as_str()) {
                classes.push(&p.class_label);
            }
        }

        let mut layers = vec![first];
        for (u, spec) in self.upper_layers.iter().enumerate() {
            let fan_in = layers.last().map_or(0, Vec::len);
            let sim = spec.params.similarity()?;
            let rows = match &spec.init {
                Some(rows) => {
                    if rows.len() != spec.neurons {
                        return Err(Error::Topology(format!(
                            "upper layer {u} has {} init rows for {} neurons",
                            rows.len(),
                            spec.neurons
                        )));
                    }
                    rows.clone()
                }
                None if u == 0 => (0..spec.neurons)
                    .map(|k| {
                        points
                            .iter()
                            .map(|p| {
                                let mine = spec.neurons == 1 || classes.get(k % classes.len()) == Some(&p.class_label.as_str());
                                match (mine, p.role) {
                                    (false, _) => 0.0,
                                    (true, PointRole::Prototype) => 1.0,
                                    (true, PointRole::CounterPrototype) => -1.0,
                                }
                            })
                            .collect()
                    })
                    .collect(),
                None => vec![vec![1.0; fan_in]; spec.neurons],
            };
            let layer = rows
                .into_iter()
                .map(|w| Neuron::from_weights(w, sim.d(), sim.mode(), spec.params.activation))
                .collect::<Result<Vec<_>>>()?;
            layers.push(layer);
        }
        NetworkSpec::new(input_dim, layers)
    }
}

/// Output of [`train_network`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub network: NetworkSpec,
    pub trajectories: Vec<Trajectory>,
    pub winner: usize,
    pub best_objective: f64,
}

/// The untrained network and labelled pixel set for the `factor`-subsampled
/// image. Point coordinates are divided by `factor`.
pub fn prepare_training(
    img: &Image,
    gold: &BinaryMask,
    points: &[AnnotatedPoint],
    arch: &ArchSpec,
    factor: usize,
) -> Result<(NetworkSpec, PixelSet)> {
    gold.check_matches(img)?;
    for p in points {
        p.check_inside(img.width(), img.height())?;
    }
    let small = img.subsample(factor)?;
    let small_gold = gold.subsample(factor)?;
    let small_points: Vec<AnnotatedPoint> = points.iter().map(|p| p.scaled_down(factor)).collect();
    let net = arch.build(&small, &small_points)?;
    let pixels = PixelSet::from_image(&small, Some(&small_gold), &arch.features)?;
    Ok((net, pixels))
}

/// Builds the network on the `factor`-subsampled image and trains it on the
/// subsampled gold mask.
pub fn train_network(
    img: &Image,
    gold: &BinaryMask,
    points: &[AnnotatedPoint],
    arch: &ArchSpec,
    cfg: &TrainConfig,
    factor: usize,
) -> Result<Trained> {
    let (net, pixels) = prepare_training(img, gold, points, arch, factor)?;
    let outcome = multi_start_train(&net, &pixels, cfg)?;
    Ok(Trained {
        best_objective: outcome.best_objective(),
        network: outcome.network,
        trajectories: outcome.trajectories,
        winner: outcome.winner,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub zero_vector_events: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    /// Network output per pixel, row-major.
    pub raw: Vec<f64>,
    pub mask: BinaryMask,
    pub confusion: Option<ConfusionCounts>,
    pub balanced_accuracy: Option<f64>,
    pub diagnostics: RunDiagnostics,
}

impl SegmentationResult {
    /// Fills confusion counts and balanced accuracy from `gold`.
    pub fn evaluate(&mut self, gold: &BinaryMask) -> Result<()> {
        let c = confusion(&self.mask, gold)?;
        self.balanced_accuracy = Some(c.balanced_accuracy()?);
        self.confusion = Some(c);
        Ok(())
    }

    /// Mask for another threshold over the same raw outputs.
    pub fn rethreshold(&self, threshold: f64) -> BinaryMask {
        threshold_mask(self.width, self.height, &self.raw, threshold)
    }
}

/// `raw ≥ threshold`, inclusive.
pub fn threshold_mask(width: usize, height: usize, raw: &[f64], threshold: f64) -> BinaryMask {
    BinaryMask::new(width, height, raw.iter().map(|&v| v >= threshold).collect()).expect("raw has one value per pixel")
}

/// Runs `net` on every pixel. Rows are processed in parallel; results do not depend on scheduling.
pub fn segment_image(img: &Image, net: &NetworkSpec, fcfg: &FeatureConfig, threshold: f64) -> Result<SegmentationResult> {
    if net.output_dim() != 1 {
        return Err(Error::Config(format!("segmentation needs one output, network has {}", net.output_dim())));
    }
    let expected = fcfg.feature_len(img.channels());
    if net.input_dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "network expects {} inputs, radius {} on {} channels gives {expected}",
            net.input_dim(),
            fcfg.radius,
            img.channels()
        )));
    }
    let started = Instant::now();
    let extractor = FeatureExtractor::new(*fcfg);
    let (w, h) = (img.width(), img.height());
    let rows = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w);
            let mut diag = ForwardDiagnostics::default();
            for x in 0..w {
                let f = extractor.extract_unchecked(img, x, y);
                let (out, d) = net.forward_layers(0, &f)?;
                diag.merge(d);
                row.push(out[0]);
            }
            Ok((row, diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut raw = Vec::with_capacity(w * h);
    let mut diag = ForwardDiagnostics::default();
    for (row, d) in rows {
        raw.extend(row);
        diag.merge(d);
    }
    let mask = threshold_mask(w, h, &raw, threshold);
    Ok(SegmentationResult {
        width: w,
        height: h,
        raw,
        mask,
        confusion: None,
        balanced_accuracy: None,
        diagnostics: RunDiagnostics {
            zero_vector_events: diag.zero_vector_events,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Where the network of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSource {
    /// A serialized network.
    Load { path: PathBuf },
    /// Built from annotated points; trained when `train` is set.
    Build {
        arch: ArchSpec,
        points: PathBuf,
        #[serde(default)]
        train: Option<TrainConfig>,
    },
}

/// A full experiment, as stored in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub image: PathBuf,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    pub network: NetworkSource,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_subsample() -> usize {
    10
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("pipeline config", e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.subsample == 0 {
            return Err(Error::Config("subsample factor must be at least 1".into()));
        }
        let mut paths = vec![&self.image];
        paths.extend(self.gold.as_ref());
        match &self.network {
            NetworkSource::Load { path } => paths.push(path),
            NetworkSource::Build { points, train, .. } => {
                paths.push(points);
                if train.is_some() && self.gold.is_none() {
                    return Err(Error::Config("training needs a gold mask".into()));
                }
                if let Some(t) = train {
                    t.validate()?;
                }
            }
        }
        for p in paths {
            if !p.exists() {
                return Err(Error::FileNotFound(p.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub width: usize,
    pub height: usize,
    pub threshold: f64,
    pub object_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winning_start: Option<usize>,
    pub diagnostics: RunDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub result: SegmentationResult,
    pub network: NetworkSpec,
    pub trajectories: Vec<Trajectory>,
    pub metrics: Metrics,
    pub files: Vec<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    NetworkSpec::from_json(&read_text(path.as_ref())?)
}

/// Loads inputs, obtains the network, segments at full resolution and, when
/// `out_dir` is set, writes `raw.f32`, `raw_preview.pgm`, `mask.pgm`,
/// `metrics.json`, `network.json` and (after training) `trajectories.csv`.
pub fn run_experiment(cfg: &PipelineConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let img = imageio::load_image(&cfg.image)?;
    let gold = cfg.gold.as_ref().map(imageio::load_mask).transpose()?;
    if let Some(g) = &gold {
        g.check_matches(&img)?;
    }

    let (network, features, trajectories, training_objective, winning_start) = match &cfg.network {
        NetworkSource::Load { path } => (load_network(path)?, cfg.features, Vec::new(), None, None),
        NetworkSource::Build { arch, points, train } => {
            let points = imageio::load_points(points)?;
            match (train, &gold) {
                (Some(t), Some(g)) => {
                    let trained = train_network(&img, g, &points, arch, t, cfg.subsample)?;
                    (
                        trained.network,
                        arch.features,
                        trained.trajectories,
                        Some(trained.best_objective),
                        Some(trained.winner),
                    )
                }
                (Some(_), None) => return Err(Error::Config("training needs a gold mask".into())),
                (None, _) => (arch.build(&img, &points)?, arch.features, Vec::new(), None, None),
            }
        }
    };

    let mut result = segment_image(&img, &network, &features, cfg.threshold)?;
    if let Some(g) = &gold {
        result.evaluate(g)?;
    }
    let metrics = Metrics {
        width: result.width,
        height: result.height,
        threshold: cfg.threshold,
        object_pixels: result.mask.count(),
        confusion: result.confusion,
        balanced_accuracy: result.balanced_accuracy,
        training_objective,
        winning_start,
        diagnostics: result.diagnostics,
    };

    let mut files = Vec::new();
    if let Some(dir) = &cfg.out_dir {
        files = write_artifacts(dir, &result, &network, &trajectories, &metrics)?;
    }
    Ok(ExperimentOutput {
        result,
        network,
        trajectories,
        metrics,
        files,
    })
}

pub fn write_artifacts(
    dir: &Path,
    result: &SegmentationResult,
    network: &NetworkSpec,
    trajectories: &[Trajectory],
    metrics: &Metrics,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        files.push(p);
        Ok(())
    };
    put("mask.pgm", &imageio::encode_mask_pgm(&result.mask))?;
    put("raw_preview.pgm", &imageio::preview_pgm(result.width, result.height, &result.raw))?;
    put("network.json", network.to_json().as_bytes())?;
    put(
        "metrics.json",
        serde_json::to_string_pretty(metrics).expect("metrics serialize").as_bytes(),
    )?;
    if !trajectories.is_empty() {
        put("trajectories.csv", trajectories_to_csv(trajectories, true).as_bytes())?;
    }
    let raw = dir.join("raw.f32");
    imageio::write_raw_f32(&raw, &result.raw)?;
    files.push(raw);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_all_object() {
        let img = Image::new(6, 5, 3, vec![0.3; 90]).unwrap();
        let fcfg = FeatureConfig::new(2, true);
        let points = [AnnotatedPoint::prototype(1, 1, "o")];
        let layer = prototype_init(&img, &points, &fcfg, &SimilarityConfig::non_negative(3.0).unwrap(), &Activation::Linear).unwrap();
        let net = NetworkSpec::new(fcfg.feature_len(3), vec![layer]).unwrap();
        let r = segment_image(&img, &net, &fcfg, 0.5).unwrap();
        assert!(r.raw.iter().all(|&v| v == 1.0));
        assert_eq!(r.mask.count(), 30);
        let r0 = segment_image(&img, &net, &fcfg, 0.0).unwrap();
        assert_eq!(r0.mask.count(), 30);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = threshold_mask(3, 1, &[0.2, 0.5, 0.7], 0.5);
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn mismatched_radius_is_rejected() {
        let img = Image::new(4, 4, 1, vec![0.5; 16]).unwrap();
        let fcfg = FeatureConfig::new(1, true);
        let layer = prototype_init(&img, &[AnnotatedPoint::prototype(0, 0, "o")], &fcfg, &SimilarityConfig::non_negative(1.0).unwrap(), &Activation::Linear).unwrap();
        let net = NetworkSpec::new(5, vec![layer]).unwrap();
        assert!(segment_image(&img, &net, &FeatureConfig::new(2, true), 0.5).is_err());
    }

    #[test]
    fn default_upper_init_follows_roles_and_classes() {
        let img = Image::from_fn(8, 8, 1, |x, _| vec![x as f64 / 8.0]).unwrap();
        let fcfg = FeatureConfig::new(1, true);
        let pts = vec![
            AnnotatedPoint::prototype(1, 1, "a"),
            AnnotatedPoint::counter(2, 2, "a"),
            AnnotatedPoint::prototype(5, 5, "b"),
            AnnotatedPoint::counter(6, 6, "b"),
        ];
        let mut arch = ArchSpec::two_layer(fcfg, 3.0, 5000.0, 0.0, 0.5).unwrap();
        let net = arch.build(&img, &pts).unwrap();
        assert_eq!(net.layers()[1][0].weights().as_slice(), &[1.0, -1.0, 1.0, -1.0]);

        arch.upper_layers[0].neurons = 2;
        arch.upper_layers.push(UpperLayer {
            neurons: 1,
            params: arch.upper_layers[0].params,
            init: None,
        });
        let net = arch.build(&img, &pts).unwrap();
        assert_eq!(net.layers()[1][0].weights().as_slice(), &[1.0, -1.0, 0.0, 0.0]);
        assert_eq!(net.layers()[1][1].weights().as_slice(), &[0.0, 0.0, 1.0, -1.0]);
        assert_eq!(net.layers()[2][0].weights().as_slice(), &[1.0, 1.0]);

        arch.upper_layers[1].init = Some(vec![vec![1.0, 1.0], vec![0.5, 0.5]]);
        assert!(arch.build(&img, &pts).is_err());
    }

    #[test]
    fn arch_json() {
        let json = r#"{
            "features": {"radius": 3},
            "first_layer": {"d": 5, "mode": "non_negative", "activation": {"kind": "linear"}},
            "upper_layers": [{"neurons": 1, "d": 1, "mode": "signed",
                              "activation": {"kind": "sigmoid", "a": 5000, "b": 0}}],
            "threshold": 0.5
        }"#;
        let arch = ArchSpec::from_json(json).unwrap();
        assert_eq!(arch.features.radius, 3);
        assert!(arch.features.sort_within_channel);
        assert_eq!(arch, ArchSpec::two_layer(FeatureConfig::new(3, true), 5.0, 5000.0, 0.0, 0.5).unwrap());
    }

    #[test]
    fn config_validation() {
        let cfg = PipelineConfig {
            image: "/nonexistent.png".into(),
            gold: None,
            network: NetworkSource::Load { path: "/nonexistent.json".into() },
            features: FeatureConfig::default(),
            threshold: 0.5,
            subsample: 10,
            out_dir: None,
        };
        assert!(matches!(cfg.validate(), Err(Error::FileNotFound(_))));
        let bad = PipelineConfig { threshold: 1.5, ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = PipelineConfig { subsample: 0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
