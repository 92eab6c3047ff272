//! Objectives and multi-start gradient-ascent training.
//!
//! Two objectives score a network against a gold mask:
//!
//! - [`Objective::ObjectiveA`]: sum of outputs over gold-object pixels minus the
//!   sum over gold-background pixels.
//! - [`Objective::BalancedAccuracy`]: mean of sensitivity and specificity of the
//!   output thresholded at `T` (inclusive).
//!
//! Gradients are central finite differences with probe distance `δw`; each
//! ascent step moves a fixed length `η` along the normalized gradient. A start
//! that lands on a flat spot (zero gradient) stops immediately, and so does a
//! trajectory whose next step would lower the objective.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AnnotatedPoint, BinaryMask, FeatureConfig, FeatureExtractor, Image};
use crate::multiset::{FeatureVector, SimilarityConfig};
use crate::network::{Activation, ForwardDiagnostics, NetworkSpec, Neuron, NeuronLabel, WeightRef, WeightSelector};
use crate::numeric::exact_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_bits(pred: &[bool], gold: &[bool]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn balanced_accuracy(&self) -> Result<f64> {
        balanced_accuracy(self)
    }
}

/// Per-pixel counts with gold `true` as the positive class.
pub fn confusion(pred: &BinaryMask, gold: &BinaryMask) -> Result<ConfusionCounts> {
    if !pred.same_dims(gold.width(), gold.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, gold is {}x{}",
            pred.width(),
            pred.height(),
            gold.width(),
            gold.height()
        )));
    }
    Ok(ConfusionCounts::from_bits(pred.bits(), gold.bits()))
}

pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let positives = c.tp + c.fn_;
    let negatives = c.tn + c.fp;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateGold {
            positives,
            negatives,
        });
    }
    Ok(0.5 * c.tp as f64 / positives as f64 + 0.5 * c.tn as f64 / negatives as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    BalancedAccuracy { threshold: f64 },
    #[default]
    ObjectiveA,
}

impl Objective {
    /// Scores per-pixel outputs against gold labels.
    pub fn score(&self, outputs: &[f64], gold: &[bool]) -> Result<f64> {
        match *self {
            Objective::ObjectiveA => Ok(objective_a_from_outputs(outputs, gold)),
            Objective::BalancedAccuracy { threshold } => {
                let pred: Vec<bool> = outputs.iter().map(|&y| y >= threshold).collect();
                balanced_accuracy(&ConfusionCounts::from_bits(&pred, gold))
            }
        }
    }
}

/// `Σ_object y − Σ_background y`, correctly rounded.
pub fn objective_a_from_outputs(outputs: &[f64], gold: &[bool]) -> f64 {
    exact_sum(
        outputs
            .iter()
            .zip(gold)
            .map(|(&y, &g)| if g { y } else { -y }),
    )
}

/// Feature vectors for a set of pixels, optionally with gold labels.
#[derive(Debug, Clone)]
pub struct PixelSet {
    width: usize,
    height: usize,
    features: Vec<Vec<f64>>,
    gold: Option<Vec<bool>>,
}

impl PixelSet {
    /// Every pixel of `img` in row-major order.
    pub fn from_image(img: &Image, gold: Option<&BinaryMask>, fcfg: &FeatureConfig) -> Result<Self> {
        if let Some(g) = gold {
            g.check_matches(img)?;
        }
        let extractor = FeatureExtractor::new(*fcfg);
        let (w, h) = (img.width(), img.height());
        let features = (0..w * h)
            .into_par_iter()
            .map(|i| extractor.extract_unchecked(img, i % w, i / w))
            .collect();
        Ok(Self {
            width: w,
            height: h,
            features,
            gold: gold.map(|g| g.bits().to_vec()),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn gold(&self) -> Option<&[bool]> {
        self.gold.as_deref()
    }

    fn require_gold(&self) -> Result<&[bool]> {
        self.gold
            .as_deref()
            .ok_or_else(|| Error::Config("objective needs a gold mask".into()))
    }
}

/// Evaluates networks that differ from a base network only in layers `start..`.
///
/// Layer outputs before `start` are computed once and reused.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pixels: &'a PixelSet,
    start: usize,
    cached: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(base: &NetworkSpec, pixels: &'a PixelSet, start: usize) -> Result<Self> {
        if let Some(f) = pixels.features.first() {
            if f.len() != base.input_dim() {
                return Err(Error::LengthMismatch {
                    left: f.len(),
                    right: base.input_dim(),
                });
            }
        }
        let start = start.min(base.num_layers());
        let cached = if start == 0 {
            Vec::new()
        } else {
            pixels
                .features
                .par_iter()
                .map(|f| base.forward_prefix(start, f))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self {
            pixels,
            start,
            cached,
        })
    }

    /// Cache everything below the lowest layer named in `refs`.
    pub fn for_refs(base: &NetworkSpec, pixels: &'a PixelSet, refs: &[WeightRef]) -> Result<Self> {
        let start = refs.iter().map(|r| r.layer).min().unwrap_or(0);
        Self::new(base, pixels, start)
    }

    pub fn pixels(&self) -> &PixelSet {
        self.pixels
    }

    /// First output of `net` at every pixel, in pixel order.
    pub fn outputs(&self, net: &NetworkSpec) -> Result<(Vec<f64>, ForwardDiagnostics)> {
        let inputs: &[Vec<f64>] = if self.start == 0 {
            &self.pixels.features
        } else {
            &self.cached
        };
        let per_pixel = inputs
            .par_iter()
            .map(|x| net.forward_layers(self.start, x))
            .collect::<Result<Vec<_>>>()?;
        let mut diag = ForwardDiagnostics::default();
        let mut out = Vec::with_capacity(per_pixel.len());
        for (y, d) in per_pixel {
            diag.merge(d);
            out.push(y[0]);
        }
        Ok((out, diag))
    }

    pub fn objective(&self, net: &NetworkSpec, objective: &Objective) -> Result<f64> {
        require_single_output(net)?;
        let gold = self.pixels.require_gold()?;
        let (outputs, _) = self.outputs(net)?;
        objective.score(&outputs, gold)
    }
}

fn require_single_output(net: &NetworkSpec) -> Result<()> {
    if net.output_dim() == 1 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "objectives need a single-output network, got {} outputs",
            net.output_dim()
        )))
    }
}

pub fn objective_a(net: &NetworkSpec, img: &Image, gold: &BinaryMask, fcfg: &FeatureConfig) -> Result<f64> {
    let pixels = PixelSet::from_image(img, Some(gold), fcfg)?;
    Evaluator::new(net, &pixels, 0)?.objective(net, &Objective::ObjectiveA)
}

pub fn objective_ba(
    net: &NetworkSpec,
    img: &Image,
    gold: &BinaryMask,
    fcfg: &FeatureConfig,
    threshold: f64,
) -> Result<f64> {
    let pixels = PixelSet::from_image(img, Some(gold), fcfg)?;
    Evaluator::new(net, &pixels, 0)?.objective(net, &Objective::BalancedAccuracy { threshold })
}

/// Central differences `(f(w + δw·eᵢ) − f(w − δw·eᵢ)) / 2δw` for every coordinate.
pub fn fd_gradient<F>(objective: F, w: &[f64], dw: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(dw > 0.0) {
        return Err(Error::Config(format!("finite-difference resolution must be > 0, got {dw}")));
    }
    let mut probe = w.to_vec();
    let mut g = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        probe[i] = w[i] + dw;
        let up = objective(&probe)?;
        probe[i] = w[i] - dw;
        let down = objective(&probe)?;
        probe[i] = w[i];
        g.push((up - down) / (2.0 * dw));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `w ← w + η·g/‖g‖`
    #[default]
    Normalized,
    /// `w ← w + η·g`
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoints {
    /// `P` points drawn uniformly from the start range.
    #[default]
    Random,
    /// The network's current weights first, then `P − 1` random points.
    IncludeCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_starts: usize,
    pub max_steps: usize,
    pub fd_resolution: f64,
    pub step_size: f64,
    pub stop_threshold: f64,
    pub objective: Objective,
    pub seed: u64,
    pub trainable: WeightSelector,
    pub step_rule: StepRule,
    pub start_points: StartPoints,
    pub start_range: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_starts: 10,
            max_steps: 30,
            fd_resolution: 0.01,
            step_size: 0.05,
            stop_threshold: 1e-6,
            objective: Objective::ObjectiveA,
            seed: 0,
            trainable: WeightSelector::UpperLayers,
            step_rule: StepRule::Normalized,
            start_points: StartPoints::Random,
            start_range: (-1.0, 1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_starts < 1 {
            return Err(Error::Config("need at least one start".into()));
        }
        if !(self.fd_resolution > 0.0) {
            return Err(Error::Config("fd_resolution must be > 0".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be > 0".into()));
        }
        if !(self.stop_threshold >= 0.0) {
            return Err(Error::Config("stop_threshold must be >= 0".into()));
        }
        let (lo, hi) = self.start_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config("start_range must satisfy lo < hi".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub weights: Vec<f64>,
    pub objective: f64,
}

/// Visited points of one ascent, starting with the initial weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn start(&self) -> &TrajectoryStep {
        &self.steps[0]
    }

    pub fn last(&self) -> &TrajectoryStep {
        self.steps.last().expect("trajectory is never empty")
    }

    pub fn final_objective(&self) -> f64 {
        self.last().objective
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `step,w_0..w_{d-1},objective`
    pub fn to_csv(&self) -> String {
        trajectories_to_csv(std::slice::from_ref(self), false)
    }
}

/// CSV for several trajectories; with `with_id`, a leading `trajectory` column.
pub fn trajectories_to_csv(trajectories: &[Trajectory], with_id: bool) -> String {
    let dim = trajectories.first().map_or(0, |t| t.start().weights.len());
    let mut out = String::new();
    if with_id {
        out.push_str("trajectory,");
    }
    out.push_str("step");
    for i in 0..dim {
        let _ = write!(out, ",w_{i}");
    }
    out.push_str(",objective\n");
    for (id, t) in trajectories.iter().enumerate() {
        for (k, s) in t.steps.iter().enumerate() {
            if with_id {
                let _ = write!(out, "{id},");
            }
            let _ = write!(out, "{k}");
            for w in &s.weights {
                let _ = write!(out, ",{w}");
            }
            let _ = writeln!(out, ",{}", s.objective);
        }
    }
    out
}

/// Fixed-length ascent from `w0`; see the module docs for the stopping rules.
pub fn gradient_ascent<F>(objective: F, w0: &[f64], cfg: &TrainConfig) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let mut w = w0.to_vec();
    let mut f = objective(&w)?;
    let mut steps = vec![TrajectoryStep {
        weights: w.clone(),
        objective: f,
    }];
    for _ in 0..cfg.max_steps {
        let g = fd_gradient(&objective, &w, cfg.fd_resolution)?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let scale = match cfg.step_rule {
            StepRule::Normalized => cfg.step_size / norm,
            StepRule::Raw => cfg.step_size,
        };
        let next: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi + scale * gi).collect();
        let f_next = objective(&next)?;
        if !(f_next >= f) {
            break;
        }
        steps.push(TrajectoryStep {
            weights: next.clone(),
            objective: f_next,
        });
        let converged = (f_next - f).abs() < cfg.stop_threshold;
        w = next;
        f = f_next;
        if converged {
            break;
        }
    }
    Ok(Trajectory { steps })
}

/// Draws `count` points uniformly from `[lo, hi)^dim`.
pub fn random_starts(seed: u64, count: usize, dim: usize, range: (f64, f64)) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(range.0..range.1)).collect())
        .collect()
}

/// Result of running every start: trajectories in start order plus the winner.
#[derive(Debug, Clone)]
pub struct MultiStart {
    pub trajectories: Vec<Trajectory>,
    pub winner: usize,
}

impl MultiStart {
    pub fn best(&self) -> &TrajectoryStep {
        self.trajectories[self.winner].last()
    }
}

/// Runs [`gradient_ascent`] from every start; the winner has the highest final
/// objective, ties going to the lowest start index.
pub fn multi_start_ascent<F>(objective: F, starts: &[Vec<f64>], cfg: &TrainConfig) -> Result<MultiStart>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if starts.is_empty() {
        return Err(Error::Config("no start points".into()));
    }
    let trajectories = starts
        .par_iter()
        .map(|w0| gradient_ascent(&objective, w0, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut winner = 0;
    for (i, t) in trajectories.iter().enumerate() {
        if t.final_objective() > trajectories[winner].final_objective() {
            winner = i;
        }
    }
    Ok(MultiStart {
        trajectories,
        winner,
    })
}

/// Adds `δw` to the first free coordinate of any neuron whose weights would be all zero.
pub fn nudge_zero_blocks(net: &NetworkSpec, refs: &[WeightRef], w: &[f64], dw: f64) -> Vec<f64> {
    let mut out = w.to_vec();
    let mut i = 0;
    while i < refs.len() {
        let (layer, neuron) = (refs[i].layer, refs[i].neuron);
        let mut j = i;
        while j < refs.len() && refs[j].layer == layer && refs[j].neuron == neuron {
            j += 1;
        }
        let base = net.layers()[layer][neuron].weights();
        let all_zero = (0..base.len()).all(|k| {
            match refs[i..j].iter().position(|r| r.index == k) {
                Some(p) => out[i + p] == 0.0,
                None => base[k] == 0.0,
            }
        });
        if all_zero {
            out[i] += dw;
        }
        i = j;
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: NetworkSpec,
    pub refs: Vec<WeightRef>,
    pub trajectories: Vec<Trajectory>,
    pub winner: usize,
}

impl TrainOutcome {
    pub fn best_objective(&self) -> f64 {
        self.trajectories[self.winner].final_objective()
    }
}

/// Trains the weights chosen by `cfg.trainable` on a labelled pixel set.
pub fn multi_start_train(net: &NetworkSpec, pixels: &PixelSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    require_single_output(net)?;
    pixels.require_gold()?;
    let refs = net.resolve(&cfg.trainable)?;
    if refs.is_empty() {
        return Err(Error::Config("trainable selector selects no weights".into()));
    }
    let evaluator = Evaluator::for_refs(net, pixels, &refs)?;
    let dw = cfg.fd_resolution;
    let objective = |w: &[f64]| -> Result<f64> {
        let w = nudge_zero_blocks(net, &refs, w, dw);
        let candidate = net.with_weights(&refs, &w)?;
        evaluator.objective(&candidate, &cfg.objective)
    };

    let mut starts = Vec::with_capacity(cfg.num_starts);
    let random_count = match cfg.start_points {
        StartPoints::Random => cfg.num_starts,
        StartPoints::IncludeCurrent => {
            starts.push(net.get_weights(&refs));
            cfg.num_starts - 1
        }
    };
    starts.extend(random_starts(cfg.seed, random_count, refs.len(), cfg.start_range));

    let run = multi_start_ascent(objective, &starts, cfg)?;
    let best = nudge_zero_blocks(net, &refs, &run.best().weights, dw);
    let network = net.with_weights(&refs, &best)?;
    Ok(TrainOutcome {
        network,
        refs,
        trajectories: run.trajectories,
        winner: run.winner,
    })
}

/// Convenience wrapper building the pixel set from an image and gold mask.
pub fn multi_start_train_image(
    net: &NetworkSpec,
    img: &Image,
    gold: &BinaryMask,
    fcfg: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let pixels = PixelSet::from_image(img, Some(gold), fcfg)?;
    multi_start_train(net, &pixels, cfg)
}

/// One first-layer neuron per annotated point, weights taken from its neighborhood.
pub fn prototype_init(
    img: &Image,
    points: &[AnnotatedPoint],
    fcfg: &FeatureConfig,
    sim: &SimilarityConfig,
    act: &Activation,
) -> Result<Vec<Neuron>> {
    if points.is_empty() {
        return Err(Error::Config("need at least one annotated point".into()));
    }
    let extractor = FeatureExtractor::new(*fcfg);
    points
        .iter()
        .map(|p| {
            let w: FeatureVector = extractor.extract(img, p.x as i64, p.y as i64)?;
            Ok(Neuron::new(w, *sim, *act)?.with_label(NeuronLabel {
                role: p.role,
                class_label: p.class_label.clone(),
            }))
        })
        .collect()
}
