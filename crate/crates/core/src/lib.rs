//! Multiset-based neural networks for color image segmentation.
//!
//! Neurons compare inputs with their weights through a multiset similarity
//! (the coincidence index) instead of a dot product. The first layer holds
//! prototype neurons copied from annotated pixels; upper layers are trained
//! by finite-difference gradient ascent from many random starts.
//!
//! The `examples/` directory has one runnable program per capability:
//!
//! ```text
//! cargo run --release -p mmnn --example similarity
//! cargo run --release -p mmnn --example segment_two_layer
//! ```

pub mod error;
pub mod features;
pub mod imageio;
pub mod landscape;
pub mod multiset;
pub mod network;
pub mod numeric;
pub mod pipeline;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use features::{
    circular_offsets, extract_features, AnnotatedPoint, BinaryMask, BorderPolicy, FeatureConfig, FeatureExtractor,
    Image, PointRole,
};
pub use landscape::{basin_count, level_sets, parse_free_pair, parse_range, sweep, upper_weight_refs, Contour, LandscapeGrid};
pub use multiset::{
    coincidence, interiority, jaccard, FeatureVector, IntegerMultiset, SimilarityConfig, SimilarityMode,
};
pub use network::{or_combine, Activation, ForwardDiagnostics, NetworkSpec, Neuron, WeightRef, WeightSelector};
pub use numeric::{exact_sum, ExactSum};
pub use pipeline::{
    run_experiment, segment_image, train_network, ArchSpec, PipelineConfig, SegmentationResult,
};
pub use training::{
    balanced_accuracy, confusion, fd_gradient, gradient_ascent, multi_start_train, prototype_init,
    ConfusionCounts, Objective, PixelSet, TrainConfig, Trajectory,
};
