//! Frequency-domain skeletal movement classification.
//!
//! The pipeline ingests pose-estimator keypoint sequences, repairs and
//! normalizes them, converts per-joint trajectories to binned frequency
//! features, and classifies them as normal/abnormal with a frequency-attention
//! graph convolutional network. Classical baselines, a leave-one-out
//! evaluation harness, a Gaussian-noise robustness sweep and a synthetic
//! dataset generator round out the toolkit.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod pose;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, MetricsReport, NoiseSpec};
pub use graph::{NormalizedAdjacency, PartitionStrategy, PoseFrequencyGraph};
pub use model::{AttentionMap, AttnVariant, FaigcnConfig, FaigcnParams};
pub use pose::{Keypoint, Label, PoseFrame, PoseSequence};
pub use rng::RngStream;
pub use spectral::{BinSchedule, SpectralFeatures, Spectrum, TimeSeries};
pub use train::{FoldResult, LoocvReport, TrainConfig};

/// Format versions for every on-disk artifact this crate reads or writes.
pub const FORMAT_VERSIONS: &[(&str, &str)] = &[
    ("seqfile", "v1"),
    ("features-text", "v1"),
    ("features-binary", "v1"),
    ("checkpoint", "v1"),
    ("report", "v1"),
    ("attention", "v1"),
    ("graph-edgelist", "v1"),
];
