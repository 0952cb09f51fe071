//! Multi-hop graph transformer for lifting 2D joint sequences to 3D poses,
//! built on a small reverse-mode autodiff tape.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod skeleton;
pub mod tensor;
pub mod training;

pub use autodiff::{Tape, Var};
pub use checkpoint::Checkpoint;
pub use data::{synthesize, PoseDataset, Sample, Standardizer, SynthConfig};
pub use error::{DataError, MetricError, ModelError, SkeletonError, TensorError, TrainError};
pub use metrics::MetricReport;
pub use model::{ForwardMode, MgtNet, ModelConfig};
pub use params::{Bindings, ParamId, ParamStore};
pub use skeleton::SkeletonGraph;
pub use tensor::Tensor;
pub use training::{History, TrainConfig};
