use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("edges[{index}]: self-edge on joint {joint}")]
    SelfEdge { index: usize, joint: usize },
    #[error("edges[{index}]: duplicate edge ({a}, {b})")]
    DuplicateEdge { index: usize, a: usize, b: usize },
    #[error("edges[{index}]: joint index {joint} out of range for {joints} joints")]
    EdgeOutOfRange {
        index: usize,
        joint: usize,
        joints: usize,
    },
    #[error("root: index {root} out of range for {joints} joints")]
    RootOutOfRange { root: usize, joints: usize },
    #[error("skeleton is disconnected: joint {joint} ({name}) is unreachable from the root")]
    Disconnected { joint: usize, name: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<SkeletonError>,
    },
    #[error("unknown built-in skeleton `{0}`")]
    UnknownBuiltin(String),
    #[error("adjacency row {row} has zero degree")]
    ZeroDegree { row: usize },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("non-finite values after layer `{layer}`")]
    NonFinite { layer: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: prediction {pred:?} vs ground truth {gt:?}")]
    Shape { pred: Vec<usize>, gt: Vec<usize> },
    #[error("degenerate ground truth: all joints coincide, alignment is undefined")]
    Degenerate,
    #[error("invalid metric configuration: {0}")]
    Config(String),
    #[error("sample count mismatch: {preds} predictions vs {gts} ground truths")]
    Count { preds: usize, gts: usize },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic bytes {found:?} at offset 0 (expected \"MGTP\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} at offset 4 (expected 1)")]
    Version { found: u32 },
    #[error("unexpected end of file at record {record} (byte offset {offset})")]
    Truncated { record: usize, offset: usize },
    #[error("non-finite value in record {record} at byte offset {offset}")]
    NonFinite { record: usize, offset: usize },
    #[error("shape mismatch: header declares {header} joints, skeleton has {skeleton}")]
    JointCount { header: usize, skeleton: usize },
    #[error("invalid header at byte offset {offset}: {reason}")]
    Header { offset: usize, reason: String },
    #[error("invalid UTF-8 in {field} at byte offset {offset}")]
    Utf8 { field: &'static str, offset: usize },
    #[error("{count} trailing bytes after the last record (byte offset {offset})")]
    TrailingBytes { offset: usize, count: usize },
    #[error("embedded skeleton: {0}")]
    Skeleton(#[from] SkeletonError),
    #[error("sample {index}: {reason}")]
    Sample { index: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
