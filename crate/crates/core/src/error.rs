use std::path::PathBuf;

use crate::stats::StatsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: non-finite value {value:?} in column {column}")]
    NonFinite {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}: negative activation {value} in column {column}")]
    NegativeActivation { line: u64, column: String, value: f64 },

    #[error("line {line}: duplicate image id {image_id:?}")]
    DuplicateImage { line: u64, image_id: String },

    #[error("invalid header: {0}")]
    BadHeader(String),

    #[error("invalid json: {0}")]
    Json(String),

    #[error("concept {concept:?} has an empty neuron ensemble")]
    EmptyEnsemble { concept: String },

    #[error("concept {concept:?} has invalid neuron index {value}")]
    InvalidNeuronIndex { concept: String, value: String },

    #[error("concept {concept:?} is assigned more than once")]
    DuplicateAssignment { concept: String },

    #[error("concept {concept:?} references neuron {neuron}, but the matrix has {neuron_count} neurons")]
    NeuronOutOfRange {
        concept: String,
        neuron: usize,
        neuron_count: usize,
    },

    #[error("annotated image {image_id:?} is not in the activation matrix")]
    UnknownImage { image_id: String },

    #[error("dataset id mismatch: activations are {activations:?}, annotations are {annotations:?}")]
    DatasetMismatch {
        activations: String,
        annotations: String,
    },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("concept {concept:?} has no target images in dataset {dataset_id:?}")]
    ZeroTargetImages { concept: String, dataset_id: String },

    #[error("threshold {theta} is not in the margin table")]
    UnknownTheta { theta: f64 },

    #[error("activation vector has {actual} values, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("activation vector contains a non-finite value at index {index}")]
    NonFiniteVector { index: usize },

    #[error("line {line}: {message}")]
    FixtureParse { line: u64, message: String },

    #[error("store {}: {message}", path.display())]
    Store { path: PathBuf, message: String },

    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
