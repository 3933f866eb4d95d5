//! Error-margin analytics for neuron→concept associations.
//!
//! The crate ingests per-dataset activation matrices, image annotations and
//! concept→neuron-ensemble assignments, computes target / non-target
//! activation percentages across activation thresholds, runs the rank tests
//! used to confirm associations across two datasets, and renders the results
//! as CSV, Markdown or JSON.

pub mod error;
pub mod ingest;
pub mod margin;
pub mod model;
pub mod report;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
pub use margin::{
    compute_margin_row, compute_margin_table, detect_concepts, ensemble_active,
    ActivationPredicate, Detection, MarginRow, MarginTable, ThresholdBase, ThresholdSpec,
};
pub use model::{
    validate_bundle, ActivationMatrix, AnnotationSet, AssignmentTable, ConceptAssignment,
    DatasetBundle, Ensemble, NeuronId, Warning,
};
pub use store::{Manifest, Store};
