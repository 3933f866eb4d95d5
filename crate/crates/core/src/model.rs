//! Domain types shared by every stage of the analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column index into an [`ActivationMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub usize);

impl NeuronId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty, sorted, deduplicated set of neurons jointly assigned to a concept.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Ensemble(Vec<NeuronId>);

impl Ensemble {
    /// Returns `None` when `neurons` is empty.
    pub fn new(neurons: impl IntoIterator<Item = NeuronId>) -> Option<Self> {
        let mut v: Vec<NeuronId> = neurons.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            None
        } else {
            Some(Ensemble(v))
        }
    }

    pub fn from_indices(indices: &[usize]) -> Option<Self> {
        Self::new(indices.iter().copied().map(NeuronId))
    }

    pub fn neurons(&self) -> &[NeuronId] {
        &self.0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|n| n.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_subset_of(&self, other: &Ensemble) -> bool {
        self.0.iter().all(|n| other.0.binary_search(n).is_ok())
    }

    pub fn max_index(&self) -> usize {
        // Sorted and non-empty.
        self.0[self.0.len() - 1].0
    }
}

impl<'de> Deserialize<'de> for Ensemble {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<NeuronId>::deserialize(d)?;
        Ensemble::new(v).ok_or_else(|| serde::de::Error::custom("empty ensemble"))
    }
}

/// Renders as comma-space joined indices, e.g. `22, 26, 54, 63`.
impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

impl PartialOrd for Ensemble {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Size first, then lexicographic.
impl Ord for Ensemble {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Images × neurons matrix of non-negative activation strengths for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    dataset_id: String,
    image_ids: Vec<String>,
    neuron_count: usize,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ActivationMatrix {
    /// `values` is row-major, `image_ids.len() * neuron_count` long.
    pub fn new(
        dataset_id: impl Into<String>,
        image_ids: Vec<String>,
        neuron_count: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if image_ids.is_empty() {
            return Err(Error::MalformedRow {
                line: 1,
                message: "activation matrix has no rows".into(),
            });
        }
        if neuron_count == 0 {
            return Err(Error::BadHeader("activation matrix has no neuron columns".into()));
        }
        if values.len() != image_ids.len() * neuron_count {
            return Err(Error::DimensionMismatch {
                expected: image_ids.len() * neuron_count,
                actual: values.len(),
            });
        }
        let mut index = HashMap::with_capacity(image_ids.len());
        for (row, id) in image_ids.iter().enumerate() {
            if index.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateImage {
                    line: row as u64 + 2,
                    image_id: id.clone(),
                });
            }
        }
        for (i, &v) in values.iter().enumerate() {
            let (row, col) = (i / neuron_count, i % neuron_count);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    line: row as u64 + 2,
                    column: format!("n{col}"),
                    value: v.to_string(),
                });
            }
            if v < 0.0 {
                return Err(Error::NegativeActivation {
                    line: row as u64 + 2,
                    column: format!("n{col}"),
                    value: v,
                });
            }
        }
        Ok(ActivationMatrix {
            dataset_id: dataset_id.into(),
            image_ids,
            neuron_count,
            values,
            index,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn image_count(&self) -> usize {
        self.image_ids.len()
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.neuron_count..(row + 1) * self.neuron_count]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.image_ids
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks_exact(self.neuron_count))
    }

    pub fn row_index(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    pub fn row_of(&self, image_id: &str) -> Option<&[f64]> {
        self.row_index(image_id).map(|r| self.row(r))
    }

    /// Column maxima; 0 for an all-zero column.
    pub fn column_maxima(&self) -> Vec<f64> {
        let mut max = vec![0.0_f64; self.neuron_count];
        for row in self.values.chunks_exact(self.neuron_count) {
            for (m, &v) in max.iter_mut().zip(row) {
                if v > *m {
                    *m = v;
                }
            }
        }
        max
    }
}

/// Ground-truth concept labels per image.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub dataset_id: String,
    pub entries: BTreeMap<String, BTreeSet<String>>,
}

impl AnnotationSet {
    pub fn new(dataset_id: impl Into<String>) -> Self {
        AnnotationSet {
            dataset_id: dataset_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert<I, S>(&mut self, image_id: impl Into<String>, concepts: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entries.insert(
            image_id.into(),
            concepts.into_iter().map(Into::into).collect(),
        );
    }

    pub fn labels(&self, image_id: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(image_id)
    }

    pub fn has_label(&self, image_id: &str, concept: &str) -> bool {
        self.entries
            .get(image_id)
            .is_some_and(|labels| labels.contains(concept))
    }

    pub fn concepts(&self) -> BTreeSet<&str> {
        self.entries
            .values()
            .flat_map(|s| s.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptAssignment {
    pub concept: String,
    pub ensemble: Ensemble,
}

impl ConceptAssignment {
    pub fn new(concept: impl Into<String>, ensemble: Ensemble) -> Self {
        ConceptAssignment {
            concept: concept.into(),
            ensemble,
        }
    }
}

/// Concept assignments, kept ordered by concept name, then ensemble size.
///
/// A concept may carry several ensembles (e.g. `pillow` → {3}, {50}, {3, 50});
/// each (concept, ensemble) pair appears at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct AssignmentTable(Vec<ConceptAssignment>);

impl AssignmentTable {
    pub fn new(mut assignments: Vec<ConceptAssignment>) -> Result<Self> {
        assignments.sort_by(|a, b| {
            a.concept
                .cmp(&b.concept)
                .then_with(|| a.ensemble.cmp(&b.ensemble))
        });
        for w in assignments.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateAssignment {
                    concept: w[0].concept.clone(),
                });
            }
        }
        Ok(AssignmentTable(assignments))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ConceptAssignment> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[ConceptAssignment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concepts(&self) -> BTreeSet<&str> {
        self.0.iter().map(|a| a.concept.as_str()).collect()
    }

    /// Grouped by concept, as persisted in the assignments file.
    pub fn grouped(&self) -> BTreeMap<&str, Vec<&Ensemble>> {
        let mut out: BTreeMap<&str, Vec<&Ensemble>> = BTreeMap::new();
        for a in &self.0 {
            out.entry(a.concept.as_str()).or_default().push(&a.ensemble);
        }
        out
    }
}

impl<'a> IntoIterator for &'a AssignmentTable {
    type Item = &'a ConceptAssignment;
    type IntoIter = std::slice::Iter<'a, ConceptAssignment>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Non-fatal findings collected during ingestion, validation and analysis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    DuplicateImageKey { image_id: String },
    UnassignedConcept { concept: String },
    UnannotatedImages { count: usize, examples: Vec<String> },
    DeadNeuron { neuron: usize },
    ClampedNegatives { count: usize },
    SkippedConcept { concept: String, reason: String },
    DeadNeuronInEnsemble { concept: String, neuron: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DuplicateImageKey { image_id } => {
                write!(f, "duplicate annotation key {image_id:?}; last entry wins")
            }
            Warning::UnassignedConcept { concept } => {
                write!(f, "annotated concept {concept:?} has no neuron assignment")
            }
            Warning::UnannotatedImages { count, examples } => {
                write!(f, "{count} image(s) have no annotations (e.g. {})", examples.join(", "))
            }
            Warning::DeadNeuron { neuron } => write!(f, "dead neuron {neuron}"),
            Warning::ClampedNegatives { count } => {
                write!(f, "clamped {count} negative activation(s) to 0")
            }
            Warning::SkippedConcept { concept, reason } => {
                write!(f, "skipped concept {concept:?}: {reason}")
            }
            Warning::DeadNeuronInEnsemble { concept, neuron } => {
                write!(f, "concept {concept:?} uses dead neuron {neuron}; it never activates")
            }
        }
    }
}

/// A validated dataset: activations, annotations and per-neuron calibration maxima.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub activation: ActivationMatrix,
    pub annotations: AnnotationSet,
    pub per_neuron_max: Vec<f64>,
}

impl DatasetBundle {
    pub fn dataset_id(&self) -> &str {
        self.activation.dataset_id()
    }

    pub fn neuron_count(&self) -> usize {
        self.activation.neuron_count()
    }

    pub fn is_target(&self, image_id: &str, concept: &str) -> bool {
        self.annotations.has_label(image_id, concept)
    }

    pub fn dead_neurons(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_neuron_max
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0.0)
            .map(|(n, _)| n)
    }
}

const UNANNOTATED_EXAMPLES: usize = 5;

/// Cross-checks ids and neuron indices and computes the per-neuron maxima.
pub fn validate_bundle(
    matrix: ActivationMatrix,
    annotations: AnnotationSet,
    assignments: &AssignmentTable,
) -> Result<(DatasetBundle, Vec<Warning>)> {
    if matrix.dataset_id() != annotations.dataset_id {
        return Err(Error::DatasetMismatch {
            activations: matrix.dataset_id().to_owned(),
            annotations: annotations.dataset_id.clone(),
        });
    }
    let neuron_count = matrix.neuron_count();
    for a in assignments {
        let max = a.ensemble.max_index();
        if max >= neuron_count {
            return Err(Error::NeuronOutOfRange {
                concept: a.concept.clone(),
                neuron: max,
                neuron_count,
            });
        }
    }
    for image_id in annotations.entries.keys() {
        if matrix.row_index(image_id).is_none() {
            return Err(Error::UnknownImage {
                image_id: image_id.clone(),
            });
        }
    }

    let mut warnings = Vec::new();
    let assigned = assignments.concepts();
    for concept in annotations.concepts() {
        if !assigned.contains(concept) {
            warnings.push(Warning::UnassignedConcept {
                concept: concept.to_owned(),
            });
        }
    }
    let unannotated: Vec<&String> = matrix
        .image_ids()
        .iter()
        .filter(|id| !annotations.entries.contains_key(id.as_str()))
        .collect();
    if !unannotated.is_empty() {
        warnings.push(Warning::UnannotatedImages {
            count: unannotated.len(),
            examples: unannotated
                .iter()
                .take(UNANNOTATED_EXAMPLES)
                .map(|s| s.to_string())
                .collect(),
        });
    }

    let per_neuron_max = matrix.column_maxima();
    for (n, _) in per_neuron_max.iter().enumerate().filter(|(_, &m)| m == 0.0) {
        warnings.push(Warning::DeadNeuron { neuron: n });
    }

    Ok((
        DatasetBundle {
            activation: matrix,
            annotations,
            per_neuron_max,
        },
        warnings,
    ))
}
