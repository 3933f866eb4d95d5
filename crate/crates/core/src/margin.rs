//! Target / non-target activation percentages and per-image concept detection.
//!
//! An image activates neuron `n` at threshold θ when its value is strictly
//! greater than `θ · reference[n]`, where the reference is the neuron's maximum
//! over the same dataset (or the global maximum, see [`ThresholdBase`]). An
//! ensemble activates when every member neuron does.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssignmentTable, ConceptAssignment, DatasetBundle, Ensemble, Warning};

const THETA_TOLERANCE: f64 = 1e-9;

/// Strictly increasing activation thresholds, each a fraction in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSpec(Vec<f64>);

impl ThresholdSpec {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::InvalidThresholds("at least one threshold is required".into()));
        }
        for &t in &fractions {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::InvalidThresholds(format!("{t} is outside [0, 1)")));
            }
        }
        if fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidThresholds("thresholds must be strictly increasing".into()));
        }
        Ok(ThresholdSpec(fractions))
    }

    /// Parses a comma-separated list such as `0,0.2,0.4,0.6`.
    pub fn parse(text: &str) -> Result<Self> {
        let fractions = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidThresholds(format!("{s:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(fractions)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, theta: f64) -> Option<usize> {
        self.0.iter().position(|&t| (t - theta).abs() <= THETA_TOLERANCE)
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec(vec![0.0, 0.2, 0.4, 0.6])
    }
}

impl TryFrom<Vec<f64>> for ThresholdSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ThresholdSpec::new(v)
    }
}

impl From<ThresholdSpec> for Vec<f64> {
    fn from(t: ThresholdSpec) -> Self {
        t.0
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// What a threshold fraction is a fraction of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBase {
    /// Each neuron's own maximum over the dataset.
    #[default]
    PerNeuronMax,
    /// The maximum over all neurons of the dataset.
    GlobalMax,
}

impl ThresholdBase {
    pub fn reference(self, bundle: &DatasetBundle) -> Vec<f64> {
        match self {
            ThresholdBase::PerNeuronMax => bundle.per_neuron_max.clone(),
            ThresholdBase::GlobalMax => {
                let global = bundle.per_neuron_max.iter().copied().fold(0.0, f64::max);
                vec![global; bundle.per_neuron_max.len()]
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ActivationPredicate<'a> {
    pub theta: f64,
    pub reference: &'a [f64],
}

impl<'a> ActivationPredicate<'a> {
    pub fn new(theta: f64, reference: &'a [f64]) -> Self {
        ActivationPredicate { theta, reference }
    }

    #[inline]
    pub fn fires(&self, neuron: usize, value: f64) -> bool {
        value > self.theta * self.reference[neuron]
    }
}

/// True iff every neuron of `ensemble` fires under `predicate`.
#[inline]
pub fn ensemble_active(vector: &[f64], ensemble: &Ensemble, predicate: &ActivationPredicate<'_>) -> bool {
    ensemble.indices().all(|n| predicate.fires(n, vector[n]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPct {
    pub theta: f64,
    pub pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub concept: String,
    pub ensemble: Ensemble,
    /// Share of target images activating the ensemble at θ = 0.
    pub tla_pct: f64,
    /// Share of non-target images activating the ensemble, per threshold.
    pub non_tla_pct: Vec<ThresholdPct>,
    pub n_target: usize,
    pub n_non_target: usize,
}

impl MarginRow {
    pub fn non_tla_at(&self, theta: f64) -> Option<f64> {
        self.non_tla_pct
            .iter()
            .find(|t| (t.theta - theta).abs() <= THETA_TOLERANCE)
            .map(|t| t.pct)
    }

    pub fn non_tla_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.non_tla_pct.iter().map(|t| t.pct)
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub dataset_id: String,
    pub thresholds: ThresholdSpec,
    pub base: ThresholdBase,
    /// Per-neuron reference values the thresholds were scaled by.
    pub reference_max: Vec<f64>,
    pub rows: Vec<MarginRow>,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

impl MarginTable {
    /// Keeps rows whose TLA is strictly above `tla_min` percent.
    pub fn filter_tla_min(mut self, tla_min: f64) -> Self {
        self.rows.retain(|r| r.tla_pct > tla_min);
        self
    }

    pub fn row(&self, concept: &str, ensemble: &Ensemble) -> Option<&MarginRow> {
        self.rows
            .iter()
            .find(|r| r.concept == concept && &r.ensemble == ensemble)
    }
}

/// Margin computation over one bundle with a fixed threshold base.
pub struct MarginEngine<'a> {
    bundle: &'a DatasetBundle,
    base: ThresholdBase,
    reference: Vec<f64>,
}

impl<'a> MarginEngine<'a> {
    pub fn new(bundle: &'a DatasetBundle, base: ThresholdBase) -> Self {
        MarginEngine {
            bundle,
            base,
            reference: base.reference(bundle),
        }
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn row(&self, assignment: &ConceptAssignment, thresholds: &ThresholdSpec) -> Result<MarginRow> {
        let matrix = &self.bundle.activation;
        let zero = ActivationPredicate::new(0.0, &self.reference);
        let predicates: Vec<ActivationPredicate<'_>> = thresholds
            .fractions()
            .iter()
            .map(|&t| ActivationPredicate::new(t, &self.reference))
            .collect();

        let mut n_target = 0;
        let mut target_active = 0;
        let mut non_target_active = vec![0usize; predicates.len()];
        for (image_id, row) in matrix.rows() {
            if self.bundle.is_target(image_id, &assignment.concept) {
                n_target += 1;
                target_active += usize::from(ensemble_active(row, &assignment.ensemble, &zero));
            } else {
                for (count, p) in non_target_active.iter_mut().zip(&predicates) {
                    *count += usize::from(ensemble_active(row, &assignment.ensemble, p));
                }
            }
        }
        if n_target == 0 {
            return Err(Error::ZeroTargetImages {
                concept: assignment.concept.clone(),
                dataset_id: self.bundle.dataset_id().to_owned(),
            });
        }
        let n_non_target = matrix.image_count() - n_target;
        Ok(MarginRow {
            concept: assignment.concept.clone(),
            ensemble: assignment.ensemble.clone(),
            tla_pct: pct(target_active, n_target),
            non_tla_pct: thresholds
                .fractions()
                .iter()
                .zip(&non_target_active)
                .map(|(&theta, &c)| ThresholdPct {
                    theta,
                    pct: pct(c, n_non_target),
                })
                .collect(),
            n_target,
            n_non_target,
        })
    }

    pub fn table(&self, assignments: &AssignmentTable, thresholds: &ThresholdSpec) -> MarginTable {
        let results: Vec<Result<MarginRow>> = assignments
            .as_slice()
            .par_iter()
            .map(|a| self.row(a, thresholds))
            .collect();

        let mut rows = Vec::with_capacity(results.len());
        let mut warnings = Vec::new();
        for (a, result) in assignments.iter().zip(results) {
            match result {
                Ok(row) => {
                    for n in a.ensemble.indices().filter(|&n| self.reference[n] == 0.0) {
                        warnings.push(Warning::DeadNeuronInEnsemble {
                            concept: a.concept.clone(),
                            neuron: n,
                        });
                    }
                    rows.push(row);
                }
                Err(e) => {
                    log::warn!("{e}");
                    warnings.push(Warning::SkippedConcept {
                        concept: a.concept.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        MarginTable {
            dataset_id: self.bundle.dataset_id().to_owned(),
            thresholds: thresholds.clone(),
            base: self.base,
            reference_max: self.reference.clone(),
            rows,
            warnings,
        }
    }
}

pub fn compute_margin_row(
    bundle: &DatasetBundle,
    assignment: &ConceptAssignment,
    thresholds: &ThresholdSpec,
) -> Result<MarginRow> {
    MarginEngine::new(bundle, ThresholdBase::PerNeuronMax).row(assignment, thresholds)
}

/// Rows follow the assignment table order: concept name, then ensemble size.
/// Concepts without target images are skipped with a warning.
pub fn compute_margin_table(
    bundle: &DatasetBundle,
    assignments: &AssignmentTable,
    thresholds: &ThresholdSpec,
) -> MarginTable {
    MarginEngine::new(bundle, ThresholdBase::PerNeuronMax).table(assignments, thresholds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub concept: String,
    pub ensemble: Ensemble,
    pub activated: bool,
    /// Holdout Non-TLA at `theta`; `None` when the holdout has no row for the concept.
    pub error_margin_pct: Option<f64>,
    pub theta: f64,
}

pub fn check_vector(vector: &[f64], neuron_count: usize) -> Result<()> {
    if vector.len() != neuron_count {
        return Err(Error::DimensionMismatch {
            expected: neuron_count,
            actual: vector.len(),
        });
    }
    if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteVector { index });
    }
    Ok(())
}

/// One detection per assignment, scored against the holdout calibration.
pub fn detect_concepts(
    vector: &[f64],
    assignments: &AssignmentTable,
    holdout: &MarginTable,
    theta: f64,
) -> Result<Vec<Detection>> {
    let pos = holdout
        .thresholds
        .position(theta)
        .ok_or(Error::UnknownTheta { theta })?;
    let theta = holdout.thresholds.fractions()[pos];
    check_vector(vector, holdout.reference_max.len())?;
    if let Some(a) = assignments
        .iter()
        .find(|a| a.ensemble.max_index() >= vector.len())
    {
        return Err(Error::NeuronOutOfRange {
            concept: a.concept.clone(),
            neuron: a.ensemble.max_index(),
            neuron_count: vector.len(),
        });
    }

    let predicate = ActivationPredicate::new(theta, &holdout.reference_max);
    Ok(assignments
        .iter()
        .map(|a| {
            let error_margin_pct = holdout
                .row(&a.concept, &a.ensemble)
                .map(|r| r.non_tla_pct[pos].pct);
            if error_margin_pct.is_none() {
                log::warn!("no holdout margin for concept {:?} [{}]", a.concept, a.ensemble);
            }
            Detection {
                concept: a.concept.clone(),
                ensemble: a.ensemble.clone(),
                activated: ensemble_active(vector, &a.ensemble, &predicate),
                error_margin_pct,
                theta,
            }
        })
        .collect())
}
