use serde::{Deserialize, Serialize};

use super::{
    mann_whitney_u, wilcoxon_signed_rank, Alternative, StatsError, TestResult, ZeroPolicy,
};
use crate::error::{Error, Result};
use crate::margin::{MarginEngine, ThresholdBase, ThresholdSpec};
use crate::model::{AssignmentTable, ConceptAssignment, DatasetBundle, Ensemble, Warning};

/// Recorded in every report so readers know what the per-concept MWU compared.
pub const MWU_SAMPLE_DESCRIPTION: &str =
    "non-target images' conjunctive activation strength min over ensemble of value / reference max";

#[derive(Clone, Copy, Debug)]
pub struct ConfirmOptions {
    pub alpha: f64,
    pub base: ThresholdBase,
    pub mwu_alternative: Alternative,
    /// Direction of the per-threshold Wilcoxon: dataset A vs. dataset B.
    pub wilcoxon_alternative: Alternative,
    pub zero_policy: ZeroPolicy,
}

impl Default for ConfirmOptions {
    fn default() -> Self {
        ConfirmOptions {
            alpha: 0.05,
            base: ThresholdBase::PerNeuronMax,
            mwu_alternative: Alternative::TwoSided,
            wilcoxon_alternative: Alternative::Greater,
            zero_policy: ZeroPolicy::Wilcoxon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptConfirmation {
    pub concept: String,
    pub ensemble: Ensemble,
    pub mwu: Option<TestResult>,
    pub confirmed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedNonTla {
    pub concept: String,
    pub ensemble: Ensemble,
    pub a_pct: f64,
    pub b_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWilcoxon {
    pub theta: f64,
    pub pairs: Vec<PairedNonTla>,
    /// `None` when no concept was confirmed or every difference was zero.
    pub result: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationReport {
    pub dataset_a: String,
    pub dataset_b: String,
    pub alpha: f64,
    pub mwu_sample: String,
    pub concepts: Vec<ConceptConfirmation>,
    pub wilcoxon: Vec<ThresholdWilcoxon>,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

impl ConfirmationReport {
    pub fn confirmed(&self) -> impl Iterator<Item = &ConceptConfirmation> {
        self.concepts.iter().filter(|c| c.confirmed)
    }
}

/// min over the ensemble of `value / reference`; a dead neuron contributes 0.
pub fn conjunctive_strength(vector: &[f64], ensemble: &Ensemble, reference: &[f64]) -> f64 {
    ensemble
        .indices()
        .map(|n| {
            if reference[n] > 0.0 {
                vector[n] / reference[n]
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn non_target_strengths(bundle: &DatasetBundle, a: &ConceptAssignment, reference: &[f64]) -> Vec<f64> {
    bundle
        .activation
        .rows()
        .filter(|(id, _)| !bundle.is_target(id, &a.concept))
        .map(|(_, row)| conjunctive_strength(row, &a.ensemble, reference))
        .collect()
}

pub fn confirm_concepts(
    a: &DatasetBundle,
    b: &DatasetBundle,
    assignments: &AssignmentTable,
    thresholds: &ThresholdSpec,
    alpha: f64,
) -> Result<ConfirmationReport> {
    confirm_concepts_with(
        a,
        b,
        assignments,
        thresholds,
        &ConfirmOptions {
            alpha,
            ..ConfirmOptions::default()
        },
    )
}

/// Per concept, an MWU across the two datasets decides confirmation; per
/// threshold, a Wilcoxon signed-rank test compares the confirmed concepts'
/// paired Non-TLA values (A vs. B).
pub fn confirm_concepts_with(
    a: &DatasetBundle,
    b: &DatasetBundle,
    assignments: &AssignmentTable,
    thresholds: &ThresholdSpec,
    opts: &ConfirmOptions,
) -> Result<ConfirmationReport> {
    for bundle in [a, b] {
        if let Some(bad) = assignments
            .iter()
            .find(|x| x.ensemble.max_index() >= bundle.neuron_count())
        {
            return Err(Error::NeuronOutOfRange {
                concept: bad.concept.clone(),
                neuron: bad.ensemble.max_index(),
                neuron_count: bundle.neuron_count(),
            });
        }
    }

    let engine_a = MarginEngine::new(a, opts.base);
    let engine_b = MarginEngine::new(b, opts.base);
    let mut concepts = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    for assignment in assignments {
        let (row_a, row_b) = match (
            engine_a.row(assignment, thresholds),
            engine_b.row(assignment, thresholds),
        ) {
            (Ok(ra), Ok(rb)) => (ra, rb),
            (Err(e), _) | (_, Err(e)) => {
                warnings.push(Warning::SkippedConcept {
                    concept: assignment.concept.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let sample_a = non_target_strengths(a, assignment, engine_a.reference());
        let sample_b = non_target_strengths(b, assignment, engine_b.reference());
        let (mwu, error) = match mann_whitney_u(&sample_a, &sample_b, opts.mwu_alternative) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let confirmed = mwu.as_ref().is_some_and(|r| r.p_value < opts.alpha);
        concepts.push(ConceptConfirmation {
            concept: assignment.concept.clone(),
            ensemble: assignment.ensemble.clone(),
            mwu,
            confirmed,
            error,
        });
        rows.push((confirmed, row_a, row_b));
    }

    let wilcoxon = thresholds
        .fractions()
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let pairs: Vec<PairedNonTla> = rows
                .iter()
                .filter(|(confirmed, _, _)| *confirmed)
                .map(|(_, ra, rb)| PairedNonTla {
                    concept: ra.concept.clone(),
                    ensemble: ra.ensemble.clone(),
                    a_pct: ra.non_tla_pct[i].pct,
                    b_pct: rb.non_tla_pct[i].pct,
                })
                .collect();
            let (result, note) = if pairs.is_empty() {
                (None, Some("no confirmed concepts".to_owned()))
            } else {
                let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.a_pct, p.b_pct)).collect();
                match wilcoxon_signed_rank(&xy, opts.wilcoxon_alternative, opts.zero_policy) {
                    Ok(r) => (Some(r), None),
                    Err(e @ StatsError::AllZeroDifferences) => (None, Some(e.to_string())),
                    Err(e) => return Err(e.into()),
                }
            };
            Ok(ThresholdWilcoxon {
                theta,
                pairs,
                result,
                note,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConfirmationReport {
        dataset_a: a.dataset_id().to_owned(),
        dataset_b: b.dataset_id().to_owned(),
        alpha: opts.alpha,
        mwu_sample: MWU_SAMPLE_DESCRIPTION.to_owned(),
        concepts,
        wilcoxon,
        warnings,
    })
}
