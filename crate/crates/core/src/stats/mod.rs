//! Rank-based tests: Mann-Whitney U and Wilcoxon signed-rank, with exact
//! small-sample distributions and tie-corrected normal approximations, plus the
//! two-dataset concept confirmation pipeline built on them.

mod confirm;
mod mwu;
mod rank;
mod wilcoxon;

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use confirm::{
    conjunctive_strength, confirm_concepts, confirm_concepts_with, ConceptConfirmation, ConfirmOptions,
    ConfirmationReport, PairedNonTla, ThresholdWilcoxon, MWU_SAMPLE_DESCRIPTION,
};
pub use mwu::{mann_whitney_u, mann_whitney_u_with, u_distribution, MwuOptions, MWU_EXACT_LIMIT};
pub use rank::{rank_midrank, Ranking};
pub use wilcoxon::{
    signed_rank_distribution, wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonOptions, ZeroPolicy,
    WILCOXON_EXACT_LIMIT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("all paired differences are zero; the signed-rank test is undefined")]
    AllZeroDifferences,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::TwoSided => Alternative::TwoSided,
            Alternative::Greater => Alternative::Less,
            Alternative::Less => Alternative::Greater,
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::TwoSided => "two_sided",
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        })
    }
}

impl std::str::FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(format!("unknown alternative {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal_approx",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    MannWhitneyU,
    WilcoxonSignedRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Independent { n1: usize, n2: usize },
    Paired { n_nonzero: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    /// U of the first sample for MWU; sum of positive-difference ranks for Wilcoxon.
    pub statistic: f64,
    pub p_value: f64,
    pub n: SampleSize,
    pub method: Method,
    pub alternative: Alternative,
    /// Set when the statistic has zero variance (all pooled values equal).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Normal tail probability with a 0.5 continuity correction, in the direction
/// given by `alternative`.
pub(crate) fn normal_p_value(statistic: f64, mean: f64, variance: f64, alternative: Alternative) -> f64 {
    let sd = variance.sqrt();
    let normal = Normal::standard();
    let p = match alternative {
        Alternative::Greater => normal.sf((statistic - mean - 0.5) / sd),
        Alternative::Less => normal.cdf((statistic - mean + 0.5) / sd),
        Alternative::TwoSided => 2.0 * normal.sf(((statistic - mean).abs() - 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Tail probabilities of an integer-valued statistic with distribution `counts`
/// (counts[k] ways to reach value k, out of `total`).
pub(crate) fn exact_p_value(counts: &[u128], total: u128, observed: usize, alternative: Alternative) -> f64 {
    let upper: u128 = counts.iter().skip(observed).sum();
    let lower: u128 = counts.iter().take(observed + 1).sum();
    let tail = |c: u128| c as f64 / total as f64;
    match alternative {
        Alternative::Greater => tail(upper),
        Alternative::Less => tail(lower),
        Alternative::TwoSided => (2.0 * tail(upper.min(lower))).min(1.0),
    }
}

pub(crate) fn check_finite(values: &[f64], name: &'static str) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite(name))
    }
}
