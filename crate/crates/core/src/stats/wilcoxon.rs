use serde::{Deserialize, Serialize};

use super::{
    check_finite, exact_p_value, normal_p_value, rank_midrank, Alternative, Method, SampleSize, StatsError,
    TestKind, TestResult,
};

/// Largest number of nonzero differences for which the exact distribution is used.
pub const WILCOXON_EXACT_LIMIT: usize = 30;

/// Treatment of zero differences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    /// Drop zeros before ranking.
    #[default]
    Wilcoxon,
    /// Rank zeros with the other |d|, then drop them from the statistic.
    Pratt,
}

#[derive(Clone, Copy, Debug)]
pub struct WilcoxonOptions {
    pub exact_limit: usize,
    pub zero_policy: ZeroPolicy,
}

impl Default for WilcoxonOptions {
    fn default() -> Self {
        WilcoxonOptions {
            exact_limit: WILCOXON_EXACT_LIMIT,
            zero_policy: ZeroPolicy::Wilcoxon,
        }
    }
}

/// Counts of sign assignments reaching each doubled signed-rank sum.
///
/// Ranks are passed doubled so midranks (multiples of 0.5) stay integral;
/// entry `s` counts subsets of ranks whose doubled sum is `s`.
pub fn signed_rank_distribution(doubled_ranks: &[usize]) -> Vec<u128> {
    let max: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0u128; max + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

pub fn wilcoxon_signed_rank(
    pairs: &[(f64, f64)],
    alternative: Alternative,
    zero_policy: ZeroPolicy,
) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(
        pairs,
        alternative,
        &WilcoxonOptions {
            zero_policy,
            ..WilcoxonOptions::default()
        },
    )
}

/// Differences are `x − y`; `Greater` means `x` tends to exceed `y`.
pub fn wilcoxon_signed_rank_with(
    pairs: &[(f64, f64)],
    alternative: Alternative,
    opts: &WilcoxonOptions,
) -> Result<TestResult, StatsError> {
    let diffs: Vec<f64> = pairs.iter().map(|&(x, y)| x - y).collect();
    check_finite(&diffs, "paired differences")?;

    let ranked: Vec<f64> = match opts.zero_policy {
        ZeroPolicy::Wilcoxon => diffs.iter().copied().filter(|&d| d != 0.0).collect(),
        ZeroPolicy::Pratt => diffs.clone(),
    };
    let ranking = rank_midrank(&ranked.iter().map(|d| d.abs()).collect::<Vec<_>>());
    // (rank, positive) for every nonzero difference.
    let signed: Vec<(f64, bool)> = ranked
        .iter()
        .zip(&ranking.ranks)
        .filter(|(&d, _)| d != 0.0)
        .map(|(&d, &r)| (r, d > 0.0))
        .collect();
    if signed.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }

    let w: f64 = signed.iter().filter(|(_, pos)| *pos).map(|(r, _)| r).sum();
    let n = signed.len();
    let mut result = TestResult {
        test: TestKind::WilcoxonSignedRank,
        statistic: w,
        p_value: 1.0,
        n: SampleSize::Paired { n_nonzero: n },
        method: Method::NormalApprox,
        alternative,
        degenerate: false,
    };

    if n <= opts.exact_limit {
        let doubled: Vec<usize> = signed.iter().map(|(r, _)| (2.0 * r).round() as usize).collect();
        let counts = signed_rank_distribution(&doubled);
        let total = 1u128 << n;
        result.p_value = exact_p_value(&counts, total, (2.0 * w).round() as usize, alternative);
        result.method = Method::Exact;
        return Ok(result);
    }

    // Under H0 each rank enters W with probability 1/2, so mean = Σr/2 and
    // var = Σr²/4; this equals the usual tie-corrected formula.
    let mean: f64 = signed.iter().map(|(r, _)| r).sum::<f64>() / 2.0;
    let variance: f64 = signed.iter().map(|(r, _)| r * r).sum::<f64>() / 4.0;
    result.p_value = normal_p_value(w, mean, variance, alternative);
    Ok(result)
}
