use super::{
    check_finite, exact_p_value, normal_p_value, rank_midrank, Alternative, Method, SampleSize, StatsError,
    TestKind, TestResult,
};

/// Largest pooled size n1 + n2 for which the exact distribution is used.
pub const MWU_EXACT_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug)]
pub struct MwuOptions {
    pub exact_limit: usize,
}

impl Default for MwuOptions {
    fn default() -> Self {
        MwuOptions {
            exact_limit: MWU_EXACT_LIMIT,
        }
    }
}

/// Number of arrangements of `n1` first-sample and `n2` second-sample items
/// giving each value of U = 0..=n1·n2. Sums to C(n1 + n2, n1).
pub fn u_distribution(n1: usize, n2: usize) -> Vec<u128> {
    // counts[m][n] for m ≤ n1, n ≤ n2, via c(m, n, u) = c(m−1, n, u−n) + c(m, n−1, u).
    let mut prev: Vec<Vec<u128>> = (0..=n2).map(|_| vec![1]).collect();
    for m in 1..=n1 {
        let mut cur: Vec<Vec<u128>> = Vec::with_capacity(n2 + 1);
        cur.push(vec![1]);
        for n in 1..=n2 {
            let mut c = vec![0u128; m * n + 1];
            // Largest item belongs to the first sample: it beats all n others.
            for (u, &v) in prev[n].iter().enumerate() {
                c[u + n] += v;
            }
            // Largest item belongs to the second sample.
            for (u, &v) in cur[n - 1].iter().enumerate() {
                c[u] += v;
            }
            cur.push(c);
        }
        prev = cur;
    }
    prev.pop().expect("n2 + 1 entries")
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(a, b, alternative, &MwuOptions::default())
}

/// U is reported for `a`; `Greater` means `a` tends to exceed `b`.
pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    opts: &MwuOptions,
) -> Result<TestResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;

    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranking = rank_midrank(&pooled);
    let rank_sum_a: f64 = ranking.ranks[..n1].iter().sum();
    let u = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;

    let mut result = TestResult {
        test: TestKind::MannWhitneyU,
        statistic: u,
        p_value: 1.0,
        n: SampleSize::Independent { n1, n2 },
        method: Method::NormalApprox,
        alternative,
        degenerate: false,
    };

    let big_n = n1 + n2;
    if ranking.tie_groups.is_empty() && big_n <= opts.exact_limit {
        let counts = u_distribution(n1, n2);
        let total: u128 = counts.iter().sum();
        result.p_value = exact_p_value(&counts, total, u.round() as usize, alternative);
        result.method = Method::Exact;
        return Ok(result);
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, big_n as f64);
    let mean = n1f * n2f / 2.0;
    let tie_adjust = if big_n > 1 {
        ranking.tie_term() / (nf * (nf - 1.0))
    } else {
        0.0
    };
    let variance = n1f * n2f / 12.0 * ((nf + 1.0) - tie_adjust);
    if variance <= 0.0 {
        result.degenerate = true;
        return Ok(result);
    }
    result.p_value = normal_p_value(u, mean, variance, alternative);
    Ok(result)
}
