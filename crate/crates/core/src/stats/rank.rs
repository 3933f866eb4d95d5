/// Midranks of a sample and the sizes of its tie groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// 1-based ranks in input order; tied values share the mean of their span.
    pub ranks: Vec<f64>,
    /// Size of every group of two or more equal values, in ascending value order.
    pub tie_groups: Vec<usize>,
}

impl Ranking {
    /// Σ(t³ − t) over tie groups.
    pub fn tie_term(&self) -> f64 {
        self.tie_groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum()
    }
}

pub fn rank_midrank(values: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut tie_groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = midrank;
        }
        if end - start > 1 {
            tie_groups.push(end - start);
        }
        start = end;
    }
    Ranking { ranks, tie_groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn untied() {
        let r = rank_midrank(&[3.0, 1.0, 2.0]);
        assert_eq!(r.ranks, [3.0, 1.0, 2.0]);
        assert!(r.tie_groups.is_empty());
    }

    #[test]
    fn tied_pair_gets_midrank() {
        let r = rank_midrank(&[5.0, 5.0, 1.0]);
        assert_eq!(r.ranks, [2.5, 2.5, 1.0]);
        assert_eq!(r.tie_groups, [2]);
        assert_eq!(r.tie_term(), 6.0);
    }

    #[test]
    fn empty_input() {
        let r = rank_midrank(&[]);
        assert!(r.ranks.is_empty() && r.tie_groups.is_empty());
    }

    /// O(n²): rank = #smaller + (#equal + 1) / 2.
    fn quadratic_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let less = values.iter().filter(|&&w| w < v).count() as f64;
                let equal = values.iter().filter(|&&w| w == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_quadratic_oracle(values in proptest::collection::vec(0i32..12, 0..40)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let r = rank_midrank(&values);
            prop_assert_eq!(&r.ranks, &quadratic_ranks(&values));
            let sum: f64 = r.ranks.iter().sum();
            let n = values.len() as f64;
            prop_assert_eq!(sum, n * (n + 1.0) / 2.0);
        }
    }
}
