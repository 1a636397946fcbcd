//! Harrell's concordance index.
//!
//! A pair (i, j) is comparable when i has an observed event and either
//! `T_i < T_j`, or `T_i == T_j` with j censored. It is concordant when
//! `risk_i > risk_j`; tied risks contribute one half.

use crate::cohort::SurvivalOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl PairCounts {
    pub fn c_index(&self) -> Result<f64> {
        if self.comparable == 0 {
            return Err(Error::NoComparablePairs);
        }
        Ok((2 * self.concordant + self.tied_risk) as f64 / (2 * self.comparable) as f64)
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut s = 0;
        let mut i = i;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Concordance counts in O(n log n).
pub fn pair_counts(risks: &[f64], outcomes: &[SurvivalOutcome]) -> Result<PairCounts> {
    if risks.len() != outcomes.len() {
        return Err(Error::Dimension(format!(
            "{} risks for {} outcomes",
            risks.len(),
            outcomes.len()
        )));
    }
    if risks.iter().any(|r| r.is_nan()) {
        return Err(Error::DegenerateInput("NaN risk score".into()));
    }
    let n = risks.len();

    // dense ranks of risk
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && risks[by_risk[k]] != risks[by_risk[k - 1]] {
            r += 1;
        }
        rank[by_risk[k]] = r;
    }
    let n_ranks = r + 1;

    // descending time; within a time, censored entries are inserted before
    // events are queried, events are inserted after
    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| outcomes[b].duration_days.cmp(&outcomes[a].duration_days));

    let mut tree = Fenwick::new(n_ranks);
    let mut inserted = 0u64;
    let mut counts = PairCounts::default();
    let mut start = 0;
    while start < n {
        let t = outcomes[by_time[start]].duration_days;
        let end = by_time[start..]
            .iter()
            .position(|&i| outcomes[i].duration_days != t)
            .map_or(n, |p| start + p);
        let group = &by_time[start..end];
        for &i in group.iter().filter(|&&i| !outcomes[i].event) {
            tree.add(rank[i]);
            inserted += 1;
        }
        for &i in group.iter().filter(|&&i| outcomes[i].event) {
            let below = tree.prefix(rank[i]);
            let at_or_below = tree.prefix(rank[i] + 1);
            counts.concordant += below;
            counts.tied_risk += at_or_below - below;
            counts.comparable += inserted;
        }
        for &i in group.iter().filter(|&&i| outcomes[i].event) {
            tree.add(rank[i]);
            inserted += 1;
        }
        start = end;
    }
    Ok(counts)
}

pub fn c_index(risks: &[f64], outcomes: &[SurvivalOutcome]) -> Result<f64> {
    pair_counts(risks, outcomes)?.c_index()
}
