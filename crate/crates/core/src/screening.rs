//! 30-day-mortality screening by Kendall tau-b.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DEFAULT_TAU_THRESHOLD: f64 = 0.1;
pub const THIRTY_DAYS: u32 = 30;

/// Death on or before day 30 after RT start.
pub fn derive_30dm(outcome: &SurvivalOutcome) -> bool {
    outcome.event && outcome.duration_days <= THIRTY_DAYS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThirtyDayLabel {
    pub patient_id: String,
    pub dm30: bool,
}

impl ThirtyDayLabel {
    pub fn from_outcome(patient_id: impl Into<String>, outcome: &SurvivalOutcome) -> Self {
        ThirtyDayLabel {
            patient_id: patient_id.into(),
            dm30: derive_30dm(outcome),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTau {
    pub tau: f64,
    pub p_value: f64,
    /// Pairs kept after dropping missing values.
    pub n: usize,
}

/// Pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TieCounts {
    n0: u64,
    /// pairs tied in x
    n1: u64,
    /// pairs tied in y
    n2: u64,
    /// concordant minus discordant
    s: i64,
}

/// Tau-b with the standard tie correction; pairs where either value is
/// missing (`NaN`) are dropped. O(n log n) (Knight's merge-sort method).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("kendall: {} vs {} values", x.len(), y.len())));
    }
    let mut pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("{n} complete pairs")));
    }
    let counts = knight_counts(&mut pairs);
    if counts.n1 == counts.n0 || counts.n2 == counts.n0 {
        return Err(Error::DegenerateInput("zero-variance variable".into()));
    }
    let denom = ((u128::from(counts.n0 - counts.n1) * u128::from(counts.n0 - counts.n2)) as f64).sqrt();
    let tau = (counts.s as f64 / denom).clamp(-1.0, 1.0);
    let p_value = tau_b_p_value(&pairs, counts.s);
    Ok(KendallTau { tau, p_value, n })
}

fn cmp_f(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite values")
}

fn knight_counts(pairs: &mut [(f64, f64)]) -> TieCounts {
    let n = pairs.len() as u64;
    let n0 = n * (n - 1) / 2;
    pairs.sort_by(|a, b| cmp_f(a.0, b.0).then(cmp_f(a.1, b.1)));

    let mut n1 = 0u64;
    let mut n3 = 0u64;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i + 1;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let t = (j - i) as u64;
        n1 += t * (t - 1) / 2;
        // joint ties inside this x-run
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && pairs[l].1 == pairs[k].1 {
                l += 1;
            }
            let u = (l - k) as u64;
            n3 += u * (u - 1) / 2;
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut n2 = 0u64;
    let mut i = 0;
    while i < ys.len() {
        let mut j = i + 1;
        while j < ys.len() && ys[j] == ys[i] {
            j += 1;
        }
        let u = (j - i) as u64;
        n2 += u * (u - 1) / 2;
        i = j;
    }

    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    TieCounts { n0, n1, n2, s }
}

/// Stable merge sort counting strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (lo, hi) = v.split_at_mut(mid);
    let mut swaps = merge_count(lo, &mut buf[..mid]) + merge_count(hi, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < lo.len() && j < hi.len() {
        if hi[j] < lo[i] {
            buf[k] = hi[j];
            swaps += (lo.len() - i) as u64;
            j += 1;
        } else {
            buf[k] = lo[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + lo.len() - i].copy_from_slice(&lo[i..]);
    k += lo.len() - i;
    buf[k..k + hi.len() - j].copy_from_slice(&hi[j..]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Two-sided p-value from the normal approximation to S with the tie-adjusted
/// variance.
fn tau_b_p_value(pairs: &[(f64, f64)], s: i64) -> f64 {
    let n = pairs.len() as f64;
    let tie_sums = |vals: Vec<f64>| -> (f64, f64, f64) {
        let mut sorted = vals;
        sorted.sort_by(|a, b| cmp_f(*a, *b));
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            a += t * (t - 1.0) * (2.0 * t + 5.0);
            b += t * (t - 1.0);
            c += t * (t - 1.0) * (t - 2.0);
            i = j;
        }
        (a, b, c)
    };
    let (xa, xb, xc) = tie_sums(pairs.iter().map(|p| p.0).collect());
    let (ya, yb, yc) = tie_sums(pairs.iter().map(|p| p.1).collect());
    let mut var = (n * (n - 1.0) * (2.0 * n + 5.0) - xa - ya) / 18.0 + xb * yb / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += xc * yc / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = s as f64 / var.sqrt();
    let p = statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2);
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub feature_name: String,
    pub tau: f64,
    pub p_value: f64,
    pub selected: bool,
    /// Set when tau could not be computed (recorded as 0).
    pub degenerate: bool,
}

/// One result per column, sorted by |tau| descending (name breaks ties).
/// Selection is `|tau| >= threshold`.
pub fn screen_features(
    matrix: &FeatureMatrix,
    labels: &[ThirtyDayLabel],
    threshold: f64,
    exec: Exec,
) -> Result<Vec<ScreeningResult>> {
    if labels.len() != matrix.nrows()
        || labels
            .iter()
            .zip(matrix.patient_ids())
            .any(|(l, id)| &l.patient_id != id)
    {
        return Err(Error::Dimension("screening labels not aligned with matrix rows".into()));
    }
    let y: Vec<f64> = labels.iter().map(|l| if l.dm30 { 1.0 } else { 0.0 }).collect();
    let mut results = exec.map(matrix.ncols(), |c| {
        let x: Vec<f64> = (0..matrix.nrows()).map(|r| matrix.value(r, c)).collect();
        let name = matrix.columns()[c].name.clone();
        match kendall_tau_b(&x, &y) {
            Ok(k) => ScreeningResult {
                feature_name: name,
                tau: k.tau,
                p_value: k.p_value,
                selected: k.tau.abs() >= threshold,
                degenerate: false,
            },
            Err(e) => {
                log::warn!("screening {name}: {e}; not selected");
                ScreeningResult {
                    feature_name: name,
                    tau: 0.0,
                    p_value: 1.0,
                    selected: false,
                    degenerate: true,
                }
            }
        }
    });
    results.sort_by(|a, b| {
        b.tau
            .abs()
            .partial_cmp(&a.tau.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.feature_name.cmp(&b.feature_name))
    });
    Ok(results)
}

pub fn write_screening_table<W: std::io::Write>(results: &[ScreeningResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature", "tau", "p", "selected"])?;
    for r in results {
        wr.write_record([
            r.feature_name.clone(),
            format!("{:.6}", r.tau),
            format!("{:.3e}", r.p_value),
            r.selected.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
