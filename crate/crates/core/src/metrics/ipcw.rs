//! IPCW Brier score, integrated Brier score and NBLL.

use std::cell::Cell;

use crate::cohort::SurvivalOutcome;
use crate::error::{Error, Result};

/// Clamp applied to survival probabilities before taking logs.
pub const NBLL_EPS: f64 = 1e-7;

/// Strictly increasing evaluation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    rule: String,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, rule: impl Into<String>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("time grid".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateInput("time grid must be finite, nonnegative, strictly increasing".into()));
        }
        Ok(TimeGrid { times, rule: rule.into() })
    }

    /// `points` equally spaced times from 0 to the `quantile` of `times`
    /// (linear interpolation between order statistics).
    pub fn from_quantile(times: &[f64], points: usize, quantile: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("evaluation times".into()));
        }
        if points < 2 {
            return Err(Error::Config(vec![format!("grid points {points} < 2")]));
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let horizon = percentile_linear(&sorted, quantile);
        if horizon <= 0.0 {
            return Err(Error::DegenerateInput(format!("grid horizon {horizon} is not positive")));
        }
        let step = horizon / (points - 1) as f64;
        let mut grid: Vec<f64> = (0..points).map(|k| k as f64 * step).collect();
        grid[points - 1] = horizon;
        TimeGrid::new(grid, format!("linspace(0, q{quantile}, {points})"))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn rule(&self) -> &str {
        &self.rule
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Kaplan-Meier estimate of the censoring survival function.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringKm {
    times: Vec<f64>,
    /// `values[k]` = G just after `times[k]`.
    values: Vec<f64>,
}

impl CensoringKm {
    pub fn fit(outcomes: &[SurvivalOutcome]) -> Self {
        let mut order: Vec<&SurvivalOutcome> = outcomes.iter().collect();
        order.sort_by_key(|o| o.duration_days);
        let n = order.len();
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut g = 1.0;
        let mut i = 0;
        while i < n {
            let t = order[i].duration_days;
            let at_risk = n - i;
            let mut censored = 0usize;
            while i < n && order[i].duration_days == t {
                censored += usize::from(!order[i].event);
                i += 1;
            }
            if censored > 0 {
                g *= 1.0 - censored as f64 / at_risk as f64;
                times.push(f64::from(t));
                values.push(g);
            }
        }
        CensoringKm { times, values }
    }

    /// Ĝ(t), right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Ĝ(t⁻).
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

fn check_shapes<C: AsRef<[f64]>>(grid: &TimeGrid, curves: &[C], outcomes: &[SurvivalOutcome]) -> Result<()> {
    if curves.len() != outcomes.len() {
        return Err(Error::Dimension(format!("{} curves for {} outcomes", curves.len(), outcomes.len())));
    }
    if outcomes.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    if let Some(c) = curves.iter().find(|c| c.as_ref().len() != grid.len()) {
        return Err(Error::Dimension(format!(
            "curve of length {} on a grid of {}",
            c.as_ref().len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Per-time IPCW loss. `event_term(s)` applies to deaths by `t`, `alive_term(s)`
/// to subjects still at risk after `t`. Zero-weight terms are tallied.
fn ipcw_mean(
    t: f64,
    s_at_t: impl Fn(usize) -> f64,
    outcomes: &[SurvivalOutcome],
    g: &CensoringKm,
    event_term: impl Fn(f64) -> f64,
    alive_term: impl Fn(f64) -> f64,
    zero_weights: &Cell<usize>,
) -> f64 {
    let g_t = g.at(t);
    let mut sum = 0.0;
    for (i, o) in outcomes.iter().enumerate() {
        let ti = o.time();
        if ti <= t && o.event {
            let w = g.before(ti);
            if w > 0.0 {
                sum += event_term(s_at_t(i)) / w;
            } else {
                zero_weights.set(zero_weights.get() + 1);
            }
        } else if ti > t {
            if g_t > 0.0 {
                sum += alive_term(s_at_t(i)) / g_t;
            } else {
                zero_weights.set(zero_weights.get() + 1);
            }
        }
    }
    sum / outcomes.len() as f64
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Integral over the grid divided by its last time. A one-point grid
/// returns the point value.
fn normalized_integral(grid: &TimeGrid, values: &[f64]) -> f64 {
    if grid.len() == 1 {
        return values[0];
    }
    trapezoid(grid.times(), values) / grid.horizon()
}

fn warn_zero(metric: &str, zero: &Cell<usize>) {
    if zero.get() > 0 {
        log::warn!("{metric}: {} terms had zero censoring weight and were dropped", zero.get());
    }
}

/// BS(t) for survival probabilities `surv_at_t[i]` = S(t | x_i).
pub fn brier(t: f64, surv_at_t: &[f64], outcomes: &[SurvivalOutcome], g: &CensoringKm) -> Result<f64> {
    if surv_at_t.len() != outcomes.len() {
        return Err(Error::Dimension("survival values and outcomes differ in length".into()));
    }
    let zero = Cell::new(0);
    let v = ipcw_mean(t, |i| surv_at_t[i], outcomes, g, |s| s * s, |s| (1.0 - s) * (1.0 - s), &zero);
    warn_zero("brier", &zero);
    Ok(v)
}

/// BS(t) at every grid time. `curves[i][k]` = S(grid[k] | x_i).
pub fn brier_curve<C: AsRef<[f64]>>(
    grid: &TimeGrid,
    curves: &[C],
    outcomes: &[SurvivalOutcome],
    g: &CensoringKm,
) -> Result<Vec<f64>> {
    check_shapes(grid, curves, outcomes)?;
    let zero = Cell::new(0);
    let out = grid
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            ipcw_mean(t, |i| curves[i].as_ref()[k], outcomes, g, |s| s * s, |s| (1.0 - s) * (1.0 - s), &zero)
        })
        .collect();
    warn_zero("brier", &zero);
    Ok(out)
}

pub fn integrated_brier<C: AsRef<[f64]>>(
    grid: &TimeGrid,
    curves: &[C],
    outcomes: &[SurvivalOutcome],
    g: &CensoringKm,
) -> Result<f64> {
    let bs = brier_curve(grid, curves, outcomes, g)?;
    Ok(normalized_integral(grid, &bs))
}

pub fn nbll<C: AsRef<[f64]>>(
    grid: &TimeGrid,
    curves: &[C],
    outcomes: &[SurvivalOutcome],
    g: &CensoringKm,
) -> Result<f64> {
    check_shapes(grid, curves, outcomes)?;
    let clamp = |s: f64| s.clamp(NBLL_EPS, 1.0 - NBLL_EPS);
    let zero = Cell::new(0);
    let bll: Vec<f64> = grid
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            ipcw_mean(
                t,
                |i| clamp(curves[i].as_ref()[k]),
                outcomes,
                g,
                |s| (1.0 - s).ln(),
                f64::ln,
                &zero,
            )
        })
        .collect();
    warn_zero("nbll", &zero);
    Ok(-normalized_integral(grid, &bll))
}
