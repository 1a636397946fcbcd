//! Cox proportional hazards by Newton-Raphson on the partial likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::impute::{ImputationPolicy, Standardizer};
use super::{breslow_baseline, check_outcomes, proportional_curve, ModelKind, StepFunction, SurvivalModel};
use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::metrics::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    Breslow,
    #[default]
    Efron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxConfig {
    pub ties: Ties,
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        CoxConfig {
            ties: Ties::Efron,
            ridge: 1e-6,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub features: Vec<String>,
    pub imputer: ImputationPolicy,
    pub standardizer: Standardizer,
    /// Per standardized feature; 0 for constant columns.
    pub beta: Vec<f64>,
    pub baseline: StepFunction,
    pub config: CoxConfig,
    /// Penalized log partial likelihood after each accepted step.
    pub loglik_trace: Vec<f64>,
}

/// Event-time blocks in descending time order: (members, deaths).
struct RiskBlocks {
    order: Vec<usize>,
    /// `[start, end)` of each distinct time within `order`.
    blocks: Vec<(usize, usize)>,
}

impl RiskBlocks {
    fn new(outcomes: &[SurvivalOutcome]) -> Self {
        let mut order: Vec<usize> = (0..outcomes.len()).collect();
        order.sort_by(|&a, &b| outcomes[b].duration_days.cmp(&outcomes[a].duration_days).then(a.cmp(&b)));
        let mut blocks = Vec::new();
        let mut s = 0;
        while s < order.len() {
            let t = outcomes[order[s]].duration_days;
            let mut e = s;
            while e < order.len() && outcomes[order[e]].duration_days == t {
                e += 1;
            }
            blocks.push((s, e));
            s = e;
        }
        RiskBlocks { order, blocks }
    }
}

/// Log partial likelihood, score and information (negative Hessian), all
/// without the ridge term. `x` is row-major n × p.
pub(crate) fn partial_likelihood(
    x: &[f64],
    p: usize,
    outcomes: &[SurvivalOutcome],
    beta: &[f64],
    ties: Ties,
    with_derivatives: bool,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let blocks = RiskBlocks::new(outcomes);
    let row = |i: usize| &x[i * p..(i + 1) * p];
    let eta: Vec<f64> = (0..outcomes.len())
        .map(|i| row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let shift = eta.iter().copied().fold(0.0f64, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut ll = 0.0;
    let mut score = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    // running risk-set sums
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);

    for &(start, end) in &blocks.blocks {
        let members = &blocks.order[start..end];
        let mut d0 = 0.0;
        let mut d1 = DVector::<f64>::zeros(p);
        let mut d2 = DMatrix::<f64>::zeros(p, p);
        let mut deaths = 0usize;
        for &i in members {
            let xi = DVector::from_row_slice(row(i));
            s0 += w[i];
            if with_derivatives {
                s1.axpy(w[i], &xi, 1.0);
                s2.ger(w[i], &xi, &xi, 1.0);
            }
            if outcomes[i].event {
                deaths += 1;
                ll += eta[i] - shift;
                d0 += w[i];
                if with_derivatives {
                    score += &xi;
                    if ties == Ties::Efron {
                        d1.axpy(w[i], &xi, 1.0);
                        d2.ger(w[i], &xi, &xi, 1.0);
                    }
                }
            }
        }
        if deaths == 0 {
            continue;
        }
        let d = deaths as f64;
        for r in 0..deaths {
            let frac = if ties == Ties::Efron { r as f64 / d } else { 0.0 };
            let den = s0 - frac * d0;
            ll -= den.ln();
            if with_derivatives {
                let num1 = &s1 - &d1 * frac;
                let num2 = &s2 - &d2 * frac;
                let mean = &num1 / den;
                score -= &mean;
                info += num2 / den - &mean * mean.transpose();
            }
        }
    }
    (ll, score, info)
}

fn penalized(ll: f64, beta: &[f64], ridge: f64) -> f64 {
    ll - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
}

/// Newton-Raphson from β = 0 with step halving. Returns β and the trace of
/// the penalized log-likelihood.
pub(crate) fn newton(
    x: &[f64],
    p: usize,
    outcomes: &[SurvivalOutcome],
    config: &CoxConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut beta = vec![0.0; p];
    let (ll0, mut score, mut info) = partial_likelihood(x, p, outcomes, &beta, config.ties, true);
    let mut ll = penalized(ll0, &beta, config.ridge);
    let mut trace = vec![ll];
    for _ in 0..config.max_iter {
        for j in 0..p {
            score[j] -= config.ridge * beta[j];
            info[(j, j)] += config.ridge;
        }
        if score.amax() < config.tol {
            return Ok((beta, trace));
        }
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&score))
            .or_else(|| info.clone().lu().solve(&score))
            .ok_or_else(|| Error::NonConvergence {
                iterations: trace.len() - 1,
                trace: trace.clone(),
            })?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let (cll, cs, ci) = partial_likelihood(x, p, outcomes, &cand, config.ties, true);
            let cpen = penalized(cll, &cand, config.ridge);
            if cpen.is_finite() && cpen >= ll {
                accepted = Some((cand, cpen, cs, ci));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, l, s, i)) => {
                let gain = l - ll;
                beta = b;
                ll = l;
                score = s;
                info = i;
                trace.push(ll);
                if gain <= config.tol * ll.abs().max(1.0) {
                    return Ok((beta, trace));
                }
            }
            None => {
                // no representable ascent left; accept if the score is at round-off level
                if score.amax() < 1e-6 {
                    log::debug!("cox: stopped at round-off with |score| {:e}", score.amax());
                    return Ok((beta, trace));
                }
                return Err(Error::NonConvergence {
                    iterations: trace.len() - 1,
                    trace,
                });
            }
        }
    }
    let mut final_score = score;
    for j in 0..p {
        final_score[j] -= config.ridge * beta[j];
    }
    if final_score.amax() < config.tol {
        return Ok((beta, trace));
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        trace,
    })
}

pub fn cox_fit(matrix: &FeatureMatrix, outcomes: &[SurvivalOutcome], config: &CoxConfig) -> Result<CoxModel> {
    check_outcomes(matrix, outcomes)?;
    let imputer = ImputationPolicy::fit(matrix);
    let complete = imputer.transform(matrix)?;
    let standardizer = Standardizer::fit(&complete);
    let x = standardizer.apply(&complete)?;
    let p_all = complete.ncols();

    // constant columns are left out of the fit and keep β = 0
    let active: Vec<usize> = (0..p_all).filter(|&c| !standardizer.is_constant(c)).collect();
    let p = active.len();
    let xa: Vec<f64> = (0..complete.nrows())
        .flat_map(|r| active.iter().map(move |&c| (r, c)))
        .map(|(r, c)| x[r * p_all + c])
        .collect();
    let (beta_a, trace) = newton(&xa, p, outcomes, config)?;
    let mut beta = vec![0.0; p_all];
    for (k, &c) in active.iter().enumerate() {
        beta[c] = beta_a[k];
    }
    let eta = linear_predictor(&x, p_all, &beta);
    let baseline = breslow_baseline(&eta, outcomes);
    Ok(CoxModel {
        features: imputer.feature_names(),
        imputer,
        standardizer,
        beta,
        baseline,
        config: config.clone(),
        loglik_trace: trace,
    })
}

fn linear_predictor(x: &[f64], p: usize, beta: &[f64]) -> Vec<f64> {
    x.chunks(p.max(1))
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect()
}

impl CoxModel {
    fn eta(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let complete = self.imputer.transform(matrix)?;
        let x = self.standardizer.apply(&complete)?;
        if self.features.is_empty() {
            return Ok(vec![0.0; matrix.nrows()]);
        }
        Ok(linear_predictor(&x, self.features.len(), &self.beta))
    }
}

impl SurvivalModel for CoxModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Cox
    }

    fn features(&self) -> &[String] {
        &self.features
    }

    fn risk_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.eta(matrix)
    }

    fn survival(&self, matrix: &FeatureMatrix, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .eta(matrix)?
            .into_iter()
            .map(|e| proportional_curve(&self.baseline, e, grid))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{assert_valid_curves, linear_cohort};
    use super::*;
    use crate::cohort::{Column, FeatureKind};

    fn one_covariate(x: &[f64]) -> FeatureMatrix {
        let ids = (0..x.len()).map(|i| format!("P{i}")).collect();
        let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        FeatureMatrix::from_rows(ids, vec![Column::new("x", FeatureKind::Continuous)], &rows).unwrap()
    }

    /// Breslow log partial likelihood in the raw covariate, written out.
    fn breslow_ll(beta: f64, x: &[f64], outs: &[SurvivalOutcome]) -> f64 {
        let mut ll = 0.0;
        for i in 0..x.len() {
            if !outs[i].event {
                continue;
            }
            let denom: f64 = (0..x.len())
                .filter(|&j| outs[j].duration_days >= outs[i].duration_days)
                .map(|j| (beta * x[j]).exp())
                .sum();
            ll += beta * x[i] - denom.ln();
        }
        ll
    }

    pub(crate) fn five_patients() -> (Vec<f64>, Vec<SurvivalOutcome>) {
        let x = vec![0.5, 1.8, -0.3, 1.1, 0.2];
        let outs = vec![
            SurvivalOutcome::new(3, true),
            SurvivalOutcome::new(5, false),
            SurvivalOutcome::new(5, true),
            SurvivalOutcome::new(8, true),
            SurvivalOutcome::new(12, false),
        ];
        (x, outs)
    }

    #[test]
    fn matches_grid_search_oracle() {
        let (x, outs) = five_patients();
        let m = one_covariate(&x);
        let cfg = CoxConfig { ties: Ties::Breslow, ..Default::default() };
        let model = cox_fit(&m, &outs, &cfg).unwrap();
        let beta_raw = model.beta[0] / model.standardizer.sd[0];
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=200_000 {
            let b = -10.0 + k as f64 * 1e-4;
            let l = breslow_ll(b, &x, &outs);
            if l > best.0 {
                best = (l, b);
            }
        }
        assert!((beta_raw - best.1).abs() < 1e-4, "{beta_raw} vs {}", best.1);
        assert!(model.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn efron_equals_breslow_without_ties() {
        let (m, outs) = linear_cohort(200, &[0.8, -0.5], 3);
        let mut distinct = outs.clone();
        for (i, o) in distinct.iter_mut().enumerate() {
            o.duration_days = o.duration_days * 1000 + i as u32;
        }
        let a = cox_fit(&m, &distinct, &CoxConfig { ties: Ties::Breslow, ..Default::default() }).unwrap();
        let b = cox_fit(&m, &distinct, &CoxConfig::default()).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn efron_gradient_matches_finite_differences() {
        let (m, outs) = linear_cohort(60, &[1.0, -0.5, 0.2], 5);
        let x: Vec<f64> = (0..60).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| m.value(r, c)).collect();
        let beta = [0.3, -0.2, 0.1];
        let (_, score, info) = partial_likelihood(&x, 3, &outs, &beta, Ties::Efron, true);
        let h = 1e-6;
        for j in 0..3 {
            let mut bp = beta;
            let mut bm = beta;
            bp[j] += h;
            bm[j] -= h;
            let (lp, sp, _) = partial_likelihood(&x, 3, &outs, &bp, Ties::Efron, true);
            let (lm, sm, _) = partial_likelihood(&x, 3, &outs, &bm, Ties::Efron, true);
            assert!(((lp - lm) / (2.0 * h) - score[j]).abs() < 1e-6);
            for k in 0..3 {
                let fd = -(sp[k] - sm[k]) / (2.0 * h);
                assert!((fd - info[(k, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn recovers_coefficients() {
        let (m, outs) = linear_cohort(3000, &[1.0, -0.6, 0.0], 1);
        let model = cox_fit(&m, &outs, &CoxConfig::default()).unwrap();
        let raw: Vec<f64> = model.beta.iter().zip(&model.standardizer.sd).map(|(b, s)| b / s).collect();
        assert!((raw[0] - 1.0).abs() < 0.12, "{raw:?}");
        assert!((raw[1] + 0.6).abs() < 0.12, "{raw:?}");
        assert!(raw[2].abs() < 0.12, "{raw:?}");
    }

    #[test]
    fn zero_variance_feature_gets_zero() {
        let (m, outs) = linear_cohort(100, &[1.0], 2);
        let ids = m.patient_ids().to_vec();
        let c = FeatureMatrix::from_rows(ids, vec![Column::new("k", FeatureKind::Continuous)], &vec![vec![3.0]; 100]).unwrap();
        let both = m.hstack(&c).unwrap();
        let model = cox_fit(&both, &outs, &CoxConfig::default()).unwrap();
        assert_eq!(model.beta[1], 0.0);
    }

    #[test]
    fn duplicating_patients_keeps_beta() {
        let (m, outs) = linear_cohort(80, &[0.7, 0.3], 4);
        // Breslow: duplication doubles the log-likelihood up to a constant
        let cfg = CoxConfig { ridge: 0.0, ties: Ties::Breslow, ..Default::default() };
        let a = cox_fit(&m, &outs, &cfg).unwrap();
        let rows: Vec<usize> = (0..80).chain(0..80).collect();
        let mut m2 = m.select_rows(&rows);
        let ids: Vec<String> = (0..160).map(|i| format!("D{i}")).collect();
        m2 = FeatureMatrix::from_rows(ids, m2.columns().to_vec(), &(0..160).map(|r| m2.row(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let outs2: Vec<_> = rows.iter().map(|&r| outs[r]).collect();
        let b = cox_fit(&m2, &outs2, &cfg).unwrap();
        let raw = |md: &CoxModel| md.beta.iter().zip(&md.standardizer.sd).map(|(b, s)| b / s).collect::<Vec<f64>>();
        for (x, y) in raw(&a).iter().zip(raw(&b)) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn prediction_properties() {
        let (m, outs) = linear_cohort(300, &[1.0, 0.5], 6);
        let model = cox_fit(&m, &outs, &CoxConfig::default()).unwrap();
        assert!(model.baseline.is_nondecreasing());
        let last = *model.baseline.times.last().unwrap();
        let grid = TimeGrid::new(vec![0.0, 10.0, 50.0, last, last + 100.0], "t").unwrap();
        let curves = model.survival(&m, &grid).unwrap();
        assert_valid_curves(&curves, &grid);
        for c in &curves {
            assert_eq!(c[3], c[4]);
        }
        let risks = model.risk_scores(&m).unwrap();
        let (hi, lo) = (0..300).fold((0, 0), |(h, l), i| {
            (if risks[i] > risks[h] { i } else { h }, if risks[i] < risks[l] { i } else { l })
        });
        assert!(curves[hi].iter().zip(&curves[lo]).all(|(a, b)| a <= b));

        // a patient at the training mean gets exp(-H0)
        let mean_row: Vec<f64> = model.standardizer.mean.clone();
        let pm = FeatureMatrix::from_rows(vec!["m".into()], m.columns().to_vec(), &[mean_row]).unwrap();
        let s = model.survival(&pm, &grid).unwrap();
        assert!((s[0][2] - (-model.baseline.at(50.0)).exp()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let (m, mut outs) = linear_cohort(20, &[1.0], 7);
        for o in &mut outs {
            o.event = false;
        }
        assert!(matches!(cox_fit(&m, &outs, &CoxConfig::default()), Err(Error::NoEvents)));
    }
}
