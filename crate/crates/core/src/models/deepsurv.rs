//! Feed-forward proportional-hazards network trained on the negative log
//! partial likelihood (Breslow ties), full batch, Adam.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::impute::{ImputationPolicy, Standardizer};
use super::{breslow_baseline, check_outcomes, proportional_curve, ModelKind, StepFunction, SurvivalModel};
use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::metrics::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepSurvConfig {
    /// Hidden layer widths; empty gives a linear model.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DeepSurvConfig {
    fn default() -> Self {
        DeepSurvConfig {
            hidden: vec![64, 64],
            dropout: 0.0,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 20,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSurvNet {
    pub features: Vec<String>,
    pub imputer: ImputationPolicy,
    pub standardizer: Standardizer,
    /// Layer widths from input to the scalar output.
    pub layers: Vec<usize>,
    /// Per layer: weights (input x output, column-major), then biases.
    pub params: Vec<f64>,
    /// Mean training log-risk, subtracted before the baseline is applied.
    pub g_mean: f64,
    pub baseline: StepFunction,
    pub config: DeepSurvConfig,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

fn n_params(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn layer_view(layers: &[usize], params: &[f64], l: usize) -> (DMatrix<f64>, DVector<f64>) {
    let off: usize = layers[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let (i, o) = (layers[l], layers[l + 1]);
    let w = DMatrix::from_column_slice(i, o, &params[off..off + i * o]);
    let b = DVector::from_column_slice(&params[off + i * o..off + i * o + o]);
    (w, b)
}

struct Forward {
    /// Inputs to each layer (the first is the data).
    inputs: Vec<DMatrix<f64>>,
    /// ReLU derivative times dropout scale, per hidden layer.
    gates: Vec<DMatrix<f64>>,
    g: Vec<f64>,
}

fn forward(layers: &[usize], params: &[f64], x: &DMatrix<f64>, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Forward {
    let depth = layers.len() - 1;
    let mut inputs = vec![x.clone()];
    let mut gates = Vec::with_capacity(depth - 1);
    for l in 0..depth {
        let (w, b) = layer_view(layers, params, l);
        let mut z = &inputs[l] * w;
        for (c, bc) in b.iter().enumerate() {
            z.column_mut(c).add_scalar_mut(*bc);
        }
        if l + 1 == depth {
            let g = z.column(0).iter().copied().collect();
            return Forward { inputs, gates, g };
        }
        let mut gate = z.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        if let Some((p, rng)) = dropout.as_mut() {
            if *p > 0.0 {
                let keep = 1.0 / (1.0 - *p);
                gate.iter_mut()
                    .for_each(|v| *v *= if rng.random_bool(1.0 - *p) { keep } else { 0.0 });
            }
        }
        inputs.push(z.component_mul(&gate));
        gates.push(gate);
    }
    unreachable!("network has an output layer")
}

/// Gradient of the parameters given dL/dg.
fn backward(layers: &[usize], params: &[f64], fw: &Forward, dg: &[f64]) -> Vec<f64> {
    let depth = layers.len() - 1;
    let mut grads: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut delta = DMatrix::from_column_slice(dg.len(), 1, dg);
    for l in (0..depth).rev() {
        let (w, _) = layer_view(layers, params, l);
        let dw = fw.inputs[l].transpose() * &delta;
        let db: Vec<f64> = delta.column_iter().map(|c| c.sum()).collect();
        let mut g = dw.as_slice().to_vec();
        g.extend(db);
        grads[l] = g;
        if l > 0 {
            delta = (&delta * w.transpose()).component_mul(&fw.gates[l - 1]);
        }
    }
    grads.concat()
}

/// Breslow negative log partial likelihood averaged over events, with its
/// gradient in the log-risks `g`.
pub(crate) fn neg_log_partial(g: &[f64], outcomes: &[SurvivalOutcome]) -> Result<(f64, Vec<f64>)> {
    let n = g.len();
    let events = outcomes.iter().filter(|o| o.event).count();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    let shift = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = g.iter().map(|v| (v - shift).exp()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| outcomes[b].duration_days.cmp(&outcomes[a].duration_days));

    // descending sweep: risk-set sums per time block
    let mut blocks: Vec<(usize, usize, f64)> = Vec::new();
    let mut s = 0.0;
    let mut loss = 0.0;
    let mut i = 0;
    while i < n {
        let start = i;
        let t = outcomes[order[i]].duration_days;
        while i < n && outcomes[order[i]].duration_days == t {
            s += w[order[i]];
            i += 1;
        }
        let log_s = s.ln() + shift;
        for &k in &order[start..i] {
            if outcomes[k].event {
                loss -= g[k] - log_s;
            }
        }
        blocks.push((start, i, s));
    }
    // ascending sweep: Σ over event blocks at or before t of d / S
    let mut grad = vec![0.0; n];
    let mut acc = 0.0;
    for &(start, end, s) in blocks.iter().rev() {
        let d = order[start..end].iter().filter(|&&k| outcomes[k].event).count() as f64;
        acc += d / s;
        for &k in &order[start..end] {
            grad[k] = -(f64::from(u8::from(outcomes[k].event)) - w[k] * acc);
        }
    }
    let e = events as f64;
    grad.iter_mut().for_each(|v| *v /= e);
    Ok((loss / e, grad))
}

/// Loss and parameter gradient of a network with the given layer widths at
/// `params`, on a row-major `n x layers[0]` design without dropout.
pub fn loss_and_gradient(
    layers: &[usize],
    params: &[f64],
    x: &[f64],
    outcomes: &[SurvivalOutcome],
) -> Result<(f64, Vec<f64>)> {
    if layers.len() < 2 || layers[layers.len() - 1] != 1 || params.len() != n_params(layers) {
        return Err(Error::Config(vec![format!(
            "{} parameters do not fit layers {layers:?}",
            params.len()
        )]));
    }
    let p = layers[0];
    let n = outcomes.len();
    if x.len() != n * p {
        return Err(Error::Config(vec![format!("design of length {} is not {n} x {p}", x.len())]));
    }
    let all: Vec<usize> = (0..n).collect();
    let fw = forward(layers, params, &design(x, &all, p), None);
    let (loss, dg) = neg_log_partial(&fw.g, outcomes)?;
    Ok((loss, backward(layers, params, &fw, &dg)))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
            self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
        }
    }
}

fn init_params(layers: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(n_params(layers));
    for w in layers.windows(2) {
        let he = Normal::new(0.0, (2.0 / w[0].max(1) as f64).sqrt()).expect("positive sd");
        params.extend((0..w[0] * w[1]).map(|_| he.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, w[1]));
    }
    params
}

fn design(x: &[f64], rows: &[usize], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |r, c| x[rows[r] * p + c])
}

pub fn validate(config: &DeepSurvConfig) -> Result<()> {
    let mut problems = Vec::new();
    if !(0.0..1.0).contains(&config.dropout) {
        problems.push(format!("dropout {} outside [0, 1)", config.dropout));
    }
    if !(config.learning_rate > 0.0) {
        problems.push(format!("learning rate {} must be positive", config.learning_rate));
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        problems.push(format!("validation fraction {} outside [0, 1)", config.val_fraction));
    }
    if config.hidden.contains(&0) {
        problems.push("hidden layer of width 0".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

pub fn deepsurv_fit(matrix: &FeatureMatrix, outcomes: &[SurvivalOutcome], config: &DeepSurvConfig) -> Result<DeepSurvNet> {
    check_outcomes(matrix, outcomes)?;
    validate(config)?;
    let imputer = ImputationPolicy::fit(matrix);
    let complete = imputer.transform(matrix)?;
    let standardizer = Standardizer::fit(&complete);
    let x = standardizer.apply(&complete)?;
    let n = complete.nrows();
    let p = complete.ncols();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let n_val = (config.val_fraction * n as f64).round() as usize;
    let (mut val, mut train) = (perm[..n_val].to_vec(), perm[n_val..].to_vec());
    if !val.iter().any(|&i| outcomes[i].event) || !train.iter().any(|&i| outcomes[i].event) {
        if n_val > 0 {
            log::warn!("deepsurv: validation split lacks events; monitoring training loss");
        }
        train = (0..n).collect();
        val.clear();
    }
    train.sort_unstable();
    val.sort_unstable();
    let x_train = design(&x, &train, p);
    let x_val = design(&x, &val, p);
    let o_train: Vec<SurvivalOutcome> = train.iter().map(|&i| outcomes[i]).collect();
    let o_val: Vec<SurvivalOutcome> = val.iter().map(|&i| outcomes[i]).collect();

    let mut layers = vec![p];
    layers.extend(&config.hidden);
    layers.push(1);
    let mut params = init_params(&layers, &mut rng);
    let mut adam = Adam::new(params.len(), config.learning_rate);

    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    for epoch in 0..config.max_epochs {
        let fw = forward(&layers, &params, &x_train, Some((config.dropout, &mut rng)));
        let (loss, dg) = neg_log_partial(&fw.g, &o_train)?;
        train_loss.push(loss);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, trace: train_loss });
        }
        let monitored = if val.is_empty() {
            loss
        } else {
            let g = forward(&layers, &params, &x_val, None).g;
            let vl = neg_log_partial(&g, &o_val)?.0;
            val_loss.push(vl);
            vl
        };
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            log::debug!("deepsurv: early stop at epoch {epoch}, best {}", best.2);
            break;
        }
        let grad = backward(&layers, &params, &fw, &dg);
        adam.step(&mut params, &grad);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, trace: train_loss });
        }
    }
    let (_, params, best_epoch) = best;

    let all: Vec<usize> = (0..n).collect();
    let g = forward(&layers, &params, &design(&x, &all, p), None).g;
    let g_mean = g.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = g.iter().map(|v| v - g_mean).collect();
    Ok(DeepSurvNet {
        features: imputer.feature_names(),
        baseline: breslow_baseline(&centered, outcomes),
        imputer,
        standardizer,
        layers,
        params,
        g_mean,
        config: config.clone(),
        train_loss,
        val_loss,
        best_epoch,
    })
}

impl DeepSurvNet {
    /// Centered log-risk g(x) - mean training g.
    fn eta(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let complete = self.imputer.transform(matrix)?;
        let x = self.standardizer.apply(&complete)?;
        let all: Vec<usize> = (0..complete.nrows()).collect();
        let g = forward(&self.layers, &self.params, &design(&x, &all, complete.ncols()), None).g;
        Ok(g.into_iter().map(|v| v - self.g_mean).collect())
    }

    /// Output-layer weights of a network without hidden layers.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        (self.layers.len() == 2).then(|| &self.params[..self.layers[0]])
    }
}

impl SurvivalModel for DeepSurvNet {
    fn kind(&self) -> ModelKind {
        ModelKind::DeepSurv
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
