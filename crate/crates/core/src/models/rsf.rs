//! Random survival forest with log-rank splitting and learned missing-value
//! routing. Missing cells are used as-is; no imputation.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::impute::select_features;
use super::{check_outcomes, ModelKind, StepFunction, SurvivalModel};
use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::Result;
use crate::exec::{derive_seed, Exec};
use crate::metrics::ipcw::percentile_linear;
use crate::metrics::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsfConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` is ⌈√p⌉.
    pub mtry: Option<usize>,
    /// Minimum deaths in each child of a split.
    pub min_node_events: usize,
    pub max_depth: Option<usize>,
    /// Random candidate thresholds per feature and node.
    pub nsplit: usize,
    /// Size cap of the shared time grid used for risk scores.
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for RsfConfig {
    fn default() -> Self {
        RsfConfig {
            n_trees: 200,
            mtry: None,
            min_node_events: 5,
            max_depth: None,
            nsplit: 10,
            grid_points: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        chf: StepFunction,
        /// Σ over the forest grid of this leaf's CHF.
        risk: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub seed: u64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> (&StepFunction, f64) {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { chf, risk } => return (chf, *risk),
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() { *missing_left } else { v <= *threshold };
                    k = if go_left { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest {
    pub features: Vec<String>,
    pub config: RsfConfig,
    pub grid: Vec<f64>,
    pub trees: Vec<Tree>,
}

struct Data<'a> {
    x: &'a [f64],
    p: usize,
    time: Vec<u32>,
    event: Vec<bool>,
}

impl Data<'_> {
    fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.p + f]
    }
}

/// Log-rank chi-square between the `left` flags over time-sorted samples.
/// Returns `None` when either side has fewer than `min_events` deaths.
fn log_rank(data: &Data<'_>, samples: &[usize], left: &[bool], min_events: usize) -> Option<f64> {
    let (mut events_l, mut events_r) = (0usize, 0usize);
    for (k, &i) in samples.iter().enumerate() {
        if data.event[i] {
            if left[k] {
                events_l += 1;
            } else {
                events_r += 1;
            }
        }
    }
    if events_l < min_events || events_r < min_events {
        return None;
    }
    let (mut y, mut y_l) = (0.0f64, 0.0f64);
    let (mut num, mut var) = (0.0, 0.0);
    let mut k = samples.len();
    while k > 0 {
        let t = data.time[samples[k - 1]];
        let (mut d, mut d_l) = (0.0, 0.0);
        while k > 0 && data.time[samples[k - 1]] == t {
            k -= 1;
            let i = samples[k];
            y += 1.0;
            if left[k] {
                y_l += 1.0;
            }
            if data.event[i] {
                d += 1.0;
                if left[k] {
                    d_l += 1.0;
                }
            }
        }
        if d > 0.0 {
            let frac = y_l / y;
            num += d_l - d * frac;
            if y > 1.0 {
                var += d * frac * (1.0 - frac) * (y - d) / (y - 1.0);
            }
        }
    }
    (var > 0.0).then(|| num * num / var)
}

fn nelson_aalen(data: &Data<'_>, samples: &[usize]) -> StepFunction {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut at_risk = samples.len() as f64;
    let mut h = 0.0;
    let mut k = 0;
    while k < samples.len() {
        let t = data.time[samples[k]];
        let (mut d, mut g) = (0.0, 0.0);
        while k < samples.len() && data.time[samples[k]] == t {
            d += f64::from(u8::from(data.event[samples[k]]));
            g += 1.0;
            k += 1;
        }
        if d > 0.0 {
            h += d / at_risk;
            times.push(f64::from(t));
            values.push(h);
        }
        at_risk -= g;
    }
    StepFunction { times, values }
}

struct Best {
    stat: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

fn best_split(data: &Data<'_>, samples: &[usize], cfg: &RsfConfig, mtry: usize, rng: &mut ChaCha8Rng) -> Option<Best> {
    let mut best: Option<Best> = None;
    let mut left = vec![false; samples.len()];
    for feature in sample(rng, data.p, mtry.min(data.p)).into_iter() {
        let mut observed: Vec<f64> = samples
            .iter()
            .map(|&i| data.value(i, feature))
            .filter(|v| !v.is_nan())
            .collect();
        let has_missing = observed.len() < samples.len();
        observed.sort_by(f64::total_cmp);
        observed.dedup();
        if observed.len() < 2 {
            continue;
        }
        // thresholds below the maximum, so the right child is never empty
        let usable = &observed[..observed.len() - 1];
        let candidates: Vec<f64> = if usable.len() <= cfg.nsplit {
            usable.to_vec()
        } else {
            let mut c: Vec<f64> = (0..cfg.nsplit).map(|_| usable[rng.random_range(0..usable.len())]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        };
        let directions: &[bool] = if has_missing { &[false, true] } else { &[false] };
        for &threshold in &candidates {
            for &missing_left in directions {
                for (k, &i) in samples.iter().enumerate() {
                    let v = data.value(i, feature);
                    left[k] = if v.is_nan() { missing_left } else { v <= threshold };
                }
                if let Some(stat) = log_rank(data, samples, &left, cfg.min_node_events) {
                    if best.as_ref().is_none_or(|b| stat > b.stat) {
                        best = Some(Best {
                            stat,
                            feature,
                            threshold,
                            missing_left,
                        });
                    }
                }
            }
        }
    }
    best
}

fn leaf(data: &Data<'_>, samples: &[usize], grid: &[f64]) -> Node {
    let chf = nelson_aalen(data, samples);
    let risk = grid.iter().map(|&t| chf.at(t)).sum();
    Node::Leaf { chf, risk }
}

fn grow_tree(data: &Data<'_>, by_time: &[usize], cfg: &RsfConfig, mtry: usize, grid: &[f64], seed: u64) -> Tree {
    let n = by_time.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    // bootstrap sample in time order
    let root: Vec<usize> = by_time
        .iter()
        .flat_map(|&i| std::iter::repeat_n(i, counts[i] as usize))
        .collect();

    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, samples, depth)
    let mut stack = vec![(0usize, root, 0usize)];
    nodes.push(Node::Leaf {
        chf: StepFunction { times: vec![], values: vec![] },
        risk: 0.0,
    });
    while let Some((slot, samples, depth)) = stack.pop() {
        let events = samples.iter().filter(|&&i| data.event[i]).count();
        let splittable = events >= 2 * cfg.min_node_events && cfg.max_depth.is_none_or(|d| depth < d);
        let split = if splittable {
            best_split(data, &samples, cfg, mtry, &mut rng)
        } else {
            None
        };
        let Some(b) = split else {
            nodes[slot] = leaf(data, &samples, grid);
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| {
            let v = data.value(i, b.feature);
            if v.is_nan() {
                b.missing_left
            } else {
                v <= b.threshold
            }
        });
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        let placeholder = || Node::Leaf {
            chf: StepFunction { times: vec![], values: vec![] },
            risk: 0.0,
        };
        nodes.push(placeholder());
        nodes.push(placeholder());
        nodes[slot] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            missing_left: b.missing_left,
            left: li as u32,
            right: ri as u32,
        };
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    Tree { seed, nodes }
}

/// Distinct event times, thinned to at most `cap` quantiles.
fn forest_grid(outcomes: &[SurvivalOutcome], cap: usize) -> Vec<f64> {
    let mut t: Vec<f64> = outcomes.iter().filter(|o| o.event).map(|o| o.time()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    if t.len() <= cap || cap < 2 {
        return t;
    }
    let mut g: Vec<f64> = (0..cap)
        .map(|k| percentile_linear(&t, k as f64 / (cap - 1) as f64))
        .collect();
    g.dedup();
    g
}

pub fn rsf_fit(
    matrix: &FeatureMatrix,
    outcomes: &[SurvivalOutcome],
    config: &RsfConfig,
    exec: Exec,
) -> Result<SurvivalForest> {
    check_outcomes(matrix, outcomes)?;
    let p = matrix.ncols();
    let x: Vec<f64> = (0..matrix.nrows()).flat_map(|r| matrix.row(r).iter().copied()).collect();
    let data = Data {
        x: &x,
        p,
        time: outcomes.iter().map(|o| o.duration_days).collect(),
        event: outcomes.iter().map(|o| o.event).collect(),
    };
    let mtry = config.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).max(1);
    let grid = forest_grid(outcomes, config.grid_points);
    let mut by_time: Vec<usize> = (0..matrix.nrows()).collect();
    by_time.sort_by_key(|&i| (outcomes[i].duration_days, i));

    let trees = exec.map(config.n_trees, |t| {
        grow_tree(&data, &by_time, config, mtry, &grid, derive_seed(config.seed, t as u64))
    });
    if trees.iter().all(|t| t.nodes.len() == 1) {
        log::warn!("rsf: no valid split found; every tree is a single node");
    }
    Ok(SurvivalForest {
        features: matrix.column_names(),
        config: config.clone(),
        grid,
        trees,
    })
}

impl SurvivalForest {
    fn rows(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        select_features(matrix, &self.features)
    }

    /// Ensemble CHF of one row at the given times.
    pub fn chf(&self, row: &[f64], times: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; times.len()];
        for tree in &self.trees {
            let (chf, _) = tree.leaf(row);
            for (k, &t) in times.iter().enumerate() {
                h[k] += chf.at(t);
            }
        }
        let m = self.trees.len() as f64;
        h.iter_mut().for_each(|v| *v /= m);
        h
    }
}

impl SurvivalModel for SurvivalForest {
    fn kind(&self) -> ModelKind {
        ModelKind::Rsf
    }

    fn features(&self) -> &[String] {
        &self.features
    }

    fn risk_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let m = self.rows(matrix)?;
        let n_trees = self.trees.len() as f64;
        Ok((0..m.nrows())
            .map(|r| {
                let row = m.row(r);
                self.trees.iter().map(|t| t.leaf(row).1).sum::<f64>() / n_trees
            })
            .collect())
    }

    fn survival(&self, matrix: &FeatureMatrix, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
        let m = self.rows(matrix)?;
        Ok((0..m.nrows())
            .map(|r| {
                self.chf(m.row(r), grid.times())
                    .into_iter()
                    .zip(grid.times())
                    .map(|(h, &t)| if t <= 0.0 { 1.0 } else { (-h).exp() })
                    .collect()
            })
            .collect())
    }
}
