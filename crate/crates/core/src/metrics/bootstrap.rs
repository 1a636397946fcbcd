//! Percentile bootstrap over resampled rows.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ipcw::percentile_linear;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.95,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

/// `point` is the mean of the resampled statistics; `plug_in` is the
/// statistic on the original sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub plug_in: f64,
    pub redraws: usize,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `point (lo-hi)` with `decimals` digits, values multiplied by `scale`.
    pub fn format(&self, decimals: usize, scale: f64) -> String {
        format!(
            "{:.d$} ({:.d$}-{:.d$})",
            self.point * scale,
            self.lo * scale,
            self.hi * scale,
            d = decimals
        )
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format(3, 1.0))
    }
}

/// Indices of one resample of `n` rows.
pub fn resample_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn summarize(values: &mut [f64], level: f64, plug_in: f64, redraws: usize) -> Interval {
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let point = if values[0] == values[values.len() - 1] {
        values[0]
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Interval {
        point,
        lo: percentile_linear(values, alpha),
        hi: percentile_linear(values, 1.0 - alpha),
        plug_in,
        redraws,
    }
}

/// Bootstraps `k` statistics computed together on each resample. `stat`
/// receives resampled row indices. A failing resample is redrawn; more than
/// 10% failures overall is an error.
pub fn bootstrap_many<F>(n: usize, k: usize, stat: F, config: &BootstrapConfig) -> Result<Vec<Interval>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync + Send,
{
    if n < 2 {
        return Err(Error::DegenerateInput(format!("bootstrap sample of size {n}")));
    }
    if config.resamples == 0 || !(0.0 < config.level && config.level < 1.0) {
        return Err(Error::Config(vec![format!(
            "bootstrap resamples {} / level {} invalid",
            config.resamples, config.level
        )]));
    }
    let identity: Vec<usize> = (0..n).collect();
    let plug_in = stat(&identity)?;
    if plug_in.len() != k {
        return Err(Error::Dimension(format!("statistic returned {} values, expected {k}", plug_in.len())));
    }
    let budget = config.resamples / 10;
    let draws = config.exec.map(config.resamples, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, b as u64));
        let mut failed = 0usize;
        loop {
            let idx = resample_indices(n, &mut rng);
            match stat(&idx) {
                Ok(v) if v.len() == k && v.iter().all(|x| x.is_finite()) => return (Some(v), failed),
                _ => {
                    failed += 1;
                    if failed > budget {
                        return (None, failed);
                    }
                }
            }
        }
    });
    let failed: usize = draws.iter().map(|(_, f)| *f).sum();
    if failed > budget || draws.iter().any(|(v, _)| v.is_none()) {
        return Err(Error::Bootstrap {
            failed,
            attempted: config.resamples + failed,
        });
    }
    if failed > 0 {
        log::info!("bootstrap: {failed} resamples redrawn");
    }
    let mut columns = vec![Vec::with_capacity(config.resamples); k];
    for (v, _) in draws {
        for (j, x) in v.into_iter().flatten().enumerate() {
            columns[j].push(x);
        }
    }
    Ok(columns
        .iter_mut()
        .zip(plug_in)
        .map(|(col, p)| summarize(col, config.level, p, failed))
        .collect())
}

pub fn bootstrap_ci<F>(n: usize, stat: F, config: &BootstrapConfig) -> Result<Interval>
where
    F: Fn(&[usize]) -> Result<f64> + Sync + Send,
{
    let mut v = bootstrap_many(n, 1, |idx| stat(idx).map(|x| vec![x]), config)?;
    Ok(v.remove(0))
}
