use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use radsurv_core::cohort::{Column, FeatureKind, FeatureMatrix, SurvivalOutcome};
use radsurv_core::metrics::{bootstrap_many, c_index, permutation_importance, BootstrapConfig};
use radsurv_core::models::{rsf_fit, RsfConfig, SurvivalModel};
use radsurv_core::Exec;

fn cohort(n: usize, p: usize) -> (FeatureMatrix, Vec<SurvivalOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let outcomes = rows
        .iter()
        .map(|r| {
            let eta = r[0] - 0.5 * r[1];
            let t: f64 = Exp::new(eta.exp() / 300.0).unwrap().sample(&mut rng);
            let c: f64 = Exp::new(1.0 / 500.0).unwrap().sample(&mut rng);
            SurvivalOutcome::new(t.min(c).ceil() as u32, t <= c)
        })
        .collect();
    let ids = (0..n).map(|i| format!("P{i}")).collect();
    let cols = (0..p).map(|j| Column::new(format!("x{j}"), FeatureKind::Continuous)).collect();
    (FeatureMatrix::from_rows(ids, cols, &rows).unwrap(), outcomes)
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bootstrap(c: &mut Criterion) {
    let (m, out) = cohort(800, 2);
    let risk: Vec<f64> = (0..m.nrows()).map(|r| m.value(r, 0)).collect();
    let mut group = c.benchmark_group("bootstrap_c_index");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = BootstrapConfig { resamples: 200, level: 0.95, seed: 3, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| {
                bootstrap_many(
                    risk.len(),
                    1,
                    |idx| {
                        let r: Vec<f64> = idx.iter().map(|&i| risk[i]).collect();
                        let o: Vec<SurvivalOutcome> = idx.iter().map(|&i| out[i]).collect();
                        Ok(vec![c_index(&r, &o)?])
                    },
                    cfg,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn forest(c: &mut Criterion) {
    let (m, out) = cohort(500, 8);
    let cfg = RsfConfig { n_trees: 32, ..RsfConfig::default() };
    let mut group = c.benchmark_group("rsf_fit");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rsf_fit(&m, &out, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn importance(c: &mut Criterion) {
    let (m, out) = cohort(500, 8);
    let forest = rsf_fit(&m, &out, &RsfConfig { n_trees: 16, ..RsfConfig::default() }, Exec::Parallel).unwrap();
    let mut group = c.benchmark_group("permutation_importance");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| permutation_importance(|x| forest.risk_scores(x), &m, &out, 3, 5, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap, forest, importance);
criterion_main!(benches);
