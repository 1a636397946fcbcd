//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use radsurv_core::cohort::{resolve_documents, split_cohort, Column, FeatureKind, FeatureMatrix, SurvivalOutcome};
use radsurv_core::metrics::{
    bootstrap_ci, brier, c_index, integrated_brier, nbll, BootstrapConfig, CensoringKm, TimeGrid, NBLL_EPS,
};
use radsurv_core::models::deepsurv::loss_and_gradient;
use radsurv_core::models::{cox_fit, deepsurv_fit, CoxConfig, DeepSurvConfig, Ties};
use radsurv_core::pipeline::{sample_gold_cases, RunConfig};
use radsurv_core::screening::kendall_tau_b;
use radsurv_core::structurizer::parse::parse_strict;
use radsurv_core::structurizer::{
    batch_structurize, evaluate_accuracy, parse_response, structurize_patient, CategoryKey, CompletionProvider,
    CompletionRequest, ParseStatus, PromptSet, RetryPolicy, NOT_EVALUABLE,
};
use radsurv_core::synth::{generate_cohort, MockProvider, SynthConfig};
use radsurv_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- oracles

fn c_index_oracle(risk: &[f64], out: &[SurvivalOutcome]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..out.len() {
        for j in 0..out.len() {
            let (ti, tj) = (out[i].duration_days, out[j].duration_days);
            if !out[i].event || !(ti < tj || (ti == tj && !out[j].event)) {
                continue;
            }
            den += 1.0;
            if risk[i] > risk[j] {
                num += 1.0;
            } else if risk[i] == risk[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

fn tau_b_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (mut s, mut n0, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            n0 += 1;
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx * dy > 0.0 {
                s += 1;
            } else if dx * dy < 0.0 {
                s -= 1;
            }
        }
    }
    s as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt()
}

/// Censoring survival by product over distinct times `s` (`s <= t`, or
/// `s < t` when `strict`) of one minus censored over at risk.
fn censoring_oracle(out: &[SurvivalOutcome], t: f64, strict: bool) -> f64 {
    let times: BTreeSet<u32> = out.iter().map(|o| o.duration_days).collect();
    let mut g = 1.0;
    for s in times {
        let sf = f64::from(s);
        if sf > t || (strict && sf == t) {
            break;
        }
        let at_risk = out.iter().filter(|o| o.duration_days >= s).count() as f64;
        let censored = out.iter().filter(|o| o.duration_days == s && !o.event).count() as f64;
        g *= 1.0 - censored / at_risk;
    }
    g
}

fn weighted_oracle(t: f64, s: &[f64], out: &[SurvivalOutcome], dead: impl Fn(f64) -> f64, alive: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (i, o) in out.iter().enumerate() {
        let ti = o.time();
        if ti <= t && o.event {
            let w = censoring_oracle(out, ti, true);
            if w > 0.0 {
                total += dead(s[i]) / w;
            }
        } else if ti > t {
            let w = censoring_oracle(out, t, false);
            if w > 0.0 {
                total += alive(s[i]) / w;
            }
        }
    }
    total / out.len() as f64
}

fn brier_oracle(t: f64, s: &[f64], out: &[SurvivalOutcome]) -> f64 {
    weighted_oracle(t, s, out, |v| v * v, |v| (1.0 - v) * (1.0 - v))
}

fn integral_oracle(grid: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let area: f64 = (1..grid.len()).map(|k| 0.5 * (f(k) + f(k - 1)) * (grid[k] - grid[k - 1])).sum();
    area / grid[grid.len() - 1]
}

// ---------------------------------------------------------------- criteria

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<SurvivalOutcome>, Vec<f64>) {
    let n = rng.random_range(4..=30);
    let out: Vec<SurvivalOutcome> = (0..n)
        .map(|_| SurvivalOutcome::new(rng.random_range(1..=12), rng.random_bool(0.6)))
        .collect();
    let risk = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
    (out, risk)
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let (out, risk) = random_instance(&mut rng);
        if !out.iter().any(|o| o.event) {
            continue;
        }
        let c = c_index(&risk, &out).map_err(|e| e.to_string())?;
        worst = worst.max((c - c_index_oracle(&risk, &out)).abs());

        let y: Vec<f64> = out.iter().map(|o| o.time()).collect();
        if risk.iter().any(|r| *r != risk[0]) && y.iter().any(|v| *v != y[0]) {
            let tau = kendall_tau_b(&risk, &y).map_err(|e| e.to_string())?.tau;
            worst = worst.max((tau - tau_b_oracle(&risk, &y)).abs());
        }

        let grid_times: Vec<f64> = vec![0.0, 2.0, 3.5, 5.0, 7.0, 9.0];
        let grid = TimeGrid::new(grid_times.clone(), "fixed").map_err(|e| e.to_string())?;
        let curves: Vec<Vec<f64>> = (0..out.len())
            .map(|_| {
                let mut s = 1.0;
                grid_times
                    .iter()
                    .map(|_| {
                        s *= rng.random_range(0.6..1.0);
                        if rng.random_bool(0.05) {
                            s = 0.0;
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        let km = CensoringKm::fit(&out);
        for (k, &t) in grid_times.iter().enumerate() {
            let s: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            let b = brier(t, &s, &out, &km).map_err(|e| e.to_string())?;
            worst = worst.max((b - brier_oracle(t, &s, &out)).abs());
        }
        let ibs = integrated_brier(&grid, &curves, &out, &km).map_err(|e| e.to_string())?;
        let ibs_o = integral_oracle(&grid_times, |k| {
            let s: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            brier_oracle(grid_times[k], &s, &out)
        });
        worst = worst.max((ibs - ibs_o).abs());
        let nb = nbll(&grid, &curves, &out, &km).map_err(|e| e.to_string())?;
        let nb_o = -integral_oracle(&grid_times, |k| {
            let s: Vec<f64> = curves.iter().map(|c| c[k].clamp(NBLL_EPS, 1.0 - NBLL_EPS)).collect();
            weighted_oracle(grid_times[k], &s, &out, |v| (1.0 - v).ln(), f64::ln)
        });
        worst = worst.max((nb - nb_o).abs());
        done += 1;
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("50 instances, max |impl - oracle| = {worst:.1e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn one_column(x: &[f64], name: &str) -> FeatureMatrix {
    let ids = (0..x.len()).map(|i| format!("P{i}")).collect();
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    FeatureMatrix::from_rows(ids, vec![Column::new(name, FeatureKind::Continuous)], &rows).expect("matrix")
}

/// Breslow log partial likelihood for one covariate.
fn breslow_loglik(b: f64, x: &[f64], out: &[SurvivalOutcome]) -> f64 {
    let mut ll = 0.0;
    for (i, o) in out.iter().enumerate() {
        if o.event {
            let risk: f64 = out
                .iter()
                .zip(x)
                .filter(|(oj, _)| oj.duration_days >= o.duration_days)
                .map(|(_, xj)| (b * xj).exp())
                .sum();
            ll += b * x[i] - risk.ln();
        }
    }
    ll
}

fn cox_grid() -> Outcome {
    let start = Instant::now();
    let x = [0.5, -1.0, 2.0, 0.0, 1.5];
    let out = [
        SurvivalOutcome::new(5, true),
        SurvivalOutcome::new(8, false),
        SurvivalOutcome::new(3, true),
        SurvivalOutcome::new(5, true),
        SurvivalOutcome::new(10, true),
    ];
    let cfg = CoxConfig { ties: Ties::Breslow, ridge: 0.0, ..CoxConfig::default() };
    let model = cox_fit(&one_column(&x, "x"), &out, &cfg).map_err(|e| e.to_string())?;
    let beta = model.beta[0] / model.standardizer.sd[0];

    // coarse grid, then successively finer grids around the best point
    let (mut center, mut step) = (0.0, 0.1);
    let mut lo = -10.0;
    let mut hi = 10.0;
    for _ in 0..7 {
        let mut best = (f64::NEG_INFINITY, center);
        let mut b = lo;
        while b <= hi {
            let ll = breslow_loglik(b, &x, &out);
            if ll > best.0 {
                best = (ll, b);
            }
            b += step;
        }
        center = best.1;
        lo = center - step;
        hi = center + step;
        step /= 20.0;
    }
    let monotone = model.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let elapsed = start.elapsed();
    check(
        (beta - center).abs() < 1e-4 && monotone && elapsed < Duration::from_secs(1),
        format!(
            "beta {beta:.6} vs grid {center:.6}, trace of {} nondecreasing: {monotone}, {:.3}s",
            model.loglik_trace.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn linear_cohort(n: usize, beta: &[f64], seed: u64) -> (FeatureMatrix, Vec<SurvivalOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| beta.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let out = rows
        .iter()
        .map(|r| {
            let eta: f64 = r.iter().zip(beta).map(|(a, b)| a * b).sum();
            let t: f64 = Exp::new(eta.exp() / 200.0).expect("rate").sample(&mut rng);
            let c: f64 = Exp::new(1.0 / 400.0).expect("rate").sample(&mut rng);
            SurvivalOutcome::new(t.min(c).ceil() as u32, t <= c)
        })
        .collect();
    let ids = (0..n).map(|i| format!("P{i}")).collect();
    let cols = (0..beta.len()).map(|j| Column::new(format!("x{j}"), FeatureKind::Continuous)).collect();
    (FeatureMatrix::from_rows(ids, cols, &rows).expect("matrix"), out)
}

fn deepsurv_checks() -> Outcome {
    let (m, out) = linear_cohort(60, &[1.0, -0.5, 0.3], 3);
    let x: Vec<f64> = (0..m.nrows()).flat_map(|r| m.row(r).to_vec()).collect();
    let layers = [3usize, 6, 4, 1];
    let n_params: usize = layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let loss = |p: &[f64]| loss_and_gradient(&layers, p, &x, &out).map(|v| v.0);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let params: Vec<f64> = (0..n_params).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.5 * z }).collect();
        let (_, grad) = loss_and_gradient(&layers, &params, &x, &out).map_err(|e| e.to_string())?;
        let h = 1e-6;
        let mut diff = 0.0;
        for k in 0..n_params {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[k] += h;
            pm[k] -= h;
            let fd = (loss(&pp).map_err(|e| e.to_string())? - loss(&pm).map_err(|e| e.to_string())?) / (2.0 * h);
            diff += (fd - grad[k]).powi(2);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        worst = worst.max(diff.sqrt() / norm);
    }

    let (m, out) = linear_cohort(1500, &[1.0, -0.6, 0.3, 0.0], 11);
    let cox = cox_fit(&m, &out, &CoxConfig::default()).map_err(|e| e.to_string())?;
    let cfg = DeepSurvConfig {
        hidden: vec![],
        learning_rate: 1e-2,
        val_fraction: 0.0,
        max_epochs: 500,
        ..DeepSurvConfig::default()
    };
    let net = deepsurv_fit(&m, &out, &cfg).map_err(|e| e.to_string())?;
    let w = net.linear_weights().ok_or("network is not linear")?;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cos = w.iter().zip(&cox.beta).map(|(a, b)| a * b).sum::<f64>() / (norm(w) * norm(&cox.beta));
    check(
        worst < 1e-4 && cos >= 0.99,
        format!("max relative gradient error {worst:.1e} over 10 points, linear net vs Cox cosine {cos:.4}"),
    )
}

struct Row {
    point: f64,
    lo: f64,
    hi: f64,
}

fn read_table(path: &Path) -> Result<BTreeMap<(String, String, String), Row>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| e.to_string());
        rows.insert(
            (f[1].to_string(), f[2].to_string(), f[4].to_string()),
            Row { point: num(5)?, lo: num(6)?, hi: num(7)? },
        );
    }
    Ok(rows)
}

const MODELS: [&str; 3] = ["cox", "rsf", "deepsurv"];

fn directional(dir: &Path, elapsed: Duration) -> Outcome {
    let t = read_table(&dir.join("report/performance.csv"))?;
    let get = |set: &str, model: &str, metric: &str| {
        t.get(&(set.to_string(), model.to_string(), metric.to_string()))
            .ok_or(format!("missing {set}/{model}/{metric}"))
    };
    let mut ok = elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for model in MODELS {
        let (s, l) = (get("structured", model, "c_index")?, get("structured+llm", model, "c_index")?);
        let gain = l.point - s.point;
        let separate = s.hi < l.lo;
        let ibs = get("structured+llm", model, "ibs")?.point < get("structured", model, "ibs")?.point;
        let nb = get("structured+llm", model, "nbll")?.point < get("structured", model, "nbll")?.point;
        ok &= gain >= 0.05 && separate && ibs && nb;
        parts.push(format!(
            "{model} C {:.3}->{:.3} (+{gain:.3}, CIs disjoint {separate}, IBS down {ibs}, NBLL down {nb})",
            s.point, l.point
        ));
    }
    check(ok, format!("{}; run {:.0}s", parts.join("; "), elapsed.as_secs_f64()))
}

fn accuracy_calibration() -> Outcome {
    let cohort = generate_cohort(&SynthConfig { n_patients: 400, ..SynthConfig::default() }, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let labels = cohort.gold_labels();
    let records: Vec<_> = cohort.records.iter().map(resolve_documents).collect();
    let mut ids: Vec<String> = records.iter().map(|r| r.patient_id.clone()).collect();
    ids.sort();
    let prompts = PromptSet::builtin();
    let policy = RetryPolicy::default();
    let mut covered = 0;
    let mut mean_acc = 0.0;
    for rep in 0..50u64 {
        // seeds follow the pipeline's stream scheme for `--seed rep`
        let mut run = RunConfig::default();
        run.set_seed(rep);
        let sample = sample_gold_cases(&labels, &ids, 20, run.stream_seed("accuracy-cases"));
        let chosen: BTreeSet<&str> = sample.iter().map(|g| g.case_id.as_str()).collect();
        let subset: Vec<_> = records.iter().filter(|r| chosen.contains(r.patient_id.as_str())).cloned().collect();
        let provider = MockProvider::from_labels(&labels, 0.125, run.stream_seed("mock"));
        let sets = batch_structurize(&subset, &prompts, &provider, &policy, 4, Exec::Parallel);
        let cfg = BootstrapConfig { resamples: 1000, level: 0.95, seed: run.stream_seed("accuracy"), exec: Exec::Parallel };
        let report = evaluate_accuracy(&sets, &sample, &cfg).map_err(|e| e.to_string())?;
        mean_acc += report.average.accuracy / 50.0;
        covered += usize::from(report.average.ci.contains(0.875));
    }
    check(
        covered >= 45,
        format!("average-accuracy CI contains 0.875 in {covered}/50 repetitions (mean accuracy {mean_acc:.3})"),
    )
}

fn importance_pattern(dir: &Path) -> Outcome {
    let path = dir.join("report/importance.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sums: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] != "structured+llm" {
            continue;
        }
        let d: f64 = f[4].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        let e = sums.entry((f[0].to_string(), f[2].to_string())).or_default();
        e.0 += d;
        e.1 += 1.0;
    }
    let expected: BTreeSet<&str> = ["general_condition", "disease_extent", "RT_aim"].into();
    let mut ok = true;
    let mut parts = Vec::new();
    for model in MODELS {
        let mut ranked: Vec<(&str, f64)> = sums
            .iter()
            .filter(|((m, _), _)| m == model)
            .map(|((_, f), (s, n))| (f.as_str(), s / n))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<&str> = ranked.iter().take(3).map(|r| r.0).collect();
        ok &= top.len() == 3 && top.iter().all(|f| expected.contains(f));
        parts.push(format!("{model}: {}", top.join(" > ")));
    }
    check(ok, parts.join("; "))
}

/// Answers every request with free text.
struct ProseProvider(&'static str);

impl CompletionProvider for ProseProvider {
    fn name(&self) -> &str {
        "prose"
    }

    fn complete(&self, _: &CompletionRequest<'_>) -> radsurv_core::Result<String> {
        Ok(self.0.to_string())
    }
}

const PROSE: [&str; 8] = [
    "Based on the clinical information, the patient appears to be in fair general condition and able to tolerate treatment.",
    "The primary tumor is most consistent with an adenocarcinoma of pulmonary origin.",
    "Imaging suggests progression with new lesions in the liver; close follow-up is recommended.",
    "Radiotherapy is given with palliative intent to relieve bone pain.",
    "I am unable to determine the disease extent from the provided documents.",
    "The patient has previously received radiation to the same region, so re-irradiation should be considered carefully.",
    "This does not appear to be an emergency treatment, although symptoms warrant prompt attention.",
    "Answer: the patient is likely to benefit from treatment. Please consult the treating physician.",
];

fn parser_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ws = [" ", "", "  ", "\n", "\t"];
    let mut strict = 0;
    for _ in 0..1000 {
        let key = CategoryKey::ALL[rng.random_range(0..7)];
        let codes: Vec<u8> = key.schema().allowed_codes().collect();
        let code = codes[rng.random_range(0..codes.len())];
        let pick = |rng: &mut ChaCha8Rng| ws[rng.random_range(0..ws.len())];
        let raw = format!("{}{{{}\"{key}={code}\"{}}}{}", pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng));
        if matches!(parse_response(key, &raw), Ok(p) if p.status == ParseStatus::Strict && p.code == code) {
            strict += 1;
        }
    }

    let mut prose_parsed = 0;
    for text in PROSE {
        for key in CategoryKey::ALL {
            prose_parsed += usize::from(parse_response(key, text).is_ok());
        }
    }

    let mut fuzz_bad = 0;
    for _ in 0..100_000 {
        let len = rng.random_range(0..48);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        if rng.random_bool(0.3) {
            let key = CategoryKey::ALL[rng.random_range(0..7)];
            let at = rng.random_range(0..=bytes.len());
            bytes.splice(at..at, format!("{key}=").into_bytes());
        }
        let text = String::from_utf8_lossy(&bytes);
        for key in CategoryKey::ALL {
            let valid = match parse_response(key, &text) {
                Ok(p) => {
                    key.schema().allows(p.code)
                        && (p.status == ParseStatus::Tolerant || parse_strict(key, &text) == Some(p.code))
                }
                Err(f) => f.raw == text,
            };
            fuzz_bad += usize::from(!valid);
        }
    }

    let cohort = generate_cohort(&SynthConfig { n_patients: 30, censoring_target: 0.3, ..SynthConfig::default() }, Exec::Sequential)
        .map_err(|e| e.to_string())?;
    let record = resolve_documents(&cohort.records[0]);
    let mut fallback_ok = true;
    for text in PROSE {
        let set = structurize_patient(&record, &PromptSet::builtin(), &ProseProvider(text), &RetryPolicy::default());
        fallback_ok &= CategoryKey::ALL.iter().all(|k| {
            let p = &set.provenance[k];
            set.code(*k) == NOT_EVALUABLE && p.attempts == 3 && p.parse_status == ParseStatus::Fallback
        });
    }
    check(
        strict == 1000 && prose_parsed == 0 && fuzz_bad == 0 && fallback_ok,
        format!(
            "well-formed strict {strict}/1000, prose parsed {prose_parsed}/{}, fuzz violations {fuzz_bad}/700000, persistent failure -> 9 after 3 attempts: {fallback_ok}",
            PROSE.len() * 7
        ),
    )
}

fn bootstrap_coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut covered = 0;
    for trial in 0..300u64 {
        let data: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let cfg = BootstrapConfig { resamples: 1000, level: 0.95, seed: trial, exec: Exec::Parallel };
        let ci = bootstrap_ci(data.len(), |idx| Ok(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64), &cfg)
            .map_err(|e| e.to_string())?;
        covered += usize::from(ci.contains(0.0));
    }
    let rate = covered as f64 / 300.0;
    check((rate - 0.95).abs() <= 0.04, format!("coverage {covered}/300 = {:.1}%", rate * 100.0))
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let read = |d: &Path| std::fs::read(d.join("report/report.txt")).map_err(|e| e.to_string());
    let same_report = read(a)? == read(b)?;
    let same_table = std::fs::read(a.join("report/performance.csv")).map_err(|e| e.to_string())?
        == std::fs::read(b.join("report/performance.csv")).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut overlaps = 0;
    let mut lost = 0;
    for seed in 0..100u64 {
        let n = rng.random_range(5..2000);
        let ids: Vec<String> = (0..n).map(|i| format!("ID{:06}", i * 7 + rng.random_range(0..7))).collect();
        let split = split_cohort(&ids, 0.2, seed).map_err(|e| e.to_string())?;
        let train: BTreeSet<&String> = split.train.iter().collect();
        overlaps += split.test.iter().filter(|id| train.contains(id)).count();
        lost += n - split.train.len() - split.test.len();
    }
    check(
        same_report && same_table && overlaps == 0 && lost == 0,
        format!("reports identical {same_report}, tables identical {same_table}; 100 splits: {overlaps} shared ids, {lost} lost"),
    )
}

fn cli_run(dir: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_radsurv"))
        .arg("--out")
        .arg(dir)
        .arg("run")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(start.elapsed())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, r: Outcome| {
        match &r {
            Ok(d) => println!("PASS {n} {name}: {d}"),
            Err(d) => println!("FAIL {n} {name}: {d}"),
        }
        failed += usize::from(r.is_err());
    };
    report(1, "metric oracles", metric_oracles());
    report(2, "cox grid search", cox_grid());
    report(3, "deepsurv gradient", deepsurv_checks());

    let runs = tempfile::tempdir().map(|t| {
        let (a, b) = (t.path().join("a"), t.path().join("b"));
        (t, a, b)
    });
    let runs = runs.map_err(|e| e.to_string()).and_then(|(t, a, b)| {
        let ta = cli_run(&a)?;
        cli_run(&b)?;
        Ok((t, a, b, ta))
    });
    match &runs {
        Ok((_, a, b, ta)) => {
            report(4, "directional reproduction", directional(a, *ta));
            report(5, "accuracy calibration", accuracy_calibration());
            report(6, "importance pattern", importance_pattern(a));
            report(7, "parser robustness", parser_robustness());
            report(8, "bootstrap coverage", bootstrap_coverage());
            report(9, "determinism", determinism(a, b));
        }
        Err(e) => {
            let e = format!("pipeline run failed: {e}");
            report(4, "directional reproduction", Err(e.clone()));
            report(5, "accuracy calibration", accuracy_calibration());
            report(6, "importance pattern", Err(e.clone()));
            report(7, "parser robustness", parser_robustness());
            report(8, "bootstrap coverage", bootstrap_coverage());
            report(9, "determinism", Err(e));
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
