//! Delimited and plain-text renderings of the stage outputs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;

use super::{
    read_manifest, EvaluateManifest, ImportanceManifest, IngestManifest, Layout, RunConfig, ScreenManifest,
    StructurizeManifest,
};
use crate::error::Result;
use crate::metrics::{rank_by_mean, Interval};
use crate::screening::{write_screening_table, ScreeningResult};

const METRICS: [&str; 3] = ["c_index", "ibs", "nbll"];

fn intervals(row: &super::MetricRow) -> [&Interval; 3] {
    [&row.c_index, &row.ibs, &row.nbll]
}

/// One line per (feature set, model, metric).
pub fn write_metrics_csv<W: Write>(manifest: &EvaluateManifest, config_hash: &str, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["config_hash", "feature_set", "model", "n_features", "metric", "point", "lo", "hi", "cell"])?;
    for row in &manifest.rows {
        for (metric, iv) in METRICS.iter().zip(intervals(row)) {
            wr.write_record([
                config_hash.to_string(),
                row.feature_set.to_string(),
                row.model.to_string(),
                row.n_features.to_string(),
                metric.to_string(),
                format!("{:.6}", iv.point),
                format!("{:.6}", iv.lo),
                format!("{:.6}", iv.hi),
                iv.format(3, 1.0),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Long format for box plots: model, feature_set, feature, repeat, delta_c.
pub fn write_importance_csv<W: Write>(manifest: &ImportanceManifest, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["model", "feature_set", "feature", "repeat", "delta_c"])?;
    for m in &manifest.results {
        for f in &m.features {
            for (r, d) in f.deltas.iter().enumerate() {
                wr.write_record([
                    m.model.to_string(),
                    m.feature_set.to_string(),
                    f.feature.clone(),
                    r.to_string(),
                    format!("{d:.6}"),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

fn write_accuracy_csv<W: Write>(acc: &crate::structurizer::AccuracyReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["category", "accuracy", "lo", "hi", "cell"])?;
    for c in acc.categories.iter().chain(std::iter::once(&acc.average)) {
        wr.write_record([
            c.category.clone(),
            format!("{:.6}", c.accuracy),
            format!("{:.6}", c.ci.lo),
            format!("{:.6}", c.ci.hi),
            c.cell(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Left-aligned columns separated by two spaces, with a rule under the header.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == widths.len() {
                s.push_str(cell);
            } else {
                let _ = write!(s, "{cell:<w$}  ");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn screening_rows(results: &[ScreeningResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            vec![
                r.feature_name.clone(),
                format!("{:+.3}", r.tau),
                format!("{:.2e}", r.p_value),
                if r.selected { "yes".into() } else { "no".into() },
            ]
        })
        .collect()
}

/// The plain-text report. Sections whose stage has not run are noted as such.
pub fn render_report(cfg: &RunConfig, layout: &Layout) -> Result<String> {
    let hash = cfg.hash()?;
    let mut out = String::new();
    let _ = writeln!(out, "radsurv report");
    let _ = writeln!(out, "config hash: {hash}");
    let _ = writeln!(out, "seed: {}", cfg.seed);

    let ingest: IngestManifest = read_manifest(layout, "ingest")?;
    let _ = writeln!(
        out,
        "cohort: {} records, {} kept, {} train / {} test, {} excluded",
        ingest.n_input,
        ingest.n_kept,
        ingest.train.len(),
        ingest.test.len(),
        ingest.exclusions.len()
    );

    let eval: EvaluateManifest = read_manifest(layout, "evaluate")?;
    let _ = writeln!(
        out,
        "\nPerformance comparison on {} test patients (mean and {:.0}% CI over {} bootstrap resamples; grid {})",
        eval.n_test,
        eval.level * 100.0,
        eval.resamples,
        eval.grid_rule
    );
    let rows: Vec<Vec<String>> = eval
        .rows
        .iter()
        .map(|r| {
            vec![
                r.feature_set.display_name().to_string(),
                r.model.display_name().to_string(),
                r.n_features.to_string(),
                r.c_index.format(3, 1.0),
                r.ibs.format(3, 1.0),
                r.nbll.format(3, 1.0),
            ]
        })
        .collect();
    out += &render_table(&["Feature set", "Model", "Features", "C-index", "IBS", "NBLL"], &rows);

    out += "\nStructurization accuracy\n";
    match read_manifest::<StructurizeManifest>(layout, "structurize") {
        Ok(s) => {
            let _ = writeln!(
                out,
                "provider {}; {} patients; responses strict {}, tolerant {}, fallback {}",
                s.provider, s.n_patients, s.strict, s.tolerant, s.fallback
            );
            match &s.accuracy {
                Some(acc) => {
                    let _ = writeln!(out, "{} cases x {} rater(s), accuracy % (95% CI)", acc.cases, acc.raters);
                    let rows: Vec<Vec<String>> = acc
                        .categories
                        .iter()
                        .chain(std::iter::once(&acc.average))
                        .map(|c| vec![c.category.clone(), c.cell()])
                        .collect();
                    out += &render_table(&["Category", "Accuracy"], &rows);
                }
                None => out += "no gold labels\n",
            }
        }
        Err(_) => out += "not run\n",
    }

    let screen: ScreenManifest = read_manifest(layout, "screen")?;
    let _ = writeln!(
        out,
        "\nScreening: Kendall tau-b with 30-day mortality, training split ({} deaths within 30 days of {}), threshold {}",
        screen.n_dm30, screen.n_train, screen.threshold
    );
    out += &render_table(&["Feature", "tau", "p", "Selected"], &screening_rows(&screen.structured));
    if !screen.categories.is_empty() {
        out += "\nClinical categories (ordinal codes, not evaluable as missing)\n";
        out += &render_table(&["Category", "tau", "p", "Selected"], &screening_rows(&screen.categories));
    }

    if let Ok(imp) = read_manifest::<ImportanceManifest>(layout, "importance") {
        let _ = writeln!(out, "\nPermutation importance: mean drop in C-index over {} repeats", imp.repeats);
        for m in &imp.results {
            let _ = writeln!(out, "{} / {}", m.model.display_name(), m.feature_set);
            let rows: Vec<Vec<String>> = rank_by_mean(&m.features)
                .into_iter()
                .take(10)
                .enumerate()
                .map(|(i, (f, d))| vec![(i + 1).to_string(), f, format!("{d:+.4}")])
                .collect();
            out += &render_table(&["Rank", "Feature", "Mean dC"], &rows);
        }
    }
    Ok(out)
}

/// Writes `report.txt`, `performance.csv`, `accuracy.csv`, `screening.csv` and
/// `importance.csv` under `report/`.
pub fn write_report(cfg: &RunConfig, layout: &Layout) -> Result<String> {
    let text = render_report(cfg, layout)?;
    let dir = layout.stage("report");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.txt"), &text)?;
    let eval: EvaluateManifest = read_manifest(layout, "evaluate")?;
    write_metrics_csv(&eval, &cfg.hash()?, fs::File::create(dir.join("performance.csv"))?)?;
    let screen: ScreenManifest = read_manifest(layout, "screen")?;
    let mut all = screen.structured.clone();
    all.extend(screen.categories.iter().cloned());
    write_screening_table(&all, fs::File::create(dir.join("screening.csv"))?)?;
    if let Ok(s) = read_manifest::<StructurizeManifest>(layout, "structurize") {
        if let Some(acc) = &s.accuracy {
            write_accuracy_csv(acc, fs::File::create(dir.join("accuracy.csv"))?)?;
        }
    }
    if let Ok(imp) = read_manifest::<ImportanceManifest>(layout, "importance") {
        write_importance_csv(&imp, fs::File::create(dir.join("importance.csv"))?)?;
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_columns_align() {
        let t = render_table(&["a", "bb"], &[vec!["xxx".into(), "y".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxxx  y\n");
    }
}
