//! CSV experiment reports with a JSON provenance sidecar.
//!
//! Each condition contributes one `aggregate` row followed by one `run` row
//! per training run. Floats are written in Rust's shortest round-trip form,
//! so parsing a cell gives back the exact `f64` that was written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use compolang::experiments::ExperimentReport;

/// Columns after `experiment` and the condition keys.
pub const VALUE_COLUMNS: [&str; 10] = [
    "kind",
    "run",
    "seed",
    "n_runs",
    "accuracy",
    "perfect_share",
    "test_correct",
    "test_size",
    "best_dev_accuracy",
    "stopping_epoch",
];

pub fn header(report: &ExperimentReport) -> Vec<String> {
    std::iter::once("experiment".to_string())
        .chain(report.condition_keys.iter().cloned())
        .chain(VALUE_COLUMNS.iter().map(|c| c.to_string()))
        .collect()
}

pub fn write_csv<W: Write>(report: &ExperimentReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(report))?;
    for row in &report.rows {
        let prefix = std::iter::once(report.experiment.clone()).chain(row.condition.iter().cloned());
        let mut aggregate: Vec<String> = prefix.clone().collect();
        aggregate.extend([
            "aggregate".to_string(),
            String::new(),
            String::new(),
            row.n_runs().to_string(),
            row.mean_accuracy().to_string(),
            row.perfect_share().to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
        w.write_record(&aggregate)?;
        for run in &row.runs {
            let mut record: Vec<String> = prefix.clone().collect();
            record.extend([
                "run".to_string(),
                run.run_index.to_string(),
                run.seed.to_string(),
                String::new(),
                run.accuracy.to_string(),
                String::new(),
                run.test_correct.to_string(),
                run.test_size.to_string(),
                run.best_dev_accuracy.to_string(),
                run.stopping_epoch.to_string(),
            ]);
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `<path>.config.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Writes the CSV to `path` and the configuration snapshot, master seed and
/// wall-clock time to the sidecar.
pub fn write_report(report: &ExperimentReport, path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_csv(report, &mut out).with_context(|| format!("cannot write {}", path.display()))?;
    out.flush().with_context(|| format!("cannot write {}", path.display()))?;

    let sidecar = sidecar_path(path);
    let snapshot = serde_json::json!({
        "experiment": report.experiment,
        "master_seed": report.master_seed,
        "condition_keys": report.condition_keys,
        "config": report.config,
        "wall_clock_seconds": report.wall_clock_seconds,
    });
    let file = File::create(&sidecar).with_context(|| format!("cannot create {}", sidecar.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &snapshot).with_context(|| format!("cannot write {}", sidecar.display()))?;
    writeln!(out).and_then(|_| out.flush()).with_context(|| format!("cannot write {}", sidecar.display()))?;
    Ok(())
}

/// One line per condition: condition values, mean accuracy, perfect share.
pub fn summary(report: &ExperimentReport) -> String {
    let mut s = format!("{} (master seed {})\n", report.experiment, report.master_seed);
    s.push_str(&format!("{:<32} {:>6} {:>8} {:>8}\n", report.condition_keys.join(","), "runs", "mean", "perfect"));
    for row in &report.rows {
        s.push_str(&format!(
            "{:<32} {:>6} {:>8.3} {:>8.2}\n",
            row.condition.join(","),
            row.n_runs(),
            row.mean_accuracy(),
            row.perfect_share()
        ));
    }
    s
}
