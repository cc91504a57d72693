use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::evaluation::EvalReport;
use crate::io::{fmt_f64, write_json, CsvTable};

fn coefficient_table(report: &EvalReport, path: &Path, pick: fn(&crate::evaluation::SettingReport) -> &Vec<f64>) -> Result<()> {
    let p = report
        .settings
        .iter()
        .map(|s| pick(s).len())
        .max()
        .unwrap_or(0);
    let mut header = vec!["setting".to_string()];
    header.extend((1..=p).map(|j| format!("beta{j}")));
    let mut t = CsvTable::new(&header)?;
    for s in &report.settings {
        let v = pick(s);
        if v.is_empty() {
            continue;
        }
        let mut row = vec![s.setting.clone()];
        row.extend(v.iter().map(|x| fmt_f64(*x)));
        t.row(row)?;
    }
    t.save(path)
}

/// Writes `report.json`, the per-coefficient tables, per-replicate RPS and
/// survivor counts, and optionally every per-sequence RPS value.
pub fn write_report(report: &EvalReport, out: &Path, sequences: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut add = |name: &str| {
        let p = out.join(name);
        files.push(p.clone());
        p
    };
    write_json(&add("report.json"), report)?;
    coefficient_table(report, &add("table_mse.csv"), |s| &s.beta_mse)?;
    coefficient_table(report, &add("table_coverage.csv"), |s| &s.beta_coverage)?;
    coefficient_table(report, &add("table_detection.csv"), |s| &s.beta_detection)?;

    let mut t = CsvTable::new(&["setting", "replicate", "in_sample_rps", "out_sample_rps", "relative_out_sample_rps", "survivors"])?;
    for s in &report.settings {
        for r in 0..s.replicates {
            let mean = |set: &Option<crate::evaluation::RpsSet>| {
                set.as_ref().map_or(String::new(), |x| fmt_f64(x.replicate_means[r]))
            };
            t.row([
                s.setting.clone(),
                (r + 1).to_string(),
                mean(&s.in_sample_rps),
                mean(&s.out_sample_rps),
                s.relative_out_sample_rps
                    .as_ref()
                    .map_or(String::new(), |v| fmt_f64(v[r])),
                s.survivor_counts.get(r).map_or(String::new(), |c| c.to_string()),
            ])?;
        }
    }
    t.save(&add("rps_replicates.csv"))?;

    if sequences {
        let mut t = CsvTable::new(&["setting", "replicate", "kind", "sequence", "rps"])?;
        for s in &report.settings {
            for (kind, set) in [("in_sample", &s.in_sample_rps), ("out_sample", &s.out_sample_rps)] {
                let Some(set) = set else { continue };
                for (r, row) in set.per_sequence.iter().enumerate() {
                    for (i, v) in row.iter().enumerate() {
                        t.row([s.setting.clone(), (r + 1).to_string(), kind.to_string(), (i + 1).to_string(), fmt_f64(*v)])?;
                    }
                }
            }
        }
        t.save(&add("rps_sequences.csv"))?;
    }
    Ok(files)
}
