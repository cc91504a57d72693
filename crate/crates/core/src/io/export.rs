use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{FusionError, Result};
use crate::model::Dataset;

/// Writes a file through a temporary sibling and a rename, so the target is
/// either complete or absent.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| FusionError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FusionError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| FusionError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| FusionError::io(path, e))?;
    tmp.persist(path).map_err(|e| FusionError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// In-memory CSV table written in one piece.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header.iter().map(|h| h.as_ref()))?;
        Ok(CsvTable { writer })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: impl IntoIterator<Item = S>) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| FusionError::io(path, e.into_error()))?;
        write_atomic(path, &bytes)
    }
}

/// Shortest decimal form that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}{k}"))
}

/// Writes `sequences.csv`, `images.csv`, `annotations.csv` and
/// `confidences.csv` into `dir`. Annotation rows are grouped by annotator so
/// that reading them back reproduces the annotator order.
pub fn export_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let p = data.n_covariates();
    let q = data.n_quality();
    let l = data.n_categories();
    let with_y = !data.is_empty() && data.sequences.iter().all(|s| s.true_y.is_some());

    let mut header: Vec<String> = vec!["sequence_id".into()];
    header.extend(numbered("x", p));
    if with_y {
        header.push("true_y".into());
    }
    let mut seqs = CsvTable::new(&header)?;
    for s in &data.sequences {
        let mut row = vec![s.id.clone()];
        row.extend(s.x.iter().map(|v| fmt_f64(*v)));
        if with_y {
            row.push((s.true_y.expect("checked above") + 1).to_string());
        }
        seqs.row(row)?;
    }
    seqs.save(&dir.join("sequences.csv"))?;

    let mut header: Vec<String> = vec!["sequence_id".into(), "image_id".into()];
    header.extend(numbered("u", q));
    let mut images = CsvTable::new(&header)?;
    for s in &data.sequences {
        for im in &s.images {
            let mut row = vec![s.id.clone(), im.id.clone()];
            row.extend(im.u.iter().map(|v| fmt_f64(*v)));
            images.row(row)?;
        }
    }
    images.save(&dir.join("images.csv"))?;

    let mut ann = CsvTable::new(&["sequence_id", "image_id", "annotator_id", "score"])?;
    for (a, name) in data.annotators.iter().enumerate() {
        for s in &data.sequences {
            for im in &s.images {
                if let Some(x) = im.annotation.filter(|x| x.annotator == a) {
                    ann.row([s.id.clone(), im.id.clone(), name.clone(), (x.score + 1).to_string()])?;
                }
            }
        }
    }
    ann.save(&dir.join("annotations.csv"))?;

    let mut header: Vec<String> = vec!["sequence_id".into(), "image_id".into()];
    header.extend(numbered("c", l));
    let mut conf = CsvTable::new(&header)?;
    for s in &data.sequences {
        for im in &s.images {
            if let Some(c) = &im.confidence {
                let mut row = vec![s.id.clone(), im.id.clone()];
                row.extend(c.iter().map(|v| fmt_f64(*v)));
                conf.row(row)?;
            }
        }
    }
    conf.save(&dir.join("confidences.csv"))
}
