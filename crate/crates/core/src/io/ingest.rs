use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::model::{zeta_adjust, Annotation, CategoryCount, Dataset, Image, Sequence};

/// Input tables of one dataset. Only `sequences` is required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub sequences: PathBuf,
    pub images: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub confidences: Option<PathBuf>,
}

impl DataPaths {
    /// The four standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DataPaths {
            sequences: dir.join("sequences.csv"),
            images: Some(dir.join("images.csv")),
            annotations: Some(dir.join("annotations.csv")),
            confidences: Some(dir.join("confidences.csv")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Number of categories; inferred from the confidence columns if absent.
    pub categories: Option<usize>,
    /// Smoothing applied to every confidence row.
    pub zeta: Option<f64>,
    /// Sequences with more images are subsampled to this many.
    pub max_images: Option<usize>,
    pub standardize: bool,
    /// Seed of the image subsampling.
    pub seed: u64,
}

impl IngestOptions {
    /// Reads values exactly as written.
    pub fn verbatim() -> Self {
        IngestOptions {
            categories: None,
            zeta: None,
            max_images: None,
            standardize: false,
            seed: 0,
        }
    }
}

/// Per-column centering and scaling of sequence covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    /// Column means and sample standard deviations. Constant columns are
    /// rejected.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if n < 2 && p > 0 {
            return Err(FusionError::Config("standardizing needs at least two sequences".into()));
        }
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let mut sd = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / (n - 1) as f64;
            }
        }
        for (j, s) in sd.iter_mut().enumerate() {
            *s = s.sqrt();
            if !(*s > 0.0) {
                return Err(FusionError::Config(format!("covariate x{} is constant", j + 1)));
            }
        }
        Ok(Standardization { mean, sd })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(FusionError::DimensionMismatch {
                what: "covariates",
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub standardization: Option<Standardization>,
    /// Ids of sequences whose images were subsampled.
    pub capped: Vec<String>,
}

/// Rows of a covariate table keyed by an id column, such as `grid.csv` or a
/// held-out `sequences.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    /// Zero-based true categories when a `true_y` column is present.
    pub true_y: Option<Vec<usize>>,
}

struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => FusionError::io(path, io),
                other => FusionError::data(&name, 1, format!("{other:?}")),
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| FusionError::data(&name, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                FusionError::data(&name, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Table { name, headers, rows })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> FusionError {
        FusionError::data(&self.name, line, msg)
    }

    /// Checks the leading fixed columns, then returns how many numbered
    /// columns `prefix1..prefixK` follow, and whether `trailing` comes last.
    fn layout(&self, fixed: &[&str], prefix: &str, trailing: Option<&str>) -> Result<(usize, bool)> {
        let h = &self.headers;
        if h.len() < fixed.len() || h.iter().zip(fixed).any(|(a, b)| a != b) {
            return Err(self.err(1, format!("header must start with {}", fixed.join(","))));
        }
        let mut count = 0;
        let mut has_trailing = false;
        for col in &h[fixed.len()..] {
            if Some(col.as_str()) == trailing && !has_trailing {
                has_trailing = true;
            } else if !has_trailing && *col == format!("{prefix}{}", count + 1) {
                count += 1;
            } else {
                return Err(self.err(1, format!("unexpected column {col}")));
            }
        }
        Ok((count, has_trailing))
    }

    fn float(&self, line: usize, field: &str) -> Result<f64> {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(line, format!("not a finite number: {field:?}")))
    }

    fn category(&self, line: usize, field: &str, l: usize) -> Result<usize> {
        match field.parse::<usize>() {
            Ok(v) if (1..=l).contains(&v) => Ok(v - 1),
            _ => Err(self.err(line, format!("score {field:?} outside 1..{l}"))),
        }
    }

    fn check_width(&self, line: usize, row: &[String]) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(self.err(line, format!("expected {} fields, found {}", self.headers.len(), row.len())));
        }
        Ok(())
    }
}

/// Reads a covariate table whose first column is `id_column`, followed by
/// `x1..xp` and an optional one-based `true_y`.
pub fn read_covariate_table(path: &Path, id_column: &str, categories: Option<usize>) -> Result<CovariateTable> {
    let t = Table::read(path)?;
    let (p, has_y) = t.layout(&[id_column], "x", Some("true_y"))?;
    let mut out = CovariateTable {
        ids: Vec::with_capacity(t.rows.len()),
        x: Vec::with_capacity(t.rows.len()),
        true_y: has_y.then(Vec::new),
    };
    let mut seen = HashMap::new();
    for (line, row) in &t.rows {
        t.check_width(*line, row)?;
        if seen.insert(row[0].clone(), *line).is_some() {
            return Err(t.err(*line, format!("duplicate id {}", row[0])));
        }
        out.ids.push(row[0].clone());
        out.x.push(row[1..=p].iter().map(|f| t.float(*line, f)).collect::<Result<_>>()?);
        if let Some(ys) = out.true_y.as_mut() {
            let l = categories.ok_or_else(|| {
                FusionError::Config("the number of categories is needed to read true_y".into())
            })?;
            ys.push(t.category(*line, &row[p + 1], l)?);
        }
    }
    Ok(out)
}

/// Assembles a dataset from the CSV tables, then applies the optional
/// confidence smoothing, image cap and covariate standardization.
pub fn ingest(paths: &DataPaths, opts: &IngestOptions) -> Result<Ingested> {
    let conf_table = paths.confidences.as_deref().map(Table::read).transpose()?;
    let conf_width = conf_table
        .as_ref()
        .map(|t| t.layout(&["sequence_id", "image_id"], "c", None).map(|(k, _)| k))
        .transpose()?;
    let l = match (opts.categories, conf_width) {
        (Some(l), Some(w)) if l != w => {
            return Err(FusionError::Config(format!(
                "{l} categories configured but confidences have {w} columns"
            )))
        }
        (Some(l), _) | (None, Some(l)) => l,
        (None, None) => {
            return Err(FusionError::Config(
                "the number of categories must be configured when there are no confidences".into(),
            ))
        }
    };
    let cats = CategoryCount::new(l)?;

    let seq_table = read_covariate_table(&paths.sequences, "sequence_id", Some(l))?;
    let seq_index: HashMap<String, usize> = seq_table
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let mut sequences: Vec<Sequence> = seq_table
        .ids
        .iter()
        .zip(&seq_table.x)
        .enumerate()
        .map(|(i, (id, x))| Sequence {
            id: id.clone(),
            x: x.clone(),
            images: Vec::new(),
            true_y: seq_table.true_y.as_ref().map(|ys| ys[i]),
            observed_y: None,
        })
        .collect();
    let mut image_index: HashMap<(usize, String), usize> = HashMap::new();
    let images_listed = paths.images.is_some();

    let lookup_seq = |t: &Table, line: usize, id: &str| -> Result<usize> {
        seq_index
            .get(id)
            .copied()
            .ok_or_else(|| t.err(line, format!("unknown sequence {id}")))
    };

    if let Some(path) = &paths.images {
        let t = Table::read(path)?;
        let (q, _) = t.layout(&["sequence_id", "image_id"], "u", None)?;
        for (line, row) in &t.rows {
            t.check_width(*line, row)?;
            let s = lookup_seq(&t, *line, &row[0])?;
            let key = (s, row[1].clone());
            if image_index.contains_key(&key) {
                return Err(t.err(*line, format!("duplicate image {} in sequence {}", row[1], row[0])));
            }
            image_index.insert(key, sequences[s].images.len());
            sequences[s].images.push(Image {
                id: row[1].clone(),
                u: row[2..2 + q].iter().map(|f| t.float(*line, f)).collect::<Result<_>>()?,
                annotation: None,
                confidence: None,
            });
        }
    }

    let mut find_image = |t: &Table, line: usize, seqs: &mut [Sequence], s: usize, id: &str| -> Result<usize> {
        let key = (s, id.to_string());
        if let Some(&k) = image_index.get(&key) {
            return Ok(k);
        }
        if images_listed {
            return Err(t.err(line, format!("unknown image {id} in sequence {}", seqs[s].id)));
        }
        let k = seqs[s].images.len();
        seqs[s].images.push(Image {
            id: id.to_string(),
            u: Vec::new(),
            annotation: None,
            confidence: None,
        });
        image_index.insert(key, k);
        Ok(k)
    };

    let mut annotators: Vec<String> = Vec::new();
    if let Some(path) = &paths.annotations {
        let t = Table::read(path)?;
        t.layout(&["sequence_id", "image_id", "annotator_id", "score"], "", None)?;
        let mut annotator_index: HashMap<String, usize> = HashMap::new();
        let mut seen: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for (line, row) in &t.rows {
            t.check_width(*line, row)?;
            let s = lookup_seq(&t, *line, &row[0])?;
            let k = find_image(&t, *line, &mut sequences, s, &row[1])?;
            let a = *annotator_index.entry(row[2].clone()).or_insert_with(|| {
                annotators.push(row[2].clone());
                annotators.len() - 1
            });
            if let Some(first) = seen.insert((s, k, a), *line) {
                return Err(t.err(*line, format!("duplicate annotation (first at line {first})")));
            }
            let score = t.category(*line, &row[3], l)?;
            let image = &mut sequences[s].images[k];
            if image.annotation.is_some() {
                return Err(t.err(*line, format!("image {} already has an annotation", row[1])));
            }
            image.annotation = Some(Annotation { score, annotator: a });
        }
    }

    if let Some(t) = &conf_table {
        for (line, row) in &t.rows {
            t.check_width(*line, row)?;
            let s = lookup_seq(t, *line, &row[0])?;
            let k = find_image(t, *line, &mut sequences, s, &row[1])?;
            let mut c: Vec<f64> = row[2..].iter().map(|f| t.float(*line, f)).collect::<Result<_>>()?;
            if c.iter().any(|v| *v < 0.0) {
                return Err(t.err(*line, "negative confidence"));
            }
            let total: f64 = c.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(t.err(*line, format!("confidences sum to {total}")));
            }
            if (total - 1.0).abs() > 1e-12 {
                c.iter_mut().for_each(|v| *v /= total);
            }
            if let Some(z) = opts.zeta {
                c = zeta_adjust(&c, z)?;
            }
            let image = &mut sequences[s].images[k];
            if image.confidence.is_some() {
                return Err(t.err(*line, format!("duplicate confidence row for image {}", row[1])));
            }
            image.confidence = Some(c);
        }
    }

    let mut capped = Vec::new();
    if let Some(cap) = opts.max_images {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for seq in &mut sequences {
            if seq.images.len() > cap {
                let mut keep = sample(&mut rng, seq.images.len(), cap).into_vec();
                keep.sort_unstable();
                let mut old: Vec<Option<Image>> = std::mem::take(&mut seq.images).into_iter().map(Some).collect();
                seq.images = keep.into_iter().map(|k| old[k].take().expect("indices are distinct")).collect();
                capped.push(seq.id.clone());
            }
        }
    }

    let standardization = if opts.standardize {
        let rows: Vec<Vec<f64>> = sequences.iter().map(|s| s.x.clone()).collect();
        let st = Standardization::fit(&rows)?;
        for seq in &mut sequences {
            seq.x = st.apply(&seq.x)?;
        }
        Some(st)
    } else {
        None
    };

    let dataset = Dataset {
        categories: cats,
        annotators,
        sequences,
    };
    dataset.validate()?;
    Ok(Ingested {
        dataset,
        standardization,
        capped,
    })
}
