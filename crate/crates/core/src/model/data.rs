use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};

/// Number of ordered categories, `L >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct CategoryCount(usize);

impl CategoryCount {
    pub fn new(categories: usize) -> Result<Self> {
        if categories < 2 {
            return Err(FusionError::Config(format!(
                "need at least 2 ordered categories, got {categories}"
            )));
        }
        Ok(CategoryCount(categories))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for CategoryCount {
    type Error = FusionError;

    fn try_from(value: usize) -> Result<Self> {
        CategoryCount::new(value)
    }
}

impl From<CategoryCount> for usize {
    fn from(value: CategoryCount) -> usize {
        value.0
    }
}

/// A manual score. Both fields are zero-based: `score` indexes categories
/// and `annotator` indexes the dataset's annotator list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub score: usize,
    pub annotator: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub id: String,
    /// Image-quality covariates; empty when the model has no quality terms.
    pub u: Vec<f64>,
    pub annotation: Option<Annotation>,
    pub confidence: Option<Vec<f64>>,
}

impl Image {
    pub fn has_observation(&self) -> bool {
        self.annotation.is_some() || self.confidence.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub x: Vec<f64>,
    pub images: Vec<Image>,
    /// Ground-truth latent category, known only for simulated data.
    pub true_y: Option<usize>,
    /// Category fixed by preprocessing (maximum-observed baseline).
    pub observed_y: Option<usize>,
}

impl Sequence {
    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.images.iter().filter_map(|im| im.annotation.as_ref())
    }

    pub fn confidences(&self) -> impl Iterator<Item = (&Image, &[f64])> {
        self.images
            .iter()
            .filter_map(|im| im.confidence.as_deref().map(|c| (im, c)))
    }
}

/// Observed data: sequences of images with annotations and AI confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub categories: CategoryCount,
    /// External annotator identifiers; `Annotation::annotator` indexes this.
    pub annotators: Vec<String>,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.get()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.x.len())
    }

    pub fn n_quality(&self) -> usize {
        self.sequences
            .iter()
            .flat_map(|s| s.images.first())
            .map(|im| im.u.len())
            .next()
            .unwrap_or(0)
    }

    pub fn n_images(&self) -> usize {
        self.sequences.iter().map(|s| s.images.len()).sum()
    }

    pub fn n_annotations(&self) -> usize {
        self.sequences.iter().map(|s| s.annotations().count()).sum()
    }

    pub fn n_confidences(&self) -> usize {
        self.sequences.iter().map(|s| s.confidences().count()).sum()
    }

    /// Covariate rows in sequence order.
    pub fn design(&self) -> Vec<Vec<f64>> {
        self.sequences.iter().map(|s| s.x.clone()).collect()
    }

    /// Checks dimensional consistency and the per-image observation rules.
    /// Confidence vectors must already be strictly positive simplex points.
    pub fn validate(&self) -> Result<()> {
        let l = self.n_categories();
        let p = self.n_covariates();
        let q = self.n_quality();
        let a = self.n_annotators();
        for seq in &self.sequences {
            if seq.x.len() != p {
                return Err(FusionError::DimensionMismatch {
                    what: "sequence covariates",
                    expected: p,
                    found: seq.x.len(),
                });
            }
            if seq.images.is_empty() {
                return Err(FusionError::Config(format!(
                    "sequence {} has no images",
                    seq.id
                )));
            }
            for y in [seq.true_y, seq.observed_y].into_iter().flatten() {
                if y >= l {
                    return Err(FusionError::InvalidCategory {
                        value: y + 1,
                        categories: l,
                    });
                }
            }
            for im in &seq.images {
                if im.u.len() != q {
                    return Err(FusionError::DimensionMismatch {
                        what: "image quality covariates",
                        expected: q,
                        found: im.u.len(),
                    });
                }
                if let Some(ann) = im.annotation {
                    if ann.score >= l {
                        return Err(FusionError::InvalidCategory {
                            value: ann.score + 1,
                            categories: l,
                        });
                    }
                    if ann.annotator >= a {
                        return Err(FusionError::UnknownAnnotator {
                            annotator: ann.annotator,
                            count: a,
                        });
                    }
                }
                if let Some(c) = &im.confidence {
                    check_simplex(c, l, 1e-9, true)?;
                }
            }
        }
        Ok(())
    }
}

/// Verifies `c` is a length-`l` simplex point within `tol` of unit sum.
pub(crate) fn check_simplex(c: &[f64], l: usize, tol: f64, strictly_positive: bool) -> Result<()> {
    if c.len() != l {
        return Err(FusionError::DimensionMismatch {
            what: "confidence vector",
            expected: l,
            found: c.len(),
        });
    }
    for (i, &v) in c.iter().enumerate() {
        if !v.is_finite() || v < 0.0 || (strictly_positive && v == 0.0) {
            return Err(FusionError::NonPositiveConfidence { index: i, value: v });
        }
    }
    let sum: f64 = c.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(FusionError::InvalidSimplex(format!(
            "elements sum to {sum}, tolerance {tol}"
        )));
    }
    Ok(())
}
