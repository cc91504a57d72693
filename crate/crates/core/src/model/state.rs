use super::cutoffs::CutoffVector;
use crate::error::{FusionError, Result};

/// One point in parameter space plus the latent categories.
///
/// Category and annotator indices are zero-based throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Cutoffs of the latent probit regression.
    pub theta: CutoffVector,
    /// Annotation cutoffs, one vector per true category.
    pub phi: Vec<CutoffVector>,
    /// Annotator means, indexed `[annotator][true category]`.
    pub nu: Vec<Vec<f64>>,
    /// Shared annotator means, one per true category.
    pub nu_tilde: Vec<f64>,
    /// Dirichlet means of the AI confidences, one simplex row per true category.
    pub alpha: Vec<Vec<f64>>,
    pub omega0: f64,
    pub omega: Vec<f64>,
    /// Latent category of each sequence.
    pub y: Vec<usize>,
}

impl ParamState {
    pub fn n_categories(&self) -> usize {
        self.theta.n_categories()
    }

    /// Dirichlet precision `exp(omega0 + u' omega)` for one image.
    #[inline]
    pub fn precision(&self, u: &[f64]) -> f64 {
        let eta: f64 = self.omega0 + u.iter().zip(&self.omega).map(|(a, b)| a * b).sum::<f64>();
        eta.exp()
    }

    /// Latent regression mean `beta0 + x' beta`.
    #[inline]
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta0 + x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Checks shapes, the simplex constraint on `alpha`, and cutoff ordering.
    pub fn validate(&self) -> Result<()> {
        let l = self.n_categories();
        if self.phi.len() != l {
            return Err(FusionError::DimensionMismatch {
                what: "annotation cutoff sets",
                expected: l,
                found: self.phi.len(),
            });
        }
        if self.alpha.len() != l {
            return Err(FusionError::DimensionMismatch {
                what: "alpha rows",
                expected: l,
                found: self.alpha.len(),
            });
        }
        if self.nu_tilde.len() != l {
            return Err(FusionError::DimensionMismatch {
                what: "nu_tilde",
                expected: l,
                found: self.nu_tilde.len(),
            });
        }
        for row in &self.nu {
            if row.len() != l {
                return Err(FusionError::DimensionMismatch {
                    what: "nu row",
                    expected: l,
                    found: row.len(),
                });
            }
        }
        for row in &self.alpha {
            super::data::check_simplex(row, l, 1e-9, false)?;
        }
        if !self.theta.is_strictly_increasing() {
            return Err(FusionError::CorruptState("theta cutoffs not increasing".into()));
        }
        for (y, phi) in self.phi.iter().enumerate() {
            if phi.n_categories() != l || !phi.is_strictly_increasing() {
                return Err(FusionError::CorruptState(format!(
                    "annotation cutoffs for category {} invalid",
                    y + 1
                )));
            }
        }
        let finite = self.beta0.is_finite()
            && self.omega0.is_finite()
            && self.beta.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
            && self.nu_tilde.iter().all(|v| v.is_finite())
            && self.nu.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(FusionError::CorruptState("non-finite parameter".into()));
        }
        Ok(())
    }
}
