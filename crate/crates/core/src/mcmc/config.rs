use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::model::Dataset;

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Target acceptance rate for blocks of dimension above one.
    pub adapt_target_block: f64,
    /// Target acceptance rate for univariate blocks.
    pub adapt_target_univariate: f64,
    /// Exponent of the decaying Robbins–Monro step `t^-rate`.
    pub adapt_rate: f64,
    pub initial_step: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 15_000,
            burnin: 10_000,
            thin: 1,
            seed: 20_231_107,
            adapt_target_block: 0.234,
            adapt_target_univariate: 0.44,
            adapt_rate: 0.6,
            initial_step: 0.1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(FusionError::Config(format!(
                "burnin ({}) must be smaller than iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(FusionError::Config("thin must be at least 1".into()));
        }
        for (name, v) in [
            ("adapt_target_block", self.adapt_target_block),
            ("adapt_target_univariate", self.adapt_target_univariate),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(FusionError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.adapt_rate > 0.0 && self.adapt_rate <= 1.0) {
            return Err(FusionError::Config(format!(
                "adapt_rate must lie in (0, 1], got {}",
                self.adapt_rate
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(FusionError::Config(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        Ok(())
    }

    /// Number of samples kept after burn-in and thinning.
    pub fn n_kept(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }
}

/// Which data layers a chain conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Annotations and AI confidences.
    Full,
    /// Annotations only.
    OrdinalOnly,
    /// AI confidences only.
    CompositionalOnly,
    /// Latent categories fixed at a preprocessed observed value; only the
    /// regression is sampled.
    MaximumObserved,
}

impl Variant {
    pub fn uses_annotations(self) -> bool {
        matches!(self, Variant::Full | Variant::OrdinalOnly)
    }

    pub fn uses_confidences(self) -> bool {
        matches!(self, Variant::Full | Variant::CompositionalOnly)
    }

    pub fn samples_latent(self) -> bool {
        !matches!(self, Variant::MaximumObserved)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OrdinalOnly => "ordinal_only",
            Variant::CompositionalOnly => "compositional_only",
            Variant::MaximumObserved => "maximum_observed",
        }
    }

    /// Copy of `data` without the layers this variant ignores.
    pub fn restrict(self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for seq in &mut out.sequences {
            for im in &mut seq.images {
                if !self.uses_annotations() {
                    im.annotation = None;
                }
                if !self.uses_confidences() {
                    im.confidence = None;
                }
            }
        }
        out
    }

    /// Checks that `data` carries what this variant needs.
    pub fn check(self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(FusionError::EmptyDataset);
        }
        match self {
            Variant::Full => {
                if data.n_annotations() == 0 && data.n_confidences() == 0 {
                    return Err(FusionError::VariantMismatch(
                        "full model needs annotations or confidences".into(),
                    ));
                }
            }
            Variant::OrdinalOnly => {
                if data.n_annotations() == 0 {
                    return Err(FusionError::VariantMismatch(
                        "ordinal-only model needs at least one annotation".into(),
                    ));
                }
            }
            Variant::CompositionalOnly => {
                if data.n_confidences() == 0 {
                    return Err(FusionError::VariantMismatch(
                        "compositional-only model needs at least one confidence vector".into(),
                    ));
                }
            }
            Variant::MaximumObserved => {
                if let Some(seq) = data.sequences.iter().find(|s| s.observed_y.is_none()) {
                    return Err(FusionError::VariantMismatch(format!(
                        "maximum-observed model needs an observed category for every sequence; {} has none",
                        seq.id
                    )));
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = McmcConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_kept(), 5000);
        let bad = McmcConfig {
            burnin: 15_000,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = McmcConfig {
            thin: 0,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: McmcConfig = toml::from_str("iterations = 20\nburnin = 10").unwrap();
        assert_eq!(ok.thin, 1);
        assert!(toml::from_str::<McmcConfig>("iteration = 20").is_err());
    }
}
