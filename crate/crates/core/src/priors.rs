//! Prior specification, prior-mean construction and log-prior evaluation.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::model::{dirichlet_log_density, CategoryCount, CutoffVector, ParamState};
use crate::sampling::{dirichlet, std_normal};
use crate::special::norm_ppf;

/// Log-prior value used in place of `-inf` outside a uniform support.
pub const OUTSIDE_SUPPORT: f64 = -1e10;

/// Weight the Dirichlet prior on `alpha_y` places on element `y`.
pub const ALPHA_PRIOR_DIAGONAL: f64 = 0.4;

/// Hyperparameters for every model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub categories: CategoryCount,
    pub n_covariates: usize,
    pub n_quality: usize,
    pub n_annotators: usize,
    pub beta_sd: f64,
    pub intercept_sd: f64,
    pub omega_sd: f64,
    /// Variance of the normal prior on every cutoff log-increment.
    pub cutoff_log_var: f64,
    pub theta_tilde_means: Vec<f64>,
    pub phi_tilde_means: Vec<Vec<f64>>,
    pub nu_conditional_var: f64,
    pub alpha_concentration: Vec<Vec<f64>>,
    pub annotator_accuracy: f64,
    /// Width of the bounded support given to the uniform prior on the shared
    /// annotator mean of the lowest and highest categories, whose cutoff
    /// cells are unbounded on one side.
    pub end_cell_width: f64,
}

/// Shared annotator means and annotation cutoffs under which an annotator
/// sitting at the shared mean has a fixed accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCutoffs {
    pub nu_tilde: Vec<f64>,
    pub phi: Vec<CutoffVector>,
}

/// For each true category `y`, finds the mean and cutoffs for which the
/// annotation pmf puts `accuracy` on `y` and `(1 - accuracy) / (L - 1)` on
/// every other category.
///
/// With the first cutoff pinned at zero the system is exactly determined:
/// the cumulative targets `t_z` fix `phi_z - nu = Phi^{-1}(t_z)`, so
/// `nu = -Phi^{-1}(t_1)` and the cutoffs follow.
pub fn construct_accuracy_cutoffs(
    categories: CategoryCount,
    accuracy: f64,
) -> Result<AccuracyCutoffs> {
    if !(accuracy > 0.0 && accuracy < 1.0) {
        return Err(FusionError::Config(format!(
            "annotator accuracy must lie in (0, 1), got {accuracy}"
        )));
    }
    let l = categories.get();
    let other = (1.0 - accuracy) / (l - 1) as f64;
    let mut nu_tilde = Vec::with_capacity(l);
    let mut phi = Vec::with_capacity(l);
    for y in 0..l {
        let mass = |k: usize| if k == y { accuracy } else { other };
        // Standardized position of cutoff z (between categories z-1 and z).
        let quantiles: Vec<f64> = (1..l)
            .map(|z| {
                let below: f64 = (0..z).map(mass).sum();
                let above: f64 = (z..l).map(mass).sum();
                if below <= above {
                    norm_ppf(below)
                } else {
                    -norm_ppf(above)
                }
            })
            .collect();
        let raw: Vec<f64> = quantiles.windows(2).map(|w| (w[1] - w[0]).ln()).collect();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::Numerical(format!(
                "accuracy {accuracy} yields degenerate cutoffs for category {}",
                y + 1
            )));
        }
        nu_tilde.push(-quantiles[0]);
        phi.push(CutoffVector::from_increments(raw));
    }
    Ok(AccuracyCutoffs { nu_tilde, phi })
}

/// Width of an interior cutoff cell whose largest attainable probability,
/// over all latent means, equals `max_prob`: `2 Phi(w / 2) - 1 = max_prob`.
pub fn cell_width_for_max_prob(max_prob: f64) -> Result<f64> {
    if !(max_prob > 0.0 && max_prob < 1.0) {
        return Err(FusionError::Config(format!(
            "maximum cell probability must lie in (0, 1), got {max_prob}"
        )));
    }
    Ok(2.0 * norm_ppf(0.5 * (1.0 + max_prob)))
}

/// Prior means of the latent-regression cutoff log-increments: equal
/// spacing such that no interior category can exceed probability 0.5.
pub fn theta_prior_means(categories: CategoryCount) -> Vec<f64> {
    let w = cell_width_for_max_prob(0.5).expect("0.5 is a valid probability");
    vec![w.ln(); categories.get() - 2]
}

/// The default hyperparameter configuration.
pub fn default_prior(
    categories: CategoryCount,
    n_covariates: usize,
    n_quality: usize,
    n_annotators: usize,
) -> PriorSpec {
    let l = categories.get();
    let annotator_accuracy = 0.95;
    let acc = construct_accuracy_cutoffs(categories, annotator_accuracy)
        .expect("0.95 accuracy is constructible for every L");
    let rest = (1.0 - ALPHA_PRIOR_DIAGONAL) / (l - 1) as f64;
    let alpha_concentration = (0..l)
        .map(|y| {
            (0..l)
                .map(|k| if k == y { ALPHA_PRIOR_DIAGONAL } else { rest })
                .collect()
        })
        .collect();
    PriorSpec {
        categories,
        n_covariates,
        n_quality,
        n_annotators,
        beta_sd: 1.0,
        intercept_sd: 10f64.sqrt(),
        omega_sd: 10f64.sqrt(),
        cutoff_log_var: 10.0,
        theta_tilde_means: theta_prior_means(categories),
        phi_tilde_means: acc.phi.iter().map(|c| c.increments().to_vec()).collect(),
        nu_conditional_var: 0.2,
        alpha_concentration,
        annotator_accuracy,
        end_cell_width: 5.0,
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let l = self.categories.get();
        let positive = [
            ("beta_sd", self.beta_sd),
            ("intercept_sd", self.intercept_sd),
            ("omega_sd", self.omega_sd),
            ("cutoff_log_var", self.cutoff_log_var),
            ("nu_conditional_var", self.nu_conditional_var),
            ("end_cell_width", self.end_cell_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FusionError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.theta_tilde_means.len() != l - 2 {
            return Err(FusionError::DimensionMismatch {
                what: "theta_tilde_means",
                expected: l - 2,
                found: self.theta_tilde_means.len(),
            });
        }
        if self.phi_tilde_means.len() != l || self.phi_tilde_means.iter().any(|m| m.len() != l - 2) {
            return Err(FusionError::Config(format!(
                "phi_tilde_means must be {l} vectors of length {}",
                l - 2
            )));
        }
        if self.alpha_concentration.len() != l
            || self
                .alpha_concentration
                .iter()
                .any(|r| r.len() != l || r.iter().any(|&v| !(v > 0.0 && v.is_finite())))
        {
            return Err(FusionError::Config(format!(
                "alpha_concentration must be {l} strictly positive rows of length {l}"
            )));
        }
        Ok(())
    }

    /// Support of the uniform prior on the shared annotator mean of category
    /// `y` given that category's annotation cutoffs.
    pub fn nu_tilde_support(&self, y: usize, phi: &CutoffVector) -> (f64, f64) {
        let mut lo = phi.lower(y);
        let mut hi = phi.upper(y);
        if lo == f64::NEG_INFINITY {
            lo = hi - self.end_cell_width;
        }
        if hi == f64::INFINITY {
            hi = lo + self.end_cell_width;
        }
        (lo, hi)
    }

    /// Mean of the Dirichlet prior on `alpha_y`.
    pub fn alpha_prior_mean(&self, y: usize) -> Vec<f64> {
        let row = &self.alpha_concentration[y];
        let total: f64 = row.iter().sum();
        row.iter().map(|v| v / total).collect()
    }
}

#[inline]
pub(crate) fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + (2.0 * PI * var).ln())
}

/// Log-density of the uniform prior on one shared annotator mean.
pub(crate) fn nu_tilde_log_prior(spec: &PriorSpec, y: usize, nu_tilde: f64, phi: &CutoffVector) -> f64 {
    let (lo, hi) = spec.nu_tilde_support(y, phi);
    if nu_tilde >= lo && nu_tilde <= hi && hi > lo {
        -(hi - lo).ln()
    } else {
        OUTSIDE_SUPPORT
    }
}

pub(crate) fn cutoff_log_prior(raw: &[f64], means: &[f64], var: f64) -> f64 {
    raw.iter()
        .zip(means)
        .map(|(&r, &m)| normal_log_density(r, m, var))
        .sum()
}

pub(crate) fn regression_log_prior(spec: &PriorSpec, beta0: f64, beta: &[f64]) -> f64 {
    normal_log_density(beta0, 0.0, spec.intercept_sd.powi(2))
        + beta
            .iter()
            .map(|&b| normal_log_density(b, 0.0, spec.beta_sd.powi(2)))
            .sum::<f64>()
}

pub(crate) fn precision_log_prior(spec: &PriorSpec, omega0: f64, omega: &[f64]) -> f64 {
    let var = spec.omega_sd.powi(2);
    normal_log_density(omega0, 0.0, var)
        + omega.iter().map(|&w| normal_log_density(w, 0.0, var)).sum::<f64>()
}

/// Joint log-prior density of every parameter in `state` (the latent
/// categories carry no prior term of their own).
pub fn log_prior(state: &ParamState, spec: &PriorSpec) -> f64 {
    let mut lp = regression_log_prior(spec, state.beta0, &state.beta);
    lp += precision_log_prior(spec, state.omega0, &state.omega);
    lp += cutoff_log_prior(
        state.theta.increments(),
        &spec.theta_tilde_means,
        spec.cutoff_log_var,
    );
    for (y, phi) in state.phi.iter().enumerate() {
        lp += cutoff_log_prior(phi.increments(), &spec.phi_tilde_means[y], spec.cutoff_log_var);
        lp += nu_tilde_log_prior(spec, y, state.nu_tilde[y], phi);
        lp += dirichlet_log_density(&state.alpha[y], &spec.alpha_concentration[y]);
    }
    for row in &state.nu {
        for (y, &v) in row.iter().enumerate() {
            lp += normal_log_density(v, state.nu_tilde[y], spec.nu_conditional_var);
        }
    }
    lp
}

/// Draws every parameter from the prior. The latent categories are left
/// empty.
pub fn prior_sample<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> ParamState {
    let l = spec.categories.get();
    let cutoff_sd = spec.cutoff_log_var.sqrt();
    let beta0 = spec.intercept_sd * std_normal(rng);
    let beta = (0..spec.n_covariates)
        .map(|_| spec.beta_sd * std_normal(rng))
        .collect();
    let theta = CutoffVector::from_increments(
        spec.theta_tilde_means
            .iter()
            .map(|m| m + cutoff_sd * std_normal(rng))
            .collect(),
    );
    let phi: Vec<CutoffVector> = spec
        .phi_tilde_means
        .iter()
        .map(|means| {
            CutoffVector::from_increments(
                means.iter().map(|m| m + cutoff_sd * std_normal(rng)).collect(),
            )
        })
        .collect();
    let nu_tilde: Vec<f64> = (0..l)
        .map(|y| {
            let (lo, hi) = spec.nu_tilde_support(y, &phi[y]);
            lo + (hi - lo) * rng.random::<f64>()
        })
        .collect();
    let nu_sd = spec.nu_conditional_var.sqrt();
    let nu = (0..spec.n_annotators)
        .map(|_| nu_tilde.iter().map(|m| m + nu_sd * std_normal(rng)).collect())
        .collect();
    let alpha = spec
        .alpha_concentration
        .iter()
        .map(|conc| dirichlet(conc, rng))
        .collect();
    let omega0 = spec.omega_sd * std_normal(rng);
    let omega = (0..spec.n_quality)
        .map(|_| spec.omega_sd * std_normal(rng))
        .collect();
    ParamState {
        beta0,
        beta,
        theta,
        phi,
        nu,
        nu_tilde,
        alpha,
        omega0,
        omega,
        y: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ordinal_pmf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cats(l: usize) -> CategoryCount {
        CategoryCount::new(l).unwrap()
    }

    #[test]
    fn alpha_concentration_rows() {
        let spec = default_prior(cats(5), 6, 1, 3);
        assert_eq!(spec.alpha_concentration[0], vec![0.4, 0.15, 0.15, 0.15, 0.15]);
        assert_eq!(spec.nu_conditional_var, 0.2);
        let spec3 = default_prior(cats(3), 1, 0, 1);
        for (k, &v) in spec3.alpha_concentration[0].iter().enumerate().skip(1) {
            assert!((v - 0.3).abs() < 1e-15, "element {k}");
        }
        spec.validate().unwrap();
    }

    #[test]
    fn accuracy_construction_hits_targets() {
        for l in [2, 3, 4, 5, 7] {
            let acc = construct_accuracy_cutoffs(cats(l), 0.95).unwrap();
            let other = 0.05 / (l - 1) as f64;
            for y in 0..l {
                let pmf = ordinal_pmf(acc.nu_tilde[y], &acc.phi[y]).unwrap();
                for (k, p) in pmf.iter().enumerate() {
                    let target = if k == y { 0.95 } else { other };
                    assert!((p - target).abs() < 1e-8, "L={l} y={y} k={k}: {p}");
                }
                assert_eq!(acc.phi[y].interior()[0], 0.0);
            }
        }
    }

    #[test]
    fn half_accuracy_two_categories_sits_on_cutoff() {
        let acc = construct_accuracy_cutoffs(cats(2), 0.5).unwrap();
        assert_eq!(acc.nu_tilde, vec![0.0, 0.0]);
        assert!(construct_accuracy_cutoffs(cats(3), 1.0).is_err());
    }

    #[test]
    fn theta_means_equal_spacing() {
        let means = theta_prior_means(cats(5));
        assert_eq!(means.len(), 3);
        let w = 2.0 * 0.674_489_750_196_081_7;
        for m in &means {
            assert!((m - f64::ln(w)).abs() < 1e-14);
            assert!((m - 0.2994).abs() < 1e-4);
        }
        assert_eq!(theta_prior_means(cats(3)).len(), 1);
        // Largest interior cell probability, attained at the cell midpoint.
        let c = CutoffVector::from_increments(means);
        let pmf = ordinal_pmf(0.5 * w, &c).unwrap();
        assert!((pmf[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn theta_means_do_not_depend_on_other_dimensions() {
        let a = default_prior(cats(5), 1, 0, 1);
        let b = default_prior(cats(5), 9, 4, 7);
        assert_eq!(a.theta_tilde_means, b.theta_tilde_means);
    }

    #[test]
    fn intercept_shift_changes_log_prior_by_normal_kernel() {
        let spec = default_prior(cats(5), 2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = prior_sample(&spec, &mut rng);
        s.beta0 = 0.0;
        let a = log_prior(&s, &spec);
        s.beta0 = 1.0;
        let b = log_prior(&s, &spec);
        assert!((b - a + 1.0 / 20.0).abs() < 1e-10);
    }

    #[test]
    fn nu_tilde_outside_cell_is_clamped() {
        let spec = default_prior(cats(5), 0, 0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = prior_sample(&spec, &mut rng);
        s.nu_tilde[2] = s.phi[2].upper(2) + 1.0;
        assert!(log_prior(&s, &spec) < 0.5 * OUTSIDE_SUPPORT);
    }

    #[test]
    fn alpha_log_ratio_matches_dirichlet_kernel() {
        let spec = default_prior(cats(4), 0, 0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = prior_sample(&spec, &mut rng);
        let centre = spec.alpha_prior_mean(1);
        let perturbed = vec![0.1, 0.5, 0.25, 0.15];
        s.alpha[1] = centre.clone();
        let a = log_prior(&s, &spec);
        s.alpha[1] = perturbed.clone();
        let b = log_prior(&s, &spec);
        let expected: f64 = spec.alpha_concentration[1]
            .iter()
            .zip(perturbed.iter().zip(&centre))
            .map(|(k, (p, c))| (k - 1.0) * (p / c).ln())
            .sum();
        assert!((b - a - expected).abs() < 1e-10);
    }

    #[test]
    fn log_prior_finite_on_prior_draws() {
        let spec = default_prior(cats(5), 6, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let s = prior_sample(&spec, &mut rng);
            let lp = log_prior(&s, &spec);
            assert!(lp.is_finite() && lp > 0.5 * OUTSIDE_SUPPORT, "{lp}");
        }
    }
}
