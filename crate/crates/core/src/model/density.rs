//! Log-densities of the three observation layers.

use super::cutoffs::CutoffVector;
use super::state::ParamState;
use crate::error::{FusionError, Result};
use crate::special::{clamped_ln, ln_gamma, norm_interval};

/// Category probabilities of a probit ordinal model with latent mean `mean`.
pub fn ordinal_pmf(mean: f64, cutoffs: &CutoffVector) -> Result<Vec<f64>> {
    if !mean.is_finite() {
        return Err(FusionError::CorruptState(format!(
            "ordinal mean is {mean}"
        )));
    }
    Ok((0..cutoffs.n_categories())
        .map(|k| cell_probability(mean, cutoffs, k))
        .collect())
}

#[inline]
pub(crate) fn cell_probability(mean: f64, cutoffs: &CutoffVector, k: usize) -> f64 {
    norm_interval(cutoffs.lower(k) - mean, cutoffs.upper(k) - mean)
}

/// `ln P(category k)` floored at [`crate::special::LOG_FLOOR`].
#[inline]
pub(crate) fn ordinal_log_prob(mean: f64, cutoffs: &CutoffVector, k: usize) -> f64 {
    clamped_ln(cell_probability(mean, cutoffs, k))
}

/// Log-probability that an annotator scores `z` when the true category is `y`.
pub fn log_f_z(z: usize, y: usize, annotator: usize, state: &ParamState) -> Result<f64> {
    let l = state.n_categories();
    check_category(z, l)?;
    check_category(y, l)?;
    let nu = state
        .nu
        .get(annotator)
        .ok_or(FusionError::UnknownAnnotator {
            annotator,
            count: state.nu.len(),
        })?[y];
    if !nu.is_finite() {
        return Err(FusionError::CorruptState(format!("annotator mean is {nu}")));
    }
    Ok(ordinal_log_prob(nu, &state.phi[y], z))
}

/// Dirichlet log-density of a confidence vector given true category `y`.
/// `c` must be strictly positive; see [`zeta_adjust`].
pub fn log_f_c(c: &[f64], y: usize, u: &[f64], state: &ParamState) -> Result<f64> {
    let l = state.n_categories();
    check_category(y, l)?;
    super::data::check_simplex(c, l, 1e-9, true)?;
    if u.len() != state.omega.len() {
        return Err(FusionError::DimensionMismatch {
            what: "image quality covariates",
            expected: state.omega.len(),
            found: u.len(),
        });
    }
    let s = state.precision(u);
    if !(s.is_finite() && s > 0.0) {
        return Err(FusionError::CorruptState(format!("Dirichlet precision is {s}")));
    }
    let log_c: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    Ok(dirichlet_log_density_mean_precision(&log_c, &state.alpha[y], s))
}

/// Dirichlet log-density with concentration `s * mean`, given `ln c`.
#[inline]
pub(crate) fn dirichlet_log_density_mean_precision(log_c: &[f64], mean: &[f64], s: f64) -> f64 {
    let mut out = ln_gamma(s);
    for (&lc, &m) in log_c.iter().zip(mean) {
        let a = s * m;
        out += (a - 1.0) * lc - ln_gamma(a);
    }
    out
}

/// Dirichlet log-density at simplex point `x` for concentration `conc`.
pub fn dirichlet_log_density(x: &[f64], conc: &[f64]) -> f64 {
    let total: f64 = conc.iter().sum();
    let mut out = ln_gamma(total);
    for (&xi, &a) in x.iter().zip(conc) {
        out += (a - 1.0) * xi.ln() - ln_gamma(a);
    }
    out
}

/// Log-probability of latent category `y` for covariates `x`.
pub fn log_f_y(y: usize, x: &[f64], state: &ParamState) -> Result<f64> {
    check_category(y, state.n_categories())?;
    if x.len() != state.beta.len() {
        return Err(FusionError::DimensionMismatch {
            what: "covariates",
            expected: state.beta.len(),
            found: x.len(),
        });
    }
    let mean = state.linear_predictor(x);
    if !mean.is_finite() {
        return Err(FusionError::CorruptState(format!("linear predictor is {mean}")));
    }
    Ok(ordinal_log_prob(mean, &state.theta, y))
}

/// Smooths a confidence vector away from the simplex boundary: when any
/// element is below `zeta`, returns `(c + zeta) / (1 + L zeta)`; otherwise
/// returns `c` unchanged.
pub fn zeta_adjust(c: &[f64], zeta: f64) -> Result<Vec<f64>> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(FusionError::Config(format!("zeta must be positive, got {zeta}")));
    }
    super::data::check_simplex(c, c.len(), 1e-6, false)?;
    if c.iter().any(|&v| v < zeta) {
        let denom = 1.0 + c.len() as f64 * zeta;
        Ok(c.iter().map(|&v| (v + zeta) / denom).collect())
    } else {
        Ok(c.to_vec())
    }
}

fn check_category(k: usize, l: usize) -> Result<()> {
    if k >= l {
        Err(FusionError::InvalidCategory {
            value: k + 1,
            categories: l,
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cutoffs::expand_cutoffs;
    use crate::special::log_sum_exp;

    fn state_l(l: usize, a: usize) -> ParamState {
        ParamState {
            beta0: 0.0,
            beta: vec![],
            theta: expand_cutoffs(&vec![0.0; l - 2]),
            phi: vec![expand_cutoffs(&vec![0.0; l - 2]); l],
            nu: vec![vec![0.0; l]; a],
            nu_tilde: vec![0.0; l],
            alpha: vec![vec![1.0 / l as f64; l]; l],
            omega0: 0.0,
            omega: vec![],
            y: vec![],
        }
    }

    #[test]
    fn symmetric_two_category_pmf() {
        let p = ordinal_pmf(0.0, &expand_cutoffs(&[])).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn three_category_pmf_against_statrs_erf() {
        // Independent route: Phi(1) through statrs' erf, which is accurate to about 1e-11.
        let phi1 = 0.5 * (1.0 + statrs::function::erf::erf(1.0 / 2f64.sqrt()));
        let p = ordinal_pmf(0.0, &expand_cutoffs(&[0.0])).unwrap();
        let expected = [0.5, phi1 - 0.5, 1.0 - phi1];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((p[1] - 0.341_344_746_068_542_9).abs() < 1e-14);
    }

    #[test]
    fn large_mean_puts_mass_on_top() {
        let p = ordinal_pmf(50.0, &expand_cutoffs(&[0.3, -0.2, 0.1])).unwrap();
        assert!((p[4] - 1.0).abs() < 1e-15);
        assert!(ordinal_pmf(f64::NAN, &expand_cutoffs(&[])).is_err());
    }

    #[test]
    fn annotation_probabilities_normalize() {
        let mut s = state_l(5, 2);
        s.nu[1] = vec![-1.0, 0.3, 0.9, 1.7, 3.2];
        s.phi[2] = expand_cutoffs(&[-0.5, 0.2, 0.4]);
        for y in 0..5 {
            let logs: Vec<f64> = (0..5).map(|z| log_f_z(z, y, 1, &s).unwrap()).collect();
            assert!(log_sum_exp(&logs).abs() < 1e-12);
        }
        assert!((log_f_z(0, 0, 0, &state_l(2, 1)).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(matches!(
            log_f_z(0, 0, 5, &s),
            Err(FusionError::UnknownAnnotator { .. })
        ));
    }

    #[test]
    fn uniform_dirichlet_is_flat() {
        let mut s = state_l(2, 1);
        s.omega0 = 2f64.ln();
        let v = log_f_c(&[0.5, 0.5], 0, &[], &s).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn beta_reduction_by_hand() {
        // s = 4, alpha = [0.5, 0.5] -> Beta(2, 2) density 6 x (1 - x).
        let mut s = state_l(2, 1);
        s.omega0 = 4f64.ln();
        let v = log_f_c(&[0.25, 0.75], 1, &[], &s).unwrap();
        assert!((v - 1.125f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn three_category_dirichlet_against_statrs_gamma() {
        let mut s = state_l(3, 1);
        s.alpha[0] = vec![0.6, 0.2, 0.2];
        let c = [1.0 / 3.0; 3];
        let g = statrs::function::gamma::ln_gamma;
        let expected = g(1.0) - g(0.6) - 2.0 * g(0.2)
            + (0.6 - 1.0) * (1.0f64 / 3.0).ln()
            + 2.0 * (0.2 - 1.0) * (1.0f64 / 3.0).ln();
        let v = log_f_c(&c, 0, &[], &s).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn dirichlet_rejects_boundary_points() {
        let s = state_l(3, 1);
        let err = log_f_c(&[0.0, 0.5, 0.5], 0, &[], &s).unwrap_err();
        assert!(err.to_string().contains("zeta_adjust"));
    }

    #[test]
    fn regression_pmf_two_categories() {
        let s = state_l(2, 1);
        for y in 0..2 {
            assert!((log_f_y(y, &[], &s).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        }
        assert!(log_f_y(0, &[1.0], &s).is_err());
    }

    #[test]
    fn zeta_adjust_rules() {
        let out = zeta_adjust(&[0.0, 0.1, 0.7, 0.2, 0.0], 1e-3).unwrap();
        let expected = [0.001, 0.101, 0.701, 0.201, 0.001].map(|v| v / 1.005);
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let flat = [0.2; 5];
        assert_eq!(zeta_adjust(&flat, 1e-3).unwrap(), flat.to_vec());
        let tiny = zeta_adjust(&[1.0, 0.0], 1e-12).unwrap();
        assert_eq!(tiny, vec![(1.0 + 1e-12) / (1.0 + 2e-12), 1e-12 / (1.0 + 2e-12)]);
        assert!(zeta_adjust(&flat, 0.0).is_err());
        assert!(zeta_adjust(&[0.5, 0.6], 1e-3).is_err());
    }

    #[test]
    fn zeta_adjust_is_idempotent_above_threshold() {
        let c = [0.05, 0.15, 0.8];
        let once = zeta_adjust(&c, 1e-3).unwrap();
        let twice = zeta_adjust(&once, 1e-3).unwrap();
        assert_eq!(once, twice);
    }
}
