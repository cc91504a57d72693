//! Ranked probability scores and coefficient recovery metrics across
//! simulation replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::LinearChain;
use crate::error::{FusionError, Result};
use crate::mcmc::{posterior_predict, ChainOutput};
use crate::model::Dataset;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Ranked probability score of a forecast pmf against a zero-based true
/// category, normalized by `L - 1` so that it lies in `[0, 1]`.
pub fn rps(predicted: &[f64], truth: usize) -> Result<f64> {
    let l = predicted.len();
    if l < 2 {
        return Err(FusionError::DimensionMismatch {
            what: "forecast categories",
            expected: 2,
            found: l,
        });
    }
    if truth >= l {
        return Err(FusionError::InvalidCategory {
            value: truth + 1,
            categories: l,
        });
    }
    let total: f64 = predicted.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE || predicted.iter().any(|p| !(*p >= 0.0)) {
        return Err(FusionError::InvalidSimplex(format!(
            "forecast sums to {total}"
        )));
    }
    let mut cdf = 0.0;
    let mut acc = 0.0;
    for (k, p) in predicted[..l - 1].iter().enumerate() {
        cdf += p;
        let step = if truth <= k { 1.0 } else { 0.0 };
        acc += (cdf - step).powi(2);
    }
    Ok(acc / (l - 1) as f64)
}

/// Per-sequence RPS of the posterior category marginals, with `truth`
/// aligned to `chain.sequence_ids`.
pub fn in_sample_rps(chain: &ChainOutput, truth: &[usize]) -> Result<Vec<f64>> {
    let marginals = chain.y_marginals.as_ref().ok_or_else(|| {
        FusionError::NotApplicable(format!(
            "the {} variant has no latent categories",
            chain.variant
        ))
    })?;
    if truth.len() != marginals.len() {
        return Err(FusionError::DimensionMismatch {
            what: "true categories",
            expected: marginals.len(),
            found: truth.len(),
        });
    }
    marginals.iter().zip(truth).map(|(m, &y)| rps(m, y)).collect()
}

/// Per-sequence RPS of the posterior predictive pmf at held-out covariates.
pub fn out_sample_rps(chain: &ChainOutput, x: &[Vec<f64>], truth: &[usize]) -> Result<Vec<f64>> {
    if x.len() != truth.len() {
        return Err(FusionError::DimensionMismatch {
            what: "held-out categories",
            expected: x.len(),
            found: truth.len(),
        });
    }
    x.par_iter()
        .zip(truth.par_iter())
        .map(|(x0, &y)| rps(&posterior_predict(x0, chain)?, y))
        .collect()
}

/// True categories of `ids`, looked up by sequence id in `data`.
pub fn true_categories(data: &Dataset, ids: &[String]) -> Result<Vec<usize>> {
    let lookup: std::collections::HashMap<&str, Option<usize>> = data
        .sequences
        .iter()
        .map(|s| (s.id.as_str(), s.true_y))
        .collect();
    ids.iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .copied()
                .flatten()
                .ok_or_else(|| FusionError::NotApplicable(format!("sequence {id} has no true category")))
        })
        .collect()
}

/// Posterior draws of the non-intercept regression coefficients.
pub trait BetaDraws {
    fn n_coefficients(&self) -> usize;
    /// Draws of coefficient `j` (zero-based, intercept excluded).
    fn coefficient_draws(&self, j: usize) -> Vec<f64>;
}

impl BetaDraws for ChainOutput {
    fn n_coefficients(&self) -> usize {
        self.n_covariates()
    }

    fn coefficient_draws(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.beta[j]).collect()
    }
}

impl BetaDraws for LinearChain {
    fn n_coefficients(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    fn coefficient_draws(&self, j: usize) -> Vec<f64> {
        self.beta.iter().map(|b| b[j]).collect()
    }
}

/// Posterior mean and central 95% credible interval of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CoefficientInterval {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(FusionError::NotApplicable("no posterior draws".into()));
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let shift = draws[0];
        Ok(CoefficientInterval {
            mean: shift + draws.iter().map(|d| d - shift).sum::<f64>() / draws.len() as f64,
            lower: quantile(&sorted, 0.025),
            upper: quantile(&sorted, 0.975),
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Intervals for every coefficient of one fitted chain.
pub fn coefficient_intervals<C: BetaDraws + ?Sized>(chain: &C) -> Result<Vec<CoefficientInterval>> {
    (0..chain.n_coefficients())
        .map(|j| CoefficientInterval::from_draws(&chain.coefficient_draws(j)))
        .collect()
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" rule).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-coefficient MSE, coverage and detection rate across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMetrics {
    pub mse: Vec<f64>,
    pub coverage: Vec<f64>,
    pub detection: Vec<f64>,
}

impl BetaMetrics {
    /// Coverage pooled over all coefficients and replicates.
    pub fn pooled_coverage(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / self.coverage.len() as f64
    }
}

/// Aggregates per-replicate intervals. Detection counts an interval as
/// correct when it excludes zero for a nonzero truth and contains zero
/// otherwise.
pub fn beta_metrics(replicates: &[Vec<CoefficientInterval>], beta_true: &[f64]) -> Result<BetaMetrics> {
    if replicates.is_empty() {
        return Err(FusionError::NotApplicable("no replicates to summarize".into()));
    }
    let p = beta_true.len();
    if let Some(bad) = replicates.iter().find(|r| r.len() != p) {
        return Err(FusionError::DimensionMismatch {
            what: "coefficients",
            expected: p,
            found: bad.len(),
        });
    }
    let r = replicates.len() as f64;
    let mut covered = vec![0usize; p];
    let mut detected = vec![0usize; p];
    let mut mse = vec![0.0; p];
    for rep in replicates {
        for (j, (iv, &truth)) in rep.iter().zip(beta_true).enumerate() {
            mse[j] += (iv.mean - truth).powi(2) / r;
            covered[j] += iv.contains(truth) as usize;
            let correct = if truth != 0.0 { !iv.contains(0.0) } else { iv.contains(0.0) };
            detected[j] += correct as usize;
        }
    }
    let out = BetaMetrics {
        mse,
        coverage: covered.iter().map(|&c| c as f64 / r).collect(),
        detection: detected.iter().map(|&c| c as f64 / r).collect(),
    };
    Ok(out)
}

/// Convenience wrapper over [`coefficient_intervals`] and [`beta_metrics`].
pub fn beta_metrics_from_chains<C: BetaDraws>(chains: &[C], beta_true: &[f64]) -> Result<BetaMetrics> {
    let intervals = chains
        .iter()
        .map(|c| coefficient_intervals(c))
        .collect::<Result<Vec<_>>>()?;
    beta_metrics(&intervals, beta_true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            n: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
        })
    }
}

/// RPS values of one setting: per-sequence scores of every replicate, their
/// per-replicate means, the spread of those means, and the pooled spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpsSet {
    #[serde(skip)]
    pub per_sequence: Vec<Vec<f64>>,
    pub replicate_means: Vec<f64>,
    pub across_replicates: Summary,
    pub pooled: Summary,
}

impl RpsSet {
    pub fn from_replicates(per_sequence: Vec<Vec<f64>>) -> Option<Self> {
        let replicate_means: Vec<f64> = per_sequence
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        let pooled: Vec<f64> = per_sequence.iter().flatten().copied().collect();
        Some(RpsSet {
            across_replicates: Summary::of(&replicate_means)?,
            pooled: Summary::of(&pooled)?,
            replicate_means,
            per_sequence,
        })
    }
}

/// Everything reported for one fitted setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReport {
    pub setting: String,
    pub replicates: usize,
    pub in_sample_rps: Option<RpsSet>,
    pub out_sample_rps: Option<RpsSet>,
    /// Per-replicate ratio of mean out-of-sample RPS to the reference setting.
    pub relative_out_sample_rps: Option<Vec<f64>>,
    pub beta_mse: Vec<f64>,
    pub beta_coverage: Vec<f64>,
    pub beta_detection: Vec<f64>,
    /// Sequences retained by thresholding in each replicate.
    pub survivor_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta_true: Vec<f64>,
    pub reference_setting: Option<String>,
    pub settings: Vec<SettingReport>,
}

impl EvalReport {
    pub fn setting(&self, name: &str) -> Option<&SettingReport> {
        self.settings.iter().find(|s| s.setting == name)
    }

    /// Fills `relative_out_sample_rps` of every setting against `reference`,
    /// pairing replicates by position.
    pub fn set_reference(&mut self, reference: &str) -> Result<()> {
        let base = self
            .setting(reference)
            .and_then(|s| s.out_sample_rps.as_ref())
            .map(|r| r.replicate_means.clone())
            .ok_or_else(|| {
                FusionError::NotApplicable(format!("no out-of-sample RPS for setting {reference}"))
            })?;
        for s in &mut self.settings {
            s.relative_out_sample_rps = s.out_sample_rps.as_ref().map(|r| {
                r.replicate_means
                    .iter()
                    .zip(&base)
                    .map(|(a, b)| a / b)
                    .collect()
            });
        }
        self.reference_setting = Some(reference.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(rps(&[0.0, 0.0, 1.0, 0.0, 0.0], 2).unwrap(), 0.0);
        assert!((rps(&[1.0, 0.0, 0.0, 0.0, 0.0], 4).unwrap() - 1.0).abs() < 1e-15);
        assert!((rps(&[0.2, 0.5, 0.3], 1).unwrap() - 0.065).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(rps(&[0.5, 0.5], 2), Err(FusionError::InvalidCategory { .. })));
        assert!(matches!(rps(&[0.5, 0.6], 0), Err(FusionError::InvalidSimplex(_))));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_draws_at_truth() {
        let truth = [0.2, 0.0];
        let reps: Vec<Vec<CoefficientInterval>> = (0..3)
            .map(|_| {
                truth
                    .iter()
                    .map(|&t| CoefficientInterval::from_draws(&[t; 10]).unwrap())
                    .collect()
            })
            .collect();
        let m = beta_metrics(&reps, &truth).unwrap();
        assert_eq!(m.mse, vec![0.0, 0.0]);
        assert_eq!(m.coverage, vec![1.0, 1.0]);
        assert_eq!(m.detection, vec![1.0, 1.0]);
    }

    #[test]
    fn relative_rps_pairs_replicates() {
        let mk = |name: &str, means: Vec<Vec<f64>>| SettingReport {
            setting: name.into(),
            replicates: means.len(),
            in_sample_rps: None,
            out_sample_rps: RpsSet::from_replicates(means),
            relative_out_sample_rps: None,
            beta_mse: vec![],
            beta_coverage: vec![],
            beta_detection: vec![],
            survivor_counts: vec![],
        };
        let mut report = EvalReport {
            beta_true: vec![],
            reference_setting: None,
            settings: vec![mk("a", vec![vec![0.1], vec![0.2]]), mk("b", vec![vec![0.2], vec![0.1]])],
        };
        report.set_reference("a").unwrap();
        assert_eq!(report.setting("b").unwrap().relative_out_sample_rps, Some(vec![2.0, 0.5]));
        assert!(report.set_reference("missing").is_err());
    }
}
