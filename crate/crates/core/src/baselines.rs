//! Comparison pipelines: confidence thresholding, continuous pseudo-responses
//! with a Bayesian linear regression, and the observed-maximum ordinal.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::mcmc::{argmax, McmcConfig};
use crate::model::{Dataset, Sequence};
use crate::sampling::std_normal;

/// Confidence vectors whose largest element is below `t` are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ThresholdPolicy {
    t: f64,
}

impl ThresholdPolicy {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(FusionError::Config(format!("threshold must lie in (0, 1], got {t}")));
        }
        Ok(ThresholdPolicy { t })
    }

    pub fn t(self) -> f64 {
        self.t
    }

    pub fn keeps(self, confidence: &[f64]) -> bool {
        confidence.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= self.t
    }
}

impl TryFrom<f64> for ThresholdPolicy {
    type Error = FusionError;

    fn try_from(t: f64) -> Result<Self> {
        ThresholdPolicy::new(t)
    }
}

impl From<ThresholdPolicy> for f64 {
    fn from(p: ThresholdPolicy) -> f64 {
        p.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    AnnotationMean,
    ConfidenceWeighted,
}

/// Continuous pseudo-response on the one-based score scale `[1, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearResponse {
    pub sequence_id: String,
    pub y_tilde: f64,
    pub source: ResponseSource,
}

/// Mean annotation score when the sequence is annotated; otherwise the mean
/// over surviving images of the confidence-weighted score `sum_l l c_l`.
/// `None` when no annotation exists and no confidence survives.
pub fn extract_linear_response(seq: &Sequence, policy: ThresholdPolicy) -> Option<LinearResponse> {
    let scores: Vec<f64> = seq.annotations().map(|a| (a.score + 1) as f64).collect();
    if !scores.is_empty() {
        return Some(LinearResponse {
            sequence_id: seq.id.clone(),
            y_tilde: scores.iter().sum::<f64>() / scores.len() as f64,
            source: ResponseSource::AnnotationMean,
        });
    }
    let expected: Vec<f64> = seq
        .confidences()
        .map(|(_, c)| c)
        .filter(|c| policy.keeps(c))
        .map(|c| c.iter().enumerate().map(|(l, v)| (l + 1) as f64 * v).sum())
        .collect();
    if expected.is_empty() {
        return None;
    }
    Some(LinearResponse {
        sequence_id: seq.id.clone(),
        y_tilde: expected.iter().sum::<f64>() / expected.len() as f64,
        source: ResponseSource::ConfidenceWeighted,
    })
}

/// Lower median of the per-image argmax categories over surviving
/// confidence vectors; annotations are ignored. Zero-based.
pub fn extract_maximum_observed(seq: &Sequence, policy: ThresholdPolicy) -> Option<usize> {
    let mut modes: Vec<usize> = seq
        .confidences()
        .map(|(_, c)| c)
        .filter(|c| policy.keeps(c))
        .map(argmax)
        .collect();
    if modes.is_empty() {
        return None;
    }
    modes.sort_unstable();
    Some(modes[(modes.len() - 1) / 2])
}

/// Surviving sequences with `observed_y` set, ready for the
/// maximum-observed variant.
pub fn maximum_observed_dataset(data: &Dataset, policy: ThresholdPolicy) -> Dataset {
    let sequences = data
        .sequences
        .iter()
        .filter_map(|seq| {
            extract_maximum_observed(seq, policy).map(|y| Sequence {
                observed_y: Some(y),
                ..seq.clone()
            })
        })
        .collect();
    Dataset {
        sequences,
        ..data.clone()
    }
}

/// Pseudo-responses of the surviving sequences and their covariate rows.
pub fn linear_responses(data: &Dataset, policy: ThresholdPolicy) -> (Vec<LinearResponse>, Vec<Vec<f64>>) {
    data.sequences
        .iter()
        .filter_map(|seq| extract_linear_response(seq, policy).map(|r| (r, seq.x.clone())))
        .unzip()
}

/// Priors of the linear baseline: normal coefficients and an inverse-gamma
/// noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearPrior {
    pub intercept_sd: f64,
    pub beta_sd: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for LinearPrior {
    fn default() -> Self {
        LinearPrior {
            intercept_sd: 10f64.sqrt(),
            beta_sd: 1.0,
            sigma2_shape: 0.01,
            sigma2_rate: 0.01,
        }
    }
}

/// Posterior draws of the linear baseline after burn-in and thinning.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChain {
    pub beta0: Vec<f64>,
    /// One coefficient vector per draw.
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
}

/// Gibbs sampler for `y = beta0 + x' beta + e`, `e ~ N(0, sigma2)`, with
/// independent normal priors on the coefficients and an inverse-gamma prior
/// on `sigma2`. The proper coefficient prior keeps the conditional
/// precision positive definite even for a rank-deficient design.
pub fn fit_bayesian_linear(
    responses: &[LinearResponse],
    x: &[Vec<f64>],
    prior: &LinearPrior,
    cfg: &McmcConfig,
) -> Result<LinearChain> {
    cfg.validate()?;
    let n = responses.len();
    if x.len() != n {
        return Err(FusionError::DimensionMismatch {
            what: "design rows",
            expected: n,
            found: x.len(),
        });
    }
    let p = x.first().map_or(0, Vec::len);
    if n < p + 2 {
        return Err(FusionError::NotApplicable(format!(
            "linear regression needs at least {} responses, got {n}",
            p + 2
        )));
    }
    let d = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let y = DVector::from_iterator(n, responses.iter().map(|r| r.y_tilde));
    let dtd = d.transpose() * &d;
    let dty = d.transpose() * &y;
    let yty = y.dot(&y);
    let mut prior_precision = DVector::from_element(p + 1, prior.beta_sd.powi(-2));
    prior_precision[0] = prior.intercept_sd.powi(-2);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = prior.sigma2_shape + 0.5 * n as f64;
    let mut sigma2 = {
        let mean = y.mean();
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).max(1e-6)
    };
    let kept = cfg.n_kept();
    let mut out = LinearChain {
        beta0: Vec::with_capacity(kept),
        beta: Vec::with_capacity(kept),
        sigma2: Vec::with_capacity(kept),
    };
    for t in 1..=cfg.iterations {
        let mut precision = &dtd / sigma2;
        for j in 0..=p {
            precision[(j, j)] += prior_precision[j];
        }
        let chol = Cholesky::new(precision).ok_or_else(|| {
            FusionError::Numerical("coefficient precision is not positive definite".into())
        })?;
        let mean = chol.solve(&(&dty / sigma2));
        let z = DVector::from_fn(p + 1, |_, _| std_normal(&mut rng));
        let offset = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| FusionError::Numerical("singular Cholesky factor".into()))?;
        let coef = mean + offset;
        let ssr = (yty - 2.0 * coef.dot(&dty) + coef.dot(&(&dtd * &coef))).max(0.0);
        let rate = prior.sigma2_rate + 0.5 * ssr;
        let g: f64 = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| FusionError::Numerical(format!("noise variance draw: {e}")))?
            .sample(&mut rng);
        sigma2 = 1.0 / g;
        if t > cfg.burnin && (t - cfg.burnin) % cfg.thin == 0 {
            out.beta0.push(coef[0]);
            out.beta.push(coef.iter().skip(1).cloned().collect());
            out.sigma2.push(sigma2);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Annotation, Image};

    fn seq(annotations: &[usize], confidences: &[Vec<f64>]) -> Sequence {
        let mut images: Vec<Image> = annotations
            .iter()
            .map(|&s| Image {
                id: "a".into(),
                u: vec![],
                annotation: Some(Annotation {
                    score: s - 1,
                    annotator: 0,
                }),
                confidence: None,
            })
            .collect();
        images.extend(confidences.iter().map(|c| Image {
            id: "c".into(),
            u: vec![],
            annotation: None,
            confidence: Some(c.clone()),
        }));
        Sequence {
            id: "s".into(),
            x: vec![],
            images,
            true_y: None,
            observed_y: None,
        }
    }

    fn t(v: f64) -> ThresholdPolicy {
        ThresholdPolicy::new(v).unwrap()
    }

    #[test]
    fn annotation_mean_wins() {
        let s = seq(&[3, 4], &[vec![1.0, 0.0, 0.0, 0.0, 0.0]]);
        let r = extract_linear_response(&s, t(0.5)).unwrap();
        assert_eq!(r.y_tilde, 3.5);
        assert_eq!(r.source, ResponseSource::AnnotationMean);
    }

    #[test]
    fn low_confidence_is_dropped() {
        let s = seq(&[], &[vec![0.0, 0.1, 0.7, 0.2, 0.0]]);
        assert!(extract_linear_response(&s, t(0.75)).is_none());
        assert!(extract_maximum_observed(&s, t(0.75)).is_none());
        let r = extract_linear_response(&s, t(0.7)).unwrap();
        assert!((r.y_tilde - 3.1).abs() < 1e-12);
    }

    #[test]
    fn one_hot_confidences_average_scores() {
        let s = seq(&[], &[vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0, 0.0]]);
        let r = extract_linear_response(&s, t(0.9)).unwrap();
        assert_eq!(r.y_tilde, 3.5);
        assert_eq!(r.source, ResponseSource::ConfidenceWeighted);
    }

    #[test]
    fn maximum_uses_lower_median() {
        let oh = |k: usize| {
            let mut v = vec![0.0; 5];
            v[k - 1] = 1.0;
            v
        };
        assert_eq!(extract_maximum_observed(&seq(&[], &[oh(3), oh(3), oh(4)]), t(0.9)), Some(2));
        assert_eq!(extract_maximum_observed(&seq(&[], &[oh(3), oh(4)]), t(0.9)), Some(2));
        // Annotations are ignored.
        assert_eq!(extract_maximum_observed(&seq(&[5], &[oh(1)]), t(0.9)), Some(0));
        // Ties inside a vector go to the lower category.
        let tie = vec![0.0, 0.5, 0.5, 0.0, 0.0];
        assert_eq!(extract_maximum_observed(&seq(&[], &[tie]), t(0.5)), Some(1));
    }

    #[test]
    fn threshold_bounds() {
        assert!(ThresholdPolicy::new(0.0).is_err());
        assert!(ThresholdPolicy::new(1.0).is_ok());
        assert!(ThresholdPolicy::new(1.01).is_err());
    }

    fn cfg(iterations: usize, burnin: usize) -> McmcConfig {
        McmcConfig {
            iterations,
            burnin,
            seed: 3,
            ..McmcConfig::default()
        }
    }

    fn responses(y: &[f64]) -> Vec<LinearResponse> {
        y.iter()
            .map(|&v| LinearResponse {
                sequence_id: String::new(),
                y_tilde: v,
                source: ResponseSource::AnnotationMean,
            })
            .collect()
    }

    #[test]
    fn too_few_responses_is_an_error() {
        let x = vec![vec![1.0, 2.0]; 3];
        let r = responses(&[1.0, 2.0, 3.0]);
        assert!(fit_bayesian_linear(&r, &x, &LinearPrior::default(), &cfg(20, 10)).is_err());
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = [0.4, -0.7, 0.25];
        let x: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![std_normal(&mut rng), std_normal(&mut rng)])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| truth[0] + truth[1] * r[0] + truth[2] * r[1])
            .collect();
        let chain = fit_bayesian_linear(&responses(&y), &x, &LinearPrior::default(), &cfg(1500, 500)).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&chain.beta0) - truth[0]).abs() < 1e-2);
        for j in 0..2 {
            let col: Vec<f64> = chain.beta.iter().map(|b| b[j]).collect();
            assert!((mean(&col) - truth[j + 1]).abs() < 1e-2);
        }
        assert!(mean(&chain.sigma2) < 1e-3);
    }
}
