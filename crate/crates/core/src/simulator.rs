//! Synthetic datasets drawn from the fusion model at fixed true parameters.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::model::{
    ordinal_pmf, zeta_adjust, Annotation, CategoryCount, CutoffVector, Dataset, Image,
    ParamState, Sequence,
};
use crate::priors::{cell_width_for_max_prob, construct_accuracy_cutoffs};
use crate::sampling::{draw_categorical, log_dirichlet, std_normal};

/// Simulation settings. Randomness comes from the generator passed to
/// [`generate_dataset`], not from this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub categories: usize,
    pub beta_true: Vec<f64>,
    pub beta0_true: f64,
    pub omega0_true: f64,
    pub omega_true: Vec<f64>,
    pub annotators: usize,
    /// Variance of each annotator mean around the shared mean.
    pub nu_spread: f64,
    /// Expected AI confidence on the true category.
    pub ai_correct_confidence: f64,
    /// Accuracy of an annotator sitting at the shared means.
    pub annotator_accuracy: f64,
    /// Fraction of all training images that carry an annotation.
    pub annotated_fraction: f64,
    /// Equally likely numbers of images per sequence.
    pub r_choices: Vec<usize>,
    /// Largest attainable probability of each interior category.
    pub max_probs: Vec<f64>,
    pub zeta: f64,
    /// Rows in the covariate pool drawn for each dataset.
    pub pool_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_train: 500,
            n_test: 1000,
            categories: 5,
            beta_true: vec![0.2, -0.3, 0.0, 0.0, 0.2, -0.3],
            beta0_true: 1.38,
            omega0_true: 0.0,
            omega_true: vec![1.0],
            annotators: 3,
            nu_spread: 0.1,
            ai_correct_confidence: 0.6,
            annotator_accuracy: 0.95,
            annotated_fraction: 0.5,
            r_choices: vec![1, 3, 5, 10],
            max_probs: vec![0.2, 0.5, 0.3],
            zeta: 1e-12,
            pool_size: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let l = CategoryCount::new(self.categories)?.get();
        if self.max_probs.len() != l - 2 {
            return Err(FusionError::DimensionMismatch {
                what: "max_probs",
                expected: l - 2,
                found: self.max_probs.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.annotated_fraction) {
            return Err(FusionError::Config(format!(
                "annotated_fraction must lie in [0, 1], got {}",
                self.annotated_fraction
            )));
        }
        if !(self.ai_correct_confidence > 0.0 && self.ai_correct_confidence < 1.0) {
            return Err(FusionError::Config(format!(
                "ai_correct_confidence must lie in (0, 1), got {}",
                self.ai_correct_confidence
            )));
        }
        if self.r_choices.is_empty() || self.r_choices.contains(&0) {
            return Err(FusionError::Config("r_choices must be non-empty and positive".into()));
        }
        if self.n_train == 0 || self.pool_size == 0 {
            return Err(FusionError::Config("n_train and pool_size must be positive".into()));
        }
        if self.annotators == 0 && self.annotated_fraction > 0.0 {
            return Err(FusionError::Config("annotations requested without annotators".into()));
        }
        if !(self.nu_spread >= 0.0) {
            return Err(FusionError::Config("nu_spread must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_covariates(&self) -> usize {
        self.beta_true.len()
    }

    pub fn n_quality(&self) -> usize {
        self.omega_true.len()
    }
}

/// Cutoffs whose interior cells have the given largest attainable
/// probabilities, accumulated from a first cutoff at zero.
pub fn derive_theta_from_max_probs(max_probs: &[f64], categories: CategoryCount) -> Result<CutoffVector> {
    let l = categories.get();
    if max_probs.len() != l - 2 {
        return Err(FusionError::DimensionMismatch {
            what: "max_probs",
            expected: l - 2,
            found: max_probs.len(),
        });
    }
    let raw = max_probs
        .iter()
        .map(|&m| cell_width_for_max_prob(m).map(f64::ln))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CutoffVector::from_increments(raw))
}

/// Rows from which sequence covariates and image-quality covariates are
/// resampled.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePool {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

/// Pool of independent standard-normal rows.
pub fn covariate_pool_standard_normal<R: Rng + ?Sized>(
    p: usize,
    q: usize,
    pool_size: usize,
    rng: &mut R,
) -> CovariatePool {
    let mut rows = |d: usize| -> Vec<Vec<f64>> {
        (0..pool_size)
            .map(|_| (0..d).map(|_| std_normal(rng)).collect())
            .collect()
    };
    let x = rows(p);
    let u = rows(q);
    CovariatePool { x, u }
}

/// True parameters implied by `cfg`; annotator means are drawn around the
/// shared means. The latent categories are left empty.
pub fn true_parameters<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<ParamState> {
    cfg.validate()?;
    let cats = CategoryCount::new(cfg.categories)?;
    let l = cats.get();
    let theta = derive_theta_from_max_probs(&cfg.max_probs, cats)?;
    let acc = construct_accuracy_cutoffs(cats, cfg.annotator_accuracy)?;
    let sd = cfg.nu_spread.sqrt();
    let nu = (0..cfg.annotators)
        .map(|_| acc.nu_tilde.iter().map(|m| m + sd * std_normal(rng)).collect())
        .collect();
    let other = (1.0 - cfg.ai_correct_confidence) / (l - 1) as f64;
    let alpha = (0..l)
        .map(|y| {
            (0..l)
                .map(|k| if k == y { cfg.ai_correct_confidence } else { other })
                .collect()
        })
        .collect();
    Ok(ParamState {
        beta0: cfg.beta0_true,
        beta: cfg.beta_true.clone(),
        theta,
        phi: acc.phi,
        nu,
        nu_tilde: acc.nu_tilde,
        alpha,
        omega0: cfg.omega0_true,
        omega: cfg.omega_true.clone(),
        y: Vec::new(),
    })
}

/// Simulated training and test data with the parameters that produced them.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// True parameters; `y` holds the training categories.
    pub truth: ParamState,
}

/// Confidence vector drawn from the model, then smoothed by `zeta`.
fn draw_confidence<R: Rng + ?Sized>(
    state: &ParamState,
    y: usize,
    u: &[f64],
    zeta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let s = state.precision(u);
    let conc: Vec<f64> = state.alpha[y].iter().map(|a| s * a).collect();
    let c: Vec<f64> = log_dirichlet(&conc, rng).into_iter().map(f64::exp).collect();
    let total: f64 = c.iter().sum();
    let c: Vec<f64> = c.into_iter().map(|v| v / total).collect();
    zeta_adjust(&c, zeta)
}

fn draw_score<R: Rng + ?Sized>(state: &ParamState, y: usize, annotator: usize, rng: &mut R) -> Result<usize> {
    let pmf = ordinal_pmf(state.nu[annotator][y], &state.phi[y])?;
    Ok(draw_categorical(&pmf, rng))
}

fn pick<'a, T, R: Rng + ?Sized>(rows: &'a [T], rng: &mut R) -> &'a T {
    &rows[rng.random_range(0..rows.len())]
}

/// Draws training and test data. Every image gets an AI confidence vector;
/// a uniformly chosen `annotated_fraction` of all training images also
/// gets one annotation from a uniformly chosen annotator. The random stream
/// does not depend on `annotated_fraction`, so for a fixed seed the
/// annotated sets are nested as the fraction grows.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &SimConfig,
    pool: &CovariatePool,
    rng: &mut R,
) -> Result<SimOutput> {
    cfg.validate()?;
    if pool.x.is_empty() || pool.u.is_empty() {
        return Err(FusionError::Config("covariate pool is empty".into()));
    }
    let (p, q) = (cfg.n_covariates(), cfg.n_quality());
    if pool.x[0].len() != p || pool.u[0].len() != q {
        return Err(FusionError::DimensionMismatch {
            what: "covariate pool columns",
            expected: p + q,
            found: pool.x[0].len() + pool.u[0].len(),
        });
    }
    let cats = CategoryCount::new(cfg.categories)?;
    let mut truth = true_parameters(cfg, rng)?;

    let draw_sequence = |id: String, rng: &mut R, annotate: bool| -> Result<(Sequence, Vec<Annotation>)> {
        let r = *pick(&cfg.r_choices, rng);
        let x = pick(&pool.x, rng).clone();
        let y = draw_categorical(&ordinal_pmf(truth.linear_predictor(&x), &truth.theta)?, rng);
        let mut images = Vec::with_capacity(r);
        let mut pending = Vec::with_capacity(r);
        for k in 0..r {
            let u = pick(&pool.u, rng).clone();
            let confidence = draw_confidence(&truth, y, &u, cfg.zeta, rng)?;
            if annotate {
                let annotator = rng.random_range(0..cfg.annotators);
                let score = draw_score(&truth, y, annotator, rng)?;
                pending.push(Annotation { score, annotator });
            }
            images.push(Image {
                id: format!("img{:02}", k + 1),
                u,
                annotation: None,
                confidence: Some(confidence),
            });
        }
        let seq = Sequence {
            id,
            x,
            images,
            true_y: Some(y),
            observed_y: None,
        };
        Ok((seq, pending))
    };

    let annotate = cfg.annotators > 0;
    let mut train = Vec::with_capacity(cfg.n_train);
    let mut candidates = Vec::new();
    for i in 0..cfg.n_train {
        let (seq, pending) = draw_sequence(format!("train{:04}", i + 1), rng, annotate)?;
        candidates.extend(pending.into_iter().enumerate().map(|(k, a)| (i, k, a)));
        train.push(seq);
    }
    candidates.shuffle(rng);
    let total_images: usize = train.iter().map(|s| s.images.len()).sum();
    let n_annotated = (cfg.annotated_fraction * total_images as f64).round() as usize;
    for &(i, k, ann) in candidates.iter().take(n_annotated) {
        train[i].images[k].annotation = Some(ann);
    }
    let mut test = Vec::with_capacity(cfg.n_test);
    for i in 0..cfg.n_test {
        let (seq, _) = draw_sequence(format!("test{:04}", i + 1), rng, false)?;
        test.push(seq);
    }
    truth.y = train.iter().map(|s| s.true_y.expect("set above")).collect();
    let annotators: Vec<String> = (0..cfg.annotators).map(|a| format!("annotator{}", a + 1)).collect();
    Ok(SimOutput {
        train: Dataset {
            categories: cats,
            annotators: annotators.clone(),
            sequences: train,
        },
        test: Dataset {
            categories: cats,
            annotators,
            sequences: test,
        },
        truth,
    })
}

/// Redraws every annotation score and confidence vector of `data` from the
/// model at `state`, keeping which images are annotated, by whom, and the
/// covariates. `state.y` gives each sequence's category.
pub fn redraw_observations<R: Rng + ?Sized>(
    data: &mut Dataset,
    state: &ParamState,
    zeta: f64,
    rng: &mut R,
) -> Result<()> {
    if state.y.len() != data.len() {
        return Err(FusionError::DimensionMismatch {
            what: "latent categories",
            expected: data.len(),
            found: state.y.len(),
        });
    }
    for (seq, &y) in data.sequences.iter_mut().zip(&state.y) {
        for im in &mut seq.images {
            if let Some(ann) = im.annotation.as_mut() {
                ann.score = draw_score(state, y, ann.annotator, rng)?;
            }
            if im.confidence.is_some() {
                im.confidence = Some(draw_confidence(state, y, &im.u, zeta, rng)?);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_f_c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(fraction: f64) -> SimConfig {
        SimConfig {
            n_train: 60,
            n_test: 20,
            annotated_fraction: fraction,
            pool_size: 200,
            ..SimConfig::default()
        }
    }

    fn simulate(cfg: &SimConfig, seed: u64) -> SimOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = covariate_pool_standard_normal(cfg.n_covariates(), cfg.n_quality(), cfg.pool_size, &mut rng);
        generate_dataset(cfg, &pool, &mut rng).unwrap()
    }

    #[test]
    fn theta_from_max_probs() {
        let five = CategoryCount::new(5).unwrap();
        let theta = derive_theta_from_max_probs(&[0.2, 0.5, 0.3], five).unwrap();
        let expected = [0.0, 0.5067, 1.8557, 2.6263];
        for (a, b) in theta.interior().iter().zip(expected) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        for (y, m) in [(1, 0.2), (2, 0.5), (3, 0.3)] {
            let mid = 0.5 * (theta.lower(y) + theta.upper(y));
            let pmf = ordinal_pmf(mid, &theta).unwrap();
            assert!((pmf[y] - m).abs() < 1e-8);
        }
        assert!(derive_theta_from_max_probs(&[0.2, 1.0, 0.3], five).is_err());
        let narrow = derive_theta_from_max_probs(&[1e-9], CategoryCount::new(3).unwrap()).unwrap();
        assert!(narrow.interior()[1] < 1e-8);
    }

    #[test]
    fn truth_matches_configuration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = true_parameters(&SimConfig::default(), &mut rng).unwrap();
        assert_eq!(truth.alpha[0], vec![0.6, 0.1, 0.1, 0.1, 0.1]);
        for row in &truth.alpha {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(truth.nu.len(), 3);
        truth.validate().unwrap();
    }

    #[test]
    fn zero_fraction_has_no_annotations() {
        let out = simulate(&small_cfg(0.0), 2);
        assert_eq!(out.train.n_annotations(), 0);
        assert_eq!(out.train.n_confidences(), out.train.n_images());
        assert_eq!(out.test.n_annotations(), 0);
        assert!(out.test.sequences.iter().all(|s| s.true_y.is_some()));
    }

    #[test]
    fn annotated_sets_are_nested() {
        let low = simulate(&small_cfg(0.2), 3);
        let high = simulate(&small_cfg(0.5), 3);
        let total = low.train.n_images();
        assert_eq!(low.train.n_annotations(), (0.2 * total as f64).round() as usize);
        assert_eq!(high.train.n_annotations(), (0.5 * total as f64).round() as usize);
        for (a, b) in low.train.sequences.iter().zip(&high.train.sequences) {
            assert_eq!(a.true_y, b.true_y);
            for (ia, ib) in a.images.iter().zip(&b.images) {
                assert_eq!(ia.confidence, ib.confidence);
                if let Some(ann) = ia.annotation {
                    assert_eq!(ib.annotation, Some(ann));
                }
            }
        }
        low.train.validate().unwrap();
    }

    #[test]
    fn confidences_strictly_inside_simplex() {
        let out = simulate(&small_cfg(0.5), 4);
        for (_, c) in out.train.sequences.iter().flat_map(|s| s.confidences()) {
            assert!(c.iter().all(|&v| v > 0.0));
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = simulate(&small_cfg(0.5), 5);
        let b = simulate(&small_cfg(0.5), 5);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn latent_frequencies_match_regression_pmf() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = true_parameters(&cfg, &mut rng).unwrap();
        let x = [0.5, -1.0, 0.3, 0.0, 1.2, 0.4];
        let pmf = ordinal_pmf(truth.linear_predictor(&x), &truth.theta).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[draw_categorical(&pmf, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(&pmf) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 3.0 * se + 1e-12);
        }
    }

    #[test]
    fn truth_fits_its_confidences_better_than_swapped_means() {
        let cfg = SimConfig {
            n_train: 100,
            n_test: 1,
            ..SimConfig::default()
        };
        for rep in 0..20 {
            let out = simulate(&cfg, 100 + rep);
            let loglik = |state: &ParamState| -> f64 {
                out.train
                    .sequences
                    .iter()
                    .zip(&out.truth.y)
                    .flat_map(|(s, &y)| s.confidences().map(move |(im, c)| (im, c, y)))
                    .map(|(im, c, y)| log_f_c(c, y, &im.u, state).unwrap())
                    .sum()
            };
            let best = loglik(&out.truth);
            for a in 0..5 {
                for b in a + 1..5 {
                    let mut swapped = out.truth.clone();
                    swapped.alpha.swap(a, b);
                    assert!(loglik(&swapped) < best, "replicate {rep}, swap {a}<->{b}");
                }
            }
        }
    }

    #[test]
    fn pool_moments_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let pool = covariate_pool_standard_normal(2, 1, n, &mut rng);
        for col in 0..2 {
            let mean = pool.x.iter().map(|r| r[col]).sum::<f64>() / n as f64;
            let var = pool.x.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 / (n as f64).sqrt());
            assert!((var - 1.0).abs() < 0.05);
        }
        let again = covariate_pool_standard_normal(2, 1, 50, &mut ChaCha8Rng::seed_from_u64(8));
        let other = covariate_pool_standard_normal(2, 1, 50, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(again, other);
    }

    #[test]
    fn redraw_keeps_structure() {
        let mut out = simulate(&small_cfg(0.3), 9);
        let before = out.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        redraw_observations(&mut out.train, &out.truth, 1e-12, &mut rng).unwrap();
        assert_eq!(out.train.n_annotations(), before.n_annotations());
        for (a, b) in out.train.sequences.iter().zip(&before.sequences) {
            for (ia, ib) in a.images.iter().zip(&b.images) {
                assert_eq!(
                    ia.annotation.map(|x| x.annotator),
                    ib.annotation.map(|x| x.annotator)
                );
                assert_eq!(ia.u, ib.u);
            }
        }
        assert_ne!(out.train, before);
    }
}
