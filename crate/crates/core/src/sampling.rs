//! Random variate helpers shared by the sampler and the simulator.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::special::log_sum_exp;

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Index `k` with probability `probs[k]`, by inverse CDF on one uniform draw.
/// Falls back to the last index with positive mass if round-off leaves the
/// cumulative sum short of the draw.
pub fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    inverse_cdf(probs, u)
}

pub(crate) fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Log of a Gamma(shape, 1) variate. Small shapes use the
/// `Gamma(a) = Gamma(a + 1) U^{1/a}` boost so the result never underflows.
pub fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>();
        // u == 0 has probability 2^-53 per draw; nudge it off the boundary.
        g.ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// Dirichlet draw returned on the log scale.
pub fn log_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = concentration
        .iter()
        .map(|&a| log_gamma_variate(a, rng))
        .collect();
    let lse = log_sum_exp(&logs);
    for v in logs.iter_mut() {
        *v -= lse;
    }
    logs
}

pub fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    log_dirichlet(concentration, rng)
        .into_iter()
        .map(f64::exp)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_cdf_boundaries() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(inverse_cdf(&p, 0.0), 0);
        assert_eq!(inverse_cdf(&p, 0.2), 1);
        assert_eq!(inverse_cdf(&p, 0.69), 1);
        assert_eq!(inverse_cdf(&p, 0.7), 2);
        assert_eq!(inverse_cdf(&[0.5, 0.5 - 1e-16, 0.0], 0.999_999_999_999_999_9), 1);
    }

    #[test]
    fn dirichlet_small_concentration_stays_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = log_dirichlet(&[0.01, 0.01, 0.02], &mut rng);
            assert!(x.iter().all(|v| v.is_finite()));
            assert!((log_sum_exp(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_mean_matches_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conc = [0.6, 0.1, 0.3, 2.0];
        let n = 40_000;
        let mut mean = [0.0; 4];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(dirichlet(&conc, &mut rng)) {
                *m += v / n as f64;
            }
        }
        let total: f64 = conc.iter().sum();
        for (k, m) in mean.iter().enumerate() {
            let e = conc[k] / total;
            let var = e * (1.0 - e) / (total + 1.0);
            assert!((m - e).abs() < 4.0 * (var / n as f64).sqrt(), "{k}: {m} vs {e}");
        }
    }
}
