#![allow(dead_code)]

use camtrap_fusion::model::{Annotation, CategoryCount, Dataset, Image, Sequence};
use camtrap_fusion::sampling::{dirichlet, std_normal};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

/// Small random dataset: `n` sequences of one to three images, roughly half
/// annotated, most with confidences, two covariates and one quality term.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, l: usize, a: usize) -> Dataset {
    let sequences = (0..n)
        .map(|i| {
            let images = (0..1 + i % 3)
                .map(|m| Image {
                    id: format!("im{m}"),
                    u: vec![std_normal(rng)],
                    annotation: ((m + i) % 2 == 0).then(|| Annotation {
                        score: rng.random_range(0..l),
                        annotator: rng.random_range(0..a),
                    }),
                    confidence: (m != 1).then(|| dirichlet(&vec![2.0; l], rng)),
                })
                .collect();
            Sequence {
                id: format!("s{i:03}"),
                x: vec![std_normal(rng), std_normal(rng)],
                images,
                true_y: None,
                observed_y: Some(i % l),
            }
        })
        .collect();
    Dataset {
        categories: CategoryCount::new(l).unwrap(),
        annotators: (0..a).map(|k| format!("a{k}")).collect(),
        sequences,
    }
}

/// Replays a fixed list of uniforms through `Rng::random::<f64>()`.
pub struct ScriptedUniforms {
    values: Vec<u64>,
    next: usize,
}

impl ScriptedUniforms {
    pub fn new(uniforms: &[f64]) -> Self {
        ScriptedUniforms {
            values: uniforms
                .iter()
                .map(|&u| ((u * (1u64 << 53) as f64) as u64) << 11)
                .collect(),
            next: 0,
        }
    }
}

impl RngCore for ScriptedUniforms {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.values[self.next % self.values.len()];
        self.next += 1;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Standard normal CDF by 5-point Gauss–Legendre quadrature of the density,
/// independent of any `erf` implementation.
pub fn quadrature_norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 + half_integral(x)
}

/// `P(lo < Z <= hi)` by quadrature. An interval on one side of zero is
/// integrated directly so that tail cells keep their relative accuracy.
pub fn quadrature_norm_interval(lo: f64, hi: f64) -> f64 {
    let lo = lo.clamp(-40.0, 40.0);
    let hi = hi.clamp(-40.0, 40.0);
    if lo >= 0.0 || hi <= 0.0 {
        density_integral(lo, hi)
    } else {
        density_integral(0.0, hi) - density_integral(0.0, lo)
    }
}

/// Integral of the standard normal density from 0 to `x`.
fn half_integral(x: f64) -> f64 {
    density_integral(0.0, x.clamp(-40.0, 40.0))
}

/// Integral of the standard normal density from `a` to `b` by composite
/// 5-point Gauss–Legendre on panels of width at most 0.05.
fn density_integral(a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = (((b - a).abs() / 0.05).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for (t, w) in NODES.iter().zip(WEIGHTS) {
            let z = mid + 0.5 * h * t;
            total += w * (-0.5 * z * z).exp();
        }
    }
    total * 0.5 * h * norm
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
