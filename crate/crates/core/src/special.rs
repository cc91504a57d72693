//! Normal distribution functions, log-gamma and log-sum-exp.
//!
//! `erfc` and `lgamma` come from `libm` (a port of the FreeBSD msun routines,
//! accurate to about one ulp). The standard normal quantile is Wichura's
//! AS241 (PPND16) followed by one Halley refinement step against the
//! `erfc`-based CDF.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Floor applied to log-probabilities so that MH ratios stay finite.
pub const LOG_FLOOR: f64 = -700.0;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function, `1 - norm_cdf(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(lo < Z <= hi)` for a standard normal `Z`, evaluated in whichever tail
/// keeps both terms small. Infinite bounds are allowed.
#[inline]
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    let p = if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    };
    p.max(0.0)
}

/// Natural log of a probability, floored at [`LOG_FLOOR`].
#[inline]
pub fn clamped_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// Standard normal quantile function. Returns `-inf`/`+inf` at 0 and 1 and
/// NaN outside `[0, 1]`.
pub fn norm_ppf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppnd16(p);
    // Halley step on the tail that carries the precision.
    let err = if p < 0.5 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_sf(x)
    };
    let dens = norm_pdf(x);
    if dens <= 0.0 || !err.is_finite() {
        return x;
    }
    let u = err / dens;
    x - u / (1.0 + 0.5 * x * u)
}

fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Natural log of |Γ(x)|.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `ln Σ exp(v)`; `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights into probabilities via log-sum-exp.
pub fn softmax_in_place(values: &mut [f64]) {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_reference_values() {
        // 40-digit reference values.
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!((norm_sf(8.0) / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn interval_is_accurate_in_both_tails() {
        let upper = norm_interval(9.0, 10.0);
        let expected = 1.128_512_207_423_599_1e-19;
        assert!((upper / expected - 1.0).abs() < 1e-12);
        let lower = norm_interval(-10.0, -9.0);
        assert!((lower / expected - 1.0).abs() < 1e-12);
        assert_eq!(norm_interval(f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn ppf_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.0125, 0.05, 0.3, 0.5, 0.75, 0.95, 0.999_999] {
            let x = norm_ppf(p);
            let back = if p < 0.5 { norm_cdf(x) } else { 1.0 - norm_sf(x) };
            // Relative conditioning of the cdf grows like abs(x) in the tails.
            let tol = 1e-14 * (1.0 + x.abs()).powi(2);
            assert!((back / p - 1.0).abs() < tol, "p={p} x={x} back={back}");
        }
        // Half of the equal-spacing cutoff width.
        assert!((norm_ppf(0.75) - 0.674_489_750_196_081_7).abs() < 1e-15);
        assert_eq!(norm_ppf(0.5), 0.0);
        assert!(norm_ppf(1.5).is_nan());
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let mut w = [1.0, 2.0, 3.0];
        softmax_in_place(&mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamped_ln_floors() {
        assert_eq!(clamped_ln(0.0), LOG_FLOOR);
        assert_eq!(clamped_ln(1e-320), LOG_FLOOR);
        assert!((clamped_ln(0.5) - 0.5f64.ln()).abs() < 1e-16);
    }
}
