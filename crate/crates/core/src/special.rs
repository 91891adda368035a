//! Log-gamma, log-beta and the regularized incomplete beta function.
//!
//! Everything downstream (conjugate summaries, the marginal posterior of the
//! power parameter, the scaling constant of the modified power prior) is
//! expressed through these three functions, always in log space.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::BetaParams;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 100_000;

/// Natural log of Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("log_gamma requires finite x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// log B(a, b) = log Γ(a) + log Γ(b) − log Γ(a + b).
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
        return Err(Error::Domain(format!(
            "log_beta requires finite positive arguments, got ({a}, {b})"
        )));
    }
    Ok(ln_beta_unchecked(a, b))
}

#[inline]
pub(crate) fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    // summing the two single-argument terms first keeps the result symmetric
    (ln_gamma_unchecked(a) + ln_gamma_unchecked(b)) - ln_gamma_unchecked(a + b)
}

/// Regularized incomplete beta I_x(α, β): the CDF of Beta(α, β) at `x`.
pub fn beta_cdf(params: BetaParams, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta_cdf requires x in [0, 1], got {x}")));
    }
    Ok(beta_cdf_unchecked(params.alpha(), params.beta(), x))
}

pub(crate) fn beta_cdf_unchecked(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta_unchecked(a, b);
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front - a.ln()).exp() * continued_fraction(a, b, x)
    } else {
        1.0 - (ln_front - b.ln()).exp() * continued_fraction(b, a, 1.0 - x)
    };
    value.clamp(0.0, 1.0)
}

/// Modified Lentz evaluation of the continued fraction for I_x(a, b).
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

fn ln_beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta_unchecked(a, b)
}

/// Inverse of [`beta_cdf`] in `x`: the `q`-quantile of Beta(α, β).
///
/// Newton steps safeguarded by a shrinking bisection bracket, so the result
/// is monotone in `q` and never leaves (0, 1).
pub fn beta_quantile(params: BetaParams, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("beta_quantile requires q in (0, 1), got {q}")));
    }
    let (a, b) = (params.alpha(), params.beta());
    // work in the lower tail, where small CDF values keep full relative precision
    if q > 0.5 {
        return Ok(1.0 - lower_quantile(b, a, 1.0 - q));
    }
    Ok(lower_quantile(a, b, q))
}

fn lower_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = initial_quantile_guess(a, b, q);

    let ln_q = q.ln();
    for _ in 0..400 {
        let c = beta_cdf_unchecked(a, b, x);
        let f = c - q;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        // Newton on ln I_x, which is close to linear in deep power-law tails
        let ln_pdf = ln_beta_pdf(a, b, x);
        let newton = if c > 0.0 {
            x - (c.ln() - ln_q) * (c.ln() - ln_pdf).exp()
        } else {
            f64::NAN
        };
        if newton.is_finite() && newton > lo && newton < hi {
            if (newton - x).abs() <= 4.0 * f64::EPSILON * x {
                return newton;
            }
            x = newton;
        } else {
            x = 0.5 * (lo + hi);
        }
    }
    x
}

fn initial_quantile_guess(a: f64, b: f64, q: f64) -> f64 {
    let mean = a / (a + b);
    let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
    // crude normal approximation, pulled inside the unit interval
    let z = if q < 0.5 { -1.0 } else { 1.0 } * (-2.0 * q.min(1.0 - q).ln()).sqrt() * 0.8;
    (mean + z * sd).clamp(1e-6, 1.0 - 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn log_gamma_trivial_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!((log_gamma(0.5).unwrap() - PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn log_gamma_rejects_bad_input() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(log_gamma(x), Err(Error::Domain(_))), "{x}");
        }
    }

    #[test]
    fn log_beta_trivial_values() {
        assert!(log_beta(1.0, 1.0).unwrap().abs() < 1e-14);
        assert!((log_beta(2.0, 3.0).unwrap() - (1.0f64 / 12.0).ln()).abs() < 1e-12);
        assert!(log_beta(0.0, 1.0).is_err());
        assert!(log_beta(1.0, -2.0).is_err());
    }

    #[test]
    fn log_beta_integer_arguments_match_factorial_sums() {
        // B(a, b) = (a-1)!(b-1)!/(a+b-1)!, summed term by term in log space
        let ln_fact = |n: u32| (2..=n).map(|k| (k as f64).ln()).sum::<f64>();
        for (a, b) in [(76u32, 58u32), (3, 200), (130, 113)] {
            let oracle = ln_fact(a - 1) + ln_fact(b - 1) - ln_fact(a + b - 1);
            let got = log_beta(a as f64, b as f64).unwrap();
            assert!((got - oracle).abs() < 1e-9, "({a},{b}): {got} vs {oracle}");
        }
    }

    #[test]
    fn beta_cdf_trivial_values() {
        assert!((beta_cdf(bp(1.0, 1.0), 0.37).unwrap() - 0.37).abs() < 1e-12);
        assert!((beta_cdf(bp(2.0, 2.0), 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(beta_cdf(bp(3.0, 4.0), 0.0).unwrap(), 0.0);
        assert_eq!(beta_cdf(bp(3.0, 4.0), 1.0).unwrap(), 1.0);
        assert!(beta_cdf(bp(3.0, 4.0), 1.5).is_err());
        assert!(beta_cdf(bp(3.0, 4.0), -0.1).is_err());
    }

    #[test]
    fn beta_quantile_trivial_and_errors() {
        assert!((beta_quantile(bp(1.0, 1.0), 0.975).unwrap() - 0.975).abs() < 1e-9);
        assert!(beta_quantile(bp(2.0, 2.0), 0.0).is_err());
        assert!(beta_quantile(bp(2.0, 2.0), 1.0).is_err());
        assert!(beta_quantile(bp(2.0, 2.0), f64::NAN).is_err());
    }

    #[test]
    fn log_beta_is_symmetric_bitwise() {
        for (a, b) in [(0.3, 7.0), (76.0, 58.0), (1e-3, 1e5), (2.5, 2.5)] {
            assert_eq!(log_beta(a, b).unwrap(), log_beta(b, a).unwrap());
        }
    }
}
