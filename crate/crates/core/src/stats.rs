//! Regularized incomplete gamma function and the chi-square quantile.
//!
//! Control limits need chi-square quantiles at fractional degrees of freedom,
//! so the quantile is found by inverting `P(dof/2, x/2)` numerically.

use crate::error::{HifError, Result};

/// Target accuracy of [`chi2_quantile`] in probability.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`.
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Chi-square CDF with (possibly fractional) `dof` degrees of freedom.
pub fn chi2_cdf(dof: f64, x: f64) -> f64 {
    regularized_gamma_p(0.5 * dof, 0.5 * x)
}

fn chi2_pdf(dof: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Quantile `x` with `P(dof/2, x/2) = p`.
///
/// Newton steps on the CDF, safeguarded by a bisection bracket, stopping once
/// the CDF residual is below [`QUANTILE_TOLERANCE`].
pub fn chi2_quantile(dof: f64, p: f64) -> Result<f64> {
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(HifError::InvalidInput(format!(
            "chi-square degrees of freedom must be positive, got {dof}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(HifError::InvalidInput(format!(
            "chi-square probability must lie in (0, 1), got {p}"
        )));
    }

    let mut lo = 0.0;
    let mut hi = dof.max(1.0);
    while chi2_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(HifError::InvalidInput(format!(
                "chi-square quantile ({dof}, {p}) is out of range"
            )));
        }
    }

    // positive lower end so that tiny quantiles are reached by geometric bisection
    if lo == 0.0 {
        let mut l = hi;
        while l > 1e-300 && chi2_cdf(dof, l) > p {
            hi = l;
            l *= 1e-10;
        }
        lo = if chi2_cdf(dof, l) <= p { l } else { 0.0 };
    }

    let mut x = wilson_hilferty(dof, p).clamp(lo, hi);
    if !(x > lo && x < hi) {
        x = midpoint(lo, hi);
    }
    for _ in 0..1000 {
        let f = chi2_cdf(dof, x) - p;
        if f.abs() < QUANTILE_TOLERANCE * 1e-2 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = chi2_pdf(dof, x);
        let newton = if slope > 0.0 { x - f / slope } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            midpoint(lo, hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let residual = (chi2_cdf(dof, x) - p).abs();
    if residual < QUANTILE_TOLERANCE {
        Ok(x)
    } else {
        Err(HifError::InvalidInput(format!(
            "chi-square quantile ({dof}, {p}) did not converge (residual {residual:e})"
        )))
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi > 4.0 * lo {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

fn wilson_hilferty(dof: f64, p: f64) -> f64 {
    let z = normal_quantile_approx(p);
    let c = 2.0 / (9.0 * dof);
    let t = 1.0 - c + z * c.sqrt();
    (dof * t * t * t).max(1e-8)
}

/// Rough normal quantile (Abramowitz-Stegun 26.2.23), only used as a starting point.
fn normal_quantile_approx(p: f64) -> f64 {
    let q = if p < 0.5 { p } else { 1.0 - p };
    let t = (-2.0 * q.ln()).sqrt();
    let z = t - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
        / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t);
    if p < 0.5 {
        -z
    } else {
        z
    }
}
