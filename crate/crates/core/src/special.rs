//! Student t distribution through the regularized incomplete beta function.

use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

const CF_EPS: f64 = 1e-15;
const CF_MAX_ITER: usize = 200_000;
const FPMIN: f64 = 1e-300;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Gamma(x) - ((x - 0.5) ln x - x + ln sqrt(2 pi))` for `x >= 10`.
fn stirling_correction(x: f64) -> f64 {
    // Bernoulli-number series; the x^-13 term is below 1e-15 at x = 10.
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let x2 = 1.0 / (x * x);
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * x2 + c;
    }
    acc / x
}

/// `ln B(a, b)`, avoiding the cancellation of three large log-gammas.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let p = a.min(b);
    let q = a.max(b);
    if p >= 10.0 {
        let corr = stirling_correction(p) + stirling_correction(q) - stirling_correction(p + q);
        -0.5 * q.ln()
            + LN_SQRT_2PI
            + corr
            + (p - 0.5) * (p / (p + q)).ln()
            + q * (-p / (p + q)).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_correction(q) - stirling_correction(p + q);
        ln_gamma(p) + corr + p - p * (p + q).ln() + (q - 0.5) * (-p / (p + q)).ln_1p()
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return h;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, with `y = 1 - x` supplied
/// separately so callers can keep full precision near `x = 1`.
pub fn beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_x = if x > 0.5 { (-y).ln_1p() } else { x.ln() };
    let ln_y = if y > 0.5 { (-x).ln_1p() } else { y.ln() };
    let front = (a * ln_x + b * ln_y - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && !df.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "degrees of freedom must be positive, got {df}"
        )))
    }
}

/// `P(T > |t|)` for `T ~ t(df)`.
fn upper_tail(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    if df.is_infinite() {
        return crate::numeric::normal_cdf(-t.abs());
    }
    let t2 = t * t;
    let denom = df + t2;
    0.5 * beta_reg(0.5 * df, 0.5, df / denom, t2 / denom)
}

/// Student t cumulative distribution function.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() {
        return Err(Error::Domain("t_cdf of NaN".into()));
    }
    let tail = upper_tail(x, df);
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided p-value `P(|T| >= |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(Error::Domain("p-value of NaN statistic".into()));
    }
    Ok((2.0 * upper_tail(t, df)).min(1.0))
}

fn ln_t_density(t: f64, df: f64) -> f64 {
    -0.5 * df.ln() - ln_beta(0.5 * df, 0.5) - 0.5 * (df + 1.0) * (t * t / df).ln_1p()
}

/// The `q >= 0` with `P(T > q) = tail`, for `tail` in (0, 0.5].
pub fn t_upper_quantile(tail: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(tail > 0.0 && tail <= 0.5) {
        return Err(Error::Domain(format!(
            "upper tail probability must be in (0, 0.5], got {tail}"
        )));
    }
    if tail == 0.5 {
        return Ok(0.0);
    }
    if df.is_infinite() {
        return Ok(-crate::numeric::normal_quantile(tail));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while upper_tail(hi, df) > tail {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Domain("t quantile out of range".into()));
        }
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = upper_tail(q, df) - tail;
        if f > 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        // Newton step on the tail, d/dq P(T > q) = -density(q)
        let step = f / ln_t_density(q, df).exp();
        let mut next = q + step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - q).abs() <= 1e-13 * q.max(1.0) || hi - lo <= 1e-13 * hi.max(1.0) {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

/// Student t quantile function.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "probability must be in (0, 1), got {p}"
        )));
    }
    if p >= 0.5 {
        t_upper_quantile(1.0 - p, df)
    } else {
        Ok(-t_upper_quantile(p, df)?)
    }
}
