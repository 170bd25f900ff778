//! Trimmed means, winsorized variances and the variance/covariance
//! estimators of trimmed means.
//!
//! Trimming is count based: exactly `g = floor(gamma * n)` order-statistic
//! positions are removed from each tail, regardless of ties. Order statistics
//! are located by selection rather than a full sort; since every sum goes
//! through [`ExactSum`], the results are bit-identical to the sort-based
//! definition and invariant under any permutation of the input.

use crate::error::{Error, Result};
use crate::numeric::ExactSum;
use crate::sample::TrimSpec;
use serde::{Deserialize, Serialize};

/// Aggregate statistics of one trimmed sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedMoments {
    pub n: usize,
    /// Observations trimmed from each tail.
    pub g: usize,
    /// Effective sample size `n - 2g`.
    pub h: usize,
    pub trimmed_mean: f64,
    pub winsorized_mean: f64,
    /// `s_w^2`, normalised by `n - 1`.
    pub winsorized_variance: f64,
    /// `(n - 1) / (h - 1) * s_w^2 / h`.
    pub var_of_trimmed_mean: f64,
    /// Order statistic `Y_(g+1)`, the lower winsorizing bound.
    pub lower: f64,
    /// Order statistic `Y_(n-g)`, the upper winsorizing bound.
    pub upper: f64,
    /// Set when `s_w^2 == 0`: every retained observation has the same value.
    pub zero_variance: bool,
}

impl TrimmedMoments {
    pub fn winsorize_value(&self, y: f64) -> f64 {
        y.clamp(self.lower, self.upper)
    }
}

/// Estimated covariance between two trimmed means of paired samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedCovariance {
    pub cov_of_trimmed_means: f64,
    pub h: usize,
}

fn counts(n: usize, spec: TrimSpec) -> (usize, usize) {
    // The small slack absorbs representation error in decimal gammas such
    // as 0.29 * 100 = 28.999999999999996.
    let g = (spec.gamma() * n as f64 + 1e-9).floor() as usize;
    let g = g.min(n.saturating_sub(1) / 2);
    (g, n - 2 * g)
}

/// `(g, h)` for a sample of size `n`; fails when fewer than two observations survive.
pub fn trim_counts(n: usize, spec: TrimSpec) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let (g, h) = counts(n, spec);
    if h < 2 {
        return Err(Error::DegenerateTrim { n, g, h });
    }
    Ok((g, h))
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// The `h` retained observations (in arbitrary order) and the two bounds.
struct Retained<'a> {
    middle: std::borrow::Cow<'a, [f64]>,
    g: usize,
    lower: f64,
    upper: f64,
}

fn retain(values: &[f64], spec: TrimSpec) -> Retained<'_> {
    let n = values.len();
    let (g, h) = counts(n, spec);
    if g == 0 {
        let (lower, upper) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        return Retained {
            middle: values.into(),
            g,
            lower,
            upper,
        };
    }
    let mut buf = values.to_vec();
    let (_, &mut lower, right) = buf.select_nth_unstable_by(g, f64::total_cmp);
    let upper = if h == 1 {
        lower
    } else {
        *right.select_nth_unstable_by(h - 2, f64::total_cmp).1
    };
    // buf[g..n-g] now holds exactly the order statistics g+1 ..= n-g.
    buf.truncate(n - g);
    buf.drain(..g);
    Retained {
        middle: buf.into(),
        g,
        lower,
        upper,
    }
}

fn mean_of_retained(r: &Retained<'_>) -> f64 {
    if r.lower == r.upper {
        r.lower
    } else {
        r.middle.iter().copied().collect::<ExactSum>().value() / r.middle.len() as f64
    }
}

/// Mean of the order statistics `Y_(g+1) ..= Y_(n-g)`.
pub fn trimmed_mean(values: &[f64], spec: TrimSpec) -> Result<f64> {
    check_finite(values)?;
    Ok(mean_of_retained(&retain(values, spec)))
}

/// Clamps every value to `[Y_(g+1), Y_(n-g)]`, preserving subject order.
pub fn winsorize(values: &[f64], spec: TrimSpec) -> Result<Vec<f64>> {
    check_finite(values)?;
    let r = retain(values, spec);
    Ok(values.iter().map(|v| v.clamp(r.lower, r.upper)).collect())
}

pub fn trimmed_moments(values: &[f64], spec: TrimSpec) -> Result<TrimmedMoments> {
    check_finite(values)?;
    let n = values.len();
    let (g, h) = trim_counts(n, spec)?;
    let r = retain(values, spec);
    debug_assert_eq!(r.g, g);
    let trimmed_mean = mean_of_retained(&r);
    let gf = g as f64;

    let winsorized_mean = if r.lower == r.upper {
        r.lower
    } else {
        let mut sum: ExactSum = r.middle.iter().copied().collect();
        sum.add_product(gf, r.lower);
        sum.add_product(gf, r.upper);
        sum.value() / n as f64
    };

    let mut ss: ExactSum = r
        .middle
        .iter()
        .map(|&y| {
            let d = y - winsorized_mean;
            d * d
        })
        .collect();
    let dl = r.lower - winsorized_mean;
    let du = r.upper - winsorized_mean;
    ss.add_product(gf, dl * dl);
    ss.add_product(gf, du * du);
    let winsorized_variance = ss.value() / (n - 1) as f64;

    let var_of_trimmed_mean = (n - 1) as f64 / (h - 1) as f64 * winsorized_variance / h as f64;

    Ok(TrimmedMoments {
        n,
        g,
        h,
        trimmed_mean,
        winsorized_mean,
        winsorized_variance,
        var_of_trimmed_mean,
        lower: r.lower,
        upper: r.upper,
        zero_variance: winsorized_variance == 0.0,
    })
}

/// Covariance of the trimmed means of two subject-aligned samples, each
/// winsorized on its own order statistics.
pub fn trimmed_covariance(a: &[f64], b: &[f64], spec: TrimSpec) -> Result<TrimmedCovariance> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ma = trimmed_moments(a, spec)?;
    let mb = trimmed_moments(b, spec)?;
    covariance_from_moments(a, &ma, b, &mb)
}

/// Same as [`trimmed_covariance`] but reuses already computed moments.
pub fn covariance_from_moments(
    a: &[f64],
    ma: &TrimmedMoments,
    b: &[f64],
    mb: &TrimmedMoments,
) -> Result<TrimmedCovariance> {
    if a.len() != b.len() || ma.n != a.len() || mb.n != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let h = ma.h;
    let sum: ExactSum = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            (ma.winsorize_value(x) - ma.winsorized_mean)
                * (mb.winsorize_value(y) - mb.winsorized_mean)
        })
        .collect();
    Ok(TrimmedCovariance {
        cov_of_trimmed_means: sum.value() / (h as f64 * (h - 1) as f64),
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_to_ten() -> Vec<f64> {
        (1..=10).map(f64::from).collect()
    }

    fn spec(g: f64) -> TrimSpec {
        TrimSpec::new(g).unwrap()
    }

    #[test]
    fn trim_count_examples() {
        assert_eq!(trim_counts(10, spec(0.1)), Ok((1, 8)));
        assert_eq!(trim_counts(100_000, spec(0.01)), Ok((1000, 98_000)));
        assert_eq!(trim_counts(7, spec(0.1)), Ok((0, 7)));
        assert_eq!(trim_counts(100, spec(0.29)), Ok((29, 42)));
        assert_eq!(
            trim_counts(3, spec(0.34)),
            Err(Error::DegenerateTrim { n: 3, g: 1, h: 1 })
        );
        assert_eq!(
            trim_counts(1, TrimSpec::NONE),
            Err(Error::DegenerateTrim { n: 1, g: 0, h: 1 })
        );
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(trimmed_mean(&one_to_ten(), spec(0.1)).unwrap(), 5.5);
        assert_eq!(trimmed_mean(&[5.0, 5.0, 5.0], spec(0.1)).unwrap(), 5.0);
        assert_eq!(trimmed_mean(&one_to_ten(), TrimSpec::NONE).unwrap(), 5.5);
        assert_eq!(trimmed_mean(&[3.0, 1.0, 2.0], spec(0.34)).unwrap(), 2.0);
    }

    #[test]
    fn winsorize_examples() {
        assert_eq!(
            winsorize(&one_to_ten(), spec(0.1)).unwrap(),
            vec![2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.0]
        );
        let v = vec![4.0, -1.0, 9.5, 0.25];
        assert_eq!(winsorize(&v, TrimSpec::NONE).unwrap(), v);
        assert_eq!(
            winsorize(&[3.0, 1.0, 2.0], spec(0.34)).unwrap(),
            vec![2.0, 2.0, 2.0]
        );
        // subject order is preserved
        assert_eq!(
            winsorize(
                &[10.0, 1.0, 5.0, 2.0, 9.0, 3.0, 8.0, 4.0, 7.0, 6.0],
                spec(0.1)
            )
            .unwrap(),
            vec![9.0, 2.0, 5.0, 2.0, 9.0, 3.0, 8.0, 4.0, 7.0, 6.0]
        );
    }

    #[test]
    fn moments_of_one_to_ten() {
        let m = trimmed_moments(&one_to_ten(), spec(0.1)).unwrap();
        assert_eq!((m.n, m.g, m.h), (10, 1, 8));
        assert_eq!(m.winsorized_mean, 5.5);
        // sum of squared winsorized deviations is 66.5
        assert_relative_eq!(m.winsorized_variance * 9.0, 66.5, max_relative = 1e-15);
        assert_relative_eq!(m.var_of_trimmed_mean, 1.1875, max_relative = 1e-15);
        assert_eq!(
            m.var_of_trimmed_mean,
            9.0 / 7.0 * m.winsorized_variance / 8.0
        );
        assert!(!m.zero_variance);
    }

    #[test]
    fn untrimmed_variance_is_sample_variance_over_n() {
        let v = vec![2.5, -1.0, 7.0, 3.25, 0.0, 11.0];
        let m = trimmed_moments(&v, TrimSpec::NONE).unwrap();
        let mean = v.iter().sum::<f64>() / 6.0;
        let s2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert_relative_eq!(m.trimmed_mean, mean, max_relative = 1e-15);
        assert_relative_eq!(m.var_of_trimmed_mean, s2 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn all_zero_sample_flags_zero_variance() {
        let m = trimmed_moments(&vec![0.0; 100], spec(0.01)).unwrap();
        assert_eq!(m.trimmed_mean, 0.0);
        assert_eq!(m.winsorized_variance, 0.0);
        assert!(m.zero_variance);
    }

    #[test]
    fn covariance_examples() {
        let a = one_to_ten();
        let same = trimmed_covariance(&a, &a, spec(0.1)).unwrap();
        assert_eq!(same.h, 8);
        assert_relative_eq!(same.cov_of_trimmed_means, 1.1875, max_relative = 1e-15);

        let constant = trimmed_covariance(&a, &[3.0; 10], spec(0.1)).unwrap();
        assert_eq!(constant.cov_of_trimmed_means, 0.0);

        let reversed: Vec<f64> = a.iter().rev().copied().collect();
        let anti = trimmed_covariance(&a, &reversed, spec(0.1)).unwrap();
        assert_relative_eq!(anti.cov_of_trimmed_means, -1.1875, max_relative = 1e-15);

        assert_eq!(
            trimmed_covariance(&a, &a[..9], spec(0.1)),
            Err(Error::LengthMismatch { left: 10, right: 9 })
        );
    }

    #[test]
    fn ties_at_cut_are_trimmed_by_position() {
        // g = 1: only one of the two 1s and one of the two 9s is removed.
        let v = [1.0, 1.0, 5.0, 9.0, 9.0, 2.0, 3.0, 4.0, 6.0, 7.0];
        let m = trimmed_moments(&v, spec(0.1)).unwrap();
        assert_eq!((m.lower, m.upper), (1.0, 9.0));
        assert_eq!(
            m.trimmed_mean,
            (1.0 + 5.0 + 9.0 + 2.0 + 3.0 + 4.0 + 6.0 + 7.0) / 8.0
        );
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            trimmed_mean(&[1.0, f64::NAN], TrimSpec::NONE),
            Err(Error::NonFinite { index: 1 })
        );
    }
}
