//! Floating-point building blocks shared by the estimators.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// Correctly rounded summation.
///
/// Every finite double is an integer multiple of `2^-1074`, so the running
/// total is kept exactly as a fixed-point integer split into 32-bit chunks
/// (with 32 bits of carry headroom each). The result is the exact sum of the
/// inputs rounded once, so it does not depend on the order in which terms
/// are added. Every estimator in the crate accumulates through this type,
/// which is what makes the results permutation invariant and lets selection
/// replace sorting.
#[derive(Debug, Clone)]
pub struct ExactSum {
    chunks: [i64; CHUNKS],
    pending: u32,
    special: f64,
}

const CHUNKS: usize = 67;
const CARRY_EVERY: u32 = 1 << 30;

impl Default for ExactSum {
    fn default() -> Self {
        ExactSum {
            chunks: [0; CHUNKS],
            pending: 0,
            special: 0.0,
        }
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as usize;
        let mut mant = bits & ((1u64 << 52) - 1);
        if biased != 0 {
            mant |= 1u64 << 52;
        }
        if mant == 0 {
            return;
        }
        // x = mant * 2^(pos - 1074)
        let pos = biased.max(1) - 1;
        let idx = pos / 32;
        let wide = (mant as u128) << (pos % 32);
        let parts = [
            (wide & 0xffff_ffff) as i64,
            ((wide >> 32) & 0xffff_ffff) as i64,
            (wide >> 64) as i64,
        ];
        if x < 0.0 {
            for (c, p) in self.chunks[idx..idx + 3].iter_mut().zip(parts) {
                *c -= p;
            }
        } else {
            for (c, p) in self.chunks[idx..idx + 3].iter_mut().zip(parts) {
                *c += p;
            }
        }
        self.pending += 1;
        if self.pending == CARRY_EVERY {
            self.carry();
        }
    }

    fn carry(&mut self) {
        for k in 0..CHUNKS - 1 {
            let c = self.chunks[k];
            let hi = c >> 32;
            self.chunks[k] = c - (hi << 32);
            self.chunks[k + 1] += hi;
        }
        self.pending = 0;
    }

    /// Adds the exact product `a * b` (error-free via fused multiply-add).
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.add(e);
    }

    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        // Each chunk splits into two terms that are exact doubles; the
        // partials reduction rounds their sum once.
        let mut partials: Vec<f64> = Vec::new();
        for (k, &c) in self.chunks.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let hi = c >> 32;
            let lo = c - (hi << 32);
            let scale = 32 * k as i32 - 1074;
            for (v, e) in [(lo, scale), (hi, scale + 32)] {
                if v != 0 {
                    partials_add(&mut partials, libm::scalbn(v as f64, e));
                }
            }
        }
        let v = partials_value(&partials);
        if v.is_nan() {
            // the exact total overflows; its sign is that of the top chunk
            let top = self
                .chunks
                .iter()
                .rev()
                .find(|&&c| c != 0)
                .copied()
                .unwrap_or(0);
            return f64::INFINITY.copysign(top as f64);
        }
        v
    }
}

/// Shewchuk's non-overlapping partials.
fn partials_add(partials: &mut Vec<f64>, mut x: f64) {
    let mut i = 0;
    for j in 0..partials.len() {
        let mut y = partials[j];
        if x.abs() < y.abs() {
            std::mem::swap(&mut x, &mut y);
        }
        let hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            partials[i] = lo;
            i += 1;
        }
        x = hi;
    }
    partials.truncate(i);
    partials.push(x);
}

fn partials_value(p: &[f64]) -> f64 {
    let mut n = p.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = p[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = p[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // round-half-even correction when the remaining partials push past a tie
    if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        s.extend(iter);
        s
    }
}

/// Correctly rounded sum of a sequence.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<ExactSum>().value()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // one Newton step on the smaller tail
    let (tail, sign) = if z < 0.0 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let f = normal_cdf(sign * z) - tail;
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        z - sign * f / density
    } else {
        z
    }
}
