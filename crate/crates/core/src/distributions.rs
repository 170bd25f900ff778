//! Scenario marginals, Gaussian-copula pair generation and population
//! trimmed means.

use crate::error::{Error, Result};
use crate::numeric::{normal_cdf, normal_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    Lognormal,
    ZeroInflatedLognormal,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Lognormal => "lognormal",
            Family::ZeroInflatedLognormal => "zero_inflated_lognormal",
        }
    }
}

/// A control distribution, the copula correlation with the pre-experiment
/// covariate, and the additive shift of the treatment population mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: Family,
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub zero_fraction: f64,
    pub spearman_rho: f64,
    #[serde(default)]
    pub effect: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.spearman_rho > -1.0 && self.spearman_rho < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "spearman_rho must lie in (-1, 1), got {}",
                self.spearman_rho
            )));
        }
        if !self.effect.is_finite() {
            return Err(Error::InvalidScenario("effect must be finite".into()));
        }
        if self.family != Family::ZeroInflatedLognormal && self.zero_fraction != 0.0 {
            return Err(Error::InvalidScenario(format!(
                "zero_fraction is only meaningful for zero_inflated_lognormal, got {}",
                self.zero_fraction
            )));
        }
        self.control_marginal()?;
        self.treatment_marginal()?;
        Ok(())
    }

    pub fn control_marginal(&self) -> Result<MarginalParams> {
        solve_marginal(self.family, self.mean, self.sd, self.zero_fraction)
    }

    /// The control family re-parameterised to mean `mean + effect`, with the
    /// same standard deviation and zero fraction.
    pub fn treatment_marginal(&self) -> Result<MarginalParams> {
        solve_marginal(
            self.family,
            self.mean + self.effect,
            self.sd,
            self.zero_fraction,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginalParams {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `exp(N(mu, sigma^2))`.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Zero with probability `zero_fraction`, otherwise lognormal.
    ZeroInflatedLognormal {
        zero_fraction: f64,
        mu: f64,
        sigma: f64,
    },
}

fn lognormal_from_moments(mean: f64, sd: f64) -> (f64, f64) {
    let cv = sd / mean;
    let s2 = (cv * cv).ln_1p();
    (mean.ln() - 0.5 * s2, s2.sqrt())
}

/// Moment-matches a family to the requested mean and standard deviation.
pub fn solve_marginal(
    family: Family,
    mean: f64,
    sd: f64,
    zero_fraction: f64,
) -> Result<MarginalParams> {
    if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
        return Err(Error::InfeasibleMoments(format!("mean {mean}, sd {sd}")));
    }
    match family {
        Family::Normal => Ok(MarginalParams::Normal { mean, sd }),
        Family::Lognormal => {
            if mean <= 0.0 {
                return Err(Error::InfeasibleMoments(format!(
                    "lognormal mean must be positive, got {mean}"
                )));
            }
            let (mu, sigma) = lognormal_from_moments(mean, sd);
            Ok(MarginalParams::Lognormal { mu, sigma })
        }
        Family::ZeroInflatedLognormal => {
            if !(0.0..1.0).contains(&zero_fraction) {
                return Err(Error::InfeasibleMoments(format!(
                    "zero fraction {zero_fraction} outside [0, 1)"
                )));
            }
            if mean <= 0.0 {
                return Err(Error::InfeasibleMoments(format!(
                    "mean must be positive, got {mean}"
                )));
            }
            let keep = 1.0 - zero_fraction;
            let m_nz = mean / keep;
            let var_nz = (mean * mean + sd * sd) / keep - m_nz * m_nz;
            if var_nz.is_nan() || var_nz <= 0.0 {
                return Err(Error::InfeasibleMoments(format!(
                    "non-zero component variance {var_nz} is not positive"
                )));
            }
            let (mu, sigma) = lognormal_from_moments(m_nz, var_nz.sqrt());
            Ok(MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            })
        }
    }
}

impl MarginalParams {
    pub fn mean(&self) -> f64 {
        match *self {
            MarginalParams::Normal { mean, .. } => mean,
            MarginalParams::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            } => (1.0 - zero_fraction) * (mu + 0.5 * sigma * sigma).exp(),
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            MarginalParams::Normal { sd, .. } => sd,
            MarginalParams::Lognormal { mu, sigma } => {
                (mu + 0.5 * sigma * sigma).exp() * (sigma * sigma).exp_m1().sqrt()
            }
            MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            } => {
                let keep = 1.0 - zero_fraction;
                // E[X^2] - E[X]^2 = keep * m^2 * (e^{s^2} - keep), m = e^{mu + s^2/2}
                let m = (mu + 0.5 * sigma * sigma).exp();
                m * (keep * ((sigma * sigma).exp() - keep)).sqrt()
            }
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "quantile argument must lie in (0, 1), got {u}"
            )));
        }
        Ok(match *self {
            MarginalParams::Normal { mean, sd } => mean + sd * normal_quantile(u),
            MarginalParams::Lognormal { mu, sigma } => (mu + sigma * normal_quantile(u)).exp(),
            MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            } => {
                if u <= zero_fraction {
                    0.0
                } else {
                    let v = (u - zero_fraction) / (1.0 - zero_fraction);
                    (mu + sigma * normal_quantile(v)).exp()
                }
            }
        })
    }

    /// `quantile(Phi(z))`, evaluated without round-tripping through `u`
    /// where the family allows it.
    pub fn from_standard_normal(&self, z: f64) -> f64 {
        match *self {
            MarginalParams::Normal { mean, sd } => mean + sd * z,
            MarginalParams::Lognormal { mu, sigma } => (mu + sigma * z).exp(),
            MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            } => {
                let keep = 1.0 - zero_fraction;
                let upper = normal_cdf(-z);
                if upper >= keep {
                    0.0
                } else {
                    (mu - sigma * normal_quantile(upper / keep)).exp()
                }
            }
        }
    }

    /// `E[X | x_gamma <= X <= x_(1-gamma)]`, i.e. the integral of the
    /// quantile function over `[gamma, 1 - gamma]` divided by `1 - 2 gamma`.
    pub fn population_trimmed_mean(&self, gamma: f64) -> Result<f64> {
        if !(0.0..0.5).contains(&gamma) {
            return Err(Error::InvalidGamma(gamma));
        }
        let z = |u: f64| {
            if u <= 0.0 {
                f64::NEG_INFINITY
            } else {
                normal_quantile(u)
            }
        };
        let z_hi = |u: f64| {
            if u >= 1.0 {
                f64::INFINITY
            } else {
                normal_quantile(u)
            }
        };
        match *self {
            // symmetric trimming of a symmetric law
            MarginalParams::Normal { mean, .. } => Ok(mean),
            MarginalParams::Lognormal { mu, sigma } => {
                let mass = lognormal_partial_expectation(mu, sigma, z(gamma), z_hi(1.0 - gamma))?;
                Ok(mass / (1.0 - 2.0 * gamma))
            }
            MarginalParams::ZeroInflatedLognormal {
                zero_fraction,
                mu,
                sigma,
            } => {
                let keep = 1.0 - zero_fraction;
                let u_hi = 1.0 - gamma;
                if u_hi <= zero_fraction {
                    return Ok(0.0);
                }
                let u_lo = gamma.max(zero_fraction);
                let v_lo = (u_lo - zero_fraction) / keep;
                let v_hi = if gamma == 0.0 {
                    1.0
                } else {
                    gamma_upper(gamma, keep)
                };
                let mass = keep * lognormal_partial_expectation(mu, sigma, z(v_lo), z_hi(v_hi))?;
                Ok(mass / (1.0 - 2.0 * gamma))
            }
        }
    }
}

// (1 - gamma - p0) / (1 - p0), written as 1 - gamma / keep for precision.
fn gamma_upper(gamma: f64, keep: f64) -> f64 {
    1.0 - gamma / keep
}

/// `E[exp(mu + sigma Z); a <= Z <= b]` by adaptive quadrature in `z`.
fn lognormal_partial_expectation(mu: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    // The integrand is exp(mu + sigma^2 / 2) * phi(z - sigma); beyond 40
    // standard deviations of that bump it is below double precision.
    let lo = a.max(sigma - 40.0);
    let hi = b.min(sigma + 40.0);
    if hi <= lo {
        return Ok(0.0);
    }
    let f = |z: f64| (mu + sigma * z - 0.5 * z * z).exp() / (2.0 * PI).sqrt();
    integrate(&f, lo, hi, 1e-12)
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (G7/K15) quadrature to a relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    let (total, err) = gauss_kronrod(f, a, b);
    let mut intervals = vec![(a, b, total, err)];
    loop {
        let value: f64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !value.is_finite() {
            return Err(Error::IntegrationFailure(format!(
                "non-finite integral over [{a}, {b}]"
            )));
        }
        if error <= rel_tol * value.abs() || error < 1e-300 {
            return Ok(value);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::IntegrationFailure(format!(
                "no convergence over [{a}, {b}]: estimate {value}, error {error}"
            )));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (l, le) = gauss_kronrod(f, lo, mid);
        let (r, re) = gauss_kronrod(f, mid, hi);
        intervals.push((lo, mid, l, le));
        intervals.push((mid, hi, r, re));
    }
}

/// Independent random stream `stream` of generator `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One `(y, x)` draw: a bivariate standard normal with correlation `rho`
/// pushed through each marginal's quantile function.
pub fn sample_correlated_pair<R: Rng + ?Sized>(
    y: &MarginalParams,
    x: &MarginalParams,
    rho: f64,
    rng: &mut R,
) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let zx = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
    (y.from_standard_normal(z1), x.from_standard_normal(zx))
}

/// `n` correlated pairs as separate outcome and covariate vectors.
pub fn generate_pairs<R: Rng + ?Sized>(
    y: &MarginalParams,
    x: &MarginalParams,
    rho: f64,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = sample_correlated_pair(y, x, rho, rng);
        ys.push(a);
        xs.push(b);
    }
    (ys, xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lognormal_moment_match() {
        let p = solve_marginal(Family::Lognormal, 5.0, 1000.0, 0.0).unwrap();
        let MarginalParams::Lognormal { mu, sigma } = p else {
            panic!()
        };
        assert_relative_eq!(sigma * sigma, 40_001f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(sigma * sigma, 10.596_659_732_783_58, max_relative = 1e-12);
        assert_relative_eq!(mu, 5f64.ln() - 0.5 * 40_001f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(p.mean(), 5.0, max_relative = 1e-9);
        assert_relative_eq!(p.sd(), 1000.0, max_relative = 1e-9);
    }

    #[test]
    fn normal_passes_through() {
        assert_eq!(
            solve_marginal(Family::Normal, 5.0, 100.0, 0.0).unwrap(),
            MarginalParams::Normal {
                mean: 5.0,
                sd: 100.0
            }
        );
    }

    #[test]
    fn zero_inflated_moment_match() {
        let p = solve_marginal(Family::ZeroInflatedLognormal, 5.0, 1000.0, 0.9).unwrap();
        let MarginalParams::ZeroInflatedLognormal {
            zero_fraction,
            mu,
            sigma,
        } = p
        else {
            panic!()
        };
        assert_eq!(zero_fraction, 0.9);
        let m_nz = 50.0;
        let var_nz = 1_000_025.0 / 0.1 - 2500.0;
        let (mu_e, sigma_e) = lognormal_from_moments(m_nz, f64::sqrt(var_nz));
        assert_relative_eq!(mu, mu_e, max_relative = 1e-12);
        assert_relative_eq!(sigma, sigma_e, max_relative = 1e-12);
        assert_relative_eq!(p.mean(), 5.0, max_relative = 1e-9);
        assert_relative_eq!(p.sd(), 1000.0, max_relative = 1e-9);
    }

    #[test]
    fn infeasible_moments() {
        assert!(matches!(
            solve_marginal(Family::Lognormal, -1.0, 1.0, 0.0),
            Err(Error::InfeasibleMoments(_))
        ));
        // sd so small the non-zero part would need negative variance
        assert!(matches!(
            solve_marginal(Family::ZeroInflatedLognormal, 5.0, 1.0, 0.9),
            Err(Error::InfeasibleMoments(_))
        ));
    }

    #[test]
    fn quantile_examples() {
        let zi = solve_marginal(Family::ZeroInflatedLognormal, 5.0, 1000.0, 0.9).unwrap();
        assert_eq!(zi.quantile(0.5).unwrap(), 0.0);
        let ln = solve_marginal(Family::Lognormal, 5.0, 1000.0, 0.0).unwrap();
        let MarginalParams::Lognormal { mu, .. } = ln else {
            panic!()
        };
        assert_relative_eq!(ln.quantile(0.5).unwrap(), mu.exp(), max_relative = 1e-15);
        let n = solve_marginal(Family::Normal, 5.0, 100.0, 0.0).unwrap();
        assert_relative_eq!(
            n.quantile(0.975).unwrap(),
            5.0 + 100.0 * 1.959_963_984_540_054,
            max_relative = 1e-12
        );
        assert!(n.quantile(0.0).is_err());
        assert!(n.quantile(1.0).is_err());
    }

    #[test]
    fn standard_normal_path_matches_quantile() {
        for family in [
            Family::Normal,
            Family::Lognormal,
            Family::ZeroInflatedLognormal,
        ] {
            let zf = if family == Family::ZeroInflatedLognormal {
                0.9
            } else {
                0.0
            };
            let p = solve_marginal(family, 5.0, 1000.0, zf).unwrap();
            for i in -50..=50 {
                let z = i as f64 / 10.0;
                let direct = p.quantile(normal_cdf(z)).unwrap();
                let fast = p.from_standard_normal(z);
                assert_relative_eq!(direct, fast, max_relative = 1e-8, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_handles_polynomials_and_gaussians() {
        let v = integrate(&|x: f64| x * x * x - x, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-13);
        let g = integrate(&|x: f64| (-0.5 * x * x).exp(), -40.0, 40.0, 1e-13).unwrap();
        assert_relative_eq!(g, (2.0 * PI).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn untrimmed_population_mean_is_the_mean() {
        for (family, zf) in [
            (Family::Normal, 0.0),
            (Family::Lognormal, 0.0),
            (Family::ZeroInflatedLognormal, 0.9),
        ] {
            let p = solve_marginal(family, 5.0, 1000.0, zf).unwrap();
            assert_relative_eq!(
                p.population_trimmed_mean(0.0).unwrap(),
                5.0,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map({
                let mut r = substream(7, 3);
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..4)
            .map({
                let mut r = substream(7, 3);
                move |_| r.random()
            })
            .collect();
        let c: Vec<u64> = (0..4)
            .map({
                let mut r = substream(7, 4);
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
