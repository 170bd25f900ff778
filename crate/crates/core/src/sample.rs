use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Proportion trimmed from each tail.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TrimSpec(f64);

impl TrimSpec {
    /// No trimming; every trimmed formula reduces to its untrimmed form.
    pub const NONE: TrimSpec = TrimSpec(0.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && (0.0..0.5).contains(&gamma) {
            Ok(TrimSpec(gamma))
        } else {
            Err(Error::InvalidGamma(gamma))
        }
    }

    pub fn gamma(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TrimSpec {
    type Error = Error;

    fn try_from(gamma: f64) -> Result<Self> {
        TrimSpec::new(gamma)
    }
}

impl From<TrimSpec> for f64 {
    fn from(spec: TrimSpec) -> f64 {
        spec.0
    }
}

/// One group's subject-level observations.
///
/// `covariates[i]` is the pre-experiment value of subject `i`; `None` marks a
/// missing covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    covariates: Option<Vec<Option<f64>>>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        Ok(Sample {
            values,
            covariates: None,
        })
    }

    pub fn with_covariates(values: Vec<f64>, covariates: Vec<Option<f64>>) -> Result<Self> {
        check_values(&values)?;
        if covariates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: covariates.len(),
            });
        }
        if let Some(index) = covariates
            .iter()
            .position(|c| matches!(c, Some(x) if !x.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Sample {
            values,
            covariates: Some(covariates),
        })
    }

    pub fn with_complete_covariates(values: Vec<f64>, covariates: Vec<f64>) -> Result<Self> {
        Self::with_covariates(values, covariates.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covariates(&self) -> Option<&[Option<f64>]> {
        self.covariates.as_deref()
    }

    pub fn has_covariates(&self) -> bool {
        self.covariates.is_some()
    }

    pub fn missing_count(&self) -> usize {
        match &self.covariates {
            Some(c) => c.iter().filter(|c| c.is_none()).count(),
            None => self.values.len(),
        }
    }

    /// Covariates as a dense vector, or `None` if any is missing.
    pub fn complete_covariates(&self) -> Option<Vec<f64>> {
        self.covariates.as_ref()?.iter().copied().collect()
    }

    /// `(y, x)` for the subjects whose covariate is observed.
    pub fn complete_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.covariates {
            Some(c) => self
                .values
                .iter()
                .zip(c)
                .filter_map(|(&y, &x)| x.map(|x| (y, x)))
                .unzip(),
            None => (Vec::new(), Vec::new()),
        }
    }

    pub fn without_covariates(&self) -> Sample {
        Sample {
            values: self.values.clone(),
            covariates: None,
        }
    }

    /// Replaces every missing covariate with `fill`, returning the number filled.
    pub(crate) fn fill_missing(&mut self, fill: f64) -> usize {
        let mut filled = 0;
        let n = self.values.len();
        let cov = self.covariates.get_or_insert_with(|| vec![None; n]);
        for c in cov.iter_mut().filter(|c| c.is_none()) {
            *c = Some(fill);
            filled += 1;
        }
        filled
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trim_spec_bounds() {
        assert!(TrimSpec::new(0.0).is_ok());
        assert!(TrimSpec::new(0.499).is_ok());
        assert_eq!(TrimSpec::new(0.5), Err(Error::InvalidGamma(0.5)));
        assert!(TrimSpec::new(-0.01).is_err());
        assert!(TrimSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn sample_validation() {
        assert_eq!(Sample::new(vec![]), Err(Error::EmptySample));
        assert_eq!(
            Sample::new(vec![1.0, f64::INFINITY]),
            Err(Error::NonFinite { index: 1 })
        );
        assert_eq!(
            Sample::with_covariates(vec![1.0, 2.0], vec![Some(1.0)]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        );
    }

    #[test]
    fn complete_pairs_skip_missing() {
        let s =
            Sample::with_covariates(vec![1.0, 2.0, 3.0], vec![Some(4.0), None, Some(6.0)]).unwrap();
        assert_eq!(s.missing_count(), 1);
        assert_eq!(s.complete_pairs(), (vec![1.0, 3.0], vec![4.0, 6.0]));
        assert_eq!(s.complete_covariates(), None);
    }
}
