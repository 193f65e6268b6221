//! System utilities of the SINR vector.
//!
//! Every utility can be evaluated on an arbitrary nonempty subset of links,
//! which is what neighborhood-restricted sampling needs. The built-ins
//! apply their product or sum to the subset; table utilities declare their
//! own combination rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("utility evaluated on an empty link set")]
    EmptySubset,
    #[error("negative SINR {value} for link {link}")]
    NegativeSinr { link: usize, value: f64 },
    #[error("invalid utility table: {0}")]
    InvalidTable(String),
}

/// How per-link table values are combined over a link set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    Sum,
    Product,
    Min,
}

/// Piecewise-constant per-link score: a link with SINR `g` scores
/// `values[k]` where `k` is the number of breakpoints `<= g`. Arbitrary
/// (non-monotone, discontinuous) shapes are allowed as long as every value
/// is nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableUtility {
    /// Increasing linear-scale SINR breakpoints.
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub combine: Combine,
}

impl TableUtility {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, combine: Combine) -> Result<Self, UtilityError> {
        let t = Self {
            breakpoints,
            values,
            combine,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(UtilityError::InvalidTable(format!(
                "{} breakpoints need {} values, got {}",
                self.breakpoints.len(),
                self.breakpoints.len() + 1,
                self.values.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(UtilityError::InvalidTable("breakpoints must increase".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(UtilityError::InvalidTable(format!("value {v} is not a nonnegative number")));
        }
        Ok(())
    }

    fn score(&self, sinr: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= sinr);
        self.values[k]
    }
}

/// Selectable system utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// Product of the SINRs.
    ProportionalFairness,
    /// Sum of `log2(1 + sinr)`.
    TotalThroughput,
    CustomTable(TableUtility),
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<(), UtilityError> {
        match self {
            UtilitySpec::CustomTable(t) => t.validate(),
            _ => Ok(()),
        }
    }

    /// Utility of the given `(link, sinr)` pairs.
    pub fn evaluate(&self, sinrs: &[(usize, f64)]) -> Result<f64, UtilityError> {
        if sinrs.is_empty() {
            return Err(UtilityError::EmptySubset);
        }
        if let Some(&(link, value)) = sinrs.iter().find(|(_, v)| !(*v >= 0.0)) {
            return Err(UtilityError::NegativeSinr { link, value });
        }
        Ok(self.combine(sinrs.iter().map(|&(_, g)| g)))
    }

    /// Utility of a full SINR vector.
    pub fn evaluate_all(&self, sinrs: &[f64]) -> Result<f64, UtilityError> {
        if sinrs.is_empty() {
            return Err(UtilityError::EmptySubset);
        }
        if let Some((link, &value)) = sinrs.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(UtilityError::NegativeSinr { link, value });
        }
        Ok(self.combine(sinrs.iter().copied()))
    }

    fn combine(&self, sinrs: impl Iterator<Item = f64>) -> f64 {
        let u = match self {
            UtilitySpec::ProportionalFairness => sinrs.product(),
            UtilitySpec::TotalThroughput => sinrs.map(|g| (1.0 + g).log2()).sum(),
            UtilitySpec::CustomTable(t) => {
                let scores = sinrs.map(|g| t.score(g));
                match t.combine {
                    Combine::Sum => scores.sum(),
                    Combine::Product => scores.product(),
                    Combine::Min => scores.fold(f64::INFINITY, f64::min),
                }
            }
        };
        assert!(u >= 0.0, "utility must be nonnegative, got {u}");
        u
    }

    /// Whether the utility is a sum of per-link terms.
    pub fn is_additive(&self) -> bool {
        matches!(
            self,
            UtilitySpec::TotalThroughput
                | UtilitySpec::CustomTable(TableUtility {
                    combine: Combine::Sum,
                    ..
                })
        )
    }
}
