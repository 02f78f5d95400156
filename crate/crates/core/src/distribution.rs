//! Points of the probability simplex over a finite, densely indexed set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest deviation of the weight sum from 1 that is silently renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A probability vector indexed by observation (or action) id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates `weights`: every entry finite and non-negative, sum within
    /// [`NORMALIZATION_TOLERANCE`] of one. Small deviations are renormalized away.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() >= NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        if sum != 1.0 {
            for w in &mut weights {
                *w /= sum;
            }
        }
        Ok(Self(weights))
    }

    pub fn point_mass(len: usize, index: usize) -> Self {
        assert!(index < len, "point mass index {index} out of range {len}");
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Self(weights)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    /// Empirical distribution of `counts` (each entry divided by the total).
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyDistribution);
        }
        let n = total as f64;
        Ok(Self(counts.iter().map(|&c| c as f64 / n).collect()))
    }

    /// Softmax of `logits`, shifted by the maximum for stability.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    /// Index of the unit weight if this is a point mass.
    pub fn as_point_mass(&self) -> Option<usize> {
        self.0.iter().position(|&w| w == 1.0)
    }

    /// Inverse-CDF lookup for a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    /// Convex combination `(1 - lambda) * self + lambda * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Self::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect(),
        )
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_weights() {
        assert!(matches!(
            Distribution::new(vec![1.1, -0.1]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
    }

    #[test]
    fn renormalizes_only_tiny_deviations() {
        let d = Distribution::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            Distribution::new(vec![0.5, 0.5 + 2e-9]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn sampling_skips_zero_weights() {
        let d = Distribution::new(vec![0.0, 0.25, 0.0, 0.75]).unwrap();
        assert_eq!(d.sample_with(0.0), 1);
        assert_eq!(d.sample_with(0.2499), 1);
        assert_eq!(d.sample_with(0.25), 3);
        assert_eq!(d.sample_with(0.999_999), 3);
    }

    #[test]
    fn counts_and_point_mass() {
        let d = Distribution::from_counts(&[1, 3, 0]).unwrap();
        assert_eq!(d.weights(), &[0.25, 0.75, 0.0]);
        assert_eq!(Distribution::point_mass(3, 2).as_point_mass(), Some(2));
        assert_eq!(d.as_point_mass(), None);
    }

    #[test]
    fn serde_validates() {
        let bad: std::result::Result<Distribution, _> = serde_json::from_str("[0.7, 0.7]");
        assert!(bad.is_err());
        let good: Distribution = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(good.get(1), 0.75);
    }
}
