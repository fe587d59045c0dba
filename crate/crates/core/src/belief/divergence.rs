//! Monitors on node distributions: Jensen-Shannon distance and normalized
//! Shannon entropy, both in base 2 so that they live in `[0, 1]`.

use thiserror::Error;

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("distribution is empty")]
    Empty,
    #[error("entry {0} is negative or not finite")]
    InvalidEntry(usize),
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Probability vector over map nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDistribution(Vec<f64>);

impl NodeDistribution {
    /// Normalizes non-negative masses to a probability vector.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self, DistributionError> {
        if masses.is_empty() {
            return Err(DistributionError::Empty);
        }
        if let Some(i) = masses.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(DistributionError::InvalidEntry(i));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(DistributionError::ZeroMass);
        }
        Ok(Self(masses.into_iter().map(|m| m / total).collect()))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn point_mass(len: usize, at: usize) -> Self {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        Self(v)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        (self.0.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL
    }
}

fn xlog2x_over(p: f64, q: f64) -> f64 {
    if p > 0.0 {
        p * (p / q).log2()
    } else {
        0.0
    }
}

/// Jensen-Shannon distance: the square root of the base-2 JS divergence.
pub fn jsd(a: &NodeDistribution, b: &NodeDistribution) -> Result<f64, DistributionError> {
    if a.len() != b.len() {
        return Err(DistributionError::LengthMismatch(a.len(), b.len()));
    }
    let mut divergence = 0.0;
    for (&p, &q) in a.0.iter().zip(&b.0) {
        let m = 0.5 * (p + q);
        divergence += xlog2x_over(p, m) + xlog2x_over(q, m);
    }
    // Rounding can push the sum a hair outside [0, 2].
    Ok((0.5 * divergence).clamp(0.0, 1.0).sqrt())
}

/// Shannon entropy divided by `log2 |N|`; 0 for a single-node map.
pub fn normalized_entropy(dist: &NodeDistribution) -> f64 {
    let n = dist.len();
    if n <= 1 {
        return 0.0;
    }
    let h: f64 = dist.0.iter().filter(|&&p| p > 0.0).map(|&p| p * (1.0 / p).log2()).sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}
