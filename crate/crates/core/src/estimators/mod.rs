//! Policy-gradient and policy-value estimators.
//!
//! All estimators share one shape: every logged row contributes a multiple of
//! the score at the logged action plus, for the doubly robust family, an exact
//! expectation over actions of a model term times the score. For the linear
//! softmax policy both reduce to a per-row coefficient vector over actions, so
//! a whole estimate is one pass over the rows and one matrix product.
//!
//! Each estimator also reports its value analogue, obtained by replacing the
//! score with 1. The trainer records it as the per-iteration objective trace.

mod enumeration;
mod gradient;

use rand_distr::{Distribution, Normal};

pub use enumeration::{EnumerationInstance, SecondaryAtom, TableModels, ENUMERATION_LIMIT};
pub use gradient::{
    estimate, grad_dr, grad_dr_fsr, grad_hyper, grad_hyper_r, grad_ips, grad_r_dr,
    grad_r_dr_residual, grad_r_ips, grad_s_dr, grad_s_ips, grad_s_value, value_estimate,
};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `F(s) = sᵀ(weights + ε_F)` with `ε_F ~ N(0, σ_F²)` drawn once.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateAggregator {
    weights: Vec<f64>,
    noise_scale: f64,
    noise: Vec<f64>,
}

impl SurrogateAggregator {
    /// No noise: `F(s) = sᵀweights`.
    pub fn exact(weights: Vec<f64>) -> Self {
        let noise = vec![0.0; weights.len()];
        Self {
            weights,
            noise_scale: 0.0,
            noise,
        }
    }

    pub fn with_noise(weights: Vec<f64>, noise_scale: f64, rng: &mut Rng) -> Result<Self> {
        let normal = Normal::new(0.0, noise_scale)
            .map_err(|e| Error::Config(format!("surrogate noise scale: {e}")))?;
        let noise = (0..weights.len()).map(|_| normal.sample(rng)).collect();
        Ok(Self {
            weights,
            noise_scale,
            noise,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, s: &[f64]) -> f64 {
        s.iter()
            .zip(self.weights.iter().zip(&self.noise))
            .map(|(s, (w, e))| s * (w + e))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Ips,
    Dr,
    RIps,
    RDr,
    SIps,
    SDr,
    /// Target-reward gradient using secondary rewards as a control variate.
    HyperR,
    /// Doubly robust gradient of the summed secondary rewards.
    SGrad,
    /// `(1−γ)·HyperR + γ·SGrad`.
    Hyper,
    /// Doubly robust on `r` when observed and `F(s)` otherwise.
    DrFsr,
}

impl EstimatorKind {
    pub fn needs_aggregator(self) -> bool {
        matches!(self, Self::SIps | Self::SDr | Self::DrFsr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Mixture weight, read by `Hyper` only.
    pub gamma: f64,
    /// Optional cap on importance weights. Off unless set explicitly.
    pub weight_clip: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            gamma: 0.0,
            weight_clip: None,
        }
    }

    pub fn hyper(gamma: f64) -> Self {
        Self {
            kind: EstimatorKind::Hyper,
            gamma,
            weight_clip: None,
        }
    }
}

/// A gradient vector congruent with the flattened policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate(Vec<f64>);

impl GradientEstimate {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Gradient plus the matching value analogue.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub gradient: GradientEstimate,
}
