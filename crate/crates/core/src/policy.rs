//! Policies over a finite action set.
//!
//! The learned policy is a linear softmax over the feature map
//! `phi(x, a) = [x ⊗ onehot(a), onehot(a)]`: the first `|A|·d_x` entries hold
//! the context copied into the block of action `a` (index `a·d_x + j`), the
//! trailing `|A|` entries are per-action biases. With that layout the logit of
//! action `a` is `θ_a·x + b_a` and every score-weighted sum collapses to a
//! matrix product, which is what the estimators rely on.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Floor applied to probabilities when sampling only.
pub const SAMPLING_FLOOR: f64 = 1e-12;

/// Anything that maps a context to a distribution over actions.
pub trait Policy: Sync {
    fn n_actions(&self) -> usize;

    /// Write `π(·|x)` into `out` (length `n_actions`).
    fn probs_into(&self, x: &[f64], out: &mut [f64]);

    fn action_probs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.probs_into(x, &mut out);
        out
    }
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for e in v.iter_mut() {
        *e = (*e - max).exp();
        total += *e;
    }
    for e in v.iter_mut() {
        *e /= total;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut v = logits.to_vec();
    softmax_in_place(&mut v);
    v
}

/// Draw an index from `probs`. Entries are floored at [`SAMPLING_FLOOR`].
pub fn sample_from_probs(probs: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().map(|p| p.max(SAMPLING_FLOOR)).sum();
    let mut u = rng.random::<f64>() * total;
    for (a, p) in probs.iter().enumerate() {
        let p = p.max(SAMPLING_FLOOR);
        if u < p {
            return a;
        }
        u -= p;
    }
    probs.len() - 1
}

/// `π_θ(a|x) / π_0(a|x)`; the logging probability must be positive.
pub fn importance_weight(target_prob: f64, logging_prob: f64, action: usize) -> Result<f64> {
    if !(logging_prob > 0.0) {
        return Err(Error::FullSupport {
            action,
            prob: logging_prob,
        });
    }
    Ok(target_prob / logging_prob)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

// ── Learned policy ──────────────────────────────────────────────────────

#[derive(Clone, PartialEq)]
pub struct SoftmaxLinearPolicy {
    d_x: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

impl fmt::Debug for SoftmaxLinearPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SoftmaxLinearPolicy")
            .field("d_x", &self.d_x)
            .field("n_actions", &self.n_actions)
            .finish_non_exhaustive()
    }
}

impl SoftmaxLinearPolicy {
    /// Zero parameters, i.e. the uniform policy.
    pub fn zeros(d_x: usize, n_actions: usize) -> Self {
        Self {
            d_x,
            n_actions,
            theta: vec![0.0; Self::param_dim(d_x, n_actions)],
        }
    }

    pub fn from_theta(d_x: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Config("policy needs at least one action".into()));
        }
        check_dim(Self::param_dim(d_x, n_actions), theta.len())?;
        Ok(Self {
            d_x,
            n_actions,
            theta,
        })
    }

    pub fn param_dim(d_x: usize, n_actions: usize) -> usize {
        n_actions * (d_x + 1)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// `phi(x, a)` as a dense vector.
    pub fn feature(&self, x: &[f64], a: usize) -> Result<Vec<f64>> {
        check_dim(self.d_x, x.len())?;
        self.check_action(a)?;
        let mut phi = vec![0.0; self.dim()];
        phi[a * self.d_x..(a + 1) * self.d_x].copy_from_slice(x);
        phi[self.n_actions * self.d_x + a] = 1.0;
        Ok(phi)
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::Config(format!(
                "action {a} out of range for {} actions",
                self.n_actions
            )));
        }
        Ok(())
    }

    fn logits_unchecked(&self, x: &[f64], out: &mut [f64]) {
        let bias = &self.theta[self.n_actions * self.d_x..];
        for (a, logit) in out.iter_mut().enumerate() {
            let w = &self.theta[a * self.d_x..(a + 1) * self.d_x];
            *logit = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + bias[a];
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d_x, x.len())?;
        let mut out = vec![0.0; self.n_actions];
        self.logits_unchecked(x, &mut out);
        Ok(out)
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.logits(x)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn log_prob(&self, x: &[f64], a: usize) -> Result<f64> {
        self.check_action(a)?;
        let logits = self.logits(x)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(logits[a] - lse)
    }

    /// Score function `g_θ(x, a) = ∇_θ log π_θ(a|x)`.
    pub fn score(&self, x: &[f64], a: usize) -> Result<Vec<f64>> {
        self.check_action(a)?;
        let probs = self.probs(x)?;
        let mut coef: Vec<f64> = probs.iter().map(|p| -p).collect();
        coef[a] += 1.0;
        let mut g = vec![0.0; self.dim()];
        self.add_feature_combination(x, &coef, &mut g);
        Ok(g)
    }

    /// `out += Σ_a coef[a]·phi(x, a)`.
    pub fn add_feature_combination(&self, x: &[f64], coef: &[f64], out: &mut [f64]) {
        let bias_start = self.n_actions * self.d_x;
        for (a, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, xj) in out[a * self.d_x..(a + 1) * self.d_x].iter_mut().zip(x) {
                *o += c * xj;
            }
            out[bias_start + a] += c;
        }
    }

    pub fn sample_action(&self, x: &[f64], rng: &mut Rng) -> Result<usize> {
        Ok(sample_from_probs(&self.probs(x)?, rng))
    }

    /// Row-wise `π_θ(·|x_i)` for every context row.
    pub fn probs_matrix(&self, contexts: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.d_x, contexts.ncols())?;
        let weights = self.weight_matrix();
        let mut logits = contexts.dot(&weights);
        let bias = &self.theta[self.n_actions * self.d_x..];
        for mut row in logits.axis_iter_mut(Axis(0)) {
            for (l, b) in row.iter_mut().zip(bias) {
                *l += b;
            }
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(logits)
    }

    /// `W[j, a] = θ[a·d_x + j]`.
    fn weight_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.d_x, self.n_actions), |(j, a)| {
            self.theta[a * self.d_x + j]
        })
    }

    /// `Σ_i Σ_a coef[i, a]·phi(x_i, a)`, i.e. the parameter-space image of a
    /// per-row, per-action coefficient matrix.
    pub fn project(&self, contexts: ArrayView2<f64>, coef: &Array2<f64>) -> Vec<f64> {
        let xc = contexts.t().dot(coef);
        let mut out = vec![0.0; self.dim()];
        for a in 0..self.n_actions {
            for j in 0..self.d_x {
                out[a * self.d_x + j] = xc[[j, a]];
            }
        }
        let bias_start = self.n_actions * self.d_x;
        for (a, s) in coef.sum_axis(Axis(0)).iter().enumerate() {
            out[bias_start + a] = *s;
        }
        out
    }
}

impl Policy for SoftmaxLinearPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d_x);
        self.logits_unchecked(x, out);
        softmax_in_place(out);
    }
}

// ── Logging policy ──────────────────────────────────────────────────────

/// `π_0(·|x) = softmax(φ·(xᵀM_{X,A}a + xᵀθ_x + aᵀθ_a))` with one-hot `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggingPolicy {
    /// `d_x × |A|`
    pub m_xa: Array2<f64>,
    pub theta_x: Vec<f64>,
    pub theta_a: Vec<f64>,
    /// Inverse temperature `φ`; zero gives the uniform policy.
    pub temperature: f64,
}

impl LoggingPolicy {
    pub fn new(
        m_xa: Array2<f64>,
        theta_x: Vec<f64>,
        theta_a: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        check_dim(m_xa.nrows(), theta_x.len())?;
        check_dim(m_xa.ncols(), theta_a.len())?;
        Ok(Self {
            m_xa,
            theta_x,
            theta_a,
            temperature,
        })
    }

    pub fn d_x(&self) -> usize {
        self.m_xa.nrows()
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d_x(), x.len())?;
        let mut out = vec![0.0; self.theta_a.len()];
        self.probs_into(x, &mut out);
        Ok(out)
    }
}

impl Policy for LoggingPolicy {
    fn n_actions(&self) -> usize {
        self.theta_a.len()
    }

    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        let base: f64 = x.iter().zip(&self.theta_x).map(|(x, t)| x * t).sum();
        for (a, o) in out.iter_mut().enumerate() {
            let interaction: f64 = x
                .iter()
                .enumerate()
                .map(|(j, xj)| xj * self.m_xa[[j, a]])
                .sum();
            *o = self.temperature * (interaction + base + self.theta_a[a]);
        }
        softmax_in_place(out);
    }
}

// ── Fixed policies ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(1.0 / self.n_actions as f64);
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (a, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = a;
        }
    }
    best
}

type ScoreFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Puts all mass on `argmax_a score(x, a)`, ties to the lowest index.
#[derive(Clone)]
pub struct GreedyPolicy {
    n_actions: usize,
    scores: Arc<ScoreFn>,
}

impl fmt::Debug for GreedyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreedyPolicy")
            .field("n_actions", &self.n_actions)
            .finish_non_exhaustive()
    }
}

impl GreedyPolicy {
    pub fn new(
        n_actions: usize,
        scores: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_actions,
            scores: Arc::new(scores),
        }
    }

    pub fn select(&self, x: &[f64]) -> usize {
        argmax_lowest(&(self.scores)(x))
    }
}

impl Policy for GreedyPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.select(x)] = 1.0;
    }
}
