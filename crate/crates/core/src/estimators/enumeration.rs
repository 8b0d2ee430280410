//! Finite bandit instances whose expectations can be summed exactly.
//!
//! An instance has a finite context distribution, a tabulated logging policy,
//! a finite secondary-reward distribution per `(x, a)`, a tabulated
//! `q(x, a, s)`, Gaussian target noise, and a per-context observation
//! probability. Exact policy gradients are computed by summing
//! `p(x)·π(a|x)·R(x, a)·g_θ(x, a)` over the support, using the policy's own
//! score function rather than the estimators' coefficient path.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::SurrogateAggregator;
use crate::dataset::{LoggedDataset, Row};
use crate::error::{Error, Result};
use crate::models::NuisanceModels;
use crate::policy::{sample_from_probs, SoftmaxLinearPolicy};
use crate::rng::Rng;

/// Largest `|X|·|A|·|S|` accepted for enumeration.
pub const ENUMERATION_LIMIT: usize = 10_000;

/// One support point of `p(s|x,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryAtom {
    pub value: Vec<f64>,
    pub prob: f64,
    /// `q(x, a, s)` at this atom.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationInstance {
    pub contexts: Vec<Vec<f64>>,
    pub context_probs: Vec<f64>,
    /// `π_0(a|x_k)`, indexed `[k][a]`.
    pub logging: Vec<Vec<f64>>,
    /// `p(s|x_k, a)` with `q(x_k, a, s)`, indexed `[k][a]`.
    pub secondary: Vec<Vec<Vec<SecondaryAtom>>>,
    /// Standard deviation of `r` around `q(x, a, s)`.
    pub reward_sd: f64,
    /// `p(o = 1|x_k)`.
    pub obs_prob: Vec<f64>,
}

impl EnumerationInstance {
    /// Five contexts, three actions, a two-point secondary distribution in two
    /// dimensions, `p(o|x) = 0.2`, and a target that depends on the realized
    /// secondary reward.
    pub fn bundled() -> Self {
        let contexts = vec![
            vec![1.0, 0.0],
            vec![0.5, 1.0],
            vec![-0.7, 0.3],
            vec![0.2, -1.2],
            vec![-1.0, -0.5],
        ];
        let context_probs = vec![0.3, 0.2, 0.2, 0.15, 0.15];
        let logging = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.25, 0.25, 0.5],
            vec![0.6, 0.1, 0.3],
            vec![0.15, 0.45, 0.4],
        ];
        // q(x, a, s) = base[k][a] + 0.8·s_1 − 0.5·s_2
        let base = [
            [1.0, 0.2, -0.5],
            [-0.3, 0.8, 0.1],
            [0.4, -0.6, 0.9],
            [0.0, 0.5, -0.2],
            [0.7, -0.1, 0.3],
        ];
        let mut secondary = Vec::new();
        for (k, x) in contexts.iter().enumerate() {
            let mut per_action = Vec::new();
            for (a, b) in base[k].iter().enumerate() {
                let f1 = 0.5 * x[0] - 0.3 * a as f64 + 0.2;
                let f2 = -0.4 * x[1] + 0.25 * a as f64;
                // mean-preserving two-point spread with unequal weights
                let (p_hi, up, down) = (0.4, 0.6, 0.4);
                let atoms = [(f1 + up, f2 - 0.5 * up, p_hi), (f1 - down, f2 + 0.5 * down, 1.0 - p_hi)];
                per_action.push(
                    atoms
                        .iter()
                        .map(|&(s1, s2, prob)| SecondaryAtom {
                            value: vec![s1, s2],
                            prob,
                            q: b + 0.8 * s1 - 0.5 * s2,
                        })
                        .collect(),
                );
            }
            secondary.push(per_action);
        }
        Self {
            contexts,
            context_probs,
            logging,
            secondary,
            reward_sd: 0.5,
            obs_prob: vec![0.2; 5],
        }
    }

    /// A fixed non-uniform policy for the bundled instance.
    pub fn bundled_policy() -> SoftmaxLinearPolicy {
        SoftmaxLinearPolicy::from_theta(
            2,
            3,
            vec![0.4, -0.3, -0.2, 0.5, 0.1, 0.2, 0.3, -0.1, 0.2],
        )
        .expect("bundled policy dimensions")
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn n_actions(&self) -> usize {
        self.logging[0].len()
    }

    pub fn d_x(&self) -> usize {
        self.contexts[0].len()
    }

    pub fn d_s(&self) -> usize {
        self.secondary[0][0][0].value.len()
    }

    pub fn validate(&self) -> Result<()> {
        let support = self
            .secondary
            .iter()
            .flatten()
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        let size = self.n_contexts() * self.n_actions() * support;
        if size > ENUMERATION_LIMIT {
            return Err(Error::EnumerationLimit {
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
        let k = self.n_contexts();
        if self.context_probs.len() != k
            || self.logging.len() != k
            || self.secondary.len() != k
            || self.obs_prob.len() != k
        {
            return Err(Error::Config("enumeration instance has ragged tables".into()));
        }
        Ok(())
    }

    /// `E[r | x_k, a] = Σ_s p(s) q(x_k, a, s)`.
    pub fn q_bar(&self, k: usize, a: usize) -> f64 {
        self.secondary[k][a].iter().map(|at| at.prob * at.q).sum()
    }

    /// `f(x_k, a) = E[s | x_k, a]`.
    pub fn f_bar(&self, k: usize, a: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.d_s()];
        for at in &self.secondary[k][a] {
            for (fd, v) in f.iter_mut().zip(&at.value) {
                *fd += at.prob * v;
            }
        }
        f
    }

    /// `Σ_k p(x_k) Σ_a π(a|x_k) reward(k, a) g_θ(x_k, a)`.
    pub fn exact_gradient(
        &self,
        policy: &SoftmaxLinearPolicy,
        reward: impl Fn(usize, usize) -> f64,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; policy.dim()];
        for (k, x) in self.contexts.iter().enumerate() {
            let probs = policy.probs(x)?;
            for (a, pa) in probs.iter().enumerate() {
                let weight = self.context_probs[k] * pa * reward(k, a);
                for (g, s) in grad.iter_mut().zip(policy.score(x, a)?) {
                    *g += weight * s;
                }
            }
        }
        Ok(grad)
    }

    pub fn exact_value(
        &self,
        policy: &SoftmaxLinearPolicy,
        reward: impl Fn(usize, usize) -> f64,
    ) -> Result<f64> {
        let mut v = 0.0;
        for (k, x) in self.contexts.iter().enumerate() {
            for (a, pa) in policy.probs(x)?.iter().enumerate() {
                v += self.context_probs[k] * pa * reward(k, a);
            }
        }
        Ok(v)
    }

    /// `∇V_r`
    pub fn target_gradient(&self, policy: &SoftmaxLinearPolicy) -> Result<Vec<f64>> {
        self.exact_gradient(policy, |k, a| self.q_bar(k, a))
    }

    /// `∇V_s`, the gradient of the summed expected secondary rewards.
    pub fn secondary_gradient(&self, policy: &SoftmaxLinearPolicy) -> Result<Vec<f64>> {
        self.exact_gradient(policy, |k, a| self.f_bar(k, a).iter().sum())
    }

    /// `∇V_c(π; β)`
    pub fn combined_gradient(&self, policy: &SoftmaxLinearPolicy, beta: f64) -> Result<Vec<f64>> {
        self.exact_gradient(policy, |k, a| {
            (1.0 - beta) * self.q_bar(k, a) + beta * self.f_bar(k, a).iter().sum::<f64>()
        })
    }

    /// Gradient of `E[F(s)]` for a linear aggregator.
    pub fn surrogate_gradient(
        &self,
        policy: &SoftmaxLinearPolicy,
        agg: &SurrogateAggregator,
    ) -> Result<Vec<f64>> {
        self.exact_gradient(policy, |k, a| agg.apply(&self.f_bar(k, a)))
    }

    /// Gradient of the expected pseudo-reward `p(o|x)·q + (1 − p(o|x))·F(f)`.
    pub fn pseudo_reward_gradient(
        &self,
        policy: &SoftmaxLinearPolicy,
        agg: &SurrogateAggregator,
    ) -> Result<Vec<f64>> {
        self.exact_gradient(policy, |k, a| {
            let p = self.obs_prob[k];
            p * self.q_bar(k, a) + (1.0 - p) * agg.apply(&self.f_bar(k, a))
        })
    }

    /// Combined value `(1−β)V_r + βV_s`.
    pub fn combined_value(&self, policy: &SoftmaxLinearPolicy, beta: f64) -> Result<f64> {
        self.exact_value(policy, |k, a| {
            (1.0 - beta) * self.q_bar(k, a) + beta * self.f_bar(k, a).iter().sum::<f64>()
        })
    }

    pub fn sample_row(&self, rng: &mut Rng) -> Row {
        let k = sample_from_probs(&self.context_probs, rng);
        let a = sample_from_probs(&self.logging[k], rng);
        let atoms = &self.secondary[k][a];
        let probs: Vec<f64> = atoms.iter().map(|at| at.prob).collect();
        let atom = &atoms[sample_from_probs(&probs, rng)];
        let observed = rng.random::<f64>() < self.obs_prob[k];
        let noise: f64 = StandardNormal.sample(rng);
        Row {
            context: self.contexts[k].clone(),
            action: a,
            pscore: self.logging[k][a],
            secondary: atom.value.clone(),
            target: observed.then_some(atom.q + self.reward_sd * noise),
            obs_prob: self.obs_prob[k],
        }
    }

    pub fn sample_dataset(&self, n: usize, rng: &mut Rng) -> Result<LoggedDataset> {
        let rows: Vec<Row> = (0..n).map(|_| self.sample_row(rng)).collect();
        LoggedDataset::from_rows(&rows, self.n_actions())
    }

    /// Models equal to the true conditional means.
    pub fn true_models(&self) -> TableModels {
        let (k, m) = (self.n_contexts(), self.n_actions());
        TableModels {
            contexts: self.contexts.clone(),
            secondary: self.secondary.clone(),
            q_xa: (0..k).map(|i| (0..m).map(|a| self.q_bar(i, a)).collect()).collect(),
            q_xas: self
                .secondary
                .iter()
                .map(|per_a| per_a.iter().map(|atoms| atoms.iter().map(|at| at.q).collect()).collect())
                .collect(),
            f_hat: (0..k).map(|i| (0..m).map(|a| self.f_bar(i, a)).collect()).collect(),
            q_pseudo: None,
        }
    }

    /// Per-coordinate closed form of
    /// `n·(Var[r-DR] − Var[target estimator])` for the r-DR whose model term
    /// uses every row:
    /// `E_{p(x)π_0(a|x)p(s|x,a)}[ρ²/p(o|x)² · w² g² · (Δ_{¬s}² − Δ²)]`,
    /// with `ρ² = p(o|x)(1 − p(o|x))`, `Δ_{¬s} = q(x,a,s) − q̂(x,a)` and
    /// `Δ = q(x,a,s) − q̂(x,a,s)`.
    pub fn variance_difference_oracle<M: NuisanceModels + ?Sized>(
        &self,
        policy: &SoftmaxLinearPolicy,
        models: &M,
    ) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = vec![0.0; policy.dim()];
        for (k, x) in self.contexts.iter().enumerate() {
            let p = self.obs_prob[k];
            let factor = p * (1.0 - p) / (p * p);
            let probs = policy.probs(x)?;
            for a in 0..self.n_actions() {
                let w = probs[a] / self.logging[k][a];
                let g = policy.score(x, a)?;
                let q_hat = models.q_xa(x, a);
                for at in &self.secondary[k][a] {
                    let q_hat_s = models.q_xas(x, a, &at.value);
                    let gap = (at.q - q_hat).powi(2) - (at.q - q_hat_s).powi(2);
                    let mass = self.context_probs[k] * self.logging[k][a] * at.prob;
                    for (o, gj) in out.iter_mut().zip(&g) {
                        *o += mass * factor * w * w * gj * gj * gap;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Tabulated nuisance models over an [`EnumerationInstance`]'s support.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModels {
    contexts: Vec<Vec<f64>>,
    secondary: Vec<Vec<Vec<SecondaryAtom>>>,
    /// `[k][a]`
    pub q_xa: Vec<Vec<f64>>,
    /// `[k][a][atom]`
    pub q_xas: Vec<Vec<Vec<f64>>>,
    /// `[k][a]` → vector of length `d_s`
    pub f_hat: Vec<Vec<Vec<f64>>>,
    /// `[k][a]`
    pub q_pseudo: Option<Vec<Vec<f64>>>,
}

impl TableModels {
    fn context_index(&self, x: &[f64]) -> usize {
        self.contexts
            .iter()
            .position(|c| c.as_slice() == x)
            .expect("context outside the enumerated support")
    }

    /// Every table set to zero.
    pub fn zeroed(mut self) -> Self {
        for v in self.q_xa.iter_mut().flatten() {
            *v = 0.0;
        }
        for v in self.q_xas.iter_mut().flatten().flatten() {
            *v = 0.0;
        }
        for v in self.f_hat.iter_mut().flatten().flatten() {
            *v = 0.0;
        }
        self.q_pseudo = self.q_pseudo.map(|q| q.into_iter().map(|r| vec![0.0; r.len()]).collect());
        self
    }

    /// `q̂(x,a,s) := q̂(x,a)` for every atom.
    pub fn secondary_blind(mut self) -> Self {
        for (k, per_a) in self.q_xas.iter_mut().enumerate() {
            for (a, atoms) in per_a.iter_mut().enumerate() {
                atoms.fill(self.q_xa[k][a]);
            }
        }
        self
    }

    pub fn with_q_pseudo(mut self, table: Vec<Vec<f64>>) -> Self {
        self.q_pseudo = Some(table);
        self
    }

    pub fn q_xa_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.q_xa.len(), self.q_xa[0].len()), |(k, a)| self.q_xa[k][a])
    }
}

impl NuisanceModels for TableModels {
    fn q_xa(&self, x: &[f64], a: usize) -> f64 {
        self.q_xa[self.context_index(x)][a]
    }

    fn q_xas(&self, x: &[f64], a: usize, s: &[f64]) -> f64 {
        let k = self.context_index(x);
        let j = self.secondary[k][a]
            .iter()
            .position(|at| at.value.as_slice() == s)
            .expect("secondary reward outside the enumerated support");
        self.q_xas[k][a][j]
    }

    fn f_hat(&self, x: &[f64], a: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.f_hat[self.context_index(x)][a]);
    }

    fn q_pseudo(&self, x: &[f64], a: usize) -> Option<f64> {
        let k = self.context_index(x);
        self.q_pseudo.as_ref().map(|q| q[k][a])
    }
}
