//! Synthetic environment with random linear reward functions.
//!
//! Secondary rewards have means
//! `f_d(x, a) = xᵀM'_d a + xᵀθ'_{x,d} + aᵀθ'_{a,d}` and the target mean is
//! `q(x, a, f) = (1−λ)(xᵀM''a + xᵀθ''_x + aᵀθ''_a + xᵀM_{XF}f + aᵀM_{AF}f) + λ·fᵀθ_f`
//! with one-hot actions. Every parameter is drawn from `U[-1, 1]` off the
//! environment stream of the master seed, in this order:
//!
//! 1. logging policy: `M_{XA}` (row-major `d_x × |A|`), `θ_x`, `θ_a`;
//! 2. for each secondary dimension `d`: `M'_d`, `θ'_{x,d}`, `θ'_{a,d}`;
//! 3. target: `M''`, `θ''_x`, `θ''_a`, `M_{XF}` (`d_x × d_s`),
//!    `M_{AF}` (`|A| × d_s`), `θ_f`.
//!
//! The slope of the noisy observation model comes from its own stream, so
//! switching observation modes leaves the reward functions untouched.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{LoggedDataset, Row};
use crate::error::{Error, Result};
use crate::models::{fit_obs_model, sigmoid};
use crate::policy::{argmax_lowest, sample_from_probs, LoggingPolicy, Policy, SoftmaxLinearPolicy};
use crate::rng::{derive_rng, stream, Rng};

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_N_EVAL: usize = 10_000;
/// Clip range of the true observation probability in noisy mode.
pub const NOISY_OBS_RANGE: (f64, f64) = (0.05, 0.95);
/// `θ_o ~ U[-1, 1]·OBS_SLOPE_SCALE/√d_x` in noisy mode.
pub const OBS_SLOPE_SCALE: f64 = 0.5;

const FORMAT_TAG: &str = "hyper-opl-environment/1";

/// Scalar knobs; the parameter matrices are regenerated from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub seed: u64,
    pub d_x: usize,
    pub n_actions: usize,
    pub d_s: usize,
    /// Share of the target mean explained by `fᵀθ_f`.
    pub lambda: f64,
    /// Logging inverse temperature `φ`.
    pub temperature: f64,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub obs_prob: f64,
    /// `None` keeps `p(o|x)` constant; `Some(σ_o)` switches to the noisy
    /// logistic observation model with estimated propensities.
    pub sigma_o: Option<f64>,
    pub beta: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            d_x: 10,
            n_actions: 10,
            d_s: 5,
            lambda: 0.7,
            temperature: -2.0,
            sigma_s: 0.5,
            sigma_r: 0.5,
            obs_prob: 0.2,
            sigma_o: None,
            beta: 0.3,
        }
    }
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.n_actions == 0 || self.d_s == 0 {
            return Err(Error::Config("environment dimensions must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.obs_prob > 0.0 && self.obs_prob <= 1.0) {
            return Err(Error::Config(format!(
                "observation probability must lie in (0, 1], got {}",
                self.obs_prob
            )));
        }
        if let Some(s) = self.sigma_o {
            if !(s >= 0.0) || self.obs_prob >= 1.0 {
                return Err(Error::Config(
                    "noisy observation mode needs sigma_o >= 0 and obs_prob < 1".into(),
                ));
            }
        }
        if !(self.sigma_s >= 0.0 && self.sigma_r >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    /// Versioned `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = format!("format = {FORMAT_TAG}\n");
        let sigma_o = self.sigma_o.map_or("none".to_string(), |s| format!("{s:?}"));
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("d_x", self.d_x.to_string()),
            ("n_actions", self.n_actions.to_string()),
            ("d_s", self.d_s.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("temperature", format!("{:?}", self.temperature)),
            ("sigma_s", format!("{:?}", self.sigma_s)),
            ("sigma_r", format!("{:?}", self.sigma_r)),
            ("obs_prob", format!("{:?}", self.obs_prob)),
            ("sigma_o", sigma_o),
            ("beta", format!("{:?}", self.beta)),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut tagged = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let real = || v.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")));
            let int = || v.parse::<usize>().map_err(|e| Error::Parse(format!("{k}: {e}")));
            match k {
                "format" if v == FORMAT_TAG => tagged = true,
                "format" => return Err(Error::Parse(format!("unsupported format {v:?}"))),
                "seed" => spec.seed = v.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?,
                "d_x" => spec.d_x = int()?,
                "n_actions" => spec.n_actions = int()?,
                "d_s" => spec.d_s = int()?,
                "lambda" => spec.lambda = real()?,
                "temperature" => spec.temperature = real()?,
                "sigma_s" => spec.sigma_s = real()?,
                "sigma_r" => spec.sigma_r = real()?,
                "obs_prob" => spec.obs_prob = real()?,
                "sigma_o" => spec.sigma_o = if v == "none" { None } else { Some(real()?) },
                "beta" => spec.beta = real()?,
                other => return Err(Error::Parse(format!("unknown key {other:?}"))),
            }
        }
        if !tagged {
            return Err(Error::Parse("missing format line".into()));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `xᵀM a + xᵀθ_x + aᵀθ_a` for one-hot `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearReward {
    /// `d_x × |A|`
    pub m_xa: Array2<f64>,
    pub theta_x: Vec<f64>,
    pub theta_a: Vec<f64>,
}

impl BilinearReward {
    fn draw(rng: &mut Rng, d_x: usize, n_actions: usize) -> Self {
        Self {
            m_xa: uniform_matrix(rng, d_x, n_actions),
            theta_x: uniform_vec(rng, d_x),
            theta_a: uniform_vec(rng, n_actions),
        }
    }

    pub fn eval(&self, x: &[f64], a: usize) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, xj)| xj * (self.m_xa[[j, a]] + self.theta_x[j]))
            .sum::<f64>()
            + self.theta_a[a]
    }

    /// Values for every row and action, `n × |A|`.
    fn eval_matrix(&self, contexts: ArrayView2<f64>) -> Array2<f64> {
        let base = contexts.dot(&ndarray::ArrayView1::from(&self.theta_x));
        let mut out = contexts.dot(&self.m_xa);
        for (mut row, b) in out.outer_iter_mut().zip(base.iter()) {
            for (v, t) in row.iter_mut().zip(&self.theta_a) {
                *v += b + t;
            }
        }
        out
    }
}

fn uniform_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), uniform_vec(rng, rows * cols)).expect("shape")
}

/// How `p(o = 1|x)` is produced and what the dataset records.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSpec {
    Constant(f64),
    /// `clip(sigmoid(logit(base) + xᵀθ_o + ε), 0.05, 0.95)` with
    /// `ε ~ N(0, σ_o²)` drawn per row; datasets carry fitted propensities.
    Noisy {
        base: f64,
        slope: Vec<f64>,
        sigma: f64,
    },
}

impl ObservationSpec {
    /// Draws `θ_o` for the noisy mode.
    pub fn noisy(base: f64, sigma: f64, d_x: usize, rng: &mut Rng) -> Self {
        let scale = OBS_SLOPE_SCALE / (d_x as f64).sqrt();
        Self::Noisy {
            base,
            slope: uniform_vec(rng, d_x).into_iter().map(|t| t * scale).collect(),
            sigma,
        }
    }

    /// True observation probability of one row.
    pub fn draw_prob(&self, x: &[f64], rng: &mut Rng) -> f64 {
        match self {
            Self::Constant(p) => *p,
            Self::Noisy { base, slope, sigma } => {
                let eps: f64 = StandardNormal.sample(rng);
                let z = (base / (1.0 - base)).ln()
                    + x.iter().zip(slope).map(|(x, t)| x * t).sum::<f64>()
                    + sigma * eps;
                sigmoid(z).clamp(NOISY_OBS_RANGE.0, NOISY_OBS_RANGE.1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnvironment {
    pub spec: EnvironmentSpec,
    pub logging: LoggingPolicy,
    pub secondary: Vec<BilinearReward>,
    pub target: BilinearReward,
    /// `d_x × d_s`
    pub m_xf: Array2<f64>,
    /// `|A| × d_s`
    pub m_af: Array2<f64>,
    pub theta_f: Vec<f64>,
    pub observation: ObservationSpec,
}

impl SyntheticEnvironment {
    pub fn new(spec: EnvironmentSpec) -> Result<Self> {
        spec.validate()?;
        let (d_x, k, d_s) = (spec.d_x, spec.n_actions, spec.d_s);
        let mut rng = derive_rng(spec.seed, stream::ENVIRONMENT, 0);
        let log = BilinearReward::draw(&mut rng, d_x, k);
        let logging = LoggingPolicy::new(log.m_xa, log.theta_x, log.theta_a, spec.temperature)?;
        let secondary = (0..d_s).map(|_| BilinearReward::draw(&mut rng, d_x, k)).collect();
        let target = BilinearReward::draw(&mut rng, d_x, k);
        let m_xf = uniform_matrix(&mut rng, d_x, d_s);
        let m_af = uniform_matrix(&mut rng, k, d_s);
        let theta_f = uniform_vec(&mut rng, d_s);
        let observation = match spec.sigma_o {
            None => ObservationSpec::Constant(spec.obs_prob),
            Some(sigma) => {
                let mut rng = derive_rng(spec.seed, stream::OBSERVATION_NOISE, 0);
                ObservationSpec::noisy(spec.obs_prob, sigma, d_x, &mut rng)
            }
        };
        Ok(Self {
            spec,
            logging,
            secondary,
            target,
            m_xf,
            m_af,
            theta_f,
            observation,
        })
    }

    pub fn with_defaults(seed: u64) -> Result<Self> {
        Self::new(EnvironmentSpec {
            seed,
            ..EnvironmentSpec::default()
        })
    }

    pub fn d_x(&self) -> usize {
        self.spec.d_x
    }

    pub fn n_actions(&self) -> usize {
        self.spec.n_actions
    }

    pub fn d_s(&self) -> usize {
        self.spec.d_s
    }

    /// `f(x, a)`
    pub fn expected_secondary(&self, x: &[f64], a: usize) -> Vec<f64> {
        self.secondary.iter().map(|f| f.eval(x, a)).collect()
    }

    /// `q(x, a, f)` at a given secondary vector.
    pub fn target_given(&self, x: &[f64], a: usize, f: &[f64]) -> f64 {
        let lambda = self.spec.lambda;
        let coupling: f64 = (0..self.d_s())
            .map(|t| {
                let xf: f64 = x.iter().enumerate().map(|(j, xj)| xj * self.m_xf[[j, t]]).sum();
                f[t] * (xf + self.m_af[[a, t]])
            })
            .sum();
        let surrogate: f64 = f.iter().zip(&self.theta_f).map(|(f, t)| f * t).sum();
        (1.0 - lambda) * (self.target.eval(x, a) + coupling) + lambda * surrogate
    }

    /// `q(x, a, f(x, a))`
    pub fn expected_target(&self, x: &[f64], a: usize) -> f64 {
        self.target_given(x, a, &self.expected_secondary(x, a))
    }

    pub fn sample_context(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.d_x()).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Draws one row; returns it with its true observation probability.
    pub fn sample_row(&self, rng: &mut Rng) -> Result<Row> {
        let context = self.sample_context(rng);
        let probs = self.logging.probs(&context)?;
        let action = sample_from_probs(&probs, rng);
        let f = self.expected_secondary(&context, action);
        let secondary: Vec<f64> = f
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.spec.sigma_s * z
            })
            .collect();
        let obs_prob = self.observation.draw_prob(&context, rng);
        let observed = rng.random::<f64>() < obs_prob;
        let z: f64 = StandardNormal.sample(rng);
        let r = self.target_given(&context, action, &f) + self.spec.sigma_r * z;
        Ok(Row {
            context,
            action,
            pscore: probs[action],
            secondary,
            target: observed.then_some(r),
            obs_prob,
        })
    }

    /// `n` logged rows. In noisy observation mode the recorded observation
    /// probabilities are the fitted `p̂(o|x)`, not the true ones.
    pub fn sample_dataset(&self, n: usize, rng: &mut Rng) -> Result<LoggedDataset> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let rows = (0..n).map(|_| self.sample_row(rng)).collect::<Result<Vec<_>>>()?;
        let d = LoggedDataset::from_rows(&rows, self.n_actions())?;
        match self.observation {
            ObservationSpec::Constant(_) => Ok(d),
            ObservationSpec::Noisy { .. } => {
                let model = fit_obs_model(&d)?;
                let fitted = (0..d.len()).map(|i| model.predict(d.context(i))).collect();
                d.with_obs_prob(fitted)
            }
        }
    }

    /// Fresh evaluation contexts with the reward tables precomputed.
    pub fn evaluation_set(&self, n_eval: usize, rng: &mut Rng) -> Result<EvaluationSet> {
        if n_eval == 0 {
            return Err(Error::Config("evaluation needs at least one context".into()));
        }
        let contexts = Array2::from_shape_fn((n_eval, self.d_x()), |_| StandardNormal.sample(rng));
        Ok(self.evaluation_set_at(contexts))
    }

    /// Evaluation tables at the given contexts.
    pub fn evaluation_set_at(&self, contexts: Array2<f64>) -> EvaluationSet {
        let (n, k, d_s) = (contexts.nrows(), self.n_actions(), self.d_s());
        let f: Vec<Array2<f64>> = self
            .secondary
            .iter()
            .map(|s| s.eval_matrix(contexts.view()))
            .collect();
        let mut secondary = Array2::zeros((n, k));
        for ft in &f {
            secondary += ft;
        }
        let base = self.target.eval_matrix(contexts.view());
        let xf = contexts.dot(&self.m_xf);
        let lambda = self.spec.lambda;
        let target = Array2::from_shape_fn((n, k), |(i, a)| {
            let mut coupling = 0.0;
            let mut surrogate = 0.0;
            for t in 0..d_s {
                let ft = f[t][[i, a]];
                coupling += ft * (xf[[i, t]] + self.m_af[[a, t]]);
                surrogate += ft * self.theta_f[t];
            }
            (1.0 - lambda) * (base[[i, a]] + coupling) + lambda * surrogate
        });
        EvaluationSet {
            contexts,
            target,
            secondary,
        }
    }

    pub fn true_values(
        &self,
        policy: &SoftmaxLinearPolicy,
        n_eval: usize,
        rng: &mut Rng,
        beta: f64,
    ) -> Result<PolicyValues> {
        self.evaluation_set(n_eval, rng)?.softmax_values(policy, beta)
    }

    /// `(V(π*), V(π_unif))` for the combined objective with weight `beta`.
    pub fn optimal_and_uniform_values(
        &self,
        beta: f64,
        n_eval: usize,
        rng: &mut Rng,
    ) -> Result<(PolicyValues, PolicyValues)> {
        let eval = self.evaluation_set(n_eval, rng)?;
        Ok((eval.optimal(beta), eval.uniform(beta)))
    }
}

/// `V_r`, `V_s` and `V_c = (1−β)V_r + βV_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyValues {
    pub target: f64,
    pub secondary: f64,
    pub combined: f64,
}

impl PolicyValues {
    fn new(target: f64, secondary: f64, beta: f64) -> Self {
        Self {
            target,
            secondary,
            combined: (1.0 - beta) * target + beta * secondary,
        }
    }
}

/// Ground-truth reward tables at a fixed set of contexts: `q(x_i, a)` and
/// `Σ_d f_d(x_i, a)`, both `n × |A|`. Shared by every method compared within
/// one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    pub contexts: Array2<f64>,
    pub target: Array2<f64>,
    pub secondary: Array2<f64>,
}

impl EvaluationSet {
    pub fn len(&self) -> usize {
        self.contexts.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of a policy given its `n × |A|` action probabilities.
    pub fn values_from_probs(&self, probs: &Array2<f64>, beta: f64) -> PolicyValues {
        let n = self.len() as f64;
        let target = (probs * &self.target).sum() / n;
        let secondary = (probs * &self.secondary).sum() / n;
        PolicyValues::new(target, secondary, beta)
    }

    pub fn softmax_values(&self, policy: &SoftmaxLinearPolicy, beta: f64) -> Result<PolicyValues> {
        Ok(self.values_from_probs(&policy.probs_matrix(self.contexts.view())?, beta))
    }

    pub fn values<P: Policy + ?Sized>(&self, policy: &P, beta: f64) -> PolicyValues {
        let mut probs = Array2::zeros(self.target.dim());
        for (i, mut row) in probs.outer_iter_mut().enumerate() {
            let x = self.contexts.row(i);
            policy.probs_into(x.as_slice().expect("standard layout"), row.as_slice_mut().expect("standard layout"));
        }
        self.values_from_probs(&probs, beta)
    }

    /// The policy maximizing `(1−β)q + βΣf` per context, ties to the lowest
    /// action.
    pub fn optimal(&self, beta: f64) -> PolicyValues {
        let n = self.len() as f64;
        let (mut target, mut secondary) = (0.0, 0.0);
        for (t, s) in self.target.outer_iter().zip(self.secondary.outer_iter()) {
            let scores: Vec<f64> = t.iter().zip(s).map(|(t, s)| (1.0 - beta) * t + beta * s).collect();
            let a = argmax_lowest(&scores);
            target += t[a];
            secondary += s[a];
        }
        PolicyValues::new(target / n, secondary / n, beta)
    }

    pub fn uniform(&self, beta: f64) -> PolicyValues {
        // accumulated row by row like `optimal`, so a single action gives
        // bitwise-equal references
        let n = self.len() as f64;
        let (mut target, mut secondary) = (0.0, 0.0);
        for (t, s) in self.target.outer_iter().zip(self.secondary.outer_iter()) {
            let k = t.len() as f64;
            target += t.iter().sum::<f64>() / k;
            secondary += s.iter().sum::<f64>() / k;
        }
        PolicyValues::new(target / n, secondary / n, beta)
    }

    /// Relative combined, target and secondary values of a policy; each
    /// metric is normalized by the optimum of that same metric.
    pub fn relative(&self, v: &PolicyValues, beta: f64) -> Result<PolicyValues> {
        let unif = self.uniform(beta);
        let combined = relative_value(v.combined, self.optimal(beta).combined, unif.combined)?;
        let target = relative_value(v.target, self.optimal(0.0).target, unif.target)?;
        let secondary = relative_value(v.secondary, self.optimal(1.0).secondary, unif.secondary)?;
        Ok(PolicyValues {
            target,
            secondary,
            combined,
        })
    }
}

/// `(V − V_unif) / (V_opt − V_unif)`: zero for the uniform policy, one for the
/// optimal one.
pub fn relative_value(v: f64, v_opt: f64, v_unif: f64) -> Result<f64> {
    let span = v_opt - v_unif;
    if span == 0.0 || !span.is_finite() {
        return Err(Error::DegenerateEnvironment(span));
    }
    Ok((v - v_unif) / span)
}
