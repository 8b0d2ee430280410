use ndarray::{Array2, ArrayView1, ArrayViewMut1};

use super::{Estimate, EstimatorConfig, EstimatorKind, GradientEstimate, SurrogateAggregator};
use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::models::Predictions;
use crate::policy::{Policy, SoftmaxLinearPolicy};

/// Per-row view handed to the estimator bodies.
struct RowCtx<'a> {
    i: usize,
    action: usize,
    probs: ArrayView1<'a, f64>,
    /// importance weight π_θ(a_i|x_i)/π_0(a_i|x_i)
    w: f64,
    /// o_i / p(o_i|x_i); zero for unobserved rows
    obs_weight: f64,
}

/// Accumulates `c·g_θ(x, a_i)` and `E_π[h(a)·g_θ(x, a)]` into one row of
/// coefficients.
struct RowCoef<'a> {
    coef: ArrayViewMut1<'a, f64>,
}

impl RowCoef<'_> {
    /// `+= c·(e_a − π)`
    fn logged(&mut self, probs: &ArrayView1<f64>, a: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        for (k, p) in self.coef.iter_mut().zip(probs) {
            *k -= c * p;
        }
        self.coef[a] += c;
    }

    /// `+= scale·π⊙(h − E_π[h])`; returns `E_π[h]`.
    fn expected(&mut self, probs: &ArrayView1<f64>, h: impl Fn(usize) -> f64, scale: f64) -> f64 {
        let mean: f64 = probs.iter().enumerate().map(|(a, p)| p * h(a)).sum();
        if scale != 0.0 {
            for (a, (k, p)) in self.coef.iter_mut().zip(probs).enumerate() {
                *k += scale * p * (h(a) - mean);
            }
        }
        mean
    }
}

fn run(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    weight_clip: Option<f64>,
    mut body: impl FnMut(&RowCtx, &mut RowCoef) -> Result<f64>,
) -> Result<Estimate> {
    if policy.n_actions() != d.n_actions() {
        return Err(Error::DimensionMismatch {
            expected: d.n_actions(),
            got: policy.n_actions(),
        });
    }
    let probs = policy.probs_matrix(d.contexts())?;
    let mut coef = Array2::zeros(probs.dim());
    let mut value = 0.0;
    for (i, (p_row, c_row)) in probs.outer_iter().zip(coef.outer_iter_mut()).enumerate() {
        let action = d.actions()[i];
        let mut w = p_row[action] / d.pscores()[i];
        if let Some(clip) = weight_clip {
            w = w.min(clip);
        }
        let obs_weight = if d.obs_flags()[i] {
            1.0 / d.obs_prob()[i]
        } else {
            0.0
        };
        let ctx = RowCtx {
            i,
            action,
            probs: p_row,
            w,
            obs_weight,
        };
        value += body(&ctx, &mut RowCoef { coef: c_row })?;
    }
    let n = d.len() as f64;
    let gradient: Vec<f64> = policy
        .project(d.contexts(), &coef)
        .into_iter()
        .map(|g| g / n)
        .collect();
    Ok(Estimate {
        value: value / n,
        gradient: GradientEstimate(gradient),
    })
}

fn require_target(d: &LoggedDataset, i: usize) -> Result<f64> {
    d.target()[i].ok_or(Error::MissingReward(i))
}

fn require_aggregator(agg: Option<&SurrogateAggregator>) -> Result<&SurrogateAggregator> {
    agg.ok_or_else(|| Error::Config("estimator needs a surrogate aggregator F(s)".into()))
}

fn check_shapes(d: &LoggedDataset, preds: &Predictions) -> Result<()> {
    if preds.q_xa.dim() != (d.len(), d.n_actions()) || preds.q_xas.len() != d.len() {
        return Err(Error::Config(
            "predictions were not computed on this dataset".into(),
        ));
    }
    Ok(())
}

// ── Row bodies ──────────────────────────────────────────────────────────

fn dr_row(
    c: &RowCtx,
    k: &mut RowCoef,
    reward: f64,
    q: ArrayView1<f64>,
    scale: f64,
) -> f64 {
    let model = k.expected(&c.probs, |a| q[a], scale);
    let resid = c.w * (reward - q[c.action]);
    k.logged(&c.probs, c.action, scale * resid);
    scale * (model + resid)
}

fn hyper_r_row(d: &LoggedDataset, preds: &Predictions, c: &RowCtx, k: &mut RowCoef, scale: f64) -> Result<f64> {
    let q = preds.q_xa.row(c.i);
    let q_s = preds.q_xas[c.i];
    let model = k.expected(&c.probs, |a| q[a], scale);
    let shift = c.w * (q_s - q[c.action]);
    let mut total = model + shift;
    let mut logged = shift;
    if c.obs_weight > 0.0 {
        let r = require_target(d, c.i)?;
        let corr = c.obs_weight * c.w * (r - q_s);
        total += corr;
        logged += corr;
    }
    k.logged(&c.probs, c.action, scale * logged);
    Ok(scale * total)
}

fn s_value_row(d: &LoggedDataset, preds: &Predictions, c: &RowCtx, k: &mut RowCoef, scale: f64) -> f64 {
    let f = preds.f_hat.index_axis(ndarray::Axis(0), c.i);
    let f_sum = |a: usize| f.row(a).sum();
    let model = k.expected(&c.probs, f_sum, scale);
    let s_sum: f64 = d.secondary_row(c.i).iter().sum();
    let resid = c.w * (s_sum - f_sum(c.action));
    k.logged(&c.probs, c.action, scale * resid);
    scale * (model + resid)
}

// ── Public estimators ───────────────────────────────────────────────────

/// Dispatch on `cfg.kind`.
pub fn estimate(
    cfg: &EstimatorConfig,
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    agg: Option<&SurrogateAggregator>,
) -> Result<Estimate> {
    if cfg.kind != EstimatorKind::Ips && cfg.kind != EstimatorKind::RIps && cfg.kind != EstimatorKind::SIps {
        check_shapes(d, preds)?;
    }
    let clip = cfg.weight_clip;
    match cfg.kind {
        EstimatorKind::Ips => run(d, policy, clip, |c, k| {
            let r = require_target(d, c.i)?;
            k.logged(&c.probs, c.action, c.w * r);
            Ok(c.w * r)
        }),
        EstimatorKind::Dr => run(d, policy, clip, |c, k| {
            let r = require_target(d, c.i)?;
            Ok(dr_row(c, k, r, preds.q_xa.row(c.i), 1.0))
        }),
        EstimatorKind::RIps => run(d, policy, clip, |c, k| {
            if c.obs_weight == 0.0 {
                return Ok(0.0);
            }
            let v = c.obs_weight * c.w * require_target(d, c.i)?;
            k.logged(&c.probs, c.action, v);
            Ok(v)
        }),
        EstimatorKind::RDr => run(d, policy, clip, |c, k| {
            if c.obs_weight == 0.0 {
                return Ok(0.0);
            }
            let r = require_target(d, c.i)?;
            Ok(dr_row(c, k, r, preds.q_xa.row(c.i), c.obs_weight))
        }),
        EstimatorKind::SIps => {
            let agg = require_aggregator(agg)?;
            run(d, policy, clip, |c, k| {
                let v = c.w * agg.apply(d.secondary_row(c.i));
                k.logged(&c.probs, c.action, v);
                Ok(v)
            })
        }
        EstimatorKind::SDr => {
            let agg = require_aggregator(agg)?;
            run(d, policy, clip, |c, k| {
                let f = preds.f_hat.index_axis(ndarray::Axis(0), c.i);
                let f_agg = |a: usize| agg.apply(f.row(a).as_slice().expect("standard layout"));
                let model = k.expected(&c.probs, f_agg, 1.0);
                let resid = c.w * (agg.apply(d.secondary_row(c.i)) - f_agg(c.action));
                k.logged(&c.probs, c.action, resid);
                Ok(model + resid)
            })
        }
        EstimatorKind::HyperR => run(d, policy, clip, |c, k| hyper_r_row(d, preds, c, k, 1.0)),
        EstimatorKind::SGrad => run(d, policy, clip, |c, k| Ok(s_value_row(d, preds, c, k, 1.0))),
        EstimatorKind::Hyper => {
            let gamma = cfg.gamma;
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
            }
            run(d, policy, clip, |c, k| {
                let target = hyper_r_row(d, preds, c, k, 1.0 - gamma)?;
                Ok(target + s_value_row(d, preds, c, k, gamma))
            })
        }
        EstimatorKind::DrFsr => {
            let agg = require_aggregator(agg)?;
            let q = preds.q_pseudo.as_ref().ok_or_else(|| {
                Error::Config("DR with F(s, r) needs the pseudo-reward regressor".into())
            })?;
            run(d, policy, clip, |c, k| {
                let reward = match d.target()[c.i] {
                    Some(r) => r,
                    None => agg.apply(d.secondary_row(c.i)),
                };
                Ok(dr_row(c, k, reward, q.row(c.i), 1.0))
            })
        }
    }
}

fn grad(
    kind: EstimatorKind,
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    agg: Option<&SurrogateAggregator>,
) -> Result<GradientEstimate> {
    Ok(estimate(&EstimatorConfig::new(kind), d, policy, preds, agg)?.gradient)
}

/// `(1/n) Σ w_i r_i g_i`; every target must be observed.
pub fn grad_ips(d: &LoggedDataset, policy: &SoftmaxLinearPolicy) -> Result<GradientEstimate> {
    grad(EstimatorKind::Ips, d, policy, &Predictions::zeros(d), None)
}

/// `(1/n) Σ { w_i (r_i − q̂(x_i,a_i)) g_i + E_π[q̂(x_i,a) g(x_i,a)] }`.
pub fn grad_dr(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::Dr, d, policy, preds, None)
}

/// IPS over observed rows, reweighted by `o_i / p(o_i|x_i)`.
pub fn grad_r_ips(d: &LoggedDataset, policy: &SoftmaxLinearPolicy) -> Result<GradientEstimate> {
    grad(EstimatorKind::RIps, d, policy, &Predictions::zeros(d), None)
}

/// DR over observed rows; `o_i / p(o_i|x_i)` scales both the residual and the
/// model term.
pub fn grad_r_dr(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::RDr, d, policy, preds, None)
}

/// The r-DR variant whose model term uses every row and whose residual alone
/// is scaled by `o_i / p(o_i|x_i)`. This is the form whose variance gap to
/// [`grad_hyper_r`] has the closed form in
/// [`EnumerationInstance::variance_difference_oracle`].
pub fn grad_r_dr_residual(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
) -> Result<GradientEstimate> {
    check_shapes(d, preds)?;
    Ok(run(d, policy, None, |c, k| {
        let q = preds.q_xa.row(c.i);
        let model = k.expected(&c.probs, |a| q[a], 1.0);
        if c.obs_weight == 0.0 {
            return Ok(model);
        }
        let resid = c.obs_weight * c.w * (require_target(d, c.i)? - q[c.action]);
        k.logged(&c.probs, c.action, resid);
        Ok(model + resid)
    })?
    .gradient)
}

/// `(1/n) Σ w_i F(s_i) g_i`.
pub fn grad_s_ips(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    agg: &SurrogateAggregator,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::SIps, d, policy, &Predictions::zeros(d), Some(agg))
}

/// DR on `F(s)` with the plug-in model `F(f̂(x, a))`.
pub fn grad_s_dr(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    agg: &SurrogateAggregator,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::SDr, d, policy, preds, Some(agg))
}

/// Target-reward gradient:
/// `(1/n) Σ { E_π[q̂(x_i,a) g] + w_i (q̂(x_i,a_i,s_i) − q̂(x_i,a_i)) g_i
///            + (o_i/p_i) w_i (r_i − q̂(x_i,a_i,s_i)) g_i }`.
pub fn grad_hyper_r(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::HyperR, d, policy, preds, None)
}

/// DR gradient of `Σ_d s_d`.
pub fn grad_s_value(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::SGrad, d, policy, preds, None)
}

/// `(1−γ)·grad_hyper_r + γ·grad_s_value`, in one pass.
pub fn grad_hyper(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    gamma: f64,
) -> Result<GradientEstimate> {
    Ok(estimate(&EstimatorConfig::hyper(gamma), d, policy, preds, None)?.gradient)
}

/// Plain DR on the pseudo-reward `o·r + (1−o)·F(s)`, using the regressor
/// fitted on that pseudo-reward (`preds.q_pseudo`).
pub fn grad_dr_fsr(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    agg: &SurrogateAggregator,
) -> Result<GradientEstimate> {
    grad(EstimatorKind::DrFsr, d, policy, preds, Some(agg))
}

/// Estimated combined value `(1−β)·V̂_r + β·V̂_s`, the value analogue of the
/// `γ = β` mixture.
pub fn value_estimate(
    d: &LoggedDataset,
    policy: &SoftmaxLinearPolicy,
    preds: &Predictions,
    beta: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    Ok(estimate(&EstimatorConfig::hyper(beta), d, policy, preds, None)?.value)
}
