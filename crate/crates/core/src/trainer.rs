//! Full-batch gradient ascent on a softmax policy, and greedy regression
//! baselines.

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, SurrogateAggregator};
use crate::models::{NuisanceModels, Predictions};
use crate::policy::{GreedyPolicy, SoftmaxLinearPolicy};

pub const DEFAULT_STEP_SIZE: f64 = 0.05;
pub const DEFAULT_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub step_size: f64,
    pub iterations: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            step_size: DEFAULT_STEP_SIZE,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: SoftmaxLinearPolicy,
    /// Estimated objective at every iterate, `iterations + 1` entries; the
    /// last one is measured at the returned parameters.
    pub value_trace: Vec<f64>,
}

/// Starts from `θ = 0` and takes `iterations` steps `θ ← θ + η·∇̂V(θ)`.
///
/// The loop is deterministic given its inputs, so no seed is involved.
pub fn train_policy(
    d: &LoggedDataset,
    estimator: &EstimatorConfig,
    preds: &Predictions,
    agg: Option<&SurrogateAggregator>,
    cfg: &TrainerConfig,
) -> Result<TrainedPolicy> {
    if !(cfg.step_size.is_finite() && cfg.step_size >= 0.0) {
        return Err(Error::Config(format!(
            "step size must be finite and non-negative, got {}",
            cfg.step_size
        )));
    }
    let mut policy = SoftmaxLinearPolicy::zeros(d.d_x(), d.n_actions());
    let mut value_trace = Vec::with_capacity(cfg.iterations + 1);
    for iteration in 0..=cfg.iterations {
        let est = estimate(estimator, d, &policy, preds, agg)?;
        if !est.gradient.is_finite() || !est.value.is_finite() {
            return Err(Error::TrainingDiverged { iteration });
        }
        value_trace.push(est.value);
        if iteration == cfg.iterations {
            break;
        }
        for (t, g) in policy.theta_mut().iter_mut().zip(est.gradient.values()) {
            *t += cfg.step_size * g;
        }
    }
    Ok(TrainedPolicy {
        policy,
        value_trace,
    })
}

/// Which regressor the greedy baseline maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectMethod {
    /// `argmax_a q̂(x, a)`
    Target,
    /// `argmax_a F(f̂(x, a))`
    Surrogate,
}

/// Deterministic policy picking the action with the highest predicted reward,
/// ties to the lowest index.
pub fn direct_method_policy<M>(
    models: M,
    n_actions: usize,
    d_s: usize,
    mode: DirectMethod,
    agg: Option<SurrogateAggregator>,
) -> Result<GreedyPolicy>
where
    M: NuisanceModels + Send + Sync + 'static,
{
    match mode {
        DirectMethod::Target => Ok(GreedyPolicy::new(n_actions, move |x| {
            (0..n_actions).map(|a| models.q_xa(x, a)).collect()
        })),
        DirectMethod::Surrogate => {
            let agg = agg.ok_or_else(|| {
                Error::Config("the surrogate direct method needs an aggregator".into())
            })?;
            if agg.dim() != d_s {
                return Err(Error::DimensionMismatch {
                    expected: d_s,
                    got: agg.dim(),
                });
            }
            Ok(GreedyPolicy::new(n_actions, move |x| {
                let mut f = vec![0.0; d_s];
                (0..n_actions)
                    .map(|a| {
                        models.f_hat(x, a, &mut f);
                        agg.apply(&f)
                    })
                    .collect()
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{EnumerationInstance, EstimatorKind};
    use crate::policy::Policy;
    use crate::rng::rng_from_seed;

    fn bundled_data(n: usize) -> (EnumerationInstance, LoggedDataset) {
        let inst = EnumerationInstance::bundled();
        let d = inst.sample_dataset(n, &mut rng_from_seed(11)).unwrap();
        (inst, d)
    }

    #[test]
    fn zero_step_keeps_uniform_start() {
        let (inst, d) = bundled_data(200);
        let preds = Predictions::compute(&d, &inst.true_models());
        let cfg = TrainerConfig {
            step_size: 0.0,
            iterations: 20,
        };
        let out = train_policy(&d, &EstimatorConfig::new(EstimatorKind::HyperR), &preds, None, &cfg)
            .unwrap();
        assert!(out.policy.theta().iter().all(|&t| t == 0.0));
        assert_eq!(out.value_trace.len(), 21);
    }

    #[test]
    fn repeated_training_is_bitwise_identical() {
        let (inst, d) = bundled_data(300);
        let preds = Predictions::compute(&d, &inst.true_models());
        let est = EstimatorConfig::hyper(0.4);
        let a = train_policy(&d, &est, &preds, None, &TrainerConfig::default()).unwrap();
        let b = train_policy(&d, &est, &preds, None, &TrainerConfig::default()).unwrap();
        assert_eq!(a.policy.theta(), b.policy.theta());
        assert_eq!(a.value_trace, b.value_trace);
    }

    #[test]
    fn non_finite_gradient_reports_iteration() {
        let (inst, d) = bundled_data(50);
        let mut preds = Predictions::compute(&d, &inst.true_models());
        preds.q_xa[[0, 0]] = f64::NAN;
        let err = train_policy(&d, &EstimatorConfig::new(EstimatorKind::HyperR), &preds, None, &TrainerConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { iteration: 0 }));
    }

    #[test]
    fn constant_model_picks_action_zero() {
        let inst = EnumerationInstance::bundled();
        let models = inst.true_models().zeroed();
        let dm = direct_method_policy(models, 3, 2, DirectMethod::Target, None).unwrap();
        for x in &inst.contexts {
            assert_eq!(dm.select(x), 0);
            assert_eq!(dm.action_probs(x), vec![1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn exact_model_picks_true_argmax() {
        let inst = EnumerationInstance::bundled();
        let dm = direct_method_policy(inst.true_models(), 3, 2, DirectMethod::Target, None).unwrap();
        for (k, x) in inst.contexts.iter().enumerate() {
            let best = crate::policy::argmax_lowest(&(0..3).map(|a| inst.q_bar(k, a)).collect::<Vec<_>>());
            assert_eq!(dm.select(x), best);
        }
    }

    #[test]
    fn surrogate_mode_needs_aggregator() {
        let inst = EnumerationInstance::bundled();
        assert!(direct_method_policy(inst.true_models(), 3, 2, DirectMethod::Surrogate, None).is_err());
        let agg = SurrogateAggregator::exact(vec![1.0, 0.0]);
        let dm = direct_method_policy(inst.true_models(), 3, 2, DirectMethod::Surrogate, Some(agg)).unwrap();
        for (k, x) in inst.contexts.iter().enumerate() {
            let f1: Vec<f64> = (0..3).map(|a| inst.f_bar(k, a)[0]).collect();
            assert_eq!(dm.select(x), crate::policy::argmax_lowest(&f1));
        }
    }
}
