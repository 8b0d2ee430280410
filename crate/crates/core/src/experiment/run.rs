//! Paired simulation runs: every method of one `(axis value, sim)` pair sees
//! the same logged dataset and the same evaluation contexts.

use rayon::prelude::*;

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind, SurrogateAggregator};
use crate::models::{fit_obs_model, FittedModels, Predictions};
use crate::policy::Policy;
use crate::realdata::{self, InteractionMatrix, RealDataSpec, SchemaConfig, SECONDARY_DIM};
use crate::rng::{derive_rng, derive_seed, stream};
use crate::synth::{EnvironmentSpec, EvaluationSet, PolicyValues, SyntheticEnvironment};
use crate::trainer::{direct_method_policy, train_policy, DirectMethod, TrainerConfig};
use crate::tuner::{tune_gamma, tune_gamma_no_replacement, TunerConfig, TuningResult};

use super::config::{Axis, Method, ProblemKind, SweepConfig};

/// What a method achieved in one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    /// Mixture weight used, for methods that choose one.
    pub gamma: Option<f64>,
    pub values: PolicyValues,
    pub relative: PolicyValues,
}

/// One `(axis value, sim, method)` result; failures keep their message.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub axis_value: f64,
    pub sim: usize,
    pub seed: u64,
    pub method: Method,
    pub outcome: std::result::Result<MethodOutcome, String>,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Everything the methods of one simulation share.
pub struct SimProblem {
    pub dataset: LoggedDataset,
    pub evaluation: EvaluationSet,
    pub aggregator: SurrogateAggregator,
    pub beta: f64,
}

/// Seed of simulation `sim`, reused at every axis value.
pub fn sim_seed(master: u64, sim: usize) -> u64 {
    derive_seed(master, stream::SIMULATION, sim as u64)
}

/// The configuration with the axis knob set to `value`.
pub fn at_axis_value(cfg: &SweepConfig, value: f64) -> Result<SweepConfig> {
    let mut c = cfg.clone();
    let count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("axis {} needs a positive integer, got {v}", cfg.axis)))
        }
    };
    match cfg.axis {
        Axis::ObsProb => c.obs_prob = value,
        Axis::N => c.n = Some(count(value)?),
        Axis::Lambda => c.lambda = value,
        Axis::Beta => c.beta = value,
        Axis::SigmaS => c.sigma_s = value,
        Axis::SigmaR => c.sigma_r = value,
        Axis::SigmaO => c.sigma_o = Some(value),
        Axis::NActions => c.n_actions = Some(count(value)?),
    }
    Ok(c)
}

pub fn environment_spec(cfg: &SweepConfig, seed: u64) -> EnvironmentSpec {
    EnvironmentSpec {
        seed,
        d_x: cfg.d_x,
        n_actions: cfg.n_actions(),
        d_s: cfg.d_s,
        lambda: cfg.lambda,
        temperature: cfg.temperature,
        sigma_s: cfg.sigma_s,
        sigma_r: cfg.sigma_r,
        obs_prob: cfg.obs_prob,
        sigma_o: cfg.sigma_o,
        beta: cfg.beta,
    }
}

pub fn realdata_spec(cfg: &SweepConfig) -> RealDataSpec {
    RealDataSpec {
        n_actions: cfg.n_actions(),
        n: cfg.n(),
        obs_prob: cfg.obs_prob,
        temperature: cfg.temperature,
        train_share: cfg.train_share,
        beta: cfg.beta,
    }
}

pub fn tuner_config(cfg: &SweepConfig) -> TunerConfig {
    TunerConfig {
        grid: cfg.gamma_grid.clone(),
        split_ratio: cfg.split_ratio,
        n_boot: cfg.n_boot,
        ridge_lambda: cfg.ridge_lambda,
        trainer: trainer_config(cfg),
    }
}

fn trainer_config(cfg: &SweepConfig) -> TrainerConfig {
    TrainerConfig {
        step_size: cfg.step_size,
        iterations: cfg.iterations,
    }
}

/// Loads the interaction matrix a real-data sweep reads from.
pub fn load_sweep_matrix(cfg: &SweepConfig) -> Result<Option<InteractionMatrix>> {
    match (cfg.problem, &cfg.data_dir) {
        (ProblemKind::Synthetic, _) => Ok(None),
        (ProblemKind::RealData, Some(dir)) => realdata::load_matrix(dir, &SchemaConfig::default()).map(Some),
        (ProblemKind::RealData, None) => Err(Error::Config("realdata sweeps need data_dir".into())),
    }
}

/// Builds the shared problem of one simulation from an axis-resolved config.
pub fn build_problem(cfg: &SweepConfig, matrix: Option<&InteractionMatrix>, seed: u64) -> Result<SimProblem> {
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1], got {}", cfg.beta)));
    }
    let (dataset, evaluation, aggregator) = match (cfg.problem, matrix) {
        (ProblemKind::Synthetic, _) => {
            let env = SyntheticEnvironment::new(environment_spec(cfg, seed))?;
            let d = env.sample_dataset(cfg.n(), &mut derive_rng(seed, stream::DATASET, 0))?;
            let eval = env.evaluation_set(cfg.n_eval, &mut derive_rng(seed, stream::EVALUATION, 0))?;
            let mut rng = derive_rng(seed, stream::SURROGATE_NOISE, 0);
            let agg = SurrogateAggregator::with_noise(env.theta_f.clone(), cfg.sigma_f, &mut rng)?;
            (d, eval, agg)
        }
        (ProblemKind::RealData, Some(m)) => {
            let problem = realdata::make_opl_problem(m, &realdata_spec(cfg), seed)?;
            let mut first = vec![0.0; SECONDARY_DIM];
            first[0] = 1.0;
            (problem.dataset, problem.evaluation, SurrogateAggregator::exact(first))
        }
        (ProblemKind::RealData, None) => {
            return Err(Error::Config("realdata problems need a loaded matrix".into()))
        }
    };
    let dataset = if cfg.estimate_obs_prob {
        let model = fit_obs_model(&dataset)?;
        let fitted = (0..dataset.len()).map(|i| model.predict(dataset.context(i))).collect();
        dataset.with_obs_prob(fitted)?
    } else {
        dataset
    };
    Ok(SimProblem {
        dataset,
        evaluation,
        aggregator,
        beta: cfg.beta,
    })
}

struct Fitted<'a> {
    problem: &'a SimProblem,
    models: FittedModels,
    preds: Predictions,
}

impl Fitted<'_> {
    fn outcome<P: Policy + ?Sized>(&self, policy: &P, gamma: Option<f64>) -> Result<MethodOutcome> {
        let values = self.problem.evaluation.values(policy, self.problem.beta);
        Ok(MethodOutcome {
            gamma,
            values,
            relative: self.problem.evaluation.relative(&values, self.problem.beta)?,
        })
    }

    fn gradient_method(&self, est: EstimatorConfig, trainer: &TrainerConfig, gamma: Option<f64>) -> Result<MethodOutcome> {
        let trained = train_policy(
            &self.problem.dataset,
            &est,
            &self.preds,
            Some(&self.problem.aggregator),
            trainer,
        )?;
        self.outcome(&trained.policy, gamma)
    }
}

fn run_method(fitted: &Fitted, method: Method, cfg: &SweepConfig, seed: u64) -> Result<MethodOutcome> {
    let trainer = trainer_config(cfg);
    let beta = fitted.problem.beta;
    let plain = |kind| fitted.gradient_method(EstimatorConfig::new(kind), &trainer, None);
    let tuned = |result: TuningResult| {
        fitted.gradient_method(EstimatorConfig::hyper(result.gamma_hat), &trainer, Some(result.gamma_hat))
    };
    let d = &fitted.problem.dataset;
    match method {
        Method::RIps => plain(EstimatorKind::RIps),
        Method::RDr => plain(EstimatorKind::RDr),
        Method::SIps => plain(EstimatorKind::SIps),
        Method::SDr => plain(EstimatorKind::SDr),
        Method::DrFsr => plain(EstimatorKind::DrFsr),
        Method::HyperBeta => fitted.gradient_method(EstimatorConfig::hyper(beta), &trainer, Some(beta)),
        Method::HyperZero => fitted.gradient_method(EstimatorConfig::hyper(0.0), &trainer, Some(0.0)),
        Method::HyperTuned => tuned(tune_gamma(d, beta, &tuner_config(cfg), seed)?),
        Method::HyperTunedNoReplacement => tuned(tune_gamma_no_replacement(d, beta, &tuner_config(cfg), seed)?),
        Method::HyperOptimal => {
            // skyline: the grid point whose policy has the best true value
            let mut best: Option<MethodOutcome> = None;
            for &gamma in &cfg.gamma_grid {
                let out = fitted.gradient_method(EstimatorConfig::hyper(gamma), &trainer, Some(gamma))?;
                if best.is_none_or(|b| out.values.combined > b.values.combined) {
                    best = Some(out);
                }
            }
            best.ok_or_else(|| Error::Config("gamma grid is empty".into()))
        }
        Method::RDm | Method::SDm => {
            let (mode, agg) = match method {
                Method::RDm => (DirectMethod::Target, None),
                _ => (DirectMethod::Surrogate, Some(fitted.problem.aggregator.clone())),
            };
            let policy = direct_method_policy(fitted.models.clone(), d.n_actions(), d.d_s(), mode, agg)?;
            fitted.outcome(&policy, None)
        }
    }
}

/// Every method of one simulation, in `methods` order.
pub fn run_simulation(
    cfg: &SweepConfig,
    matrix: Option<&InteractionMatrix>,
    axis_value: f64,
    sim: usize,
) -> Vec<ResultRow> {
    let seed = sim_seed(cfg.seed, sim);
    let row = |method, outcome| ResultRow {
        axis_value,
        sim,
        seed,
        method,
        outcome,
    };
    let setup = at_axis_value(cfg, axis_value).and_then(|c| {
        let problem = build_problem(&c, matrix, seed)?;
        Ok((c, problem))
    });
    let (resolved, problem) = match setup {
        Ok(ok) => ok,
        Err(e) => return cfg.methods.iter().map(|&m| row(m, Err(e.to_string()))).collect(),
    };
    let fitted = FittedModels::fit(&problem.dataset, resolved.ridge_lambda, Some(&problem.aggregator)).map(|models| {
        let preds = Predictions::compute(&problem.dataset, &models);
        Fitted {
            problem: &problem,
            models,
            preds,
        }
    });
    let fitted = match fitted {
        Ok(f) => f,
        Err(e) => return cfg.methods.iter().map(|&m| row(m, Err(e.to_string()))).collect(),
    };
    cfg.methods
        .iter()
        .map(|&m| row(m, run_method(&fitted, m, &resolved, seed).map_err(|e| e.to_string())))
        .collect()
}

/// Runs every `(axis value, sim)` pair on the rayon pool; rows come back
/// ordered by axis value, then sim, then method. Per-run failures become
/// error rows; only configuration and data-loading problems abort.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let matrix = load_sweep_matrix(cfg)?;
    let jobs: Vec<(f64, usize)> = cfg
        .values
        .iter()
        .flat_map(|&v| (0..cfg.n_sims).map(move |s| (v, s)))
        .collect();
    let rows: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(v, s)| run_simulation(cfg, matrix.as_ref(), v, s))
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Standalone tuning on the problem of simulation `sim` at the first axis
/// value.
pub fn run_tune(cfg: &SweepConfig, sim: usize) -> Result<TuningResult> {
    cfg.validate()?;
    let matrix = load_sweep_matrix(cfg)?;
    let resolved = at_axis_value(cfg, cfg.values[0])?;
    let seed = sim_seed(cfg.seed, sim);
    let problem = build_problem(&resolved, matrix.as_ref(), seed)?;
    tune_gamma(&problem.dataset, problem.beta, &tuner_config(&resolved), seed)
}
