//! Data-driven choice of the mixture weight by bootstrap-augmented
//! train/validation search over a grid.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{value_estimate, EstimatorConfig};
use crate::models::{FittedModels, Predictions, DEFAULT_RIDGE_LAMBDA};
use crate::rng::{derive_rng, stream, Rng};
use crate::trainer::{train_policy, TrainerConfig};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.7;
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 5;

/// `{0, 0.1, …, 1}`
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    pub grid: Vec<f64>,
    pub split_ratio: f64,
    pub n_boot: usize,
    pub ridge_lambda: f64,
    pub trainer: TrainerConfig,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            split_ratio: DEFAULT_SPLIT_RATIO,
            n_boot: DEFAULT_BOOTSTRAP_REPLICATES,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            trainer: TrainerConfig::default(),
        }
    }
}

impl TunerConfig {
    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Config("gamma grid must be a nonempty subset of [0, 1]".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.n_boot == 0 {
            return Err(Error::Config("at least one bootstrap replicate is needed".into()));
        }
        Ok(())
    }
}

/// Validation values of one grid point, one per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaScore {
    pub gamma: f64,
    pub values: Vec<f64>,
}

impl GammaScore {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub gamma_hat: f64,
    pub table: Vec<GammaScore>,
}

/// `n` rows drawn with replacement, rows kept intact.
pub fn bootstrap_resample(d: &LoggedDataset, n: usize, rng: &mut Rng) -> Result<LoggedDataset> {
    if n == 0 {
        return Err(Error::Config("bootstrap size must be at least 1".into()));
    }
    let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..d.len())).collect();
    d.select(&indices)
}

/// Seeded row-wise split into `(train, validation)`.
pub fn train_validation_split(
    d: &LoggedDataset,
    ratio: f64,
    rng: &mut Rng,
) -> Result<(LoggedDataset, LoggedDataset)> {
    let n_train = ((d.len() as f64) * ratio).round() as usize;
    if n_train == 0 || n_train >= d.len() {
        return Err(Error::InsufficientData(format!(
            "cannot split {} rows at ratio {ratio}",
            d.len()
        )));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(rng);
    Ok((d.select(&order[..n_train])?, d.select(&order[n_train..])?))
}

/// Highest mean; exact ties go to the grid point closest to `beta`, then to
/// the smaller one.
fn select_gamma(table: &[GammaScore], beta: f64) -> f64 {
    let mut best = &table[0];
    for cand in &table[1..] {
        let (m, b) = (cand.mean(), best.mean());
        let better = m > b
            || (m == b
                && ((cand.gamma - beta).abs() < (best.gamma - beta).abs()
                    || ((cand.gamma - beta).abs() == (best.gamma - beta).abs()
                        && cand.gamma < best.gamma)));
        if better {
            best = cand;
        }
    }
    best.gamma
}

/// Bootstrap tuning: each replicate resamples the training part back to
/// `|D|` rows, refits the nuisance models, trains one policy per grid point
/// and scores it on the validation part with nuisances fit on the training
/// part.
pub fn tune_gamma(d: &LoggedDataset, beta: f64, cfg: &TunerConfig, seed: u64) -> Result<TuningResult> {
    tune(d, beta, cfg, seed, true)
}

/// The same search without resampling: one replicate trained on the training
/// part itself.
pub fn tune_gamma_no_replacement(
    d: &LoggedDataset,
    beta: f64,
    cfg: &TunerConfig,
    seed: u64,
) -> Result<TuningResult> {
    tune(d, beta, &TunerConfig { n_boot: 1, ..cfg.clone() }, seed, false)
}

fn tune(
    d: &LoggedDataset,
    beta: f64,
    cfg: &TunerConfig,
    seed: u64,
    bootstrap: bool,
) -> Result<TuningResult> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    let (train, val) = train_validation_split(d, cfg.split_ratio, &mut derive_rng(seed, stream::SPLIT, 0))?;
    let val_models = FittedModels::fit(&train, cfg.ridge_lambda, None)?;
    let val_preds = Predictions::compute(&val, &val_models);

    let mut table: Vec<GammaScore> = cfg
        .grid
        .iter()
        .map(|&gamma| GammaScore {
            gamma,
            values: Vec::with_capacity(cfg.n_boot),
        })
        .collect();
    for replicate in 0..cfg.n_boot {
        let wrap = |gamma: f64| {
            move |e: Error| Error::Tuning {
                gamma,
                replicate,
                source: Box::new(e),
            }
        };
        let first = cfg.grid[0];
        let sample = if bootstrap {
            let mut rng = derive_rng(seed, stream::BOOTSTRAP, replicate as u64);
            bootstrap_resample(&train, d.len(), &mut rng).map_err(wrap(first))?
        } else {
            train.clone()
        };
        let models = FittedModels::fit(&sample, cfg.ridge_lambda, None).map_err(wrap(first))?;
        let preds = Predictions::compute(&sample, &models);
        for score in table.iter_mut() {
            let gamma = score.gamma;
            let trained = train_policy(&sample, &EstimatorConfig::hyper(gamma), &preds, None, &cfg.trainer)
                .map_err(wrap(gamma))?;
            let v = value_estimate(&val, &trained.policy, &val_preds, beta).map_err(wrap(gamma))?;
            score.values.push(v);
        }
    }
    Ok(TuningResult {
        gamma_hat: select_gamma(&table, beta),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(gamma: f64, v: f64) -> GammaScore {
        GammaScore {
            gamma,
            values: vec![v],
        }
    }

    #[test]
    fn ties_prefer_beta_then_smaller() {
        let t = [score(0.0, 1.0), score(0.2, 1.0), score(0.4, 1.0), score(0.6, 0.5)];
        assert_eq!(select_gamma(&t, 0.3), 0.2);
        assert_eq!(select_gamma(&t, 0.4), 0.4);
        let t = [score(0.1, 2.0), score(0.5, 2.0)];
        assert_eq!(select_gamma(&t, 0.3), 0.1);
        let t = [score(0.1, 2.0), score(0.5, 3.0)];
        assert_eq!(select_gamma(&t, 0.1), 0.5);
    }

    #[test]
    fn default_grid_has_eleven_points() {
        let g = default_grid();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[3], g[10]), (0.0, 0.3, 1.0));
    }
}
