#![allow(dead_code)]

use hyper_opl::estimators::EnumerationInstance;
use hyper_opl::models::{NuisanceModels, Predictions};
use hyper_opl::rng::{rng_from_seed, Rng};
use hyper_opl::{LoggedDataset, Row, SoftmaxLinearPolicy};
use ndarray::{Array2, Array3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Arbitrary (not generator-consistent) logged data with `observed_share` of
/// targets present.
pub fn random_dataset(
    rng: &mut Rng,
    n: usize,
    d_x: usize,
    n_actions: usize,
    d_s: usize,
    observed_share: f64,
) -> LoggedDataset {
    let rows: Vec<Row> = (0..n)
        .map(|_| Row {
            context: (0..d_x).map(|_| gaussian(rng)).collect(),
            action: rng.random_range(0..n_actions),
            pscore: rng.random_range(0.05..1.0),
            secondary: (0..d_s).map(|_| gaussian(rng)).collect(),
            target: (rng.random::<f64>() < observed_share).then(|| gaussian(rng)),
            obs_prob: rng.random_range(0.1..1.0),
        })
        .collect();
    LoggedDataset::from_rows(&rows, n_actions).unwrap()
}

pub fn random_predictions(rng: &mut Rng, d: &LoggedDataset, with_pseudo: bool) -> Predictions {
    let (n, k, d_s) = (d.len(), d.n_actions(), d.d_s());
    Predictions {
        q_xa: Array2::from_shape_fn((n, k), |_| gaussian(rng)),
        q_xas: (0..n).map(|_| gaussian(rng)).collect(),
        f_hat: Array3::from_shape_fn((n, k, d_s), |_| gaussian(rng)),
        q_pseudo: with_pseudo.then(|| Array2::from_shape_fn((n, k), |_| gaussian(rng))),
    }
}

pub fn random_policy(rng: &mut Rng, d_x: usize, n_actions: usize) -> SoftmaxLinearPolicy {
    let theta = (0..SoftmaxLinearPolicy::param_dim(d_x, n_actions))
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    SoftmaxLinearPolicy::from_theta(d_x, n_actions, theta).unwrap()
}

pub struct MonteCarlo {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl MonteCarlo {
    /// Largest `|mean − truth| / SE` over coordinates.
    pub fn max_z(&self, truth: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(truth)
            .map(|((m, se), t)| (m - t).abs() / se)
            .fold(0.0, f64::max)
    }
}

/// Runs `stat` on `samples` single-row datasets drawn from `inst` and returns
/// the per-coordinate mean and standard error.
pub fn single_row_monte_carlo<M: NuisanceModels>(
    inst: &EnumerationInstance,
    models: &M,
    samples: usize,
    seed: u64,
    stat: impl Fn(&LoggedDataset, &Predictions) -> Vec<f64>,
) -> MonteCarlo {
    let mut rng = rng_from_seed(seed);
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    for _ in 0..samples {
        let d = LoggedDataset::from_rows(&[inst.sample_row(&mut rng)], inst.n_actions()).unwrap();
        let preds = Predictions::compute(&d, models);
        let v = stat(&d, &preds);
        if sum.is_empty() {
            sum = vec![0.0; v.len()];
            sum_sq = vec![0.0; v.len()];
        }
        for ((s, q), x) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&v) {
            *s += x;
            *q += x * x;
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m) * n / (n - 1.0) / n).sqrt())
        .collect();
    MonteCarlo { mean, std_err }
}

/// Exact pseudo-reward table `p(o|x)·q̄ + (1 − p(o|x))·F(f)` for the
/// bundled instance.
pub fn pseudo_table(inst: &EnumerationInstance, weights: &[f64]) -> Vec<Vec<f64>> {
    (0..inst.n_contexts())
        .map(|k| {
            (0..inst.n_actions())
                .map(|a| {
                    let p = inst.obs_prob[k];
                    let f: f64 = inst.f_bar(k, a).iter().zip(weights).map(|(f, w)| f * w).sum();
                    p * inst.q_bar(k, a) + (1.0 - p) * f
                })
                .collect()
        })
        .collect()
}
