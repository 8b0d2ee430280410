//! Nuisance models: reward regressors `q̂(x,a)`, `q̂(x,a,s)`, the expected
//! secondary reward `f̂(x,a)` and the observation classifier `p̂(o|x)`.
//!
//! Estimators never call the models directly; they read a [`Predictions`]
//! cache evaluated once per dataset, since the models do not depend on the
//! policy being optimized.

mod logistic;
mod ridge;

use ndarray::{Array2, Array3};

pub use logistic::{sigmoid, ObservationModel, OBS_PROB_CEIL, OBS_PROB_FLOOR};
pub use ridge::{
    design_matrix, ridge_solve, stationarity_residual, InteractionFeatures, LinearRegressor,
};

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::SurrogateAggregator;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

/// Read access to fitted nuisance functions.
pub trait NuisanceModels {
    /// `q̂(x, a)`
    fn q_xa(&self, x: &[f64], a: usize) -> f64;
    /// `q̂(x, a, s)`
    fn q_xas(&self, x: &[f64], a: usize, s: &[f64]) -> f64;
    /// `f̂(x, a)`, written into `out` (length `d_s`).
    fn f_hat(&self, x: &[f64], a: usize, out: &mut [f64]);
    /// Regressor of the pseudo-reward `o·r + (1−o)·F(s)`, when fitted.
    fn q_pseudo(&self, _x: &[f64], _a: usize) -> Option<f64> {
        None
    }
}

fn observed_rows(d: &LoggedDataset) -> (Vec<(&[f64], usize, &[f64])>, Vec<f64>) {
    let mut rows = Vec::with_capacity(d.n_observed());
    let mut y = Vec::with_capacity(d.n_observed());
    for i in 0..d.len() {
        if let Some(r) = d.target()[i] {
            rows.push((d.context(i), d.actions()[i], d.secondary_row(i)));
            y.push(r);
        }
    }
    (rows, y)
}

fn all_rows(d: &LoggedDataset) -> Vec<(&[f64], usize, &[f64])> {
    (0..d.len())
        .map(|i| (d.context(i), d.actions()[i], d.secondary_row(i)))
        .collect()
}

/// Ridge fit of `r` on `[x, onehot(a), x⊗onehot(a)]` over observed rows.
pub fn fit_q_xa(d: &LoggedDataset, lambda: f64) -> Result<LinearRegressor> {
    let (rows, y) = observed_rows(d);
    if rows.is_empty() {
        return Err(Error::InsufficientData("no observed target rewards".into()));
    }
    let features = InteractionFeatures {
        d_x: d.d_x(),
        n_actions: d.n_actions(),
        d_s: 0,
    };
    LinearRegressor::fit(features, &rows, &y, lambda)
}

/// As [`fit_q_xa`] with the secondary blocks `s` and `s⊗onehot(a)` added.
pub fn fit_q_xas(d: &LoggedDataset, lambda: f64) -> Result<LinearRegressor> {
    let (rows, y) = observed_rows(d);
    if rows.is_empty() {
        return Err(Error::InsufficientData("no observed target rewards".into()));
    }
    let features = InteractionFeatures {
        d_x: d.d_x(),
        n_actions: d.n_actions(),
        d_s: d.d_s(),
    };
    LinearRegressor::fit(features, &rows, &y, lambda)
}

/// One ridge fit per secondary dimension, over all rows.
pub fn fit_f(d: &LoggedDataset, lambda: f64) -> Result<Vec<LinearRegressor>> {
    let features = InteractionFeatures {
        d_x: d.d_x(),
        n_actions: d.n_actions(),
        d_s: 0,
    };
    let columns: Vec<Vec<f64>> = (0..d.d_s())
        .map(|k| d.secondary().column(k).to_vec())
        .collect();
    let ys: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    LinearRegressor::fit_multi(features, &all_rows(d), &ys, lambda)
}

/// Ridge fit of the pseudo-reward `o·r + (1−o)·F(s)` over all rows.
pub fn fit_pseudo_q(
    d: &LoggedDataset,
    agg: &SurrogateAggregator,
    lambda: f64,
) -> Result<LinearRegressor> {
    let features = InteractionFeatures {
        d_x: d.d_x(),
        n_actions: d.n_actions(),
        d_s: 0,
    };
    LinearRegressor::fit(features, &all_rows(d), &pseudo_rewards(d, agg), lambda)
}

/// `r̃_i = r_i` when observed, `F(s_i)` otherwise.
pub fn pseudo_rewards(d: &LoggedDataset, agg: &SurrogateAggregator) -> Vec<f64> {
    (0..d.len())
        .map(|i| match d.target()[i] {
            Some(r) => r,
            None => agg.apply(d.secondary_row(i)),
        })
        .collect()
}

/// Logistic regression of `o` on `x`, clipped to `[0.01, 0.99]`.
pub fn fit_obs_model(d: &LoggedDataset) -> Result<ObservationModel> {
    let contexts: Vec<&[f64]> = (0..d.len()).map(|i| d.context(i)).collect();
    ObservationModel::fit(&contexts, d.obs_flags())
}

/// Every regressor the estimators may need.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub q_xa: LinearRegressor,
    pub q_xas: LinearRegressor,
    pub f_hat: Vec<LinearRegressor>,
    pub q_pseudo: Option<LinearRegressor>,
}

impl FittedModels {
    /// Fits `q̂(x,a)`, `q̂(x,a,s)`, `f̂`, and the pseudo-reward regressor when
    /// an aggregator is supplied.
    pub fn fit(
        d: &LoggedDataset,
        lambda: f64,
        agg: Option<&SurrogateAggregator>,
    ) -> Result<Self> {
        Ok(Self {
            q_xa: fit_q_xa(d, lambda)?,
            q_xas: fit_q_xas(d, lambda)?,
            f_hat: fit_f(d, lambda)?,
            q_pseudo: agg.map(|agg| fit_pseudo_q(d, agg, lambda)).transpose()?,
        })
    }
}

impl NuisanceModels for FittedModels {
    fn q_xa(&self, x: &[f64], a: usize) -> f64 {
        self.q_xa.predict(x, a, &[])
    }

    fn q_xas(&self, x: &[f64], a: usize, s: &[f64]) -> f64 {
        self.q_xas.predict(x, a, s)
    }

    fn f_hat(&self, x: &[f64], a: usize, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.f_hat) {
            *o = m.predict(x, a, &[]);
        }
    }

    fn q_pseudo(&self, x: &[f64], a: usize) -> Option<f64> {
        self.q_pseudo.as_ref().map(|m| m.predict(x, a, &[]))
    }
}

/// Nuisance predictions evaluated on the rows of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// `q̂(x_i, a)` for every action, `n × |A|`.
    pub q_xa: Array2<f64>,
    /// `q̂(x_i, a_i, s_i)` at the logged action and realized secondary reward.
    pub q_xas: Vec<f64>,
    /// `f̂(x_i, a)`, `n × |A| × d_s`.
    pub f_hat: Array3<f64>,
    /// `q̂_pseudo(x_i, a)`, `n × |A|`, when the pseudo-reward model exists.
    pub q_pseudo: Option<Array2<f64>>,
}

impl Predictions {
    pub fn compute<M: NuisanceModels + ?Sized>(d: &LoggedDataset, models: &M) -> Self {
        let (n, k, d_s) = (d.len(), d.n_actions(), d.d_s());
        let mut q_xa = Array2::zeros((n, k));
        let mut f_hat = Array3::zeros((n, k, d_s));
        let mut q_pseudo = Array2::zeros((n, k));
        let mut has_pseudo = true;
        let mut buf = vec![0.0; d_s];
        for i in 0..n {
            let x = d.context(i);
            for a in 0..k {
                q_xa[[i, a]] = models.q_xa(x, a);
                models.f_hat(x, a, &mut buf);
                for (t, v) in buf.iter().enumerate() {
                    f_hat[[i, a, t]] = *v;
                }
                match models.q_pseudo(x, a) {
                    Some(v) => q_pseudo[[i, a]] = v,
                    None => has_pseudo = false,
                }
            }
        }
        let q_xas = (0..n)
            .map(|i| models.q_xas(d.context(i), d.actions()[i], d.secondary_row(i)))
            .collect();
        Self {
            q_xa,
            q_xas,
            f_hat,
            q_pseudo: has_pseudo.then_some(q_pseudo),
        }
    }

    /// All-zero predictions (no pseudo-reward model).
    pub fn zeros(d: &LoggedDataset) -> Self {
        Self {
            q_xa: Array2::zeros((d.len(), d.n_actions())),
            q_xas: vec![0.0; d.len()],
            f_hat: Array3::zeros((d.len(), d.n_actions(), d.d_s())),
            q_pseudo: None,
        }
    }

    /// Predictions for a subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        use ndarray::Axis;
        Self {
            q_xa: self.q_xa.select(Axis(0), indices),
            q_xas: indices.iter().map(|&i| self.q_xas[i]).collect(),
            f_hat: self.f_hat.select(Axis(0), indices),
            q_pseudo: self.q_pseudo.as_ref().map(|q| q.select(Axis(0), indices)),
        }
    }
}
