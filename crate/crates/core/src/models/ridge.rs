//! Closed-form ridge regression over bandit interaction features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feature layout `[1, x, onehot(a), x⊗onehot(a), s, s⊗onehot(a), x⊗s]`.
///
/// The intercept is unpenalized; every other coefficient carries the ridge
/// penalty. `d_s = 0` drops the secondary blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionFeatures {
    pub d_x: usize,
    pub n_actions: usize,
    pub d_s: usize,
}

impl InteractionFeatures {
    pub fn dim(&self) -> usize {
        1 + self.d_x + self.n_actions * (1 + self.d_x) + self.d_s * (1 + self.n_actions + self.d_x)
    }

    fn x_block(&self) -> usize {
        1
    }

    fn a_block(&self) -> usize {
        1 + self.d_x
    }

    fn xa_block(&self) -> usize {
        self.a_block() + self.n_actions
    }

    fn s_block(&self) -> usize {
        self.xa_block() + self.n_actions * self.d_x
    }

    fn sa_block(&self) -> usize {
        self.s_block() + self.d_s
    }

    fn xs_block(&self) -> usize {
        self.sa_block() + self.n_actions * self.d_s
    }

    pub fn write_row(&self, x: &[f64], a: usize, s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        out[self.x_block()..self.a_block()].copy_from_slice(x);
        out[self.a_block() + a] = 1.0;
        let xa = self.xa_block() + a * self.d_x;
        out[xa..xa + self.d_x].copy_from_slice(x);
        if self.d_s > 0 {
            out[self.s_block()..self.sa_block()].copy_from_slice(s);
            let sa = self.sa_block() + a * self.d_s;
            out[sa..sa + self.d_s].copy_from_slice(s);
            let xs = &mut out[self.xs_block()..];
            for (j, xj) in x.iter().enumerate() {
                for (t, st) in s.iter().enumerate() {
                    xs[j * self.d_s + t] = xj * st;
                }
            }
        }
    }

    /// 0 for the intercept, 1 elsewhere.
    pub fn penalty_mask(&self) -> Vec<f64> {
        let mut m = vec![1.0; self.dim()];
        m[0] = 0.0;
        m
    }
}

/// Solve `(AᵀA + λ·diag(mask)) β = Aᵀy` for each column of `y`.
pub fn ridge_solve(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    penalty_mask: &[f64],
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("ridge penalty must be positive, got {lambda}")));
    }
    let mut gram = design.tr_mul(design);
    for (k, m) in penalty_mask.iter().enumerate() {
        gram[(k, k)] += lambda * m;
    }
    let rhs = design.tr_mul(targets);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::InsufficientData("ridge normal equations are not positive definite".into())
    })?;
    Ok(chol.solve(&rhs))
}

/// A fitted linear model over [`InteractionFeatures`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegressor {
    features: InteractionFeatures,
    coef: Vec<f64>,
}

impl LinearRegressor {
    /// Fit on `(x_i, a_i, s_i) → y_i`. `s` is ignored when `features.d_s = 0`.
    pub fn fit(
        features: InteractionFeatures,
        rows: &[(&[f64], usize, &[f64])],
        y: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        let mut fits = Self::fit_multi(features, rows, &[y], lambda)?;
        Ok(fits.remove(0))
    }

    /// Several targets sharing one design; factorizes once.
    pub fn fit_multi(
        features: InteractionFeatures,
        rows: &[(&[f64], usize, &[f64])],
        ys: &[&[f64]],
        lambda: f64,
    ) -> Result<Vec<Self>> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no rows to fit a regressor on".into()));
        }
        let design = design_matrix(features, rows);
        let targets = DMatrix::from_fn(rows.len(), ys.len(), |i, k| ys[k][i]);
        let beta = ridge_solve(&design, &targets, &features.penalty_mask(), lambda)?;
        Ok((0..ys.len())
            .map(|k| Self {
                features,
                coef: beta.column(k).iter().copied().collect(),
            })
            .collect())
    }

    pub fn features(&self) -> InteractionFeatures {
        self.features
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn predict(&self, x: &[f64], a: usize, s: &[f64]) -> f64 {
        let f = &self.features;
        let mut v = self.shared_part(x, s);
        v += self.coef[f.a_block() + a];
        v += dot(&self.coef[f.xa_block() + a * f.d_x..][..f.d_x], x);
        if f.d_s > 0 {
            v += dot(&self.coef[f.sa_block() + a * f.d_s..][..f.d_s], s);
        }
        v
    }

    /// Predictions for every action at `(x, s)`.
    pub fn predict_actions(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        let f = &self.features;
        let shared = self.shared_part(x, s);
        for (a, o) in out.iter_mut().enumerate() {
            let mut v = shared + self.coef[f.a_block() + a];
            v += dot(&self.coef[f.xa_block() + a * f.d_x..][..f.d_x], x);
            if f.d_s > 0 {
                v += dot(&self.coef[f.sa_block() + a * f.d_s..][..f.d_s], s);
            }
            *o = v;
        }
    }

    fn shared_part(&self, x: &[f64], s: &[f64]) -> f64 {
        let f = &self.features;
        let mut v = self.coef[0] + dot(&self.coef[f.x_block()..f.a_block()], x);
        if f.d_s > 0 {
            v += dot(&self.coef[f.s_block()..f.sa_block()], s);
            let xs = &self.coef[f.xs_block()..];
            for (j, xj) in x.iter().enumerate() {
                v += xj * dot(&xs[j * f.d_s..][..f.d_s], s);
            }
        }
        v
    }
}

pub fn design_matrix(features: InteractionFeatures, rows: &[(&[f64], usize, &[f64])]) -> DMatrix<f64> {
    let p = features.dim();
    let mut buf = vec![0.0; p];
    let mut design = DMatrix::zeros(rows.len(), p);
    for (i, (x, a, s)) in rows.iter().enumerate() {
        features.write_row(x, *a, s, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            design[(i, k)] = *v;
        }
    }
    design
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// `‖Aᵀ(Aβ − y) + λ·mask⊙β‖_∞`, zero at the exact ridge solution.
pub fn stationarity_residual(
    design: &DMatrix<f64>,
    y: &[f64],
    beta: &[f64],
    penalty_mask: &[f64],
    lambda: f64,
) -> f64 {
    let b = DVector::from_column_slice(beta);
    let resid = design * &b - DVector::from_column_slice(y);
    let g = design.tr_mul(&resid);
    g.iter()
        .zip(beta.iter().zip(penalty_mask))
        .map(|(g, (b, m))| (g + lambda * m * b).abs())
        .fold(0.0, f64::max)
}
