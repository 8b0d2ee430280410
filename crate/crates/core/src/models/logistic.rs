//! Logistic regression of the observation indicator on the context.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const OBS_PROB_FLOOR: f64 = 0.01;
pub const OBS_PROB_CEIL: f64 = 0.99;

const MAX_ITERS: usize = 100;
const GRAD_TOL: f64 = 1e-8;
// Keeps the Hessian invertible on (near-)separable data.
const HESSIAN_JITTER: f64 = 1e-10;

/// `p̂(o=1|x)`, clipped to `[0.01, 0.99]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    Constant(f64),
    /// Coefficients over `[1, x]`.
    Logistic(Vec<f64>),
}

impl ObservationModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let p = match self {
            Self::Constant(p) => *p,
            Self::Logistic(w) => {
                let z = w[0] + w[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                sigmoid(z)
            }
        };
        p.clamp(OBS_PROB_FLOOR, OBS_PROB_CEIL)
    }

    /// Fit by damped Newton iterations on the mean log-loss.
    pub fn fit(contexts: &[&[f64]], labels: &[bool]) -> Result<Self> {
        let n = contexts.len();
        if n == 0 || labels.len() != n {
            return Err(Error::InsufficientData("observation model needs rows".into()));
        }
        let positives = labels.iter().filter(|&&o| o).count();
        if positives == 0 || positives == n {
            return Ok(Self::Constant(positives as f64 / n as f64));
        }
        let p = contexts[0].len() + 1;
        let z = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { contexts[i][k - 1] });
        let y = DVector::from_iterator(n, labels.iter().map(|&o| if o { 1.0 } else { 0.0 }));

        let rate = positives as f64 / n as f64;
        let mut w = DVector::zeros(p);
        w[0] = (rate / (1.0 - rate)).ln();
        let mut loss = mean_log_loss(&z, &y, &w);
        for _ in 0..MAX_ITERS {
            let probs = (&z * &w).map(sigmoid);
            let grad = z.tr_mul(&(&probs - &y)) / n as f64;
            if grad.norm() < GRAD_TOL {
                break;
            }
            let weights = probs.map(|p| p * (1.0 - p));
            let mut hess = DMatrix::zeros(p, p);
            for i in 0..n {
                let row = z.row(i);
                hess.ger(weights[i] / n as f64, &row.transpose(), &row.transpose(), 1.0);
            }
            for k in 0..p {
                hess[(k, k)] += HESSIAN_JITTER;
            }
            let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else {
                break;
            };
            let mut t = 1.0;
            loop {
                let candidate = &w - &step * t;
                let cand_loss = mean_log_loss(&z, &y, &candidate);
                if cand_loss <= loss || t < 1e-10 {
                    w = candidate;
                    loss = cand_loss;
                    break;
                }
                t *= 0.5;
            }
        }
        Ok(Self::Logistic(w.iter().copied().collect()))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn mean_log_loss(z: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let logits = z * w;
    logits
        .iter()
        .zip(y.iter())
        // log(1 + e^l) - y·l, computed stably
        .map(|(&l, &y)| l.max(0.0) + (-l.abs()).exp().ln_1p() - y * l)
        .sum::<f64>()
        / y.len() as f64
}
