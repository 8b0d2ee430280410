//! Columnar logged bandit data `(x, a, π_0(a|x), o, s, r?, p(o|x))`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Immutable logged dataset. Each row carries the context, the logged action
/// with its logging propensity, the observation flag, the always-observed
/// secondary reward vector, the target reward (present exactly when observed)
/// and the observation probability used by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    contexts: Array2<f64>,
    actions: Vec<usize>,
    n_actions: usize,
    pscores: Vec<f64>,
    obs_flags: Vec<bool>,
    secondary: Array2<f64>,
    target: Vec<Option<f64>>,
    obs_prob: Vec<f64>,
}

/// Row-wise view used by the builders.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub context: Vec<f64>,
    pub action: usize,
    pub pscore: f64,
    pub secondary: Vec<f64>,
    pub target: Option<f64>,
    pub obs_prob: f64,
}

impl LoggedDataset {
    /// Validates every column.
    ///
    /// `obs_prob` must lie in `(0, 1]`; the value 1 is allowed so that fully
    /// observed data can be expressed in the same container.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        contexts: Array2<f64>,
        actions: Vec<usize>,
        n_actions: usize,
        pscores: Vec<f64>,
        secondary: Array2<f64>,
        target: Vec<Option<f64>>,
        obs_prob: Vec<f64>,
    ) -> Result<Self> {
        let n = contexts.nrows();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset must have at least one row".into()));
        }
        for (name, len) in [
            ("actions", actions.len()),
            ("pscores", pscores.len()),
            ("secondary", secondary.nrows()),
            ("target", target.len()),
            ("obs_prob", obs_prob.len()),
        ] {
            if len != n {
                return Err(Error::InvalidDataset(format!(
                    "column {name} has {len} rows, expected {n}"
                )));
            }
        }
        if let Some((i, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
            return Err(Error::InvalidDataset(format!(
                "row {i}: action {a} out of range for {n_actions} actions"
            )));
        }
        if let Some((i, &p)) = pscores.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::FullSupport {
                action: actions[i],
                prob: p,
            });
        }
        if let Some((row, &prob)) = obs_prob.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidPropensity { row, prob });
        }
        let obs_flags = target.iter().map(Option::is_some).collect();
        Ok(Self {
            contexts,
            actions,
            n_actions,
            pscores,
            obs_flags,
            secondary,
            target,
            obs_prob,
        })
    }

    pub fn from_rows(rows: &[Row], n_actions: usize) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidDataset("dataset must have at least one row".into()))?;
        let (d_x, d_s) = (first.context.len(), first.secondary.len());
        let mut contexts = Array2::zeros((rows.len(), d_x));
        let mut secondary = Array2::zeros((rows.len(), d_s));
        for (i, r) in rows.iter().enumerate() {
            if r.context.len() != d_x || r.secondary.len() != d_s {
                return Err(Error::InvalidDataset(format!("row {i} has ragged columns")));
            }
            contexts.row_mut(i).assign(&ArrayView1::from(&r.context));
            secondary.row_mut(i).assign(&ArrayView1::from(&r.secondary));
        }
        Self::new(
            contexts,
            rows.iter().map(|r| r.action).collect(),
            n_actions,
            rows.iter().map(|r| r.pscore).collect(),
            secondary,
            rows.iter().map(|r| r.target).collect(),
            rows.iter().map(|r| r.obs_prob).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.contexts.ncols()
    }

    pub fn d_s(&self) -> usize {
        self.secondary.ncols()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn contexts(&self) -> ArrayView2<'_, f64> {
        self.contexts.view()
    }

    pub fn context(&self, i: usize) -> &[f64] {
        self.contexts
            .row(i)
            .to_slice()
            .expect("contexts are stored in standard layout")
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn pscores(&self) -> &[f64] {
        &self.pscores
    }

    pub fn obs_flags(&self) -> &[bool] {
        &self.obs_flags
    }

    pub fn secondary(&self) -> ArrayView2<'_, f64> {
        self.secondary.view()
    }

    pub fn secondary_row(&self, i: usize) -> &[f64] {
        self.secondary
            .row(i)
            .to_slice()
            .expect("secondary rewards are stored in standard layout")
    }

    pub fn target(&self) -> &[Option<f64>] {
        &self.target
    }

    pub fn obs_prob(&self) -> &[f64] {
        &self.obs_prob
    }

    pub fn n_observed(&self) -> usize {
        self.obs_flags.iter().filter(|&&o| o).count()
    }

    pub fn row(&self, i: usize) -> Row {
        Row {
            context: self.context(i).to_vec(),
            action: self.actions[i],
            pscore: self.pscores[i],
            secondary: self.secondary_row(i).to_vec(),
            target: self.target[i],
            obs_prob: self.obs_prob[i],
        }
    }

    /// New dataset made of the given rows (repeats allowed), in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidDataset("selection is empty".into()));
        }
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            contexts: self.contexts.select(Axis(0), indices),
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            n_actions: self.n_actions,
            pscores: pick(&self.pscores),
            obs_flags: indices.iter().map(|&i| self.obs_flags[i]).collect(),
            secondary: self.secondary.select(Axis(0), indices),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            obs_prob: pick(&self.obs_prob),
        })
    }

    /// Same rows with the observation-probability column replaced.
    pub fn with_obs_prob(&self, obs_prob: Vec<f64>) -> Result<Self> {
        Self::new(
            self.contexts.clone(),
            self.actions.clone(),
            self.n_actions,
            self.pscores.clone(),
            self.secondary.clone(),
            self.target.clone(),
            obs_prob,
        )
    }

    /// Same rows with a fully observed target column and `p(o|x) = 1`.
    pub fn with_full_targets(&self, target: Vec<f64>) -> Result<Self> {
        let n = self.len();
        Self::new(
            self.contexts.clone(),
            self.actions.clone(),
            self.n_actions,
            self.pscores.clone(),
            self.secondary.clone(),
            target.into_iter().map(Some).collect(),
            vec![1.0; n],
        )
    }
}
