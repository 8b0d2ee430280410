//! Fully observed user × item feedback turned into a logged bandit problem.
//!
//! Three comma-separated files with header rows are expected:
//!
//! * interactions: user id, item id, watch ratio (the target reward);
//! * items: item id, upload age, video length;
//! * users: user id followed by numeric feature columns.
//!
//! Every (user, item) cell must be present. Repeated cells are averaged.

use std::collections::HashMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::dataset::{LoggedDataset, Row};
use crate::error::{Error, Result};
use crate::policy::{sample_from_probs, LoggingPolicy, Policy, SoftmaxLinearPolicy};
use crate::rng::{derive_rng, rng_from_seed, stream, Rng};
use crate::synth::{EvaluationSet, PolicyValues};

/// Long-watch threshold for the first secondary reward (inclusive).
pub const LONG_WATCH: f64 = 2.0;
/// Engagement floor for the second secondary reward (inclusive).
pub const ENGAGEMENT_FLOOR: f64 = 0.5;
pub const SECONDARY_DIM: usize = 4;

/// Column names of the three input files.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaConfig {
    pub interactions_file: String,
    pub items_file: String,
    pub users_file: String,
    pub user_id: String,
    pub item_id: String,
    pub watch_ratio: String,
    pub upload_age: String,
    pub video_length: String,
    /// Feature columns of the users file; `None` takes every column except
    /// the id.
    pub feature_columns: Option<Vec<String>>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            interactions_file: "interactions.csv".into(),
            items_file: "items.csv".into(),
            users_file: "users.csv".into(),
            user_id: "user_id".into(),
            item_id: "item_id".into(),
            watch_ratio: "watch_ratio".into(),
            upload_age: "upload_age".into(),
            video_length: "video_length".into(),
            feature_columns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Standardized per column, `n_users × d_x`.
    pub user_features: Array2<f64>,
    /// `n_users × n_items`
    pub watch_ratio: Array2<f64>,
    /// Min-max normalized to `[0, 1]`.
    pub upload_age: Vec<f64>,
    /// Min-max normalized to `[0, 1]`.
    pub video_length: Vec<f64>,
}

impl InteractionMatrix {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn d_x(&self) -> usize {
        self.user_features.ncols()
    }
}

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(File::open(path)?);
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            // header is line 1
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Ingestion {
                file: file.clone(),
                row: line,
                message: e.to_string(),
            })?;
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { file, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
            file: self.file.clone(),
            row: 1,
            message: format!("missing column {name:?}"),
        })
    }

    fn number(&self, line: usize, value: &str, column: &str) -> Result<f64> {
        value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Ingestion {
                file: self.file.clone(),
                row: line,
                message: format!("column {column:?}: {value:?} is not a finite number"),
            })
    }
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn standardize(m: &mut Array2<f64>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 });
    }
}

/// Reads the three files under `dir` into a dense matrix.
pub fn load_matrix(dir: &Path, schema: &SchemaConfig) -> Result<InteractionMatrix> {
    let users = Table::read(&dir.join(&schema.users_file))?;
    let items = Table::read(&dir.join(&schema.items_file))?;
    let inter = Table::read(&dir.join(&schema.interactions_file))?;

    let uid = users.column(&schema.user_id)?;
    let feature_cols: Vec<(usize, String)> = match &schema.feature_columns {
        Some(cols) => cols
            .iter()
            .map(|c| Ok((users.column(c)?, c.clone())))
            .collect::<Result<_>>()?,
        None => users
            .headers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != uid)
            .map(|(k, h)| (k, h.clone()))
            .collect(),
    };
    let mut user_ids = Vec::with_capacity(users.rows.len());
    let mut user_index = HashMap::new();
    let mut features = Array2::zeros((users.rows.len(), feature_cols.len()));
    for (u, (line, rec)) in users.rows.iter().enumerate() {
        let id = rec[uid].clone();
        if user_index.insert(id.clone(), u).is_some() {
            return Err(Error::Ingestion {
                file: users.file.clone(),
                row: *line,
                message: format!("duplicate user id {id:?}"),
            });
        }
        user_ids.push(id);
        for (j, (k, name)) in feature_cols.iter().enumerate() {
            features[[u, j]] = users.number(*line, &rec[*k], name)?;
        }
    }
    standardize(&mut features);

    let (iid, age_col, len_col) = (
        items.column(&schema.item_id)?,
        items.column(&schema.upload_age)?,
        items.column(&schema.video_length)?,
    );
    let mut item_ids = Vec::with_capacity(items.rows.len());
    let mut item_index = HashMap::new();
    let (mut age, mut length) = (Vec::new(), Vec::new());
    for (i, (line, rec)) in items.rows.iter().enumerate() {
        let id = rec[iid].clone();
        if item_index.insert(id.clone(), i).is_some() {
            return Err(Error::Ingestion {
                file: items.file.clone(),
                row: *line,
                message: format!("duplicate item id {id:?}"),
            });
        }
        item_ids.push(id);
        age.push(items.number(*line, &rec[age_col], &schema.upload_age)?);
        length.push(items.number(*line, &rec[len_col], &schema.video_length)?);
    }

    let (iu, ii, iw) = (
        inter.column(&schema.user_id)?,
        inter.column(&schema.item_id)?,
        inter.column(&schema.watch_ratio)?,
    );
    let shape = (user_ids.len(), item_ids.len());
    let mut sum = Array2::<f64>::zeros(shape);
    let mut count = Array2::<u32>::zeros(shape);
    for (line, rec) in &inter.rows {
        let lookup = |map: &HashMap<String, usize>, col: usize, what: &str| {
            map.get(&rec[col]).copied().ok_or_else(|| Error::Ingestion {
                file: inter.file.clone(),
                row: *line,
                message: format!("unknown {what} id {:?}", rec[col]),
            })
        };
        let u = lookup(&user_index, iu, "user")?;
        let i = lookup(&item_index, ii, "item")?;
        let w = inter.number(*line, &rec[iw], &schema.watch_ratio)?;
        sum[[u, i]] += w;
        count[[u, i]] += 1;
    }
    for ((u, i), &c) in count.indexed_iter() {
        if c == 0 {
            return Err(Error::MissingCell {
                user: user_ids[u].clone(),
                item: item_ids[i].clone(),
            });
        }
    }
    let watch_ratio = Array2::from_shape_fn(shape, |(u, i)| sum[[u, i]] / count[[u, i]] as f64);

    Ok(InteractionMatrix {
        user_ids,
        item_ids,
        user_features: features,
        watch_ratio,
        upload_age: min_max(&age),
        video_length: min_max(&length),
    })
}

/// Secondary rewards of one cell:
/// `[1{r ≥ 2}, −1{r < 0.5}, −upload_age, video_length]`.
pub fn secondary_of(watch_ratio: f64, upload_age: f64, video_length: f64) -> [f64; SECONDARY_DIM] {
    [
        if watch_ratio >= LONG_WATCH { 1.0 } else { 0.0 },
        if watch_ratio < ENGAGEMENT_FLOOR { -1.0 } else { 0.0 },
        -upload_age,
        video_length,
    ]
}

/// `n_users × n_items × 4`
pub fn build_secondary(m: &InteractionMatrix) -> Array3<f64> {
    let mut out = Array3::zeros((m.n_users(), m.n_items(), SECONDARY_DIM));
    for ((u, i), &r) in m.watch_ratio.indexed_iter() {
        let s = secondary_of(r, m.upload_age[i], m.video_length[i]);
        for (d, v) in s.iter().enumerate() {
            out[[u, i, d]] = *v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataSpec {
    pub n_actions: usize,
    pub n: usize,
    pub obs_prob: f64,
    pub temperature: f64,
    pub train_share: f64,
    pub beta: f64,
}

impl Default for RealDataSpec {
    fn default() -> Self {
        Self {
            n_actions: 100,
            n: 1000,
            obs_prob: 0.2,
            temperature: -2.0,
            train_share: 0.7,
            beta: 0.3,
        }
    }
}

/// A logged dataset over a random item subset plus the held-out users'
/// ground-truth tables.
#[derive(Debug, Clone)]
pub struct OplProblem {
    pub dataset: LoggedDataset,
    pub logging: LoggingPolicy,
    /// Matrix columns used as actions, in action order.
    pub items: Vec<usize>,
    pub train_users: Vec<usize>,
    pub eval_users: Vec<usize>,
    /// Held-out users: `q(u, a) = r(u, a)` and `Σ_d s_d(u, a)`.
    pub evaluation: EvaluationSet,
}

/// Samples a logged problem. Logged users are drawn with replacement from the
/// training share; evaluation uses every held-out user.
pub fn make_opl_problem(m: &InteractionMatrix, spec: &RealDataSpec, seed: u64) -> Result<OplProblem> {
    if spec.n_actions == 0 || spec.n_actions > m.n_items() {
        return Err(Error::Config(format!(
            "{} actions requested but the matrix has {} items",
            spec.n_actions,
            m.n_items()
        )));
    }
    if spec.n == 0 || !(spec.obs_prob > 0.0 && spec.obs_prob <= 1.0) {
        return Err(Error::Config("need n >= 1 and obs_prob in (0, 1]".into()));
    }
    let n_train = (m.n_users() as f64 * spec.train_share).round() as usize;
    if n_train == 0 || n_train >= m.n_users() {
        return Err(Error::Config(format!(
            "train share {} leaves an empty side for {} users",
            spec.train_share,
            m.n_users()
        )));
    }
    let secondary = build_secondary(m);

    let mut rng = derive_rng(seed, stream::ITEM_SUBSET, 0);
    let mut items = index::sample(&mut rng, m.n_items(), spec.n_actions).into_vec();
    items.sort_unstable();

    let mut users: Vec<usize> = (0..m.n_users()).collect();
    users.shuffle(&mut derive_rng(seed, stream::SPLIT, 0));
    let eval_users = users.split_off(n_train);
    let train_users = users;

    let mut rng = derive_rng(seed, stream::LOGGING_POLICY, 0);
    let (d_x, k) = (m.d_x(), spec.n_actions);
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let m_xa = Array2::from_shape_vec((d_x, k), uniform(d_x * k)).expect("shape");
    let theta_x = uniform(d_x);
    let theta_a = uniform(k);
    let logging = LoggingPolicy::new(m_xa, theta_x, theta_a, spec.temperature)?;

    let mut rng = derive_rng(seed, stream::DATASET, 0);
    let mut rows = Vec::with_capacity(spec.n);
    let mut probs = vec![0.0; k];
    for _ in 0..spec.n {
        let u = train_users[rng.random_range(0..train_users.len())];
        let x = m.user_features.row(u).to_vec();
        logging.probs_into(&x, &mut probs);
        let a = sample_from_probs(&probs, &mut rng);
        let item = items[a];
        let observed = rng.random::<f64>() < spec.obs_prob;
        rows.push(Row {
            pscore: probs[a],
            secondary: (0..SECONDARY_DIM).map(|d| secondary[[u, item, d]]).collect(),
            target: observed.then_some(m.watch_ratio[[u, item]]),
            obs_prob: spec.obs_prob,
            context: x,
            action: a,
        });
    }
    let dataset = LoggedDataset::from_rows(&rows, k)?;

    let evaluation = EvaluationSet {
        contexts: m.user_features.select(Axis(0), &eval_users),
        target: Array2::from_shape_fn((eval_users.len(), k), |(e, a)| {
            m.watch_ratio[[eval_users[e], items[a]]]
        }),
        secondary: Array2::from_shape_fn((eval_users.len(), k), |(e, a)| {
            (0..SECONDARY_DIM)
                .map(|d| secondary[[eval_users[e], items[a], d]])
                .sum()
        }),
    };
    Ok(OplProblem {
        dataset,
        logging,
        items,
        train_users,
        eval_users,
        evaluation,
    })
}

/// Values of a policy on the held-out users, with the optimal and uniform
/// references for the same `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixValues {
    pub policy: PolicyValues,
    pub optimal: PolicyValues,
    pub uniform: PolicyValues,
}

pub fn matrix_true_values(problem: &OplProblem, policy: &SoftmaxLinearPolicy, beta: f64) -> Result<MatrixValues> {
    let eval = &problem.evaluation;
    Ok(MatrixValues {
        policy: eval.softmax_values(policy, beta)?,
        optimal: eval.optimal(beta),
        uniform: eval.uniform(beta),
    })
}

// ── Fixture ─────────────────────────────────────────────────────────────

pub const FIXTURE_USERS: usize = 20;
pub const FIXTURE_ITEMS: usize = 30;
pub const FIXTURE_FEATURES: usize = 10;
const FIXTURE_SEED: u64 = 0x5eed_f17e;

/// Path of the fixture bundled with the crate.
pub fn bundled_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("small_matrix")
}

fn fixture_value(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    // three decimals keep the files short and exactly re-readable
    (rng.random_range(lo..hi) * 1000.0).round() / 1000.0
}

/// Writes the small synthetic fixture (20 users × 30 items × 10 features).
/// Two interactions are duplicated with differing values and a few cells sit
/// exactly on the secondary-reward thresholds.
pub fn write_fixture(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rng = rng_from_seed(FIXTURE_SEED);

    let mut w = csv::Writer::from_path(dir.join("users.csv"))?;
    let mut header = vec!["user_id".to_string()];
    header.extend((0..FIXTURE_FEATURES).map(|j| format!("feat_{j}")));
    w.write_record(&header)?;
    for u in 0..FIXTURE_USERS {
        let mut rec = vec![format!("u{u:02}")];
        rec.extend((0..FIXTURE_FEATURES).map(|_| fixture_value(&mut rng, -2.0, 2.0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("items.csv"))?;
    w.write_record(["item_id", "upload_age", "video_length"])?;
    for i in 0..FIXTURE_ITEMS {
        let age = fixture_value(&mut rng, 0.0, 400.0);
        let length = fixture_value(&mut rng, 5.0, 300.0);
        w.write_record([format!("v{i:02}"), age.to_string(), length.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("interactions.csv"))?;
    w.write_record(["user_id", "item_id", "watch_ratio"])?;
    for u in 0..FIXTURE_USERS {
        for i in 0..FIXTURE_ITEMS {
            let r = match (u, i) {
                (0, 0) => 0.5,
                (0, 1) => 2.0,
                (1, 0) => 0.499,
                (1, 1) => 1.999,
                _ => fixture_value(&mut rng, 0.0, 3.5),
            };
            w.write_record([format!("u{u:02}"), format!("v{i:02}"), r.to_string()])?;
        }
    }
    // repeated cells; the loader averages them with the originals above
    w.write_record(["u02", "v03", "3.0"])?;
    w.write_record(["u05", "v07", "0.0"])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_inclusive() {
        assert_eq!(secondary_of(2.0, 0.0, 0.0)[0], 1.0);
        assert_eq!(secondary_of(2.0 - 1e-12, 0.0, 0.0)[0], 0.0);
        assert_eq!(secondary_of(0.5, 0.0, 0.0)[1], 0.0);
        assert_eq!(secondary_of(0.5 - 1e-12, 0.0, 0.0)[1], -1.0);
        assert_eq!(secondary_of(1.0, 0.25, 0.75)[2..], [-0.25, 0.75]);
    }

    #[test]
    fn min_max_endpoints() {
        assert_eq!(min_max(&[3.0, 1.0, 2.0]), vec![1.0, 0.0, 0.5]);
        assert_eq!(min_max(&[4.0, 4.0]), vec![0.0, 0.0]);
    }
}
