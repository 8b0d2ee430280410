//! Flat `key = value` sweep configuration.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::DEFAULT_RIDGE_LAMBDA;
use crate::synth::{EnvironmentSpec, DEFAULT_N, DEFAULT_N_EVAL};
use crate::trainer::{DEFAULT_ITERATIONS, DEFAULT_STEP_SIZE};
use crate::tuner::{default_grid, DEFAULT_BOOTSTRAP_REPLICATES, DEFAULT_SPLIT_RATIO};

pub const DEFAULT_SIGMA_F: f64 = 0.3;
pub const DEFAULT_CI_RESAMPLES: usize = 1000;
pub const DEFAULT_SIMS: usize = 100;
const REAL_DEFAULT_N: usize = 1000;
const REAL_DEFAULT_ACTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    RIps,
    RDr,
    SIps,
    SDr,
    HyperBeta,
    HyperZero,
    HyperTuned,
    HyperTunedNoReplacement,
    HyperOptimal,
    RDm,
    SDm,
    DrFsr,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::RIps,
        Method::RDr,
        Method::SIps,
        Method::SDr,
        Method::HyperBeta,
        Method::HyperZero,
        Method::HyperTuned,
        Method::HyperTunedNoReplacement,
        Method::HyperOptimal,
        Method::RDm,
        Method::SDm,
        Method::DrFsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RIps => "r-ips",
            Method::RDr => "r-dr",
            Method::SIps => "s-ips",
            Method::SDr => "s-dr",
            Method::HyperBeta => "hyper-beta",
            Method::HyperZero => "hyper-0",
            Method::HyperTuned => "hyper-tuned",
            Method::HyperTunedNoReplacement => "hyper-tuned-norep",
            Method::HyperOptimal => "hyper-optimal",
            Method::RDm => "r-dm",
            Method::SDm => "s-dm",
            Method::DrFsr => "dr-fsr",
        }
    }

    /// Whether the method picks a mixture weight worth reporting.
    pub fn reports_gamma(self) -> bool {
        matches!(
            self,
            Method::HyperTuned | Method::HyperTunedNoReplacement | Method::HyperOptimal
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

/// The knob varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    ObsProb,
    N,
    Lambda,
    Beta,
    SigmaS,
    SigmaR,
    SigmaO,
    NActions,
}

impl Axis {
    pub const ALL: [Axis; 8] = [
        Axis::ObsProb,
        Axis::N,
        Axis::Lambda,
        Axis::Beta,
        Axis::SigmaS,
        Axis::SigmaR,
        Axis::SigmaO,
        Axis::NActions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::ObsProb => "obs_prob",
            Axis::N => "n",
            Axis::Lambda => "lambda",
            Axis::Beta => "beta",
            Axis::SigmaS => "sigma_s",
            Axis::SigmaR => "sigma_r",
            Axis::SigmaO => "sigma_o",
            Axis::NActions => "n_actions",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown axis {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Synthetic,
    RealData,
}

/// Every knob of a sweep. `n` and `n_actions` default per problem kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub seed: u64,
    pub problem: ProblemKind,
    pub data_dir: Option<PathBuf>,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_sims: usize,
    pub n: Option<usize>,
    pub n_eval: usize,
    pub d_x: usize,
    pub n_actions: Option<usize>,
    pub d_s: usize,
    pub lambda: f64,
    pub temperature: f64,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub obs_prob: f64,
    pub sigma_o: Option<f64>,
    /// Replace known observation probabilities with logistic estimates.
    pub estimate_obs_prob: bool,
    pub beta: f64,
    pub sigma_f: f64,
    pub train_share: f64,
    pub ridge_lambda: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub gamma_grid: Vec<f64>,
    pub split_ratio: f64,
    pub n_boot: usize,
    pub ci_resamples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let env = EnvironmentSpec::default();
        Self {
            seed: 0,
            problem: ProblemKind::Synthetic,
            data_dir: None,
            axis: Axis::ObsProb,
            values: vec![env.obs_prob],
            methods: vec![Method::RDr, Method::HyperBeta],
            n_sims: DEFAULT_SIMS,
            n: None,
            n_eval: DEFAULT_N_EVAL,
            d_x: env.d_x,
            n_actions: None,
            d_s: env.d_s,
            lambda: env.lambda,
            temperature: env.temperature,
            sigma_s: env.sigma_s,
            sigma_r: env.sigma_r,
            obs_prob: env.obs_prob,
            sigma_o: env.sigma_o,
            estimate_obs_prob: false,
            beta: env.beta,
            sigma_f: DEFAULT_SIGMA_F,
            train_share: 0.7,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            step_size: DEFAULT_STEP_SIZE,
            iterations: DEFAULT_ITERATIONS,
            gamma_grid: default_grid(),
            split_ratio: DEFAULT_SPLIT_RATIO,
            n_boot: DEFAULT_BOOTSTRAP_REPLICATES,
            ci_resamples: DEFAULT_CI_RESAMPLES,
        }
    }
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, T::Err> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(T::from_str).collect()
}

fn join<T: fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl SweepConfig {
    /// Every key accepted by [`Self::set`], in manifest order.
    pub const KEYS: [&'static str; 29] = [
        "seed",
        "problem",
        "data_dir",
        "axis",
        "values",
        "methods",
        "n_sims",
        "n",
        "n_eval",
        "d_x",
        "n_actions",
        "d_s",
        "lambda",
        "temperature",
        "sigma_s",
        "sigma_r",
        "obs_prob",
        "sigma_o",
        "estimate_obs_prob",
        "beta",
        "sigma_f",
        "train_share",
        "ridge_lambda",
        "step_size",
        "iterations",
        "gamma_grid",
        "split_ratio",
        "n_boot",
        "ci_resamples",
    ];

    pub fn n(&self) -> usize {
        self.n.unwrap_or(match self.problem {
            ProblemKind::Synthetic => DEFAULT_N,
            ProblemKind::RealData => REAL_DEFAULT_N,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions.unwrap_or(match self.problem {
            ProblemKind::Synthetic => EnvironmentSpec::default().n_actions,
            ProblemKind::RealData => REAL_DEFAULT_ACTIONS,
        })
    }

    /// Sets one key. Keys and value syntax match the manifest.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |e: &dyn fmt::Display| Error::Parse(format!("{key}: {e}"));
        macro_rules! parse {
            () => {
                v.parse().map_err(|e| bad(&e))?
            };
        }
        match key.trim() {
            "seed" => self.seed = parse!(),
            "problem" => {
                self.problem = match v {
                    "synthetic" => ProblemKind::Synthetic,
                    "realdata" => ProblemKind::RealData,
                    other => return Err(Error::Parse(format!("unknown problem {other:?}"))),
                }
            }
            "data_dir" => self.data_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "axis" => self.axis = v.parse()?,
            "values" => self.values = parse_list(v).map_err(|e| bad(&e))?,
            "methods" => self.methods = parse_list(v)?,
            "n_sims" => self.n_sims = parse!(),
            "n" => self.n = Some(parse!()),
            "n_eval" => self.n_eval = parse!(),
            "d_x" => self.d_x = parse!(),
            "n_actions" => self.n_actions = Some(parse!()),
            "d_s" => self.d_s = parse!(),
            "lambda" => self.lambda = parse!(),
            "temperature" => self.temperature = parse!(),
            "sigma_s" => self.sigma_s = parse!(),
            "sigma_r" => self.sigma_r = parse!(),
            "obs_prob" => self.obs_prob = parse!(),
            "sigma_o" => self.sigma_o = if v == "none" { None } else { Some(parse!()) },
            "estimate_obs_prob" => self.estimate_obs_prob = parse!(),
            "beta" => self.beta = parse!(),
            "sigma_f" => self.sigma_f = parse!(),
            "train_share" => self.train_share = parse!(),
            "ridge_lambda" => self.ridge_lambda = parse!(),
            "step_size" => self.step_size = parse!(),
            "iterations" => self.iterations = parse!(),
            "gamma_grid" => self.gamma_grid = parse_list(v).map_err(|e| bad(&e))?,
            "split_ratio" => self.split_ratio = parse!(),
            "n_boot" => self.n_boot = parse!(),
            "ci_resamples" => self.ci_resamples = parse!(),
            other => return Err(Error::Parse(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key = value, got {line:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.methods.is_empty() || self.n_sims == 0 {
            return Err(Error::Config("a sweep needs axis values, methods and n_sims >= 1".into()));
        }
        if self.problem == ProblemKind::RealData {
            if self.data_dir.is_none() {
                return Err(Error::Config("realdata sweeps need data_dir".into()));
            }
            if matches!(self.axis, Axis::Lambda | Axis::SigmaS | Axis::SigmaR | Axis::SigmaO) {
                return Err(Error::Config(format!(
                    "axis {} does not apply to realdata sweeps",
                    self.axis
                )));
            }
        }
        if self.ci_resamples == 0 || self.n_boot == 0 {
            return Err(Error::Config("ci_resamples and n_boot must be at least 1".into()));
        }
        // Knobs the axis never touches fail here rather than in every row.
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let checks = [
            (self.axis == Axis::Beta || unit(self.beta), "beta must lie in [0, 1]"),
            (!self.gamma_grid.is_empty() && self.gamma_grid.iter().all(|&g| unit(g)), "gamma_grid must be non-empty within [0, 1]"),
            (self.split_ratio > 0.0 && self.split_ratio < 1.0, "split_ratio must lie in (0, 1)"),
            (self.train_share > 0.0 && self.train_share < 1.0, "train_share must lie in (0, 1)"),
            (self.ridge_lambda > 0.0, "ridge_lambda must be positive"),
            (self.step_size > 0.0 && self.step_size.is_finite(), "step_size must be positive and finite"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    /// Every knob as `key = value` lines, re-readable by [`Self::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let problem = match self.problem {
            ProblemKind::Synthetic => "synthetic",
            ProblemKind::RealData => "realdata",
        };
        let data_dir = self.data_dir.as_ref().map_or(String::new(), |p| p.display().to_string());
        let methods = self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ");
        let sigma_o = self.sigma_o.map_or("none".into(), |s| format!("{s:?}"));
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("problem", problem.to_string()),
            ("data_dir", data_dir),
            ("axis", self.axis.name().to_string()),
            ("values", join(&self.values)),
            ("methods", methods),
            ("n_sims", self.n_sims.to_string()),
            ("n", self.n().to_string()),
            ("n_eval", self.n_eval.to_string()),
            ("d_x", self.d_x.to_string()),
            ("n_actions", self.n_actions().to_string()),
            ("d_s", self.d_s.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("temperature", format!("{:?}", self.temperature)),
            ("sigma_s", format!("{:?}", self.sigma_s)),
            ("sigma_r", format!("{:?}", self.sigma_r)),
            ("obs_prob", format!("{:?}", self.obs_prob)),
            ("sigma_o", sigma_o),
            ("estimate_obs_prob", self.estimate_obs_prob.to_string()),
            ("beta", format!("{:?}", self.beta)),
            ("sigma_f", format!("{:?}", self.sigma_f)),
            ("train_share", format!("{:?}", self.train_share)),
            ("ridge_lambda", format!("{:?}", self.ridge_lambda)),
            ("step_size", format!("{:?}", self.step_size)),
            ("iterations", self.iterations.to_string()),
            ("gamma_grid", join(&self.gamma_grid)),
            ("split_ratio", format!("{:?}", self.split_ratio)),
            ("n_boot", self.n_boot.to_string()),
            ("ci_resamples", self.ci_resamples.to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = SweepConfig::default();
        cfg.apply_text("seed = 9\naxis = beta\nvalues = 0, 0.3, 1\nmethods = r-dr, hyper-tuned\nsigma_o = 0.5\n")
            .unwrap();
        let back = SweepConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(back.values, vec![0.0, 0.3, 1.0]);
        assert_eq!(back.methods, vec![Method::RDr, Method::HyperTuned]);
        assert_eq!(back.sigma_o, Some(0.5));
        let text = cfg.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, SweepConfig::KEYS);
    }

    #[test]
    fn rejects_unknown_keys_and_names() {
        assert!(SweepConfig::from_text("bogus = 1").is_err());
        assert!(SweepConfig::from_text("methods = r-dr, nope").is_err());
        assert!(SweepConfig::from_text("axis = nope").is_err());
        assert!(SweepConfig::from_text("just text").is_err());
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        for a in Axis::ALL {
            assert_eq!(a.name().parse::<Axis>().unwrap(), a);
        }
    }
}
