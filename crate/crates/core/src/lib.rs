//! Off-policy learning for contextual bandits whose target reward is only
//! partially observed while a vector of secondary rewards is always logged.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod models;
pub mod policy;
pub mod realdata;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod tuner;

pub use dataset::{LoggedDataset, Row};
pub use error::{Error, Result};
pub use policy::{Policy, SoftmaxLinearPolicy};
