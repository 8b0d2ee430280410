//! Parameter sweeps over repeated paired simulations, bootstrap summaries
//! and the tables a sweep leaves on disk.

mod config;
mod run;
mod summary;

pub use config::{Axis, Method, ProblemKind, SweepConfig, DEFAULT_CI_RESAMPLES, DEFAULT_SIGMA_F, DEFAULT_SIMS};
pub use run::{
    at_axis_value, build_problem, environment_spec, load_sweep_matrix, realdata_spec, run_simulation, run_sweep,
    run_tune, sim_seed, tuner_config, MethodOutcome, ResultRow, SimProblem,
};
pub use summary::{
    bootstrap_ci, emit_outputs, manifest_text, prepare_outputs, read_rows, read_summary, summarize, write_rows,
    write_summary, Metric, OutputPaths, SummaryCell, MANIFEST_FILE, ROWS_FILE, SUMMARY_FILE, SUMMARY_HEADER,
};
