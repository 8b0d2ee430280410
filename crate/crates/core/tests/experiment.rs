mod common;

use std::fs;

use common::gaussian;
use hyper_opl::experiment::*;
use hyper_opl::realdata::bundled_fixture_dir;
use hyper_opl::rng::rng_from_seed;
use hyper_opl::synth::PolicyValues;

fn small(seed: u64) -> SweepConfig {
    let mut cfg = SweepConfig::default();
    cfg.apply_text(
        "n = 300\nn_eval = 300\nd_x = 3\nn_actions = 4\nd_s = 2\niterations = 20\nn_sims = 2\n\
         gamma_grid = 0, 0.3, 1\nn_boot = 2\nci_resamples = 200",
    )
    .unwrap();
    cfg.seed = seed;
    cfg
}

fn fake_row(sim: usize, combined: f64) -> ResultRow {
    let v = PolicyValues {
        target: combined,
        secondary: combined,
        combined,
    };
    ResultRow {
        axis_value: 0.2,
        sim,
        seed: sim as u64,
        method: Method::RDr,
        outcome: Ok(MethodOutcome {
            gamma: None,
            values: v,
            relative: v,
        }),
    }
}

fn combined_cell(cells: &[SummaryCell]) -> &SummaryCell {
    cells.iter().find(|c| c.metric == Metric::Combined).unwrap()
}

#[test]
fn row_count_and_order() {
    let mut cfg = small(1);
    cfg.values = vec![0.2, 1.0];
    cfg.methods = vec![Method::RDr, Method::HyperBeta];
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| !r.is_error()));
    let order: Vec<(f64, usize, Method)> = rows.iter().map(|r| (r.axis_value, r.sim, r.method)).collect();
    assert_eq!(order[0], (0.2, 0, Method::RDr));
    assert_eq!(order[3], (0.2, 1, Method::HyperBeta));
    assert_eq!(order[4], (1.0, 0, Method::RDr));
    assert_eq!(rows.iter().find(|r| r.method == Method::HyperBeta).unwrap().outcome.as_ref().unwrap().gamma, Some(0.3));
}

#[test]
fn results_do_not_depend_on_method_set_or_sim_count() {
    let mut wide = small(2);
    wide.methods = vec![Method::SDr, Method::RDr, Method::HyperZero];
    wide.n_sims = 3;
    let mut narrow = small(2);
    narrow.methods = vec![Method::RDr];
    narrow.n_sims = 2;
    let wide_rows = run_sweep(&wide).unwrap();
    let narrow_rows = run_sweep(&narrow).unwrap();
    for r in &narrow_rows {
        let twin = wide_rows.iter().find(|w| w.sim == r.sim && w.method == r.method).unwrap();
        assert_eq!(twin, r);
    }
}

#[test]
fn skyline_dominates_grid_members() {
    let mut cfg = small(3);
    cfg.methods = vec![Method::HyperBeta, Method::HyperZero, Method::HyperOptimal];
    for pair in run_sweep(&cfg).unwrap().chunks(3) {
        let v = |i: usize| pair[i].outcome.as_ref().unwrap().values.combined;
        assert!(v(2) >= v(0) && v(2) >= v(1));
        assert!(cfg.gamma_grid.contains(&pair[2].outcome.as_ref().unwrap().gamma.unwrap()));
    }
}

#[test]
fn every_method_runs() {
    let mut cfg = small(4);
    cfg.n_sims = 1;
    cfg.methods = Method::ALL.to_vec();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), Method::ALL.len());
    for r in &rows {
        let o = r.outcome.as_ref().unwrap_or_else(|e| panic!("{}: {e}", r.method));
        assert!(o.relative.combined.is_finite());
        assert_eq!(o.gamma.is_some(), r.method.reports_gamma() || matches!(r.method, Method::HyperBeta | Method::HyperZero));
    }
}

#[test]
fn failures_become_error_rows() {
    let mut cfg = small(5);
    cfg.values = vec![0.0, 0.5];
    cfg.methods = vec![Method::RDr, Method::RIps];
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows.iter().filter(|r| r.is_error()).count(), 4);
    assert!(rows.iter().filter(|r| r.axis_value == 0.5).all(|r| !r.is_error()));
}

#[test]
fn sweeps_are_deterministic() {
    let cfg = small(6);
    assert_eq!(run_sweep(&cfg).unwrap(), run_sweep(&cfg).unwrap());
}

#[test]
fn realdata_sweep_on_fixture() {
    let mut cfg = small(7);
    cfg.problem = ProblemKind::RealData;
    cfg.data_dir = Some(bundled_fixture_dir());
    cfg.n_actions = Some(8);
    cfg.methods = vec![Method::SDr, Method::HyperBeta];
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| !r.is_error()), "{rows:?}");
}

#[test]
fn zero_variance_cell() {
    let rows: Vec<ResultRow> = (0..10).map(|s| fake_row(s, 0.37)).collect();
    let cells = summarize(&rows, 1000, 1).unwrap();
    let c = combined_cell(&cells);
    assert_eq!((c.mean, c.ci_low, c.ci_high), (0.37, 0.37, 0.37));
    assert_eq!(c.n_sims, 10);
    assert!(!c.degenerate);
}

#[test]
fn bounded_cell() {
    let rows = vec![fake_row(0, 0.0), fake_row(1, 1.0)];
    let c = combined_cell(&summarize(&rows, 5000, 2).unwrap()).clone();
    assert_eq!(c.mean, 0.5);
    assert!(0.0 <= c.ci_low && c.ci_low <= c.mean && c.mean <= c.ci_high && c.ci_high <= 1.0);
}

#[test]
fn single_row_cell_is_flagged() {
    let cells = summarize(&[fake_row(0, 0.4)], 1000, 3).unwrap();
    let c = combined_cell(&cells);
    assert!(c.degenerate);
    assert_eq!((c.ci_low, c.ci_high), (0.4, 0.4));
}

#[test]
fn bootstrap_width_matches_analytic_width() {
    let mut rng = rng_from_seed(12);
    let values: Vec<f64> = (0..100).map(|_| 2.0 + 0.5 * gaussian(&mut rng)).collect();
    let rows: Vec<ResultRow> = values.iter().enumerate().map(|(s, v)| fake_row(s, *v)).collect();
    let c = combined_cell(&summarize(&rows, 1000, 4).unwrap()).clone();
    let mean = values.iter().sum::<f64>() / 100.0;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    let analytic = 2.0 * 1.96 * sd / 10.0;
    let width = c.ci_high - c.ci_low;
    assert!((width / analytic - 1.0).abs() < 0.2, "width {width} vs {analytic}");
}

#[test]
fn error_rows_are_left_out_of_summaries() {
    let mut rows = vec![fake_row(0, 0.2), fake_row(1, 0.4)];
    rows.push(ResultRow {
        outcome: Err("boom".into()),
        ..fake_row(2, 0.0)
    });
    let c = combined_cell(&summarize(&rows, 100, 5).unwrap()).clone();
    assert_eq!(c.n_sims, 2);
    assert!((c.mean - 0.3).abs() < 1e-15);
}

#[test]
fn tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(8);
    cfg.methods = vec![Method::RDr, Method::HyperTuned];
    let rows = run_sweep(&cfg).unwrap();
    let cells = summarize(&rows, cfg.ci_resamples, cfg.seed).unwrap();
    let paths = prepare_outputs(dir.path(), &cfg).unwrap();
    emit_outputs(&paths, &rows, &cells).unwrap();
    assert_eq!(read_rows(&paths.rows).unwrap(), rows);
    assert_eq!(read_summary(&paths.summary).unwrap(), cells);
    let header = fs::read_to_string(&paths.summary).unwrap();
    assert!(header.starts_with("axis,method,metric,mean,ci_low,ci_high,n_sims,seed\n"));
}

#[test]
fn empty_summary_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let paths = prepare_outputs(dir.path(), &small(9)).unwrap();
    emit_outputs(&paths, &[], &[]).unwrap();
    assert_eq!(fs::read_to_string(&paths.summary).unwrap(), format!("{}\n", SUMMARY_HEADER.join(",")));
    assert!(read_summary(&paths.summary).unwrap().is_empty());
    assert!(paths.manifest.exists());
}

#[test]
fn manifest_records_seed_and_surrogate_noise() {
    let mut cfg = small(4242);
    cfg.sigma_f = 0.45;
    let text = manifest_text(&cfg);
    assert!(text.lines().any(|l| l == "seed = 4242"));
    assert!(text.lines().any(|l| l == "sigma_f = 0.45"));
    assert!(text.lines().any(|l| l.starts_with("# version")));
    assert!(text.lines().filter(|l| l.starts_with("# design:")).count() >= 5);
    assert_eq!(SweepConfig::from_text(&text).unwrap(), {
        let mut c = cfg.clone();
        c.n = Some(cfg.n());
        c.n_actions = Some(cfg.n_actions());
        c
    });
}

#[test]
fn unwritable_destination_fails_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert!(prepare_outputs(&blocker.join("out"), &small(1)).is_err());
}

#[test]
fn manifest_rerun_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cfg: &SweepConfig, sub: &str| {
        let paths = prepare_outputs(&dir.path().join(sub), cfg).unwrap();
        let rows = run_sweep(cfg).unwrap();
        emit_outputs(&paths, &rows, &summarize(&rows, cfg.ci_resamples, cfg.seed).unwrap()).unwrap();
        paths
    };
    let first = run(&small(10), "a");
    let again = SweepConfig::from_text(&fs::read_to_string(&first.manifest).unwrap()).unwrap();
    let second = run(&again, "b");
    assert_eq!(fs::read(&first.summary).unwrap(), fs::read(&second.summary).unwrap());
    assert_eq!(fs::read(&first.rows).unwrap(), fs::read(&second.rows).unwrap());
    assert_eq!(fs::read(&first.manifest).unwrap(), fs::read(&second.manifest).unwrap());
}
