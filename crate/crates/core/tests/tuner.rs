use hyper_opl::rng::rng_from_seed;
use hyper_opl::synth::{EnvironmentSpec, SyntheticEnvironment};
use hyper_opl::trainer::TrainerConfig;
use hyper_opl::tuner::*;
use hyper_opl::{Error, LoggedDataset};

fn small_data(n: usize) -> LoggedDataset {
    let env = SyntheticEnvironment::new(EnvironmentSpec {
        seed: 31,
        d_x: 3,
        n_actions: 4,
        d_s: 2,
        obs_prob: 0.5,
        ..Default::default()
    })
    .unwrap();
    env.sample_dataset(n, &mut rng_from_seed(1)).unwrap()
}

fn quick() -> TunerConfig {
    TunerConfig {
        grid: vec![0.0, 0.5, 1.0],
        n_boot: 3,
        trainer: TrainerConfig {
            step_size: 0.05,
            iterations: 20,
        },
        ..TunerConfig::default()
    }
}

fn row_key(d: &LoggedDataset, i: usize) -> Vec<u64> {
    d.context(i).iter().map(|v| v.to_bits()).collect()
}

#[test]
fn bootstrap_keeps_rows_intact() {
    let d = small_data(100);
    let b = bootstrap_resample(&d, 250, &mut rng_from_seed(2)).unwrap();
    assert_eq!(b.len(), 250);
    for i in 0..b.len() {
        let j = (0..d.len()).find(|&j| row_key(&d, j) == row_key(&b, i)).unwrap();
        assert_eq!(b.row(i), d.row(j));
    }
    assert!(bootstrap_resample(&d, 0, &mut rng_from_seed(2)).is_err());
}

#[test]
fn split_is_a_seeded_partition() {
    let d = small_data(101);
    let (train, val) = train_validation_split(&d, 0.7, &mut rng_from_seed(3)).unwrap();
    assert_eq!((train.len(), val.len()), (71, 30));
    let mut keys: Vec<Vec<u64>> = (0..train.len())
        .map(|i| row_key(&train, i))
        .chain((0..val.len()).map(|i| row_key(&val, i)))
        .collect();
    keys.sort();
    let mut all: Vec<Vec<u64>> = (0..d.len()).map(|i| row_key(&d, i)).collect();
    all.sort();
    assert_eq!(keys, all);
    let again = train_validation_split(&d, 0.7, &mut rng_from_seed(3)).unwrap();
    assert_eq!(again.0, train);
    assert!(train_validation_split(&small_data(2), 0.1, &mut rng_from_seed(3)).is_err());
}

#[test]
fn tuning_table_shape_and_determinism() {
    let d = small_data(300);
    let cfg = quick();
    let res = tune_gamma(&d, 0.5, &cfg, 11).unwrap();
    assert_eq!(res.table.len(), 3);
    assert!(res.table.iter().all(|s| s.values.len() == 3 && s.values.iter().all(|v| v.is_finite())));
    assert!(cfg.grid.contains(&res.gamma_hat));
    let best = res.table.iter().map(GammaScore::mean).fold(f64::NEG_INFINITY, f64::max);
    let chosen = res.table.iter().find(|s| s.gamma == res.gamma_hat).unwrap();
    assert_eq!(chosen.mean(), best);
    assert_eq!(res, tune_gamma(&d, 0.5, &cfg, 11).unwrap());

    let plain = tune_gamma_no_replacement(&d, 0.5, &cfg, 11).unwrap();
    assert!(plain.table.iter().all(|s| s.values.len() == 1));
    assert_eq!(plain, tune_gamma_no_replacement(&d, 0.5, &cfg, 11).unwrap());
}

#[test]
fn invalid_settings_are_rejected() {
    let d = small_data(100);
    let bad = [
        TunerConfig { grid: vec![], ..quick() },
        TunerConfig { grid: vec![0.0, 1.5], ..quick() },
        TunerConfig { split_ratio: 1.0, ..quick() },
        TunerConfig { split_ratio: 0.0, ..quick() },
        TunerConfig { n_boot: 0, ..quick() },
    ];
    for cfg in bad {
        assert!(matches!(tune_gamma(&d, 0.3, &cfg, 0), Err(Error::Config(_))), "{cfg:?}");
    }
    assert!(matches!(tune_gamma(&d, 1.2, &quick(), 0), Err(Error::Config(_))));
}

#[test]
fn training_failures_name_gamma_and_replicate() {
    let d = small_data(200);
    let cfg = TunerConfig {
        trainer: TrainerConfig {
            step_size: f64::NAN,
            iterations: 5,
        },
        ..quick()
    };
    match tune_gamma(&d, 0.3, &cfg, 0) {
        Err(Error::Tuning { gamma, replicate, source }) => {
            assert_eq!((gamma, replicate), (0.0, 0));
            assert!(matches!(*source, Error::Config(_)));
        }
        other => panic!("expected a tuning error, got {other:?}"),
    }
}
