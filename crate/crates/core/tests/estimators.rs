mod common;

use common::*;
use hyper_opl::estimators::*;
use hyper_opl::models::Predictions;
use hyper_opl::rng::rng_from_seed;
use hyper_opl::{Error, LoggedDataset, Row, SoftmaxLinearPolicy};

const TOL: f64 = 1e-12;

fn fully_observed(d: &LoggedDataset) -> LoggedDataset {
    let targets = (0..d.len()).map(|i| d.target()[i].unwrap_or(0.25 * i as f64)).collect();
    d.with_full_targets(targets).unwrap()
}

#[test]
fn collapse_identities_on_random_instances() {
    let mut rng = rng_from_seed(3);
    for _ in 0..100 {
        let (d_x, k, d_s) = (3, 4, 2);
        let d = random_dataset(&mut rng, 40, d_x, k, d_s, 0.4);
        let full = fully_observed(&d);
        let policy = random_policy(&mut rng, d_x, k);
        let preds = random_predictions(&mut rng, &d, false);

        let zero = Predictions::zeros(&full);
        let dr = grad_dr(&full, &policy, &zero).unwrap();
        assert!(dr.max_abs_diff(&grad_ips(&full, &policy).unwrap()) < TOL);

        let zero = Predictions::zeros(&d);
        let r_dr = grad_r_dr(&d, &policy, &zero).unwrap();
        assert!(r_dr.max_abs_diff(&grad_r_ips(&d, &policy).unwrap()) < TOL);

        let h_r = grad_hyper_r(&d, &policy, &preds).unwrap();
        assert!(grad_hyper(&d, &policy, &preds, 0.0).unwrap().max_abs_diff(&h_r) < TOL);
        let s_v = grad_s_value(&d, &policy, &preds).unwrap();
        assert!(grad_hyper(&d, &policy, &preds, 1.0).unwrap().max_abs_diff(&s_v) < TOL);

        let mut blind = random_predictions(&mut rng, &full, false);
        for i in 0..full.len() {
            blind.q_xas[i] = blind.q_xa[[i, full.actions()[i]]];
        }
        let full_p1 = full.with_obs_prob(vec![1.0; full.len()]).unwrap();
        let lhs = grad_hyper_r(&full_p1, &policy, &blind).unwrap();
        assert!(lhs.max_abs_diff(&grad_dr(&full_p1, &policy, &blind).unwrap()) < TOL);
    }
}

#[test]
fn zero_models_reduce_target_gradient_to_reweighted_ips() {
    let mut rng = rng_from_seed(4);
    let d = random_dataset(&mut rng, 60, 2, 3, 2, 0.3);
    let policy = random_policy(&mut rng, 2, 3);
    let h = grad_hyper_r(&d, &policy, &Predictions::zeros(&d)).unwrap();
    assert!(h.max_abs_diff(&grad_r_ips(&d, &policy).unwrap()) < TOL);
}

#[test]
fn no_missingness_reduces_reweighted_estimators() {
    let mut rng = rng_from_seed(5);
    let d = fully_observed(&random_dataset(&mut rng, 50, 2, 3, 2, 1.0));
    let d = d.with_obs_prob(vec![1.0; d.len()]).unwrap();
    let policy = random_policy(&mut rng, 2, 3);
    let preds = random_predictions(&mut rng, &d, false);
    assert!(grad_r_ips(&d, &policy).unwrap().max_abs_diff(&grad_ips(&d, &policy).unwrap()) < TOL);
    let a = grad_r_dr(&d, &policy, &preds).unwrap();
    assert!(a.max_abs_diff(&grad_dr(&d, &policy, &preds).unwrap()) < TOL);
}

#[test]
fn mixture_is_affine_in_gamma() {
    let mut rng = rng_from_seed(6);
    let d = random_dataset(&mut rng, 80, 3, 5, 3, 0.2);
    let policy = random_policy(&mut rng, 3, 5);
    let preds = random_predictions(&mut rng, &d, false);
    let g0 = grad_hyper(&d, &policy, &preds, 0.0).unwrap();
    let g1 = grad_hyper(&d, &policy, &preds, 1.0).unwrap();
    for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mixed = grad_hyper(&d, &policy, &preds, gamma).unwrap();
        for ((m, a), b) in mixed.values().iter().zip(g0.values()).zip(g1.values()) {
            assert!((m - ((1.0 - gamma) * a + gamma * b)).abs() < TOL);
        }
    }
    for bad in [-0.1, 1.1, f64::NAN] {
        assert!(matches!(grad_hyper(&d, &policy, &preds, bad), Err(Error::Config(_))));
    }
}

#[test]
fn scaling_observation_probability_scales_only_reweighted_terms() {
    let mut rng = rng_from_seed(7);
    let d = random_dataset(&mut rng, 70, 2, 4, 2, 0.5);
    let policy = random_policy(&mut rng, 2, 4);
    let preds = random_predictions(&mut rng, &d, false);
    let c = 0.5;
    let scaled = d.with_obs_prob(d.obs_prob().iter().map(|p| p * c).collect()).unwrap();

    let base = grad_r_ips(&d, &policy).unwrap();
    let after = grad_r_ips(&scaled, &policy).unwrap();
    for (a, b) in after.values().iter().zip(base.values()) {
        assert!((a - b / c).abs() < 1e-10);
    }

    // hyper_r = (always-on part) + (reweighted residual part)
    let no_obs = {
        let rows: Vec<Row> = (0..d.len())
            .map(|i| Row { target: None, ..d.row(i) })
            .collect();
        LoggedDataset::from_rows(&rows, d.n_actions()).unwrap()
    };
    let always = grad_hyper_r(&no_obs, &policy, &preds).unwrap();
    let h = grad_hyper_r(&d, &policy, &preds).unwrap();
    let h_scaled = grad_hyper_r(&scaled, &policy, &preds).unwrap();
    for ((hs, h), a) in h_scaled.values().iter().zip(h.values()).zip(always.values()) {
        assert!((hs - (a + (h - a) / c)).abs() < 1e-10);
    }
}

#[test]
fn single_row_arithmetic() {
    // d_x = 1, x = 4, uniform policy over two actions, logged action 0 with
    // propensity 0.5: w = 1 and g = [2, -2, 0.5, -0.5].
    let row = Row {
        context: vec![4.0],
        action: 0,
        pscore: 0.5,
        secondary: vec![0.3],
        target: Some(0.5),
        obs_prob: 1.0,
    };
    let d = LoggedDataset::from_rows(&[row.clone()], 2).unwrap();
    let policy = SoftmaxLinearPolicy::zeros(1, 2);
    assert_eq!(grad_ips(&d, &policy).unwrap().values(), &[1.0, -1.0, 0.25, -0.25]);

    let masked = LoggedDataset::from_rows(&[Row { target: None, obs_prob: 0.2, ..row }], 2).unwrap();
    assert!(grad_r_ips(&masked, &policy).unwrap().values().iter().all(|&v| v == 0.0));
    assert!(matches!(grad_ips(&masked, &policy), Err(Error::MissingReward(0))));
}

#[test]
fn surrogate_identities() {
    let mut rng = rng_from_seed(8);
    let d = random_dataset(&mut rng, 50, 2, 3, 1, 0.3);
    let policy = random_policy(&mut rng, 2, 3);

    let null = SurrogateAggregator::exact(vec![0.0]);
    assert!(grad_s_ips(&d, &policy, &null).unwrap().values().iter().all(|&v| v == 0.0));

    let unit = SurrogateAggregator::exact(vec![1.0]);
    let s_as_r = d
        .with_full_targets((0..d.len()).map(|i| d.secondary_row(i)[0]).collect())
        .unwrap();
    let a = grad_s_ips(&d, &policy, &unit).unwrap();
    assert!(a.max_abs_diff(&grad_ips(&s_as_r, &policy).unwrap()) < TOL);

    let zero = Predictions::zeros(&d);
    assert!(grad_s_dr(&d, &policy, &zero, &unit).unwrap().max_abs_diff(&a) < TOL);

    let preds = random_predictions(&mut rng, &d, false);
    let sv = grad_s_value(&d, &policy, &preds).unwrap();
    assert!(sv.max_abs_diff(&grad_s_dr(&d, &policy, &preds, &unit).unwrap()) < TOL);
}

#[test]
fn naive_pseudo_reward_endpoints() {
    let mut rng = rng_from_seed(9);
    let agg = SurrogateAggregator::exact(vec![0.7, -0.2]);

    let full = fully_observed(&random_dataset(&mut rng, 40, 2, 3, 2, 1.0));
    let policy = random_policy(&mut rng, 2, 3);
    let mut preds = random_predictions(&mut rng, &full, true);
    preds.q_pseudo = Some(preds.q_xa.clone());
    let a = grad_dr_fsr(&full, &policy, &preds, &agg).unwrap();
    assert!(a.max_abs_diff(&grad_dr(&full, &policy, &preds).unwrap()) < TOL);

    let none = random_dataset(&mut rng, 40, 2, 3, 2, 0.0);
    let mut preds = random_predictions(&mut rng, &none, true);
    for i in 0..none.len() {
        for a in 0..3 {
            let f: Vec<f64> = (0..2).map(|t| preds.f_hat[[i, a, t]]).collect();
            preds.q_xa[[i, a]] = f64::NAN;
            preds.q_pseudo.as_mut().unwrap()[[i, a]] = agg.apply(&f);
        }
    }
    let a = grad_dr_fsr(&none, &policy, &preds, &agg).unwrap();
    assert!(a.max_abs_diff(&grad_s_dr(&none, &policy, &preds, &agg).unwrap()) < TOL);

    preds.q_pseudo = None;
    assert!(matches!(grad_dr_fsr(&none, &policy, &preds, &agg), Err(Error::Config(_))));
}

#[test]
fn value_endpoints() {
    let mut rng = rng_from_seed(10);
    let d = fully_observed(&random_dataset(&mut rng, 40, 2, 3, 2, 1.0));
    let d = d.with_obs_prob(vec![1.0; d.len()]).unwrap();
    let policy = random_policy(&mut rng, 2, 3);
    let mut preds = random_predictions(&mut rng, &d, false);
    for i in 0..d.len() {
        preds.q_xas[i] = preds.q_xa[[i, d.actions()[i]]];
    }
    let dr = estimate(&EstimatorConfig::new(EstimatorKind::Dr), &d, &policy, &preds, None).unwrap();
    assert!((value_estimate(&d, &policy, &preds, 0.0).unwrap() - dr.value).abs() < TOL);
    let sv = estimate(&EstimatorConfig::new(EstimatorKind::SGrad), &d, &policy, &preds, None).unwrap();
    assert!((value_estimate(&d, &policy, &preds, 1.0).unwrap() - sv.value).abs() < TOL);
    assert!(value_estimate(&d, &policy, &preds, 1.5).is_err());
}

#[test]
fn estimators_are_unbiased_on_the_enumerated_instance() {
    let inst = EnumerationInstance::bundled();
    let policy = EnumerationInstance::bundled_policy();
    let agg = SurrogateAggregator::exact(vec![0.6, 0.4]);
    let mut models = inst.true_models();
    // imperfect models keep the residual terms active
    for row in models.q_xa.iter_mut() {
        for v in row.iter_mut() {
            *v += 0.3;
        }
    }
    models = models.with_q_pseudo(pseudo_table(&inst, agg.weights()));
    let samples = 20_000;
    let beta = 0.3;

    let cases: Vec<(&str, Vec<f64>, Box<dyn Fn(&LoggedDataset, &Predictions) -> Vec<f64>>)> = vec![
        (
            "hyper_r",
            inst.target_gradient(&policy).unwrap(),
            Box::new(|d, p| grad_hyper_r(d, &policy, p).unwrap().into_inner()),
        ),
        (
            "r_ips",
            inst.target_gradient(&policy).unwrap(),
            Box::new(|d, _| grad_r_ips(d, &policy).unwrap().into_inner()),
        ),
        (
            "r_dr",
            inst.target_gradient(&policy).unwrap(),
            Box::new(|d, p| grad_r_dr(d, &policy, p).unwrap().into_inner()),
        ),
        (
            "s_value",
            inst.secondary_gradient(&policy).unwrap(),
            Box::new(|d, p| grad_s_value(d, &policy, p).unwrap().into_inner()),
        ),
        (
            "hyper",
            inst.combined_gradient(&policy, beta).unwrap(),
            Box::new(|d, p| grad_hyper(d, &policy, p, beta).unwrap().into_inner()),
        ),
        (
            "s_dr",
            inst.surrogate_gradient(&policy, &agg).unwrap(),
            Box::new(|d, p| grad_s_dr(d, &policy, p, &agg).unwrap().into_inner()),
        ),
        (
            "dr_fsr",
            inst.pseudo_reward_gradient(&policy, &agg).unwrap(),
            Box::new(|d, p| grad_dr_fsr(d, &policy, p, &agg).unwrap().into_inner()),
        ),
        (
            "value",
            vec![inst.combined_value(&policy, beta).unwrap()],
            Box::new(|d, p| vec![value_estimate(d, &policy, p, beta).unwrap()]),
        ),
    ];
    for (i, (name, truth, stat)) in cases.iter().enumerate() {
        let mc = single_row_monte_carlo(&inst, &models, samples, 100 + i as u64, stat);
        let z = mc.max_z(truth);
        assert!(z < 4.0, "{name}: max z = {z}");
    }
}

#[test]
fn naive_pseudo_reward_gradient_is_biased_for_the_target() {
    let inst = EnumerationInstance::bundled();
    let policy = EnumerationInstance::bundled_policy();
    let agg = SurrogateAggregator::exact(vec![0.6, 0.4]);
    let target = inst.target_gradient(&policy).unwrap();
    let pseudo = inst.pseudo_reward_gradient(&policy, &agg).unwrap();
    let gap = target.iter().zip(&pseudo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap > 0.05, "bias {gap}");
}

#[test]
fn variance_gap_closed_form_degenerate_cases() {
    let inst = EnumerationInstance::bundled();
    let policy = EnumerationInstance::bundled_policy();
    let blind = inst.true_models().secondary_blind();
    let gap = inst.variance_difference_oracle(&policy, &blind).unwrap();
    assert!(gap.iter().all(|&v| v == 0.0));

    let mut sharp = inst.true_models();
    for row in sharp.q_xa.iter_mut() {
        for v in row.iter_mut() {
            *v += 0.5;
        }
    }
    let gap = inst.variance_difference_oracle(&policy, &sharp).unwrap();
    assert!(gap.iter().all(|&v| v > 0.0), "{gap:?}");
}

#[test]
fn enumeration_limit_is_enforced() {
    let mut inst = EnumerationInstance::bundled();
    let atom = inst.secondary[0][0][0].clone();
    inst.secondary[0][0] = vec![SecondaryAtom { prob: 1.0 / 700.0, ..atom }; 700];
    let policy = EnumerationInstance::bundled_policy();
    let err = inst.variance_difference_oracle(&policy, &inst.true_models()).unwrap_err();
    assert!(matches!(err, Error::EnumerationLimit { size: 10_500, .. }));
}
