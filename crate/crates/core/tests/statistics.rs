//! Statistical checks of the estimators against exact expectations.

mod common;

use common::*;
use wesample::ensemble::{init_ensemble, step, AllocationPolicy, PerState, Scheme, SelectionRule};
use wesample::estimators::{ancestral_time_average, Estimator, TimeAverageAccumulator};
use wesample::experiment::{run_experiment, ExperimentConfig, RunOptions};
use wesample::kernels::{FiniteKernel, PointMass, StateTable};
use wesample::rng::ReplicateStreams;

fn config(scheme: Scheme, seed: u64) -> ExperimentConfig {
    let extra = match scheme {
        Scheme::WeMultinomial | Scheme::WeResidual => r#""binning": {"kind": "per_state"},"#,
        Scheme::SmcGb => r#""potential": {"kind": "linear"},"#,
        _ => "",
    };
    let observable = if scheme == Scheme::Optimal {
        r#"{"kind": "table", "values": [0.5, 1.0, 3.0]}"#
    } else {
        r#"{"kind": "indicator", "state": 2}"#
    };
    ExperimentConfig::parse(&format!(
        r#"{{
            "name": "unbiased",
            "kernel": {{"kind": "three_state", "delta": 0.25}},
            "scheme": "{scheme}",
            {extra}
            "initial": {{"kind": "categorical", "probabilities": [0.5, 0.3, 0.2]}},
            "observable": {observable},
            "particles": [4],
            "horizons": [1, 5, 10],
            "horizon_mode": "independent",
            "replicates": 20000,
            "estimators": ["theta", "theta_bar"],
            "seed": {seed}
        }}"#
    ))
    .unwrap()
}

#[test]
fn estimators_are_unbiased_for_every_scheme() {
    let k = three_state(0.25);
    let nu = [0.5, 0.3, 0.2];
    for (i, scheme) in Scheme::ALL.into_iter().enumerate() {
        let f = if scheme == Scheme::Optimal {
            vec![0.5, 1.0, 3.0]
        } else {
            vec![0.0, 0.0, 1.0]
        };
        let table = run_experiment(&config(scheme, 40 + i as u64), &RunOptions::default()).unwrap();
        for horizon in [1, 5, 10] {
            let theta = table.row(horizon, Estimator::Theta).unwrap();
            let want = expected_theta(&k, &nu, &f, horizon);
            assert!(
                (theta.mean - want).abs() <= 4.0 * theta.stderr + 1e-12,
                "{scheme} θ_{horizon}: {} vs {want} (stderr {})",
                theta.mean,
                theta.stderr
            );
            let bar = table.row(horizon, Estimator::ThetaBar).unwrap();
            let want = expected_marginal(&k, &nu, &f, horizon - 1);
            assert!(
                (bar.mean - want).abs() <= 4.0 * bar.stderr + 1e-12,
                "{scheme} θ̄_{horizon}: {} vs {want} (stderr {})",
                bar.mean,
                bar.stderr
            );
        }
    }
}

#[test]
fn optimal_selection_has_only_mutation_noise_at_t1() {
    // at T = 1 there is no selection at all: θ_1 = Σ ω f(ξ_0)
    let table = run_experiment(&config(Scheme::Optimal, 3), &RunOptions::default()).unwrap();
    let row = table.row(1, Estimator::Theta).unwrap();
    let bar = table.row(1, Estimator::ThetaBar).unwrap();
    assert_eq!(row.mean, bar.mean);
    assert_eq!(row.std, bar.std);
}

/// Period-2 chain, `N = 2`, `T = 2`, per-state bins: the two particles start
/// in state 1, are both kept, and each moves to state 2 or 3 with
/// probability 1/2. So `θ_2 = θ̃_2 = (number in state 3)/4`.
#[test]
fn periodic_chain_by_hand() {
    let kernel = FiniteKernel::periodic_three_state();
    let f = StateTable::indicator(3, 2).unwrap();
    let bins = PerState { n: 3 };
    let policy = AllocationPolicy::Uniform;
    let rule = SelectionRule::WeMultinomial {
        binning: &bins,
        policy: &policy,
    };
    let mut histogram = [0usize; 3];
    let reps = 40_000;
    for r in 0..reps {
        let streams = ReplicateStreams::new(5, r);
        let e0 = init_ensemble(&PointMass(0usize), &f, 2, &streams).unwrap();
        let mut acc = TimeAverageAccumulator::new(2).unwrap();
        acc.accumulate(&e0, &f).unwrap();
        assert_eq!(acc.running_sum(), 0.0);
        let e1 = step(&e0, &rule, &kernel, &f, &streams).unwrap();
        acc.accumulate(&e1, &f).unwrap();
        let in3 = e1.particles().iter().filter(|p| p.state == 2).count();
        assert!(e1.particles().iter().all(|p| p.state != 0 && p.weight == 0.5));
        let theta = acc.value().unwrap();
        assert_eq!(theta, in3 as f64 / 4.0);
        assert_eq!(ancestral_time_average(&e1, 2).unwrap(), theta);
        histogram[in3] += 1;
    }
    // Binomial(2, 1/2)
    for (k, p) in [0.25, 0.5, 0.25].into_iter().enumerate() {
        let sd = (reps as f64 * p * (1.0 - p)).sqrt();
        assert!((histogram[k] as f64 - reps as f64 * p).abs() <= 5.0 * sd, "{histogram:?}");
    }
}

/// Continuing the trace to `T = 3`: if the particles split between states
/// 2 and 3, uniform allocation keeps one child in each bin, both return to
/// state 1, and `θ_3 = (1/3)(0 + 1/2 + 0)`.
#[test]
fn periodic_chain_three_steps() {
    let kernel = FiniteKernel::periodic_three_state();
    let f = StateTable::indicator(3, 2).unwrap();
    let bins = PerState { n: 3 };
    let policy = AllocationPolicy::Uniform;
    let rule = SelectionRule::WeMultinomial {
        binning: &bins,
        policy: &policy,
    };
    let mut split = 0;
    for r in 0..200 {
        let streams = ReplicateStreams::new(6, r);
        let mut ens = init_ensemble(&PointMass(0usize), &f, 2, &streams).unwrap();
        let mut acc = TimeAverageAccumulator::new(3).unwrap();
        for t in 0..3 {
            acc.accumulate(&ens, &f).unwrap();
            if t < 2 {
                ens = step(&ens, &rule, &kernel, &f, &streams).unwrap();
            }
        }
        assert!(ens.particles().iter().all(|p| p.state == 0));
        let theta = acc.value().unwrap();
        let tilde = ancestral_time_average(&ens, 3).unwrap();
        let mut lineage: Vec<f64> = ens.particles().iter().map(|p| p.lineage_sum).collect();
        lineage.sort_by(f64::total_cmp);
        if lineage == [0.0, 1.0] {
            split += 1;
            assert!((theta - 0.5 / 3.0).abs() < 1e-15);
            assert!((tilde - 0.5 / 3.0).abs() < 1e-15);
        }
        assert!([0.0, 0.5 / 3.0, 1.0 / 3.0].iter().any(|v| (theta - v).abs() < 1e-15));
    }
    assert!(split > 50);
}
