//! Property checks over [`SmallCase`]s, shared by the proptest suite and the
//! acceptance binary.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use wesample::ensemble::{
    apply_selection, select_optimal, select_smc_gb, select_we_multinomial, select_we_residual, step,
    AllocationPolicy, CustomTable, Phase, Scheme, SelectionRule, StatePotential,
};
use wesample::kernels::{horizon_functions, FiniteKernel, StateTable};
use wesample::rng::{ReplicateStreams, RngStream};
use wesample::variance_lab::{global_selection_variance, mutation_variance, selection_variance, SelectionInputs};

use super::*;

pub const ORACLE_TOL: f64 = 1e-12;

fn close(what: &str, got: f64, want: f64) -> Result<(), TestCaseError> {
    prop_assert!(
        (got - want).abs() <= ORACLE_TOL,
        "{what}: library {got:e}, enumeration {want:e}, gap {:e}",
        (got - want).abs()
    );
    Ok(())
}

/// Closed-form selection variances against exhaustive enumeration.
pub fn selection_variances(case: &SmallCase) -> Result<(), TestCaseError> {
    let kernel = FiniteKernel::new(case.kernel.clone()).unwrap();
    let hf = horizon_functions(&kernel, &case.f, case.horizon).unwrap();
    let (t, big_t) = (case.t, case.horizon);
    let t2 = (big_t * big_t) as f64;
    let pre = ensemble(&case.states, &case.weights, t, Phase::BeforeSelection);
    let bin_of = case.bin_of();
    let alloc = case.allocation();
    let lay = layout(&case.weights, &bin_of, &alloc);
    let kh = case.kh_particles();

    let multinomial = selection_variance(&pre, SelectionInputs::WeMultinomial(&lay), &hf, t, big_t, Scheme::WeMultinomial)
        .unwrap();
    close(
        "we_multinomial",
        multinomial,
        we_multinomial_law(&case.weights, &bin_of, &alloc).variance_of(&kh) / t2,
    )?;

    let residual =
        selection_variance(&pre, SelectionInputs::WeResidual(&lay), &hf, t, big_t, Scheme::WeResidual).unwrap();
    close(
        "we_residual",
        residual,
        we_residual_law(&case.weights, &bin_of, &alloc).variance_of(&kh) / t2,
    )?;
    prop_assert!(residual <= multinomial + ORACLE_TOL, "residual {residual:e} > multinomial {multinomial:e}");

    let potential = StatePotential::new(case.potential.clone());
    let smc = select_smc_gb(&pre, &potential, &mut RngStream::seeded(1)).unwrap();
    let v: Vec<f64> = case.states.iter().map(|&s| case.potential[s]).collect();
    let beta = potential_beta(&case.weights, &v);
    for (a, b) in smc.expected_counts.iter().zip(&beta) {
        close("smc beta", *a, *b)?;
    }
    let smc_var = selection_variance(
        &pre,
        SelectionInputs::Global {
            expected_counts: &smc.expected_counts,
        },
        &hf,
        t,
        big_t,
        Scheme::SmcGb,
    )
    .unwrap();
    close("smc_gb", smc_var, global_law(&case.weights, &beta).variance_of(&kh) / t2)?;

    let kh_lib: Vec<f64> = case.states.iter().map(|&s| hf.kh(t, s)).collect();
    let opt = select_optimal(&pre, &kh_lib, &mut RngStream::seeded(2)).unwrap();
    let opt_var = selection_variance(
        &pre,
        SelectionInputs::Global {
            expected_counts: &opt.expected_counts,
        },
        &hf,
        t,
        big_t,
        Scheme::Optimal,
    )
    .unwrap();
    prop_assert!(opt_var.abs() <= ORACLE_TOL);
    let as_global = global_selection_variance(&pre, &opt.expected_counts, &hf, t, big_t).unwrap();
    prop_assert!(as_global.abs() <= ORACLE_TOL, "optimal β leaves variance {as_global:e}");
    let enumerated = global_law(&case.weights, &opt.expected_counts).variance_of(&kh) / t2;
    prop_assert!(enumerated.abs() <= ORACLE_TOL, "enumerated optimal variance {enumerated:e}");
    Ok(())
}

/// Closed-form mutation variance against enumeration of joint next states.
pub fn mutation_variance_matches(case: &SmallCase) -> Result<(), TestCaseError> {
    let kernel = FiniteKernel::new(case.kernel.clone()).unwrap();
    let hf = horizon_functions(&kernel, &case.f, case.horizon).unwrap();
    let post = ensemble(&case.states, &case.weights, case.t, Phase::AfterSelection);
    let got = mutation_variance(&post, &hf, case.t, case.horizon).unwrap();
    let want = mutation_variance_oracle(
        &case.kernel,
        &case.states,
        &case.weights,
        &case.h()[case.t + 1],
        case.horizon,
    );
    close("mutation", got, want)
}

/// One WE selection: weight and count conservation, per-bin child counts,
/// and `E[C] = β` for residual resampling by enumeration.
pub fn selection_invariants(case: &SmallCase, seed: u64) -> Result<(), TestCaseError> {
    let n = case.n();
    let pre = ensemble(&case.states, &case.weights, case.t, Phase::BeforeSelection);
    let bin_of = case.bin_of();
    let alloc = case.allocation();
    let lay = layout(&case.weights, &bin_of, &alloc);
    let total = pre.total_weight();
    let mut rng = RngStream::seeded(seed);
    let outcomes = [
        select_we_multinomial(&pre, &lay, &mut rng).unwrap(),
        select_we_residual(&pre, &lay, &mut rng).unwrap(),
    ];
    for outcome in &outcomes {
        prop_assert_eq!(outcome.child_counts.iter().sum::<usize>(), n);
        let post = apply_selection(&pre, &outcome).unwrap();
        prop_assert_eq!(post.len(), n);
        prop_assert!((post.total_weight() - total).abs() <= 1e-12 * (1 + case.t) as f64);
        let mut per_bin = vec![0usize; alloc.len()];
        for (i, &c) in outcome.child_counts.iter().enumerate() {
            per_bin[bin_of[i]] += c;
        }
        prop_assert_eq!(&per_bin, &alloc);
    }
    let law = we_residual_law(&case.weights, &bin_of, &alloc);
    let enumerated = law.expected_counts(n);
    let w: Vec<f64> = (0..alloc.len())
        .map(|u| (0..n).filter(|&i| bin_of[i] == u).map(|i| case.weights[i]).sum())
        .collect();
    for i in 0..n {
        let beta = alloc[bin_of[i]] as f64 * case.weights[i] / w[bin_of[i]];
        close("residual E[C]", enumerated[i], beta)?;
        close("residual β", outcomes[1].expected_counts[i], beta)?;
    }
    Ok(())
}

/// A multi-step WE run keeps `N` particles and total weight `1` to
/// `1e-12 (1 + t)`.
pub fn run_conserves_weight(case: &SmallCase, seed: u64, steps: usize) -> Result<(), TestCaseError> {
    let kernel = FiniteKernel::new(case.kernel.clone()).unwrap();
    let f = StateTable::new(case.f.clone()).unwrap();
    let table = CustomTable::new(case.bin_of_state.clone()).unwrap();
    let policies = [AllocationPolicy::Uniform, AllocationPolicy::ProportionalWithFloor];
    for policy in &policies {
        let rules = [
            SelectionRule::WeMultinomial {
                binning: &table,
                policy,
            },
            SelectionRule::WeResidual {
                binning: &table,
                policy,
            },
            SelectionRule::Dmc,
        ];
        for rule in &rules {
            prop_assert!(rule.scheme().conserves_weight());
            let streams = ReplicateStreams::new(seed, 0);
            let mut ens = ensemble(&case.states, &case.weights, 0, Phase::BeforeSelection);
            for t in 0..steps {
                prop_assert_eq!(ens.len(), case.n());
                let drift = (ens.total_weight() - 1.0).abs();
                prop_assert!(drift <= 1e-12 * (1 + t) as f64, "drift {drift:e} at t = {t}");
                ens = step(&ens, rule, &kernel, &f, &streams).unwrap();
            }
        }
    }
    Ok(())
}
