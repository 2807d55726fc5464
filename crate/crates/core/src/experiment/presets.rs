//! Built-in experiments that regenerate the reference figures as tables.

use crate::ensemble::Scheme;
use crate::estimators::Estimator;
use crate::experiment::config::{
    AllocationSpec, BinningSpec, ExperimentConfig, HorizonMode, InitialSpec, ObservableSpec, OutputSpec,
    PotentialSpec,
};
use crate::kernels::KernelSpec;

/// A named bundle of configs, one per scheme.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Rough single-core wall time at desk scale.
    pub budget: &'static str,
    pub configs: Vec<ExperimentConfig>,
}

/// Horizon grid for the three-state sweeps.
pub const THREE_STATE_T_GRID: [usize; 5] = [125, 250, 500, 1000, 2000];
/// Horizon grid for the torus sweeps.
pub const TORUS_T_GRID: [usize; 4] = [50, 100, 200, 400];

fn three_state(name: &str, delta: f64, scheme: Scheme) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        kernel: KernelSpec::ThreeState { delta },
        scheme,
        binning: matches!(scheme, Scheme::WeMultinomial | Scheme::WeResidual).then_some(BinningSpec::PerState),
        allocation: AllocationSpec::Uniform,
        potential: None,
        initial: InitialSpec::PointMass { state: 0 },
        observable: ObservableSpec::Indicator { state: 2 },
        particles: vec![120],
        horizons: vec![500],
        replicates: 10_000,
        full_replicates: None,
        estimators: vec![Estimator::Theta],
        seed: 0,
        horizon_mode: HorizonMode::Nested,
        output: OutputSpec::default(),
    }
}

fn lineage(name: &str, allocation: AllocationSpec) -> ExperimentConfig {
    ExperimentConfig {
        kernel: KernelSpec::PeriodicThreeState,
        allocation,
        particles: vec![24, 48, 120],
        horizons: vec![1000],
        estimators: vec![Estimator::Theta, Estimator::ThetaTilde],
        full_replicates: Some(10_000),
        ..three_state(name, 0.0, Scheme::WeMultinomial)
    }
}

fn torus(name: &str, beta: f64, scheme: Scheme, estimator: Estimator) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        kernel: KernelSpec::TorusLangevin {
            beta,
            dt: 0.001,
            skeleton: 10,
        },
        scheme,
        binning: matches!(scheme, Scheme::WeMultinomial | Scheme::WeResidual)
            .then_some(BinningSpec::UniformTorus { count: 20 }),
        allocation: AllocationSpec::Uniform,
        potential: (scheme == Scheme::SmcGb).then_some(PotentialSpec::Gaussian {
            center: 0.5,
            stiffness: 10.0,
        }),
        initial: InitialSpec::TorusGibbs { beta: None },
        observable: ObservableSpec::Interval { lo: 0.45, hi: 0.55 },
        particles: vec![200],
        horizons: TORUS_T_GRID.to_vec(),
        replicates: 1_000,
        full_replicates: Some(if estimator == Estimator::ThetaBar { 500_000 } else { 100_000 }),
        estimators: vec![estimator],
        seed: 0,
        horizon_mode: HorizonMode::Nested,
        output: OutputSpec::default(),
    }
}

fn with_seed(mut configs: Vec<ExperimentConfig>, base: u64) -> Vec<ExperimentConfig> {
    for (i, c) in configs.iter_mut().enumerate() {
        c.seed = base + i as u64;
    }
    configs
}

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "fig_three_state",
            description: "three-state chain, δ = 1e-3, T = 500: σ_T of WE and DMC against N",
            budget: "≈ 4 min",
            configs: with_seed(
                [Scheme::WeMultinomial, Scheme::Dmc]
                    .into_iter()
                    .map(|s| ExperimentConfig {
                        particles: vec![60, 120, 240],
                        full_replicates: Some(10_000),
                        ..three_state(&format!("fig_three_state.{s}"), 1e-3, s)
                    })
                    .collect(),
                100,
            ),
        },
        Preset {
            name: "fig_three_state_T",
            description: "three-state chain, δ = 1e-3, N = 120: σ_T of WE and DMC against T",
            budget: "≈ 1 min",
            configs: with_seed(
                [Scheme::WeMultinomial, Scheme::Dmc]
                    .into_iter()
                    .map(|s| ExperimentConfig {
                        horizons: THREE_STATE_T_GRID.to_vec(),
                        replicates: 1_000,
                        full_replicates: Some(10_000),
                        ..three_state(&format!("fig_three_state_T.{s}"), 1e-3, s)
                    })
                    .collect(),
                200,
            ),
        },
        Preset {
            name: "fig_lineage_n2_1",
            description: "period-2 chain, T = 1000, N₂ = 1: θ_T against the ancestral average θ̃_T",
            budget: "≈ 2 min",
            configs: with_seed(
                vec![lineage(
                    "fig_lineage_n2_1",
                    AllocationSpec::PeriodicExample { n2: Some(1), n2_fraction: None },
                )],
                300,
            ),
        },
        Preset {
            name: "fig_lineage_half",
            description: "period-2 chain, T = 1000, N₂ = N/2: θ_T against the ancestral average θ̃_T",
            budget: "≈ 2 min",
            configs: with_seed(
                vec![lineage(
                    "fig_lineage_half",
                    AllocationSpec::PeriodicExample { n2: None, n2_fraction: Some(0.5) },
                )],
                400,
            ),
        },
        Preset {
            name: "fig_smc_3state",
            description: "three-state chain, δ = 0.25, SMC with V(u) = u + 1: σ_T grows like √T",
            budget: "≈ 3 min",
            configs: with_seed(
                vec![ExperimentConfig {
                    potential: Some(PotentialSpec::Linear),
                    initial: InitialSpec::Stationary,
                    horizons: THREE_STATE_T_GRID.to_vec(),
                    full_replicates: Some(1_000_000),
                    ..three_state("fig_smc_3state", 0.25, Scheme::SmcGb)
                }],
                500,
            ),
        },
        Preset {
            name: "fig_torus",
            description: "torus Langevin, β = 6, N = 200: θ_T of WE, SMC and DMC against T",
            budget: "≈ 2 min",
            configs: with_seed(
                [Scheme::WeMultinomial, Scheme::SmcGb, Scheme::Dmc]
                    .into_iter()
                    .map(|s| torus(&format!("fig_torus.{s}"), 6.0, s, Estimator::Theta))
                    .collect(),
                600,
            ),
        },
        Preset {
            name: "fig_torus_marginal",
            description: "torus Langevin, β = 5, N = 200: marginal θ̄_T of WE, SMC and DMC against T",
            budget: "≈ 2 min",
            configs: with_seed(
                [Scheme::WeMultinomial, Scheme::SmcGb, Scheme::Dmc]
                    .into_iter()
                    .map(|s| torus(&format!("fig_torus_marginal.{s}"), 5.0, s, Estimator::ThetaBar))
                    .collect(),
                700,
            ),
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
