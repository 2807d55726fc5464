//! Turns an [`ExperimentConfig`] into a [`ResultsTable`].

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::ensemble::{
    init_ensemble, step, AllocationPolicy, Binning, ConstantPotential, CustomTable, EnsembleState,
    GaussianPotential, PerState, Scheme, SelectionRule, SmcPotential, StatePotential, UniformTorus,
};
use crate::error::{Error, Result};
use crate::estimators::{
    ancestral_time_average, marginal_average, replicate_stats, Estimator, TimeAverageAccumulator,
};
use crate::experiment::config::{
    BinningSpec, ExperimentConfig, HorizonMode, InitialSpec, ObservableSpec, PotentialSpec, SweepVariable,
};
use crate::experiment::results::{ResultRow, ResultsTable, TableMetadata};
use crate::kernels::{
    horizon_functions, stationary_distribution, BuiltKernel, Categorical, Constant, FiniteKernel,
    InitialDistribution, IntervalIndicator, MarkovKernel, Observable, StateTable, TorusGibbs,
    TorusLangevinKernel, PointMass,
};
use crate::rng::RngStream;
use crate::variance_lab::{doob_audit, AuditSetup, DoobAudit};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Use `full_replicates` instead of the desk-scale `replicates`.
    pub full: bool,
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Seed of the `index`-th independent run of an experiment.
fn point_seed(seed: u64, index: usize) -> u64 {
    RngStream::from_key(&[seed, 0x706f_696e_74, index as u64]).next_u64()
}

/// One grid point: a particle count and the horizons reported from one run.
struct GridPoint {
    particles: usize,
    horizons: Vec<usize>,
    seed: u64,
}

fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let nested = cfg.horizon_mode == HorizonMode::Nested && cfg.scheme != Scheme::Optimal;
    let mut points = Vec::new();
    for &n in &cfg.particles {
        if nested {
            let mut horizons = cfg.horizons.clone();
            horizons.sort_unstable();
            points.push(GridPoint { particles: n, horizons, seed: 0 });
        } else {
            for &t in &cfg.horizons {
                points.push(GridPoint { particles: n, horizons: vec![t], seed: 0 });
            }
        }
    }
    for (i, p) in points.iter_mut().enumerate() {
        p.seed = point_seed(cfg.seed, i);
    }
    points
}

/// Per replicate and reported horizon: `[θ_T, θ̄_T, θ̃_T]`.
type Samples = Vec<Vec<[f64; 3]>>;

struct Model<'a, K: MarkovKernel> {
    kernel: &'a K,
    initial: &'a dyn InitialDistribution<K::State>,
    observable: &'a dyn Observable<K::State>,
    lineage: bool,
}

fn run_replicate<K: MarkovKernel>(
    model: &Model<'_, K>,
    rule: &SelectionRule<'_, K::State>,
    n: usize,
    horizons: &[usize],
    streams: &crate::rng::ReplicateStreams,
) -> Result<Vec<[f64; 3]>> {
    let f = model.observable;
    let t_max = *horizons.last().expect("non-empty horizon list");
    let mut ens: EnsembleState<K::State> = init_ensemble(model.initial, f, n, streams)?;
    if !model.lineage {
        ens = ens.without_lineage();
    }
    let conserves = rule.scheme().conserves_weight();
    let mut acc = TimeAverageAccumulator::new(t_max)?;
    let mut out = Vec::with_capacity(horizons.len());
    let mut next = 0;
    for t in 0..t_max {
        acc.accumulate(&ens, f)?;
        if conserves {
            let drift = (ens.total_weight() - 1.0).abs();
            if drift > 1e-12 * (1 + t) as f64 {
                return Err(Error::Invariant(format!("total weight drifted by {drift:e} at t = {t}")));
            }
        }
        if t + 1 == horizons[next] {
            let tilde = if model.lineage {
                ancestral_time_average(&ens, t + 1)?
            } else {
                f64::NAN
            };
            out.push([
                acc.average_so_far().expect("at least one step"),
                marginal_average(&ens, f),
                tilde,
            ]);
            next += 1;
        }
        if t + 1 < t_max {
            ens = step(&ens, rule, model.kernel, f, streams)?;
        }
    }
    Ok(out)
}

fn run_point<K: MarkovKernel>(
    model: &Model<'_, K>,
    rule: &SelectionRule<'_, K::State>,
    point: &GridPoint,
    replicates: usize,
) -> Result<Samples>
where
    K::State: Send,
{
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let streams = crate::rng::ReplicateStreams::new(point.seed, r);
            run_replicate(model, rule, point.particles, &point.horizons, &streams)
        })
        .collect()
}

fn config_err(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

struct FiniteParts {
    observable: StateTable,
    initial: Categorical,
    binning: Option<Box<dyn Binning<usize>>>,
    potential: Option<Box<dyn SmcPotential<usize>>>,
}

fn finite_parts(cfg: &ExperimentConfig, k: &FiniteKernel) -> Result<FiniteParts> {
    let n = k.n();
    let observable = match &cfg.observable {
        ObservableSpec::Indicator { state } => StateTable::indicator(n, *state),
        ObservableSpec::Table { values } if values.len() == n => StateTable::new(values.clone()),
        ObservableSpec::Table { values } => Err(Error::Argument(format!(
            "{} values for {n} states",
            values.len()
        ))),
        ObservableSpec::Constant { value } => StateTable::new(vec![*value; n]),
        ObservableSpec::Interval { .. } => Err(Error::Argument("interval observable needs the torus kernel".into())),
    }
    .map_err(config_err("observable"))?;
    let initial = match &cfg.initial {
        InitialSpec::PointMass { state } if *state < n => {
            let mut p = vec![0.0; n];
            p[*state] = 1.0;
            Categorical::new(p)
        }
        InitialSpec::PointMass { state } => Err(Error::Argument(format!("state {state} outside 0..{n}"))),
        InitialSpec::Categorical { probabilities } if probabilities.len() == n => {
            Categorical::new(probabilities.clone())
        }
        InitialSpec::Categorical { .. } => Err(Error::Argument(format!("expected {n} probabilities"))),
        InitialSpec::Stationary => stationary_distribution(k, 1e-13).and_then(|s| Categorical::new(s.probabilities)),
        InitialSpec::TorusGibbs { .. } | InitialSpec::TorusPoint { .. } => {
            Err(Error::Argument("torus initial law on a finite chain".into()))
        }
    }
    .map_err(config_err("initial"))?;
    let binning: Option<Box<dyn Binning<usize>>> = match &cfg.binning {
        None => None,
        Some(BinningSpec::PerState) => Some(Box::new(PerState { n })),
        Some(BinningSpec::CustomTable { table }) => {
            if table.len() != n {
                return Err(Error::config("binning.table", format!("expected {n} entries")));
            }
            Some(Box::new(CustomTable::new(table.clone()).map_err(config_err("binning"))?))
        }
        Some(BinningSpec::UniformTorus { .. }) => {
            return Err(Error::config("binning", "uniform_torus needs the torus kernel"))
        }
    };
    let potential: Option<Box<dyn SmcPotential<usize>>> = match &cfg.potential {
        None => None,
        Some(PotentialSpec::Linear) => Some(Box::new(StatePotential::linear(n))),
        Some(PotentialSpec::Table { values }) if values.len() == n => {
            Some(Box::new(StatePotential::new(values.clone())))
        }
        Some(PotentialSpec::Table { .. }) => {
            return Err(Error::config("potential.values", format!("expected {n} values")))
        }
        Some(PotentialSpec::Constant { value }) => Some(Box::new(ConstantPotential(*value))),
        Some(PotentialSpec::Gaussian { .. }) => {
            return Err(Error::config("potential", "gaussian potential needs the torus kernel"))
        }
    };
    Ok(FiniteParts {
        observable,
        initial,
        binning,
        potential,
    })
}

struct TorusParts {
    observable: Box<dyn Observable<f64>>,
    initial: Box<dyn InitialDistribution<f64>>,
    binning: Option<Box<dyn Binning<f64>>>,
    potential: Option<Box<dyn SmcPotential<f64>>>,
}

fn torus_parts(cfg: &ExperimentConfig, k: &TorusLangevinKernel) -> Result<TorusParts> {
    let observable: Box<dyn Observable<f64>> = match &cfg.observable {
        ObservableSpec::Interval { lo, hi } if lo <= hi => Box::new(IntervalIndicator { lo: *lo, hi: *hi }),
        ObservableSpec::Constant { value } => Box::new(Constant(*value)),
        _ => return Err(Error::config("observable", "torus runs take `interval` or `constant`")),
    };
    let initial: Box<dyn InitialDistribution<f64>> = match &cfg.initial {
        InitialSpec::TorusGibbs { beta } => {
            Box::new(TorusGibbs::new(beta.unwrap_or(k.beta())).map_err(config_err("initial.beta"))?)
        }
        InitialSpec::TorusPoint { x } if (0.0..1.0).contains(x) => Box::new(PointMass(*x)),
        _ => return Err(Error::config("initial", "torus runs take `torus_gibbs` or `torus_point` in [0, 1)")),
    };
    let binning: Option<Box<dyn Binning<f64>>> = match &cfg.binning {
        None => None,
        Some(BinningSpec::UniformTorus { count }) => Some(Box::new(UniformTorus { count: *count })),
        Some(_) => return Err(Error::config("binning", "torus runs take `uniform_torus`")),
    };
    let potential: Option<Box<dyn SmcPotential<f64>>> = match &cfg.potential {
        None => None,
        Some(PotentialSpec::Gaussian { center, stiffness }) => Some(Box::new(GaussianPotential {
            center: *center,
            stiffness: *stiffness,
        })),
        Some(PotentialSpec::Constant { value }) => Some(Box::new(ConstantPotential(*value))),
        Some(_) => return Err(Error::config("potential", "torus runs take `gaussian` or `constant`")),
    };
    Ok(TorusParts {
        observable,
        initial,
        binning,
        potential,
    })
}

fn simple_rule<'a, S>(
    scheme: Scheme,
    binning: &'a Option<Box<dyn Binning<S>>>,
    potential: &'a Option<Box<dyn SmcPotential<S>>>,
    policy: &'a AllocationPolicy,
) -> Result<SelectionRule<'a, S>> {
    Ok(match scheme {
        Scheme::Dmc => SelectionRule::Dmc,
        Scheme::WeMultinomial | Scheme::WeResidual => {
            let binning = binning
                .as_deref()
                .ok_or_else(|| Error::config("binning", "weighted-ensemble schemes need a binning"))?;
            if scheme == Scheme::WeMultinomial {
                SelectionRule::WeMultinomial { binning, policy }
            } else {
                SelectionRule::WeResidual { binning, policy }
            }
        }
        Scheme::SmcGb => SelectionRule::SmcGb {
            potential: potential
                .as_deref()
                .ok_or_else(|| Error::config("potential", "smc_gb needs a potential"))?,
        },
        Scheme::Optimal => return Err(Error::config("scheme", "optimal selection needs a finite kernel")),
    })
}

fn run_finite(cfg: &ExperimentConfig, k: &FiniteKernel, replicates: usize) -> Result<Vec<(GridPoint, Samples)>> {
    let parts = finite_parts(cfg, k)?;
    let model = Model {
        kernel: k,
        initial: &parts.initial,
        observable: &parts.observable,
        lineage: cfg.estimators.contains(&Estimator::ThetaTilde),
    };
    let mut out = Vec::new();
    for point in grid(cfg) {
        let policy = cfg.allocation.resolve(point.particles)?;
        let samples = if cfg.scheme == Scheme::Optimal {
            let horizon = point.horizons[0];
            let hf = horizon_functions(k, parts.observable.values(), horizon)?;
            let kh = |x: usize, t: usize| hf.kh(t, x);
            let rule = SelectionRule::Optimal { kh: &kh };
            run_point(&model, &rule, &point, replicates)?
        } else {
            let rule = simple_rule(cfg.scheme, &parts.binning, &parts.potential, &policy)?;
            run_point(&model, &rule, &point, replicates)?
        };
        out.push((point, samples));
    }
    Ok(out)
}

fn run_torus(cfg: &ExperimentConfig, k: &TorusLangevinKernel, replicates: usize) -> Result<Vec<(GridPoint, Samples)>> {
    let parts = torus_parts(cfg, k)?;
    let model = Model {
        kernel: k,
        initial: parts.initial.as_ref(),
        observable: parts.observable.as_ref(),
        lineage: cfg.estimators.contains(&Estimator::ThetaTilde),
    };
    let mut out = Vec::new();
    for point in grid(cfg) {
        let policy = cfg.allocation.resolve(point.particles)?;
        let rule = simple_rule(cfg.scheme, &parts.binning, &parts.potential, &policy)?;
        let samples = run_point(&model, &rule, &point, replicates)?;
        out.push((point, samples));
    }
    Ok(out)
}

/// Runs every grid point with `M` independent replicates and summarizes
/// each requested estimator. Deterministic given the config.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultsTable> {
    cfg.validate()?;
    let replicates = cfg.replicates_for(opts.full);
    let kernel = cfg.kernel.build().map_err(config_err("kernel"))?;
    let runs = match &kernel {
        BuiltKernel::Finite(k) => run_finite(cfg, k, replicates)?,
        BuiltKernel::Torus(k) => run_torus(cfg, k, replicates)?,
    };
    let sweep = cfg.sweep_variable();
    let mut rows = Vec::new();
    for (point, samples) in &runs {
        for (h, &horizon) in point.horizons.iter().enumerate() {
            let sweep_value = match sweep {
                SweepVariable::Particles => point.particles,
                SweepVariable::Horizon => horizon,
            };
            for &estimator in &cfg.estimators {
                let idx = match estimator {
                    Estimator::Theta => 0,
                    Estimator::ThetaBar => 1,
                    Estimator::ThetaTilde => 2,
                };
                let values: Vec<f64> = samples.iter().map(|rep| rep[h][idx]).collect();
                let stats = replicate_stats(&values)?;
                rows.push(ResultRow {
                    sweep: sweep_value,
                    estimator,
                    mean: stats.mean,
                    std: stats.std(),
                    stderr: stats.stderr,
                    replicates: stats.n,
                });
            }
        }
    }
    let mut resolved = cfg.clone();
    resolved.replicates = replicates;
    let mut table = ResultsTable {
        metadata: TableMetadata {
            name: cfg.name.clone(),
            scheme: cfg.scheme,
            sweep,
            seed: cfg.seed,
            config_hash: config_hash(&resolved),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        rows,
    };
    table.sort_rows();
    Ok(table)
}

/// Doob audit of a finite-chain config with a single `N` and `T`.
pub fn audit_experiment(cfg: &ExperimentConfig, replicates: usize) -> Result<DoobAudit> {
    cfg.validate()?;
    let kernel = match cfg.kernel.build().map_err(config_err("kernel"))? {
        BuiltKernel::Finite(k) => k,
        BuiltKernel::Torus(_) => {
            return Err(Error::Unsupported("the Doob audit needs a finite-state kernel".into()))
        }
    };
    if cfg.particles.len() != 1 || cfg.horizons.len() != 1 {
        return Err(Error::config("horizons", "the audit takes a single N and a single T"));
    }
    let (n, horizon) = (cfg.particles[0], cfg.horizons[0]);
    let parts = finite_parts(cfg, &kernel)?;
    let policy = cfg.allocation.resolve(n)?;
    let hf = horizon_functions(&kernel, parts.observable.values(), horizon)?;
    let kh = |x: usize, t: usize| hf.kh(t, x);
    let rule = if cfg.scheme == Scheme::Optimal {
        SelectionRule::Optimal { kh: &kh }
    } else {
        simple_rule(cfg.scheme, &parts.binning, &parts.potential, &policy)?
    };
    let setup = AuditSetup {
        kernel: &kernel,
        initial: &parts.initial,
        observable: &parts.observable,
        rule,
        particles: n,
        horizon,
        seed: cfg.seed,
    };
    doob_audit(&setup, replicates)
}
