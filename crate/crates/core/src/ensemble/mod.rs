//! Particle-system engine: binning, allocation, selection and mutation.

mod bins;
mod selection;

use serde::{Deserialize, Serialize};

pub use bins::{allocate, AllocationPolicy, BinLayout, Binning, CustomTable, PerState, UniformTorus};
pub use selection::{
    apply_selection, select_dmc, select_optimal, select_smc_gb, select_we_multinomial,
    select_we_residual, ConstantPotential, GaussianPotential, Residuals, SelectionOutcome,
    SmcPotential, StatePotential,
};

use crate::error::{Error, Result};
use crate::kernels::{InitialDistribution, MarkovKernel, Observable};
use crate::numeric::CompensatedSum;
use crate::rng::ReplicateStreams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle<S> {
    pub state: S,
    pub weight: f64,
    /// `Σ_{s≤t} f` along the particle's ancestral line.
    pub lineage_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    BeforeSelection,
    AfterSelection,
}

/// Particles `(ξ_t^i, ω_t^i)` at time `t`, before or after selection.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState<S> {
    particles: Vec<Particle<S>>,
    t: usize,
    phase: Phase,
    track_lineage: bool,
}

impl<S> EnsembleState<S> {
    pub fn new(particles: Vec<Particle<S>>, t: usize, phase: Phase) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Argument("ensemble needs at least one particle".into()));
        }
        if let Some(p) = particles.iter().find(|p| !(p.weight > 0.0 && p.weight.is_finite())) {
            return Err(Error::Invariant(format!("particle weight {} is not positive", p.weight)));
        }
        Ok(EnsembleState {
            particles,
            t,
            phase,
            track_lineage: true,
        })
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn into_particles(self) -> Vec<Particle<S>> {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn tracks_lineage(&self) -> bool {
        self.track_lineage
    }

    /// Stops maintaining lineage sums; `ancestral_time_average` then refuses
    /// this ensemble.
    pub fn without_lineage(mut self) -> Self {
        self.track_lineage = false;
        for p in &mut self.particles {
            p.lineage_sum = 0.0;
        }
        self
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).collect::<CompensatedSum>().value()
    }

    pub(crate) fn with_particles(&self, particles: Vec<Particle<S>>, phase: Phase) -> Self {
        EnsembleState {
            particles,
            t: self.t,
            phase,
            track_lineage: self.track_lineage,
        }
    }
}

/// `N` iid draws from `ν`, each with weight `1/N`. The lineage sum starts at
/// `f(ξ_0)`.
pub fn init_ensemble<S: Copy>(
    nu: &dyn InitialDistribution<S>,
    f: &dyn Observable<S>,
    n: usize,
    streams: &ReplicateStreams,
) -> Result<EnsembleState<S>> {
    if n == 0 {
        return Err(Error::Argument("ensemble size N must be at least 1".into()));
    }
    let weight = 1.0 / n as f64;
    let particles = (0..n)
        .map(|i| {
            let state = nu.sample(&mut streams.init(i));
            Particle {
                state,
                weight,
                lineage_sum: f.eval(state),
            }
        })
        .collect();
    EnsembleState::new(particles, 0, Phase::BeforeSelection)
}

/// Moves every particle by one independent kernel step, keyed by
/// `(replicate, t, particle)`. Weights are untouched.
pub fn mutate<K>(
    ens: &EnsembleState<K::State>,
    kernel: &K,
    f: &dyn Observable<K::State>,
    streams: &ReplicateStreams,
) -> Result<EnsembleState<K::State>>
where
    K: MarkovKernel + ?Sized,
{
    if ens.phase != Phase::AfterSelection {
        return Err(Error::Usage("mutation requires an after-selection ensemble".into()));
    }
    let t = ens.t;
    let lanes = streams.mutation_lanes(t);
    let mut particles = Vec::with_capacity(ens.len());
    for (i, p) in ens.particles.iter().enumerate() {
        let state = kernel.step(p.state, &mut lanes.lane(i))?;
        let lineage_sum = if ens.track_lineage {
            p.lineage_sum + f.eval(state)
        } else {
            0.0
        };
        particles.push(Particle {
            state,
            weight: p.weight,
            lineage_sum,
        });
    }
    Ok(EnsembleState {
        particles,
        t: t + 1,
        phase: Phase::BeforeSelection,
        track_lineage: ens.track_lineage,
    })
}

/// Scheme selector as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    WeMultinomial,
    WeResidual,
    SmcGb,
    Optimal,
    Dmc,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::WeMultinomial,
        Scheme::WeResidual,
        Scheme::SmcGb,
        Scheme::Optimal,
        Scheme::Dmc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::WeMultinomial => "we_multinomial",
            Scheme::WeResidual => "we_residual",
            Scheme::SmcGb => "smc_gb",
            Scheme::Optimal => "optimal",
            Scheme::Dmc => "dmc",
        }
    }

    /// Whether the scheme preserves total weight exactly in expectation and
    /// pathwise.
    pub fn conserves_weight(self) -> bool {
        matches!(self, Scheme::WeMultinomial | Scheme::WeResidual | Scheme::Dmc)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown scheme {s:?}")))
    }
}

/// `Kh_{t+1}(x)` as a function of `(x, t)`.
pub type KhFn<'a, S> = dyn Fn(S, usize) -> f64 + Sync + 'a;

/// A scheme together with the inputs it needs.
pub enum SelectionRule<'a, S> {
    Dmc,
    WeMultinomial {
        binning: &'a dyn Binning<S>,
        policy: &'a AllocationPolicy,
    },
    WeResidual {
        binning: &'a dyn Binning<S>,
        policy: &'a AllocationPolicy,
    },
    SmcGb {
        potential: &'a dyn SmcPotential<S>,
    },
    Optimal {
        kh: &'a KhFn<'a, S>,
    },
}

impl<S> SelectionRule<'_, S> {
    pub fn scheme(&self) -> Scheme {
        match self {
            SelectionRule::Dmc => Scheme::Dmc,
            SelectionRule::WeMultinomial { .. } => Scheme::WeMultinomial,
            SelectionRule::WeResidual { .. } => Scheme::WeResidual,
            SelectionRule::SmcGb { .. } => Scheme::SmcGb,
            SelectionRule::Optimal { .. } => Scheme::Optimal,
        }
    }
}

/// Runs the selection step at the ensemble's current time. Returns the
/// outcome and, for WE schemes, the bin layout it used.
pub fn select<S: Copy + std::fmt::Debug>(
    ens: &EnsembleState<S>,
    rule: &SelectionRule<'_, S>,
    streams: &ReplicateStreams,
) -> Result<(SelectionOutcome, Option<BinLayout>)> {
    let mut rng = streams.select(ens.time());
    match rule {
        SelectionRule::Dmc => Ok((select_dmc(ens)?, None)),
        SelectionRule::WeMultinomial { binning, policy } => {
            let layout = BinLayout::assign(ens, *binning, policy)?;
            Ok((select_we_multinomial(ens, &layout, &mut rng)?, Some(layout)))
        }
        SelectionRule::WeResidual { binning, policy } => {
            let layout = BinLayout::assign(ens, *binning, policy)?;
            Ok((select_we_residual(ens, &layout, &mut rng)?, Some(layout)))
        }
        SelectionRule::SmcGb { potential } => Ok((select_smc_gb(ens, *potential, &mut rng)?, None)),
        SelectionRule::Optimal { kh } => {
            let t = ens.time();
            let values: Vec<f64> = ens.particles().iter().map(|p| kh(p.state, t)).collect();
            Ok((select_optimal(ens, &values, &mut rng)?, None))
        }
    }
}

/// One selection followed by one mutation.
pub fn step<K>(
    ens: &EnsembleState<K::State>,
    rule: &SelectionRule<'_, K::State>,
    kernel: &K,
    f: &dyn Observable<K::State>,
    streams: &ReplicateStreams,
) -> Result<EnsembleState<K::State>>
where
    K: MarkovKernel + ?Sized,
{
    let (outcome, _) = select(ens, rule, streams)?;
    let selected = apply_selection(ens, &outcome)?;
    mutate(&selected, kernel, f, streams)
}
