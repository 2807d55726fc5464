//! Markov kernels, observables and initial distributions.
//!
//! A kernel is only ever *sampled* by the particle engine. Finite kernels
//! additionally expose their transition matrix, which the variance
//! evaluators use for exact horizon functions.

mod finite;
mod torus;

pub use finite::{
    horizon_functions, mixing_diagnostics, stationary_distribution, FiniteKernel,
    HorizonFunctions, MixingDiagnostics, StationaryDistribution, StationaryMethod,
    STATIONARY_ITERATION_CAP, STATIONARY_TOL,
};
pub use torus::{TorusGibbs, TorusLangevinKernel};

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One-step transition law of the underlying chain.
pub trait MarkovKernel: Send + Sync {
    type State: Copy + Send + Sync + Debug + 'static;

    fn check_state(&self, x: Self::State) -> Result<()>;

    /// Draw from `K(x, ·)` without validating `x`.
    fn step_unchecked(&self, x: Self::State, rng: &mut RngStream) -> Self::State;

    fn step(&self, x: Self::State, rng: &mut RngStream) -> Result<Self::State> {
        self.check_state(x)?;
        Ok(self.step_unchecked(x, rng))
    }
}

/// One draw from `K(x, ·)`; a pure function of `x` and the stream position.
pub fn kernel_step<K: MarkovKernel + ?Sized>(
    kernel: &K,
    x: K::State,
    rng: &mut RngStream,
) -> Result<K::State> {
    kernel.step(x, rng)
}

/// A bounded observable `f` together with its sup bound `M`.
pub trait Observable<S>: Send + Sync {
    fn eval(&self, x: S) -> f64;
    fn sup_norm(&self) -> f64;
}

/// Observable on `{0, .., n-1}` given by a table of values.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    values: Vec<f64>,
    sup: f64,
}

impl StateTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(
                "observable table must be non-empty and finite".into(),
            ));
        }
        let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(StateTable { values, sup })
    }

    /// `1{x = state}` on `n` states.
    pub fn indicator(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::Argument(format!(
                "indicator state {state} out of range for {n} states"
            )));
        }
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Observable<usize> for StateTable {
    #[inline]
    fn eval(&self, x: usize) -> f64 {
        self.values[x]
    }

    fn sup_norm(&self) -> f64 {
        self.sup
    }
}

/// `1{lo ≤ x ≤ hi}` on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalIndicator {
    pub lo: f64,
    pub hi: f64,
}

impl Observable<f64> for IntervalIndicator {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        if self.lo <= x && x <= self.hi {
            1.0
        } else {
            0.0
        }
    }

    fn sup_norm(&self) -> f64 {
        1.0
    }
}

/// `f ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl<S> Observable<S> for Constant {
    fn eval(&self, _x: S) -> f64 {
        self.0
    }

    fn sup_norm(&self) -> f64 {
        self.0.abs()
    }
}

/// Sampler for the initial law `ν`.
pub trait InitialDistribution<S>: Send + Sync {
    fn sample(&self, rng: &mut RngStream) -> S;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass<S>(pub S);

impl<S: Copy + Send + Sync> InitialDistribution<S> for PointMass<S> {
    fn sample(&self, _rng: &mut RngStream) -> S {
        self.0
    }
}

/// A law on `{0, .., n-1}` sampled by CDF inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl Categorical {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty()
            || probabilities.iter().any(|p| !p.is_finite() || *p < 0.0)
        {
            return Err(Error::Argument(
                "categorical probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "categorical probabilities sum to {total}, expected 1"
            )));
        }
        let cdf = cumulative_to_one(&probabilities);
        Ok(Categorical { probabilities, cdf })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

impl InitialDistribution<usize> for Categorical {
    fn sample(&self, rng: &mut RngStream) -> usize {
        invert_cdf(&self.cdf, rng.uniform())
    }
}

/// Cumulative sums with the last positive entry (and everything after it)
/// pinned to exactly 1, so that inversion of any `u ∈ [0,1)` lands on a
/// positive-probability index.
pub(crate) fn cumulative_to_one(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = p.iter().rposition(|&x| x > 0.0) {
        for c in &mut cdf[last..] {
            *c = 1.0;
        }
    }
    cdf
}

/// Smallest index `j` with `u < cdf[j]`.
#[inline]
pub(crate) fn invert_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Kernel descriptions accepted in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Finite {
        matrix: Vec<Vec<f64>>,
    },
    ThreeState {
        delta: f64,
    },
    PeriodicThreeState,
    TorusLangevin {
        beta: f64,
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_skeleton")]
        skeleton: usize,
    },
}

fn default_dt() -> f64 {
    0.001
}

fn default_skeleton() -> usize {
    10
}

/// A kernel built from a [`KernelSpec`].
#[derive(Debug, Clone)]
pub enum BuiltKernel {
    Finite(FiniteKernel),
    Torus(TorusLangevinKernel),
}

impl KernelSpec {
    pub fn build(&self) -> Result<BuiltKernel> {
        Ok(match self {
            KernelSpec::Finite { matrix } => BuiltKernel::Finite(FiniteKernel::new(matrix.clone())?),
            KernelSpec::ThreeState { delta } => BuiltKernel::Finite(FiniteKernel::three_state(*delta)?),
            KernelSpec::PeriodicThreeState => BuiltKernel::Finite(FiniteKernel::periodic_three_state()),
            KernelSpec::TorusLangevin { beta, dt, skeleton } => {
                BuiltKernel::Torus(TorusLangevinKernel::new(*dt, *beta, *skeleton)?)
            }
        })
    }
}
