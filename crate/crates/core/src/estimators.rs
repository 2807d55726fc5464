//! Time-average estimators and replicate statistics.

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleState, Phase};
use crate::error::{Error, Result};
use crate::kernels::Observable;
use crate::numeric::CompensatedSum;

/// Estimator selector as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Running ensemble time average `θ_T`.
    Theta,
    /// Final-time marginal `θ̄_T`.
    ThetaBar,
    /// Average along ancestral lines `θ̃_T`.
    ThetaTilde,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Theta, Estimator::ThetaBar, Estimator::ThetaTilde];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Theta => "theta",
            Estimator::ThetaBar => "theta_bar",
            Estimator::ThetaTilde => "theta_tilde",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown estimator {s:?}")))
    }
}

/// `Σ_i ω^i f(ξ^i)`, summed in particle order.
pub fn ensemble_average<S: Copy>(ens: &EnsembleState<S>, f: &dyn Observable<S>) -> f64 {
    ens.particles()
        .iter()
        .map(|p| p.weight * f.eval(p.state))
        .collect::<CompensatedSum>()
        .value()
}

/// Accumulates `θ_T = (1/T) Σ_{t=0}^{T-1} Σ_i ω_t^i f(ξ_t^i)` over
/// pre-selection ensembles.
#[derive(Debug, Clone)]
pub struct TimeAverageAccumulator {
    running_sum: CompensatedSum,
    steps_seen: usize,
    horizon: usize,
}

impl TimeAverageAccumulator {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Argument("horizon T must be at least 1".into()));
        }
        Ok(TimeAverageAccumulator {
            running_sum: CompensatedSum::new(),
            steps_seen: 0,
            horizon,
        })
    }

    pub fn accumulate<S: Copy>(&mut self, ens: &EnsembleState<S>, f: &dyn Observable<S>) -> Result<()> {
        if ens.phase() != Phase::BeforeSelection {
            return Err(Error::Usage("θ_T accumulates before-selection ensembles".into()));
        }
        if self.steps_seen == self.horizon {
            return Err(Error::Usage(format!(
                "accumulator already holds {} steps",
                self.horizon
            )));
        }
        self.running_sum.add(ensemble_average(ens, f));
        self.steps_seen += 1;
        Ok(())
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn running_sum(&self) -> f64 {
        self.running_sum.value()
    }

    /// `θ_T`, available once all `T` steps have been accumulated.
    pub fn value(&self) -> Result<f64> {
        if self.steps_seen != self.horizon {
            return Err(Error::Usage(format!(
                "θ_T needs {} steps, saw {}",
                self.horizon, self.steps_seen
            )));
        }
        Ok(self.running_sum.value() / self.horizon as f64)
    }

    /// `θ_s` for `s = steps_seen`. Lets one run report several horizons.
    pub fn average_so_far(&self) -> Option<f64> {
        (self.steps_seen > 0).then(|| self.running_sum.value() / self.steps_seen as f64)
    }
}

/// `θ̄_T = Σ_i ω_{T-1}^i f(ξ_{T-1}^i)` for the ensemble at time `T-1`.
pub fn marginal_average<S: Copy>(ens: &EnsembleState<S>, f: &dyn Observable<S>) -> f64 {
    ensemble_average(ens, f)
}

/// `θ̃_T = (1/T) Σ_i ω_{T-1}^i · (Σ_{s<T} f along the ancestral line of i)`.
pub fn ancestral_time_average<S: Copy>(ens: &EnsembleState<S>, horizon: usize) -> Result<f64> {
    if !ens.tracks_lineage() {
        return Err(Error::Usage("lineage tracking is disabled for this ensemble".into()));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon T must be at least 1".into()));
    }
    let sum = ens
        .particles()
        .iter()
        .map(|p| p.weight * p.lineage_sum)
        .collect::<CompensatedSum>()
        .value();
    Ok(sum / horizon as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `sqrt(variance / n)`.
    pub stderr: f64,
}

impl ReplicateStats {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn replicate_stats(values: &[f64]) -> Result<ReplicateStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 replicates, got {n}")));
    }
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    let variance = ss / (n - 1) as f64;
    Ok(ReplicateStats {
        n,
        mean,
        variance,
        stderr: (variance / n as f64).sqrt(),
    })
}
