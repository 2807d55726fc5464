//! Closed-form one-step variances, the Doob-decomposition audit, and analytic
//! variance predictions for the three-state and period-2 examples.
//!
//! All evaluators need a finite kernel: the horizon functions `h_t` and their
//! images `Kh_{t+1}`, `K(h_{t+1}²)` come from [`HorizonFunctions`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    apply_selection, init_ensemble, mutate, select, BinLayout, EnsembleState, Phase, Scheme,
    SelectionOutcome, SelectionRule,
};
use crate::error::{Error, Result};
use crate::estimators::{replicate_stats, TimeAverageAccumulator};
use crate::kernels::{horizon_functions, Categorical, FiniteKernel, HorizonFunctions, StateTable};
use crate::numeric::{clip_negative, CompensatedSum};
use crate::rng::ReplicateStreams;

const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub t: usize,
    pub mutation_term: f64,
    pub selection_term: f64,
    pub scheme: Scheme,
}

/// What a selection-variance evaluation needs beyond the ensemble.
#[derive(Debug, Clone, Copy)]
pub enum SelectionInputs<'a> {
    Dmc,
    WeMultinomial(&'a BinLayout),
    WeResidual(&'a BinLayout),
    /// Global multinomial with means `β` (SMC and optimal control).
    Global { expected_counts: &'a [f64] },
}

impl<'a> SelectionInputs<'a> {
    /// Inputs matching a realized selection step.
    pub fn from_outcome(
        scheme: Scheme,
        outcome: &'a SelectionOutcome,
        layout: Option<&'a BinLayout>,
    ) -> Result<Self> {
        match (scheme, layout) {
            (Scheme::Dmc, _) => Ok(SelectionInputs::Dmc),
            (Scheme::WeMultinomial, Some(l)) => Ok(SelectionInputs::WeMultinomial(l)),
            (Scheme::WeResidual, Some(l)) => Ok(SelectionInputs::WeResidual(l)),
            (Scheme::SmcGb | Scheme::Optimal, _) => Ok(SelectionInputs::Global {
                expected_counts: &outcome.expected_counts,
            }),
            (s, None) => Err(Error::Argument(format!("scheme {s} needs a bin layout"))),
        }
    }
}

fn check_time(hf: &HorizonFunctions, t: usize, horizon: usize) -> Result<()> {
    if horizon != hf.horizon() {
        return Err(Error::Argument(format!(
            "horizon functions built for T = {}, asked for T = {horizon}",
            hf.horizon()
        )));
    }
    if t >= horizon {
        return Err(Error::Argument(format!("time {t} is not below the horizon {horizon}")));
    }
    Ok(())
}

fn clip(value: f64, scale: f64, what: &str) -> Result<(f64, bool)> {
    clip_negative(value, CLIP_TOL * (1.0 + scale.abs())).map_err(|v| {
        Error::Invariant(format!("{what} variance evaluated to {v}, below clipping tolerance"))
    })
}

/// `(1/T²) Σ_i (ω̂_t^i)² [K(h_{t+1}²)(ξ̂_t^i) − (Kh_{t+1}(ξ̂_t^i))²]`.
pub fn mutation_variance(
    post: &EnsembleState<usize>,
    hf: &HorizonFunctions,
    t: usize,
    horizon: usize,
) -> Result<f64> {
    mutation_variance_clipped(post, hf, t, horizon).map(|(v, _)| v)
}

fn mutation_variance_clipped(
    post: &EnsembleState<usize>,
    hf: &HorizonFunctions,
    t: usize,
    horizon: usize,
) -> Result<(f64, bool)> {
    check_time(hf, t, horizon)?;
    if post.phase() != Phase::AfterSelection {
        return Err(Error::Usage("mutation variance needs an after-selection ensemble".into()));
    }
    let mut clipped = false;
    let mut sum = CompensatedSum::new();
    for p in post.particles() {
        let (kh, kh_sq) = (hf.kh(t, p.state), hf.kh_sq(t, p.state));
        let (var, c) = clip(kh_sq - kh * kh, kh_sq, "mutation")?;
        clipped |= c;
        sum.add(p.weight * p.weight * var);
    }
    Ok((sum.value() / (horizon * horizon) as f64, clipped))
}

/// Conditional variance of `(1/T) Σ_j ω̂_t^j Kh_{t+1}(ξ̂_t^j)` given the
/// pre-selection ensemble, in closed form for each scheme.
pub fn selection_variance(
    pre: &EnsembleState<usize>,
    inputs: SelectionInputs<'_>,
    hf: &HorizonFunctions,
    t: usize,
    horizon: usize,
    scheme: Scheme,
) -> Result<f64> {
    selection_variance_clipped(pre, inputs, hf, t, horizon, scheme).map(|(v, _)| v)
}

fn selection_variance_clipped(
    pre: &EnsembleState<usize>,
    inputs: SelectionInputs<'_>,
    hf: &HorizonFunctions,
    t: usize,
    horizon: usize,
    scheme: Scheme,
) -> Result<(f64, bool)> {
    check_time(hf, t, horizon)?;
    if pre.phase() != Phase::BeforeSelection {
        return Err(Error::Usage("selection variance needs a before-selection ensemble".into()));
    }
    let particles = pre.particles();
    let kh: Vec<f64> = particles.iter().map(|p| hf.kh(t, p.state)).collect();
    let t2 = (horizon * horizon) as f64;
    match (scheme, inputs) {
        (Scheme::Dmc, SelectionInputs::Dmc) => Ok((0.0, false)),
        (Scheme::WeMultinomial, SelectionInputs::WeMultinomial(layout)) => {
            let mut total = CompensatedSum::new();
            for u in layout.occupied() {
                let members = layout.members(u);
                let w_u = layout.bin_weights()[u];
                let n_u = layout.allocation()[u] as f64;
                let probs = members.iter().map(|&i| particles[i].weight / w_u);
                total.add(w_u * w_u / n_u * weighted_variance(probs, members.iter().map(|&i| kh[i])));
            }
            Ok((total.value() / t2, false))
        }
        (Scheme::WeResidual, SelectionInputs::WeResidual(layout)) => {
            let mut total = CompensatedSum::new();
            for u in layout.occupied() {
                let members = layout.members(u);
                let w_u = layout.bin_weights()[u];
                let n_u = layout.allocation()[u] as f64;
                let delta: Vec<f64> = members
                    .iter()
                    .map(|&i| {
                        let beta = n_u * particles[i].weight / w_u;
                        beta - beta.floor()
                    })
                    .collect();
                let delta_u = delta.iter().copied().collect::<CompensatedSum>().value().round();
                if delta_u == 0.0 {
                    continue;
                }
                let probs = delta.iter().map(|d| d / delta_u);
                let scale = w_u / n_u;
                total.add(scale * scale * delta_u * weighted_variance(probs, members.iter().map(|&i| kh[i])));
            }
            Ok((total.value() / t2, false))
        }
        (Scheme::Optimal, SelectionInputs::Global { .. }) => Ok((0.0, false)),
        (Scheme::SmcGb, SelectionInputs::Global { expected_counts }) => {
            if expected_counts.len() != particles.len() {
                return Err(Error::Argument("one β per particle required".into()));
            }
            let n = particles.len() as f64;
            let mut first = CompensatedSum::new();
            let mut mean = CompensatedSum::new();
            for ((p, &beta), &k) in particles.iter().zip(expected_counts).zip(&kh) {
                first.add(p.weight * p.weight / beta * k * k);
                mean.add(p.weight * k);
            }
            let a = first.value();
            let m = mean.value();
            clip((a - m * m / n) / t2, a / t2, "selection")
        }
        (s, _) => Err(Error::Argument(format!("selection inputs do not match scheme {s}"))),
    }
}

/// Global-multinomial selection variance with arbitrary means `β`:
/// `(1/T²)[Σ_i (ω_i²/β_i) Kh_i² − (1/N)(Σ_i ω_i Kh_i)²]`. Used to confirm
/// that the optimal-control `β` makes it vanish.
pub fn global_selection_variance(
    pre: &EnsembleState<usize>,
    expected_counts: &[f64],
    hf: &HorizonFunctions,
    t: usize,
    horizon: usize,
) -> Result<f64> {
    selection_variance(
        pre,
        SelectionInputs::Global { expected_counts },
        hf,
        t,
        horizon,
        Scheme::SmcGb,
    )
}

fn weighted_variance(probs: impl Iterator<Item = f64> + Clone, values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mean = probs
        .clone()
        .zip(values.clone())
        .map(|(p, v)| p * v)
        .collect::<CompensatedSum>()
        .value();
    probs
        .zip(values)
        .map(|(p, v)| p * (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(values: &[f64]) -> Result<Self> {
        let s = replicate_stats(values)?;
        Ok(Estimate {
            value: s.mean,
            stderr: s.stderr,
        })
    }
}

/// Replicate-level check of `Var(θ_T) = E(D_0 − Eθ_T)² + Σ_t E[mutation_t + selection_t]`.
///
/// Each replicate contributes the paired residual
/// `Z = (θ_T − Eθ_T)² − (D_0 − Eθ_T)² − Σ_t (mutation_t + selection_t)`,
/// with `Eθ_T` computed exactly; the audit passes when the mean of `Z` is
/// within 4 of its standard errors of zero (plus a `1e-12` relative rounding
/// floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoobAudit {
    pub scheme: Scheme,
    pub particles: usize,
    pub horizon: usize,
    pub replicates: usize,
    pub expected_theta: f64,
    pub empirical_var: Estimate,
    pub initial_term: Estimate,
    pub sum_mutation: Estimate,
    pub sum_selection: Estimate,
    pub discrepancy: Estimate,
    /// Number of replicate-steps where a tiny negative variance was clipped.
    pub clipped: usize,
    pub passes: bool,
}

pub struct AuditSetup<'a> {
    pub kernel: &'a FiniteKernel,
    pub initial: &'a Categorical,
    pub observable: &'a StateTable,
    pub rule: SelectionRule<'a, usize>,
    pub particles: usize,
    pub horizon: usize,
    pub seed: u64,
}

struct ReplicateAudit {
    theta: f64,
    d0: f64,
    mutation: f64,
    selection: f64,
    clipped: usize,
}

fn audit_replicate(setup: &AuditSetup<'_>, hf: &HorizonFunctions, replicate: u64) -> Result<ReplicateAudit> {
    let streams = ReplicateStreams::new(setup.seed, replicate);
    let f = setup.observable;
    let horizon = setup.horizon;
    let scheme = setup.rule.scheme();
    let mut ens = init_ensemble(setup.initial, f, setup.particles, &streams)?;
    let d0 = ens
        .particles()
        .iter()
        .map(|p| p.weight * hf.h(0, p.state))
        .collect::<CompensatedSum>()
        .value()
        / horizon as f64;
    let mut acc = TimeAverageAccumulator::new(horizon)?;
    let mut mutation = CompensatedSum::new();
    let mut selection = CompensatedSum::new();
    let mut clipped = 0;
    for t in 0..horizon {
        acc.accumulate(&ens, f)?;
        if t + 1 == horizon {
            break;
        }
        let (outcome, layout) = select(&ens, &setup.rule, &streams)?;
        let inputs = SelectionInputs::from_outcome(scheme, &outcome, layout.as_ref())?;
        let (sel, c1) = selection_variance_clipped(&ens, inputs, hf, t, horizon, scheme)?;
        let post = apply_selection(&ens, &outcome)?;
        let (mv, c2) = mutation_variance_clipped(&post, hf, t, horizon)?;
        clipped += usize::from(c1) + usize::from(c2);
        selection.add(sel);
        mutation.add(mv);
        ens = mutate(&post, setup.kernel, f, &streams)?;
    }
    Ok(ReplicateAudit {
        theta: acc.value()?,
        d0,
        mutation: mutation.value(),
        selection: selection.value(),
        clipped,
    })
}

/// Runs `replicates` independent replicates in parallel (results merged in
/// replicate order) and assembles the [`DoobAudit`].
pub fn doob_audit(setup: &AuditSetup<'_>, replicates: usize) -> Result<DoobAudit> {
    if replicates < 2 {
        return Err(Error::Argument("the audit needs at least 2 replicates".into()));
    }
    let kernel = setup.kernel;
    if setup.initial.probabilities().len() != kernel.n() {
        return Err(Error::Argument("initial distribution and kernel differ in size".into()));
    }
    let hf = horizon_functions(kernel, setup.observable.values(), setup.horizon)?;
    let expected_theta = setup
        .initial
        .probabilities()
        .iter()
        .zip(hf.h_row(0))
        .map(|(p, h)| p * h)
        .collect::<CompensatedSum>()
        .value()
        / setup.horizon as f64;
    let runs: Vec<ReplicateAudit> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| audit_replicate(setup, &hf, r))
        .collect::<Result<_>>()?;
    let sq = |x: f64| (x - expected_theta) * (x - expected_theta);
    let empirical: Vec<f64> = runs.iter().map(|r| sq(r.theta)).collect();
    let initial: Vec<f64> = runs.iter().map(|r| sq(r.d0)).collect();
    let mutation: Vec<f64> = runs.iter().map(|r| r.mutation).collect();
    let selection: Vec<f64> = runs.iter().map(|r| r.selection).collect();
    let residual: Vec<f64> = runs
        .iter()
        .map(|r| sq(r.theta) - sq(r.d0) - r.mutation - r.selection)
        .collect();
    let discrepancy = Estimate::from_samples(&residual)?;
    let audit = DoobAudit {
        scheme: setup.rule.scheme(),
        particles: setup.particles,
        horizon: setup.horizon,
        replicates,
        expected_theta,
        empirical_var: Estimate::from_samples(&empirical)?,
        initial_term: Estimate::from_samples(&initial)?,
        sum_mutation: Estimate::from_samples(&mutation)?,
        sum_selection: Estimate::from_samples(&selection)?,
        discrepancy,
        clipped: runs.iter().map(|r| r.clipped).sum(),
        passes: false,
    };
    let finite = [
        audit.empirical_var,
        audit.initial_term,
        audit.sum_mutation,
        audit.sum_selection,
        audit.discrepancy,
    ]
    .iter()
    .all(|e| e.value.is_finite() && e.stderr.is_finite());
    if !finite {
        return Err(Error::Invariant("audit produced a non-finite component".into()));
    }
    // rounding floor for runs where every replicate is (nearly) deterministic
    let floor = 1e-12 * (expected_theta * expected_theta + audit.empirical_var.value);
    let passes = discrepancy.value.abs() <= 4.0 * discrepancy.stderr + floor;
    Ok(DoobAudit { passes, ..audit })
}

/// Approximate variances of `θ_T` for the three-state chain with small `δ`
/// (meaningful for `δ ≤ 0.01`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeStatePrediction {
    pub we_lower: f64,
    pub we_upper: f64,
    pub dmc: f64,
}

pub fn predict_three_state(delta: f64, n: usize, horizon: usize) -> ThreeStatePrediction {
    let nt = (n * horizon) as f64;
    let nf = n as f64;
    let d2 = delta * delta;
    let d3 = d2 * delta;
    ThreeStatePrediction {
        we_lower: (2.0 * d3 + (d2 - 4.0 * d3) / nf) / nt,
        we_upper: 3.0 * (2.0 * d3 + 3.0 * (d2 - 4.0 * d3) / nf) / nt,
        dmc: (d2 - d3) / nt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodicVariant {
    /// `Var θ_T ≈ 1/(8NT)`.
    #[serde(rename = "theta")]
    Theta,
    /// `Var θ̃_T ≈ 1/(8T)` when bin 2 always gets one child.
    #[serde(rename = "tilde_N2_1")]
    TildeN2One,
    /// `Var θ̃_T ≈ (T − ℓ_N)/(8T²)` with an even split.
    #[serde(rename = "tilde_half")]
    TildeHalf,
}

/// Coupon-collector estimate of the number of steps until all lineages share
/// one root: `ℓ_N = (N ln N + 0.58 N)/(0.4 √N)`.
pub fn coalescence_length(n: usize) -> f64 {
    let nf = n as f64;
    (nf * nf.ln() + 0.58 * nf) / (0.4 * nf.sqrt())
}

pub fn predict_periodic(n: usize, horizon: usize, variant: PeriodicVariant) -> f64 {
    let t = horizon as f64;
    match variant {
        PeriodicVariant::Theta => 1.0 / (8.0 * n as f64 * t),
        PeriodicVariant::TildeN2One => 1.0 / (8.0 * t),
        PeriodicVariant::TildeHalf => (t - coalescence_length(n)) / (8.0 * t * t),
    }
}
