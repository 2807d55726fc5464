//! The selection step: WE multinomial and residual resampling, SMC with
//! Gibbs–Boltzmann potential, optimal-control selection and the DMC identity.

use crate::ensemble::bins::BinLayout;
use crate::ensemble::{EnsembleState, Particle, Phase};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rng::RngStream;

/// Result of one selection step. Children are ordered by parent index.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// `C_t^i`, number of children of parent `i`.
    pub child_counts: Vec<usize>,
    /// Parent index of each child.
    pub parent_of: Vec<usize>,
    /// `ω̂_t^j` of each child.
    pub child_weights: Vec<f64>,
    /// `β_t^i = E[C_t^i]`.
    pub expected_counts: Vec<f64>,
    /// Present only for residual resampling.
    pub residuals: Option<Residuals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// `δ_t^i = β_t^i − ⌊β_t^i⌋`.
    pub per_particle: Vec<f64>,
    /// `δ_t(u)`, the number of residual trials in each bin.
    pub per_bin: Vec<usize>,
}

/// Positive potential `V_t` used by Gibbs–Boltzmann selection.
pub trait SmcPotential<S>: Send + Sync {
    fn value(&self, x: S, t: usize) -> f64;
}

/// `V(u) = values[u]` on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePotential {
    values: Vec<f64>,
}

impl StatePotential {
    pub fn new(values: Vec<f64>) -> Self {
        StatePotential { values }
    }

    /// `V(u) = u + 1` on 0-based states.
    pub fn linear(n: usize) -> Self {
        StatePotential {
            values: (1..=n).map(|u| u as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SmcPotential<usize> for StatePotential {
    fn value(&self, x: usize, _t: usize) -> f64 {
        self.values.get(x).copied().unwrap_or(f64::NAN)
    }
}

/// `V(x) = exp(−stiffness·(x − center)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPotential {
    pub center: f64,
    pub stiffness: f64,
}

impl SmcPotential<f64> for GaussianPotential {
    fn value(&self, x: f64, _t: usize) -> f64 {
        let d = x - self.center;
        (-self.stiffness * d * d).exp()
    }
}

/// `V ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential(pub f64);

impl<S> SmcPotential<S> for ConstantPotential {
    fn value(&self, _x: S, _t: usize) -> f64 {
        self.0
    }
}

/// Multinomial draws by CDF inversion over a fixed set of candidates. A
/// guide table gives each draw an O(1) expected starting point; the result is
/// still the first index whose cumulative weight exceeds the uniform.
struct Categorical {
    cumulative: Vec<f64>,
    guide: Vec<usize>,
    scale: f64,
    total: f64,
    last_positive: usize,
}

impl Categorical {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative: Vec<f64> = weights
            .map(|w| {
                acc.add(w);
                acc.value()
            })
            .collect();
        let m = cumulative.len();
        let total = *cumulative.last().expect("non-empty categorical");
        let last_positive = cumulative.partition_point(|&c| c < total);
        let scale = m as f64 / total;
        let mut guide = Vec::with_capacity(m);
        let mut j = 0;
        for k in 0..m {
            let threshold = k as f64 / scale;
            while j < last_positive && cumulative[j] <= threshold {
                j += 1;
            }
            guide.push(j);
        }
        Categorical {
            cumulative,
            guide,
            scale,
            total,
            last_positive,
        }
    }

    #[inline]
    fn draw(&self, rng: &mut RngStream) -> usize {
        let x = rng.uniform() * self.total;
        let k = ((x * self.scale) as usize).min(self.guide.len() - 1);
        let mut j = self.guide[k];
        // the guide is exact up to rounding of the bucket edges
        while j > 0 && self.cumulative[j - 1] > x {
            j -= 1;
        }
        while j < self.last_positive && self.cumulative[j] <= x {
            j += 1;
        }
        j
    }
}

fn check_before_selection<S>(ens: &EnsembleState<S>) -> Result<()> {
    if ens.phase() != Phase::BeforeSelection {
        return Err(Error::Usage("selection requires a before-selection ensemble".into()));
    }
    Ok(())
}

fn check_layout<S>(ens: &EnsembleState<S>, layout: &BinLayout) -> Result<()> {
    let n = ens.len();
    let mut seen = 0;
    for u in 0..layout.bin_count() {
        let members = layout.members(u);
        seen += members.len();
        if !members.is_empty() && layout.allocation()[u] == 0 {
            return Err(Error::Invariant(format!("occupied bin {u} has allocation 0")));
        }
    }
    if seen != n {
        return Err(Error::Invariant(format!(
            "layout covers {seen} particles, ensemble has {n}"
        )));
    }
    Ok(())
}

/// Expands child counts into the child list, parents in ascending order.
fn children(counts: &[usize], weight_of_child: impl Fn(usize) -> f64) -> (Vec<usize>, Vec<f64>) {
    let total: usize = counts.iter().sum();
    let mut parent_of = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for (i, &c) in counts.iter().enumerate() {
        let w = weight_of_child(i);
        for _ in 0..c {
            parent_of.push(i);
            weights.push(w);
        }
    }
    (parent_of, weights)
}

/// Per bin, `N_t(u)` categorical draws with probabilities `ω_t^i/ω_t(u)`;
/// children carry weight `ω_t(u)/N_t(u)`.
pub fn select_we_multinomial<S: Copy>(
    ens: &EnsembleState<S>,
    layout: &BinLayout,
    rng: &mut RngStream,
) -> Result<SelectionOutcome> {
    check_before_selection(ens)?;
    check_layout(ens, layout)?;
    let particles = ens.particles();
    let n = particles.len();
    let mut counts = vec![0usize; n];
    let mut expected = vec![0.0; n];
    for u in layout.occupied() {
        let members = layout.members(u);
        let n_u = layout.allocation()[u];
        let w_u = layout.bin_weights()[u];
        for &i in members {
            expected[i] = n_u as f64 * particles[i].weight / w_u;
        }
        let cat = Categorical::new(members.iter().map(|&i| particles[i].weight));
        for _ in 0..n_u {
            counts[members[cat.draw(rng)]] += 1;
        }
    }
    let (parent_of, child_weights) = children(&counts, |i| {
        let u = layout.bin_of(i);
        layout.bin_weights()[u] / layout.allocation()[u] as f64
    });
    Ok(SelectionOutcome {
        child_counts: counts,
        parent_of,
        child_weights,
        expected_counts: expected,
        residuals: None,
    })
}

/// Residual resampling: `C_t^i = ⌊β_t^i⌋ + R_t^i`, with the `δ_t(u)` residual
/// trials of each bin drawn with probabilities `δ_t^i/δ_t(u)`.
pub fn select_we_residual<S: Copy>(
    ens: &EnsembleState<S>,
    layout: &BinLayout,
    rng: &mut RngStream,
) -> Result<SelectionOutcome> {
    check_before_selection(ens)?;
    check_layout(ens, layout)?;
    let particles = ens.particles();
    let n = particles.len();
    let mut counts = vec![0usize; n];
    let mut expected = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut per_bin = vec![0usize; layout.bin_count()];
    for u in layout.occupied() {
        let members = layout.members(u);
        let n_u = layout.allocation()[u];
        let w_u = layout.bin_weights()[u];
        let mut floor_total = 0usize;
        let mut delta_u = CompensatedSum::new();
        for &i in members {
            let beta = n_u as f64 * particles[i].weight / w_u;
            let fl = beta.floor();
            expected[i] = beta;
            delta[i] = beta - fl;
            counts[i] = fl as usize;
            floor_total += fl as usize;
            delta_u.add(delta[i]);
        }
        let delta_u = delta_u.value();
        let trials = delta_u.round();
        if (delta_u - trials).abs() > 1e-9 || floor_total + trials as usize != n_u {
            return Err(Error::Invariant(format!(
                "bin {u}: residual mass {delta_u} does not complete {floor_total} to {n_u}"
            )));
        }
        let trials = trials as usize;
        per_bin[u] = trials;
        if trials > 0 {
            let cat = Categorical::new(members.iter().map(|&i| delta[i]));
            for _ in 0..trials {
                counts[members[cat.draw(rng)]] += 1;
            }
        }
    }
    let (parent_of, child_weights) = children(&counts, |i| {
        let u = layout.bin_of(i);
        layout.bin_weights()[u] / layout.allocation()[u] as f64
    });
    Ok(SelectionOutcome {
        child_counts: counts,
        parent_of,
        child_weights,
        expected_counts: expected,
        residuals: Some(Residuals {
            per_particle: delta,
            per_bin,
        }),
    })
}

/// Global multinomial selection with `β_t^i = N·g_i/Σ_j g_j` and child weight
/// `ω_parent/β_parent`.
fn select_global<S>(ens: &EnsembleState<S>, g: &[f64], rng: &mut RngStream) -> SelectionOutcome {
    let particles = ens.particles();
    let n = particles.len();
    let total: f64 = g.iter().copied().collect::<CompensatedSum>().value();
    let expected: Vec<f64> = g.iter().map(|gi| n as f64 * gi / total).collect();
    let cat = Categorical::new(g.iter().copied());
    let mut counts = vec![0usize; n];
    for _ in 0..n {
        counts[cat.draw(rng)] += 1;
    }
    let (parent_of, child_weights) = children(&counts, |i| {
        particles[i].weight / expected[i]
    });
    SelectionOutcome {
        child_counts: counts,
        parent_of,
        child_weights,
        expected_counts: expected,
        residuals: None,
    }
}

/// Gibbs–Boltzmann selection: `N` trials with probabilities `∝ ω_t^i V_t(ξ_t^i)`;
/// a child of `ξ_t^j` has weight `(Σ_i ω_t^i V_t(ξ_t^i))/(N·V_t(ξ_t^j))`.
pub fn select_smc_gb<S: Copy + std::fmt::Debug>(
    ens: &EnsembleState<S>,
    potential: &dyn SmcPotential<S>,
    rng: &mut RngStream,
) -> Result<SelectionOutcome> {
    check_before_selection(ens)?;
    let t = ens.time();
    let particles = ens.particles();
    let mut v = Vec::with_capacity(particles.len());
    for p in particles {
        let value = potential.value(p.state, t);
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::PotentialDomain {
                value,
                state: format!("{:?}", p.state),
            });
        }
        v.push(value);
    }
    let g: Vec<f64> = particles.iter().zip(&v).map(|(p, vi)| p.weight * vi).collect();
    let total: f64 = g.iter().copied().collect::<CompensatedSum>().value();
    let n = particles.len() as f64;
    let mut outcome = select_global(ens, &g, rng);
    // Stated form of the child weight; equal to ω/β up to rounding.
    for (w, &parent) in outcome.child_weights.iter_mut().zip(&outcome.parent_of) {
        *w = total / (n * v[parent]);
    }
    Ok(outcome)
}

/// Optimal-control selection: `β_t^i ∝ ω_t^i Kh_{t+1}(ξ_t^i)`.
pub fn select_optimal<S: Copy>(
    ens: &EnsembleState<S>,
    kh: &[f64],
    rng: &mut RngStream,
) -> Result<SelectionOutcome> {
    check_before_selection(ens)?;
    if kh.len() != ens.len() {
        return Err(Error::Argument(format!(
            "{} Kh values for {} particles",
            kh.len(),
            ens.len()
        )));
    }
    if let Some(bad) = kh.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::Argument(format!(
            "optimal selection needs Kh > 0 at every particle, got {bad}"
        )));
    }
    let g: Vec<f64> = ens.particles().iter().zip(kh).map(|(p, k)| p.weight * k).collect();
    Ok(select_global(ens, &g, rng))
}

/// DMC: every particle has exactly one child with its own weight.
pub fn select_dmc<S: Copy>(ens: &EnsembleState<S>) -> Result<SelectionOutcome> {
    check_before_selection(ens)?;
    let n = ens.len();
    Ok(SelectionOutcome {
        child_counts: vec![1; n],
        parent_of: (0..n).collect(),
        child_weights: ens.particles().iter().map(|p| p.weight).collect(),
        expected_counts: vec![1.0; n],
        residuals: None,
    })
}

/// Builds the post-selection ensemble `(ξ̂_t^j, ω̂_t^j)`; each child inherits
/// its parent's state and lineage sum.
pub fn apply_selection<S: Copy>(
    ens: &EnsembleState<S>,
    outcome: &SelectionOutcome,
) -> Result<EnsembleState<S>> {
    check_before_selection(ens)?;
    if outcome.parent_of.len() != ens.len() || outcome.child_weights.len() != ens.len() {
        return Err(Error::Invariant(format!(
            "selection produced {} children for {} particles",
            outcome.parent_of.len(),
            ens.len()
        )));
    }
    let parents = ens.particles();
    let particles = outcome
        .parent_of
        .iter()
        .zip(&outcome.child_weights)
        .map(|(&j, &w)| Particle {
            state: parents[j].state,
            weight: w,
            lineage_sum: parents[j].lineage_sum,
        })
        .collect();
    Ok(ens.with_particles(particles, Phase::AfterSelection))
}
