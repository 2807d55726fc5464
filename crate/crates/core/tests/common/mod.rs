//! Independent oracles shared by the integration tests: exhaustive
//! enumeration of selection and mutation outcomes on small ensembles, and
//! exact expectations from plain matrix arithmetic.

#![allow(dead_code)]

pub mod checks;

use proptest::prelude::*;
use wesample::ensemble::{BinLayout, EnsembleState, Particle, Phase};

pub type Matrix = Vec<Vec<f64>>;

pub fn three_state(delta: f64) -> Matrix {
    vec![
        vec![1.0 - delta, delta, 0.0],
        vec![1.0 - delta, 0.0, delta],
        vec![1.0, 0.0, 0.0],
    ]
}

pub fn mat_vec(k: &Matrix, g: &[f64]) -> Vec<f64> {
    k.iter().map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum()).collect()
}

pub fn vec_mat(p: &[f64], k: &Matrix) -> Vec<f64> {
    let n = k.len();
    (0..n).map(|y| (0..n).map(|x| p[x] * k[x][y]).sum()).collect()
}

/// `h_t = Σ_{s<T-t} K^s f` for `0 ≤ t ≤ T`, built from the powers `K^s f`
/// rather than a backward recursion; `h_T = 0`.
pub fn accumulated(k: &Matrix, f: &[f64], horizon: usize) -> Vec<Vec<f64>> {
    let mut powers = vec![f.to_vec()];
    for s in 1..horizon {
        let next = mat_vec(k, &powers[s - 1]);
        powers.push(next);
    }
    (0..=horizon)
        .map(|t| {
            (0..f.len())
                .map(|x| powers[..horizon - t].iter().map(|p| p[x]).sum())
                .collect()
        })
        .collect()
}

/// `E θ_T = (1/T) Σ_{t<T} ν K^t f`.
pub fn expected_theta(k: &Matrix, nu: &[f64], f: &[f64], horizon: usize) -> f64 {
    let mut p = nu.to_vec();
    let mut total = 0.0;
    for _ in 0..horizon {
        total += p.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        p = vec_mat(&p, k);
    }
    total / horizon as f64
}

/// `ν K^T f`, the mean of the marginal average at time `T`.
pub fn expected_marginal(k: &Matrix, nu: &[f64], f: &[f64], t: usize) -> f64 {
    let mut p = nu.to_vec();
    for _ in 0..t {
        p = vec_mat(&p, k);
    }
    p.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// One categorical draw: `(probability, parent, child weight)` per outcome.
pub type Trial = Vec<(f64, usize, f64)>;

/// Law of a selection step: deterministic children plus independent trials.
#[derive(Debug, Clone, Default)]
pub struct SelectionLaw {
    pub fixed: Vec<(usize, f64)>,
    pub trials: Vec<Trial>,
}

impl SelectionLaw {
    /// Every joint outcome with its probability, as `(parent, weight)` lists.
    pub fn outcomes(&self) -> Vec<(f64, Vec<(usize, f64)>)> {
        let mut out = vec![(1.0, self.fixed.clone())];
        for trial in &self.trials {
            let mut next = Vec::with_capacity(out.len() * trial.len());
            for (p, children) in &out {
                for &(q, parent, w) in trial {
                    if q == 0.0 {
                        continue;
                    }
                    let mut c = children.clone();
                    c.push((parent, w));
                    next.push((p * q, c));
                }
            }
            out = next;
        }
        out
    }

    /// Variance of `Σ_children w · g(parent)`.
    pub fn variance_of(&self, g: &[f64]) -> f64 {
        let values: Vec<(f64, f64)> = self
            .outcomes()
            .into_iter()
            .map(|(p, c)| (p, c.iter().map(|&(j, w)| w * g[j]).sum()))
            .collect();
        mean_var(&values).1
    }

    /// `E[C_i]` for each parent.
    pub fn expected_counts(&self, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        for (p, c) in self.outcomes() {
            for &(j, _) in &c {
                e[j] += p;
            }
        }
        e
    }

    /// Probability of each child-count vector.
    pub fn count_distribution(&self, n: usize) -> Vec<(Vec<usize>, f64)> {
        let mut table: Vec<(Vec<usize>, f64)> = Vec::new();
        for (p, c) in self.outcomes() {
            let mut counts = vec![0usize; n];
            for &(j, _) in &c {
                counts[j] += 1;
            }
            match table.iter_mut().find(|(k, _)| *k == counts) {
                Some(entry) => entry.1 += p,
                None => table.push((counts, p)),
            }
        }
        table
    }
}

/// `(mean, variance)` of a discrete law given as `(probability, value)`.
pub fn mean_var(values: &[(f64, f64)]) -> (f64, f64) {
    let mean: f64 = values.iter().map(|(p, v)| p * v).sum();
    let var = values.iter().map(|(p, v)| p * (v - mean) * (v - mean)).sum();
    (mean, var)
}

fn bin_totals(weights: &[f64], bin_of: &[usize], bins: usize) -> Vec<f64> {
    let mut w = vec![0.0; bins];
    for (&u, &x) in bin_of.iter().zip(weights) {
        w[u] += x;
    }
    w
}

pub fn we_multinomial_law(weights: &[f64], bin_of: &[usize], allocation: &[usize]) -> SelectionLaw {
    let w = bin_totals(weights, bin_of, allocation.len());
    let mut law = SelectionLaw::default();
    for (u, &n_u) in allocation.iter().enumerate() {
        let trial: Trial = (0..weights.len())
            .filter(|&i| bin_of[i] == u)
            .map(|i| (weights[i] / w[u], i, w[u] / n_u as f64))
            .collect();
        for _ in 0..n_u {
            law.trials.push(trial.clone());
        }
    }
    law
}

pub fn we_residual_law(weights: &[f64], bin_of: &[usize], allocation: &[usize]) -> SelectionLaw {
    let w = bin_totals(weights, bin_of, allocation.len());
    let mut law = SelectionLaw::default();
    for (u, &n_u) in allocation.iter().enumerate() {
        if n_u == 0 {
            continue;
        }
        let child = w[u] / n_u as f64;
        let members: Vec<usize> = (0..weights.len()).filter(|&i| bin_of[i] == u).collect();
        let beta: Vec<f64> = members.iter().map(|&i| n_u as f64 * weights[i] / w[u]).collect();
        let frac: Vec<f64> = beta.iter().map(|b| b - b.floor()).collect();
        for (&i, b) in members.iter().zip(&beta) {
            for _ in 0..b.floor() as usize {
                law.fixed.push((i, child));
            }
        }
        let trials = frac.iter().sum::<f64>().round();
        if trials > 0.0 {
            let trial: Trial = members
                .iter()
                .zip(&frac)
                .map(|(&i, d)| (d / trials, i, child))
                .collect();
            for _ in 0..trials as usize {
                law.trials.push(trial.clone());
            }
        }
    }
    law
}

/// Global multinomial with means `β` and child weights `ω_i/β_i`.
pub fn global_law(weights: &[f64], beta: &[f64]) -> SelectionLaw {
    let n = weights.len();
    let trial: Trial = (0..n)
        .map(|i| (beta[i] / n as f64, i, if beta[i] > 0.0 { weights[i] / beta[i] } else { 0.0 }))
        .collect();
    SelectionLaw {
        fixed: Vec::new(),
        trials: vec![trial; n],
    }
}

/// `β_i = N ω_i V_i / Σ_j ω_j V_j`.
pub fn potential_beta(weights: &[f64], v: &[f64]) -> Vec<f64> {
    let z: f64 = weights.iter().zip(v).map(|(w, x)| w * x).sum();
    weights.iter().zip(v).map(|(w, x)| weights.len() as f64 * w * x / z).collect()
}

/// Conditional variance of `(1/T) Σ_i ω_i h(ξ_i')` over all joint next states.
pub fn mutation_variance_oracle(k: &Matrix, states: &[usize], weights: &[f64], h_next: &[f64], horizon: usize) -> f64 {
    let n = k.len();
    let mut values = vec![(1.0, 0.0)];
    for (&x, &w) in states.iter().zip(weights) {
        let mut next = Vec::with_capacity(values.len() * n);
        for &(p, v) in &values {
            for y in 0..n {
                if k[x][y] > 0.0 {
                    next.push((p * k[x][y], v + w * h_next[y] / horizon as f64));
                }
            }
        }
        values = next;
    }
    mean_var(&values).1
}

pub fn ensemble(states: &[usize], weights: &[f64], t: usize, phase: Phase) -> EnsembleState<usize> {
    let particles = states
        .iter()
        .zip(weights)
        .map(|(&state, &weight)| Particle {
            state,
            weight,
            lineage_sum: 0.0,
        })
        .collect();
    EnsembleState::new(particles, t, phase).expect("valid ensemble")
}

pub fn layout(weights: &[f64], bin_of: &[usize], allocation: &[usize]) -> BinLayout {
    let w = bin_totals(weights, bin_of, allocation.len());
    BinLayout::from_parts(bin_of.to_vec(), w, allocation.to_vec()).expect("valid layout")
}

/// A random small configuration: at most 3 states, 5 particles and 2 bins.
#[derive(Debug, Clone)]
pub struct SmallCase {
    pub kernel: Matrix,
    pub f: Vec<f64>,
    pub potential: Vec<f64>,
    pub states: Vec<usize>,
    pub weights: Vec<f64>,
    pub bin_of_state: Vec<usize>,
    pub extras: Vec<usize>,
    pub horizon: usize,
    pub t: usize,
}

impl SmallCase {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn bin_of(&self) -> Vec<usize> {
        self.states.iter().map(|&s| self.bin_of_state[s]).collect()
    }

    /// One child per occupied bin, the rest spread by `extras`.
    pub fn allocation(&self) -> Vec<usize> {
        let bin_of = self.bin_of();
        let mut alloc = vec![0usize; 2];
        for &u in &bin_of {
            alloc[u] = 1;
        }
        let occupied: Vec<usize> = (0..2).filter(|&u| alloc[u] > 0).collect();
        let spare = self.n() - occupied.len();
        for &e in self.extras.iter().take(spare) {
            alloc[occupied[e % occupied.len()]] += 1;
        }
        alloc
    }

    pub fn h(&self) -> Vec<Vec<f64>> {
        accumulated(&self.kernel, &self.f, self.horizon)
    }

    /// `Kh_{t+1}` evaluated at each particle.
    pub fn kh_particles(&self) -> Vec<f64> {
        let kh = mat_vec(&self.kernel, &self.h()[self.t + 1]);
        self.states.iter().map(|&s| kh[s]).collect()
    }
}

fn stochastic_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.05f64..1.0], n).prop_map(|mut row| {
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            row[0] = 1.0;
        } else {
            row.iter_mut().for_each(|x| *x /= s);
        }
        row
    })
}

pub fn small_case() -> impl Strategy<Value = SmallCase> {
    (2usize..=3, 1usize..=5, 2usize..=6)
        .prop_flat_map(|(n, particles, horizon)| {
            (
                proptest::collection::vec(stochastic_row(n), n),
                proptest::collection::vec(0.1f64..2.0, n),
                proptest::collection::vec(0.1f64..3.0, n),
                proptest::collection::vec(0..n, particles),
                proptest::collection::vec(0.05f64..1.0, particles),
                proptest::collection::vec(0usize..2, n),
                proptest::collection::vec(0usize..2, particles),
                Just(horizon),
                0..horizon - 1,
            )
        })
        .prop_map(|(kernel, f, potential, states, raw, bin_of_state, extras, horizon, t)| {
            let s: f64 = raw.iter().sum();
            SmallCase {
                kernel,
                f,
                potential,
                states,
                weights: raw.iter().map(|w| w / s).collect(),
                bin_of_state,
                extras,
                horizon,
                t,
            }
        })
}
