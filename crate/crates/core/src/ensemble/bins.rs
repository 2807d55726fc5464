//! Bin assignment and particle allocation.

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Maps a particle position (and time) to a bin id in `0..bin_count()`.
pub trait Binning<S>: Send + Sync {
    fn bin_count(&self) -> usize;
    fn bin(&self, x: S, t: usize) -> usize;
}

/// Every state of a finite chain is its own bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerState {
    pub n: usize,
}

impl Binning<usize> for PerState {
    fn bin_count(&self) -> usize {
        self.n
    }

    #[inline]
    fn bin(&self, x: usize, _t: usize) -> usize {
        x
    }
}

/// `count` equal bins on `[0, 1)`: `bin(x) = ⌊count·x⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformTorus {
    pub count: usize,
}

impl Binning<f64> for UniformTorus {
    fn bin_count(&self) -> usize {
        self.count
    }

    #[inline]
    fn bin(&self, x: f64, _t: usize) -> usize {
        ((x * self.count as f64) as usize).min(self.count - 1)
    }
}

/// Finite-state lookup table `state → bin`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomTable {
    table: Vec<usize>,
    count: usize,
}

impl CustomTable {
    pub fn new(table: Vec<usize>) -> Result<Self> {
        let count = table
            .iter()
            .max()
            .map(|m| m + 1)
            .ok_or_else(|| Error::Argument("bin table is empty".into()))?;
        Ok(CustomTable { table, count })
    }
}

impl Binning<usize> for CustomTable {
    fn bin_count(&self) -> usize {
        self.count
    }

    #[inline]
    fn bin(&self, x: usize, _t: usize) -> usize {
        self.table[x]
    }
}

/// How many children each occupied bin receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationPolicy {
    /// `⌊N/m⌋` per occupied bin; the `N mod m` leftovers go to occupied bins
    /// in descending bin-weight order, ties to the lowest bin id.
    Uniform,
    /// `max(1, round(N·ω(u)))` repaired to sum to `N`.
    ProportionalWithFloor,
    /// Allocation of the period-2 example: when bins 1 and 2 are both
    /// occupied they get `n2` and `N − n2` children; any other occupancy
    /// pattern falls back to [`AllocationPolicy::Uniform`].
    PeriodicExample { n2: usize },
    /// Children proportional to fixed per-bin priorities, with floor 1.
    Custom { priorities: Vec<f64> },
}

/// Computes `N_t(u)` from the bin weights.
pub fn allocate(policy: &AllocationPolicy, bin_weights: &[f64], n: usize) -> Result<Vec<usize>> {
    let total: f64 = bin_weights.iter().sum();
    if bin_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Argument("bin weights must be finite and non-negative".into()));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("bin weights sum to {total}, expected 1")));
    }
    let occupied: Vec<usize> = (0..bin_weights.len()).filter(|&u| bin_weights[u] > 0.0).collect();
    if occupied.is_empty() {
        return Err(Error::Argument("no occupied bins".into()));
    }
    if n < occupied.len() {
        return Err(Error::InfeasibleAllocation {
            occupied: occupied.len(),
            particles: n,
        });
    }
    let mut counts = vec![0usize; bin_weights.len()];
    match policy {
        AllocationPolicy::Uniform => uniform(&occupied, bin_weights, n, &mut counts),
        AllocationPolicy::ProportionalWithFloor => {
            proportional(&occupied, bin_weights, n, &mut counts)
        }
        AllocationPolicy::PeriodicExample { n2 } => {
            if *n2 == 0 || *n2 >= n {
                return Err(Error::Argument(format!(
                    "periodic allocation needs 1 ≤ n2 < N, got n2 = {n2}, N = {n}"
                )));
            }
            if occupied == [1, 2] {
                counts[1] = *n2;
                counts[2] = n - n2;
            } else {
                uniform(&occupied, bin_weights, n, &mut counts);
            }
        }
        AllocationPolicy::Custom { priorities } => {
            if priorities.len() < bin_weights.len()
                || priorities.iter().any(|p| !p.is_finite() || *p < 0.0)
            {
                return Err(Error::Argument(format!(
                    "custom allocation needs {} non-negative priorities",
                    bin_weights.len()
                )));
            }
            let mass: f64 = occupied.iter().map(|&u| priorities[u]).sum();
            if mass == 0.0 {
                uniform(&occupied, bin_weights, n, &mut counts);
            } else {
                let share: Vec<f64> = (0..bin_weights.len())
                    .map(|u| if bin_weights[u] > 0.0 { priorities[u] / mass } else { 0.0 })
                    .collect();
                proportional(&occupied, &share, n, &mut counts);
            }
        }
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), n);
    Ok(counts)
}

fn uniform(occupied: &[usize], weights: &[f64], n: usize, counts: &mut [usize]) {
    let m = occupied.len();
    let base = n / m;
    let remainder = n % m;
    for &u in occupied {
        counts[u] = base;
    }
    if remainder > 0 {
        let mut order = occupied.to_vec();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        for &u in &order[..remainder] {
            counts[u] += 1;
        }
    }
}

fn proportional(occupied: &[usize], weights: &[f64], n: usize, counts: &mut [usize]) {
    let nf = n as f64;
    for &u in occupied {
        counts[u] = ((nf * weights[u]).round() as usize).max(1);
    }
    let mut sum: usize = occupied.iter().map(|&u| counts[u]).sum();
    while sum > n {
        // largest count above the floor, ties to the lowest id
        let u = *occupied
            .iter()
            .filter(|&&u| counts[u] > 1)
            .max_by(|&&a, &&b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("n ≥ occupied bins leaves a count above 1");
        counts[u] -= 1;
        sum -= 1;
    }
    while sum < n {
        let u = *occupied
            .iter()
            .max_by(|&&a, &&b| {
                let da = nf * weights[a] - counts[a] as f64;
                let db = nf * weights[b] - counts[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("occupied is non-empty");
        counts[u] += 1;
        sum += 1;
    }
}

/// Bin membership, bin weights `ω_t(u)` and allocation `N_t(u)` of one
/// ensemble at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    bin_of: Vec<usize>,
    bin_weights: Vec<f64>,
    allocation: Vec<usize>,
    order: Vec<usize>,
    offsets: Vec<usize>,
}

impl BinLayout {
    /// Bins the ensemble and allocates `N` children with `policy`.
    pub fn assign<S: Copy>(
        ens: &EnsembleState<S>,
        binning: &dyn Binning<S>,
        policy: &AllocationPolicy,
    ) -> Result<Self> {
        let bin_count = binning.bin_count();
        let t = ens.time();
        let bin_of: Vec<usize> = ens.particles().iter().map(|p| binning.bin(p.state, t)).collect();
        if let Some(&bad) = bin_of.iter().find(|&&u| u >= bin_count) {
            return Err(Error::Invariant(format!(
                "bin id {bad} outside 0..{bin_count}"
            )));
        }
        let bin_weights = weights_by_bin(&bin_of, ens.particles().iter().map(|p| p.weight), bin_count);
        let allocation = allocate(policy, &bin_weights, ens.len())?;
        Self::from_parts(bin_of, bin_weights, allocation)
    }

    /// Layout from explicit per-particle bins, bin weights and allocation.
    /// Checks the occupancy invariant `N_t(u) ≥ 1 ⇔ ω_t(u) > 0` and that
    /// the allocation sums to the particle count.
    pub fn from_parts(bin_of: Vec<usize>, bin_weights: Vec<f64>, allocation: Vec<usize>) -> Result<Self> {
        let bins = bin_weights.len();
        if allocation.len() != bins {
            return Err(Error::Argument("allocation and bin weights differ in length".into()));
        }
        if bin_of.iter().any(|&u| u >= bins) {
            return Err(Error::Argument("particle assigned to unknown bin".into()));
        }
        let mut offsets = vec![0usize; bins + 1];
        for &u in &bin_of {
            offsets[u + 1] += 1;
        }
        for u in 0..bins {
            let occupied = offsets[u + 1] > 0;
            if occupied != (bin_weights[u] > 0.0) {
                return Err(Error::Invariant(format!(
                    "bin {u}: weight {} inconsistent with occupancy",
                    bin_weights[u]
                )));
            }
            if occupied != (allocation[u] > 0) {
                return Err(Error::Invariant(format!(
                    "bin {u}: weight {} but allocation {}",
                    bin_weights[u], allocation[u]
                )));
            }
            offsets[u + 1] += offsets[u];
        }
        let total: usize = allocation.iter().sum();
        if total != bin_of.len() {
            return Err(Error::Invariant(format!(
                "allocation sums to {total}, ensemble has {} particles",
                bin_of.len()
            )));
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; bin_of.len()];
        for (i, &u) in bin_of.iter().enumerate() {
            order[cursor[u]] = i;
            cursor[u] += 1;
        }
        Ok(BinLayout {
            bin_of,
            bin_weights,
            allocation,
            order,
            offsets,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.bin_weights.len()
    }

    pub fn bin_of(&self, particle: usize) -> usize {
        self.bin_of[particle]
    }

    pub fn bin_weights(&self) -> &[f64] {
        &self.bin_weights
    }

    pub fn allocation(&self) -> &[usize] {
        &self.allocation
    }

    /// Particle indices in bin `u`, ascending.
    pub fn members(&self, u: usize) -> &[usize] {
        &self.order[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bin_count()).filter(|&u| self.offsets[u + 1] > self.offsets[u])
    }
}

fn weights_by_bin(bin_of: &[usize], weights: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut sums = vec![CompensatedSum::new(); bins];
    for (&u, w) in bin_of.iter().zip(weights) {
        sums[u].add(w);
    }
    sums.iter().map(CompensatedSum::value).collect()
}
