use crate::error::{Error, Result};
use crate::kernels::{cumulative_to_one, invert_cdf, MarkovKernel};
use crate::numeric::linear_fit;
use crate::rng::RngStream;

/// Convergence tolerance of the power iteration (L¹ change per sweep).
pub const STATIONARY_TOL: f64 = 1e-13;
pub const STATIONARY_ITERATION_CAP: usize = 1_000_000;

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic transition matrix on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    n: usize,
    matrix: Vec<f64>,
    cdf: Vec<f64>,
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Argument("transition matrix is empty".into()));
        }
        let mut matrix = Vec::with_capacity(n * n);
        let mut cdf = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Argument(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Argument(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Argument(format!("row {i} sums to {sum}, not 1")));
            }
            matrix.extend_from_slice(row);
            cdf.extend(cumulative_to_one(row));
        }
        Ok(FiniteKernel { n, matrix, cdf })
    }

    /// The three-state chain `K(0,1) = K(1,2) = δ`, `K(0,0) = K(1,0) = 1-δ`,
    /// `K(2,0) = 1` (states 0-based).
    pub fn three_state(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Argument(format!("delta = {delta} must lie in [0, 1]")));
        }
        Self::new(vec![
            vec![1.0 - delta, delta, 0.0],
            vec![1.0 - delta, 0.0, delta],
            vec![1.0, 0.0, 0.0],
        ])
    }

    /// The period-2 chain `0 → {1, 2}` with probability ½ each, `1, 2 → 0`.
    pub fn periodic_three_state() -> Self {
        Self::new(vec![
            vec![0.0, 0.5, 0.5],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .expect("static matrix is stochastic")
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.matrix[x * self.n + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.matrix[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|x| self.row(x).to_vec()).collect()
    }

    /// `(Kg)(x) = Σ_y K(x,y) g(y)`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n);
        (0..self.n)
            .map(|x| self.row(x).iter().zip(g).map(|(k, v)| k * v).sum())
            .collect()
    }

    /// `(pK)(y) = Σ_x p(x) K(x,y)`.
    pub fn left_apply(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (x, px) in p.iter().enumerate() {
            if *px == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(self.row(x)) {
                *o += px * k;
            }
        }
        out
    }

    /// Dense `K^t` as row vectors.
    pub fn power(&self, t: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..t {
            rows = rows.iter().map(|r| self.left_apply(r)).collect();
        }
        rows
    }
}

impl MarkovKernel for FiniteKernel {
    type State = usize;

    fn check_state(&self, x: usize) -> Result<()> {
        if x < self.n {
            Ok(())
        } else {
            Err(Error::Domain(format!("state {x} not in 0..{}", self.n)))
        }
    }

    #[inline]
    fn step_unchecked(&self, x: usize, rng: &mut RngStream) -> usize {
        invert_cdf(&self.cdf[x * self.n..(x + 1) * self.n], rng.uniform())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryMethod {
    PowerIteration { iterations: usize },
    /// Power iteration stalled (e.g. a periodic chain) and the answer came
    /// from solving `(Kᵀ − I)π = 0, Σπ = 1` directly.
    LinearSolve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub probabilities: Vec<f64>,
    pub method: StationaryMethod,
    /// `max_y |(πK)(y) − π(y)|` of the returned vector.
    pub residual: f64,
}

/// Stationary law of a finite kernel by power iteration from the uniform
/// vector, with a dense linear solve when the iteration does not settle.
pub fn stationary_distribution(k: &FiniteKernel, tol: f64) -> Result<StationaryDistribution> {
    let n = k.n();
    let mut pi = vec![1.0 / n as f64; n];
    for it in 1..=STATIONARY_ITERATION_CAP {
        let next = k.left_apply(&pi);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < tol {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            let residual = stationary_residual(k, &pi);
            return Ok(StationaryDistribution {
                probabilities: pi,
                method: StationaryMethod::PowerIteration { iterations: it },
                residual,
            });
        }
    }
    let pi = solve_stationary(k)?;
    let residual = stationary_residual(k, &pi);
    if residual > tol.max(1e-10) {
        return Err(Error::Mixing(format!(
            "linear solve residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(StationaryDistribution {
        probabilities: pi,
        method: StationaryMethod::LinearSolve,
        residual,
    })
}

fn stationary_residual(k: &FiniteKernel, pi: &[f64]) -> f64 {
    k.left_apply(pi)
        .iter()
        .zip(pi)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Gaussian elimination with partial pivoting on `(Kᵀ − I)π = 0` with the
/// last equation replaced by `Σπ = 1`.
fn solve_stationary(k: &FiniteKernel) -> Result<Vec<f64>> {
    let n = k.n();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (y, row) in a.iter_mut().enumerate() {
        for x in 0..n {
            row[x] = k.entry(x, y) - if x == y { 1.0 } else { 0.0 };
        }
    }
    for x in 0..n {
        a[n - 1][x] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Mixing(
                "stationary system is singular (chain is reducible)".into(),
            ));
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                if factor != 0.0 {
                    for c in col..=n {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Finite-horizon accumulated observables
/// `h_t = Σ_{s=0}^{T-t-1} K^s f` for `0 ≤ t ≤ T-1`, together with their
/// one-step images `Kh_{t+1}` and `K(h_{t+1}²)`. By convention `h_T ≡ 0`,
/// so both images vanish at `t = T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonFunctions {
    horizon: usize,
    h: Vec<Vec<f64>>,
    kh: Vec<Vec<f64>>,
    kh_sq: Vec<Vec<f64>>,
}

impl HorizonFunctions {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `h_t(x)`.
    #[inline]
    pub fn h(&self, t: usize, x: usize) -> f64 {
        self.h[t][x]
    }

    /// `Kh_{t+1}(x)`.
    #[inline]
    pub fn kh(&self, t: usize, x: usize) -> f64 {
        self.kh[t][x]
    }

    /// `K(h_{t+1}²)(x)`.
    #[inline]
    pub fn kh_sq(&self, t: usize, x: usize) -> f64 {
        self.kh_sq[t][x]
    }

    pub fn h_row(&self, t: usize) -> &[f64] {
        &self.h[t]
    }

    pub fn kh_row(&self, t: usize) -> &[f64] {
        &self.kh[t]
    }
}

pub fn horizon_functions(k: &FiniteKernel, f: &[f64], horizon: usize) -> Result<HorizonFunctions> {
    if horizon == 0 {
        return Err(Error::Argument("horizon T must be at least 1".into()));
    }
    if f.len() != k.n() {
        return Err(Error::Argument(format!(
            "observable has {} values for {} states",
            f.len(),
            k.n()
        )));
    }
    let n = k.n();
    let mut h = vec![vec![0.0; n]; horizon];
    let mut kh = vec![vec![0.0; n]; horizon];
    let mut kh_sq = vec![vec![0.0; n]; horizon];
    h[horizon - 1] = f.to_vec();
    for t in (0..horizon - 1).rev() {
        kh[t] = k.apply(&h[t + 1]);
        let sq: Vec<f64> = h[t + 1].iter().map(|v| v * v).collect();
        kh_sq[t] = k.apply(&sq);
        h[t] = kh[t].iter().zip(f).map(|(a, b)| a + b).collect();
    }
    Ok(HorizonFunctions {
        horizon,
        h,
        kh,
        kh_sq,
    })
}

/// Total-variation decay of `K^t` towards the stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDiagnostics {
    /// `tv_curve[t] = max_x ½ Σ_y |K^t(x,y) − μ(y)|`, for `t = 0..=t_max`.
    pub tv_curve: Vec<f64>,
    /// Fitted geometric rate; `None` when the curve does not decay.
    pub rate: Option<f64>,
}

/// Below this the TV distance is treated as converged.
const TV_FLOOR: f64 = 1e-13;

pub fn mixing_diagnostics(k: &FiniteKernel, t_max: usize) -> Result<MixingDiagnostics> {
    let mu = stationary_distribution(k, STATIONARY_TOL)?.probabilities;
    let n = k.n();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut tv_curve = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            rows = rows.iter().map(|r| k.left_apply(r)).collect();
        }
        let tv = rows
            .iter()
            .map(|r| 0.5 * r.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        tv_curve.push(tv);
    }
    let rate = fit_rate(&tv_curve);
    Ok(MixingDiagnostics { tv_curve, rate })
}

fn fit_rate(tv: &[f64]) -> Option<f64> {
    let above: Vec<usize> = (0..tv.len()).filter(|&t| tv[t] > TV_FLOOR).collect();
    let reached_floor = tv.last().is_some_and(|&v| v <= TV_FLOOR);
    let points: Vec<usize> = if reached_floor {
        // Fit over the pre-floor segment only.
        let first_floor = tv.iter().position(|&v| v <= TV_FLOOR).unwrap_or(tv.len());
        above.into_iter().filter(|&t| t < first_floor).collect()
    } else {
        let start = tv.len() / 2;
        above.into_iter().filter(|&t| t >= start).collect()
    };
    if points.len() < 2 {
        return if reached_floor { Some(0.0) } else { None };
    }
    let x: Vec<f64> = points.iter().map(|&t| t as f64).collect();
    let y: Vec<f64> = points.iter().map(|&t| tv[t].ln()).collect();
    let (slope, _) = linear_fit(&x, &y)?;
    if slope > -1e-9 {
        None
    } else {
        Some(slope.exp())
    }
}
