//! Scaling-law checks on swept-`T` result tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::experiment::results::ResultsTable;
use crate::numeric::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingLaw {
    /// `σ_T ∝ 1/√T`; the flat quantity is `√T·σ_T`.
    #[serde(rename = "inv_sqrt_T")]
    InvSqrtT,
    /// `σ_T ∝ √T`; the flat quantity is `σ_T/√T`.
    #[serde(rename = "sqrt_T")]
    SqrtT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub law: ScalingLaw,
    pub estimator: Estimator,
    /// `(T, σ_T rescaled by the law)`.
    pub points: Vec<(usize, f64)>,
    pub max_min_ratio: f64,
    /// Least-squares slope of `log σ_T` against `log T`.
    pub slope: f64,
}

pub fn compare_scaling(table: &ResultsTable, law: ScalingLaw, estimator: Estimator) -> Result<ScalingReport> {
    let rows: Vec<_> = table.rows_for(estimator).collect();
    if rows.len() < 3 {
        return Err(Error::Argument(format!(
            "scaling check needs at least 3 grid points, got {}",
            rows.len()
        )));
    }
    let points: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| {
            let root = (r.sweep as f64).sqrt();
            let scaled = match law {
                ScalingLaw::InvSqrtT => r.std * root,
                ScalingLaw::SqrtT => r.std / root,
            };
            (r.sweep, scaled)
        })
        .collect();
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = rows.iter().map(|r| (r.sweep as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.std.ln()).collect();
    let slope = linear_fit(&x, &y).map(|(s, _)| s).unwrap_or(f64::NAN);
    Ok(ScalingReport {
        law,
        estimator,
        points,
        max_min_ratio: max / min,
        slope,
    })
}
