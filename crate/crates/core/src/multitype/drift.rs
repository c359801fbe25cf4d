//! Foster-Lyapunov drift check for the spine chain with `V(x) = βˣ`.

use serde::Serialize;

use super::spectral::SpineKernel;
use super::TypeCode;
use crate::error::{Error, Result};

/// Row sums of `p` must be within this of one for the drift sum to be
/// trusted; otherwise successors escape the truncation.
pub const DRIFT_LEAK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct DriftRow {
    pub x: TypeCode,
    /// `Σ_y p_{x,y} V(y)`.
    pub drift: f64,
    /// `(1 - margin) V(x) - Σ_y p_{x,y} V(y)`.
    pub margin: f64,
    /// `1/b_x ≤ V(x)`.
    pub dominates_inverse_b: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub beta: f64,
    pub beta_margin: f64,
    pub small_set: Vec<TypeCode>,
    pub range: (TypeCode, TypeCode),
    pub rows: Vec<DriftRow>,
    pub min_margin: f64,
    pub pass: bool,
}

pub fn drift_check(
    kernel: &SpineKernel,
    b: &[f64],
    beta: f64,
    beta_margin: f64,
    small_set: &[TypeCode],
    range: (TypeCode, TypeCode),
) -> Result<DriftReport> {
    if !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must exceed 1, got {beta}"
        )));
    }
    if !(beta_margin > 0.0 && beta_margin < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta_margin must lie in (0,1), got {beta_margin}"
        )));
    }
    if range.0 > range.1 {
        return Err(Error::InvalidArgument("empty type range".into()));
    }
    if b.len() != kernel.types.len() {
        return Err(Error::LengthMismatch {
            expected: kernel.types.len(),
            got: b.len(),
        });
    }
    let v = |t: TypeCode| beta.powf(t as f64);
    let mut rows = Vec::new();
    for x in range.0..=range.1 {
        if small_set.contains(&x) {
            continue;
        }
        let i = kernel
            .types
            .index_of(x)
            .ok_or(Error::OutsideTruncation(x))?;
        if kernel.leak[i].abs() > DRIFT_LEAK_TOL {
            return Err(Error::TruncationLeak {
                leak: kernel.leak[i],
                threshold: DRIFT_LEAK_TOL,
            });
        }
        let drift: f64 = kernel.p[i]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(j, p)| p * v(kernel.types.type_at(j)))
            .sum();
        rows.push(DriftRow {
            x,
            drift,
            margin: (1.0 - beta_margin) * v(x) - drift,
            dominates_inverse_b: 1.0 / b[i] <= v(x),
        });
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let pass = rows
        .iter()
        .all(|r| r.margin >= 0.0 && r.dominates_inverse_b);
    Ok(DriftReport {
        beta,
        beta_margin,
        small_set: small_set.to_vec(),
        range,
        rows,
        min_margin,
        pass,
    })
}
