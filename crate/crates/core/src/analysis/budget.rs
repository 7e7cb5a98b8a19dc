//! Error propagation for the displacement estimate, and epoch intervals.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Times each error source enters the displacement between two epochs:
/// both epochs' scans, both epochs' multi-view registrations, one
/// cross-epoch registration, both epochs' filtering, one mesh comparison.
pub const DEFAULT_MULTIPLICITIES: [u32; 5] = [2, 2, 1, 2, 1];

/// Component errors in millimeters and the propagated σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub m_tls: f64,
    pub m_mreg: f64,
    pub m_treg: f64,
    pub m_veg: f64,
    pub m_mesh: f64,
    pub multiplicities: [u32; 5],
    pub sigma_mm: f64,
}

impl ErrorBudget {
    pub fn components(&self) -> [f64; 5] {
        [self.m_tls, self.m_mreg, self.m_treg, self.m_veg, self.m_mesh]
    }
}

pub fn error_budget_with(components: [f64; 5], multiplicities: [u32; 5]) -> Result<ErrorBudget> {
    if let Some(bad) = components.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
        return Err(Error::param(format!(
            "error components must be non-negative, got {bad}"
        )));
    }
    let sigma_mm = components
        .iter()
        .zip(multiplicities)
        .map(|(c, k)| k as f64 * c * c)
        .sum::<f64>()
        .sqrt();
    let [m_tls, m_mreg, m_treg, m_veg, m_mesh] = components;
    Ok(ErrorBudget {
        m_tls,
        m_mreg,
        m_treg,
        m_veg,
        m_mesh,
        multiplicities,
        sigma_mm,
    })
}

/// σ of the displacement between two epochs, in mm.
pub fn error_budget(m_tls: f64, m_mreg: f64, m_treg: f64, m_veg: f64, m_mesh: f64) -> Result<ErrorBudget> {
    error_budget_with([m_tls, m_mreg, m_treg, m_veg, m_mesh], DEFAULT_MULTIPLICITIES)
}

/// σ relative to a displacement magnitude (ratio, not percent).
pub fn relative_error(sigma_mm: f64, displacement_m: f64) -> Result<f64> {
    if !(displacement_m > 0.0) {
        return Err(Error::param(format!(
            "displacement must be positive, got {displacement_m}"
        )));
    }
    Ok(sigma_mm / 1000.0 / displacement_m)
}

/// Calendar days from `a` to `b`.
pub fn interval_days(a: NaiveDate, b: NaiveDate) -> Result<u32> {
    let d = (b - a).num_days();
    if d <= 0 {
        return Err(Error::InvalidInterval(format!("{b} is not after {a}")));
    }
    Ok(d as u32)
}
