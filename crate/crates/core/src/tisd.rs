//! Target information spatial distributions.
//!
//! The clarity-driven distribution weights each cell by how long the robot
//! would have to look at it to lift its clarity to target, so the ergodic
//! planner spends time where information is missing.

use std::fmt::Write as _;

use crate::clarity;
use crate::error::{invalid, Result};
use crate::grid::{CellField, DomainSpec};

/// Clipping margin below `q∞` applied to targets when none is configured.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Normalized per-cell density over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Tisd {
    pub density: Vec<f64>,
    pub spec: DomainSpec,
    /// Set when every cell already meets its target and the uniform fallback
    /// was returned.
    pub targets_satisfied: bool,
}

impl Tisd {
    /// Normalizes non-negative raw weights. An all-zero input yields the
    /// uniform density with `targets_satisfied` set.
    pub fn from_weights(spec: &DomainSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.num_cells() {
            return Err(invalid(format!(
                "{} weights for {} cells",
                weights.len(),
                spec.num_cells()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid(format!(
                "density weights must be finite and non-negative, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            let mut t = uniform_tisd(spec);
            t.targets_satisfied = true;
            return Ok(t);
        }
        Ok(Self {
            density: weights.into_iter().map(|w| w / total).collect(),
            spec: spec.clone(),
            targets_satisfied: false,
        })
    }

    /// CSV with columns `cell_index,x_center,y_center,phi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_index,x_center,y_center,phi\n");
        for (c, phi) in self.density.iter().enumerate() {
            let center = self.spec.cell_center(c);
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c,
                center[0],
                center.get(1).copied().unwrap_or(0.0),
                phi
            );
        }
        out
    }
}

/// Equal weight on every cell.
pub fn uniform_tisd(spec: &DomainSpec) -> Tisd {
    let n = spec.num_cells();
    Tisd {
        density: vec![1.0 / n as f64; n],
        spec: spec.clone(),
        targets_satisfied: false,
    }
}

/// Clarity-driven distribution.
///
/// Each cell's raw weight is the observation time needed to raise its
/// clarity from the current value to `min(q̄_c, q∞,c − ε)`; weights are then
/// normalized to sum to one.
pub fn gen_tisd(field: &CellField, epsilon: f64) -> Result<Tisd> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut raw = Vec::with_capacity(field.num_cells());
    for c in 0..field.num_cells() {
        let p = field.params(c)?;
        let q_max = clarity::max_clarity(&p)?;
        let target = field.target_clarity[c].min(q_max - epsilon);
        let q = field.clarity[c];
        raw.push(if target <= q {
            0.0
        } else {
            clarity::time_to_clarity(q, target, &p)?
        });
    }
    Tisd::from_weights(&field.spec, raw)
}
