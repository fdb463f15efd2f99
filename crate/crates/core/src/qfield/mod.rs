//! Discrete Q-valued maps on cube meshes.

mod affine;
mod diagnostics;
mod field;
mod fold;

pub use affine::{AffineGroup, AffineQMap};
pub use diagnostics::{
    blowup_residual, blowup_residual_with, lp_distance, lp_distance_with_order, vertex_sup_distance,
    weak_convergence_report, WeakConvergenceReport,
};
pub use field::{FnField, QSheetField, QValued, FACE_TOLERANCE};

pub use fold::{fold_sequence, BOUNDARY_TOLERANCE};

use crate::error::{invalid, Result};

/// A finite sequence `u_k` of fields sharing Q, n and domain, with exponent `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFieldSequence {
    items: Vec<QSheetField>,
    p: f64,
}

impl QFieldSequence {
    pub fn new(items: Vec<QSheetField>, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(invalid!("exponent p must be ≥ 1, got {p}"));
        }
        if let Some(first) = items.first() {
            for (k, f) in items.iter().enumerate() {
                if f.q() != first.q() || f.n() != first.n() || f.domain() != first.domain() {
                    return Err(invalid!("sequence member {k} differs in Q, n or domain"));
                }
            }
        }
        Ok(Self { items, p })
    }

    pub fn items(&self) -> &[QSheetField] {
        &self.items
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
