//! Numerical convexity tests: competitor search for quasiconvexity,
//! semiellipticity of quadratic forms, rank-one minima, polyconvexity
//! certificates and the folding experiment.

mod necessity;
mod quadratic;
mod search;

pub use necessity::{necessity_experiment, NecessityReport};
pub use quadratic::{
    minor_forms, polyconvexity_certificate, rank_one_min, semiellipticity_test, translation_identity_gap,
    PolyconvexityCertificate, RankOneMin,
};
pub use search::quasiconvexity_test;

use serde::{Deserialize, Serialize};

use crate::qfield::QSheetField;

/// Search budget and tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub cells_per_side: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub tol: f64,
    pub laminate_seeds: bool,
    /// A restart stops once its margin drops below this value.
    pub stop_margin: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            cells_per_side: 8,
            restarts: 4,
            max_iters: 200,
            seed: 0,
            tol: 1e-9,
            laminate_seeds: true,
            stop_margin: -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "no-violation-found")]
    NoViolationFound,
    #[serde(rename = "violation")]
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchLog {
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub best_restart: usize,
    /// Final margin of every restart.
    pub restart_margins: Vec<f64>,
    /// Accepted margins of every restart, starting with the seed.
    pub histories: Vec<Vec<f64>>,
}

/// Outcome of a competitor search. `NoViolationFound` only reports that the
/// budget in `search_log` found nothing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QCVerdict {
    pub status: Status,
    /// Best competitor energy minus affine energy, per unit volume.
    pub margin: f64,
    pub certificate: Option<QSheetField>,
    pub search_log: SearchLog,
}
