//! Linear programs and the solver everything else funnels through.
//!
//! [`LinearProgram`] is a row-oriented model with bounds on every variable. The
//! default backend is [`DenseSimplex`], a bounded-variable two-phase primal
//! simplex that takes free variables and equality rows as they come.

mod dual;
mod model;
mod simplex;

pub use dual::{check_certificate, dualize, Certificate, DualMap, DualizedLp};
pub use model::{Constraint, LinearProgram, LpBuilder, Relation, Sense};
pub use simplex::DenseSimplex;

use thiserror::Error;

/// Environment variable that overrides [`SolverConfig::tolerance`].
pub const TOLERANCE_ENV: &str = "MSPRO_LP_TOL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical breakdown: {0}")]
    NumericalFailure(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal value in the program's own sense. NaN when infeasible and
    /// `±inf` when unbounded.
    pub objective_value: f64,
    /// Empty unless the status is `Optimal`.
    pub primal: Vec<f64>,
    /// Shadow prices: the derivative of the optimal value with respect to each
    /// constraint's rhs.
    pub duals: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Feasibility and optimality tolerance.
    pub tolerance: f64,
    /// Zero means "pick a limit from the problem size".
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 0 }
    }
}

impl SolverConfig {
    /// Default settings, with the tolerance taken from `MSPRO_LP_TOL` when that
    /// holds a positive number.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(raw) = std::env::var(TOLERANCE_ENV) {
            match raw.trim().parse::<f64>() {
                Ok(t) if t > 0.0 && t.is_finite() => cfg.tolerance = t,
                _ => log::warn!("ignoring {TOLERANCE_ENV}={raw:?}: not a positive number"),
            }
        }
        cfg
    }
}

pub trait LpBackend: Sync {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

/// Solves with the default backend and environment-derived settings.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    DenseSimplex::new(SolverConfig::from_env()).solve(lp)
}
