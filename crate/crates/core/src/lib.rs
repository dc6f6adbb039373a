//! Multistage preference-robust expected-utility maximization on scenario trees.
//!
//! The decision maker's utility at every node of a scenario tree is only known
//! to lie in an ambiguity set: a Kantorovich ball around a nominal piecewise
//! linear utility, a set cut out by pairwise lottery comparisons, or a finite
//! list. The crate builds the maximin linear programs for those sets, solves
//! them with its own simplex, and checks time consistency by re-solving
//! subtrees.

pub mod ambiguity;
pub mod experiment;
pub mod lp;
pub mod multistage;
pub mod tree;
pub mod utility;
pub mod worst_case;

use std::path::PathBuf;

use thiserror::Error;

pub use lp::LpError;
pub use tree::TreeError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ambiguity set is empty: {0}")]
    EmptyAmbiguitySet(String),
    #[error("infeasible at node {node}: {reason}")]
    InfeasibleNode { node: usize, reason: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
