//! # nuwass
//!
//! Exact discrete optimal transport and the reference-based ("ν-based")
//! Wasserstein metric `W_ν`, together with the machinery that surrounds it:
//!
//! - [`ot`]: exact two-marginal transport (transportation simplex with dual
//!   potentials), 1-D closed forms, and plan-uniqueness probing.
//! - [`numetric`]: three equivalent computations of `W_ν` (constrained LP,
//!   disintegration over the reference measure, multi-marginal ε-limit), the
//!   coupling metric, the Γ-convergence functional and hierarchical variants
//!   with several reference measures.
//! - [`geodesics`]: generalized geodesics `μ_t = ((1-t)e₀ + te₁)#γ`,
//!   geodesic-property verification and convexity scans of the classical
//!   functionals (potential, interaction, internal energy, distance to ν).
//! - [`layerwise`]: the layerwise-Wasserstein distance and the discrete
//!   Knothe-Rosenblatt rearrangement.
//! - [`unequal`]: unequal-dimensional transport onto 1-D targets: level-set
//!   masses, mass splitting, nestedness checks, the sufficient nestedness
//!   condition, conditional densities and the dual metric `W*`.
//! - [`fixedpoint`]: the contraction fixed-point solver for the
//!   entropy-regularized equilibrium problem on a 1-D strategy space.
//!
//! All measures are discrete (weighted point clouds) or grid densities; see
//! [`measures`] for the data model and [`io`] for the JSON/CSV file formats.

pub mod cost;
pub mod fixedpoint;
pub mod gen;
pub mod geodesics;
pub mod io;
pub mod layerwise;
pub mod lp;
pub mod measures;
pub mod numetric;
pub mod ot;
pub mod unequal;

pub use cost::{CostSpec, Curve};
pub use measures::{Coupling, DiscreteMeasure, GridMeasure, Potentials, SplitFunction, TriCoupling};

use thiserror::Error;

/// Library error. Variants split into user-input problems (bad files,
/// violated preconditions) and solver-side failures so callers can map them
/// to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed against its schema.
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// An input violates a documented invariant or precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Point/cost dimensions are incompatible.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A problem exceeds the documented size cap.
    #[error("size cap exceeded: {size} > {cap} ({what})")]
    SizeCap { what: &'static str, size: usize, cap: usize },

    /// An operation is not defined for the given cost variant.
    #[error("unsupported cost variant: {0}")]
    UnsupportedCost(String),

    /// A solver failed to converge or produced an inconsistent state.
    #[error("solver error: {0}")]
    Solver(String),

    /// A constrained problem was reported infeasible.
    #[error("infeasible problem: {0}")]
    Infeasible(String),
}

impl Error {
    /// True when the error is attributable to user input rather than the
    /// solver (exit code 2 vs 3 in the CLI).
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Solver(_) | Error::Infeasible(_))
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
