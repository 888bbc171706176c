//! Lattice-point counts, lattice rests, and exact mean-square discrepancies
//! for dilated convex bodies, plus the Fourier, mollifier, and rotation
//! experiments built on top of them.
//!
//! The crate is organized around a closed family of convex bodies with
//! analytic gauge and support functions ([`bodies::Body`]), an exact lattice
//! enumerator ([`lattice`]), an exact piecewise-polynomial discrepancy
//! integrator ([`discrepancy`]), a smooth-bump mollifier ([`mollifier`]),
//! indicator-function Fourier transforms and a truncated Poisson-summation
//! oracle ([`fourier`]), and planar Diophantine rotation scans
//! ([`rotations`]).

pub mod bodies;
pub mod discrepancy;
pub mod fit;
pub mod fourier;
pub mod lattice;
pub mod mollifier;
pub mod rotations;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("enumeration budget exceeded: estimated {estimated} events, budget {budget}")]
    BudgetExceeded { estimated: u64, budget: u64 },
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("truncation tail {tail:.3e} exceeds tolerance {tol:.3e}; suggested truncation radius {suggested}")]
    TailTooLarge { tail: f64, tol: f64, suggested: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
