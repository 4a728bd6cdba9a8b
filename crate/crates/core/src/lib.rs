//! Ulam's method for invariant densities of piecewise convex interval maps
//! whose partition points accumulate at zero.
//!
//! The pipeline runs from a [`map::MapSpec`] (hand-coded in [`catalog`] or
//! compiled from a text definition by [`dsl`]) through a finite-branch
//! [`truncation`], the [`ulam`] matrix on a uniform partition, and the
//! [`solver`] for its normalized fixed density. [`analysis`] measures errors
//! and runs parameter sweeps; [`oracle`] estimates the same density from
//! long orbits.
//!
//! ```
//! use ulam_acim::{analysis, catalog, solver, truncation, ulam};
//!
//! let tau_n = truncation::truncate(&catalog::example1(40), 10)?;
//! let m = ulam::ulam_matrix(tau_n.spec(), 200, 1e-12)?;
//! let report = solver::stationary_density(&m, solver::SolverOptions::default())?;
//! let err = analysis::l1_vs_exact(&report.density, &catalog::example1_density(), 1e-12)?;
//! assert!(err < 0.2);
//! # Ok::<(), ulam_acim::Error>(())
//! ```

pub mod analysis;
pub mod catalog;
pub mod dsl;
pub mod io;
pub mod map;
pub mod oracle;
pub mod quadrature;
pub mod solver;
pub mod truncation;
pub mod ulam;

pub use analysis::{l1_between, l1_vs_exact, sweep, ExactDensity, SweepRow};
pub use map::{Branch, MapClass, MapError, MapSpec, Resolution};
pub use solver::{stationary_density, Method, SolveReport, SolverOptions};
pub use truncation::{truncate, TruncatedMap};
pub use ulam::{DensityVector, PartitionGrid, UlamMatrix};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Map(#[from] map::MapError),
    #[error(transparent)]
    Ulam(#[from] ulam::UlamError),
    #[error(transparent)]
    Solve(#[from] solver::SolveError),
    #[error(transparent)]
    Dsl(#[from] dsl::DslError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Quadrature(#[from] quadrature::QuadratureFailure),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    pub mod maps {}
    #[doc = include_str!("../../../book/src/definition-files.md")]
    pub mod definition_files {}
    #[doc = include_str!("../../../book/src/truncation.md")]
    pub mod truncation {}
    #[doc = include_str!("../../../book/src/ulam-matrix.md")]
    pub mod ulam_matrix {}
    #[doc = include_str!("../../../book/src/solving.md")]
    pub mod solving {}
    #[doc = include_str!("../../../book/src/errors-and-sweeps.md")]
    pub mod errors_and_sweeps {}
    #[doc = include_str!("../../../book/src/orbit-oracle.md")]
    pub mod orbit_oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
