//! Error norms and parameter sweeps.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::map::MapSpec;
use crate::quadrature::{integrate, QuadratureFailure};
use crate::solver::{stationary_density, SolverOptions};
use crate::truncation::truncate;
use crate::ulam::{
    project_transfer, ulam_matrix_with, AssemblyOptions, DensityVector, UlamError,
};
use crate::Error;

/// A reference density on `[0, 1]`.
#[derive(Clone)]
pub enum ExactDensity {
    /// `intercept + slope·x`.
    Affine { intercept: f64, slope: f64 },
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for ExactDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExactDensity::Affine { intercept, slope } => write!(f, "Affine({intercept} + {slope}·x)"),
            ExactDensity::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl ExactDensity {
    pub fn affine(intercept: f64, slope: f64) -> Self {
        ExactDensity::Affine { intercept, slope }
    }

    pub fn function<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        ExactDensity::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ExactDensity::Affine { intercept, slope } => intercept + slope * x,
            ExactDensity::Function(f) => f(x),
        }
    }
}

/// `∫_a^b |c − (p + q·x)| dx`, split at the crossing point.
fn affine_abs_integral(c: f64, p: f64, q: f64, a: f64, b: f64) -> f64 {
    let ga = p + q * a - c;
    let gb = p + q * b - c;
    if ga * gb >= 0.0 {
        0.5 * (ga + gb).abs() * (b - a)
    } else {
        let xc = a + (b - a) * ga / (ga - gb);
        0.5 * ga.abs() * (xc - a) + 0.5 * gb.abs() * (b - xc)
    }
}

/// `‖f − exact‖₁` cell by cell; closed form for affine references, otherwise
/// adaptive quadrature accurate to `quad_tol / k` per cell.
pub fn l1_vs_exact(f: &DensityVector, exact: &ExactDensity, quad_tol: f64) -> Result<f64, QuadratureFailure> {
    let grid = f.grid();
    let per_cell = quad_tol / grid.k() as f64;
    (0..grid.k())
        .map(|i| {
            let (a, b) = grid.cell(i);
            let c = f.values()[i];
            match exact {
                ExactDensity::Affine { intercept, slope } => Ok(affine_abs_integral(c, *intercept, *slope, a, b)),
                ExactDensity::Function(g) => integrate(|x| (c - g(x)).abs(), a, b, per_cell),
            }
        })
        .sum()
}

/// Exact L¹ distance between two step functions on possibly different grids.
pub fn l1_between(f: &DensityVector, g: &DensityVector) -> f64 {
    let (gf, gg) = (f.grid(), g.grid());
    let (mut i, mut j) = (0usize, 0usize);
    let mut left = 0.0;
    let mut total = 0.0;
    while i < gf.k() && j < gg.k() {
        let (rf, rg) = (gf.boundary(i + 1), gg.boundary(j + 1));
        let right = rf.min(rg);
        total += (f.values()[i] - g.values()[j]).abs() * (right - left);
        left = right;
        if rf <= right {
            i += 1;
        }
        if rg <= right {
            j += 1;
        }
    }
    total
}

/// `‖Q(P_τ f) − f‖₁` with `P_τ` evaluated pointwise from the inverse branches.
pub fn fp_residual(map: &MapSpec, f: &DensityVector, quad_tol: f64) -> Result<f64, UlamError> {
    let pf = project_transfer(map, f, quad_tol)?;
    Ok(l1_between(&pf, f))
}

/// One `(n, k)` run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    /// Distance to the exact density, or to the previous row's density when
    /// no exact density is known (unset for the first row).
    pub error_l1: Option<f64>,
    pub residual: Option<f64>,
    pub runtime_ms: Option<f64>,
    /// Error message when this row failed.
    #[serde(skip)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    pub assembly: AssemblyOptions,
    pub quad_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), assembly: AssemblyOptions::default(), quad_tol: 1e-12 }
    }
}

/// Truncates, assembles and solves for a single `(n, k)`.
pub fn ulam_density(base: &MapSpec, n: usize, k: usize, opts: &SweepOptions) -> Result<crate::solver::SolveReport, Error> {
    let spec = if base.is_finite() { base.clone() } else { truncate(base, n)?.into_spec() };
    let m = ulam_matrix_with(&spec, k, opts.assembly)?;
    Ok(stationary_density(&m, opts.solver)?)
}

/// Runs every `(n, k)` pair in `n_list × k_list` (n-major order).
///
/// Rows are computed in parallel; failures are recorded on their row and the
/// sweep continues.
pub fn sweep(
    base: &MapSpec,
    exact: Option<&ExactDensity>,
    n_list: &[usize],
    k_list: &[usize],
    opts: &SweepOptions,
) -> Vec<SweepRow> {
    let pairs: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| k_list.iter().map(move |&k| (n, k))).collect();
    let runs: Vec<(Result<DensityVector, String>, Option<f64>, f64)> = pairs
        .par_iter()
        .map(|&(n, k)| {
            let start = Instant::now();
            let outcome = ulam_density(base, n, k, opts);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(report) => {
                    let residual = report.residual_l1;
                    (Ok(report.density), Some(residual), ms)
                }
                Err(e) => (Err(e.to_string()), None, ms),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(runs.len());
    let mut previous: Option<&DensityVector> = None;
    for (&(n, k), (density, residual, ms)) in pairs.iter().zip(&runs) {
        let mut row = SweepRow { n, k, error_l1: None, residual: *residual, runtime_ms: Some(*ms), failure: None };
        match density {
            Ok(d) => {
                row.error_l1 = match exact {
                    Some(g) => match l1_vs_exact(d, g, opts.quad_tol) {
                        Ok(e) => Some(e),
                        Err(e) => {
                            row.failure = Some(e.to_string());
                            None
                        }
                    },
                    None => previous.map(|p| l1_between(d, p)),
                };
                previous = Some(d);
            }
            Err(msg) => {
                row.failure = Some(msg.clone());
                previous = None;
            }
        }
        rows.push(row);
    }
    rows
}
