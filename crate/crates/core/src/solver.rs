//! Normalized fixed densities of the discretized operator.
//!
//! [`Method::PowerCesaro`] iterates `f ↦ f·M` from the uniform density and
//! keeps the running Cesàro mean of the iterates alongside. Whichever of the
//! latest iterate and the mean first has residual `‖f·M − f‖₁ < tol` is
//! returned. For the exact maps handled here the plain iterates converge
//! geometrically; the mean covers periodic matrices where they oscillate.
//!
//! [`Method::DirectNullspace`] solves `(Mᵀ − I) f = 0` with one equation
//! replaced by the mass constraint, via dense LU.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ulam::{DensityVector, UlamError, UlamMatrix};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PowerCesaro,
    DirectNullspace,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" | "power_cesaro" => Ok(Method::PowerCesaro),
            "direct" | "direct_nullspace" => Ok(Method::DirectNullspace),
            other => Err(format!("unknown method `{other}` (expected power or direct)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::PowerCesaro => "power",
            Method::DirectNullspace => "direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence within {max_iter} iterations (residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("the normalized fixed-point system is singular")]
    SingularSystem,
    #[error("direct solve produced density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Ulam(#[from] UlamError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: Method::PowerCesaro, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Result of [`stationary_density`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub density: DensityVector,
    pub iterations: usize,
    /// `‖f·M − f‖₁` of the returned density.
    pub residual_l1: f64,
    pub method: Method,
    /// Whether the returned density is the Cesàro mean rather than an iterate.
    pub averaged: bool,
    pub monotonicity_defect: f64,
}

/// Flat record of a [`SolveReport`] without the density values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub method: Method,
    pub k: usize,
    pub iterations: usize,
    pub residual_l1: f64,
    pub averaged: bool,
    pub monotonicity_defect: f64,
    pub sup: f64,
    pub mass: f64,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            method: self.method,
            k: self.density.k(),
            iterations: self.iterations,
            residual_l1: self.residual_l1,
            averaged: self.averaged,
            monotonicity_defect: self.monotonicity_defect,
            sup: self.density.sup(),
            mass: self.density.mass(),
        }
    }
}

fn l1_cells(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn normalize(v: &mut [f64]) {
    let mass = v.iter().sum::<f64>() / v.len() as f64;
    if mass > 0.0 {
        v.iter_mut().for_each(|x| *x /= mass);
    }
}

fn residual(m: &UlamMatrix, f: &[f64], scratch: &mut [f64]) -> f64 {
    m.apply_into(f, scratch);
    l1_cells(scratch, f)
}

/// Fixed density of `f ↦ f·M`, normalized to unit mass.
pub fn stationary_density(m: &UlamMatrix, opts: SolverOptions) -> Result<SolveReport, SolveError> {
    if !(opts.tol > 0.0) {
        return Err(SolveError::InvalidTolerance(opts.tol));
    }
    let (values, iterations, residual_l1, averaged) = match opts.method {
        Method::PowerCesaro => power_cesaro(m, opts.tol, opts.max_iter)?,
        Method::DirectNullspace => direct_nullspace(m, opts.tol)?,
    };
    let density = DensityVector::new(values)?;
    let monotonicity_defect = density.monotonicity_defect();
    Ok(SolveReport { density, iterations, residual_l1, method: opts.method, averaged, monotonicity_defect })
}

fn power_cesaro(m: &UlamMatrix, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64, bool), SolveError> {
    let k = m.k();
    let mut f = vec![1.0; k];
    let mut next = vec![0.0; k];
    let mut mean = vec![0.0; k];
    let mut scratch = vec![0.0; k];

    let r0 = residual(m, &f, &mut scratch);
    if r0 < tol {
        return Ok((f, 0, r0, false));
    }
    let mut last_step = f64::INFINITY;
    for s in 1..=max_iter {
        m.apply_into(&f, &mut next);
        normalize(&mut next);
        let step = l1_cells(&next, &f);
        std::mem::swap(&mut f, &mut next);

        let w = 1.0 / s as f64;
        let mut mean_step = 0.0;
        for (a, &x) in mean.iter_mut().zip(&f) {
            let d = (x - *a) * w;
            *a += d;
            mean_step += d.abs();
        }
        mean_step /= k as f64;

        // ‖f·M − f‖₁ ≤ step for the new iterate since M is an L¹ contraction,
        // but check it directly before accepting.
        if step < tol {
            let r = residual(m, &f, &mut scratch);
            if r < tol {
                return Ok((f, s, r, false));
            }
        }
        if s > 1 && (mean_step < tol || s % 64 == 0) {
            let r = residual(m, &mean, &mut scratch);
            if r < tol {
                normalize(&mut mean);
                let r = residual(m, &mean, &mut scratch);
                return Ok((mean, s, r, true));
            }
        }
        last_step = step;
    }
    let r = residual(m, &f, &mut scratch).min(last_step);
    Err(SolveError::NoConvergence { max_iter, residual: r })
}

fn direct_nullspace(m: &UlamMatrix, tol: f64) -> Result<(Vec<f64>, usize, f64, bool), SolveError> {
    let k = m.k();
    // Row j of A is the j-th equation Σ_i f_i M[i][j] − f_j = 0. The columns
    // of Mᵀ − I sum to zero, so the last equation is redundant and is replaced
    // by the mass constraint Σ f_i / k = 1.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, j, v) in m.triplets() {
        a[(j, i)] += v;
    }
    for j in 0..k {
        a[(j, j)] -= 1.0;
    }
    for i in 0..k {
        a[(k - 1, i)] = 1.0 / k as f64;
    }
    let mut rhs = DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;

    let lu = a.clone().lu();
    let mut f = lu.solve(&rhs).ok_or(SolveError::SingularSystem)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::SingularSystem);
    }
    // One step of iterative refinement.
    let r = &rhs - &a * &f;
    if let Some(delta) = lu.solve(&r) {
        f += delta;
    }
    let mut values: Vec<f64> = f.iter().copied().collect();
    if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err(SolveError::NegativeDensity { cell, value });
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    normalize(&mut values);
    let mut scratch = vec![0.0; k];
    let res = residual(m, &values, &mut scratch);
    Ok((values, 1, res, false))
}
