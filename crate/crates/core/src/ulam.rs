//! Ulam discretization of the transfer operator on a uniform partition.
//!
//! For a finite-branch map and `k` equal cells `J_1..J_k`, the Ulam matrix is
//!
//! ```text
//! M[i][j] = λ(τ⁻¹(J_j) ∩ J_i) / λ(J_i)
//! ```
//!
//! Densities that are constant on cells are row vectors and the discretized
//! operator acts as `f ↦ f · M`. Cell indices are zero-based in code and in
//! every exported file.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{Branch, MapError, MapSpec};
use crate::quadrature::{average, integrate_piecewise, QuadratureFailure};

/// Default root-finding tolerance for matrix assembly.
pub const DEFAULT_ASSEMBLY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UlamError {
    #[error("partition needs at least one cell, got k = {0}")]
    InvalidK(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Ulam assembly needs a finite-branch map; truncate `{0}` first")]
    CountableMap(String),
    #[error("density value {value} in cell {cell} is not finite")]
    NonFinite { cell: usize, value: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureFailure),
}

/// The uniform partition of `[0, 1]` into `k` cells `[i/k, (i+1)/k)`, the
/// last one closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionGrid {
    k: usize,
}

impl PartitionGrid {
    pub fn new(k: usize) -> Result<Self, UlamError> {
        if k == 0 {
            return Err(UlamError::InvalidK(k));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> f64 {
        1.0 / self.k as f64
    }

    /// Left boundary of cell `i` (also the right boundary of cell `i - 1`).
    #[inline]
    pub fn boundary(&self, i: usize) -> f64 {
        i as f64 / self.k as f64
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.boundary(i), self.boundary(i + 1))
    }

    /// Index of the cell containing `x`, with `x = 1` in the last cell.
    #[inline]
    pub fn locate(&self, x: f64) -> usize {
        let i = (x * self.k as f64).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.k - 1)
        }
    }

    /// Index of the cell whose closure contains `x` from the left, i.e. the
    /// last cell a half-open interval ending at `x` touches.
    #[inline]
    fn locate_left_limit(&self, x: f64) -> usize {
        let scaled = x * self.k as f64;
        let i = scaled.ceil() - 1.0;
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.k - 1)
        }
    }
}

/// A density constant on the cells of a uniform partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    values: Vec<f64>,
}

impl DensityVector {
    pub fn new(values: Vec<f64>) -> Result<Self, UlamError> {
        if values.is_empty() {
            return Err(UlamError::InvalidK(0));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(UlamError::NonFinite { cell, value });
        }
        Ok(Self { values })
    }

    pub fn uniform(k: usize) -> Result<Self, UlamError> {
        Self::new(vec![1.0; k])
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn grid(&self) -> PartitionGrid {
        PartitionGrid { k: self.k() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫ f dλ = Σ f_i / k`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.k() as f64
    }

    /// Rescales to unit mass. Zero-mass vectors are returned unchanged.
    pub fn normalized(mut self) -> Self {
        let m = self.mass();
        if m != 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
        self
    }

    /// Value of the step function at `x`.
    #[inline]
    pub fn value_at(&self, x: f64) -> f64 {
        self.values[self.grid().locate(x)]
    }

    /// `max(0, max_i (f_{i+1} - f_i))`: zero exactly when non-increasing.
    pub fn monotonicity_defect(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Options for [`ulam_matrix_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Tolerance handed to branch inversion.
    pub tol: f64,
    /// Ignore closed-form inverses and always bisect.
    pub force_bisection: bool,
    /// Divide every row by its sum after assembly.
    pub renormalize_rows: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_ASSEMBLY_TOL, force_bisection: false, renormalize_rows: false }
    }
}

/// Sparse row-major Ulam matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamMatrix {
    k: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    assembly_tol: f64,
    raw_row_defect: f64,
}

impl UlamMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// in input order.
    pub fn from_triplets(k: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self, UlamError> {
        if k == 0 {
            return Err(UlamError::InvalidK(k));
        }
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= k || *c >= k) {
            return Err(UlamError::DimensionMismatch { expected: k, found: r.max(c) + 1 });
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; k + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..k {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self { k, row_ptr, cols, vals, assembly_tol: 0.0, raw_row_defect: 0.0 };
        m.raw_row_defect = m.max_row_defect();
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn assembly_tol(&self) -> f64 {
        self.assembly_tol
    }

    /// Largest `|Σ_j M[i][j] - 1|` measured right after assembly, before any
    /// renormalization.
    pub fn raw_row_defect(&self) -> f64 {
        self.raw_row_defect
    }

    /// Non-zero entries `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(pos) => self.vals[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_row_defect(&self) -> f64 {
        self.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest number of non-zeros in any row.
    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.k).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Dense copy, `dense[i][j] = M[i][j]`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.k]; self.k];
        for (i, j, v) in self.triplets() {
            dense[i][j] = v;
        }
        dense
    }

    fn renormalize_rows(&mut self) {
        for i in 0..self.k {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            let s: f64 = self.vals[span.clone()].iter().sum();
            if s > 0.0 {
                self.vals[span].iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    /// `f · M` on raw slices; the caller guarantees `f.len() == out.len() == k`.
    pub(crate) fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &fi) in f.iter().enumerate() {
            if fi == 0.0 {
                continue;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[p]] += fi * self.vals[p];
            }
        }
    }
}

/// Assembles the Ulam matrix of a finite-branch map with default options.
pub fn ulam_matrix(map: &MapSpec, k: usize, tol: f64) -> Result<UlamMatrix, UlamError> {
    ulam_matrix_with(map, k, AssemblyOptions { tol, ..AssemblyOptions::default() })
}

/// Assembles the Ulam matrix of a finite-branch map.
///
/// Each branch is handled separately: the preimages of the target cell
/// boundaries split the branch domain into consecutive intervals, one per
/// target cell, which are then intersected with the source cells. Adjacent
/// intervals share their endpoints, so each branch distributes exactly its
/// own domain and the rows sum to one up to rounding. Branches are processed
/// in parallel and merged in branch order, so the result does not depend on
/// scheduling.
pub fn ulam_matrix_with(map: &MapSpec, k: usize, opts: AssemblyOptions) -> Result<UlamMatrix, UlamError> {
    let grid = PartitionGrid::new(k)?;
    let branches = map.branches().ok_or_else(|| UlamError::CountableMap(map.name().to_string()))?;
    let per_branch: Vec<Vec<(usize, usize, f64)>> = branches
        .par_iter()
        .map(|b| {
            let b = if opts.force_bisection { b.clone().without_inverse() } else { b.clone() };
            branch_triplets(&b, grid, opts.tol)
        })
        .collect::<Result<_, _>>()?;
    let triplets = per_branch.into_iter().flatten().collect();
    let mut m = UlamMatrix::from_triplets(k, triplets)?;
    m.assembly_tol = opts.tol;
    if opts.renormalize_rows {
        m.renormalize_rows();
    }
    Ok(m)
}

fn branch_triplets(b: &Branch, grid: PartitionGrid, tol: f64) -> Result<Vec<(usize, usize, f64)>, UlamError> {
    let k = grid.k();
    let kf = k as f64;
    let (ylo, yhi) = b.image();
    let mut out = Vec::new();
    if !(yhi > ylo) {
        return Ok(out);
    }
    let j_first = grid.locate(ylo.max(0.0));
    let j_last = grid.locate_left_limit(yhi.min(1.0)).max(j_first);
    let mut x_start = b.left();
    for j in j_first..=j_last {
        let x_end = if j == j_last {
            b.right()
        } else {
            b.inverse(grid.boundary(j + 1), tol)?.clamp(x_start, b.right())
        };
        if x_end > x_start {
            let i_first = grid.locate(x_start);
            let i_last = grid.locate_left_limit(x_end);
            for i in i_first..=i_last.max(i_first) {
                let (c0, c1) = grid.cell(i);
                let overlap = x_end.min(c1) - x_start.max(c0);
                if overlap > 0.0 {
                    out.push((i, j, overlap * kf));
                }
            }
        }
        x_start = x_end;
    }
    Ok(out)
}

/// Applies the discretized operator: returns `f · M`.
pub fn apply_operator(m: &UlamMatrix, f: &DensityVector) -> Result<DensityVector, UlamError> {
    if f.k() != m.k() {
        return Err(UlamError::DimensionMismatch { expected: m.k(), found: f.k() });
    }
    let mut out = vec![0.0; m.k()];
    m.apply_into(f.values(), &mut out);
    DensityVector::new(out)
}

/// Cell averages `k ∫_{J_i} f dλ`, each integral accurate to `quad_tol / k`.
pub fn project_q<F>(f: F, k: usize, quad_tol: f64) -> Result<DensityVector, UlamError>
where
    F: Fn(f64) -> f64 + Sync,
{
    let grid = PartitionGrid::new(k)?;
    let kf = k as f64;
    let values: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| {
            let (a, b) = grid.cell(i);
            average(&f, a, b, quad_tol / kf)
        })
        .collect::<Result<_, _>>()?;
    DensityVector::new(values)
}

/// Transfer operator of a finite-branch map applied to a step function and
/// evaluated at `x`: `Σ_b f(b⁻¹(x)) / b'(b⁻¹(x))` over branches whose image
/// contains `x`.
pub fn transfer_pointwise(map: &MapSpec, f: &DensityVector, x: f64, tol: f64) -> Result<f64, UlamError> {
    let branches = map.branches().ok_or_else(|| UlamError::CountableMap(map.name().to_string()))?;
    let mut sum = 0.0;
    for b in branches {
        let (lo, hi) = b.image();
        if x < lo || x >= hi {
            continue;
        }
        let z = b.inverse(x, tol)?;
        let d = b.derivative(z);
        if d.is_finite() && d > 0.0 {
            sum += f.value_at(z) / d;
        }
    }
    Ok(sum)
}

/// `Q(P f)` for a step function `f`, by quadrature of the pointwise transfer
/// operator. Cells are split at the images of the source cell boundaries and
/// branch endpoints, where `P f` jumps.
pub fn project_transfer(map: &MapSpec, f: &DensityVector, quad_tol: f64) -> Result<DensityVector, UlamError> {
    let branches = map.branches().ok_or_else(|| UlamError::CountableMap(map.name().to_string()))?;
    let grid = f.grid();
    let k = grid.k();
    let kf = k as f64;
    let mut breaks: Vec<f64> = Vec::new();
    for b in branches {
        let (lo, hi) = b.image();
        breaks.push(lo);
        breaks.push(hi);
        let first = grid.locate(b.left()) + 1;
        for i in first..k {
            let x = grid.boundary(i);
            if x >= b.right() {
                break;
            }
            breaks.push(b.forward(x));
        }
    }
    breaks.sort_by(f64::total_cmp);
    let inv_tol = (quad_tol * 1e-3).max(1e-15);
    let values: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|j| {
            let (a, c) = grid.cell(j);
            let lo = breaks.partition_point(|&y| y <= a);
            let hi = breaks.partition_point(|&y| y < c);
            let integrand = |x: f64| transfer_pointwise(map, f, x, inv_tol).unwrap_or(f64::NAN);
            integrate_piecewise(integrand, a, c, &breaks[lo..hi], quad_tol / kf).map(|v| v * kf)
        })
        .collect::<Result<_, _>>()?;
    DensityVector::new(values)
}
