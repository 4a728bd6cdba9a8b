//! Finite-branch approximations of countable maps.
//!
//! The `n`-th truncation keeps branches `1..=n` of the base map on `[a_n, 1]`
//! and replaces everything left of `a_n` by the full linear branch `x / a_n`.

use crate::map::{ly_constants, Branch, LyConstants, MapClass, MapError, MapSpec};

/// The `n`-th finite-branch approximation of a countable map.
#[derive(Debug, Clone)]
pub struct TruncatedMap {
    base: MapSpec,
    n: usize,
    a_n: f64,
    spec: MapSpec,
}

impl TruncatedMap {
    pub fn base(&self) -> &MapSpec {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a_n(&self) -> f64 {
        self.a_n
    }

    /// Slope `1/a_n` of the linear filler.
    pub fn filler_slope(&self) -> f64 {
        1.0 / self.a_n
    }

    /// The truncated map itself (`n + 1` branches).
    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn into_spec(self) -> MapSpec {
        self.spec
    }

    /// The linear branch on `[0, a_n)`.
    pub fn filler(&self) -> Branch {
        self.spec.branch(self.n + 1).expect("filler is the last branch")
    }

    /// Lasota–Yorke constants of the base map evaluated at this `n`.
    pub fn ly_constants(&self, tail_index: usize) -> Result<LyConstants, MapError> {
        ly_constants(&self.base, self.n, tail_index)
    }
}

fn check_index(base: &MapSpec, n: usize) -> Result<f64, MapError> {
    if base.class() != MapClass::CountableAccumulatingAtZero {
        return Err(MapError::NotCountable);
    }
    let limit = base.materialized();
    if n == 0 || n > limit {
        return Err(MapError::IndexOutOfRange { n, limit });
    }
    let a_n = base.partition_point(n);
    if !(a_n > 0.0 && a_n < 1.0) {
        return Err(MapError::InvalidPartition(format!("a_{n} = {a_n} is not in (0, 1)")));
    }
    Ok(a_n)
}

/// Builds the truncation `τ_n`: the base map on `[a_n, 1]`, `x / a_n` on `[0, a_n)`.
pub fn truncate(base: &MapSpec, n: usize) -> Result<TruncatedMap, MapError> {
    let a_n = check_index(base, n)?;
    let mut branches: Vec<Branch> = (1..=n).map(|i| base.branch(i).expect("countable family")).collect();
    branches.push(Branch::full_linear(0.0, a_n)?);
    let spec = MapSpec::finite(format!("{}[n={n}]", base.name()), branches)?;
    Ok(TruncatedMap { base: base.clone(), n, a_n, spec })
}

/// Measure `a_n` of the set on which `τ_n` may differ from `τ`.
///
/// Indices past the materialized branches fail with
/// [`MapError::BelowResolutionFloor`], carrying the value of `a_n`.
pub fn almost_uniform_gap(base: &MapSpec, n: usize) -> Result<f64, MapError> {
    match check_index(base, n) {
        Err(MapError::IndexOutOfRange { n, .. }) if n > 0 => {
            let value = base.partition_point(n);
            Err(MapError::BelowResolutionFloor { x: value, floor: base.floor() })
        }
        other => other,
    }
}
