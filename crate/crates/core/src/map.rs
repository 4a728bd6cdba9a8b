//! Piecewise convex interval maps.
//!
//! A map is described by a strictly decreasing partition `1 = a_0 > a_1 > ...`
//! and one increasing convex branch per interval `[a_i, a_{i-1})`, with the
//! point `1` assigned to branch `1`. Finite maps end their partition at `0`;
//! countable maps generate branches lazily from an index rule and accumulate
//! at `0`, resolved down to a floor below which evaluation is refused.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Shared real function used for branch formulas.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

type IndexFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
type FamilyFn = Arc<dyn Fn(usize) -> Branch + Send + Sync>;

/// Default lower bound on the partition points a countable map resolves.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Default number of sampled secants per branch in [`validate`].
pub const DEFAULT_SAMPLES_PER_BRANCH: usize = 64;

/// Default truncation index of the infinite derivative sums.
pub const DEFAULT_TAIL_INDEX: usize = 1_000_000;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("point {x} lies outside [0, 1]")]
    OutOfDomain { x: f64 },
    #[error("point {x} lies below the resolution floor {floor}")]
    BelowResolutionFloor { x: f64, floor: f64 },
    #[error("value {y} is outside the branch image [{lo}, {hi}]")]
    NotInImage { y: f64, lo: f64, hi: f64 },
    #[error("branch domain [{left}, {right}) is not a non-empty subinterval of [0, 1]")]
    InvalidBranch { left: f64, right: f64 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("a_n + D1 = {value} is not below 1")]
    NotContracting { value: f64 },
    #[error("no branch condition holds: {0}")]
    Inadmissible(String),
    #[error("branch index {n} exceeds the {limit} materialized branches")]
    IndexOutOfRange { n: usize, limit: usize },
    #[error("operation requires a countable map")]
    NotCountable,
}

/// One monotone convex piece of a map, defined on `[left, right)`.
///
/// `forward` must extend continuously to `right` so that the branch image
/// `[forward(left), forward(right)]` is well defined.
#[derive(Clone)]
pub struct Branch {
    left: f64,
    right: f64,
    forward: RealFn,
    derivative: RealFn,
    inverse: Option<RealFn>,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Branch")
            .field("left", &self.left)
            .field("right", &self.right)
            .field("closed_form_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl Branch {
    pub fn new(left: f64, right: f64, forward: RealFn, derivative: RealFn) -> Result<Self, MapError> {
        if !(0.0..=1.0).contains(&left) || !(0.0..=1.0).contains(&right) || left >= right {
            return Err(MapError::InvalidBranch { left, right });
        }
        Ok(Self { left, right, forward, derivative, inverse: None })
    }

    /// Affine branch vanishing at `left` and reaching `1` at `right`.
    pub fn full_linear(left: f64, right: f64) -> Result<Self, MapError> {
        let slope = 1.0 / (right - left);
        let branch = Self::new(
            left,
            right,
            Arc::new(move |x| (x - left) * slope),
            Arc::new(move |_| slope),
        )?;
        Ok(branch.with_inverse(Arc::new(move |y| left + y / slope)))
    }

    pub fn with_inverse(mut self, inverse: RealFn) -> Self {
        self.inverse = Some(inverse);
        self
    }

    /// Drops the closed-form inverse so inversion falls back to bisection.
    pub fn without_inverse(mut self) -> Self {
        self.inverse = None;
        self
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn has_closed_form_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    /// Image `[forward(left), forward(right)]`.
    pub fn image(&self) -> (f64, f64) {
        (self.forward(self.left), self.forward(self.right))
    }

    /// Solves `forward(x) = y` on the branch; see [`branch_inverse`].
    pub fn inverse(&self, y: f64, tol: f64) -> Result<f64, MapError> {
        branch_inverse(self, y, tol)
    }
}

/// Solves `branch.forward(x) = y` for `x` in `[left, right]`.
///
/// Uses the closed-form inverse when the branch has one. Otherwise bisects the
/// monotone bracket until the residual is within `tol` and the bracket is at
/// most `tol` wide, then polishes with Newton steps that stay inside the
/// bracket when the derivative is usable.
pub fn branch_inverse(branch: &Branch, y: f64, tol: f64) -> Result<f64, MapError> {
    let (lo, hi) = branch.image();
    let slack = tol.max(4.0 * f64::EPSILON);
    if !(y >= lo - slack && y <= hi + slack) {
        return Err(MapError::NotInImage { y, lo, hi });
    }
    if let Some(inv) = &branch.inverse {
        return Ok(inv(y).clamp(branch.left, branch.right));
    }
    if y <= lo {
        return Ok(branch.left);
    }
    if y >= hi {
        return Ok(branch.right);
    }

    let (mut a, mut b) = (branch.left, branch.right);
    let mut mid = 0.5 * (a + b);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (a + b);
        let g = branch.forward(mid) - y;
        if (g.abs() <= tol && b - a <= tol) || mid <= a || mid >= b {
            break;
        }
        if g < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }

    // Newton polish inside [a, b]; bisection remains the baseline answer.
    let mut x = mid;
    let mut residual = (branch.forward(x) - y).abs();
    for _ in 0..4 {
        let d = branch.derivative(x);
        if !(d.is_finite() && d > 1e-8) {
            break;
        }
        let candidate = x - (branch.forward(x) - y) / d;
        if !(candidate >= a && candidate <= b) {
            break;
        }
        let r = (branch.forward(candidate) - y).abs();
        if r >= residual {
            break;
        }
        x = candidate;
        residual = r;
    }
    Ok(x)
}

/// Whether a map has finitely many branches or accumulates at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MapClass {
    FiniteBranches,
    CountableAccumulatingAtZero,
}

/// How deep a countable map is materialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    /// Exactly this many branches.
    Branches(usize),
    /// Every branch whose left endpoint is at least this value.
    Floor(f64),
    /// Every leading branch at least this wide.
    WidthFloor(f64),
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::Floor(DEFAULT_FLOOR)
    }
}

#[derive(Clone)]
struct Countable {
    partition: IndexFn,
    family: FamilyFn,
    limit: usize,
}

#[derive(Clone)]
enum Kind {
    /// `points[i]` is `a_i`; `points.len() == branches.len() + 1`, last point 0.
    Finite { points: Vec<f64>, branches: Vec<Branch> },
    Countable(Countable),
}

/// A piecewise convex map of `[0, 1]` into itself.
#[derive(Clone)]
pub struct MapSpec {
    name: String,
    kind: Kind,
}

impl fmt::Debug for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("MapSpec");
        d.field("name", &self.name).field("class", &self.class());
        match &self.kind {
            Kind::Finite { branches, .. } => d.field("branches", &branches.len()),
            Kind::Countable(c) => d.field("materialized", &c.limit),
        };
        d.finish()
    }
}

impl MapSpec {
    /// Builds a finite-branch map. Branches may be given in any order but must
    /// tile `[0, 1]` without gaps or overlaps.
    pub fn finite(name: impl Into<String>, mut branches: Vec<Branch>) -> Result<Self, MapError> {
        if branches.is_empty() {
            return Err(MapError::InvalidPartition("no branches".into()));
        }
        branches.sort_by(|a, b| b.left.total_cmp(&a.left));
        if branches[0].right != 1.0 {
            return Err(MapError::InvalidPartition(format!(
                "rightmost branch ends at {} instead of 1",
                branches[0].right
            )));
        }
        for pair in branches.windows(2) {
            if pair[1].right != pair[0].left {
                return Err(MapError::InvalidPartition(format!(
                    "branches [{}, {}) and [{}, {}) do not abut",
                    pair[1].left, pair[1].right, pair[0].left, pair[0].right
                )));
            }
        }
        let last = branches.last().expect("non-empty");
        if last.left != 0.0 {
            return Err(MapError::InvalidPartition(format!(
                "leftmost branch starts at {} instead of 0",
                last.left
            )));
        }
        let mut points = Vec::with_capacity(branches.len() + 1);
        points.push(1.0);
        points.extend(branches.iter().map(|b| b.left));
        Ok(Self { name: name.into(), kind: Kind::Finite { points, branches } })
    }

    /// Builds a countable map from a partition rule `i ↦ a_i` (with `a_0 = 1`,
    /// strictly decreasing to 0) and a branch family `i ↦ branch on [a_i, a_{i-1})`.
    pub fn countable<P, F>(
        name: impl Into<String>,
        partition: P,
        family: F,
        resolution: Resolution,
    ) -> Result<Self, MapError>
    where
        P: Fn(usize) -> f64 + Send + Sync + 'static,
        F: Fn(usize) -> Branch + Send + Sync + 'static,
    {
        let partition: IndexFn = Arc::new(partition);
        let family: FamilyFn = Arc::new(family);
        let a0 = partition(0);
        if (a0 - 1.0).abs() > 1e-12 {
            return Err(MapError::InvalidPartition(format!("a_0 = {a0}, expected 1")));
        }
        for i in 1..=8 {
            let (prev, cur) = (partition(i - 1), partition(i));
            if !(cur < prev && cur > 0.0) {
                return Err(MapError::InvalidPartition(format!(
                    "a_{i} = {cur} does not decrease from a_{} = {prev}",
                    i - 1
                )));
            }
        }
        let limit = materialized_limit(&*partition, resolution)?;
        Ok(Self {
            name: name.into(),
            kind: Kind::Countable(Countable { partition, family, limit }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn class(&self) -> MapClass {
        match self.kind {
            Kind::Finite { .. } => MapClass::FiniteBranches,
            Kind::Countable(_) => MapClass::CountableAccumulatingAtZero,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, Kind::Finite { .. })
    }

    /// Number of branches that can be evaluated: all of them for finite maps,
    /// the materialized prefix for countable maps.
    pub fn materialized(&self) -> usize {
        match &self.kind {
            Kind::Finite { branches, .. } => branches.len(),
            Kind::Countable(c) => c.limit,
        }
    }

    /// Smallest point `eval` accepts.
    pub fn floor(&self) -> f64 {
        match &self.kind {
            Kind::Finite { .. } => 0.0,
            Kind::Countable(c) => (c.partition)(c.limit),
        }
    }

    /// Partition point `a_i`. Finite maps return 0 beyond their last branch.
    pub fn partition_point(&self, i: usize) -> f64 {
        match &self.kind {
            Kind::Finite { points, .. } => points.get(i).copied().unwrap_or(0.0),
            Kind::Countable(c) => (c.partition)(i),
        }
    }

    /// Branch `i ≥ 1` on `[a_i, a_{i-1})`. Countable maps generate any index,
    /// including ones beyond the materialized prefix.
    pub fn branch(&self, i: usize) -> Option<Branch> {
        if i == 0 {
            return None;
        }
        match &self.kind {
            Kind::Finite { branches, .. } => branches.get(i - 1).cloned(),
            Kind::Countable(c) => Some((c.family)(i)),
        }
    }

    /// Branches of a finite map, ordered from the right end of the interval.
    pub fn branches(&self) -> Option<&[Branch]> {
        match &self.kind {
            Kind::Finite { branches, .. } => Some(branches),
            Kind::Countable(_) => None,
        }
    }

    /// Index `i` of the branch whose domain contains `x`.
    pub fn branch_index(&self, x: f64) -> Result<usize, MapError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(MapError::OutOfDomain { x });
        }
        match &self.kind {
            Kind::Finite { points, .. } => {
                // points[1..] is decreasing; first i with a_i <= x.
                let pos = points[1..].partition_point(|&a| a > x);
                Ok(pos + 1)
            }
            Kind::Countable(c) => {
                let floor = (c.partition)(c.limit);
                if x < floor {
                    return Err(MapError::BelowResolutionFloor { x, floor });
                }
                let (mut lo, mut hi) = (1usize, c.limit);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if (c.partition)(mid) <= x {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                Ok(lo)
            }
        }
    }

    /// Evaluates the map at `x`.
    pub fn eval(&self, x: f64) -> Result<f64, MapError> {
        let i = self.branch_index(x)?;
        Ok(match &self.kind {
            Kind::Finite { branches, .. } => branches[i - 1].forward(x),
            Kind::Countable(c) => (c.family)(i).forward(x),
        })
    }

    /// Derivative at the left endpoint of branch `i`, i.e. `τ'(a_i)`.
    pub fn slope_at_partition_point(&self, i: usize) -> Option<f64> {
        self.branch(i).map(|b| b.derivative(b.left()))
    }
}

fn materialized_limit(partition: &(dyn Fn(usize) -> f64 + Send + Sync), resolution: Resolution) -> Result<usize, MapError> {
    const MAX_INDEX: usize = 1 << 52;
    let holds: Box<dyn Fn(usize) -> bool + '_> = match resolution {
        Resolution::Branches(n) => {
            if n == 0 {
                return Err(MapError::InvalidPartition("zero branches requested".into()));
            }
            return Ok(n);
        }
        Resolution::Floor(floor) => {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(MapError::InvalidPartition(format!("floor {floor} not in (0, 1)")));
            }
            Box::new(move |i| partition(i) >= floor)
        }
        Resolution::WidthFloor(w) => {
            if !(w > 0.0 && w < 1.0) {
                return Err(MapError::InvalidPartition(format!("width floor {w} not in (0, 1)")));
            }
            Box::new(move |i| partition(i - 1) - partition(i) >= w)
        }
    };
    if !holds(1) {
        return Err(MapError::InvalidPartition("resolution excludes the first branch".into()));
    }
    // Exponential search for a failing index, then bisect the last passing one.
    let mut hi = 2usize;
    while holds(hi) {
        if hi >= MAX_INDEX {
            return Ok(MAX_INDEX);
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Sampled checks for one branch.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BranchCheck {
    pub index: usize,
    pub left: f64,
    pub right: f64,
    pub increasing: bool,
    pub convex: bool,
    pub zero_at_left: bool,
    pub positive_slope_at_left: bool,
}

impl BranchCheck {
    pub fn passed(&self) -> bool {
        self.increasing && self.convex && self.zero_at_left && self.positive_slope_at_left
    }
}

/// Outcome of [`validate`]. Failures are recorded, never raised.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub map: String,
    pub class: MapClass,
    pub branches: Vec<BranchCheck>,
    /// Partial sum of `1/τ'(a_i)` over `i ≤ tail_index`.
    pub slope_sum: f64,
    /// Smallest `N ≥ 1` whose tail sum is below 1, if any.
    pub cutoff: Option<usize>,
    /// Tail sum `Σ_{i>N} 1/τ'(a_i)` at that cutoff.
    pub d1: Option<f64>,
    pub tail_index: usize,
    pub admissible: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &BranchCheck> {
        self.branches.iter().filter(|b| !b.passed())
    }
}

/// Checks a map against the class conditions by sampling.
///
/// Each materialized branch (at most `tail_index` of them) gets
/// `samples_per_branch` secants: all must be positive and their slopes
/// non-decreasing up to `tol`. The branch must vanish at its left end with a
/// positive derivative there. The reciprocal slopes at the partition points
/// are summed up to `tail_index` and the first cutoff `N` with tail below 1
/// is reported.
pub fn validate(map: &MapSpec, samples_per_branch: usize, tail_index: usize, tol: f64) -> ValidationReport {
    let samples = samples_per_branch.max(3);
    let checked = map.materialized().min(tail_index.max(1));
    let branches: Vec<BranchCheck> = (1..=checked)
        .map(|i| check_branch(i, &map.branch(i).expect("materialized"), samples, tol))
        .collect();

    let terms = reciprocal_slopes(map, tail_index);
    let slope_sum: f64 = terms.iter().sum::<f64>() + 0.0;
    // With no reciprocal slopes to sum the tail condition holds vacuously.
    let (mut cutoff, mut d1) = if terms.is_empty() { (Some(0), Some(0.0)) } else { (None, None) };
    let mut tail = slope_sum;
    for (n, term) in terms.iter().enumerate() {
        tail -= term;
        if tail < 1.0 {
            cutoff = Some(n + 1);
            d1 = Some(tail.max(0.0));
            break;
        }
    }
    let all_finite = terms.iter().all(|t| t.is_finite());
    let admissible = branches.iter().all(BranchCheck::passed) && cutoff.is_some() && all_finite;
    ValidationReport {
        map: map.name().to_string(),
        class: map.class(),
        branches,
        slope_sum,
        cutoff,
        d1,
        tail_index,
        admissible,
    }
}

fn check_branch(index: usize, b: &Branch, samples: usize, tol: f64) -> BranchCheck {
    let h = b.width() / samples as f64;
    let values: Vec<f64> = (0..=samples)
        .map(|s| b.forward(if s == samples { b.right() } else { b.left() + s as f64 * h }))
        .collect();
    let slopes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let increasing = slopes.iter().all(|&s| s > 0.0);
    let convex = slopes
        .windows(2)
        .all(|w| w[1].is_finite() && w[1] >= w[0] - tol * w[0].abs().max(1.0));
    let d0 = b.derivative(b.left());
    BranchCheck {
        index,
        left: b.left(),
        right: b.right(),
        increasing,
        convex,
        zero_at_left: values[0].abs() <= tol,
        positive_slope_at_left: d0 > 0.0,
    }
}

/// `1/τ'(a_i)` for `i = 1..=tail_index`, skipping a finite map's branch at 0.
fn reciprocal_slopes(map: &MapSpec, tail_index: usize) -> Vec<f64> {
    let last = match map.class() {
        MapClass::FiniteBranches => map.materialized().saturating_sub(1).min(tail_index),
        MapClass::CountableAccumulatingAtZero => tail_index,
    };
    (1..=last)
        .map(|i| 1.0 / map.slope_at_partition_point(i).expect("branch exists"))
        .collect()
}

/// Lasota–Yorke constants of a map together with the uniform sup bound.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LyConstants {
    /// Cutoff `N`.
    pub cutoff: usize,
    /// Truncation index `n` the bound refers to.
    pub n: usize,
    pub a_n: f64,
    /// `Σ_{i>N} 1/τ'(a_i)`.
    pub d1: f64,
    /// `Σ_{i≥1} 1/τ'(a_i)`.
    pub c: f64,
    /// `Σ_{i≤N} 1/(a_i τ'(a_i))`.
    pub d: f64,
    /// `a_n + D1`, the contraction factor of the sup-norm inequality.
    pub contraction: f64,
    /// `D / (1 - (a_n + D1))`.
    pub sup_bound: f64,
    pub tail_index: usize,
    /// Last summed term, a rough indicator of the omitted tail.
    pub tail_estimate: f64,
}

/// Constants of the sup-norm inequality `‖P f‖∞ ≤ (a_n + D1)‖f‖∞ + D‖f‖₁`
/// for the `n`-th truncation of `map`.
///
/// `N` is the smallest cutoff in `1..=n` with `a_n + D1 < 1`; the infinite
/// sums are truncated at `tail_index`.
pub fn ly_constants(map: &MapSpec, n: usize, tail_index: usize) -> Result<LyConstants, MapError> {
    let a_n = map.partition_point(n);
    let terms = reciprocal_slopes(map, tail_index);
    if let Some(bad) = terms.iter().position(|t| !t.is_finite() || *t < 0.0) {
        return Err(MapError::Inadmissible(format!(
            "derivative at partition point a_{} is not positive and finite",
            bad + 1
        )));
    }
    let c: f64 = terms.iter().sum();
    let mut tail = c;
    let mut d = 0.0;
    let mut best_contraction = a_n + c;
    for cutoff in 1..=n.min(terms.len().max(1)) {
        let term = terms.get(cutoff - 1).copied().unwrap_or(0.0);
        tail -= term;
        d += term / map.partition_point(cutoff);
        let d1 = tail.max(0.0);
        let contraction = a_n + d1;
        best_contraction = best_contraction.min(contraction);
        if contraction < 1.0 {
            return Ok(LyConstants {
                cutoff,
                n,
                a_n,
                d1,
                c,
                d,
                contraction,
                sup_bound: d / (1.0 - contraction),
                tail_index,
                tail_estimate: terms.last().copied().unwrap_or(0.0),
            });
        }
    }
    Err(MapError::NotContracting { value: best_contraction })
}
