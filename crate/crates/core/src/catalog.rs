//! Example maps with closed-form branches.
//!
//! * `example1`: the conjugate `h⁻¹ ∘ T ∘ h` of the piecewise linear map
//!   `T(x) = i(i+1)(x - 1/(i+1))` on `[1/(i+1), 1/i]` under
//!   `h(x) = 1 - (1-x)²`. Its invariant density is `2(1-x)`.
//! * `example2`: the Möbius family `1/((2i+1)/(i(i+1)) - x) - i` on
//!   `[1/(i+1), 1/i]`. No closed-form density is known.
//! * `identity` and `doubling`: toy finite maps for unit tests.

use std::sync::Arc;

use crate::analysis::ExactDensity;
use crate::map::{Branch, MapSpec, Resolution};

/// Definition file reproducing [`example1`] in the map-file format.
pub const EXAMPLE1_DEFINITION: &str = include_str!("../maps/example1.map");
/// Definition file reproducing [`example2`] in the map-file format.
pub const EXAMPLE2_DEFINITION: &str = include_str!("../maps/example2.map");

/// Partition point `a_i = 1 - √(i/(i+1))` of example 1.
pub fn example1_partition(i: usize) -> f64 {
    let i = i as f64;
    1.0 - (i / (i + 1.0)).sqrt()
}

/// Branch `i ≥ 1` of example 1.
pub fn example1_branch(i: usize) -> Branch {
    let left = example1_partition(i);
    let right = example1_partition(i - 1);
    let fi = i as f64;
    let p = fi * (fi + 1.0);
    let inner = move |x: f64| (1.0 - fi * fi + p * ((1.0 - x) * (1.0 - x))).max(0.0);
    let forward = Arc::new(move |x: f64| 1.0 - inner(x).sqrt());
    let derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync> = if i == 1 {
        // τ₁(x) = 1 - √2 (1 - x)
        Arc::new(|_| std::f64::consts::SQRT_2)
    } else {
        Arc::new(move |x: f64| p * (1.0 - x) / inner(x).sqrt())
    };
    let inverse = Arc::new(move |y: f64| {
        let s = ((1.0 - y) * (1.0 - y) - 1.0 + fi * fi) / p;
        1.0 - s.max(0.0).sqrt()
    });
    Branch::new(left, right, forward, derivative)
        .expect("example 1 partition is valid")
        .with_inverse(inverse)
}

/// Example 1 materialized to `n_branches` branches.
pub fn example1(n_branches: usize) -> MapSpec {
    MapSpec::countable("example1", example1_partition, example1_branch, Resolution::Branches(n_branches.max(1)))
        .expect("example 1 is well formed")
}

/// Invariant density `2(1-x)` of example 1.
pub fn example1_density() -> ExactDensity {
    ExactDensity::affine(2.0, -2.0)
}

/// Partition point `a_i = 1/(i+1)` of example 2.
pub fn example2_partition(i: usize) -> f64 {
    1.0 / (i as f64 + 1.0)
}

/// Branch `i ≥ 1` of example 2.
pub fn example2_branch(i: usize) -> Branch {
    let left = example2_partition(i);
    let right = example2_partition(i - 1);
    let fi = i as f64;
    let pole = (2.0 * fi + 1.0) / (fi * (fi + 1.0));
    Branch::new(
        left,
        right,
        Arc::new(move |x: f64| 1.0 / (pole - x) - fi),
        Arc::new(move |x: f64| {
            let d = pole - x;
            1.0 / (d * d)
        }),
    )
    .expect("example 2 partition is valid")
    .with_inverse(Arc::new(move |y: f64| pole - 1.0 / (y + fi)))
}

/// Example 2 materialized to `n_branches` branches.
pub fn example2(n_branches: usize) -> MapSpec {
    MapSpec::countable("example2", example2_partition, example2_branch, Resolution::Branches(n_branches.max(1)))
        .expect("example 2 is well formed")
}

/// Branches materialized for a run that truncates at `n`.
pub fn default_branches(n: usize) -> usize {
    (n + 5).max(40)
}

/// `τ(x) = x` on `[0, 1]`.
pub fn identity() -> MapSpec {
    let b = Branch::new(0.0, 1.0, Arc::new(|x| x), Arc::new(|_| 1.0))
        .expect("unit interval")
        .with_inverse(Arc::new(|y| y));
    MapSpec::finite("identity", vec![b]).expect("single branch tiles [0, 1]")
}

/// `τ(x) = 2x mod 1` with two full linear branches.
pub fn doubling() -> MapSpec {
    let branches = vec![
        Branch::full_linear(0.0, 0.5).expect("valid"),
        Branch::full_linear(0.5, 1.0).expect("valid"),
    ];
    MapSpec::finite("doubling", branches).expect("halves tile [0, 1]")
}

/// A named map in the catalog.
#[derive(Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    /// Builds the map; countable entries materialize the given branch count.
    pub build: fn(usize) -> MapSpec,
    pub exact_density: Option<ExactDensity>,
    pub countable: bool,
    pub notes: &'static str,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry").field("name", &self.name).field("notes", &self.notes).finish()
    }
}

/// Every shipped map.
pub fn entries() -> Vec<CatalogEntry> {
    let mut all = vec![
        CatalogEntry {
            name: "example1",
            build: example1,
            exact_density: Some(example1_density()),
            countable: true,
            notes: "conjugate of a piecewise linear map; density 2(1-x)",
        },
        CatalogEntry {
            name: "example2",
            build: example2,
            exact_density: None,
            countable: true,
            notes: "Möbius branches 1/((2i+1)/(i(i+1)) - x) - i; density unknown",
        },
    ];
    all.extend(toy_maps());
    all
}

/// Finite toy maps used by the unit tests.
pub fn toy_maps() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "identity",
            build: |_| identity(),
            exact_density: None,
            countable: false,
            notes: "every density is invariant; not ergodic",
        },
        CatalogEntry {
            name: "doubling",
            build: |_| doubling(),
            exact_density: Some(ExactDensity::affine(1.0, 0.0)),
            countable: false,
            notes: "Lebesgue measure is invariant",
        },
    ]
}

/// Looks up a catalog entry by name.
pub fn lookup(name: &str) -> Option<CatalogEntry> {
    entries().into_iter().find(|e| e.name == name)
}
