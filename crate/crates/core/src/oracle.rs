//! Orbit histograms as an independent estimate of the invariant density.
//!
//! Long orbits of an exact map equidistribute with respect to its ACIM, so the
//! fraction of time spent in each cell estimates the cell average of the
//! density. This is a statistical cross-check of the Ulam pipeline and shares
//! nothing with it beyond `MapSpec::eval`.
//!
//! Floating-point orbits of expanding maps lose a bit or more per step and
//! can collapse onto a fixed point (`2x mod 1` reaches 0 within ~55 steps).
//! Each step therefore adds a uniform perturbation of half-width `jitter`
//! before the next evaluation. A step that lands exactly on its own input,
//! leaves the domain, or falls below the map's resolution floor is an
//! anomaly: the orbit restarts from a fresh uniform point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::map::MapSpec;
use crate::ulam::{DensityVector, PartitionGrid, UlamError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("orbit degenerated: {anomalies} of {steps} steps were restarts")]
    DegenerateOrbit { anomalies: u64, steps: u64 },
    #[error("need more steps ({steps}) than burn-in ({burn_in}) for every start")]
    InsufficientSteps { steps: u64, burn_in: u64 },
    #[error(transparent)]
    Ulam(#[from] UlamError),
}

/// Occupation counts of one or more orbits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitHistogram {
    pub k: usize,
    pub counts: Vec<u64>,
    /// Discarded leading steps, summed over starts.
    pub burn_in: u64,
    /// All steps taken, summed over starts.
    pub total_steps: u64,
    pub seed: u64,
    pub anomalies: u64,
}

impl OrbitHistogram {
    fn empty(k: usize, seed: u64) -> Self {
        Self { k, counts: vec![0; k], burn_in: 0, total_steps: 0, seed, anomalies: 0 }
    }

    /// Adds another histogram on the same grid. Associative and commutative.
    pub fn merge(mut self, other: &OrbitHistogram) -> Self {
        debug_assert_eq!(self.k, other.k);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.burn_in += other.burn_in;
        self.total_steps += other.total_steps;
        self.anomalies += other.anomalies;
        self
    }

    pub fn recorded(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `count_i · k / recorded`.
    pub fn density(&self) -> Result<DensityVector, UlamError> {
        let scale = self.k as f64 / self.recorded().max(1) as f64;
        DensityVector::new(self.counts.iter().map(|&c| c as f64 * scale).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Starting point shared by all starts; drawn from the seed when absent.
    pub x0: Option<f64>,
    pub starts: usize,
    pub jitter: f64,
    /// Largest tolerated fraction of restarts.
    pub max_anomaly_rate: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            steps: 10_000_000,
            burn_in: 1000,
            seed: 0,
            x0: None,
            starts: 8,
            jitter: 1e-12,
            max_anomaly_rate: 0.01,
        }
    }
}

fn run_start(map: &MapSpec, grid: PartitionGrid, steps: u64, opts: &OrbitOptions, stream: u64) -> OrbitHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let mut hist = OrbitHistogram::empty(grid.k(), opts.seed);
    let mut x = opts.x0.unwrap_or_else(|| rng.random::<f64>());
    for step in 0..steps {
        let next = match map.eval(x) {
            Ok(y) if y.is_finite() && y != x => {
                let perturbed = y + opts.jitter * (rng.random::<f64>() - 0.5);
                if (0.0..=1.0).contains(&perturbed) { perturbed } else { y }
            }
            _ => {
                hist.anomalies += 1;
                rng.random::<f64>()
            }
        };
        x = next;
        if step >= opts.burn_in {
            hist.counts[grid.locate(x)] += 1;
        }
    }
    hist.total_steps = steps;
    hist.burn_in = opts.burn_in.min(steps);
    hist
}

/// Histogram of `opts.starts` independent orbits, run in parallel and merged
/// in start order.
pub fn orbit_histogram(map: &MapSpec, k: usize, opts: &OrbitOptions) -> Result<OrbitHistogram, OracleError> {
    let grid = PartitionGrid::new(k)?;
    let starts = opts.starts.max(1) as u64;
    let per_start = opts.steps / starts;
    let extra = opts.steps % starts;
    if per_start + u64::from(extra > 0) <= opts.burn_in || per_start <= opts.burn_in {
        return Err(OracleError::InsufficientSteps { steps: per_start, burn_in: opts.burn_in });
    }
    let parts: Vec<OrbitHistogram> = (0..starts)
        .into_par_iter()
        .map(|s| run_start(map, grid, per_start + u64::from(s < extra), opts, s))
        .collect();
    let hist = parts.iter().fold(OrbitHistogram::empty(k, opts.seed), |acc, h| acc.merge(h));
    if hist.anomalies as f64 > opts.max_anomaly_rate * hist.total_steps as f64 {
        return Err(OracleError::DegenerateOrbit { anomalies: hist.anomalies, steps: hist.total_steps });
    }
    Ok(hist)
}

/// Orbit-histogram estimate of the invariant density on `k` cells.
pub fn birkhoff_density(map: &MapSpec, k: usize, opts: &OrbitOptions) -> Result<DensityVector, OracleError> {
    Ok(orbit_histogram(map, k, opts)?.density()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{l1_vs_exact, ExactDensity};
    use crate::catalog;
    use crate::truncation::truncate;

    fn opts(steps: u64, seed: u64) -> OrbitOptions {
        OrbitOptions { steps, seed, ..OrbitOptions::default() }
    }

    #[test]
    fn doubling_map_is_uniform() {
        let d = birkhoff_density(&catalog::doubling(), 10, &opts(1_000_000, 1)).unwrap();
        for v in d.values() {
            assert!((v - 1.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn identity_degenerates() {
        let err = birkhoff_density(&catalog::identity(), 10, &opts(100_000, 1)).unwrap_err();
        assert!(matches!(err, OracleError::DegenerateOrbit { .. }));
    }

    #[test]
    fn reproducible_and_counted() {
        let map = truncate(&catalog::example2(40), 6).unwrap().into_spec();
        let o = OrbitOptions { steps: 200_003, burn_in: 100, seed: 42, ..OrbitOptions::default() };
        let a = orbit_histogram(&map, 32, &o).unwrap();
        let b = orbit_histogram(&map, 32, &o).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.recorded(), a.total_steps - a.burn_in);
        assert_eq!(a.total_steps, 200_003);
        let c = orbit_histogram(&map, 32, &OrbitOptions { seed: 43, ..o }).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn merge_is_order_independent() {
        let map = catalog::doubling();
        let grid = PartitionGrid::new(8).unwrap();
        let o = opts(10_000, 3);
        let parts: Vec<_> = (0..3).map(|s| run_start(&map, grid, 5000, &o, s)).collect();
        let fwd = parts.iter().fold(OrbitHistogram::empty(8, 3), |a, h| a.merge(h));
        let rev = parts.iter().rev().fold(OrbitHistogram::empty(8, 3), |a, h| a.merge(h));
        assert_eq!(fwd, rev);
    }

    #[test]
    fn example1_truncation_close_to_exact_density() {
        let map = truncate(&catalog::example1(40), 12).unwrap().into_spec();
        let d = birkhoff_density(&map, 100, &opts(10_000_000, 5)).unwrap();
        let err = l1_vs_exact(&d, &ExactDensity::affine(2.0, -2.0), 1e-10).unwrap();
        assert!(err <= 0.13, "{err}");
    }

    #[test]
    fn burn_in_must_be_shorter_than_run() {
        let o = OrbitOptions { steps: 80, burn_in: 10, starts: 8, ..OrbitOptions::default() };
        assert!(matches!(
            orbit_histogram(&catalog::doubling(), 4, &o),
            Err(OracleError::InsufficientSteps { .. })
        ));
    }
}
