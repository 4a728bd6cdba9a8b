//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Nodes are strictly interior, so a function that is constant on `(a, b)`
//! integrates exactly whatever its endpoint values are. Subdivision always
//! bisects the interval with the largest error estimate, which lets the
//! total error fall below tolerance even across jump discontinuities.

use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("quadrature on [{a}, {b}] reached {intervals} intervals with error {error:e} > {tol:e}")]
pub struct QuadratureFailure {
    pub a: f64,
    pub b: f64,
    pub error: f64,
    pub tol: f64,
    pub intervals: usize,
}

/// Subdivision budget per call.
pub const DEFAULT_MAX_INTERVALS: usize = 2000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Piece { a, b, value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadratureFailure> {
    integrate_with_budget(f, a, b, tol, DEFAULT_MAX_INTERVALS)
}

pub fn integrate_with_budget<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<f64, QuadratureFailure> {
    if a == b {
        return Ok(0.0);
    }
    let first = gauss_kronrod(&f, a, b);
    let mut total = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::from([first]);
    let floor = |total: f64| 64.0 * f64::EPSILON * total.abs();
    while error > tol.max(floor(total)) {
        if heap.len() >= max_intervals {
            return Err(QuadratureFailure { a, b, error, tol, intervals: heap.len() });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Cannot split further in double precision.
            return Err(QuadratureFailure { a, b, error, tol, intervals: heap.len() + 1 });
        }
        let left = gauss_kronrod(&f, worst.a, mid);
        let right = gauss_kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if error <= tol {
            // Re-sum to shed accumulated cancellation in the running totals.
            total = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Mean value of `f` on `[a, b]`, with the integral accurate to `tol`.
///
/// When the fifteen Kronrod samples of `f` on `[a, b]` are all bit-identical
/// the function is taken to be that constant and the value is returned
/// exactly. This makes cell averages of step functions exact on their
/// cells.
pub fn average<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadratureFailure> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let first = f(c);
    let constant = XGK[..7]
        .iter()
        .all(|&t| f(c - h * t) == first && f(c + h * t) == first);
    if constant {
        return Ok(first);
    }
    Ok(integrate(f, a, b, tol)? / (b - a))
}

/// Integrates over consecutive sub-intervals split at `breaks`, sharing `tol`
/// in proportion to their lengths. Breakpoints outside `(a, b)` are ignored.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64, QuadratureFailure> {
    let mut knots: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    knots.push(a);
    knots.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let width = b - a;
    knots
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], tol * (w[1] - w[0]) / width))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| 2.0 * (1.0 - x), 0.0, 0.5, 1e-14).unwrap();
        assert_abs_diff_eq!(v, 0.75, epsilon = 1e-15);
        let v = integrate(|x| x.powi(9), 0.0, 1.0, 1e-14).unwrap();
        assert_abs_diff_eq!(v, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn endpoint_values_do_not_matter() {
        let step = |x: f64| if x <= 0.0 || x >= 1.0 { 100.0 } else { 3.0 };
        assert_eq!(integrate(step, 0.0, 1.0, 1e-15).unwrap(), 3.0);
    }

    #[test]
    fn jumps_converge() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let v = integrate(step, 0.0, 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, 1.7, epsilon = 1e-10);
        let v = integrate_piecewise(step, 0.0, 1.0, &[0.3], 1e-14).unwrap();
        assert_abs_diff_eq!(v, 1.7, epsilon = 1e-14);
    }

    #[test]
    fn smooth_transcendental() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn average_of_constant_is_exact() {
        assert_eq!(average(|_| 0.1 + 0.2, 0.3, 0.7, 1e-15).unwrap(), 0.1 + 0.2);
        assert_abs_diff_eq!(average(|x| x, 0.0, 1.0, 1e-15).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: f64| if x < 1.0 / 3.0 { 0.0 } else { 1e6 };
        assert!(integrate_with_budget(f, 0.0, 1.0, 1e-12, 10).is_err());
    }
}
