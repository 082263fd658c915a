//! Finite-difference gradient verification.
//!
//! Analytic gradients are compared against central differences
//! `(f(x+h) - f(x-h)) / 2h`. The error metric is a guarded relative error:
//! below `floor` the denominator saturates, which turns the comparison into
//! an absolute check of `tol * floor` — finite differences lose all relative
//! accuracy on near-zero gradients, so a pure relative test would only
//! measure rounding noise there.

use super::{Scalar, Tensor};

/// Central-difference estimate of `d f / d x[idx]`.
pub fn numeric_gradient<T: Scalar>(
    f: &mut dyn FnMut(&Tensor<T>) -> T,
    x: &Tensor<T>,
    idx: usize,
    h: T,
) -> T {
    let mut plus = x.clone();
    plus.data_mut()[idx] += h;
    let fp = f(&plus);
    let mut minus = x.clone();
    minus.data_mut()[idx] -= h;
    let fm = f(&minus);
    (fp - fm) / (h + h)
}

/// Outcome of checking one tensor's gradient at a set of coordinates.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest guarded relative error seen across the probed coordinates.
    pub max_rel_err: f64,
    /// Coordinate that produced `max_rel_err`.
    pub worst_idx: usize,
    /// Analytic and numeric values at the worst coordinate.
    pub worst_pair: (f64, f64),
    /// Threshold the errors were compared against.
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Guarded relative error between an analytic and a numeric derivative.
pub fn guarded_rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compare `analytic[idx]` against central differences of `f` for each probed
/// coordinate. `f` must rebuild the full forward pass from the perturbed
/// tensor so the estimate sees exactly what the graph computed.
pub fn check_gradient<T: Scalar>(
    f: &mut dyn FnMut(&Tensor<T>) -> T,
    x: &Tensor<T>,
    analytic: &Tensor<T>,
    probes: &[usize],
    h: T,
    tol: f64,
    floor: f64,
) -> GradCheckReport {
    assert_eq!(
        x.shape(),
        analytic.shape(),
        "analytic gradient shape must match the input"
    );
    let mut max_rel_err = 0.0f64;
    let mut worst_idx = 0usize;
    let mut worst_pair = (0.0f64, 0.0f64);
    for &idx in probes {
        let a = analytic.data()[idx].as_f64();
        let n = numeric_gradient(f, x, idx, h).as_f64();
        let rel = guarded_rel_err(a, n, floor);
        if rel >= max_rel_err {
            max_rel_err = rel;
            worst_idx = idx;
            worst_pair = (a, n);
        }
    }
    GradCheckReport {
        max_rel_err,
        worst_idx,
        worst_pair,
        tol,
    }
}
