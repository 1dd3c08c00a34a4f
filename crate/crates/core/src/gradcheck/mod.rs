//! Finite-difference oracle for the analytic gradients.
//!
//! [`central_diff`] and [`check`] are deliberately independent of the
//! backward passes they verify: they only ever call forward functions.
//! [`battery`] assembles the full suite run by the CLI and CI.

pub mod battery;
mod sampler;

pub use battery::{run_battery, BatteryConfig};
pub use sampler::PointSampler;

use serde::Serialize;

use crate::error::{Error, Result};

/// Step for parameter-space checks.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Step for indicator checks.
pub const INDICATOR_STEP: f64 = 1e-6;
/// Absolute floor in the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn central_diff<F>(mut f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x)?;
        x[i] = orig - h;
        let minus = f(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is not finite around coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    /// `(point, coordinate)` of the worst coordinate.
    pub argmax: (usize, usize),
    /// Analytic and numeric values at `argmax`.
    pub worst: (f64, f64),
    /// Largest `|a − n|` over all coordinates.
    pub max_abs_err: f64,
    /// Number of coordinates whose relative error exceeds the tolerance.
    pub failures: usize,
    pub coordinates: usize,
    pub step: f64,
    pub tolerance: f64,
    pub points: usize,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(name: impl Into<String>, step: f64, tolerance: f64) -> Self {
        GradCheckReport {
            name: name.into(),
            max_rel_err: 0.0,
            argmax: (0, 0),
            worst: (0.0, 0.0),
            max_abs_err: 0.0,
            failures: 0,
            coordinates: 0,
            step,
            tolerance,
            points: 0,
            passed: true,
        }
    }

    /// Folds the comparison at one more evaluation point into the report.
    pub fn record(&mut self, analytic: &[f64], numeric: &[f64]) -> Result<()> {
        if analytic.len() != numeric.len() {
            return Err(Error::Shape(format!(
                "gradient lengths differ: {} analytic vs {} numeric",
                analytic.len(),
                numeric.len()
            )));
        }
        for (j, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let err = relative_error(*a, *n);
            let abs = (a - n).abs();
            if abs > self.max_abs_err || abs.is_nan() {
                self.max_abs_err = if abs.is_nan() { f64::INFINITY } else { abs };
            }
            if err.is_nan() || err > self.tolerance {
                self.failures += 1;
            }
            // NaN compares false; treat it as a failure explicitly.
            if err > self.max_rel_err || err.is_nan() {
                self.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
                self.argmax = (self.points, j);
                self.worst = (*a, *n);
            }
        }
        self.coordinates += analytic.len();
        self.points += 1;
        self.passed = self.max_rel_err <= self.tolerance;
        Ok(())
    }
}

/// Compares one analytic gradient against one numeric gradient.
pub fn check(analytic: &[f64], numeric: &[f64], tol: f64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("check", f64::NAN, tol);
    report.record(analytic, numeric)?;
    Ok(report)
}
