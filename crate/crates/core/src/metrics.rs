//! Comparison measures between a predicted and a reference pressure field.
//!
//! All functions take the prediction first and the ground truth second.
//! Sums are accumulated in f64 in linear index order.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::ScalarField3D;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    /// Sharpness of the exponential voxel weights.
    pub alpha_weight: f64,
    /// Weight of the gradient term in the composite loss.
    pub lambda: f64,
    /// Voxel spacing in mm, used for physical distances.
    pub spacing: [f64; 3],
    /// Compute gradients per mm instead of per voxel.
    pub physical_gradients: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { alpha_weight: 5.0, lambda: 0.1, spacing: [0.5; 3], physical_gradients: false }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_weight >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::arg("alpha_weight and lambda must be >= 0"));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::arg("spacing must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldMetrics {
    pub relative_l2: f64,
    /// mm
    pub focal_position_error: f64,
    /// percent
    pub max_pressure_error: f64,
    pub weighted_mse: f64,
    pub grad_loss: f64,
    pub composite: f64,
}

/// `sqrt(|pred - gt|² / |gt|²)`.
pub fn relative_l2(pred: &ScalarField3D, gt: &ScalarField3D) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let d = p as f64 - g as f64;
        num += d * d;
        den += (g as f64) * (g as f64);
    }
    if !(den > 0.0) {
        return Err(Error::arg("relative_l2 needs a reference with non-zero norm"));
    }
    Ok(math::sqrt(num / den))
}

/// Euclidean distance (mm) between the argmax voxels of the two fields.
pub fn focal_position_error(pred: &ScalarField3D, gt: &ScalarField3D, spacing: [f64; 3]) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let grid = pred.grid();
    let a = grid.coords(pred.argmax());
    let b = grid.coords(gt.argmax());
    let mut sq = 0.0;
    for ax in 0..3 {
        let d = (a[ax] as f64 - b[ax] as f64) * spacing[ax];
        sq += d * d;
    }
    Ok(math::sqrt(sq))
}

/// `100 |max(pred) - max(gt)| / max(gt)`.
pub fn max_pressure_error(pred: &ScalarField3D, gt: &ScalarField3D) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let gt_max = gt.max() as f64;
    if !(gt_max > 0.0) {
        return Err(Error::arg(format!("reference maximum must be > 0, got {gt_max}")));
    }
    Ok(100.0 * (pred.max() as f64 - gt_max).abs() / gt_max)
}

/// Voxel weights `exp(a (gt - max gt))` normalized to unit mean.
pub fn pressure_weights(gt: &ScalarField3D, alpha_weight: f64) -> Vec<f64> {
    let max = gt.max() as f64;
    let raw: Vec<f64> = gt.values().iter().map(|&g| math::exp(alpha_weight * (g as f64 - max))).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

/// Mean of `w(v) (pred - gt)²` with weights from [`pressure_weights`].
pub fn weighted_mse(pred: &ScalarField3D, gt: &ScalarField3D, alpha_weight: f64) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let w = pressure_weights(gt, alpha_weight);
    let sum: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .zip(&w)
        .map(|((&p, &g), &w)| {
            let d = p as f64 - g as f64;
            w * d * d
        })
        .sum();
    Ok(sum / w.len() as f64)
}

/// Finite-difference derivative along `axis`: central inside, one-sided at the faces.
fn derivative(field: &ScalarField3D, axis: usize, step: f64) -> Vec<f64> {
    let grid = field.grid();
    let n = grid.dims[axis];
    let stride = match axis {
        0 => 1,
        1 => grid.dims[0],
        _ => grid.dims[0] * grid.dims[1],
    };
    let v = field.values();
    (0..v.len())
        .map(|lin| {
            let i = grid.coords(lin)[axis];
            let at = |idx: usize| v[idx] as f64;
            if i == 0 {
                (at(lin + stride) - at(lin)) / step
            } else if i == n - 1 {
                (at(lin) - at(lin - stride)) / step
            } else {
                (at(lin + stride) - at(lin - stride)) / (2.0 * step)
            }
        })
        .collect()
}

/// `(1/3) sum_i mean((d_i pred - d_i gt)²)` in voxel units, or per mm when
/// `spacing` is given.
pub fn gradient_loss(pred: &ScalarField3D, gt: &ScalarField3D, spacing: Option<[f64; 3]>) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let dims = pred.dims();
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::arg(format!("gradient loss needs >= 2 voxels per axis, got {dims:?}")));
    }
    let mut total = 0.0;
    for axis in 0..3 {
        let step = spacing.map_or(1.0, |s| s[axis]);
        let dp = derivative(pred, axis, step);
        let dg = derivative(gt, axis, step);
        let mse = dp.iter().zip(&dg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / dp.len() as f64;
        total += mse;
    }
    Ok(total / 3.0)
}

/// `weighted_mse + lambda * gradient_loss`.
pub fn composite_loss(pred: &ScalarField3D, gt: &ScalarField3D, params: &MetricParams) -> Result<f64> {
    params.validate()?;
    let grad = gradient_loss(pred, gt, params.physical_gradients.then_some(params.spacing))?;
    Ok(weighted_mse(pred, gt, params.alpha_weight)? + params.lambda * grad)
}

/// Every measure for one prediction / reference pair.
pub fn compute_all(pred: &ScalarField3D, gt: &ScalarField3D, params: &MetricParams) -> Result<FieldMetrics> {
    params.validate()?;
    let weighted = weighted_mse(pred, gt, params.alpha_weight)?;
    let grad = gradient_loss(pred, gt, params.physical_gradients.then_some(params.spacing))?;
    Ok(FieldMetrics {
        relative_l2: relative_l2(pred, gt)?,
        focal_position_error: focal_position_error(pred, gt, params.spacing)?,
        max_pressure_error: max_pressure_error(pred, gt)?,
        weighted_mse: weighted,
        grad_loss: grad,
        composite: weighted + params.lambda * grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

/// Median, mean and population standard deviation.
pub fn describe(values: &[f64]) -> Result<Stats> {
    if values.is_empty() {
        return Err(Error::arg("cannot summarize an empty sample"));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
    // Sum in sorted order so the result does not depend on input order.
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Stats { median, mean, std: math::sqrt(var) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub relative_l2: Stats,
    pub focal_position_error: Stats,
    pub max_pressure_error: Stats,
    pub weighted_mse: Stats,
    pub grad_loss: Stats,
    pub composite: Stats,
}

pub fn summarize(samples: &[FieldMetrics]) -> Result<MetricsSummary> {
    if samples.is_empty() {
        return Err(Error::arg("cannot summarize an empty list of metrics"));
    }
    let col = |f: fn(&FieldMetrics) -> f64| -> Result<Stats> {
        describe(&samples.iter().map(f).collect::<Vec<_>>())
    };
    Ok(MetricsSummary {
        relative_l2: col(|m| m.relative_l2)?,
        focal_position_error: col(|m| m.focal_position_error)?,
        max_pressure_error: col(|m| m.max_pressure_error)?,
        weighted_mse: col(|m| m.weighted_mse)?,
        grad_loss: col(|m| m.grad_loss)?,
        composite: col(|m| m.composite)?,
    })
}
