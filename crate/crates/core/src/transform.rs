//! Monotone value transforms used when preparing dataset volumes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{ScalarField3D, Units};
use crate::math;

/// Rescales values to `[0, 1]` by the field's own min and max.
///
/// A constant field maps to all zeros.
pub fn minmax_normalize(field: &ScalarField3D) -> ScalarField3D {
    let (lo, hi) = field.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    let values: Vec<f32> = if range > 0.0 {
        field.values().iter().map(|&v| (((v as f64) - lo) / range) as f32).collect()
    } else {
        alloc::vec![0.0; field.values().len()]
    };
    ScalarField3D::new(*field.grid(), values, Units::Dimensionless)
        .expect("normalized values are finite")
}

/// Elementwise `ln(1 + x)` for non-negative fields.
pub fn log_compress(field: &ScalarField3D) -> Result<ScalarField3D> {
    if let Some((idx, v)) = field.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::arg(format!("log_compress needs x >= 0, found {v} at index {idx}")));
    }
    let values = field.values().iter().map(|&v| math::ln_1p(v as f64) as f32).collect();
    field.with_values(values)
}

/// Divides by the field maximum; the first half of the pressure preprocessing.
pub fn normalize_by_max(field: &ScalarField3D) -> Result<ScalarField3D> {
    let max = field.max();
    if !(max > 0.0) {
        return Err(Error::arg(format!("cannot normalize by non-positive maximum {max}")));
    }
    let max = max as f64;
    let values = field.values().iter().map(|&v| ((v as f64) / max) as f32).collect();
    Ok(field.with_values(values)?.with_units(Units::Dimensionless))
}

/// Pressure preprocessing: divide by the maximum, then `ln(1 + x)`.
pub fn compress_pressure(field: &ScalarField3D) -> Result<ScalarField3D> {
    log_compress(&normalize_by_max(field)?)
}
