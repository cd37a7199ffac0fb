//! Region-of-interest cropping around the source and the pressure maximum.

use alloc::format;

use crate::error::{Error, Result};
use crate::field::ScalarField3D;
use crate::math;
use crate::transducer::SourceSet;

#[derive(Debug, Clone, PartialEq)]
pub struct RoiCrop {
    pub ct: ScalarField3D,
    pub pressure: ScalarField3D,
    /// Voxel offset of the crop in the uncropped grid.
    pub offset: [usize; 3],
}

/// Offset of a `size`-wide window along one axis of length `n` that centers
/// the span `[lo, hi]`, shifted minimally to stay in bounds.
pub fn centered_offset(lo: usize, hi: usize, size: usize, n: usize) -> Result<usize> {
    if hi - lo + 1 > size {
        return Err(Error::arg(format!(
            "region of interest spans {} voxels, crop is {size}",
            hi - lo + 1
        )));
    }
    if size > n {
        return Err(Error::arg(format!("crop {size} larger than grid axis {n}")));
    }
    let center = 0.5 * (lo + hi) as f64;
    // Round half up; the window then always contains [lo, hi].
    let start = math::floor(center - 0.5 * size as f64 + 0.5);
    Ok(start.clamp(0.0, (n - size) as f64) as usize)
}

/// Crops `size³` windows of the pressure amplitude and CT so that the
/// bounding box of the source nodes and the amplitude argmax is centered.
pub fn crop_roi(
    amplitude: &ScalarField3D,
    ct: &ScalarField3D,
    source: &SourceSet,
    size: usize,
) -> Result<RoiCrop> {
    amplitude.ensure_same_shape(ct)?;
    let grid = *amplitude.grid();
    if source.dims != grid.dims {
        return Err(Error::ShapeMismatch { left: source.dims, right: grid.dims });
    }
    let peak = grid.coords(amplitude.argmax());
    let mut lo = peak;
    let mut hi = peak;
    for &(idx, _) in &source.nodes {
        let c = grid.coords(idx);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut offset = [0usize; 3];
    for a in 0..3 {
        offset[a] = centered_offset(lo[a], hi[a], size, grid.dims[a])?;
    }
    Ok(RoiCrop {
        ct: ct.window(offset, [size; 3])?,
        pressure: amplitude.window(offset, [size; 3])?,
        offset,
    })
}
