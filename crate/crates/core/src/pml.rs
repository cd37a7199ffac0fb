//! Perfectly matched layer absorption profiles and automatic sizing.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Per-axis PML absorption (nepers/s) on the padded grid.
///
/// `collocated[a][i]` applies at integer positions (pressure, density) and
/// `staggered[a][i]` at `i + 1/2` (particle velocity along axis `a`).
#[derive(Debug, Clone, PartialEq)]
pub struct PmlProfile {
    pub thickness: [usize; 3],
    pub strength: f64,
    pub order: f64,
    pub collocated: [Vec<f64>; 3],
    pub staggered: [Vec<f64>; 3],
}

fn sigma(pos: f64, n: usize, thickness: usize, peak: f64, order: f64) -> f64 {
    if thickness == 0 {
        return 0.0;
    }
    let t = thickness as f64;
    let d_lo = pos.max(0.0);
    let d_hi = ((n - 1) as f64 - pos).max(0.0);
    let d = d_lo.min(d_hi);
    if d < t {
        peak * math::powf((t - d) / t, order)
    } else {
        0.0
    }
}

/// Builds the profile `sigma(d) = strength * ((T - d)/T)^order * c_ref / dx`
/// for positions within `T` voxels of either face of each axis.
///
/// `padded_dims` includes the layer; `dx` in metres, `c_ref` in m/s.
pub fn build_pml(
    thickness: [usize; 3],
    strength: f64,
    order: f64,
    padded_dims: [usize; 3],
    c_ref: f64,
    dx: [f64; 3],
) -> Result<PmlProfile> {
    if !(strength >= 0.0 && order >= 0.0 && c_ref > 0.0) {
        return Err(Error::arg("pml strength/order must be >= 0 and c_ref > 0"));
    }
    let mut collocated: [Vec<f64>; 3] = Default::default();
    let mut staggered: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let n = padded_dims[a];
        if 2 * thickness[a] > n {
            return Err(Error::arg("pml thicker than half the padded grid"));
        }
        let peak = strength * c_ref / dx[a];
        collocated[a] = (0..n).map(|i| sigma(i as f64, n, thickness[a], peak, order)).collect();
        staggered[a] = (0..n).map(|i| sigma(i as f64 + 0.5, n, thickness[a], peak, order)).collect();
    }
    Ok(PmlProfile { thickness, strength, order, collocated, staggered })
}

pub fn largest_prime_factor(mut n: usize) -> usize {
    if n < 2 {
        return n;
    }
    let mut largest = 1;
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            largest = p;
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        largest = n;
    }
    largest
}

/// The thickness in `range` (inclusive) whose padded size `n + 2t` has the
/// smallest largest prime factor; ties go to the thinner layer.
pub fn choose_pml_size(n: usize, range: core::ops::RangeInclusive<usize>) -> Result<usize> {
    range
        .min_by_key(|&t| (largest_prime_factor(n + 2 * t), t))
        .ok_or_else(|| Error::arg("empty PML search range"))
}
