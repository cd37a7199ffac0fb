//! Regular 3D grids and the dense scalar volumes that live on them.
//!
//! Values are stored x-fastest: the linear index of voxel `(i, j, k)` is
//! `i + nx * (j + ny * k)`. Lengths in [`GridSpec`] are millimetres.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

const ISOTROPY_TOL_MM: f64 = 1e-9;

/// Grid dimensions, voxel spacing (mm) and world position (mm) of voxel (0,0,0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::arg(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::arg(format!("grid spacing must be > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::arg("grid origin must be finite"));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Cubic-voxel grid with its origin at (0,0,0).
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Self::new(dims, [spacing; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_isotropic(&self) -> bool {
        let [a, b, c] = self.spacing;
        (a - b).abs() <= ISOTROPY_TOL_MM && (a - c).abs() <= ISOTROPY_TOL_MM
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, linear: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    /// World position (mm) of a voxel center.
    pub fn voxel_center(&self, ijk: [usize; 3]) -> Vec3 {
        [
            self.origin[0] + ijk[0] as f64 * self.spacing[0],
            self.origin[1] + ijk[1] as f64 * self.spacing[1],
            self.origin[2] + ijk[2] as f64 * self.spacing[2],
        ]
    }

    /// Fractional voxel coordinates of a world position.
    pub fn world_to_voxel(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Physical size `N * spacing` along each axis (mm).
    pub fn extent(&self) -> Vec3 {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// World position of the geometric grid center (mm).
    pub fn center(&self) -> Vec3 {
        [
            self.origin[0] + (self.dims[0] as f64 - 1.0) * 0.5 * self.spacing[0],
            self.origin[1] + (self.dims[1] as f64 - 1.0) * 0.5 * self.spacing[1],
            self.origin[2] + (self.dims[2] as f64 - 1.0) * 0.5 * self.spacing[2],
        ]
    }

    pub fn contains_voxel(&self, ijk: [isize; 3]) -> bool {
        (0..3).all(|a| ijk[a] >= 0 && (ijk[a] as usize) < self.dims[a])
    }
}

/// Physical unit attached to a [`ScalarField3D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Units {
    Hounsfield,
    KgPerM3,
    MetresPerSecond,
    /// dB / (MHz^y cm)
    DbPerMhzPowCm,
    Pascal,
    Dimensionless,
}

impl Units {
    pub fn label(self) -> &'static str {
        match self {
            Units::Hounsfield => "HU",
            Units::KgPerM3 => "kg/m^3",
            Units::MetresPerSecond => "m/s",
            Units::DbPerMhzPowCm => "dB/(MHz^y cm)",
            Units::Pascal => "Pa",
            Units::Dimensionless => "1",
        }
    }
}

/// Dense single-precision volume on a [`GridSpec`]. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    grid: GridSpec,
    values: Vec<f32>,
    units: Units,
}

impl ScalarField3D {
    pub fn new(grid: GridSpec, values: Vec<f32>, units: Units) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!(
                "value count {} does not match grid {:?}",
                values.len(),
                grid.dims
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values, units })
    }

    pub fn filled(grid: GridSpec, value: f32, units: Units) -> Self {
        Self { grid, values: vec![value; grid.len()], units }
    }

    pub fn zeros(grid: GridSpec, units: Units) -> Self {
        Self::filled(grid, 0.0, units)
    }

    /// Builds a field by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(
        grid: GridSpec,
        units: Units,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let [nx, ny, nz] = grid.dims;
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::new(grid, values, units)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Same grid and units with new values; checked for length and finiteness.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(self.grid, values, self.units)
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Linear index of the maximum value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = idx;
            }
        }
        best
    }

    pub fn max(&self) -> f32 {
        self.values[self.argmax()]
    }

    pub fn ensure_same_shape(&self, other: &ScalarField3D) -> Result<()> {
        if self.grid.dims != other.grid.dims {
            return Err(Error::ShapeMismatch { left: self.grid.dims, right: other.grid.dims });
        }
        Ok(())
    }

    /// Extracts the `size` box starting at `offset` (voxel units).
    pub fn window(&self, offset: [usize; 3], size: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if size[a] == 0 || offset[a] + size[a] > self.grid.dims[a] {
                return Err(Error::arg(format!(
                    "window offset {offset:?} size {size:?} exceeds dims {:?}",
                    self.grid.dims
                )));
            }
        }
        let origin = self.grid.voxel_center(offset);
        let grid = GridSpec::new(size, self.grid.spacing, origin)?;
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..size[2] {
            for j in 0..size[1] {
                let start = self.grid.index(offset[0], offset[1] + j, offset[2] + k);
                values.extend_from_slice(&self.values[start..start + size[0]]);
            }
        }
        Ok(Self { grid, values, units: self.units })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_dims_and_spacing() {
        assert!(GridSpec::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(GridSpec::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(GridSpec::new([1, 1, 1], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn isotropy_flag_uses_nanometre_tolerance() {
        let g = GridSpec::new([2, 2, 2], [0.5, 0.5 + 1e-10, 0.5], [0.0; 3]).unwrap();
        assert!(g.is_isotropic());
        let g = GridSpec::new([2, 2, 2], [0.5, 0.5 + 1e-6, 0.5], [0.0; 3]).unwrap();
        assert!(!g.is_isotropic());
    }

    #[test]
    fn index_and_coords_are_inverse() {
        let g = GridSpec::isotropic([3, 4, 5], 1.0).unwrap();
        for lin in 0..g.len() {
            let [i, j, k] = g.coords(lin);
            assert_eq!(g.index(i, j, k), lin);
        }
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
    }

    #[test]
    fn field_rejects_wrong_length_and_nan() {
        let g = GridSpec::isotropic([2, 2, 2], 1.0).unwrap();
        assert!(ScalarField3D::new(g, vec![0.0; 7], Units::Pascal).is_err());
        let mut v = vec![0.0; 8];
        v[5] = f32::NAN;
        assert_eq!(
            ScalarField3D::new(g, v, Units::Pascal),
            Err(Error::NonFinite { index: 5 })
        );
    }

    #[test]
    fn argmax_breaks_ties_on_lowest_index() {
        let g = GridSpec::isotropic([4, 1, 1], 1.0).unwrap();
        let f = ScalarField3D::new(g, vec![1.0, 3.0, 3.0, 2.0], Units::Pascal).unwrap();
        assert_eq!(f.argmax(), 1);
    }

    #[test]
    fn window_copies_values_and_shifts_origin() {
        let g = GridSpec::isotropic([4, 4, 4], 0.5).unwrap();
        let f = ScalarField3D::from_fn(g, Units::Hounsfield, |i, j, k| (i + 10 * j + 100 * k) as f32)
            .unwrap();
        let w = f.window([1, 2, 3], [2, 2, 1]).unwrap();
        assert_eq!(w.values(), &[321.0, 322.0, 331.0, 332.0]);
        assert_eq!(w.grid().origin, [0.5, 1.0, 1.5]);
        assert!(f.window([3, 0, 0], [2, 1, 1]).is_err());
    }
}
