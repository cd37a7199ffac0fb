//! Synthetic skull phantoms for desk-scale runs and tests.

use alloc::format;

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D, Units};

/// Spherical shell of `skull_hu` centered on the grid center, 0 HU elsewhere.
///
/// Voxels whose centers lie at a distance in `[outer_radius - thickness,
/// outer_radius]` (mm) from the center belong to the shell.
pub fn make_skull_phantom(
    grid: GridSpec,
    outer_radius: f64,
    thickness: f64,
    skull_hu: f32,
) -> Result<ScalarField3D> {
    if !(thickness > 0.0 && thickness < outer_radius) {
        return Err(Error::arg(format!(
            "shell needs 0 < thickness < outer_radius, got thickness {thickness} radius {outer_radius}"
        )));
    }
    let center = grid.center();
    for a in 0..3 {
        let room = (grid.dims[a] as f64 - 1.0) * 0.5 * grid.spacing[a];
        if outer_radius > room {
            return Err(Error::arg(format!(
                "shell radius {outer_radius} mm exceeds grid half-extent {room} mm on axis {a}"
            )));
        }
    }
    let inner = outer_radius - thickness;
    ScalarField3D::from_fn(grid, Units::Hounsfield, |i, j, k| {
        let p = grid.voxel_center([i, j, k]);
        let r = crate::vec3::distance(p, center);
        if r >= inner && r <= outer_radius {
            skull_hu
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid64() -> GridSpec {
        GridSpec::isotropic([64, 64, 64], 0.5).unwrap()
    }

    #[test]
    fn center_is_water_and_shell_is_bone() {
        let f = make_skull_phantom(grid64(), 12.0, 3.0, 1700.0).unwrap();
        assert_eq!(f.get(32, 32, 32), 0.0);
        assert_eq!(f.get(31, 31, 31), 0.0);
        // (52, 31, 31): offsets 20.5, -0.5, -0.5 voxels => about 10.26 mm from the center.
        let g = grid64();
        let d = crate::vec3::distance(g.voxel_center([52, 31, 31]), g.center());
        assert!((d - 10.5).abs() < 0.3);
        assert_eq!(f.get(52, 31, 31), 1700.0);
        // Outside the shell.
        assert_eq!(f.get(0, 0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_thickness_and_oversized_shell() {
        assert!(make_skull_phantom(grid64(), 12.0, 0.0, 1700.0).is_err());
        assert!(make_skull_phantom(grid64(), 12.0, 12.0, 1700.0).is_err());
        assert!(make_skull_phantom(grid64(), 16.0, 3.0, 1700.0).is_err());
    }

    #[test]
    fn shell_volume_matches_analytic_within_five_percent() {
        let f = make_skull_phantom(grid64(), 12.0, 3.0, 1700.0).unwrap();
        let count = f.values().iter().filter(|&&v| v == 1700.0).count() as f64;
        let (r, t, dx) = (12.0f64, 3.0f64, 0.5f64);
        let analytic =
            4.0 / 3.0 * core::f64::consts::PI * (r.powi(3) - (r - t).powi(3)) / dx.powi(3);
        assert!((count - analytic).abs() / analytic < 0.05, "{count} vs {analytic}");
    }

    #[test]
    fn phantom_is_mirror_symmetric() {
        let g = GridSpec::isotropic([40, 36, 32], 0.5).unwrap();
        let f = make_skull_phantom(g, 7.0, 2.0, 1500.0).unwrap();
        let [nx, ny, nz] = g.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    assert_eq!(f.get(i, j, k), f.get(nx - 1 - i, j, k));
                    assert_eq!(f.get(i, j, k), f.get(i, ny - 1 - j, k));
                    assert_eq!(f.get(i, j, k), f.get(i, j, nz - 1 - k));
                }
            }
        }
    }
}
