//! Hounsfield-unit to acoustic property mapping.
//!
//! Density is linear in HU, sound speed is linear in density and absorption
//! follows a square-root law between `hu_min` and `hu_max`. Voxels below the
//! water threshold (soft tissue and brain, roughly 0 HU) are treated as water.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D, Units};
use crate::math;

/// Endpoint constants of the HU mapping plus the absorption power law exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuMappingParams {
    pub rho_min: f64,
    pub rho_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// dB / (MHz^y cm)
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub hu_min: f64,
    pub hu_max: f64,
    pub alpha_power: f64,
}

impl Default for HuMappingParams {
    fn default() -> Self {
        Self {
            rho_min: 1000.0,
            rho_max: 1900.0,
            c_min: 1500.0,
            c_max: 3100.0,
            alpha_min: 4.0,
            alpha_max: 8.7,
            hu_min: 300.0,
            hu_max: 2000.0,
            alpha_power: 1.1,
        }
    }
}

impl HuMappingParams {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("rho", self.rho_min, self.rho_max),
            ("c", self.c_min, self.c_max),
            ("alpha", self.alpha_min, self.alpha_max),
            ("hu", self.hu_min, self.hu_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::arg(format!("{name}_min must be < {name}_max ({lo} vs {hi})")));
            }
        }
        if !(self.rho_min > 0.0 && self.c_min > 0.0 && self.alpha_min >= 0.0) {
            return Err(Error::arg("rho_min, c_min must be > 0 and alpha_min >= 0"));
        }
        if !(self.hu_max > 0.0) {
            return Err(Error::arg("hu_max must be > 0"));
        }
        if !(self.alpha_power > 0.0 && self.alpha_power.is_finite()) {
            return Err(Error::arg("alpha_power must be > 0"));
        }
        if (self.alpha_power - 1.0).abs() < 1e-12 {
            return Err(Error::arg(
                "alpha_power = 1 is singular in the power-law absorption operator (tan(pi*y/2)); use e.g. 1.01 or 1.1",
            ));
        }
        Ok(())
    }
}

/// Density in kg/m³; HU is clamped to `[0, hu_max]`.
pub fn hu_to_density(hu: f64, p: &HuMappingParams) -> f64 {
    let h = hu.clamp(0.0, p.hu_max);
    p.rho_min + (p.rho_max - p.rho_min) * h / p.hu_max
}

/// Sound speed in m/s as a linear map of density onto `[c_min, c_max]`.
pub fn density_to_sound_speed(rho: f64, p: &HuMappingParams) -> Result<f64> {
    let slack = 1e-9 * p.rho_max;
    if !(rho >= p.rho_min - slack && rho <= p.rho_max + slack) {
        return Err(Error::arg(format!(
            "density {rho} outside [{}, {}]",
            p.rho_min, p.rho_max
        )));
    }
    let t = ((rho - p.rho_min) / (p.rho_max - p.rho_min)).clamp(0.0, 1.0);
    Ok(p.c_min + (p.c_max - p.c_min) * t)
}

/// Absorption coefficient in dB/(MHz^y cm); HU is clamped to `[hu_min, hu_max]`.
pub fn hu_to_absorption(hu: f64, p: &HuMappingParams) -> f64 {
    let h = hu.clamp(p.hu_min, p.hu_max);
    let frac = (h - p.hu_min) / (p.hu_max - p.hu_min);
    p.alpha_min + (p.alpha_max - p.alpha_min) * (1.0 - math::sqrt(frac))
}

/// Density, sound speed and power-law absorption on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticMedium {
    pub rho: ScalarField3D,
    pub c: ScalarField3D,
    pub alpha0: ScalarField3D,
    pub alpha_power: f64,
    /// Reference sound speed of the k-space scheme, `max(c)`.
    pub c_ref: f64,
}

impl AcousticMedium {
    /// Uniform medium; `alpha0` in dB/(MHz^y cm).
    pub fn homogeneous(
        grid: GridSpec,
        rho: f64,
        c: f64,
        alpha0: f64,
        alpha_power: f64,
    ) -> Result<Self> {
        let m = Self {
            rho: ScalarField3D::filled(grid, rho as f32, Units::KgPerM3),
            c: ScalarField3D::filled(grid, c as f32, Units::MetresPerSecond),
            alpha0: ScalarField3D::filled(grid, alpha0 as f32, Units::DbPerMhzPowCm),
            alpha_power,
            c_ref: c as f32 as f64,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn grid(&self) -> &GridSpec {
        self.rho.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.ensure_same_shape(&self.c)?;
        self.rho.ensure_same_shape(&self.alpha0)?;
        if self.rho.values().iter().any(|&r| !(r > 0.0)) {
            return Err(Error::arg("density must be > 0 everywhere"));
        }
        if self.c.values().iter().any(|&c| !(c > 0.0)) {
            return Err(Error::arg("sound speed must be > 0 everywhere"));
        }
        if self.alpha0.values().iter().any(|&a| a < 0.0) {
            return Err(Error::arg("absorption must be >= 0 everywhere"));
        }
        let (_, c_max) = self.c.min_max();
        if self.c_ref < c_max as f64 {
            return Err(Error::arg(format!("c_ref {} below max sound speed {c_max}", self.c_ref)));
        }
        if self.is_absorbing() && (self.alpha_power - 1.0).abs() < 1e-12 {
            return Err(Error::arg("alpha_power = 1 is singular in the absorption operator"));
        }
        Ok(())
    }

    pub fn is_absorbing(&self) -> bool {
        self.alpha0.values().iter().any(|&a| a > 0.0)
    }

    pub fn min_sound_speed(&self) -> f64 {
        self.c.min_max().0 as f64
    }
}

/// Maps a CT volume (HU, isotropic) to an [`AcousticMedium`].
///
/// Voxels with `HU < water_threshold` get water properties
/// (`rho_min`, `c_min`, zero absorption).
pub fn build_medium(
    ct: &ScalarField3D,
    p: &HuMappingParams,
    water_threshold: f64,
) -> Result<AcousticMedium> {
    p.validate()?;
    if !ct.grid().is_isotropic() {
        return Err(Error::arg(format!(
            "CT must be isotropic before building the medium, spacing {:?}",
            ct.grid().spacing
        )));
    }
    let n = ct.values().len();
    let mut rho = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for &hu in ct.values() {
        let hu = hu as f64;
        if hu < water_threshold {
            rho.push(p.rho_min as f32);
            c.push(p.c_min as f32);
            alpha.push(0.0);
        } else {
            let r = hu_to_density(hu, p);
            rho.push(r as f32);
            c.push(density_to_sound_speed(r, p)? as f32);
            alpha.push(hu_to_absorption(hu, p) as f32);
        }
    }
    let grid = *ct.grid();
    let c = ScalarField3D::new(grid, c, Units::MetresPerSecond)?;
    let c_ref = c.max() as f64;
    let medium = AcousticMedium {
        rho: ScalarField3D::new(grid, rho, Units::KgPerM3)?,
        c,
        alpha0: ScalarField3D::new(grid, alpha, Units::DbPerMhzPowCm)?,
        alpha_power: p.alpha_power,
        c_ref,
    };
    medium.validate()?;
    Ok(medium)
}

/// Trilinear resampling onto an isotropic grid of `target_spacing` mm.
///
/// The output spans the same voxel-center extent as the input, so linear
/// fields are reproduced exactly. Samples outside the input clamp to the edge.
pub fn resample_isotropic(field: &ScalarField3D, target_spacing: f64) -> Result<ScalarField3D> {
    if !(target_spacing > 0.0 && target_spacing.is_finite()) {
        return Err(Error::arg(format!("target spacing must be > 0, got {target_spacing}")));
    }
    let src = *field.grid();
    if src.spacing.iter().all(|&s| (s - target_spacing).abs() <= 1e-9) {
        return Ok(field.clone());
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let span = (src.dims[a] as f64 - 1.0) * src.spacing[a];
        dims[a] = math::round(span / target_spacing) as usize + 1;
    }
    let dst = GridSpec::new(dims, [target_spacing; 3], src.origin)?;
    let vals = field.values();
    let sample = |u: f64, n: usize| -> (usize, usize, f64) {
        let max = (n - 1) as f64;
        let u = u.clamp(0.0, max);
        let i0 = math::floor(u) as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, u - i0 as f64)
    };
    ScalarField3D::from_fn(dst, field.units(), |i, j, k| {
        let u = src.world_to_voxel(dst.voxel_center([i, j, k]));
        let (x0, x1, fx) = sample(u[0], src.dims[0]);
        let (y0, y1, fy) = sample(u[1], src.dims[1]);
        let (z0, z1, fz) = sample(u[2], src.dims[2]);
        let at = |x: usize, y: usize, z: usize| vals[src.index(x, y, z)] as f64;
        let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
        let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
        let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
        let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        (c0 * (1.0 - fz) + c1 * fz) as f32
    })
}
