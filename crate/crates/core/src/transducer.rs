//! Focused bowl (spherical cap) sources.
//!
//! A bowl is described by its apex `position`, its geometric `focus` (the
//! center of curvature), the radius of curvature and the aperture diameter.
//! The cap is sampled with a Fibonacci spiral, and the resulting points are
//! deposited onto the grid with trilinear weights.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::math;
use crate::vec3::{self, Vec3};

/// Continuous-wave drive: `A * env(t) * cos(2 pi f0 t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwDrive {
    /// Hz
    pub f0: f64,
    /// Pa
    pub amplitude: f64,
    /// radians
    pub phase: f64,
    /// Length of the raised-cosine onset, in periods. 0 disables the ramp.
    pub ramp_cycles: f64,
}

impl CwDrive {
    pub fn new(f0: f64, amplitude: f64) -> Self {
        Self { f0, amplitude, phase: 0.0, ramp_cycles: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(Error::arg(format!("f0 must be > 0, got {}", self.f0)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::arg(format!("amplitude must be >= 0, got {}", self.amplitude)));
        }
        if !(self.ramp_cycles >= 0.0 && self.ramp_cycles.is_finite()) {
            return Err(Error::arg("ramp_cycles must be >= 0"));
        }
        if !self.phase.is_finite() {
            return Err(Error::arg("phase must be finite"));
        }
        Ok(())
    }

    /// Onset envelope in `[0, 1]`.
    pub fn envelope(&self, time: f64) -> f64 {
        let ramp = self.ramp_cycles / self.f0;
        if ramp <= 0.0 || time >= ramp {
            1.0
        } else if time <= 0.0 {
            0.0
        } else {
            0.5 * (1.0 - math::cos(PI * time / ramp))
        }
    }

    /// Source pressure (Pa) at `time` seconds.
    pub fn sample(&self, time: f64) -> f64 {
        self.amplitude * self.envelope(time) * math::cos(2.0 * PI * self.f0 * time + self.phase)
    }
}

/// One spherical-cap transducer. Lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowlTransducer {
    /// Outer apex of the bowl.
    pub position: Vec3,
    /// Center of curvature.
    pub focus: Vec3,
    pub roc: f64,
    pub diameter: f64,
    pub drive: CwDrive,
}

impl BowlTransducer {
    /// Bowl with its apex at `position` facing along `axis`.
    pub fn from_axis(position: Vec3, axis: Vec3, roc: f64, diameter: f64, drive: CwDrive) -> Result<Self> {
        let axis = vec3::normalize(axis).ok_or_else(|| Error::arg("bowl axis has zero length"))?;
        let bowl = Self { position, focus: vec3::add(position, vec3::scale(axis, roc)), roc, diameter, drive };
        bowl.validate()?;
        Ok(bowl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.roc > 0.0 && self.roc.is_finite()) {
            return Err(Error::arg(format!("roc must be > 0, got {}", self.roc)));
        }
        if !(self.diameter > 0.0 && self.diameter <= 2.0 * self.roc) {
            return Err(Error::arg(format!(
                "diameter must be in (0, 2*roc]: diameter {} roc {}",
                self.diameter, self.roc
            )));
        }
        let d = vec3::distance(self.focus, self.position);
        if (d - self.roc).abs() > 1e-6 {
            return Err(Error::arg(format!("|focus - position| = {d} mm differs from roc {}", self.roc)));
        }
        self.drive.validate()
    }

    /// Unit vector from the apex toward the focus.
    pub fn axis(&self) -> Vec3 {
        vec3::normalize(vec3::sub(self.focus, self.position)).unwrap_or([0.0, 0.0, 1.0])
    }

    /// Half-opening angle of the cap, `asin(diameter / (2 roc))`.
    pub fn half_angle(&self) -> f64 {
        math::asin((self.diameter / (2.0 * self.roc)).min(1.0))
    }

    /// Cap surface area `2 pi R^2 (1 - cos theta)` in mm².
    pub fn cap_area(&self) -> f64 {
        2.0 * PI * self.roc * self.roc * (1.0 - math::cos(self.half_angle()))
    }

    /// Depth of the cap measured along the axis from apex to the aperture plane.
    pub fn cap_depth(&self) -> f64 {
        self.roc * (1.0 - math::cos(self.half_angle()))
    }
}

/// The geometric focus (center of curvature).
pub fn geometric_focus(t: &BowlTransducer) -> Vec3 {
    t.focus
}

/// Drive signal of the bowl at `time` seconds.
pub fn drive_signal(t: &BowlTransducer, time: f64) -> f64 {
    t.drive.sample(time)
}

/// Unit vector from `position` to `target`.
pub fn orient_towards(position: Vec3, target: Vec3) -> Result<Vec3> {
    vec3::normalize(vec3::sub(target, position)).ok_or_else(|| {
        Error::arg(format!("cannot orient: position {position:?} coincides with target {target:?}"))
    })
}

/// Quasi-uniform points on the cap with roughly `point_spacing` mm between
/// neighbours (Fibonacci spiral, equal-area bands).
pub fn sample_bowl_surface(t: &BowlTransducer, point_spacing: f64) -> Result<Vec<Vec3>> {
    if !(point_spacing > 0.0 && point_spacing.is_finite()) {
        return Err(Error::arg(format!("point spacing must be > 0, got {point_spacing}")));
    }
    t.validate()?;
    let area = t.cap_area();
    let n = (math::round(area / (point_spacing * point_spacing)) as usize).max(1);
    let one_minus_cos = 1.0 - math::cos(t.half_angle());
    let w = t.axis();
    let (u, v) = vec3::orthonormal_frame(w);
    let golden = PI * (3.0 - math::sqrt(5.0));
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let cos_polar = 1.0 - one_minus_cos * (i as f64 + 0.5) / n as f64;
        let sin_polar = math::sqrt((1.0 - cos_polar * cos_polar).max(0.0));
        let az = golden * i as f64;
        let (sa, ca) = (math::sin(az), math::cos(az));
        // Direction from the focus back toward the cap.
        let dir = [
            -cos_polar * w[0] + sin_polar * (ca * u[0] + sa * v[0]),
            -cos_polar * w[1] + sin_polar * (ca * u[1] + sa * v[1]),
            -cos_polar * w[2] + sin_polar * (ca * u[2] + sa * v[2]),
        ];
        points.push(vec3::add(t.focus, vec3::scale(dir, t.roc)));
    }
    Ok(points)
}

/// Grid-deposited source: voxel indices with trilinear weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub dims: [usize; 3],
    /// `(linear index, weight)`, sorted by index, weights > 0.
    pub nodes: Vec<(usize, f64)>,
    pub n_points: usize,
    /// Surface area represented by each point (mm²); 0 when unknown.
    pub point_area: f64,
}

impl SourceSet {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|&(_, w)| w).sum()
    }

    /// Per-node source strength for a sheet source: `weight * point_area / dx²`.
    ///
    /// A point set that tiles a plane at one point per voxel face yields unit
    /// strength per node, which is the normalization the solver injects.
    pub fn sheet_strengths(&self, spacing: f64) -> Vec<(usize, f64)> {
        let scale = if self.point_area > 0.0 { self.point_area / (spacing * spacing) } else { 1.0 };
        self.nodes.iter().map(|&(i, w)| (i, w * scale)).collect()
    }

    pub fn with_point_area(mut self, area: f64) -> Self {
        self.point_area = area;
        self
    }
}

/// Deposits each point onto its 8 surrounding voxels with trilinear weights.
pub fn rasterize_source(points: &[Vec3], grid: &GridSpec) -> Result<SourceSet> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (idx, &p) in points.iter().enumerate() {
        let u = grid.world_to_voxel(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let max = (grid.dims[a] - 1) as f64;
            let tol = 1e-9;
            if !(u[a] >= -tol && u[a] <= max + tol) {
                return Err(Error::arg(format!(
                    "source point #{idx} at {p:?} mm lies outside the grid"
                )));
            }
            let ua = u[a].clamp(0.0, max);
            let i0 = (math::floor(ua) as usize).min(grid.dims[a].saturating_sub(2));
            base[a] = i0;
            frac[a] = (ua - i0 as f64).clamp(0.0, 1.0);
        }
        for corner in 0..8 {
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for a in 0..3 {
                let hi = (corner >> a) & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                ijk[a] = base[a] + hi as usize;
            }
            if w > 0.0 {
                if ijk.iter().zip(grid.dims).any(|(&i, n)| i >= n) {
                    continue;
                }
                *acc.entry(grid.index(ijk[0], ijk[1], ijk[2])).or_insert(0.0) += w;
            }
        }
    }
    Ok(SourceSet { dims: grid.dims, nodes: acc.into_iter().collect(), n_points: points.len(), point_area: 0.0 })
}

/// Samples the bowl at `point_spacing` and deposits it onto `grid`.
pub fn bowl_source(t: &BowlTransducer, grid: &GridSpec, point_spacing: f64) -> Result<(Vec<Vec3>, SourceSet)> {
    let points = sample_bowl_surface(t, point_spacing)?;
    let area = t.cap_area() / points.len() as f64;
    let set = rasterize_source(&points, grid)?.with_point_area(area);
    Ok((points, set))
}
