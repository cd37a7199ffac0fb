//! Simulation configuration files and seeded placement generation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tfus_core::medium::HuMappingParams;
use tfus_core::rng::SplitMix64;
use tfus_core::transducer::{sample_bowl_surface, BowlTransducer, CwDrive};
use tfus_core::vec3::{self, Vec3};
use tfus_core::ScalarField3D;

use crate::error::{Error, Result};
use crate::solver::SourceFilter;

pub const SCHEMA_VERSION: u32 = 1;

/// Upper bound accepted for roc and aperture diameter (mm).
pub const MAX_BOWL_SIZE_MM: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerConfig {
    /// Apex position, world mm.
    pub position: [f64; 3],
    /// Direction from the apex toward the focus.
    pub axis: [f64; 3],
    /// mm
    pub roc: f64,
    /// mm
    pub diameter: f64,
    /// Pa
    pub amplitude: f64,
    /// rad
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_ramp")]
    pub ramp_cycles: f64,
}

fn default_ramp() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PmlSize {
    /// Thickness chosen per axis within `[lo, hi]` for FFT-friendly sizes.
    Range([usize; 2]),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlConfig {
    pub size: PmlSize,
    /// nepers per voxel
    #[serde(default = "default_pml_strength")]
    pub strength: f64,
    #[serde(default = "default_pml_order")]
    pub order: f64,
}

fn default_pml_strength() -> f64 {
    2.0
}

fn default_pml_order() -> f64 {
    4.0
}

impl Default for PmlConfig {
    fn default() -> Self {
        Self { size: PmlSize::Range([10, 20]), strength: 2.0, order: 4.0 }
    }
}

/// Mirror of [`HuMappingParams`] with serde support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuMappingConfig {
    pub rho_min: f64,
    pub rho_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub hu_min: f64,
    pub hu_max: f64,
    pub alpha_power: f64,
}

impl Default for HuMappingConfig {
    fn default() -> Self {
        HuMappingParams::default().into()
    }
}

impl From<HuMappingParams> for HuMappingConfig {
    fn from(p: HuMappingParams) -> Self {
        Self {
            rho_min: p.rho_min,
            rho_max: p.rho_max,
            c_min: p.c_min,
            c_max: p.c_max,
            alpha_min: p.alpha_min,
            alpha_max: p.alpha_max,
            hu_min: p.hu_min,
            hu_max: p.hu_max,
            alpha_power: p.alpha_power,
        }
    }
}

impl From<HuMappingConfig> for HuMappingParams {
    fn from(c: HuMappingConfig) -> Self {
        Self {
            rho_min: c.rho_min,
            rho_max: c.rho_max,
            c_min: c.c_min,
            c_max: c.c_max,
            alpha_min: c.alpha_min,
            alpha_max: c.alpha_max,
            hu_min: c.hu_min,
            hu_max: c.hu_max,
            alpha_power: c.alpha_power,
        }
    }
}

/// One simulation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub subject_id: String,
    /// NIfTI CT volume in HU; relative paths resolve against the config file.
    pub ct_path: PathBuf,
    #[serde(default)]
    pub hu_mapping: HuMappingConfig,
    /// HU below which voxels are treated as water; defaults to `hu_mapping.hu_min`.
    #[serde(default)]
    pub water_threshold: Option<f64>,
    pub transducer: TransducerConfig,
    /// Hz
    pub f0: f64,
    pub ppw: f64,
    pub cfl: f64,
    #[serde(default)]
    pub pml: PmlConfig,
    /// s
    #[serde(default)]
    pub t_end_override: Option<f64>,
    #[serde(default = "default_margin")]
    pub t_end_margin: f64,
    pub n_record_periods: usize,
    /// Edge length of the cubic output crop, voxels.
    pub crop_size: usize,
    pub seed: u64,
    /// `.npz` artifact; relative paths resolve against the config file.
    pub output_path: PathBuf,
    #[serde(default = "default_true")]
    pub compress: bool,
    #[serde(default = "default_filter")]
    pub source_filter: SourceFilter,
    /// Include the dispersive term of the power-law absorption model.
    #[serde(default = "default_true")]
    pub absorption_dispersion: bool,
    /// Bowl surface sampling distance (mm); defaults to half the grid spacing.
    #[serde(default)]
    pub point_spacing: Option<f64>,
}

fn default_margin() -> f64 {
    1.5
}

fn default_true() -> bool {
    true
}

fn default_filter() -> SourceFilter {
    SourceFilter::KappaDeconvolved
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be a positive finite number, got {v}")))
    }
}

impl SimConfig {
    /// Parses YAML and validates it; the schema version is checked first.
    pub fn from_yaml(text: &str) -> Result<Self> {
        let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        match value.get("schema_version") {
            None => return Err(Error::Config("missing schema_version".into())),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
                return Err(Error::Config(format!(
                    "schema_version: unsupported value {v:?}, expected {SCHEMA_VERSION}"
                )))
            }
            _ => {}
        }
        let cfg: SimConfig = serde_yaml::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version must be {SCHEMA_VERSION}")));
        }
        if self.subject_id.is_empty() {
            return Err(Error::Config("subject_id must be non-empty".into()));
        }
        let t = &self.transducer;
        for (name, v) in [("transducer.roc", t.roc), ("transducer.diameter", t.diameter)] {
            positive(name, v)?;
            if v > MAX_BOWL_SIZE_MM {
                return Err(Error::Config(format!("{name} = {v} mm exceeds the bound of {MAX_BOWL_SIZE_MM} mm")));
            }
        }
        if t.diameter > 2.0 * t.roc {
            return Err(Error::Config(format!(
                "transducer.diameter = {} mm exceeds 2 * roc = {} mm",
                t.diameter,
                2.0 * t.roc
            )));
        }
        positive("transducer.amplitude", t.amplitude)?;
        if !(t.ramp_cycles >= 0.0 && t.ramp_cycles.is_finite()) {
            return Err(Error::Config("transducer.ramp_cycles must be >= 0".into()));
        }
        if !t.phase.is_finite() || t.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("transducer.position and phase must be finite".into()));
        }
        if vec3::normalize(t.axis).is_none() {
            return Err(Error::Config("transducer.axis must be a non-zero vector".into()));
        }
        positive("f0", self.f0)?;
        if !(self.ppw >= 2.0 && self.ppw.is_finite()) {
            return Err(Error::Config(format!("ppw must be >= 2, got {}", self.ppw)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::Config(format!("cfl must be in (0, 0.5], got {}", self.cfl)));
        }
        match self.pml.size {
            PmlSize::Range([lo, hi]) if lo > hi => {
                return Err(Error::Config(format!("pml.size.range [{lo}, {hi}] is empty")))
            }
            _ => {}
        }
        if !(self.pml.strength >= 0.0 && self.pml.order >= 0.0) {
            return Err(Error::Config("pml.strength and pml.order must be >= 0".into()));
        }
        if let Some(t) = self.t_end_override {
            positive("t_end_override", t)?;
        }
        if !(self.t_end_margin >= 1.0) {
            return Err(Error::Config(format!("t_end_margin must be >= 1, got {}", self.t_end_margin)));
        }
        if self.n_record_periods == 0 {
            return Err(Error::Config("n_record_periods must be >= 1".into()));
        }
        if self.crop_size == 0 {
            return Err(Error::Config("crop_size must be >= 1".into()));
        }
        if let Some(s) = self.point_spacing {
            positive("point_spacing", s)?;
        }
        let p: HuMappingParams = self.hu_mapping.into();
        p.validate().map_err(|e| Error::Config(format!("hu_mapping: {e}")))?;
        Ok(())
    }

    /// Desk-scale defaults (500 kHz, ppw 6, cfl 0.3) for `subject_id` and `ct_path`.
    pub fn template(subject_id: &str, ct_path: &Path, crop_size: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subject_id: subject_id.to_string(),
            ct_path: ct_path.to_path_buf(),
            hu_mapping: HuMappingConfig::default(),
            water_threshold: None,
            transducer: TransducerConfig {
                position: [0.0; 3],
                axis: [1.0, 0.0, 0.0],
                roc: 65.0,
                diameter: 65.0,
                amplitude: 60000.0,
                phase: 0.0,
                ramp_cycles: default_ramp(),
            },
            f0: 5.0e5,
            ppw: 6.0,
            cfl: 0.3,
            pml: PmlConfig::default(),
            t_end_override: None,
            t_end_margin: default_margin(),
            n_record_periods: 3,
            crop_size,
            seed: 0,
            output_path: PathBuf::from(format!("{subject_id}.npz")),
            compress: true,
            source_filter: default_filter(),
            absorption_dispersion: true,
            point_spacing: None,
        }
    }

    pub fn hu_params(&self) -> HuMappingParams {
        self.hu_mapping.into()
    }

    pub fn drive(&self) -> CwDrive {
        let t = &self.transducer;
        CwDrive { f0: self.f0, amplitude: t.amplitude, phase: t.phase, ramp_cycles: t.ramp_cycles }
    }

    pub fn bowl(&self) -> Result<BowlTransducer> {
        let t = &self.transducer;
        Ok(BowlTransducer::from_axis(t.position, t.axis, t.roc, t.diameter, self.drive())?)
    }

    /// Resolves a possibly relative path against the config file's directory.
    pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
        match base.and_then(Path::parent) {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

/// Sampling rules for [`generate_configs`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    /// mm
    pub roc_range: [f64; 2],
    /// mm
    pub diameter_range: [f64; 2],
    /// Per-axis distance of the aiming point from a grid face, voxels.
    pub offset_range: [f64; 2],
    /// voxels
    pub boundary_pad: f64,
    /// HU above which a voxel belongs to the head.
    pub surface_threshold: f64,
    pub max_retries: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            roc_range: [55.0, 75.0],
            diameter_range: [55.0, 75.0],
            offset_range: [40.0, 60.0],
            boundary_pad: 10.0,
            surface_threshold: 50.0,
            max_retries: 200,
        }
    }
}

/// Transducer geometry drawn for one placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementSample {
    pub position: Vec3,
    pub axis: Vec3,
    pub roc: f64,
    pub diameter: f64,
}

/// Outermost voxel center above `threshold` along the ray from `start` in
/// direction `dir` (unit), or `None`.
pub fn ray_surface(ct: &ScalarField3D, start: Vec3, dir: Vec3, threshold: f64) -> Option<Vec3> {
    let grid = ct.grid();
    let step = grid.spacing.iter().fold(f64::INFINITY, |m, &s| m.min(s)) * 0.25;
    let mut last = None;
    let mut t = 0.0;
    loop {
        let p = vec3::add(start, vec3::scale(dir, t));
        let u = grid.world_to_voxel(p);
        let ijk = u.map(|v| v.round() as isize);
        if !grid.contains_voxel(ijk) {
            break;
        }
        let [i, j, k] = ijk.map(|v| v as usize);
        if ct.get(i, j, k) as f64 > threshold {
            last = Some(grid.voxel_center([i, j, k]));
        }
        t += step;
    }
    last
}

fn bowl_fits(bowl: &BowlTransducer, ct: &ScalarField3D) -> bool {
    let grid = ct.grid();
    let spacing = grid.spacing[0] / 2.0;
    match sample_bowl_surface(bowl, spacing) {
        Ok(points) => points.iter().all(|&p| {
            let u = grid.world_to_voxel(p);
            u.iter().zip(grid.dims).all(|(&v, n)| v >= 0.0 && v <= (n - 1) as f64)
        }),
        Err(_) => false,
    }
}

/// Draws one placement with the per-(seed, subject, index) generator.
pub fn sample_placement(ct: &ScalarField3D, subject: &str, seed: u64, index: u64, p: &GenerationParams) -> Result<PlacementSample> {
    let mut rng = SplitMix64::for_placement(seed, subject, index);
    let grid = ct.grid();
    let center = grid.center();
    for _ in 0..p.max_retries.max(1) {
        let roc = rng.uniform(p.roc_range[0], p.roc_range[1]);
        let diameter = rng.uniform(p.diameter_range[0], p.diameter_range[1]);
        let mut aim = [0.0; 3];
        for a in 0..3 {
            let off = p.boundary_pad + rng.uniform(p.offset_range[0], p.offset_range[1]);
            let n = grid.dims[a] as f64;
            let v = if rng.next_u64() & 1 == 0 { off } else { n - 1.0 - off };
            aim[a] = grid.origin[a] + v.clamp(0.0, n - 1.0) * grid.spacing[a];
        }
        if diameter > 2.0 * roc {
            continue;
        }
        let Some(dir) = vec3::normalize(vec3::sub(aim, center)) else { continue };
        let Some(surface) = ray_surface(ct, center, dir, p.surface_threshold) else { continue };
        let depth = roc * (1.0 - (1.0 - (diameter / (2.0 * roc)).powi(2)).sqrt());
        let standoff = depth + grid.spacing[0];
        let position = vec3::add(surface, vec3::scale(dir, standoff));
        let axis = vec3::scale(dir, -1.0);
        let Ok(bowl) = BowlTransducer::from_axis(position, axis, roc, diameter, CwDrive::new(1.0, 1.0)) else {
            continue;
        };
        if bowl_fits(&bowl, ct) {
            return Ok(PlacementSample { position, axis, roc, diameter });
        }
    }
    Err(Error::Argument(format!(
        "no valid placement for subject '{subject}' index {index} after {} attempts",
        p.max_retries
    )))
}

/// Generates `n` configs for one subject from `template`, replacing the
/// subject, transducer geometry, seed and output path.
pub fn generate_configs(
    ct: &ScalarField3D,
    template: &SimConfig,
    n: usize,
    seed: u64,
    params: &GenerationParams,
) -> Result<Vec<SimConfig>> {
    if n == 0 {
        return Err(Error::Argument("count must be >= 1".into()));
    }
    (0..n)
        .map(|i| {
            let s = sample_placement(ct, &template.subject_id, seed, i as u64, params)?;
            let mut cfg = template.clone();
            cfg.seed = seed;
            cfg.transducer.position = s.position;
            cfg.transducer.axis = s.axis;
            cfg.transducer.roc = s.roc;
            cfg.transducer.diameter = s.diameter;
            cfg.output_path = PathBuf::from(format!("{}_{i:03}.npz", template.subject_id));
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}
