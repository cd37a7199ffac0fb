//! End-to-end orchestration: CT to medium, source, solve, amplitude, crop, artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use tfus_core::amplitude::AmplitudeField;
use tfus_core::medium::{build_medium, resample_isotropic, AcousticMedium};
use tfus_core::metrics::{compute_all, summarize, FieldMetrics, MetricParams, Stats};
use tfus_core::pml::choose_pml_size;
use tfus_core::roi::crop_roi;
use tfus_core::timing::{absorbing_stable, estimate_t_end, grid_spacing, make_time_params, RecordingPlan, TimeParams};
use tfus_core::transducer::{bowl_source, SourceSet};
use tfus_core::transform::{compress_pressure, normalize_by_max};
use tfus_core::vec3::Vec3;
use tfus_core::{ScalarField3D, Units};

use crate::config::{PmlSize, SimConfig};
use crate::error::{Error, Result, StageExt};
use crate::io::nifti::read_nifti;
use crate::io::npy::{read_npz, write_npz, NpyArray};
use crate::record::TimeSeriesStore;
use crate::solver::{absorbing_coefficients, max_wavenumber, Simulation, SolverSettings, Source};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run-time options that do not affect results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Bytes of RAM the recording window may use before spilling to disk.
    pub ram_cap: usize,
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { ram_cap: 2 << 30, progress: false }
    }
}

/// Everything a run produces besides the artifact files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub npz_path: PathBuf,
    pub sidecar_path: PathBuf,
    /// Full-grid amplitude (Pa).
    pub amplitude: AmplitudeField,
    /// Amplitude over the last `n` recorded periods, for each prefix length
    /// `n` requested in [`SimulationCase::extra_windows`].
    pub window_amplitudes: Vec<(usize, ScalarField3D)>,
    pub pressure_crop: ScalarField3D,
    pub crop_offset: [usize; 3],
    pub metadata: Value,
}

/// A fully prepared simulation: medium, source and timing on the solver grid.
#[derive(Debug, Clone)]
pub struct SimulationCase {
    pub ct: ScalarField3D,
    pub medium: AcousticMedium,
    pub source_points: Vec<Vec3>,
    pub source_set: SourceSet,
    pub source: Source,
    /// Hz
    pub f0: f64,
    pub time: TimeParams,
    pub pml: [usize; 3],
    pub settings: SolverSettings,
    /// Additional shorter tail windows (in periods) to extract from the same run.
    pub extra_windows: Vec<usize>,
}

fn pml_thickness(cfg: &SimConfig, dims: [usize; 3]) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        out[a] = match cfg.pml.size {
            PmlSize::Fixed(t) => t,
            PmlSize::Range([lo, hi]) => choose_pml_size(dims[a], lo..=hi)?,
        };
    }
    Ok(out)
}

/// Raises `ppp` until the absorbing scheme is stable on this medium.
fn stable_time_params(time: TimeParams, medium: &AcousticMedium, f0: f64, dx: f64, dispersion: bool) -> Result<TimeParams> {
    if !medium.is_absorbing() {
        return Ok(time);
    }
    let coeffs = absorbing_coefficients(medium, dispersion);
    let k_max = max_wavenumber(dx);
    let stable = |t: &TimeParams| absorbing_stable(t.dt, medium.c_ref, k_max, medium.alpha_power, &coeffs);
    for ppp in time.ppp..=8 * time.ppp {
        let t = time.with_ppp(f0, ppp)?;
        if stable(&t) {
            return Ok(t);
        }
    }
    Err(Error::Argument(format!("no stable time step up to {} steps per period", 8 * time.ppp)))
}

/// Builds the solver inputs for `cfg` from an HU volume.
pub fn prepare_case(cfg: &SimConfig, ct_raw: &ScalarField3D) -> Result<SimulationCase> {
    cfg.validate()?;
    let params = cfg.hu_params();
    let dx_m = grid_spacing(params.c_min, cfg.f0, cfg.ppw).stage("medium")?;
    let dx_mm = dx_m * 1e3;
    let ct = resample_isotropic(ct_raw, dx_mm).stage("medium")?;
    let water = cfg.water_threshold.unwrap_or(params.hu_min);
    let medium = build_medium(&ct, &params, water).stage("medium")?;

    let bowl = cfg.bowl().stage("source")?;
    let spacing = cfg.point_spacing.unwrap_or(dx_mm / 2.0);
    let (source_points, source_set) = bowl_source(&bowl, ct.grid(), spacing).stage("source")?;
    let source = Source { nodes: source_set.sheet_strengths(dx_mm), drive: bowl.drive };

    let t_end = match cfg.t_end_override {
        Some(t) => t,
        None => estimate_t_end(ct.grid().extent(), medium.min_sound_speed(), cfg.t_end_margin, cfg.n_record_periods, cfg.f0)
            .stage("timing")?,
    };
    let time = make_time_params(cfg.f0, cfg.ppw, cfg.cfl, dx_m, medium.c_ref, t_end).stage("timing")?;
    let time = stable_time_params(time, &medium, cfg.f0, dx_m, cfg.absorption_dispersion).stage("timing")?;
    let pml = pml_thickness(cfg, ct.grid().dims).stage("timing")?;
    let mut settings = SolverSettings::new(0, time.dt);
    settings.pml_thickness = pml;
    settings.pml_strength = cfg.pml.strength;
    settings.pml_order = cfg.pml.order;
    settings.source_filter = cfg.source_filter;
    settings.absorption_dispersion = cfg.absorption_dispersion;
    Ok(SimulationCase {
        ct,
        medium,
        source_points,
        source_set,
        source,
        f0: cfg.f0,
        time,
        pml,
        settings,
        extra_windows: Vec::new(),
    })
}

/// Solves a prepared case and returns the amplitude over the configured
/// window plus any extra tail windows, and solver statistics.
pub fn solve_case(case: &SimulationCase, n_periods: usize, opts: &RunOptions) -> Result<(AmplitudeField, Vec<(usize, ScalarField3D)>, Value)> {
    let mut settings = case.settings.clone();
    settings.progress = opts.progress;
    let ppp = case.time.ppp;
    let longest = case.extra_windows.iter().copied().chain([n_periods]).max().unwrap_or(n_periods);
    let plan = RecordingPlan::tail(case.time.n_steps, ppp, longest).stage("record")?;
    let grid = *case.medium.grid();
    let mut sim = Simulation::new(&case.medium, Some(&case.source), &settings).stage("solve")?;
    let mut store = TimeSeriesStore::new(grid, plan, case.time.n_steps, opts.ram_cap).stage("record")?;
    let summary = sim.run(case.time.n_steps, |step, s| store.record(step, s)).stage("solve")?;
    let spilled = store.is_spilled();

    let mut windows = Vec::new();
    let mut main = None;
    let mut peak_extra = 0usize;
    let mut lengths: Vec<usize> = case.extra_windows.clone();
    lengths.push(n_periods);
    lengths.sort_unstable();
    lengths.dedup();
    for &n in &lengths {
        let (amp, extra) = if n == longest {
            store.extract_amplitude(case.f0, ppp).stage("extract")?
        } else {
            store.extract_tail_amplitude(case.f0, ppp, n * ppp).stage("extract")?
        };
        peak_extra = peak_extra.max(extra);
        if n == n_periods {
            main = Some(amp.clone());
        }
        windows.push((n, amp.amplitude));
    }
    let stats = json!({
        "steps": summary.steps,
        "wall_time_s": summary.wall_time.as_secs_f64(),
        "solver_memory_bytes": summary.peak_memory_bytes,
        "recording_bytes": TimeSeriesStore::window_bytes(&grid, &plan),
        "recording_spilled": spilled,
        "extraction_extra_bytes": peak_extra,
        "source_nodes_injected": sim.source_node_count(),
    });
    Ok((main.expect("main window extracted"), windows, stats))
}

/// Sidecar path for an artifact: `x.npz` -> `x.json`.
pub fn sidecar_path(npz: &Path) -> PathBuf {
    npz.with_extension("json")
}

/// Runs one configuration end to end and writes `output_path` plus its JSON sidecar.
///
/// `config_path` anchors relative paths in the config. On failure no
/// artifact is left behind.
pub fn run_simulation(cfg: &SimConfig, config_path: Option<&Path>, opts: &RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    let ct_path = SimConfig::resolve(config_path, &cfg.ct_path);
    let npz_path = SimConfig::resolve(config_path, &cfg.output_path);
    let ct_raw = read_nifti(&ct_path).stage("load_ct")?;
    let t_load = started.elapsed().as_secs_f64();
    let case = prepare_case(cfg, &ct_raw)?;
    let t_prepare = started.elapsed().as_secs_f64();
    let (amplitude, windows, solver_stats) = solve_case(&case, cfg.n_record_periods, opts)?;
    let t_solve = started.elapsed().as_secs_f64();
    let crop = crop_roi(&amplitude.amplitude, &case.ct, &case.source_set, cfg.crop_size).stage("crop")?;

    let coords = NpyArray::from_points(&case.source_points);
    let ct_arr = NpyArray::from_field(&crop.ct);
    let p_arr = NpyArray::from_field(&crop.pressure);
    let grid = case.ct.grid();
    let peak = grid.coords(amplitude.amplitude.argmax());
    let metadata = json!({
        "software": { "name": "tfus", "version": VERSION },
        "config": serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
        "config_path": config_path.map(|p| p.display().to_string()),
        "seed": cfg.seed,
        "grid": {
            "dims": grid.dims,
            "spacing_mm": grid.spacing,
            "origin_mm": grid.origin,
            "pml": case.pml,
        },
        "time": {
            "dt_s": case.time.dt,
            "n_steps": case.time.n_steps,
            "ppp": case.time.ppp,
            "t_end_s": case.time.t_end,
            "n_record_periods": cfg.n_record_periods,
        },
        "medium": { "c_ref": case.medium.c_ref, "c_min": case.medium.min_sound_speed() },
        "source": {
            "n_points": case.source_points.len(),
            "n_nodes": case.source_set.nodes.len(),
            "point_area_mm2": case.source_set.point_area,
        },
        "crop": { "size": cfg.crop_size, "offset": crop.offset },
        "amplitude": { "max_pa": amplitude.amplitude.max(), "argmax_voxel": peak },
        "members": {
            "ct_crop": { "units": Units::Hounsfield.label(), "dtype": "float32", "layout": "[x, y, z] C order" },
            "pressure": { "units": Units::Pascal.label(), "dtype": "float32", "layout": "[x, y, z] C order" },
            "transducer_coords": { "units": "mm (world)", "dtype": "float64", "shape": [case.source_points.len(), 3] },
        },
        "solver": solver_stats,
        "timings_s": { "load_ct": t_load, "prepare": t_prepare - t_load, "solve": t_solve - t_prepare },
    });

    write_npz(&npz_path, &[("ct_crop", &ct_arr), ("pressure", &p_arr), ("transducer_coords", &coords)], cfg.compress)
        .stage("write")?;
    let side = sidecar_path(&npz_path);
    let text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    if let Err(e) = crate::io::write_atomic(&side, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes()).map_err(|e| Error::io(&side, e))
    }) {
        let _ = std::fs::remove_file(&npz_path);
        return Err(e.in_stage("write"));
    }
    Ok(RunOutput {
        npz_path,
        sidecar_path: side,
        amplitude,
        window_amplitudes: windows,
        pressure_crop: crop.pressure,
        crop_offset: crop.offset,
        metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordUnits {
    Millimetres,
    Voxels,
}

impl CoordUnits {
    pub fn label(self) -> &'static str {
        match self {
            CoordUnits::Millimetres => "mm",
            CoordUnits::Voxels => "voxels",
        }
    }

    /// Decides whether a transducer point cloud is in voxel indices or mm.
    ///
    /// Points are voxel indices when every coordinate lies in `[0, n]` for the
    /// largest crop dimension `n` and at least one exceeds the crop's physical
    /// size in mm. Anything else is read as mm.
    pub fn detect(points: &[[f64; 3]], crop_dims: [usize; 3], spacing_mm: f64) -> Self {
        if points.is_empty() {
            return CoordUnits::Millimetres;
        }
        let n = *crop_dims.iter().max().unwrap_or(&1) as f64;
        let in_index_range = points.iter().flatten().all(|&c| (0.0..=n).contains(&c));
        let beyond_physical = points.iter().flatten().any(|&c| c > n * spacing_mm);
        if in_index_range && beyond_physical {
            CoordUnits::Voxels
        } else {
            CoordUnits::Millimetres
        }
    }
}

/// The three members of a dataset artifact.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub ct_crop: Option<ScalarField3D>,
    pub pressure: ScalarField3D,
    pub transducer_coords: Option<Vec<[f64; 3]>>,
    pub coord_units: Option<CoordUnits>,
}

/// Reads an artifact; only `pressure` is mandatory.
pub fn read_artifact(path: &Path, spacing_mm: f64) -> Result<Artifact> {
    let mut members = read_npz(path)?;
    let pressure = members
        .remove("pressure")
        .ok_or_else(|| Error::format(path, "missing member 'pressure'"))?
        .to_field(spacing_mm, Units::Pascal)?;
    let ct_crop = members.remove("ct_crop").map(|a| a.to_field(spacing_mm, Units::Hounsfield)).transpose()?;
    let transducer_coords = members.remove("transducer_coords").map(|a| a.to_points()).transpose()?;
    let coord_units = transducer_coords.as_ref().map(|p| CoordUnits::detect(p, pressure.dims(), spacing_mm));
    Ok(Artifact { ct_crop, pressure, transducer_coords, coord_units })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocessing {
    /// Divide by the maximum.
    Raw,
    /// Divide by the maximum, then `log(1 + x)`.
    LogCompressed,
}

impl Preprocessing {
    pub fn label(self) -> &'static str {
        match self {
            Preprocessing::Raw => "raw",
            Preprocessing::LogCompressed => "log_compressed",
        }
    }

    pub fn apply(self, f: &ScalarField3D) -> Result<ScalarField3D> {
        Ok(match self {
            Preprocessing::Raw => normalize_by_max(f)?,
            Preprocessing::LogCompressed => compress_pressure(f)?,
        })
    }
}

fn metrics_json(m: &FieldMetrics) -> Value {
    json!({
        "relative_l2": m.relative_l2,
        "focal_position_error_mm": m.focal_position_error,
        "max_pressure_error_pct": m.max_pressure_error,
        "weighted_mse": m.weighted_mse,
        "grad_loss": m.grad_loss,
        "composite": m.composite,
    })
}

fn stats_json(s: &Stats) -> Value {
    json!({ "median": s.median, "mean": s.mean, "std": s.std })
}

/// Compares two pressure fields after per-field normalization.
pub fn compare_fields(pred: &ScalarField3D, gt: &ScalarField3D, params: &MetricParams, prep: Preprocessing) -> Result<FieldMetrics> {
    if pred.dims() != gt.dims() {
        return Err(Error::Argument(format!("pressure shapes differ: {:?} vs {:?}", pred.dims(), gt.dims())));
    }
    let p = prep.apply(pred)?;
    let g = prep.apply(gt)?;
    Ok(compute_all(&p, &g, params)?)
}

/// Evaluates one prediction/ground-truth pair or two directories of
/// same-named `.npz` files and returns the JSON report.
pub fn evaluate(pred: &Path, gt: &Path, params: &MetricParams, prep: Preprocessing) -> Result<Value> {
    params.validate()?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = if pred.is_dir() && gt.is_dir() {
        let mut names: Vec<String> = std::fs::read_dir(gt)
            .map_err(|e| Error::io(gt, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".npz"))
            .collect();
        names.sort();
        let pairs: Vec<_> = names
            .into_iter()
            .filter(|n| pred.join(n).is_file())
            .map(|n| (n.clone(), pred.join(&n), gt.join(&n)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::Argument(format!(
                "no matching .npz names between {} and {}",
                pred.display(),
                gt.display()
            )));
        }
        pairs
    } else if pred.is_dir() || gt.is_dir() {
        return Err(Error::Argument("pred and gt must both be files or both be directories".into()));
    } else {
        vec![(gt.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(), pred.into(), gt.into())]
    };
    let spacing = params.spacing[0];
    let mut samples = Vec::new();
    let mut cases = Vec::new();
    for (name, p, g) in &pairs {
        let pa = read_artifact(p, spacing)?;
        let ga = read_artifact(g, spacing)?;
        let m = compare_fields(&pa.pressure, &ga.pressure, params, prep)
            .map_err(|e| match e {
                Error::Argument(msg) => Error::Argument(format!("{name}: {msg}")),
                other => other,
            })?;
        cases.push(json!({
            "name": name,
            "pred": p.display().to_string(),
            "gt": g.display().to_string(),
            "gt_transducer_coords_units": ga.coord_units.map(CoordUnits::label),
            "metrics": metrics_json(&m),
        }));
        samples.push(m);
    }
    let s = summarize(&samples)?;
    Ok(json!({
        "software": { "name": "tfus", "version": VERSION },
        "preprocessing": prep.label(),
        "normalization": "each field divided by its own maximum",
        "params": {
            "alpha_weight": params.alpha_weight,
            "lambda": params.lambda,
            "spacing_mm": params.spacing,
            "physical_gradients": params.physical_gradients,
        },
        "n_pairs": samples.len(),
        "std_convention": "population",
        "cases": cases,
        "summary": {
            "relative_l2": stats_json(&s.relative_l2),
            "focal_position_error_mm": stats_json(&s.focal_position_error),
            "max_pressure_error_pct": stats_json(&s.max_pressure_error),
            "weighted_mse": stats_json(&s.weighted_mse),
            "grad_loss": stats_json(&s.grad_loss),
            "composite": stats_json(&s.composite),
        },
    }))
}
