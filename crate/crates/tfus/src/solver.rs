//! k-space pseudo-spectral time stepping of the linear acoustic equations.
//!
//! The state is the pressure `p`, three split acoustic-density components
//! and three particle-velocity components stored half a voxel downstream
//! along their own axis. One step:
//!
//! 1. `u_a <- pml_a' (pml_a' u_a - dt / rho0_a' * d_a+ p)`
//! 2. `rho_a <- pml_a (pml_a rho_a - dt rho0 * d_a- u_a)`
//! 3. mass source added to every `rho_a` at the source nodes
//! 4. `p <- c² (sum rho_a + tau L1(rho0 div u) - eta L2(sum rho_a))`
//!
//! where `d_a±` multiplies the spectrum by `i k_a exp(±i k_a dx/2) kappa`,
//! `kappa = sinc(c_ref |k| dt / 2)`, primes mark staggered positions and the
//! absorption operators `L1`, `L2` multiply by `|k|^(y-2)` and `|k|^(y-1)`.
//! The domain is periodic; the PML surrounds the interior on every axis.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftNum;
use tfus_core::medium::AcousticMedium;
use tfus_core::pml::{build_pml, PmlProfile};
use tfus_core::timing::{absorbing_stable, AbsorbingCoefficients};
use tfus_core::transducer::CwDrive;
use tfus_core::{GridSpec, ScalarField3D, Units};

use crate::error::{Error, Result};
use crate::fft::{signed_index, Fft3};

/// Scale of the additive mass source relative to the plane-wave analytic
/// amplitude. A planar sheet of unit-strength nodes driven with `s(t)`
/// radiates plane waves of amplitude `s` to both sides at this value.
pub const SOURCE_CALIBRATION: f64 = 1.0;

/// Offset of a spectral derivative relative to the grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// Evaluate at `x + dx/2`.
    Forward,
    /// Evaluate at `x - dx/2`.
    Backward,
    Collocated,
}

/// Spatial filtering applied once to the deposited source mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFilter {
    /// Inject the deposited weights as they are.
    None,
    /// Temporal k-space correction `cos(c_ref |k| dt / 2)` for additive sources.
    Kappa,
    /// Kappa correction plus division by the trilinear deposition response
    /// `prod_a sinc²(k_a dx / 2)`.
    KappaDeconvolved,
}

/// Numerical settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// PML thickness in voxels per axis (added outside the interior grid).
    pub pml_thickness: [usize; 3],
    /// nepers per voxel
    pub pml_strength: f64,
    pub pml_order: f64,
    /// s
    pub dt: f64,
    pub source_filter: SourceFilter,
    /// Keep the causal dispersion term of the power-law absorption model.
    pub absorption_dispersion: bool,
    /// Print `step k/N, max|p|=...` lines to stderr.
    pub progress: bool,
}

impl SolverSettings {
    pub fn new(pml_thickness: usize, dt: f64) -> Self {
        Self {
            pml_thickness: [pml_thickness; 3],
            pml_strength: 2.0,
            pml_order: 4.0,
            dt,
            source_filter: SourceFilter::KappaDeconvolved,
            absorption_dispersion: true,
            progress: false,
        }
    }
}

/// A driven point set: `(interior linear index, sheet strength)` plus the drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub nodes: Vec<(usize, f64)>,
    pub drive: CwDrive,
}

fn real<T: FftNum>(x: f64) -> T {
    T::from_f64(x).expect("finite value fits the working precision")
}

/// Spectral operators on a padded periodic grid, generic over precision.
pub struct SpectralOps<T: FftNum = f32> {
    fft: Fft3<T>,
    /// `kappa / N` in spectral order.
    kappa: Vec<T>,
    /// Per-axis `i k exp(+i k dx/2)`, `i k exp(-i k dx/2)` and `i k`, Nyquist zeroed.
    forward: [Vec<Complex<T>>; 3],
    backward: [Vec<Complex<T>>; 3],
    collocated: [Vec<Complex<T>>; 3],
    /// Signed wavenumbers (rad/m) per axis in spectral order.
    k: [Vec<f64>; 3],
    spec_a: Vec<Complex<T>>,
    spec_b: Vec<Complex<T>>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

impl<T: FftNum> SpectralOps<T> {
    /// `dims` padded grid size, `dx` spacing in metres.
    pub fn new(dims: [usize; 3], dx: [f64; 3], c_ref: f64, dt: f64) -> Self {
        let fft = Fft3::new(dims);
        let n_total = (dims[0] * dims[1] * dims[2]) as f64;
        let mut k: [Vec<f64>; 3] = Default::default();
        let mut forward: [Vec<Complex<T>>; 3] = Default::default();
        let mut backward: [Vec<Complex<T>>; 3] = Default::default();
        let mut collocated: [Vec<Complex<T>>; 3] = Default::default();
        for a in 0..3 {
            let n = dims[a];
            let len = if a == 0 { fft.nkx() } else { n };
            k[a] = (0..len)
                .map(|i| {
                    let s = if a == 0 { i as isize } else { signed_index(i, n) };
                    2.0 * PI * s as f64 / (n as f64 * dx[a])
                })
                .collect();
            let op = |sign: f64| -> Vec<Complex<T>> {
                (0..len)
                    .map(|i| {
                        let kk = k[a][i];
                        let nyquist = n % 2 == 0 && (if a == 0 { i == n / 2 } else { i == n / 2 });
                        if nyquist || n == 1 {
                            return Complex::new(T::zero(), T::zero());
                        }
                        let ph = sign * kk * dx[a] / 2.0;
                        // i k (cos ph + i sin ph)
                        Complex::new(real(-kk * ph.sin()), real(kk * ph.cos()))
                    })
                    .collect()
            };
            forward[a] = op(1.0);
            backward[a] = op(-1.0);
            collocated[a] = op(0.0);
        }
        let mut kappa = vec![T::zero(); fft.spectrum_len()];
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                for kx in 0..fft.nkx() {
                    let kmag = (k[0][kx].powi(2) + k[1][y].powi(2) + k[2][z].powi(2)).sqrt();
                    kappa[fft.spectral_index(kx, y, z)] = real(sinc(c_ref * kmag * dt / 2.0) / n_total);
                }
            }
        }
        let spec_a = fft.new_spectrum();
        let spec_b = fft.new_spectrum();
        Self { fft, kappa, forward, backward, collocated, k, spec_a, spec_b }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.fft.dims()
    }

    /// `|k|` at every spectral position.
    fn wavenumber_magnitude(&self) -> Vec<f64> {
        let [_, ny, nz] = self.dims();
        let nkx = self.fft.nkx();
        let mut out = vec![0.0; self.fft.spectrum_len()];
        for y in 0..ny {
            for z in 0..nz {
                for kx in 0..nkx {
                    out[self.fft.spectral_index(kx, y, z)] =
                        (self.k[0][kx].powi(2) + self.k[1][y].powi(2) + self.k[2][z].powi(2)).sqrt();
                }
            }
        }
        out
    }

    /// Transforms `field` into the internal spectrum buffer.
    fn load(&mut self, field: &[T]) {
        self.fft.forward(field, &mut self.spec_a);
    }

    /// Applies `kappa * op_axis` to the loaded spectrum and inverts into `out`.
    fn derivative_of_loaded(&mut self, axis: usize, shift: Shift, out: &mut [T]) {
        let op = match shift {
            Shift::Forward => &self.forward[axis],
            Shift::Backward => &self.backward[axis],
            Shift::Collocated => &self.collocated[axis],
        };
        let [_, _, nz] = self.fft.dims();
        let nkx = self.fft.nkx();
        let kappa = &self.kappa;
        self.spec_b
            .par_chunks_mut(nkx * nz)
            .zip(self.spec_a.par_chunks(nkx * nz))
            .zip(kappa.par_chunks(nkx * nz))
            .enumerate()
            .for_each(|(y, ((dst, src), kap))| {
                for z in 0..nz {
                    let row = z * nkx;
                    for kx in 0..nkx {
                        let m = match axis {
                            0 => op[kx],
                            1 => op[y],
                            _ => op[z],
                        };
                        dst[row + kx] = src[row + kx] * m * kap[row + kx];
                    }
                }
            });
        self.fft.inverse(&mut self.spec_b, out);
    }

    /// Multiplies the spectrum of `field` by a real spectral-order array and inverts.
    fn filter(&mut self, field: &[T], multiplier: &[T], out: &mut [T]) {
        self.fft.forward(field, &mut self.spec_a);
        self.spec_a.par_iter_mut().zip(multiplier.par_iter()).for_each(|(s, &m)| *s = *s * m);
        self.fft.inverse(&mut self.spec_a, out);
    }

    /// Spectral derivative (per metre) of `field` along `axis`, k-space corrected.
    pub fn gradient(&mut self, field: &[T], axis: usize, shift: Shift, out: &mut [T]) {
        self.load(field);
        self.derivative_of_loaded(axis, shift, out);
    }
}

/// Split-field wave state on the padded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub p: Vec<f32>,
    pub rho: [Vec<f32>; 3],
    pub u: [Vec<f32>; 3],
    pub step_index: usize,
}

impl WaveState {
    fn zeros(n: usize) -> Self {
        let z = || vec![0.0f32; n];
        Self { p: z(), rho: [z(), z(), z()], u: [z(), z(), z()], step_index: 0 }
    }
}

struct Absorption {
    tau: Vec<f32>,
    eta: Vec<f32>,
    dispersive: bool,
    /// `|k|^(y-2) / N`
    nabla1: Vec<f32>,
    /// `|k|^(y-1) / N`
    nabla2: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub wall_time: Duration,
    pub peak_memory_bytes: usize,
}

/// dB/(MHz^y cm) to Np/((rad/s)^y m).
pub fn db_to_neper(alpha_db: f64, y: f64) -> f64 {
    100.0 * alpha_db * (1e-6 / (2.0 * PI)).powf(y) / (20.0 * std::f64::consts::E.log10())
}

/// Largest wavenumber magnitude (rad/m) on a grid of spacing `dx` (m).
pub fn max_wavenumber(dx: f64) -> f64 {
    3f64.sqrt() * PI / dx
}

/// Medium-wide maxima of the absorbing scheme's coefficients, for
/// [`tfus_core::timing::absorbing_stable`].
pub fn absorbing_coefficients(medium: &AcousticMedium, dispersion: bool) -> AbsorbingCoefficients {
    let y = medium.alpha_power;
    let tan = if dispersion { (PI * y / 2.0).tan() } else { 0.0 };
    let mut m = AbsorbingCoefficients::default();
    for (&a_db, &c) in medium.alpha0.values().iter().zip(medium.c.values()) {
        let (a, c) = (db_to_neper(a_db as f64, y), c as f64);
        let c2 = c * c;
        m.c2 = m.c2.max(c2);
        m.dispersive = m.dispersive.max(-2.0 * a * c.powf(y) * tan * c2);
        m.damping = m.damping.max(2.0 * a * c.powf(y - 1.0) * c2);
    }
    m
}

/// Replicates edge values of an interior volume outward by `pad` voxels.
fn pad_edges(field: &ScalarField3D, pad: [usize; 3]) -> Vec<f32> {
    let [nx, ny, nz] = field.dims();
    let dims = [nx + 2 * pad[0], ny + 2 * pad[1], nz + 2 * pad[2]];
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    let clamp = |i: usize, p: usize, n: usize| (i as isize - p as isize).clamp(0, n as isize - 1) as usize;
    for k in 0..dims[2] {
        let kk = clamp(k, pad[2], nz);
        for j in 0..dims[1] {
            let jj = clamp(j, pad[1], ny);
            for i in 0..dims[0] {
                out.push(field.get(clamp(i, pad[0], nx), jj, kk));
            }
        }
    }
    out
}

pub struct Simulation {
    interior: GridSpec,
    dims: [usize; 3],
    pad: [usize; 3],
    dx: f64,
    dt: f64,
    ops: SpectralOps,
    rho0: Vec<f32>,
    c2: Vec<f32>,
    /// `dt / rho0` at the staggered velocity positions of each axis.
    dt_over_rho_sg: [Vec<f32>; 3],
    pml: [Vec<f32>; 3],
    pml_sg: [Vec<f32>; 3],
    absorption: Option<Absorption>,
    source_nodes: Vec<(usize, f32)>,
    drive: Option<CwDrive>,
    state: WaveState,
    tmp: Vec<f32>,
    div: Vec<f32>,
    rho_sum: Vec<f32>,
    progress: bool,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation").field("dims", &self.dims).field("step", &self.state.step_index).finish()
    }
}

impl Simulation {
    pub fn new(medium: &AcousticMedium, source: Option<&Source>, settings: &SolverSettings) -> Result<Self> {
        medium.validate()?;
        let interior = *medium.grid();
        if !interior.is_isotropic() {
            return Err(Error::Argument("solver needs an isotropic grid".into()));
        }
        if !(settings.dt > 0.0) {
            return Err(Error::Argument("dt must be > 0".into()));
        }
        let dx = interior.spacing[0] * 1e-3;
        let pad = settings.pml_thickness;
        let [nx, ny, nz] = interior.dims;
        let dims = [nx + 2 * pad[0], ny + 2 * pad[1], nz + 2 * pad[2]];
        let n = dims[0] * dims[1] * dims[2];
        let c_ref = medium.c_ref;
        let dt = settings.dt;
        let stable = tfus_core::timing::cfl_bound(dx, c_ref);
        if dt > stable * (1.0 + 1e-9) {
            return Err(Error::Argument(format!("dt {dt:e} s exceeds the stability bound {stable:e} s")));
        }
        if medium.is_absorbing() {
            let coeffs = absorbing_coefficients(medium, settings.absorption_dispersion);
            if !absorbing_stable(dt, c_ref, max_wavenumber(dx), medium.alpha_power, &coeffs) {
                return Err(Error::Argument(format!(
                    "dt {dt:e} s is unstable for the absorbing medium; use more steps per period"
                )));
            }
        }

        let ops = SpectralOps::new(dims, [dx; 3], c_ref, dt);
        let rho0 = pad_edges(&medium.rho, pad);
        let c = pad_edges(&medium.c, pad);
        let c2: Vec<f32> = c.iter().map(|&v| v * v).collect();

        let stride = [1, dims[0], dims[0] * dims[1]];
        let mut dt_over_rho_sg: [Vec<f32>; 3] = Default::default();
        for a in 0..3 {
            let mut out = vec![0.0f32; n];
            for (lin, o) in out.iter_mut().enumerate() {
                let i = (lin / stride[a]) % dims[a];
                let next = if i + 1 < dims[a] { lin + stride[a] } else { lin };
                let (r0, r1) = (rho0[lin] as f64, rho0[next] as f64);
                let harmonic = 2.0 / (1.0 / r0 + 1.0 / r1);
                *o = (dt / harmonic) as f32;
            }
            dt_over_rho_sg[a] = out;
        }

        let profile: PmlProfile = build_pml(pad, settings.pml_strength, settings.pml_order, dims, c_ref, [dx; 3])?;
        let damp = |s: &Vec<f64>| s.iter().map(|&sig| (-sig * dt / 2.0).exp() as f32).collect::<Vec<f32>>();
        let pml = [damp(&profile.collocated[0]), damp(&profile.collocated[1]), damp(&profile.collocated[2])];
        let pml_sg = [damp(&profile.staggered[0]), damp(&profile.staggered[1]), damp(&profile.staggered[2])];

        let absorption = if medium.is_absorbing() {
            let y = medium.alpha_power;
            let alpha = pad_edges(&medium.alpha0, pad);
            let n_total = n as f64;
            let mut tau = Vec::with_capacity(n);
            let mut eta = Vec::with_capacity(n);
            let dispersion = if settings.absorption_dispersion { (PI * y / 2.0).tan() } else { 0.0 };
            for (&a_db, &cc) in alpha.iter().zip(&c) {
                let a_np = db_to_neper(a_db as f64, y);
                let cc = cc as f64;
                tau.push((-2.0 * a_np * cc.powf(y - 1.0)) as f32);
                eta.push((2.0 * a_np * cc.powf(y) * dispersion) as f32);
            }
            let kmag = ops.wavenumber_magnitude();
            let pow = |e: f64| -> Vec<f32> {
                kmag.iter().map(|&k| if k == 0.0 { 0.0 } else { (k.powf(e) / n_total) as f32 }).collect()
            };
            Some(Absorption { tau, eta, dispersive: settings.absorption_dispersion, nabla1: pow(y - 2.0), nabla2: pow(y - 1.0) })
        } else {
            None
        };

        let mut sim = Self {
            interior,
            dims,
            pad,
            dx,
            dt,
            ops,
            rho0,
            c2,
            dt_over_rho_sg,
            pml,
            pml_sg,
            absorption,
            source_nodes: Vec::new(),
            drive: None,
            state: WaveState::zeros(n),
            tmp: vec![0.0; n],
            div: vec![0.0; n],
            rho_sum: vec![0.0; n],
            progress: settings.progress,
        };
        if let Some(src) = source {
            sim.install_source(src, settings.source_filter, &c)?;
        }
        Ok(sim)
    }

    fn install_source(&mut self, src: &Source, filter: SourceFilter, c: &[f32]) -> Result<()> {
        src.drive.validate()?;
        let n = self.rho0.len();
        let mut mask = vec![0.0f32; n];
        let interior_len = self.interior.len();
        for &(idx, strength) in &src.nodes {
            if idx >= interior_len {
                return Err(Error::Argument(format!("source node {idx} outside the grid")));
            }
            let [i, j, k] = self.interior.coords(idx);
            let p = self.padded_index(i, j, k);
            // Mass injected per step into each split component; the three sum to 2 dt / (c dx).
            let scale = SOURCE_CALIBRATION * 2.0 * self.dt / (3.0 * c[p] as f64 * self.dx);
            mask[p] += (strength * scale) as f32;
        }
        if filter != SourceFilter::None && !src.nodes.is_empty() {
            let kmag = self.ops.wavenumber_magnitude();
            let c_ref = c.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
            let n_total = n as f64;
            let [_, ny, nz] = self.dims;
            let nkx = self.ops.fft.nkx();
            let mut mult = vec![0.0f32; kmag.len()];
            for y in 0..ny {
                for z in 0..nz {
                    for kx in 0..nkx {
                        let idx = self.ops.fft.spectral_index(kx, y, z);
                        // Mass at k = 0 or at a Nyquist wavenumber cannot propagate and
                        // would otherwise accumulate as a standing oscillation.
                        let [nx, ny, nz] = self.dims;
                        let nyquist = (nx % 2 == 0 && nx > 1 && kx == nx / 2)
                            || (ny % 2 == 0 && ny > 1 && y == ny / 2)
                            || (nz % 2 == 0 && nz > 1 && z == nz / 2);
                        if nyquist || kmag[idx] == 0.0 {
                            continue;
                        }
                        let mut m = (c_ref * kmag[idx] * self.dt / 2.0).cos();
                        if filter == SourceFilter::KappaDeconvolved {
                            for (a, ki) in [(0, kx), (1, y), (2, z)] {
                                let s = sinc(self.ops.k[a][ki] * self.dx / 2.0);
                                m /= s * s;
                            }
                        }
                        mult[idx] = (m / n_total) as f32;
                    }
                }
            }
            let mut filtered = vec![0.0f32; n];
            self.ops.filter(&mask, &mult, &mut filtered);
            mask = filtered;
        }
        let peak = mask.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        self.source_nodes = mask
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1e-6 * peak)
            .map(|(i, &v)| (i, v))
            .collect();
        self.drive = Some(src.drive);
        Ok(())
    }

    #[inline]
    fn padded_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i + self.pad[0]) + self.dims[0] * ((j + self.pad[1]) + self.dims[1] * (k + self.pad[2]))
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn interior_grid(&self) -> &GridSpec {
        &self.interior
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &WaveState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut WaveState {
        &mut self.state
    }

    /// Number of nodes the source injects into after filtering.
    pub fn source_node_count(&self) -> usize {
        self.source_nodes.len()
    }

    /// Sets an initial pressure (interior grid) with the density split equally
    /// over the three components and zero velocity.
    pub fn set_initial_pressure(&mut self, p0: &ScalarField3D) -> Result<()> {
        if p0.dims() != self.interior.dims {
            return Err(Error::Argument("initial pressure has the wrong shape".into()));
        }
        let [nx, ny, nz] = self.interior.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let idx = self.padded_index(i, j, k);
                    let p = p0.get(i, j, k);
                    self.state.p[idx] = p;
                    for a in 0..3 {
                        self.state.rho[a][idx] = p / (3.0 * self.c2[idx]);
                    }
                }
            }
        }
        Ok(())
    }

    /// Padded linear index of interior voxel `(i, j, k)`.
    pub fn index_of(&self, i: usize, j: usize, k: usize) -> usize {
        self.padded_index(i, j, k)
    }

    /// Copies interior z-plane `z` of the pressure into `out` (`nx * ny`).
    pub fn copy_interior_slab(&self, z: usize, out: &mut [f32]) {
        let [nx, ny, _] = self.interior.dims;
        for j in 0..ny {
            let start = self.padded_index(0, j, z);
            out[j * nx..(j + 1) * nx].copy_from_slice(&self.state.p[start..start + nx]);
        }
    }

    /// Interior pressure as a field (Pa).
    pub fn pressure(&self) -> ScalarField3D {
        let [nx, ny, nz] = self.interior.dims;
        let mut values = vec![0.0f32; nx * ny * nz];
        for (z, slab) in values.chunks_mut(nx * ny).enumerate() {
            self.copy_interior_slab(z, slab);
        }
        ScalarField3D::new(self.interior, values, Units::Pascal).expect("finite pressure")
    }

    /// Bytes held by field buffers and operators.
    pub fn memory_bytes(&self) -> usize {
        let n = self.rho0.len();
        let reals = 3 + 3 + 3 + 3 + 3 + 1 + 1 + 3;
        let spectra = 3 * self.ops.fft.spectrum_len();
        let absorption = if self.absorption.is_some() { 2 * n + spectra / 3 * 2 } else { 0 };
        4 * (reals * n + absorption + self.ops.kappa.len()) + 8 * spectra + 8 * self.source_nodes.len()
    }

    /// Advances by one time step. The source is evaluated at `step_index * dt`.
    pub fn step(&mut self) -> Result<()> {
        let [nx, ny, _] = self.dims;
        let plane = nx * ny;

        // Velocity from the pressure gradient.
        self.ops.load(&self.state.p);
        for a in 0..3 {
            self.ops.derivative_of_loaded(a, Shift::Forward, &mut self.tmp);
            let pml = &self.pml_sg[a];
            let coef = &self.dt_over_rho_sg[a];
            let grad = &self.tmp;
            self.state.u[a].par_chunks_mut(plane).enumerate().for_each(|(k, u)| {
                let base = k * plane;
                for (off, uv) in u.iter_mut().enumerate() {
                    let lin = base + off;
                    let i = [off % nx, off / nx, k][a];
                    let f = pml[i];
                    *uv = f * (f * *uv - coef[lin] * grad[lin]);
                }
            });
        }

        // Split density from the velocity divergence.
        let absorbing = self.absorption.is_some();
        if absorbing {
            self.div.iter_mut().for_each(|v| *v = 0.0);
        }
        for a in 0..3 {
            self.ops.load(&self.state.u[a]);
            self.ops.derivative_of_loaded(a, Shift::Backward, &mut self.tmp);
            let pml = &self.pml[a];
            let rho0 = &self.rho0;
            let dt = self.dt as f32;
            let du = &self.tmp;
            self.state.rho[a].par_chunks_mut(plane).enumerate().for_each(|(k, r)| {
                let base = k * plane;
                for (off, rv) in r.iter_mut().enumerate() {
                    let lin = base + off;
                    let i = [off % nx, off / nx, k][a];
                    let f = pml[i];
                    *rv = f * (f * *rv - dt * rho0[lin] * du[lin]);
                }
            });
            if absorbing {
                self.div.par_iter_mut().zip(self.tmp.par_iter()).for_each(|(d, &t)| *d += t);
            }
        }

        if let Some(drive) = &self.drive {
            let s = drive.sample(self.state.step_index as f64 * self.dt) as f32;
            for &(idx, w) in &self.source_nodes {
                for a in 0..3 {
                    self.state.rho[a][idx] += w * s;
                }
            }
        }

        let (rx, ry, rz) = (&self.state.rho[0], &self.state.rho[1], &self.state.rho[2]);
        self.rho_sum
            .par_iter_mut()
            .zip(rx.par_iter().zip(ry.par_iter().zip(rz.par_iter())))
            .for_each(|(s, (&a, (&b, &c)))| *s = a + b + c);

        if let Some(abs) = &self.absorption {
            // tau * L1(rho0 * div u)
            let weighted: Vec<f32> = self.div.iter().zip(&self.rho0).map(|(d, r)| d * r).collect();
            self.ops.filter(&weighted, &abs.nabla1, &mut self.div);
            if abs.dispersive {
                self.ops.filter(&self.rho_sum, &abs.nabla2, &mut self.tmp);
            } else {
                self.tmp.iter_mut().for_each(|v| *v = 0.0);
            }
            let (div, tmp, sum) = (&self.div, &self.tmp, &self.rho_sum);
            self.state.p.par_iter_mut().enumerate().for_each(|(i, p)| {
                *p = self.c2[i] * (sum[i] + abs.tau[i] * div[i] - abs.eta[i] * tmp[i]);
            });
        } else {
            let sum = &self.rho_sum;
            self.state.p.par_iter_mut().zip(self.c2.par_iter()).zip(sum.par_iter()).for_each(|((p, &c2), &s)| {
                *p = c2 * s;
            });
        }

        self.state.step_index += 1;
        if let Some(bad) = self.state.p.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.state.step_index, index: bad });
        }
        Ok(())
    }

    /// Runs `n_steps` steps, calling `recorder(step, self)` after each one.
    pub fn run<F>(&mut self, n_steps: usize, mut recorder: F) -> Result<RunSummary>
    where
        F: FnMut(usize, &Simulation) -> Result<()>,
    {
        let start = Instant::now();
        let report_every = (n_steps / 20).max(1);
        for s in 0..n_steps {
            self.step()?;
            recorder(s, self)?;
            if self.progress && ((s + 1) % report_every == 0 || s + 1 == n_steps) {
                let max = self.state.p.iter().fold(0.0f32, |m, v| m.max(v.abs()));
                eprintln!("step {}/{}, max|p|={:.4e}", s + 1, n_steps, max);
            }
        }
        Ok(RunSummary { steps: n_steps, wall_time: start.elapsed(), peak_memory_bytes: self.memory_bytes() })
    }
}
