//! Shared harness code: an independent Rayleigh surface-integral oracle and
//! small helpers used by several test targets.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Complex pressure of a spherical cap of monopole sources with uniform
/// surface pressure `a`, evaluated at `x` (metres):
/// `p(x) = (i k a / 2 pi) * integral of exp(-i k R) / R dS`.
///
/// The cap has radius of curvature `roc`, aperture `diameter`, its focus at
/// `focus` and its axis pointing from the apex towards `focus`. Midpoint
/// quadrature in polar angle and azimuth.
pub struct RayleighCap {
    points: Vec<([f64; 3], f64)>,
    k: f64,
    a: f64,
}

impl RayleighCap {
    pub fn new(focus: [f64; 3], axis: [f64; 3], roc: f64, diameter: f64, k: f64, a: f64, n_theta: usize) -> Self {
        let n = norm(axis);
        let w = [axis[0] / n, axis[1] / n, axis[2] / n];
        let helper = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = unit(cross(w, helper));
        let v = cross(w, u);
        let theta_max = (diameter / (2.0 * roc)).asin();
        let d_theta = theta_max / n_theta as f64;
        let mut points = Vec::new();
        for i in 0..n_theta {
            let th = (i as f64 + 0.5) * d_theta;
            // Azimuthal count proportional to ring circumference.
            let n_phi = ((2.0 * PI * th.sin() / d_theta).ceil() as usize).max(8);
            let d_phi = 2.0 * PI / n_phi as f64;
            let area = roc * roc * th.sin() * d_theta * d_phi;
            for j in 0..n_phi {
                let ph = (j as f64 + 0.5) * d_phi;
                let (s, c) = (th.sin(), th.cos());
                let mut p = [0.0; 3];
                for a in 0..3 {
                    // Points lie a distance roc behind the focus.
                    p[a] = focus[a] - roc * (c * w[a] - s * ph.cos() * u[a] - s * ph.sin() * v[a]);
                }
                points.push((p, area));
            }
        }
        Self { points, k, a }
    }

    /// Total quadrature area (m²).
    pub fn area(&self) -> f64 {
        self.points.iter().map(|(_, a)| a).sum()
    }

    pub fn amplitude(&self, x: [f64; 3]) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (p, area) in &self.points {
            let r = norm([x[0] - p[0], x[1] - p[1], x[2] - p[2]]);
            let ph = -self.k * r;
            re += area * ph.cos() / r;
            im += area * ph.sin() / r;
        }
        self.k * self.a / (2.0 * PI) * (re * re + im * im).sqrt()
    }
}

pub fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Length of the contiguous region around `peak` where `line >= level`,
/// with linear interpolation of both crossings (in samples).
pub fn width_above(line: &[f64], peak: usize, level: f64) -> f64 {
    let mut lo = peak as f64;
    let mut i = peak;
    while i > 0 && line[i - 1] >= level {
        i -= 1;
    }
    if i > 0 {
        lo = i as f64 - (line[i] - level) / (line[i] - line[i - 1]);
    } else {
        lo = lo.min(0.0);
    }
    let mut j = peak;
    while j + 1 < line.len() && line[j + 1] >= level {
        j += 1;
    }
    let hi = if j + 1 < line.len() { j as f64 + (line[j] - level) / (line[j] - line[j + 1]) } else { j as f64 };
    hi - lo
}

/// Runs `script` with `python3 -c`, returning stdout, or `None` when one of
/// `modules` cannot be imported.
pub fn python(modules: &[&str], script: &str, args: &[&std::path::Path]) -> Option<String> {
    let probe = std::process::Command::new("python3").arg("-c").arg(format!("import {}", modules.join(", "))).output();
    match probe {
        Ok(o) if o.status.success() => {}
        _ => {
            eprintln!("skipped: python3 with {modules:?} not available");
            return None;
        }
    }
    let out = std::process::Command::new("python3").arg("-c").arg(script).args(args).output().expect("python3 runs");
    assert!(out.status.success(), "python failed:\n{}", String::from_utf8_lossy(&out.stderr));
    Some(String::from_utf8(out.stdout).unwrap())
}

/// Wall-clock budget guard printed by long tests.
pub fn report_runtime(label: &str, start: std::time::Instant) {
    eprintln!("{label}: {:.1} s", start.elapsed().as_secs_f64());
}

pub mod physics {
    use std::f64::consts::PI;

    use tfus::solver::{db_to_neper, Simulation, SolverSettings, Source, SourceFilter};
    use tfus_core::amplitude::tone_amplitude;
    use tfus_core::medium::AcousticMedium;
    use tfus_core::transducer::CwDrive;
    use tfus_core::{GridSpec, ScalarField3D, Units};

    pub const RHO: f64 = 1000.0;
    pub const C: f64 = 1500.0;

    pub fn water(dims: [usize; 3], dx_mm: f64) -> AcousticMedium {
        AcousticMedium::homogeneous(GridSpec::isotropic(dims, dx_mm).unwrap(), RHO, C, 0.0, 1.1).unwrap()
    }

    pub fn quiet(pml: [usize; 3], dt: f64) -> SolverSettings {
        let mut s = SolverSettings::new(0, dt);
        s.pml_thickness = pml;
        s.progress = false;
        s
    }

    #[derive(Debug, Clone, Copy)]
    pub struct PlaneWave {
        pub amplitude_error: f64,
        pub phase_speed_error: f64,
    }

    /// Propagates a unit travelling plane wave with integer wave numbers `m`
    /// on a periodic `n³` grid (0.5 mm, 100 ns) and compares it with
    /// `cos(k.x - w t)` after `steps` steps.
    pub fn plane_wave(n: usize, m: [usize; 3], steps: usize) -> PlaneWave {
        let dx = 5e-4;
        let dt = 1e-7;
        let medium = water([n; 3], dx * 1e3);
        let mut sim = Simulation::new(&medium, None, &quiet([0; 3], dt)).unwrap();
        let kv = m.map(|v| 2.0 * PI * v as f64 / (n as f64 * dx));
        let k = super::norm(kv);
        let w = C * k;
        let phase = |i: usize, j: usize, l: usize, shift: [f64; 3]| {
            kv[0] * (i as f64 + shift[0]) * dx + kv[1] * (j as f64 + shift[1]) * dx + kv[2] * (l as f64 + shift[2]) * dx
        };
        for l in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = sim.index_of(i, j, l);
                    let p = phase(i, j, l, [0.0; 3]).cos();
                    let st = sim.state_mut();
                    st.p[idx] = p as f32;
                    for a in 0..3 {
                        let dir = kv[a] / k;
                        let mut shift = [0.0; 3];
                        shift[a] = 0.5;
                        st.rho[a][idx] = (dir * dir * p / (C * C)) as f32;
                        st.u[a][idx] = (dir * (phase(i, j, l, shift) + w * dt / 2.0).cos() / (RHO * C)) as f32;
                    }
                }
            }
        }
        sim.run(steps, |_, _| Ok(())).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        for l in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = sim.state().p[sim.index_of(i, j, l)] as f64;
                    let ph = phase(i, j, l, [0.0; 3]);
                    a += p * ph.cos();
                    b += p * ph.sin();
                }
            }
        }
        let norm = 2.0 / (n * n * n) as f64;
        let (a, b) = (a * norm, b * norm);
        let expected = w * steps as f64 * dt;
        let mut d = b.atan2(a) - expected;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        PlaneWave { amplitude_error: ((a * a + b * b).sqrt() - 1.0).abs(), phase_speed_error: (d / expected).abs() }
    }

    #[derive(Debug, Clone, Copy)]
    pub struct Decay {
        pub measured: f64,
        pub expected: f64,
    }

    impl Decay {
        pub fn relative_error(&self) -> f64 {
            (self.measured - self.expected).abs() / self.expected
        }
    }

    /// Plane-wave amplitude ratio over `distance_mm` in a medium with
    /// `alpha0` dB/(MHz^y cm), against `exp(-alpha(f0) d)`.
    pub fn absorption_decay(alpha0: f64, y: f64, distance_mm: f64, dispersion: bool) -> Decay {
        absorption_decay_with(alpha0, y, distance_mm, 0.25, 20, dispersion)
    }

    pub fn absorption_decay_with(alpha0: f64, y: f64, distance_mm: f64, dx_mm: f64, ppp: usize, dispersion: bool) -> Decay {
        let f0 = 1e6;
        let dt = 1.0 / (f0 * ppp as f64);
        let gap = (distance_mm / dx_mm).round() as usize;
        let margin = (10.0 / dx_mm) as usize;
        let (x0, x1) = (margin, 2 * margin);
        let x2 = x1 + gap;
        let nx = x2 + margin;
        let grid = GridSpec::isotropic([nx, 2, 2], dx_mm).unwrap();
        let medium = AcousticMedium::homogeneous(grid, RHO, C, alpha0, y).unwrap();
        let mut settings = quiet([20, 0, 0], dt);
        settings.source_filter = SourceFilter::Kappa;
        settings.absorption_dispersion = dispersion;
        let nodes = (0..4).map(|q| (grid.index(x0, q % 2, q / 2), 1.0)).collect();
        let source = Source { nodes, drive: CwDrive::new(f0, 1.0) };
        let mut sim = Simulation::new(&medium, Some(&source), &settings).unwrap();
        let transit = ((x2 - x0) as f64 * dx_mm * 1e-3 / C / dt).ceil() as usize;
        let window = 4 * ppp;
        let n_steps = (transit + 3 * ppp + window).div_ceil(ppp) * ppp;
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        sim.run(n_steps, |step, sim| {
            if step >= n_steps - window {
                s1.push(sim.state().p[sim.index_of(x1, 0, 0)] as f64);
                s2.push(sim.state().p[sim.index_of(x2, 0, 0)] as f64);
            }
            Ok(())
        })
        .unwrap();
        let measured = tone_amplitude(&s2, ppp).unwrap() / tone_amplitude(&s1, ppp).unwrap();
        let alpha_np = db_to_neper(alpha0, y) * (2.0 * PI * f0).powf(y);
        Decay { measured, expected: (-alpha_np * gap as f64 * dx_mm * 1e-3).exp() }
    }

    fn gaussian(n: usize, center: usize, width: f64) -> ScalarField3D {
        let grid = GridSpec::isotropic([n, 2, 2], 0.5).unwrap();
        ScalarField3D::from_fn(grid, Units::Pascal, |i, _, _| {
            let d = (i as f64 - center as f64) / width;
            (-d * d).exp() as f32
        })
        .unwrap()
    }

    /// Reflection from an `thickness`-voxel PML in dB relative to the
    /// incident pulse, by differencing a 128-voxel domain against the same
    /// window of a domain three times larger.
    pub fn pml_reflection_db(thickness: usize) -> f64 {
        let dt = 1e-7;
        let (n, steps, width) = (128, 400, 3.0);
        let run = |size: usize| {
            let medium = water([size, 2, 2], 0.5);
            let mut sim = Simulation::new(&medium, None, &quiet([thickness, 0, 0], dt)).unwrap();
            sim.set_initial_pressure(&gaussian(size, size / 2, width)).unwrap();
            sim.run(steps, |_, _| Ok(())).unwrap();
            sim.pressure()
        };
        let small = run(n);
        let large = run(3 * n);
        let mut worst = 0.0f64;
        for i in 0..n {
            let d = small.get(i, 0, 0) as f64 - large.get(i + n, 0, 0) as f64;
            worst = worst.max(d.abs());
        }
        // Each half of the split pulse carries amplitude 1/2.
        20.0 * (worst / 0.5).log10()
    }
}

pub mod temporal {
    use std::f64::consts::PI;

    use rustfft::num_complex::Complex64;
    use tfus::solver::{db_to_neper, Simulation};
    use tfus_core::medium::AcousticMedium;
    use tfus_core::GridSpec;

    use super::physics::{quiet, C, RHO};

    /// Complex angular frequency of a real wave number `k` in the continuous
    /// absorbing model `w² = k² c² (1 + i w tau k^(y-2) - eta k^(y-1))`.
    pub fn model_frequency(k: f64, alpha0: f64, y: f64, dispersion: bool) -> Complex64 {
        let a = db_to_neper(alpha0, y);
        let tau = -2.0 * a * C.powf(y - 1.0);
        let eta = if dispersion { 2.0 * a * C.powf(y) * (PI * y / 2.0).tan() } else { 0.0 };
        let mut w = Complex64::new(C * k, 0.0);
        for _ in 0..200 {
            let rhs = 1.0 + Complex64::i() * w * tau * k.powf(y - 2.0) - eta * k.powf(y - 1.0);
            w = C * k * rhs.sqrt();
        }
        // e^{-i w t} convention: decay is Im(w) < 0.
        w
    }

    /// Least-squares frequency of a travelling periodic wave in the solver:
    /// `(Re w, Im w)` from the phase and log-magnitude of its spatial mode.
    pub fn measured_frequency(alpha0: f64, y: f64, dispersion: bool, m: usize, dt: f64, steps: usize) -> (f64, Complex64) {
        let n = 64;
        let dx = 2.5e-4;
        let grid = GridSpec::isotropic([n, 2, 2], dx * 1e3).unwrap();
        let medium = AcousticMedium::homogeneous(grid, RHO, C, alpha0, y).unwrap();
        let mut settings = quiet([0; 3], dt);
        settings.absorption_dispersion = dispersion;
        let mut sim = Simulation::new(&medium, None, &settings).unwrap();
        let k = 2.0 * PI * m as f64 / (n as f64 * dx);
        let w0 = model_frequency(k, alpha0, y, dispersion).re;
        for q in 0..4 {
            for i in 0..n {
                let idx = sim.index_of(i, q % 2, q / 2);
                let st = sim.state_mut();
                let p = (k * i as f64 * dx).cos();
                st.p[idx] = p as f32;
                st.rho[0][idx] = (p / (C * C)) as f32;
                st.u[0][idx] = ((k * (i as f64 + 0.5) * dx + w0 * dt / 2.0).cos() / (RHO * C)) as f32;
            }
        }
        let mut samples = Vec::with_capacity(steps);
        sim.run(steps, |s, sim| {
            let mut a = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let p = sim.state().p[sim.index_of(i, 0, 0)] as f64;
                a += p * Complex64::from_polar(1.0, -k * i as f64 * dx);
            }
            samples.push(((s + 1) as f64 * dt, a * (2.0 / n as f64)));
            Ok(())
        })
        .unwrap();
        // Unwrap the phase and fit straight lines through phase and log|a|.
        let mut phase = Vec::with_capacity(steps);
        let mut prev = 0.0;
        let mut offset = 0.0;
        for (i, (_, a)) in samples.iter().enumerate() {
            let ph = a.arg();
            if i > 0 {
                let d = ph - prev;
                if d > PI {
                    offset -= 2.0 * PI;
                } else if d < -PI {
                    offset += 2.0 * PI;
                }
            }
            prev = ph;
            phase.push(ph + offset);
        }
        let fit = |ys: &[f64]| {
            let n = ys.len() as f64;
            let (sx, sy) = samples.iter().zip(ys).fold((0.0, 0.0), |(a, b), ((t, _), y)| (a + t, b + y));
            let (mx, my) = (sx / n, sy / n);
            let (num, den) = samples.iter().zip(ys).fold((0.0, 0.0), |(a, b), ((t, _), y)| (a + (t - mx) * (y - my), b + (t - mx).powi(2)));
            num / den
        };
        let logs: Vec<f64> = samples.iter().map(|(_, a)| a.norm().ln()).collect();
        (k, Complex64::new(-fit(&phase), fit(&logs)))
    }
}

pub mod cases {
    use std::path::{Path, PathBuf};

    use tfus::config::SimConfig;
    use tfus::io::nifti::{write_nifti, NiftiType};
    use tfus_core::phantom::make_skull_phantom;
    use tfus_core::{GridSpec, ScalarField3D, Units};

    pub fn water_ct(dir: &Path, n: usize) -> PathBuf {
        let grid = GridSpec::isotropic([n; 3], 0.5).unwrap();
        let path = dir.join(format!("water{n}.nii"));
        write_nifti(&path, &ScalarField3D::zeros(grid, Units::Hounsfield), NiftiType::I16).unwrap();
        path
    }

    /// Shell phantom centred in an `n³` grid at 0.5 mm.
    pub fn skull_ct(dir: &Path, n: usize, outer_radius: f64, thickness: f64, hu: f32) -> PathBuf {
        let grid = GridSpec::isotropic([n; 3], 0.5).unwrap();
        let path = dir.join(format!("skull{n}.nii"));
        write_nifti(&path, &make_skull_phantom(grid, outer_radius, thickness, hu).unwrap(), NiftiType::I16).unwrap();
        path
    }

    /// Desk-scale case: a bowl with its apex at `apex` (mm) firing along +x.
    pub fn bowl_config(ct: &Path, output: &Path, apex: [f64; 3], roc: f64, diameter: f64, crop: usize) -> SimConfig {
        let mut cfg = SimConfig::template("phantom", ct, crop);
        cfg.transducer.position = apex;
        cfg.transducer.axis = [1.0, 0.0, 0.0];
        cfg.transducer.roc = roc;
        cfg.transducer.diameter = diameter;
        cfg.output_path = output.to_path_buf();
        cfg
    }

    /// The 64³ water and shell-phantom case: roc 20 mm, aperture 30 mm,
    /// apex 1.5 mm from the x = 0 face, geometric focus at x = 21.5 mm.
    pub fn focused_64(ct: &Path, output: &Path) -> SimConfig {
        bowl_config(ct, output, [1.5, 16.0, 16.0], 20.0, 30.0, 64)
    }
}
