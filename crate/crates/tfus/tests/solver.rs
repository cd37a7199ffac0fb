mod common;

use common::physics::{self, quiet, water, C, RHO};
use common::temporal;
use tfus::solver::{Simulation, SolverSettings, Source};
use tfus::Error;
use tfus_core::medium::AcousticMedium;
use tfus_core::transducer::CwDrive;
use tfus_core::{GridSpec, ScalarField3D, Units};

const DT: f64 = 1e-7;

fn point_source(grid: &GridSpec, ijk: [usize; 3], amplitude: f64) -> Source {
    Source { nodes: vec![(grid.index(ijk[0], ijk[1], ijk[2]), 1.0)], drive: CwDrive::new(5e5, amplitude) }
}

fn layered(dims: [usize; 3]) -> AcousticMedium {
    let grid = GridSpec::isotropic(dims, 0.5).unwrap();
    let mut m = AcousticMedium::homogeneous(grid, RHO, C, 0.0, 1.1).unwrap();
    let slab = |i: usize, j: usize, k: usize| (dims[0] / 2..dims[0] / 2 + 3).contains(&i) && j > 2 && k > 2;
    m.rho = ScalarField3D::from_fn(grid, Units::KgPerM3, |i, j, k| if slab(i, j, k) { 1800.0 } else { RHO as f32 }).unwrap();
    m.c = ScalarField3D::from_fn(grid, Units::MetresPerSecond, |i, j, k| if slab(i, j, k) { 2800.0 } else { C as f32 }).unwrap();
    m.c_ref = 2800.0;
    m
}

fn run_pressure(medium: &AcousticMedium, source: Option<&Source>, settings: &SolverSettings, steps: usize) -> ScalarField3D {
    let mut sim = Simulation::new(medium, source, settings).unwrap();
    sim.run(steps, |_, _| Ok(())).unwrap();
    sim.pressure()
}

#[test]
fn zero_state_without_source_stays_zero() {
    let medium = water([16, 16, 16], 0.5);
    let p = run_pressure(&medium, None, &quiet([4; 3], DT), 25);
    assert!(p.values().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_steps_leave_fields_zero_and_skip_the_recorder() {
    let medium = water([12, 12, 12], 0.5);
    let src = point_source(medium.grid(), [6, 6, 6], 1.0);
    let mut sim = Simulation::new(&medium, Some(&src), &quiet([4; 3], DT)).unwrap();
    let mut calls = 0;
    let summary = sim
        .run(0, |_, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
    assert_eq!((summary.steps, calls), (0, 0));
    assert!(sim.state().p.iter().all(|&v| v == 0.0));
    assert!(sim.state().u.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn recorder_sees_every_step_in_order() {
    let medium = water([8, 8, 8], 0.5);
    let mut sim = Simulation::new(&medium, None, &quiet([2; 3], DT)).unwrap();
    let mut seen = Vec::new();
    sim.run(5, |s, sim| {
        seen.push((s, sim.state().step_index));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
}

#[test]
fn doubling_the_drive_doubles_the_field() {
    let medium = layered([20, 20, 20]);
    let settings = quiet([6; 3], 5e-8);
    let a = run_pressure(&medium, Some(&point_source(medium.grid(), [5, 10, 10], 1.0)), &settings, 60);
    let b = run_pressure(&medium, Some(&point_source(medium.grid(), [5, 10, 10], 2.0)), &settings, 60);
    let scale = a.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((2.0 * x - y).abs() <= 1e-6 * 2.0 * scale);
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let medium = layered([20, 20, 20]);
    let settings = quiet([6; 3], 5e-8);
    let src = point_source(medium.grid(), [4, 9, 11], 1.0);
    let a = run_pressure(&medium, Some(&src), &settings, 40);
    let b = run_pressure(&medium, Some(&src), &settings, 40);
    assert_eq!(a.values(), b.values());
}

#[test]
fn mirrored_medium_and_source_mirror_the_field() {
    let dims = [20, 20, 20];
    let medium = layered(dims);
    let grid = *medium.grid();
    let mirror = |f: &ScalarField3D| {
        ScalarField3D::from_fn(grid, f.units(), |i, j, k| f.get(dims[0] - 1 - i, j, k)).unwrap()
    };
    let mut flipped = medium.clone();
    flipped.rho = mirror(&medium.rho);
    flipped.c = mirror(&medium.c);
    flipped.alpha0 = mirror(&medium.alpha0);
    let settings = quiet([6; 3], 5e-8);
    let a = run_pressure(&medium, Some(&point_source(&grid, [4, 9, 11], 1.0)), &settings, 60);
    let b = run_pressure(&flipped, Some(&point_source(&grid, [15, 9, 11], 1.0)), &settings, 60);
    let b = mirror(&b);
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    let den: f64 = a.values().iter().map(|x| (*x as f64).powi(2)).sum();
    assert!((num / den).sqrt() < 1e-6, "relative difference {:e}", (num / den).sqrt());
}

/// Leapfrog acoustic energy `sum p²/(2 rho c²) + rho u⁻.u⁺/2`, pairing the
/// velocities half a step before and after the pressure time.
fn energy(p: &[f32], u_before: &[Vec<f32>; 3], u_after: &[Vec<f32>; 3]) -> f64 {
    let mut e = 0.0;
    for i in 0..p.len() {
        e += (p[i] as f64).powi(2) / (2.0 * RHO * C * C);
        for a in 0..3 {
            e += 0.5 * RHO * u_before[a][i] as f64 * u_after[a][i] as f64;
        }
    }
    e
}

#[test]
fn lossless_energy_is_conserved_before_the_pml() {
    let n = 56;
    let medium = water([n; 3], 0.5);
    let mut sim = Simulation::new(&medium, None, &quiet([4; 3], DT)).unwrap();
    let c = n as f64 / 2.0;
    let p0 = ScalarField3D::from_fn(*medium.grid(), Units::Pascal, |i, j, k| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2);
        (-r2 / (2.5f64 * 2.5)).exp() as f32
    })
    .unwrap();
    sim.set_initial_pressure(&p0).unwrap();
    let mut energies = Vec::new();
    for _ in 0..50 {
        let p = sim.state().p.clone();
        let u_before = sim.state().u.clone();
        sim.step().unwrap();
        energies.push(energy(&p, &u_before, &sim.state().u));
    }
    // The first entry pairs the initial state with an unphysical u(-dt/2) = 0.
    let reference = energies[1];
    for (s, e) in energies.iter().enumerate().skip(1) {
        assert!((e - reference).abs() / reference < 1e-3, "step {s}: {e} vs {reference}");
    }
    // Wave has moved: the centre has lost most of its pressure.
    let centre = sim.index_of(n / 2, n / 2, n / 2);
    assert!(sim.state().p[centre].abs() < 0.2);
}

#[test]
fn energy_decays_once_the_wave_enters_the_pml() {
    let n = 24;
    let medium = water([n; 3], 0.5);
    let mut sim = Simulation::new(&medium, None, &quiet([10; 3], DT)).unwrap();
    let c = n as f64 / 2.0;
    let p0 = ScalarField3D::from_fn(*medium.grid(), Units::Pascal, |i, j, k| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2) + (k as f64 - c).powi(2);
        (-r2 / 4.0).exp() as f32
    })
    .unwrap();
    sim.set_initial_pressure(&p0).unwrap();
    let mut energies = Vec::new();
    for _ in 0..300 {
        let p = sim.state().p.clone();
        let u_before = sim.state().u.clone();
        sim.step().unwrap();
        energies.push(energy(&p, &u_before, &sim.state().u));
    }
    let reference = energies[1];
    for s in 2..energies.len() {
        assert!(energies[s] <= energies[s - 1] + 1e-3 * reference, "step {s}: {} > {}", energies[s], energies[s - 1]);
    }
    assert!(energies[299] < 1e-3 * reference, "{} left of {reference}", energies[299]);
}

#[test]
fn resolved_plane_wave_keeps_amplitude_and_speed() {
    let r = physics::plane_wave(32, [4, 2, 1], 200);
    assert!(r.amplitude_error < 0.01, "{r:?}");
    assert!(r.phase_speed_error < 1e-3, "{r:?}");
}

#[test]
fn absorption_without_dispersion_follows_the_power_law() {
    for (alpha0, y) in [(4.0, 1.1), (4.0, 1.5), (1.0, 1.8)] {
        let d = physics::absorption_decay(alpha0, y, 20.0, false);
        assert!(d.relative_error() < 0.05, "{alpha0} {y}: {d:?}");
    }
}

#[test]
fn absorbing_mode_matches_the_model_frequency() {
    for dispersion in [false, true] {
        let (k, w) = temporal::measured_frequency(4.0, 1.1, dispersion, 8, 2e-8, 2000);
        let model = temporal::model_frequency(k, 4.0, 1.1, dispersion);
        assert!((w.re / model.re - 1.0).abs() < 2e-3, "{dispersion}: {w} vs {model}");
        assert!((w.im / model.im - 1.0).abs() < 1e-2, "{dispersion}: {w} vs {model}");
    }
}

#[test]
fn dispersion_raises_the_phase_speed_for_y_above_one() {
    let k = 2.0 * std::f64::consts::PI / 2e-3;
    let lossless = C * k;
    let w = temporal::model_frequency(k, 4.0, 1.5, true);
    assert!(w.re > lossless);
    let (_, measured) = temporal::measured_frequency(4.0, 1.5, true, 8, 2e-8, 2000);
    assert!(measured.re > lossless * 1.001);
}

#[test]
fn ten_voxel_pml_reflects_below_minus_thirty_db() {
    let db = physics::pml_reflection_db(10);
    assert!(db <= -30.0, "{db} dB");
}

#[test]
fn non_finite_pressure_reports_the_step() {
    let medium = water([8, 8, 8], 0.5);
    let mut sim = Simulation::new(&medium, None, &quiet([2; 3], DT)).unwrap();
    sim.run(3, |_, _| Ok(())).unwrap();
    let idx = sim.index_of(4, 4, 4);
    sim.state_mut().rho[0][idx] = f32::NAN;
    match sim.run(5, |_, _| Ok(())) {
        Err(Error::Divergence { step, .. }) => assert_eq!(step, 4),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn unstable_time_step_is_rejected() {
    let medium = water([8, 8, 8], 0.5);
    // Bound is dx / (sqrt(3) c) = 192 ns.
    assert!(Simulation::new(&medium, None, &quiet([2; 3], 2e-7)).is_err());
    assert!(Simulation::new(&medium, None, &quiet([2; 3], 1.9e-7)).is_ok());
    assert!(Simulation::new(&medium, None, &quiet([2; 3], 0.0)).is_err());
}

#[test]
fn anisotropic_grid_is_rejected() {
    let grid = GridSpec::new([8, 8, 8], [0.5, 0.5, 0.6], [0.0; 3]).unwrap();
    let medium = AcousticMedium::homogeneous(grid, RHO, C, 0.0, 1.1).unwrap();
    assert!(Simulation::new(&medium, None, &quiet([2; 3], DT)).is_err());
}
