//! Numerical core for transcranial focused ultrasound simulation.
//!
//! Everything in this crate is pure computation over owned buffers and only
//! needs `alloc`: grids and scalar volumes, the Hounsfield-to-acoustic
//! property mapping, focused bowl geometry and grid deposition, PML
//! profiles, time stepping parameters, single-frequency amplitude
//! extraction, ROI cropping, field comparison metrics and the seeded
//! generator used for configuration sampling.
//!
//! The FFT based solver, file formats and the command line live in the
//! `tfus` crate, which builds on these types.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod amplitude;
pub mod error;
pub mod field;
pub mod math;
pub mod medium;
pub mod metrics;
pub mod phantom;
pub mod pml;
pub mod rng;
pub mod roi;
pub mod timing;
pub mod transducer;
pub mod transform;
pub mod vec3;

pub use error::{Error, Result};
pub use field::{GridSpec, ScalarField3D, Units};
