//! Transcranial focused-ultrasound simulation: file formats, the k-space
//! solver, the simulation pipeline and evaluation.

pub mod error;
pub mod config;
pub mod fft;
pub mod io;
pub mod pipeline;
pub mod record;
pub mod solver;

pub use error::{Error, Result};
