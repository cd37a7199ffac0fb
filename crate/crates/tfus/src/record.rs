//! Bounded-memory recording of the pressure window and amplitude extraction.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};

use rayon::prelude::*;
use tfus_core::amplitude::{check_whole_periods, AmplitudeField, BlockAccumulator};
use tfus_core::timing::RecordingPlan;
use tfus_core::{GridSpec, ScalarField3D, Units};

use crate::error::{Error, Result};
use crate::solver::Simulation;

enum Backend {
    Memory(Vec<f32>),
    Spill { writer: Option<BufWriter<File>>, file: tempfile::NamedTempFile },
}

/// Interior pressure z-slabs for every step of a recording window, stored
/// step-major (`[step][z][y][x]`), either in RAM or in a temporary file.
pub struct TimeSeriesStore {
    grid: GridSpec,
    plan: RecordingPlan,
    steps_written: usize,
    backend: Backend,
    slab: Vec<f32>,
}

impl std::fmt::Debug for TimeSeriesStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeSeriesStore")
            .field("dims", &self.grid.dims)
            .field("steps_written", &self.steps_written)
            .field("spilled", &self.is_spilled())
            .finish()
    }
}

impl TimeSeriesStore {
    /// Chooses the memory backend when the whole window fits in `ram_cap` bytes.
    pub fn new(grid: GridSpec, plan: RecordingPlan, n_steps: usize, ram_cap: usize) -> Result<Self> {
        if plan.end_step > n_steps || plan.start_step > plan.end_step {
            return Err(Error::Argument(format!(
                "recording window [{}, {}) outside the run of {n_steps} steps",
                plan.start_step, plan.end_step
            )));
        }
        let bytes = Self::window_bytes(&grid, &plan);
        let backend = if bytes <= ram_cap {
            Backend::Memory(Vec::with_capacity(bytes / 4))
        } else {
            let file = tempfile::NamedTempFile::new().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            let writer = file.reopen().map_err(|e| Error::io(file.path(), e))?;
            Backend::Spill { writer: Some(BufWriter::with_capacity(1 << 20, writer)), file }
        };
        let [nx, ny, _] = grid.dims;
        Ok(Self { grid, plan, steps_written: 0, backend, slab: vec![0.0; nx * ny] })
    }

    pub fn window_bytes(grid: &GridSpec, plan: &RecordingPlan) -> usize {
        grid.len() * plan.len() * 4
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self.backend, Backend::Spill { .. })
    }

    pub fn plan(&self) -> &RecordingPlan {
        &self.plan
    }

    pub fn steps_written(&self) -> usize {
        self.steps_written
    }

    /// Number of z-slabs stored so far.
    pub fn slab_count(&self) -> usize {
        self.steps_written * self.grid.dims[2]
    }

    /// Recorder callback: stores the interior pressure if `step` lies in the window.
    pub fn record(&mut self, step: usize, sim: &Simulation) -> Result<()> {
        if !self.plan.contains(step) {
            return Ok(());
        }
        let nz = self.grid.dims[2];
        for z in 0..nz {
            sim.copy_interior_slab(z, &mut self.slab);
            self.push_slab()?;
        }
        self.steps_written += 1;
        Ok(())
    }

    /// Stores one full step given as an x-fastest interior volume.
    pub fn push_volume(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::Argument("volume does not match the recording grid".into()));
        }
        if self.steps_written >= self.plan.len() {
            return Err(Error::Argument("recording window already full".into()));
        }
        for slab in values.chunks(self.slab.len()) {
            self.slab.copy_from_slice(slab);
            self.push_slab()?;
        }
        self.steps_written += 1;
        Ok(())
    }

    fn push_slab(&mut self) -> Result<()> {
        match &mut self.backend {
            Backend::Memory(buf) => buf.extend_from_slice(&self.slab),
            Backend::Spill { writer, file } => {
                let w = writer.as_mut().expect("writer open while recording");
                for v in &self.slab {
                    w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(file.path(), e))?;
                }
            }
        }
        Ok(())
    }

    /// Single-bin DFT amplitude at `f0` of every interior voxel over the window.
    ///
    /// Returns the field and the peak number of bytes held beyond the store itself.
    pub fn extract_amplitude(&mut self, f0: f64, ppp: usize) -> Result<(AmplitudeField, usize)> {
        self.extract_tail_amplitude(f0, ppp, self.plan.len())
    }

    /// As [`TimeSeriesStore::extract_amplitude`] over only the last `tail` recorded steps.
    pub fn extract_tail_amplitude(&mut self, f0: f64, ppp: usize, tail: usize) -> Result<(AmplitudeField, usize)> {
        let written = self.steps_written;
        if written != self.plan.len() {
            return Err(Error::Argument(format!("window incomplete: {written} of {} steps recorded", self.plan.len())));
        }
        if tail == 0 || tail > written {
            return Err(Error::Argument(format!("tail of {tail} steps outside the {written}-step window")));
        }
        check_whole_periods(tail, ppp)?;
        let first = written - tail;
        let n_t = tail;
        let [nx, ny, nz] = self.grid.dims;
        let slab_len = nx * ny;
        let mut amplitude = vec![0.0f32; self.grid.len()];
        let mut window = vec![0.0f32; slab_len * n_t];
        let mut bytes = vec![0u8; slab_len * 4];
        let mut reader = match &mut self.backend {
            Backend::Memory(_) => None,
            Backend::Spill { writer, file } => {
                if let Some(mut w) = writer.take() {
                    w.flush().map_err(|e| Error::io(file.path(), e))?;
                }
                Some((file.reopen().map_err(|e| Error::io(file.path(), e))?, file.path().to_path_buf()))
            }
        };
        let chunk = 4096;
        for z in 0..nz {
            for t in 0..n_t {
                let offset = ((first + t) * nz + z) * slab_len;
                let dst = &mut window[t * slab_len..(t + 1) * slab_len];
                match (&self.backend, &mut reader) {
                    (Backend::Memory(buf), _) => dst.copy_from_slice(&buf[offset..offset + slab_len]),
                    (Backend::Spill { .. }, Some((f, path))) => {
                        f.seek(SeekFrom::Start(offset as u64 * 4)).map_err(|e| Error::io(&*path, e))?;
                        f.read_exact(&mut bytes).map_err(|e| Error::io(&*path, e))?;
                        for (d, b) in dst.iter_mut().zip(bytes.chunks_exact(4)) {
                            *d = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                        }
                    }
                    _ => unreachable!("spill backend always has a reader"),
                }
            }
            let window = &window;
            amplitude[z * slab_len..(z + 1) * slab_len]
                .par_chunks_mut(chunk)
                .enumerate()
                .try_for_each(|(c, out)| -> Result<()> {
                    let start = c * chunk;
                    let mut acc = BlockAccumulator::new(out.len(), ppp)?;
                    for t in 0..n_t {
                        let base = t * slab_len + start;
                        acc.push(&window[base..base + out.len()])?;
                    }
                    for (o, a) in out.iter_mut().zip(acc.finish()?) {
                        *o = a as f32;
                    }
                    Ok(())
                })?;
        }
        let accumulators = slab_len.min(chunk * rayon::current_num_threads()) * 16;
        let peak_extra = window.len() * 4 + bytes.len() + accumulators;
        let amplitude = ScalarField3D::new(self.grid, amplitude, Units::Pascal)?;
        Ok((AmplitudeField { amplitude, f0 }, peak_extra))
    }
}
