//! 3D real-to-complex FFT over x-fastest volumes.
//!
//! The forward transform runs a real FFT along x, complex FFTs along y inside
//! each z-plane, then transposes to y-major order and transforms along z.
//! Spectra are therefore stored as `[y][z][kx]` with `kx` fastest; use
//! [`Fft3::spectral_index`] to address them. The inverse is unnormalized.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};

/// Generic over the working precision; the solver runs in `f32`.
pub struct Fft3<T: FftNum = f32> {
    dims: [usize; 3],
    nkx: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    fwd_y: Arc<dyn Fft<T>>,
    inv_y: Arc<dyn Fft<T>>,
    fwd_z: Arc<dyn Fft<T>>,
    inv_z: Arc<dyn Fft<T>>,
    /// Intermediate spectrum in `[z][y][kx]` order.
    planes: Vec<Complex<T>>,
}

impl<T: FftNum> std::fmt::Debug for Fft3<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

/// FFT along the row direction of a `rows x cols` block stored row-major,
/// i.e. along the slow axis: transpose, transform each line, transpose back.
fn fft_columns<T: FftNum>(block: &mut [Complex<T>], rows: usize, cols: usize, fft: &dyn Fft<T>, work: &mut Work<T>) {
    if rows == 1 {
        return;
    }
    work.lines.resize(rows * cols, Complex::new(T::zero(), T::zero()));
    for r in 0..rows {
        for c in 0..cols {
            work.lines[c * rows + r] = block[r * cols + c];
        }
    }
    work.scratch.resize(fft.get_inplace_scratch_len(), Complex::new(T::zero(), T::zero()));
    fft.process_with_scratch(&mut work.lines, &mut work.scratch);
    for r in 0..rows {
        for c in 0..cols {
            block[r * cols + c] = work.lines[c * rows + r];
        }
    }
}

struct Work<T> {
    lines: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    real: Vec<T>,
}

impl<T> Default for Work<T> {
    fn default() -> Self {
        Self { lines: Vec::new(), scratch: Vec::new(), real: Vec::new() }
    }
}

/// Signed wavenumber index of position `i` along an axis of length `n`,
/// folded to `[-n/2, n/2)`.
pub fn signed_index(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

impl<T: FftNum> Fft3<T> {
    pub fn new(dims: [usize; 3]) -> Self {
        let [nx, ny, nz] = dims;
        assert!(nx >= 1 && ny >= 1 && nz >= 1, "FFT dims must be >= 1");
        let mut real = RealFftPlanner::<T>::new();
        let mut cplx = FftPlanner::<T>::new();
        let nkx = nx / 2 + 1;
        Self {
            dims,
            nkx,
            r2c: real.plan_fft_forward(nx),
            c2r: real.plan_fft_inverse(nx),
            fwd_y: cplx.plan_fft_forward(ny),
            inv_y: cplx.plan_fft_inverse(ny),
            fwd_z: cplx.plan_fft_forward(nz),
            inv_z: cplx.plan_fft_inverse(nz),
            planes: vec![Complex::new(T::zero(), T::zero()); nkx * ny * nz],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of non-negative x frequencies, `nx/2 + 1`.
    pub fn nkx(&self) -> usize {
        self.nkx
    }

    pub fn spectrum_len(&self) -> usize {
        self.nkx * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn spectral_index(&self, kx: usize, y: usize, z: usize) -> usize {
        kx + self.nkx * (z + self.dims[2] * y)
    }

    pub fn new_spectrum(&self) -> Vec<Complex<T>> {
        vec![Complex::new(T::zero(), T::zero()); self.spectrum_len()]
    }

    /// Forward transform of `input` (x-fastest, `nx*ny*nz`) into `out` (`[y][z][kx]`).
    pub fn forward(&mut self, input: &[T], out: &mut [Complex<T>]) {
        let [nx, ny, nz] = self.dims;
        let nkx = self.nkx;
        assert_eq!(input.len(), nx * ny * nz);
        assert_eq!(out.len(), self.spectrum_len());
        let r2c = &self.r2c;
        let fwd_y = &*self.fwd_y;
        self.planes
            .par_chunks_mut(nkx * ny)
            .zip(input.par_chunks(nx * ny))
            .for_each_init(Work::default, |work, (plane, slab)| {
                let mut scratch = r2c.make_scratch_vec();
                for (row_out, row_in) in plane.chunks_mut(nkx).zip(slab.chunks(nx)) {
                    work.real.clear();
                    work.real.extend_from_slice(row_in);
                    r2c.process_with_scratch(&mut work.real, row_out, &mut scratch)
                        .expect("r2c lengths match the plan");
                }
                fft_columns(plane, ny, nkx, fwd_y, work);
            });
        let planes = &self.planes;
        let fwd_z = &*self.fwd_z;
        out.par_chunks_mut(nkx * nz).enumerate().for_each_init(Work::default, |work, (y, chunk)| {
            for z in 0..nz {
                let src = &planes[nkx * (y + ny * z)..][..nkx];
                chunk[z * nkx..(z + 1) * nkx].copy_from_slice(src);
            }
            fft_columns(chunk, nz, nkx, fwd_z, work);
        });
    }

    /// Unnormalized inverse of [`Fft3::forward`]; `spectrum` is used as scratch.
    pub fn inverse(&mut self, spectrum: &mut [Complex<T>], out: &mut [T]) {
        let [nx, ny, nz] = self.dims;
        let nkx = self.nkx;
        assert_eq!(out.len(), nx * ny * nz);
        assert_eq!(spectrum.len(), self.spectrum_len());
        let inv_z = &*self.inv_z;
        spectrum.par_chunks_mut(nkx * nz).for_each_init(Work::default, |work, chunk| {
            fft_columns(chunk, nz, nkx, inv_z, work);
        });
        let spectrum = &*spectrum;
        let inv_y = &*self.inv_y;
        let c2r = &self.c2r;
        let nyquist = if nx % 2 == 0 { Some(nkx - 1) } else { None };
        self.planes
            .par_chunks_mut(nkx * ny)
            .zip(out.par_chunks_mut(nx * ny))
            .enumerate()
            .for_each_init(Work::default, |work, (z, (plane, slab))| {
                for y in 0..ny {
                    let src = &spectrum[nkx * (z + nz * y)..][..nkx];
                    plane[y * nkx..(y + 1) * nkx].copy_from_slice(src);
                }
                fft_columns(plane, ny, nkx, inv_y, work);
                let mut scratch = c2r.make_scratch_vec();
                for (row_in, row_out) in plane.chunks_mut(nkx).zip(slab.chunks_mut(nx)) {
                    // A real signal has real DC and Nyquist bins; drop any residue.
                    row_in[0].im = T::zero();
                    if let Some(n) = nyquist {
                        row_in[n].im = T::zero();
                    }
                    c2r.process_with_scratch(row_in, row_out, &mut scratch)
                        .expect("c2r lengths match the plan");
                }
            });
    }
}
