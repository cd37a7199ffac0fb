//! Single-frequency amplitude extraction over whole periods.
//!
//! For a window of `Ns` samples spanning an integer number of periods, the
//! amplitude at the drive frequency is `(2/Ns) |sum p(t_n) exp(-i 2 pi f0 t_n)|`.
//! With `ppp` samples per period the phase advance per sample is `2 pi / ppp`,
//! so the twiddles are tabulated once per period. Accumulation is in f64.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D};
use crate::math;

/// Cosine and sine of `2 pi n / ppp` for one period.
#[derive(Debug, Clone)]
pub struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    pub fn new(ppp: usize) -> Result<Self> {
        if ppp == 0 {
            return Err(Error::arg("samples per period must be >= 1"));
        }
        let (cos, sin) = (0..ppp)
            .map(|n| {
                let w = 2.0 * PI * n as f64 / ppp as f64;
                (math::cos(w), math::sin(w))
            })
            .unzip();
        Ok(Self { cos, sin })
    }

    pub fn ppp(&self) -> usize {
        self.cos.len()
    }

    /// `(cos, sin)` for sample `n` of the window.
    #[inline]
    pub fn at(&self, n: usize) -> (f64, f64) {
        let i = n % self.cos.len();
        (self.cos[i], self.sin[i])
    }
}

/// Running single-bin DFT of one signal.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SingleBin {
    pub re: f64,
    pub im: f64,
    pub count: usize,
}

impl SingleBin {
    #[inline]
    pub fn push(&mut self, sample: f64, tw: &Twiddles) {
        let (c, s) = tw.at(self.count);
        self.re += sample * c;
        self.im -= sample * s;
        self.count += 1;
    }

    /// `(2/Ns) |X(f0)|`; errors unless the window is a whole number of periods.
    pub fn amplitude(&self, ppp: usize) -> Result<f64> {
        check_whole_periods(self.count, ppp)?;
        Ok(2.0 * math::hypot(self.re, self.im) / self.count as f64)
    }
}

pub fn check_whole_periods(n_samples: usize, ppp: usize) -> Result<()> {
    if ppp == 0 || n_samples == 0 || n_samples % ppp != 0 {
        return Err(Error::arg(format!(
            "window of {n_samples} samples is not a whole number of {ppp}-sample periods"
        )));
    }
    Ok(())
}

/// Amplitude at the drive frequency of one uniformly sampled series.
pub fn tone_amplitude(series: &[f64], ppp: usize) -> Result<f64> {
    check_whole_periods(series.len(), ppp)?;
    let tw = Twiddles::new(ppp)?;
    let mut bin = SingleBin::default();
    for &s in series {
        bin.push(s, &tw);
    }
    bin.amplitude(ppp)
}

/// Per-voxel steady-state amplitude (Pa) at `f0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeField {
    pub amplitude: ScalarField3D,
    pub f0: f64,
}

impl AmplitudeField {
    pub fn grid(&self) -> &GridSpec {
        self.amplitude.grid()
    }
}

/// Accumulates the single-bin DFT for a block of voxels, one time sample at a time.
#[derive(Debug, Clone)]
pub struct BlockAccumulator {
    re: Vec<f64>,
    im: Vec<f64>,
    count: usize,
    twiddles: Twiddles,
}

impl BlockAccumulator {
    pub fn new(len: usize, ppp: usize) -> Result<Self> {
        Ok(Self { re: alloc::vec![0.0; len], im: alloc::vec![0.0; len], count: 0, twiddles: Twiddles::new(ppp)? })
    }

    /// Adds the next time sample of every voxel in the block.
    pub fn push(&mut self, samples: &[f32]) -> Result<()> {
        if samples.len() != self.re.len() {
            return Err(Error::arg(format!(
                "sample block of {} values, accumulator holds {}",
                samples.len(),
                self.re.len()
            )));
        }
        let (c, s) = self.twiddles.at(self.count);
        for ((re, im), &p) in self.re.iter_mut().zip(self.im.iter_mut()).zip(samples) {
            let p = p as f64;
            *re += p * c;
            *im -= p * s;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Amplitudes for the block.
    pub fn finish(&self) -> Result<Vec<f64>> {
        check_whole_periods(self.count, self.twiddles.ppp())?;
        let scale = 2.0 / self.count as f64;
        Ok(self.re.iter().zip(&self.im).map(|(&r, &i)| scale * math::hypot(r, i)).collect())
    }
}
