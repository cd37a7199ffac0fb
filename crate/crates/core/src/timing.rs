//! Grid spacing, time step and simulation duration.

use alloc::format;

use crate::error::{Error, Result};
use crate::math;

/// Isotropic grid spacing (m) resolving `ppw` points per wavelength at `c0`.
pub fn grid_spacing(c0: f64, f0: f64, ppw: f64) -> Result<f64> {
    if !(c0 > 0.0 && f0 > 0.0 && ppw > 0.0) {
        return Err(Error::arg("c0, f0 and ppw must be > 0"));
    }
    Ok(c0 / (f0 * ppw))
}

/// Largest stable time step `dx / (sqrt(3) c_ref)` (s), `dx` in metres.
pub fn cfl_bound(dx: f64, c_ref: f64) -> f64 {
    dx / (math::sqrt(3.0) * c_ref)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeParams {
    /// s
    pub dt: f64,
    pub n_steps: usize,
    /// Time samples per acoustic period; `dt * f0 * ppp == 1`.
    pub ppp: usize,
    pub cfl: f64,
    /// s
    pub t_end: f64,
}

/// Time step from points-per-period: `ppp = ceil(ppw / cfl)`, `dt = 1/(ppp f0)`.
///
/// `ppp` is raised until `dt` satisfies the stability bound for `c_ref` on a
/// grid of spacing `dx` (m). `n_steps = ceil(t_end / dt)`.
pub fn make_time_params(f0: f64, ppw: f64, cfl: f64, dx: f64, c_ref: f64, t_end: f64) -> Result<TimeParams> {
    if !(cfl > 0.0 && cfl <= 0.5) {
        return Err(Error::arg(format!("cfl must be in (0, 0.5], got {cfl}")));
    }
    if !(ppw >= 2.0) {
        return Err(Error::arg(format!("ppw must be >= 2, got {ppw}")));
    }
    if !(f0 > 0.0 && dx > 0.0 && c_ref > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::arg("f0, dx, c_ref must be > 0 and t_end >= 0"));
    }
    // 6 / 0.3 evaluates to 20.000000000000004; do not let that round up to 21.
    let mut ppp = math::ceil(ppw / cfl - 1e-9).max(1.0) as usize;
    let bound = cfl_bound(dx, c_ref);
    while 1.0 / (ppp as f64 * f0) > bound {
        ppp += 1;
    }
    let dt = 1.0 / (ppp as f64 * f0);
    let n_steps = math::ceil(t_end / dt - 1e-9).max(0.0) as usize;
    Ok(TimeParams { dt, n_steps, ppp, cfl, t_end })
}

impl TimeParams {
    /// The same run length at a finer sampling of `ppp` steps per period.
    pub fn with_ppp(&self, f0: f64, ppp: usize) -> Result<Self> {
        if ppp == 0 || !(f0 > 0.0) {
            return Err(Error::arg("ppp must be >= 1 and f0 > 0"));
        }
        let dt = 1.0 / (ppp as f64 * f0);
        let n_steps = math::ceil(self.t_end / dt - 1e-9).max(0.0) as usize;
        Ok(Self { dt, n_steps, ppp, ..*self })
    }
}

/// Medium-wide maxima entering [`absorbing_stable`]: `c²`, `-η c²` and `|τ| c²`
/// with `τ`, `η` the power-law absorption and dispersion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbsorbingCoefficients {
    pub c2: f64,
    pub dispersive: f64,
    pub damping: f64,
}

/// Frozen-coefficient stability check of the absorbing k-space leapfrog scheme.
///
/// Every wavenumber `0 < |k| <= k_max` (rad/m) must satisfy
/// `sin²(c_ref |k| dt/2) (c² - η c² |k|^(y-1) + 2 |τ| c² |k|^(y-2) / dt) <= c_ref²`.
/// The three maxima are taken independently, so the check is conservative.
/// For a lossless medium it reduces to `c <= c_ref`.
pub fn absorbing_stable(dt: f64, c_ref: f64, k_max: f64, y: f64, m: &AbsorbingCoefficients) -> bool {
    const SAMPLES: usize = 2048;
    let limit = c_ref * c_ref * (1.0 + 1e-9);
    (1..=SAMPLES).all(|i| {
        let k = k_max * i as f64 / SAMPLES as f64;
        let s = math::sin(0.5 * c_ref * k * dt);
        let stiffness = m.c2 + m.dispersive * math::powf(k, y - 1.0) + 2.0 * m.damping * math::powf(k, y - 2.0) / dt;
        s * s * stiffness <= limit
    })
}

/// Default simulated duration: `margin` diagonal transits at the slowest
/// sound speed plus the recording window of `n_periods` cycles.
///
/// `extent_mm` is the physical grid size per axis.
pub fn estimate_t_end(extent_mm: [f64; 3], c_min: f64, margin: f64, n_periods: usize, f0: f64) -> Result<f64> {
    if !(margin >= 1.0) {
        return Err(Error::arg(format!("margin must be >= 1, got {margin}")));
    }
    if !(c_min > 0.0 && f0 > 0.0) {
        return Err(Error::arg("c_min and f0 must be > 0"));
    }
    let diag_m = math::sqrt(extent_mm.iter().map(|e| e * e).sum::<f64>()) * 1e-3;
    Ok(margin * diag_m / c_min + n_periods as f64 / f0)
}

/// Tail window of whole periods over which pressure is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingPlan {
    pub start_step: usize,
    pub end_step: usize,
    pub samples_per_period: usize,
    pub n_periods: usize,
}

impl RecordingPlan {
    /// The last `n_periods` periods of an `n_steps` run.
    pub fn tail(n_steps: usize, ppp: usize, n_periods: usize) -> Result<Self> {
        let len = ppp * n_periods;
        if ppp == 0 {
            return Err(Error::arg("ppp must be >= 1"));
        }
        if len > n_steps {
            return Err(Error::arg(format!(
                "recording window of {len} steps exceeds run length {n_steps}"
            )));
        }
        Ok(Self { start_step: n_steps - len, end_step: n_steps, samples_per_period: ppp, n_periods })
    }

    pub fn len(&self) -> usize {
        self.end_step - self.start_step
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, step: usize) -> bool {
        step >= self.start_step && step < self.end_step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretization_constants_at_500_khz() {
        let dx = grid_spacing(1500.0, 500e3, 6.0).unwrap();
        assert_eq!(dx, 0.5e-3);
        let tp = make_time_params(500e3, 6.0, 0.3, dx, 1500.0, 0.0).unwrap();
        assert_eq!(tp.ppp, 20);
        assert_eq!(tp.dt, 100e-9);
        assert!((tp.dt * 500e3 * tp.ppp as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stability_bound_arithmetic() {
        let bound = cfl_bound(0.5e-3, 1500.0);
        assert!((bound - 192.45e-9).abs() < 0.01e-9);
        assert!(100e-9 <= bound);
        let bound = cfl_bound(0.5e-3, 3100.0);
        assert!((bound - 93.12e-9).abs() < 0.02e-9);
    }

    #[test]
    fn fast_medium_raises_ppp() {
        let tp = make_time_params(500e3, 6.0, 0.3, 0.5e-3, 3100.0, 1e-5).unwrap();
        assert_eq!(tp.ppp, 22);
        assert!((tp.dt - 90.909e-9).abs() < 0.001e-9);
        assert!(tp.dt <= cfl_bound(0.5e-3, 3100.0));
        assert_eq!(tp.n_steps, 110);
    }

    #[test]
    fn lossless_medium_is_stable_at_any_step() {
        let m = AbsorbingCoefficients { c2: 1500.0 * 1500.0, ..Default::default() };
        for dt in [1e-8, 1e-7, 1e-6] {
            assert!(absorbing_stable(dt, 1500.0, 1e4, 1.1, &m));
        }
        let fast = AbsorbingCoefficients { c2: 1600.0 * 1600.0, ..Default::default() };
        assert!(absorbing_stable(1e-7, 1500.0, 1e4, 1.1, &fast));
        assert!(!absorbing_stable(core::f64::consts::PI / 1.5e7, 1500.0, 1e4, 1.1, &fast));
    }

    #[test]
    fn dispersive_stiffness_needs_a_smaller_step() {
        // c_eff = 1.25 c_ref at k_max: unstable near sin = 1, stable once
        // sin(c_ref k dt/2) < 0.8.
        let k_max: f64 = 1e4;
        let m = AbsorbingCoefficients { c2: 1500.0 * 1500.0, dispersive: 0.5625 * 1500.0 * 1500.0 / math::powf(k_max, 0.1), damping: 0.0 };
        assert!(!absorbing_stable(2.0 * (core::f64::consts::FRAC_PI_2) / (1500.0 * k_max), 1500.0, k_max, 1.1, &m));
        let dt = 2.0 * math::asin(0.79) / (1500.0 * k_max);
        assert!(absorbing_stable(dt, 1500.0, k_max, 1.1, &m));
    }

    #[test]
    fn with_ppp_keeps_the_duration() {
        let tp = make_time_params(500e3, 6.0, 0.3, 0.5e-3, 1500.0, 61.43e-6).unwrap();
        let fine = tp.with_ppp(500e3, 30).unwrap();
        assert_eq!((fine.ppp, fine.t_end), (30, tp.t_end));
        assert!((fine.dt * 500e3 * 30.0 - 1.0).abs() < 1e-12);
        assert_eq!(fine.n_steps, (61.43e-6f64 / fine.dt).ceil() as usize);
    }

    #[test]
    fn rejects_out_of_range_cfl_and_ppw() {
        assert!(make_time_params(5e5, 6.0, 0.0, 5e-4, 1500.0, 1e-5).is_err());
        assert!(make_time_params(5e5, 6.0, 0.6, 5e-4, 1500.0, 1e-5).is_err());
        assert!(make_time_params(5e5, 1.5, 0.3, 5e-4, 1500.0, 1e-5).is_err());
    }

    #[test]
    fn t_end_examples() {
        let t = estimate_t_end([32.0; 3], 1500.0, 1.5, 3, 500e3).unwrap();
        assert!((t - 61.43e-6).abs() < 0.01e-6, "{t}");
        let one = estimate_t_end([32.0; 3], 1500.0, 1.0, 0, 500e3).unwrap();
        assert!((one - 32.0 * 3f64.sqrt() * 1e-3 / 1500.0).abs() < 1e-15);
        let two = estimate_t_end([64.0; 3], 1500.0, 1.0, 0, 500e3).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-15);
        assert!(estimate_t_end([32.0; 3], 1500.0, 0.9, 3, 500e3).is_err());
    }

    #[test]
    fn recording_plan_is_integer_periods() {
        let plan = RecordingPlan::tail(100, 20, 3).unwrap();
        assert_eq!((plan.start_step, plan.end_step, plan.len()), (40, 100, 60));
        assert_eq!(plan.len(), plan.n_periods * plan.samples_per_period);
        assert!(RecordingPlan::tail(50, 20, 3).is_err());
        assert!(plan.contains(40) && !plan.contains(100) && !plan.contains(39));
    }
}
