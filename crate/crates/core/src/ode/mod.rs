//! Deterministic per-eigenmode dynamics.
//!
//! Every integrator advances a flat state vector laid out mode by mode with
//! classical fourth-order Runge-Kutta. The step is fixed at
//! [`SolverSettings::step`] up to [`SolverSettings::stretch_start`] and then
//! grows like `stretch_factor * t`, capped at [`SolverSettings::max_step`].
//! Output times are hit exactly: each grid interval is split into equal
//! substeps no longer than the local step.

mod binary;
mod curve;
mod general;
mod mse;
mod observables;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::ZeroOnePartition;

pub use binary::integrate_binary_logistic;
pub use curve::{compare_curves, BlockStats, CurveKind, CurveMeta, CurveRow, LearningCurve, Metric};
pub use general::{integrate_general, mode_statistics};
pub use mse::integrate_mse;
pub use observables::ode_observables;

/// Runge-Kutta settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub step: f64,
    pub stretch_start: f64,
    pub stretch_factor: f64,
    pub max_step: f64,
    /// Keep the `gamma^2` noise-injection terms. Turning them off gives the
    /// gradient-flow limit.
    pub noise: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            step: 0.01,
            stretch_start: 100.0,
            stretch_factor: 0.05,
            max_step: 1.0,
            noise: true,
        }
    }
}

impl SolverSettings {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid("step", format!("{} must be positive", self.step)));
        }
        if !(self.max_step.is_finite() && self.max_step >= self.step) {
            return Err(Error::invalid("max_step", "must be finite and at least `step`"));
        }
        if !(self.stretch_factor.is_finite() && self.stretch_factor >= 0.0) {
            return Err(Error::invalid("stretch_factor", "must be finite and >= 0"));
        }
        if !(self.stretch_start >= 0.0) {
            return Err(Error::invalid("stretch_start", "must be >= 0"));
        }
        Ok(())
    }

    /// Local step length at time `t`.
    pub fn step_at(&self, t: f64) -> f64 {
        if t < self.stretch_start {
            self.step
        } else {
            (self.stretch_factor * t).clamp(self.step, self.max_step)
        }
    }
}

/// Strictly increasing, nonnegative output times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("grid", "needs at least one time"));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("grid", "times must be finite and >= 0"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid", "times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    /// `points` equally spaced times on `[0, end]`.
    pub fn linear(end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(end > 0.0) {
            return Err(Error::invalid("grid", "linear grid needs end > 0 and >= 2 points"));
        }
        let n = points - 1;
        Self::new((0..=n).map(|k| end * k as f64 / n as f64).collect())
    }

    /// `0` followed by `per_decade` log-spaced points per decade on
    /// `[start, end]` (both included).
    pub fn log(start: f64, end: f64, per_decade: usize) -> Result<Self> {
        if !(start > 0.0 && end > start) || per_decade == 0 {
            return Err(Error::invalid("grid", "log grid needs 0 < start < end"));
        }
        let decades = (end / start).log10();
        let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
        let mut times = vec![0.0];
        let (a, b) = (start.log10(), end.log10());
        times.extend((0..=n).map(|k| 10f64.powf(a + (b - a) * k as f64 / n as f64)));
        *times.last_mut().unwrap() = end;
        times[1] = start;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// How a flat ODE state is laid out per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateLayout {
    /// `[V_rho, m_rho]` for the symmetric binary logistic reduction; the
    /// second class overlap is `-m_rho`.
    Binary,
    /// Full symmetric `width x width` block `V_rho` followed by one
    /// `width`-vector `m_{rho,j}` per class.
    General { width: usize, classes: usize },
    /// `D_rho` followed by `m_{rho,j,u}` for `classes x outputs`.
    Mse { classes: usize, outputs: usize },
}

impl StateLayout {
    pub fn stride(&self) -> usize {
        match *self {
            StateLayout::Binary => 2,
            StateLayout::General { width, classes } => width * width + classes * width,
            StateLayout::Mse { classes, outputs } => 1 + classes * outputs,
        }
    }

    fn norm_len(&self) -> usize {
        match *self {
            StateLayout::General { width, .. } => width * width,
            _ => 1,
        }
    }

    fn overlap_len(&self) -> usize {
        match *self {
            StateLayout::Binary => 1,
            StateLayout::General { width, .. } => width,
            StateLayout::Mse { outputs, .. } => outputs,
        }
    }
}

/// Snapshot of the per-mode deterministic state at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub layout: StateLayout,
    pub data: Vec<f64>,
}

impl OdeState {
    pub fn modes(&self) -> usize {
        self.data.len() / self.layout.stride()
    }

    fn mode(&self, rho: usize) -> &[f64] {
        let s = self.layout.stride();
        &self.data[rho * s..(rho + 1) * s]
    }

    /// `V_rho` (row-major block) or `D_rho`.
    pub fn norm(&self, rho: usize) -> &[f64] {
        &self.mode(rho)[..self.layout.norm_len()]
    }

    /// `m_{rho,j}`; for [`StateLayout::Binary`] only `j = 0` is stored.
    pub fn overlap(&self, rho: usize, j: usize) -> &[f64] {
        let (n, k) = (self.layout.norm_len(), self.layout.overlap_len());
        &self.mode(rho)[n + j * k..n + (j + 1) * k]
    }
}

/// Callback invoked at every output time with the full state.
pub type StateObserver<'a> = &'a mut dyn FnMut(&OdeState) -> Result<()>;

/// Optional inputs shared by the integrators.
#[derive(Default)]
pub struct OdeOptions<'a> {
    /// Initial iterate `X_0` in eigencoordinates (`d x l`); zero if absent.
    pub initial: Option<&'a DMatrix<f64>>,
    /// Adds the zero-one block projections to every row.
    pub partition: Option<&'a ZeroOnePartition>,
    /// Receives the full state at every output time.
    pub observer: Option<StateObserver<'a>>,
}

/// Integrates the deterministic limit of `task`, picking the reduced
/// binary or square-loss system when it applies.
pub fn integrate_task(
    model: &crate::spectral::SpectralMixture,
    task: &crate::task::Task,
    schedule: &crate::schedule::Schedule,
    grid: &TimeGrid,
    settings: &SolverSettings,
    options: OdeOptions<'_>,
) -> Result<LearningCurve> {
    use crate::task::Task;
    match task {
        Task::BinaryLogistic if model.is_symmetric_binary() => {
            integrate_binary_logistic(model, schedule, grid, settings, options)
        }
        Task::Mse { target, sigma } => {
            integrate_mse(model, target, *sigma, schedule, grid, settings, options)
        }
        _ => {
            let oracle = task.oracle(model)?;
            integrate_general(model, task, oracle.as_ref(), schedule, grid, settings, options)
        }
    }
}

fn first_nonfinite(y: &[f64]) -> Option<usize> {
    y.iter().position(|x| !x.is_finite())
}

/// Fixed-step RK4 from `t = 0` through every grid time.
pub(crate) fn run_rk4(
    y: &mut [f64],
    stride: usize,
    grid: &TimeGrid,
    settings: &SolverSettings,
    rhs: &mut dyn FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    record: &mut dyn FnMut(f64, &[f64]) -> Result<()>,
) -> Result<()> {
    settings.check()?;
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let blowup = |t: f64, y: &[f64]| -> Result<()> {
        match first_nonfinite(y) {
            Some(i) => Err(Error::OdeBlowup { t, mode: i / stride }),
            None => Ok(()),
        }
    };
    blowup(0.0, y)?;
    let mut t = 0.0;
    for &target in grid.times() {
        let span = target - t;
        if span > 0.0 {
            let h0 = settings.step_at(t);
            let steps = ((span / h0) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let t_start = t;
            for s in 0..steps {
                let ts = t_start + s as f64 * h;
                rhs(ts, y, &mut k1)?;
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                rhs(ts + 0.5 * h, &tmp, &mut k2)?;
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                rhs(ts + 0.5 * h, &tmp, &mut k3)?;
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                rhs(ts + h, &tmp, &mut k4)?;
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                blowup(ts + h, y)?;
            }
            t = target;
        }
        record(target, y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_solves_exponential_decay() {
        let grid = TimeGrid::linear(2.0, 5).unwrap();
        let mut y = vec![1.0, 2.0];
        let mut out = Vec::new();
        run_rk4(
            &mut y,
            1,
            &grid,
            &SolverSettings::default(),
            &mut |_, y, dy| {
                dy[0] = -y[0];
                dy[1] = -2.0 * y[1];
                Ok(())
            },
            &mut |t, y| {
                out.push((t, y.to_vec()));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(out.len(), 5);
        for (t, y) in out {
            assert!((y[0] - (-t).exp()).abs() < 1e-10);
            assert!((y[1] - 2.0 * (-2.0 * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn blowup_names_mode() {
        let grid = TimeGrid::linear(1.0, 2).unwrap();
        let mut y = vec![1.0, 1.0, 1.0, 1.0];
        let err = run_rk4(
            &mut y,
            2,
            &grid,
            &SolverSettings::default(),
            &mut |_, y, dy| {
                dy.fill(0.0);
                dy[3] = y[3] * y[3] * 1e300;
                Ok(())
            },
            &mut |_, _| Ok(()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::OdeBlowup { mode: 1, .. }));
    }

    #[test]
    fn log_grid_shape() {
        let g = TimeGrid::log(1.0, 1e4, 32).unwrap();
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.times()[1], 1.0);
        assert_eq!(g.end(), 1e4);
        assert_eq!(g.len(), 2 + 4 * 32);
    }

    #[test]
    fn step_schedule() {
        let s = SolverSettings::default();
        assert_eq!(s.step_at(5.0), 0.01);
        assert_eq!(s.step_at(150.0), 1.0);
        let s = SolverSettings {
            max_step: 100.0,
            ..s
        };
        assert!((s.step_at(400.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
    }
}
