//! Streaming SGD and homogenized SGD on mixture instances.
//!
//! All simulation happens in eigencoordinates: a datum of class `i` is
//! `a_rho = sqrt(lambda_rho^{(i)}) z_rho + mu_{i,rho}`. Recorded losses are
//! population risks of the current iterate, evaluated by the moment oracle
//! at the iterate's exact class-conditional preactivation law.

mod concentration;
mod hsgd;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::moments::MomentOracle;
use crate::ode::{
    mode_statistics, ode_observables, CurveKind, CurveMeta, CurveRow, LearningCurve, OdeState,
    TimeGrid,
};
use crate::schedule::Schedule;
use crate::spectral::{SpectralMixture, ZeroOnePartition};
use crate::task::Task;

pub use concentration::{concentration_sweep, ConcentrationRow, ConcentrationTable};
pub use hsgd::{run_hsgd, HsgdOptions};

/// Label attached to a sampled datum.
#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Class(usize),
    Soft(DVector<f64>),
}

/// Draws the class-`class` datum `a` and its label.
pub fn sample_point<R: Rng + ?Sized>(
    model: &SpectralMixture,
    task: &Task,
    class: usize,
    rng: &mut R,
) -> (Vec<f64>, Label) {
    let lam = model.eigvals(class);
    let mu = model.means(class);
    let a: Vec<f64> = lam
        .iter()
        .zip(mu)
        .map(|(&l, &m)| {
            if l == 0.0 {
                m
            } else {
                let z: f64 = StandardNormal.sample(rng);
                l.sqrt() * z + m
            }
        })
        .collect();
    let label = match task {
        Task::Mse { target, sigma } => {
            let l = target.ncols();
            let scale = sigma / (l as f64).sqrt();
            let mut y = target.tr_mul(&DVector::from_column_slice(&a));
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *v += scale * e;
            }
            Label::Soft(y)
        }
        _ => Label::Class(class),
    };
    (a, label)
}

pub(crate) fn sample_class<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Gradient of the loss with respect to the trainable preactivation `r`.
pub(crate) fn loss_gradient(task: &Task, r: &[f64], label: &Label) -> Vec<f64> {
    match (task, label) {
        (Task::BinaryLogistic, Label::Class(c)) => {
            let x = r[0];
            let sig = if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            };
            vec![if *c == 0 { sig - 1.0 } else { sig }]
        }
        (Task::CrossEntropy { .. }, Label::Class(c)) => {
            let rmax = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = r.iter().map(|x| (x - rmax).exp()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            w[*c] -= 1.0;
            w
        }
        (Task::Mse { .. }, Label::Soft(y)) => r.iter().zip(y.iter()).map(|(a, b)| a - b).collect(),
        _ => unreachable!("label kind does not match the task"),
    }
}

/// SGD iterate in eigencoordinates.
#[derive(Clone, Debug)]
pub struct SgdState {
    /// `d x l`.
    pub x: DMatrix<f64>,
    pub step: u64,
    rng: ChaCha8Rng,
}

impl SgdState {
    pub fn new(x: DMatrix<f64>, seed: u64) -> Self {
        Self {
            x,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn zeros(model: &SpectralMixture, task: &Task, seed: u64) -> Self {
        Self::new(DMatrix::zeros(model.dim(), task.outputs(model)), seed)
    }

    /// Per-mode statistics `V_rho = d X_rho X_rho^T` and
    /// `m_{rho,j} = d mu_{j,rho} X_rho` of the (augmented) iterate, laid out
    /// like the general deterministic state.
    pub fn mode_state(&self, model: &SpectralMixture, task: &Task, t: f64) -> OdeState {
        mode_statistics(&self.x, model, task, t)
    }
}

/// One streaming step with learning rate `gamma`: draws a class and a
/// datum, then applies `X -= (gamma/d) a grad_r f^T`.
pub fn sgd_step(state: &mut SgdState, model: &SpectralMixture, task: &Task, gamma: f64) -> Result<()> {
    let d = model.dim();
    let l = state.x.ncols();
    let class = sample_class(model.probs(), &mut state.rng);
    let (a, label) = sample_point(model, task, class, &mut state.rng);
    state.step += 1;
    if gamma == 0.0 {
        return Ok(());
    }
    let r: Vec<f64> = (0..l)
        .map(|u| state.x.column(u).iter().zip(&a).map(|(x, v)| x * v).sum())
        .collect();
    let g = loss_gradient(task, &r, &label);
    let scale = gamma / d as f64;
    let mut norm = 0.0;
    for u in 0..l {
        let gu = scale * g[u];
        let mut col = state.x.column_mut(u);
        for (x, v) in col.iter_mut().zip(&a) {
            *x -= gu * v;
            norm += *x * *x;
        }
    }
    if !norm.is_finite() || norm > 1e200 {
        return Err(Error::SgdOverflow {
            step: state.step,
            norm: norm.sqrt(),
        });
    }
    Ok(())
}

/// Optional inputs for [`run_sgd`].
#[derive(Default)]
pub struct SgdOptions<'a> {
    pub initial: Option<&'a DMatrix<f64>>,
    pub partition: Option<&'a ZeroOnePartition>,
    /// Receives the iterate at every output time.
    pub observer: Option<&'a mut dyn FnMut(f64, &SgdState) -> Result<()>>,
}

pub(crate) fn iterate_row(
    x: &DMatrix<f64>,
    t: f64,
    model: &SpectralMixture,
    task: &Task,
    oracle: &dyn MomentOracle,
    partition: Option<&ZeroOnePartition>,
) -> Result<CurveRow> {
    let state = mode_statistics(x, model, task, t);
    ode_observables(&state, model, task, oracle, partition)
}

/// Step index recorded for grid time `t`.
pub(crate) fn step_of(t: f64, d: usize) -> u64 {
    (t * d as f64 + 1e-9).floor() as u64
}

/// Runs `floor(T d)` streaming steps (`T` = last grid time) and records the
/// observables at every grid time.
pub fn run_sgd(
    model: &SpectralMixture,
    task: &Task,
    schedule: &Schedule,
    grid: &TimeGrid,
    seed: u64,
    mut options: SgdOptions<'_>,
) -> Result<LearningCurve> {
    let oracle = task.oracle(model)?;
    let d = model.dim();
    let l = task.outputs(model);
    let x0 = match options.initial {
        Some(x) if x.nrows() != d || x.ncols() != l => {
            return Err(Error::DimensionMismatch(format!(
                "initial iterate is {}x{}, expected {d}x{l}",
                x.nrows(),
                x.ncols()
            )))
        }
        Some(x) => x.clone(),
        None => DMatrix::zeros(d, l),
    };
    let mut state = SgdState::new(x0, seed);
    let mut curve = LearningCurve::new(CurveMeta {
        seed: Some(seed),
        dim: d,
        model_hash: model.fingerprint(),
        task: task.name().into(),
        schedule: schedule.spec(),
        ..CurveMeta::new(CurveKind::Sgd)
    });
    for &t in grid.times() {
        let target = step_of(t, d);
        while state.step < target {
            let gamma = schedule.gamma(state.step as f64 / d as f64);
            sgd_step(&mut state, model, task, gamma)?;
        }
        curve
            .rows
            .push(iterate_row(&state.x, t, model, task, oracle.as_ref(), options.partition)?);
        if let Some(obs) = options.observer.as_mut() {
            obs(t, &state)?;
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_identity, build_zero_one};
    use crate::task::random_target;

    #[test]
    fn zero_variance_gives_mean() {
        let model = SpectralMixture::new(
            vec![1.0],
            vec![vec![0.0; 4]],
            vec![vec![0.5, -0.5, 0.1, 0.0]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, label) = sample_point(&model, &Task::BinaryLogistic, 0, &mut rng);
        assert_eq!(a, vec![0.5, -0.5, 0.1, 0.0]);
        assert_eq!(label, Label::Class(0));
    }

    #[test]
    fn zero_one_null_block_is_deterministic() {
        let (model, part) = build_zero_one(8, [0.25; 4], [0.25; 4], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let class = sample_class(model.probs(), &mut rng);
            let (a, _) = sample_point(&model, &Task::BinaryLogistic, class, &mut rng);
            for &rho in part.block(0) {
                assert_eq!(a[rho], model.means(class)[rho]);
            }
        }
    }

    #[test]
    fn identity_sample_covariance() {
        let d = 8;
        let model = SpectralMixture::new(vec![1.0], vec![vec![1.0; d]], vec![vec![0.0; d]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut cov = vec![0.0; d * d];
        for _ in 0..n {
            let (a, _) = sample_point(&model, &Task::BinaryLogistic, 0, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += a[i] * a[j] / n as f64;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i * d + j] - want).abs() < 0.05, "({i},{j}) {}", cov[i * d + j]);
            }
        }
    }

    #[test]
    fn zero_rate_leaves_state() {
        let model = build_identity(16, 1.0).unwrap();
        let x = DMatrix::from_fn(16, 1, |i, _| i as f64 * 0.01);
        let mut s = SgdState::new(x.clone(), 0);
        for _ in 0..10 {
            sgd_step(&mut s, &model, &Task::BinaryLogistic, 0.0).unwrap();
        }
        assert_eq!(s.x, x);
        assert_eq!(s.step, 10);
    }

    #[test]
    fn origin_step_direction() {
        let model = build_identity(16, 1.0).unwrap();
        let mut s = SgdState::zeros(&model, &Task::BinaryLogistic, 5);
        let mut probe = s.rng.clone();
        let class = sample_class(model.probs(), &mut probe);
        let (a, _) = sample_point(&model, &Task::BinaryLogistic, class, &mut probe);
        sgd_step(&mut s, &model, &Task::BinaryLogistic, 0.4).unwrap();
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for rho in 0..16 {
            assert!((s.x[(rho, 0)] - sign * 0.4 / 32.0 * a[rho]).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_interpolation_point_is_fixed() {
        let model = build_identity(12, 1.0).unwrap();
        let target = random_target(12, 1, 4);
        let task = Task::Mse {
            target: target.clone(),
            sigma: 0.0,
        };
        let mut s = SgdState::new(target.clone(), 1);
        for _ in 0..50 {
            sgd_step(&mut s, &model, &task, 0.7).unwrap();
        }
        assert!((&s.x - &target).abs().max() < 1e-15);
    }

    #[test]
    fn runs_are_reproducible() {
        let model = build_identity(50, 1.0).unwrap();
        let grid = TimeGrid::linear(2.0, 11).unwrap();
        let sched = Schedule::constant(0.5).unwrap();
        let a = run_sgd(&model, &Task::BinaryLogistic, &sched, &grid, 3, Default::default()).unwrap();
        let b = run_sgd(&model, &Task::BinaryLogistic, &sched, &grid, 3, Default::default()).unwrap();
        let c = run_sgd(&model, &Task::BinaryLogistic, &sched, &grid, 4, Default::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn overflow_is_reported() {
        let model = build_identity(4, 1.0).unwrap();
        let task = Task::Mse {
            target: random_target(4, 1, 0),
            sigma: 0.0,
        };
        let mut s = SgdState::zeros(&model, &task, 0);
        let err = (0..100_000)
            .try_for_each(|_| sgd_step(&mut s, &model, &task, 1e6))
            .unwrap_err();
        assert!(matches!(err, Error::SgdOverflow { .. }));
    }
}
