use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::MomentOracle;
use crate::ode::curve::{CurveKind, CurveMeta, LearningCurve};
use crate::ode::observables::{general_aggregates, ode_observables};
use crate::ode::{run_rk4, OdeOptions, OdeState, SolverSettings, StateLayout, TimeGrid};
use crate::schedule::Schedule;
use crate::spectral::SpectralMixture;
use crate::task::Task;

const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Per-mode statistics `V_rho = d Xh_rho Xh_rho^T` and
/// `m_{rho,j} = d mu_{j,rho} Xh_rho` of the augmented iterate `Xh = [X, X*]`.
pub fn mode_statistics(x: &DMatrix<f64>, model: &SpectralMixture, task: &Task, t: f64) -> OdeState {
    let d = model.dim();
    let k = model.num_classes();
    let l = x.ncols();
    let w = task.augmented(model);
    let stride = w * w + k * w;
    let mut data = vec![0.0; d * stride];
    let mut row = vec![0.0; w];
    for rho in 0..d {
        for a in 0..l {
            row[a] = x[(rho, a)];
        }
        if let Some(target) = task.target() {
            for a in 0..target.ncols() {
                row[l + a] = target[(rho, a)];
            }
        }
        let s = &mut data[rho * stride..(rho + 1) * stride];
        for a in 0..w {
            for b in 0..w {
                s[a * w + b] = d as f64 * row[a] * row[b];
            }
        }
        for j in 0..k {
            let mu = model.means(j)[rho];
            for a in 0..w {
                s[w * w + j * w + a] = d as f64 * mu * row[a];
            }
        }
    }
    OdeState {
        t,
        layout: StateLayout::General { width: w, classes: k },
        data,
    }
}

fn general_initial(
    model: &SpectralMixture,
    task: &Task,
    initial: Option<&DMatrix<f64>>,
) -> Result<Vec<f64>> {
    let (d, l) = (model.dim(), task.outputs(model));
    match initial {
        Some(x0) if x0.nrows() != d || x0.ncols() != l => Err(Error::DimensionMismatch(format!(
            "initial iterate is {}x{}, expected {d}x{l}",
            x0.nrows(),
            x0.ncols()
        ))),
        Some(x0) => Ok(mode_statistics(x0, model, task, 0.0).data),
        None => Ok(mode_statistics(&DMatrix::zeros(d, l), model, task, 0.0).data),
    }
}

/// Class moments lifted to the augmented width: the curvature `J` (the
/// `l x lbar` Hessian padded with zero rows), the mean gradient and the
/// Fisher block, each pre-multiplied by the class probability.
struct Lifted {
    curv: Vec<f64>,
    grad: Vec<f64>,
    fisher: Vec<f64>,
}

/// Deterministic limit of streaming SGD for a general loss.
///
/// Per mode, with `A_rho = sum_i p_i lambda_rho^{(i)} J_i`:
///
/// ```text
/// dV/dt   = -g (A V + V A^T) - g sum_i p_i (G_i m_i^T + m_i G_i^T)
///           + g^2 sum_i p_i (lambda_i + mu~_i) F_i
/// dm_j/dt = -g A m_j - g d mu_{j,rho} sum_i p_i mu_{i,rho} G_i
/// ```
///
/// where `(G_i, J_i, F_i)` are the oracle's moments at `(B_i(t), m_i(t))`.
/// For soft labels the iterate is augmented with `X*`, whose block of `V`
/// and `m` stays fixed.
pub fn integrate_general(
    model: &SpectralMixture,
    task: &Task,
    oracle: &dyn MomentOracle,
    schedule: &Schedule,
    grid: &TimeGrid,
    settings: &SolverSettings,
    mut options: OdeOptions<'_>,
) -> Result<LearningCurve> {
    task.check(model)?;
    let d = model.dim();
    let df = d as f64;
    let k = model.num_classes();
    let l = task.outputs(model);
    let w = task.augmented(model);
    if oracle.outputs() != l || oracle.augmented() != w {
        return Err(Error::DimensionMismatch(format!(
            "oracle works on {}x{}, task needs {l}x{w}",
            oracle.outputs(),
            oracle.augmented()
        )));
    }
    let stride = w * w + k * w;
    let probs = model.probs().to_vec();
    let noise = if settings.noise { 1.0 } else { 0.0 };

    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let g = schedule.gamma(t);
        if g == 0.0 {
            dy.fill(0.0);
            return Ok(());
        }
        let (covs, means) = general_aggregates(model, w, k, y);
        let mut lifted = Vec::with_capacity(k);
        for i in 0..k {
            let mt = oracle.class_moments(i, &covs[i], &means[i])?;
            let p = probs[i];
            let mut curv = vec![0.0; w * w];
            let mut grad = vec![0.0; w];
            let mut fisher = vec![0.0; w * w];
            for a in 0..l {
                grad[a] = p * mt.grad[a];
                for b in 0..w {
                    curv[a * w + b] = p * mt.hess[(a, b)];
                }
                for b in 0..l {
                    fisher[a * w + b] = p * mt.fisher[(a, b)];
                }
            }
            lifted.push(Lifted { curv, grad, fisher });
        }
        let mode_rhs = |rho: usize, s: &[f64], ds: &mut [f64]| {
            let mut a_mat = vec![0.0; w * w];
            let mut noise_mat = vec![0.0; w * w];
            let mut source = vec![0.0; w];
            for (i, lf) in lifted.iter().enumerate() {
                let lam = model.eigvals(i)[rho];
                let mu_i = model.means(i)[rho];
                let fw = noise * g * g * (lam + mu_i * mu_i);
                for a in 0..w * w {
                    a_mat[a] += lam * lf.curv[a];
                    noise_mat[a] += fw * lf.fisher[a];
                }
                for a in 0..w {
                    source[a] += mu_i * lf.grad[a];
                }
            }
            let v = &s[..w * w];
            for a in 0..w {
                for b in 0..w {
                    let mut av = 0.0;
                    let mut va = 0.0;
                    for c in 0..w {
                        av += a_mat[a * w + c] * v[c * w + b];
                        va += v[a * w + c] * a_mat[b * w + c];
                    }
                    let mut cross = 0.0;
                    for (i, lf) in lifted.iter().enumerate() {
                        let m_i = &s[w * w + i * w..w * w + (i + 1) * w];
                        cross += lf.grad[a] * m_i[b] + m_i[a] * lf.grad[b];
                    }
                    ds[a * w + b] = -g * (av + va) - g * cross + noise_mat[a * w + b];
                }
            }
            for j in 0..k {
                let mu_j = model.means(j)[rho];
                let off = w * w + j * w;
                for a in 0..w {
                    let mut am = 0.0;
                    for c in 0..w {
                        am += a_mat[a * w + c] * s[off + c];
                    }
                    ds[off + a] = -g * am - g * df * mu_j * source[a];
                }
            }
        };
        if y.len() >= PARALLEL_THRESHOLD {
            dy.par_chunks_mut(stride)
                .zip(y.par_chunks(stride))
                .enumerate()
                .for_each(|(rho, (ds, s))| mode_rhs(rho, s, ds));
        } else {
            for (rho, (ds, s)) in dy.chunks_mut(stride).zip(y.chunks(stride)).enumerate() {
                mode_rhs(rho, s, ds);
            }
        }
        Ok(())
    };

    let layout = StateLayout::General { width: w, classes: k };
    let mut curve = LearningCurve::new(CurveMeta {
        dim: d,
        model_hash: model.fingerprint(),
        task: task.name().into(),
        schedule: schedule.spec(),
        solver: Some(*settings),
        ..CurveMeta::new(CurveKind::Ode)
    });
    let partition = options.partition;
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let state = OdeState {
            t,
            layout,
            data: y.to_vec(),
        };
        curve
            .rows
            .push(ode_observables(&state, model, task, oracle, partition)?);
        if let Some(obs) = options.observer.as_mut() {
            obs(&state)?;
        }
        Ok(())
    };
    let mut y = general_initial(model, task, options.initial)?;
    run_rk4(&mut y, stride, grid, settings, &mut rhs, &mut record)?;
    Ok(curve)
}
