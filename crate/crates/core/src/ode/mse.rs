use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::SoftMseOracle;
use crate::ode::curve::{CurveKind, CurveMeta, LearningCurve};
use crate::ode::observables::{mse_aggregates, ode_observables};
use crate::ode::{run_rk4, OdeOptions, OdeState, SolverSettings, StateLayout, TimeGrid};
use crate::schedule::Schedule;
use crate::spectral::SpectralMixture;
use crate::task::Task;

/// Deterministic limit of streaming least squares with soft labels
/// `y = <X*, a> + eps`.
///
/// Per mode the state is the distance `D_rho = d |Delta_rho|^2` and the
/// overlaps `m_{rho,j,u} = d mu_{j,rho} Delta_{rho,u}` of `Delta = X - X*`:
///
/// ```text
/// dD/dt       = -2g D sum_i p_i l_i - 2g sum_{i,u} p_i m_{rho,i,u} m_{i,u}
///               + 2g^2 sum_i p_i (l_i + mu~_i) L_i
/// dm_{j,u}/dt = -g m_{j,u} sum_i p_i l_i - g d mu_{j,rho} sum_i p_i mu_{i,rho} m_{i,u}
/// ```
///
/// with `L_i = (1/2d) sum_rho l_i D_rho + |m_i|^2 / 2 + sigma^2 / 2`.
pub fn integrate_mse(
    model: &SpectralMixture,
    target: &DMatrix<f64>,
    sigma: f64,
    schedule: &Schedule,
    grid: &TimeGrid,
    settings: &SolverSettings,
    mut options: OdeOptions<'_>,
) -> Result<LearningCurve> {
    let task = Task::Mse {
        target: target.clone(),
        sigma,
    };
    task.check(model)?;
    let d = model.dim();
    let df = d as f64;
    let k = model.num_classes();
    let l = target.ncols();
    let stride = 1 + k * l;
    let probs = model.probs().to_vec();
    let noise = if settings.noise { 1.0 } else { 0.0 };

    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let g = schedule.gamma(t);
        if g == 0.0 {
            dy.fill(0.0);
            return Ok(());
        }
        let agg = mse_aggregates(model, k, l, y);
        let losses: Vec<f64> = (0..k).map(|i| agg.class_loss(i, sigma)).collect();
        let mut source = vec![0.0; l];
        for rho in 0..d {
            let s = &y[rho * stride..(rho + 1) * stride];
            let ds = &mut dy[rho * stride..(rho + 1) * stride];
            let mut damp = 0.0;
            let mut fisher = 0.0;
            source.fill(0.0);
            let mut cross = 0.0;
            for i in 0..k {
                let lam = model.eigvals(i)[rho];
                let mu_i = model.means(i)[rho];
                damp += probs[i] * lam;
                fisher += probs[i] * (lam + mu_i * mu_i) * losses[i];
                for u in 0..l {
                    let mbar = agg.overlap[i * l + u];
                    source[u] += probs[i] * mu_i * mbar;
                    cross += probs[i] * s[1 + i * l + u] * mbar;
                }
            }
            ds[0] = -2.0 * g * damp * s[0] - 2.0 * g * cross + noise * 2.0 * g * g * fisher;
            for j in 0..k {
                let mu_j = model.means(j)[rho];
                for u in 0..l {
                    let idx = 1 + j * l + u;
                    ds[idx] = -g * damp * s[idx] - g * df * mu_j * source[u];
                }
            }
        }
        Ok(())
    };

    let mut y = vec![0.0; d * stride];
    if let Some(x0) = options.initial {
        if x0.nrows() != d || x0.ncols() != l {
            return Err(Error::DimensionMismatch(format!(
                "initial iterate is {}x{}, expected {d}x{l}",
                x0.nrows(),
                x0.ncols()
            )));
        }
    }
    for rho in 0..d {
        let delta: Vec<f64> = (0..l)
            .map(|u| options.initial.map_or(0.0, |x| x[(rho, u)]) - target[(rho, u)])
            .collect();
        let s = &mut y[rho * stride..(rho + 1) * stride];
        s[0] = df * delta.iter().map(|x| x * x).sum::<f64>();
        for j in 0..k {
            let mu_j = model.means(j)[rho];
            for u in 0..l {
                s[1 + j * l + u] = df * mu_j * delta[u];
            }
        }
    }

    let layout = StateLayout::Mse { classes: k, outputs: l };
    let oracle = SoftMseOracle::new(l, sigma);
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
            .push(ode_observables(&state, model, &task, &oracle, partition)?);
        if let Some(obs) = options.observer.as_mut() {
            obs(&state)?;
        }
        Ok(())
    };
    run_rk4(&mut y, stride, grid, settings, &mut rhs, &mut record)?;
    Ok(curve)
}
