use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{BinaryLogisticOracle, LogisticQuadrature};
use crate::ode::curve::{CurveKind, CurveMeta, LearningCurve};
use crate::ode::observables::ode_observables;
use crate::ode::{run_rk4, OdeOptions, OdeState, SolverSettings, StateLayout, TimeGrid};
use crate::schedule::Schedule;
use crate::spectral::SpectralMixture;
use crate::task::Task;

/// Per-mode `(V_rho, m_rho)` at `X_0`.
pub(crate) fn binary_initial(model: &SpectralMixture, initial: Option<&DMatrix<f64>>) -> Result<Vec<f64>> {
    let d = model.dim();
    let mut y = vec![0.0; 2 * d];
    if let Some(x0) = initial {
        if x0.nrows() != d || x0.ncols() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "initial iterate is {}x{}, expected {d}x1",
                x0.nrows(),
                x0.ncols()
            )));
        }
        let mu = model.means(0);
        for rho in 0..d {
            y[2 * rho] = d as f64 * x0[(rho, 0)] * x0[(rho, 0)];
            y[2 * rho + 1] = d as f64 * x0[(rho, 0)] * mu[rho];
        }
    }
    Ok(y)
}

/// Deterministic limit of binary logistic regression on the symmetric
/// mixture `+-mu` (class 0 positive).
///
/// The state per mode is `(V_rho, m_rho)`:
///
/// ```text
/// dV/dt = -2g V sum_i p_i l_i (W1_i - W2_i) + 2g m S + g^2 sum_i p_i (l_i + mu~) W2_i
/// dm/dt = -g m sum_i p_i l_i (W1_i - W2_i) + g d mu~ S
/// ```
///
/// with `S = p_1 W1_1 + p_2 W1_2` and `(W1_i, W2_i)` the logistic moments at
/// `(m(t), B_i(t))`.
pub fn integrate_binary_logistic(
    model: &SpectralMixture,
    schedule: &Schedule,
    grid: &TimeGrid,
    settings: &SolverSettings,
    mut options: OdeOptions<'_>,
) -> Result<LearningCurve> {
    if !model.is_symmetric_binary() {
        return Err(Error::invalid(
            "model",
            "the binary reduction needs two classes with means +mu and -mu",
        ));
    }
    let d = model.dim();
    let df = d as f64;
    let p = [model.probs()[0], model.probs()[1]];
    let lam = [model.eigvals(0), model.eigvals(1)];
    let mu_sq: Vec<f64> = (0..d).map(|r| model.mean_sq(0, r)).collect();
    let quad = LogisticQuadrature::shared();
    let noise = if settings.noise { 1.0 } else { 0.0 };

    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let g = schedule.gamma(t);
        if g == 0.0 {
            dy.fill(0.0);
            return Ok(());
        }
        let (mut b1, mut b2, mut m) = (0.0, 0.0, 0.0);
        for rho in 0..d {
            b1 += lam[0][rho] * y[2 * rho];
            b2 += lam[1][rho] * y[2 * rho];
            m += y[2 * rho + 1];
        }
        let (b1, b2, m) = (b1 / df, b2 / df, m / df);
        let e1 = quad.moments(m, b1.max(0.0))?;
        let e2 = quad.moments(m, b2.max(0.0))?;
        let s = p[0] * e1.w1 + p[1] * e2.w1;
        let c = [p[0] * e1.curvature(), p[1] * e2.curvature()];
        let f = [p[0] * e1.w2, p[1] * e2.w2];
        for rho in 0..d {
            let (v, mr) = (y[2 * rho], y[2 * rho + 1]);
            let (l0, l1) = (lam[0][rho], lam[1][rho]);
            let damp = l0 * c[0] + l1 * c[1];
            let fisher = (l0 + mu_sq[rho]) * f[0] + (l1 + mu_sq[rho]) * f[1];
            dy[2 * rho] = -2.0 * g * v * damp + 2.0 * g * mr * s + noise * g * g * fisher;
            dy[2 * rho + 1] = -g * mr * damp + g * df * mu_sq[rho] * s;
        }
        Ok(())
    };

    let oracle = BinaryLogisticOracle::default();
    let mut curve = LearningCurve::new(CurveMeta {
        dim: d,
        model_hash: model.fingerprint(),
        task: Task::BinaryLogistic.name().into(),
        schedule: schedule.spec(),
        solver: Some(*settings),
        ..CurveMeta::new(CurveKind::Ode)
    });
    let partition = options.partition;
    let mut record = |t: f64, y: &[f64]| -> Result<()> {
        let state = OdeState {
            t,
            layout: StateLayout::Binary,
            data: y.to_vec(),
        };
        curve
            .rows
            .push(ode_observables(&state, model, &Task::BinaryLogistic, &oracle, partition)?);
        if let Some(obs) = options.observer.as_mut() {
            obs(&state)?;
        }
        Ok(())
    };
    let mut y = binary_initial(model, options.initial)?;
    run_rk4(&mut y, 2, grid, settings, &mut rhs, &mut record)?;
    Ok(curve)
}
