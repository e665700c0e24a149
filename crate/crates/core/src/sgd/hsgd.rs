use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::moments::psd_sqrt;
use crate::ode::{CurveKind, CurveMeta, LearningCurve, TimeGrid};
use crate::schedule::Schedule;
use crate::sgd::iterate_row;
use crate::spectral::{SpectralMixture, ZeroOnePartition};
use crate::task::Task;

/// Settings for [`run_hsgd`].
#[derive(Clone, Copy, Debug)]
pub struct HsgdOptions<'a> {
    /// Euler-Maruyama step; `min(1/d, 0.01)` when absent.
    pub dt: Option<f64>,
    /// Set to `false` for the gradient-flow limit.
    pub diffusion: bool,
    pub initial: Option<&'a DMatrix<f64>>,
    pub partition: Option<&'a ZeroOnePartition>,
}

impl Default for HsgdOptions<'_> {
    fn default() -> Self {
        Self {
            dt: None,
            diffusion: true,
            initial: None,
            partition: None,
        }
    }
}

/// Homogenized SGD: Euler-Maruyama on
///
/// ```text
/// dX = -g sum_i p_i (K_i Xh J_i^T + mu_i G_i^T) dt
///      + g sqrt(dt/d) sum_i sqrt(p_i) (sqrt(K_i) xi_i + mu_i eta_i^T) F_i^{1/2}
/// ```
///
/// with `(G_i, J_i, F_i)` the oracle's moments at the iterate's
/// `(B_i, m_i)`, `xi_i` a `d x l` and `eta_i` an `l`-dimensional standard
/// normal draw per step.
pub fn run_hsgd(
    model: &SpectralMixture,
    task: &Task,
    schedule: &Schedule,
    grid: &TimeGrid,
    seed: u64,
    options: HsgdOptions<'_>,
) -> Result<LearningCurve> {
    let oracle = task.oracle(model)?;
    let d = model.dim();
    let k = model.num_classes();
    let l = task.outputs(model);
    let w = task.augmented(model);
    let dt = options.dt.unwrap_or((1.0 / d as f64).min(0.01));
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::invalid("dt", format!("{dt} must lie in (0, 0.01]")));
    }
    let mut x = match options.initial {
        Some(x0) if x0.nrows() != d || x0.ncols() != l => {
            return Err(Error::DimensionMismatch(format!(
                "initial iterate is {}x{}, expected {d}x{l}",
                x0.nrows(),
                x0.ncols()
            )))
        }
        Some(x0) => x0.clone(),
        None => DMatrix::zeros(d, l),
    };
    let target = task.target();
    let probs = model.probs().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = LearningCurve::new(CurveMeta {
        seed: Some(seed),
        dim: d,
        model_hash: model.fingerprint(),
        task: task.name().into(),
        schedule: schedule.spec(),
        ..CurveMeta::new(CurveKind::Hsgd)
    });
    let xhat = |x: &DMatrix<f64>, rho: usize, a: usize| -> f64 {
        if a < l {
            x[(rho, a)]
        } else {
            target.map_or(0.0, |t| t[(rho, a - l)])
        }
    };

    let mut t = 0.0;
    let mut drift = DMatrix::zeros(d, l);
    for &t_out in grid.times() {
        let span = t_out - t;
        if span > 0.0 {
            let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                let g = schedule.gamma(t + s as f64 * h);
                if g == 0.0 {
                    continue;
                }
                let mut covs = vec![DMatrix::<f64>::zeros(w, w); k];
                let mut means = vec![DVector::<f64>::zeros(w); k];
                for rho in 0..d {
                    for i in 0..k {
                        let lam = model.eigvals(i)[rho];
                        let mu = model.means(i)[rho];
                        for a in 0..w {
                            let xa = xhat(&x, rho, a);
                            means[i][a] += mu * xa;
                            if lam != 0.0 {
                                for b in 0..w {
                                    covs[i][(a, b)] += lam * xa * xhat(&x, rho, b);
                                }
                            }
                        }
                    }
                }
                let mut triples = Vec::with_capacity(k);
                let mut roots = Vec::with_capacity(k);
                for i in 0..k {
                    let mt = oracle.class_moments(i, &covs[i], &means[i])?;
                    if options.diffusion {
                        roots.push(psd_sqrt(&mt.fisher)?);
                    }
                    triples.push(mt);
                }
                drift.fill(0.0);
                for rho in 0..d {
                    for (i, mt) in triples.iter().enumerate() {
                        let lam = probs[i] * model.eigvals(i)[rho];
                        let mu = probs[i] * model.means(i)[rho];
                        for u in 0..l {
                            let mut jx = 0.0;
                            for a in 0..w {
                                jx += mt.hess[(u, a)] * xhat(&x, rho, a);
                            }
                            drift[(rho, u)] -= g * (lam * jx + mu * mt.grad[u]);
                        }
                    }
                }
                x += &drift * h;
                if options.diffusion {
                    let amp = g * (h / d as f64).sqrt();
                    let mut z = vec![0.0; l];
                    for i in 0..k {
                        let sp = probs[i].sqrt();
                        let eta: Vec<f64> = (0..l).map(|_| StandardNormal.sample(&mut rng)).collect();
                        for rho in 0..d {
                            let lam = model.eigvals(i)[rho].sqrt();
                            let mu = model.means(i)[rho];
                            for u in 0..l {
                                let xi: f64 = StandardNormal.sample(&mut rng);
                                z[u] = lam * xi + mu * eta[u];
                            }
                            for v in 0..l {
                                let mut acc = 0.0;
                                for u in 0..l {
                                    acc += z[u] * roots[i][(u, v)];
                                }
                                x[(rho, v)] += amp * sp * acc;
                            }
                        }
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SgdOverflow {
                        step: ((t + (s + 1) as f64 * h) * d as f64) as u64,
                        norm: x.norm(),
                    });
                }
            }
            t = t_out;
        }
        curve
            .rows
            .push(iterate_row(&x, t_out, model, task, oracle.as_ref(), options.partition)?);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_identity;

    #[test]
    fn zero_rate_is_constant() {
        let model = build_identity(20, 1.0).unwrap();
        let x0 = DMatrix::from_fn(20, 1, |i, _| 0.01 * i as f64);
        let grid = TimeGrid::linear(1.0, 5).unwrap();
        let c = run_hsgd(
            &model,
            &Task::BinaryLogistic,
            &Schedule::constant(0.0).unwrap(),
            &grid,
            0,
            HsgdOptions {
                initial: Some(&x0),
                dt: Some(0.01),
                ..Default::default()
            },
        )
        .unwrap();
        for r in &c.rows {
            assert_eq!(r.v, c.rows[0].v);
            assert_eq!(r.m, c.rows[0].m);
        }
    }

    #[test]
    fn rejects_coarse_step() {
        let model = build_identity(20, 1.0).unwrap();
        let grid = TimeGrid::linear(1.0, 5).unwrap();
        let r = run_hsgd(
            &model,
            &Task::BinaryLogistic,
            &Schedule::constant(0.1).unwrap(),
            &grid,
            0,
            HsgdOptions {
                dt: Some(0.1),
                ..Default::default()
            },
        );
        assert!(r.is_err());
    }
}
