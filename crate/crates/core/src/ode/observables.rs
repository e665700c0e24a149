use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::MomentOracle;
use crate::ode::curve::{BlockStats, CurveRow};
use crate::ode::{OdeState, StateLayout};
use crate::spectral::{SpectralMixture, ZeroOnePartition};
use crate::task::Task;

pub(crate) fn alignment(m: f64, v: f64) -> f64 {
    if v > 0.0 {
        m / v.sqrt()
    } else {
        0.0
    }
}

/// Sums `value(rho) / d` over each zero-one block.
pub(crate) fn block_sums(
    partition: &ZeroOnePartition,
    d: usize,
    value: impl Fn(usize) -> f64,
) -> [Option<f64>; 4] {
    [0, 1, 2, 3].map(|b| {
        let modes = partition.block(b);
        (!modes.is_empty()).then(|| modes.iter().map(|&r| value(r)).sum::<f64>() / d as f64)
    })
}

/// Class-conditional preactivation law `(B_i, m_i)` of a general state.
pub(crate) fn general_aggregates(
    model: &SpectralMixture,
    width: usize,
    classes: usize,
    y: &[f64],
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let d = model.dim();
    let stride = width * width + classes * width;
    let mut covs = vec![DMatrix::zeros(width, width); classes];
    let mut means = vec![DVector::zeros(width); classes];
    for rho in 0..d {
        let s = &y[rho * stride..(rho + 1) * stride];
        for (i, cov) in covs.iter_mut().enumerate() {
            let lam = model.eigvals(i)[rho];
            if lam != 0.0 {
                for a in 0..width * width {
                    cov[(a / width, a % width)] += lam * s[a];
                }
            }
        }
        for (j, mean) in means.iter_mut().enumerate() {
            let off = width * width + j * width;
            for a in 0..width {
                mean[a] += s[off + a];
            }
        }
    }
    let inv = 1.0 / d as f64;
    covs.iter_mut().for_each(|c| {
        *c *= inv;
        let sym = (&*c + c.transpose()) * 0.5;
        *c = sym;
    });
    means.iter_mut().for_each(|m| *m *= inv);
    (covs, means)
}

/// Recorded observables for a deterministic state.
///
/// `m` is the overlap of the first output with the first class mean, `V`
/// the mean squared norm `(1/d) sum_rho tr V_rho`, `B_i = tr B_i` and the
/// loss is `sum_i p_i E[f_i]`. For square loss with soft labels the
/// observables refer to `X - X*`.
pub fn ode_observables(
    state: &OdeState,
    model: &SpectralMixture,
    task: &Task,
    oracle: &dyn MomentOracle,
    partition: Option<&ZeroOnePartition>,
) -> Result<CurveRow> {
    let d = model.dim();
    if state.modes() != d {
        return Err(Error::DimensionMismatch(format!(
            "state has {} modes, model dimension is {d}",
            state.modes()
        )));
    }
    let probs = model.probs();
    let inv = 1.0 / d as f64;
    match state.layout {
        StateLayout::Binary => {
            let v_of = |r: usize| state.norm(r)[0];
            let m_of = |r: usize| state.overlap(r, 0)[0];
            let v = (0..d).map(v_of).sum::<f64>() * inv;
            let m = (0..d).map(m_of).sum::<f64>() * inv;
            let b: Vec<f64> = (0..2)
                .map(|i| (0..d).map(|r| model.eigvals(i)[r] * v_of(r)).sum::<f64>() * inv)
                .collect();
            let mut loss = 0.0;
            for (i, sign) in [(0usize, 1.0), (1, -1.0)] {
                let cov = DMatrix::from_element(1, 1, b[i]);
                let mean = DVector::from_element(1, sign * m);
                loss += probs[i] * oracle.class_moments(i, &cov, &mean)?.loss;
            }
            let blocks = partition.map(|p| BlockStats {
                m: block_sums(p, d, m_of),
                v: block_sums(p, d, v_of),
            });
            Ok(CurveRow {
                t: state.t,
                loss,
                m,
                v,
                b,
                blocks,
                align: alignment(m, v),
            })
        }
        StateLayout::General { width, classes } => {
            let (covs, means) = general_aggregates(model, width, classes, &state.data);
            let mut loss = 0.0;
            for i in 0..classes {
                loss += probs[i] * oracle.class_moments(i, &covs[i], &means[i])?.loss;
            }
            // Soft labels report X - X*, i.e. the contrast C = [I, -I].
            let soft = task.target().is_some();
            let l = if soft { width / 2 } else { width };
            let contrast_tr = |blk: &[f64]| -> f64 {
                (0..l)
                    .map(|a| {
                        if soft {
                            blk[a * width + a] + blk[(a + l) * width + a + l]
                                - blk[a * width + a + l]
                                - blk[(a + l) * width + a]
                        } else {
                            blk[a * width + a]
                        }
                    })
                    .sum()
            };
            let first = |vec: &[f64]| if soft { vec[0] - vec[l] } else { vec[0] };
            let v_of = |r: usize| contrast_tr(state.norm(r));
            let m_of = |r: usize| first(state.overlap(r, 0));
            let v = (0..d).map(v_of).sum::<f64>() * inv;
            let m = first(means[0].as_slice());
            // Symmetric, so the column-major slice reads the same row-major.
            let b = covs.iter().map(|c| contrast_tr(c.as_slice())).collect();
            let blocks = partition.map(|p| BlockStats {
                m: block_sums(p, d, m_of),
                v: block_sums(p, d, v_of),
            });
            Ok(CurveRow {
                t: state.t,
                loss,
                m,
                v,
                b,
                blocks,
                align: alignment(m, v),
            })
        }
        StateLayout::Mse { classes, outputs } => {
            let sigma = match task {
                Task::Mse { sigma, .. } => *sigma,
                _ => return Err(Error::invalid("task", "square-loss state needs a square-loss task")),
            };
            let agg = mse_aggregates(model, classes, outputs, &state.data);
            let loss: f64 = (0..classes)
                .map(|i| probs[i] * agg.class_loss(i, sigma))
                .sum();
            let v_of = |r: usize| state.norm(r)[0];
            let m_of = |r: usize| state.overlap(r, 0)[0];
            let v = (0..d).map(v_of).sum::<f64>() * inv;
            let m = agg.overlap[0];
            let blocks = partition.map(|p| BlockStats {
                m: block_sums(p, d, m_of),
                v: block_sums(p, d, v_of),
            });
            Ok(CurveRow {
                t: state.t,
                loss,
                m,
                v,
                b: agg.weighted_distance,
                blocks,
                align: alignment(m, v),
            })
        }
    }
}

/// `(1/d) sum_rho lambda_rho^{(i)} D_rho` and `m_{i,u}` of a square-loss state.
pub(crate) struct MseAggregates {
    pub weighted_distance: Vec<f64>,
    /// Row-major `classes x outputs`.
    pub overlap: Vec<f64>,
    pub outputs: usize,
}

impl MseAggregates {
    /// `L_i = B_i / 2 + |m_i|^2 / 2 + sigma^2 / 2`.
    pub fn class_loss(&self, i: usize, sigma: f64) -> f64 {
        let row = &self.overlap[i * self.outputs..(i + 1) * self.outputs];
        0.5 * self.weighted_distance[i] + 0.5 * row.iter().map(|x| x * x).sum::<f64>()
            + 0.5 * sigma * sigma
    }
}

pub(crate) fn mse_aggregates(
    model: &SpectralMixture,
    classes: usize,
    outputs: usize,
    y: &[f64],
) -> MseAggregates {
    let d = model.dim();
    let stride = 1 + classes * outputs;
    let mut weighted = vec![0.0; classes];
    let mut overlap = vec![0.0; classes * outputs];
    for rho in 0..d {
        let s = &y[rho * stride..(rho + 1) * stride];
        for (i, w) in weighted.iter_mut().enumerate() {
            *w += model.eigvals(i)[rho] * s[0];
        }
        for (o, x) in overlap.iter_mut().zip(&s[1..]) {
            *o += x;
        }
    }
    let inv = 1.0 / d as f64;
    weighted.iter_mut().for_each(|w| *w *= inv);
    overlap.iter_mut().for_each(|w| *w *= inv);
    MseAggregates {
        weighted_distance: weighted,
        overlap,
        outputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::BinaryLogisticOracle;
    use crate::spectral::build_identity;

    #[test]
    fn origin_loss_is_log2() {
        let model = build_identity(10, 1.0).unwrap();
        let state = OdeState {
            t: 0.0,
            layout: StateLayout::Binary,
            data: vec![0.0; 20],
        };
        let row = ode_observables(
            &state,
            &model,
            &Task::BinaryLogistic,
            &BinaryLogisticOracle::default(),
            None,
        )
        .unwrap();
        assert!((row.loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!((row.m, row.v, row.align), (0.0, 0.0, 0.0));
        assert_eq!(row.b, vec![0.0, 0.0]);
    }

    #[test]
    fn mismatched_state_rejected() {
        let model = build_identity(10, 1.0).unwrap();
        let state = OdeState {
            t: 0.0,
            layout: StateLayout::Binary,
            data: vec![0.0; 8],
        };
        assert!(ode_observables(
            &state,
            &model,
            &Task::BinaryLogistic,
            &BinaryLogisticOracle::default(),
            None
        )
        .is_err());
    }
}
