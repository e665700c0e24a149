use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{compare_curves, integrate_task, Metric, OdeOptions, SolverSettings, TimeGrid};
use crate::schedule::Schedule;
use crate::sgd::run_sgd;
use crate::spectral::SpectralMixture;
use crate::task::Task;

/// Errors at one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub dim: usize,
    /// `sup_t |L_sgd(t) - L_ode(t)|`, one per seed.
    pub errors: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTable {
    pub rows: Vec<ConcentrationRow>,
    /// Least-squares slope of `log median` against `log d`; absent with
    /// fewer than two dimensions or a zero error.
    pub slope: Option<f64>,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sup-norm loss gap between SGD and its deterministic equivalent across
/// dimensions; `build(d)` constructs the instance at dimension `d`.
///
/// Replicas run in parallel, each with its own seed, so the table does not
/// depend on the number of workers.
pub fn concentration_sweep<F>(
    build: F,
    schedule: &Schedule,
    grid: &TimeGrid,
    dims: &[usize],
    seeds: &[u64],
    settings: &SolverSettings,
) -> Result<ConcentrationTable>
where
    F: Fn(usize) -> Result<(SpectralMixture, Task)> + Sync,
{
    if dims.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("dims", "need at least one dimension and one seed"));
    }
    let instances: Vec<(SpectralMixture, Task)> = dims.iter().map(|&d| build(d)).collect::<Result<_>>()?;
    let references = instances
        .par_iter()
        .map(|(model, task)| integrate_task(model, task, schedule, grid, settings, OdeOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..dims.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let errors = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let (model, task) = &instances[k];
            let curve = run_sgd(model, task, schedule, grid, seed, Default::default())?;
            let diffs = compare_curves(&curve, &references[k], Metric::Sup)?;
            Ok(diffs
                .iter()
                .find(|(n, _)| n == "loss")
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN))
        })
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<ConcentrationRow> = dims
        .iter()
        .enumerate()
        .map(|(k, &dim)| {
            let errs = errors[k * seeds.len()..(k + 1) * seeds.len()].to_vec();
            ConcentrationRow {
                dim,
                median: median(&errs),
                errors: errs,
            }
        })
        .collect();
    let slope = (rows.len() >= 2 && rows.iter().all(|r| r.median > 0.0)).then(|| {
        let x: Vec<f64> = rows.iter().map(|r| (r.dim as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
        slope(&x, &y)
    });
    Ok(ConcentrationTable { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_identity;

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let x = [1.0, 2.0, 3.0];
        assert!((slope(&x, &[1.0, 0.5, 0.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_dimension_has_no_slope() {
        let table = concentration_sweep(
            |d| Ok((build_identity(d, 1.0)?, Task::BinaryLogistic)),
            &Schedule::constant(0.5).unwrap(),
            &TimeGrid::linear(1.0, 6).unwrap(),
            &[40],
            &[0, 1],
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].errors.len(), 2);
        assert!(table.slope.is_none());
    }
}
