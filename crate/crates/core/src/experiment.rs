//! Configuration-driven runs: curves, analyses and a hashed manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{classify_regime, fit_tail, measure_cw, RegimeReport, TailFit};
use crate::config::{ExperimentConfig, TailSpec};
use crate::error::{Error, Result};
use crate::moments::LogisticQuadrature;
use crate::ode::{
    compare_curves, integrate_task, CurveKind, LearningCurve, Metric, OdeOptions, OdeState,
    StateLayout,
};
use crate::schedule::{Schedule, ScheduleSpec};
use crate::sgd::{concentration_sweep, run_hsgd, run_sgd, ConcentrationTable, HsgdOptions};
use crate::spectral::{validate, SpectralMixture, ZeroOnePartition};
use crate::task::Task;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.csv";

/// One output file and its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub model_hash: String,
    /// True when no random numbers were drawn (ODE-only runs).
    pub deterministic: bool,
    pub files: Vec<FileEntry>,
    pub violations: Vec<String>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schedule_index: usize,
    pub schedule: ScheduleSpec,
    pub kind: CurveKind,
    pub seed: Option<u64>,
    pub file: String,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schedule_index: usize,
    pub kind: CurveKind,
    pub seed: Option<u64>,
    pub metric: Metric,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CwSummary {
    pub schedule_index: usize,
    pub kind: CurveKind,
    pub seed: Option<u64>,
    pub sup: f64,
    pub plateau: f64,
    pub flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub schedule_index: usize,
    pub kind: CurveKind,
    pub seed: Option<u64>,
    pub spec: TailSpec,
    pub fit: Option<TailFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub fingerprint: String,
    pub dim: usize,
    pub classes: usize,
    pub violations: Vec<String>,
}

/// Analysis results, written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: ModelSummary,
    pub regime: Option<RegimeReport>,
    pub runs: Vec<RunSummary>,
    pub comparisons: Vec<Comparison>,
    pub cw: Vec<CwSummary>,
    pub tails: Vec<TailResult>,
    /// One table per schedule.
    pub concentration: Vec<ConcentrationTable>,
    pub violations: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
struct Job {
    schedule: usize,
    kind: CurveKind,
    seed: Option<u64>,
}

impl Job {
    fn file_name(&self) -> String {
        match self.seed {
            Some(s) => format!("{}_g{}_s{}.csv", self.kind.as_str(), self.schedule, s),
            None => format!("{}_g{}.csv", self.kind.as_str(), self.schedule),
        }
    }

    fn label(&self) -> String {
        match self.seed {
            Some(s) => format!("{} run {} seed {s}", self.kind.as_str(), self.schedule),
            None => format!("{} run {}", self.kind.as_str(), self.schedule),
        }
    }
}

const MODE_TOL: f64 = 1e-8;

/// Per-mode checks on a deterministic state: `V_rho >= 0` and, for the
/// binary system, `m_rho^2 <= mu~_rho d V_rho`.
fn check_modes(state: &OdeState, model: &SpectralMixture, out: &mut Vec<String>) {
    let d = model.dim();
    match state.layout {
        StateLayout::Binary => {
            for r in 0..d {
                let v = state.norm(r)[0];
                let m = state.overlap(r, 0)[0];
                let cap = model.mean_sq(0, r) * d as f64 * v;
                if v < -1e-10 || m * m > cap + MODE_TOL * (1.0 + v) {
                    out.push(format!(
                        "t = {}: mode {r} has V = {v:e}, m^2 = {:e} > mu~ d V = {cap:e}",
                        state.t,
                        m * m
                    ));
                    return;
                }
            }
        }
        StateLayout::Mse { .. } => {
            if let Some(r) = (0..d).find(|&r| state.norm(r)[0] < -1e-10) {
                out.push(format!("t = {}: mode {r} has negative distance", state.t));
            }
        }
        StateLayout::General { .. } => {}
    }
}

fn check_curve(curve: &LearningCurve, task: &Task, out: &mut Vec<String>) {
    for row in &curve.rows {
        let bad = !row.loss.is_finite()
            || if task.is_logistic() { row.loss <= 0.0 } else { row.loss < 0.0 };
        if bad {
            out.push(format!("t = {}: loss {} out of range", row.t, row.loss));
            return;
        }
    }
}

struct Instance<'a> {
    config: &'a ExperimentConfig,
    model: &'a SpectralMixture,
    partition: Option<&'a ZeroOnePartition>,
    task: &'a Task,
    schedules: &'a [Schedule],
}

fn run_job(inst: &Instance<'_>, job: Job) -> Result<(LearningCurve, Vec<String>)> {
    let run = &inst.config.run;
    let grid = inst.config.grid()?;
    let schedule = &inst.schedules[job.schedule];
    let mut violations = Vec::new();
    let curve = match job.kind {
        CurveKind::Ode => {
            let mut obs = |s: &OdeState| {
                check_modes(s, inst.model, &mut violations);
                Ok(())
            };
            integrate_task(
                inst.model,
                inst.task,
                schedule,
                &grid,
                &run.solver,
                OdeOptions {
                    partition: inst.partition,
                    observer: Some(&mut obs),
                    ..Default::default()
                },
            )?
        }
        CurveKind::Sgd => {
            let opts = crate::sgd::SgdOptions {
                partition: inst.partition,
                ..Default::default()
            };
            run_sgd(inst.model, inst.task, schedule, &grid, job.seed.unwrap_or(0), opts)?
        }
        CurveKind::Hsgd => {
            let opts = HsgdOptions {
                dt: run.hsgd_dt,
                diffusion: run.hsgd_diffusion,
                partition: inst.partition,
                ..Default::default()
            };
            run_hsgd(inst.model, inst.task, schedule, &grid, job.seed.unwrap_or(0), opts)?
        }
    };
    check_curve(&curve, inst.task, &mut violations);
    let label = job.label();
    Ok((curve, violations.into_iter().map(|v| format!("{label}: {v}")).collect()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    Ok(text)
}

/// Runs every requested process, writes one CSV per run, `report.json`,
/// `model.csv` and finally `manifest.json` into the output directory.
///
/// Invariant violations do not abort the run; they are collected into the
/// report and the manifest (`ok = false`).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    let issues = config.issues();
    if !issues.is_empty() {
        return Err(Error::Config {
            path: PathBuf::from("<in-memory>"),
            messages: issues
                .iter()
                .map(|i| format!("{}.{}: {}", i.section, i.key, i.message))
                .collect(),
        });
    }
    let (model, partition) = config.build_model().map_err(|e| e.context("model"))?;
    let task = config.task.build(&model).map_err(|e| e.context("task"))?;
    let schedules = config.schedules()?;
    let run = &config.run;
    let partition = partition.filter(|_| run.partition);

    let model_violations: Vec<String> = validate(&model, &config.model_limits())
        .iter()
        .map(|v| v.to_string())
        .collect();

    let mut jobs = Vec::new();
    for s in 0..schedules.len() {
        for &kind in &run.kinds {
            if kind == CurveKind::Ode {
                jobs.push(Job { schedule: s, kind, seed: None });
            } else {
                jobs.extend(run.seeds.iter().map(|&seed| Job {
                    schedule: s,
                    kind,
                    seed: Some(seed),
                }));
            }
        }
    }
    let inst = Instance {
        config,
        model: &model,
        partition: partition.as_ref(),
        task: &task,
        schedules: &schedules,
    };
    let results = jobs
        .par_iter()
        .map(|&job| run_job(&inst, job).map_err(|e| e.context(job.label())))
        .collect::<Result<Vec<_>>>()?;

    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut violations: Vec<String> = model_violations.iter().map(|v| format!("model: {v}")).collect();
    let specs = run.schedules();
    let mut runs = Vec::new();
    for (job, (curve, v)) in jobs.iter().zip(&results) {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        files.push(write_file(dir, &job.file_name(), &buf)?);
        violations.extend(v.iter().cloned());
        runs.push(RunSummary {
            schedule_index: job.schedule,
            schedule: specs[job.schedule].clone(),
            kind: job.kind,
            seed: job.seed,
            file: job.file_name(),
            final_loss: curve.last().map_or(f64::NAN, |r| r.loss),
        });
    }

    let mut comparisons = Vec::new();
    let metrics = config.compare_metrics();
    for (job, (curve, _)) in jobs.iter().zip(&results) {
        if job.kind == CurveKind::Ode {
            continue;
        }
        let reference = jobs
            .iter()
            .zip(&results)
            .find(|(j, _)| j.kind == CurveKind::Ode && j.schedule == job.schedule);
        let Some((_, (ode, _))) = reference else { continue };
        for &metric in &metrics {
            comparisons.push(Comparison {
                schedule_index: job.schedule,
                kind: job.kind,
                seed: job.seed,
                metric,
                values: compare_curves(curve, ode, metric)?.into_iter().collect(),
            });
        }
    }

    let mut cw = Vec::new();
    if config.analysis.cw {
        let quad = LogisticQuadrature::shared();
        for (job, (curve, _)) in jobs.iter().zip(&results) {
            let series = measure_cw(curve, quad)?;
            for ((a, t), row) in series.a.iter().zip(&series.t).zip(&curve.rows) {
                if a.is_finite() && *a < 1.0 + (-row.m).exp() - 1e-9 {
                    violations.push(format!(
                        "{}: a({t}) = {a} below 1 + exp(-m) = {}",
                        job.label(),
                        1.0 + (-row.m).exp()
                    ));
                    break;
                }
            }
            cw.push(CwSummary {
                schedule_index: job.schedule,
                kind: job.kind,
                seed: job.seed,
                sup: series.sup,
                plateau: series.plateau,
                flagged: series.flagged.len(),
            });
        }
    }

    let mut tails = Vec::new();
    for spec in &config.analysis.tail {
        for (job, (curve, _)) in jobs.iter().zip(&results) {
            let window = (spec.window[0], spec.window[1]);
            let (fit, error) = match fit_tail(curve, &spec.column, window, spec.law) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            tails.push(TailResult {
                schedule_index: job.schedule,
                kind: job.kind,
                seed: job.seed,
                spec: spec.clone(),
                fit,
                error,
            });
        }
    }

    let regime = match (config.analysis.regime, config.model.exponents()) {
        (true, Some((a, b))) => Some(classify_regime(a, b)?),
        _ => None,
    };

    let concentration = match &config.analysis.concentration {
        Some(_) => sweep(config)?,
        None => Vec::new(),
    };

    let report = Report {
        model: ModelSummary {
            fingerprint: model.fingerprint(),
            dim: model.dim(),
            classes: model.num_classes(),
            violations: model_violations,
        },
        regime,
        runs,
        comparisons,
        cw,
        tails,
        concentration,
        violations: violations.clone(),
    };
    files.push(write_file(dir, REPORT_FILE, &to_json(&report)?)?);
    let mut buf = Vec::new();
    model.write_csv(&mut buf).map_err(|e| Error::io(MODEL_FILE, e))?;
    files.push(write_file(dir, MODEL_FILE, &buf)?);

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        model_hash: model.fingerprint(),
        deterministic: run.is_deterministic(),
        files,
        ok: violations.is_empty(),
        violations,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, to_json(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Concentration tables (one per schedule) for `analysis.concentration`.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<ConcentrationTable>> {
    let spec = config
        .analysis
        .concentration
        .as_ref()
        .ok_or_else(|| Error::invalid("analysis.concentration", "not configured"))?;
    let grid = config.grid()?;
    config
        .schedules()?
        .iter()
        .map(|s| {
            concentration_sweep(
                |d| config.build_at(d),
                s,
                &grid,
                &spec.dims,
                &spec.seeds,
                &config.run.solver,
            )
        })
        .collect()
}

/// Per-column distance between two curve files.
pub fn compare(a: &Path, b: &Path, metric: Metric) -> Result<Vec<(String, f64)>> {
    let ca = LearningCurve::load_csv(a)?;
    let cb = LearningCurve::load_csv(b)?;
    compare_curves(&ca, &cb, metric)
}

/// Recomputes the hash of every file listed in a manifest; returns the
/// paths whose content no longer matches.
pub fn verify_manifest(dir: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let mut stale = Vec::new();
    for f in &manifest.files {
        let path = dir.join(&f.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            stale.push(f.path.clone());
        }
    }
    Ok(stale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn config(dir: &Path, extra: &str) -> ExperimentConfig {
        let src = format!(
            "[model]\nkind = \"identity\"\nd = 40\n\n[task]\nloss = \"binary_logistic\"\n\n\
             [run]\ngamma = [0.5]\nhorizon = 1.0\ngrid = {{ kind = \"linear\", points = 11 }}\n{extra}\n\
             [output]\ndir = {:?}\n",
            dir.display().to_string()
        );
        ExperimentConfig::from_toml_str(&src, Path::new("t.toml")).unwrap()
    }

    #[test]
    fn ode_only_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let m = run_experiment(&config(tmp.path(), "")).unwrap();
        assert!(m.deterministic && m.ok, "{:?}", m.violations);
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["ode_g0.csv", REPORT_FILE, MODEL_FILE]);
        assert!(verify_manifest(tmp.path(), &m).unwrap().is_empty());
        assert!(tmp.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn reruns_reproduce_hashes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let extra = "kinds = [\"ode\", \"sgd\", \"hsgd\"]\nseeds = [3, 4]\n";
        let ma = run_experiment(&config(a.path(), extra)).unwrap();
        let mb = run_experiment(&config(b.path(), extra)).unwrap();
        assert!(!ma.deterministic);
        assert_eq!(ma.files, mb.files);
        assert_eq!(ma.files.len(), 1 + 2 + 2 + 2);
        let report: Report =
            serde_json::from_slice(&std::fs::read(a.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(report.comparisons.len(), 4);
    }
}
