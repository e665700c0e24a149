//! Experiment configuration files (TOML).
//!
//! ```toml
//! [model]
//! kind = "identity"        # identity | power_law | power_law_multiclass | zero_one
//! d = 1000
//! norm = 1.0
//!
//! [task]
//! loss = "binary_logistic" # binary_logistic | cross_entropy | mse
//!
//! [run]
//! kinds = ["ode", "sgd"]
//! gamma = [0.3, 0.6, 0.9]
//! horizon = 10.0
//! seeds = [0, 1, 2]
//! grid = { kind = "linear", points = 101 }
//!
//! [analysis]
//! cw = true
//! tail = [{ column = "loss", law = "power", window = [1e2, 1e4] }]
//!
//! [output]
//! dir = "out/identity"
//! ```
//!
//! Unknown keys are rejected everywhere. Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `model.norm` | 1 |
//! | `model.classes` (identity) | 2 |
//! | `model.seed` | 0 |
//! | `task.sigma` (mse) | 0 |
//! | `task.outputs` (mse) | number of classes |
//! | `task.target_seed` (mse) | 0 |
//! | `run.kinds` | `["ode"]` |
//! | `run.gamma_bound` | 2 |
//! | `run.horizon` | 10 |
//! | `run.grid` | `{ kind = "log", start = 0.01, per_decade = 32 }` |
//! | `run.seeds` | `[0]` |
//! | `run.solver` | step 0.01, stretch from t = 100 by 0.05 t, max step 1 |
//! | `run.hsgd_dt` | `min(1/d, 0.01)` |
//! | `run.hsgd_diffusion` | true |
//! | `run.partition` | true (zero-one models only) |
//! | `analysis.compare` | `["sup"]` when an empirical kind runs next to `ode` |
//! | `analysis.tail[].column` | `"loss"` |
//! | `analysis.tail[].window` | `[100, 10000]` |
//! | `analysis.concentration.seeds` | `[0, 1, 2]` |
//! | `output.dir` | `"out"` |
//! | `limits` | operator bound 1, mean bound 4, class cap 8 |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::TailLaw;
use crate::error::{Error, Result};
use crate::moments::SoftmaxIntegration;
use crate::ode::{CurveKind, Metric, SolverSettings, TimeGrid};
use crate::schedule::{Schedule, ScheduleSpec};
use crate::spectral::{
    build_identity, build_power_law, build_power_law_multiclass, build_zero_one, ModelLimits,
    SpectralMixture, ZeroOnePartition,
};
use crate::task::{random_target, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub task: TaskSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ModelLimits>,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Identity covariance, `+-mu` spread evenly over modes. One class keeps
    /// only `+mu`; `norm = 0` centres the data.
    Identity {
        d: usize,
        #[serde(default = "one")]
        norm: f64,
        #[serde(default = "two")]
        classes: usize,
    },
    /// One exponent per class (one or two classes).
    PowerLaw {
        d: usize,
        alpha: Vec<f64>,
        beta: f64,
        #[serde(default = "one")]
        norm: f64,
    },
    /// Shared power-law spectrum, orthogonalized random means.
    PowerLawMulticlass {
        d: usize,
        alpha: f64,
        classes: usize,
        #[serde(default)]
        seed: u64,
    },
    ZeroOne {
        d: usize,
        fractions: [f64; 4],
        mass: [f64; 4],
        #[serde(default)]
        seed: u64,
    },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Identity { d, .. }
            | ModelSpec::PowerLaw { d, .. }
            | ModelSpec::PowerLawMulticlass { d, .. }
            | ModelSpec::ZeroOne { d, .. } => *d,
        }
    }

    pub fn with_dim(&self, dim: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::Identity { d, .. }
            | ModelSpec::PowerLaw { d, .. }
            | ModelSpec::PowerLawMulticlass { d, .. }
            | ModelSpec::ZeroOne { d, .. } => *d = dim,
        }
        out
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelSpec::Identity { classes, .. } => *classes,
            ModelSpec::PowerLaw { alpha, .. } => alpha.len(),
            ModelSpec::PowerLawMulticlass { classes, .. } => *classes,
            ModelSpec::ZeroOne { .. } => 2,
        }
    }

    /// `(alpha, beta)` for families that have them; identity is `alpha = 0`.
    pub fn exponents(&self) -> Option<(f64, f64)> {
        match self {
            ModelSpec::Identity { .. } => Some((0.0, 0.0)),
            ModelSpec::PowerLaw { alpha, beta, .. } => alpha.first().map(|a| (*a, *beta)),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<(SpectralMixture, Option<ZeroOnePartition>)> {
        Ok(match self {
            ModelSpec::Identity { d, norm, classes } => {
                if *classes == 2 && *norm > 0.0 {
                    (build_identity(*d, *norm)?, None)
                } else {
                    (identity_model(*d, *norm, *classes)?, None)
                }
            }
            ModelSpec::PowerLaw { d, alpha, beta, norm } => {
                (build_power_law(*d, alpha, *beta, *norm)?, None)
            }
            ModelSpec::PowerLawMulticlass { d, alpha, classes, seed } => {
                (build_power_law_multiclass(*d, *alpha, *classes, *seed)?, None)
            }
            ModelSpec::ZeroOne { d, fractions, mass, seed } => {
                let (m, p) = build_zero_one(*d, *fractions, *mass, *seed)?;
                (m, Some(p))
            }
        })
    }
}

fn identity_model(d: usize, norm: f64, classes: usize) -> Result<SpectralMixture> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be positive"));
    }
    if !(norm.is_finite() && norm >= 0.0) {
        return Err(Error::invalid("norm", format!("{norm} must be >= 0")));
    }
    let c = (norm / d as f64).sqrt();
    let (probs, means) = match classes {
        1 => (vec![1.0], vec![vec![c; d]]),
        2 => (vec![0.5, 0.5], vec![vec![c; d], vec![-c; d]]),
        _ => return Err(Error::invalid("classes", "identity models have one or two classes")),
    };
    SpectralMixture::new(probs, vec![vec![1.0; d]; classes], means)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    BinaryLogistic,
    CrossEntropy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        integration: Option<SoftmaxIntegration>,
    },
    /// Soft labels from a random `X*` with `N(0, 1/(d l))` entries.
    Mse {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outputs: Option<usize>,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        target_seed: u64,
    },
}

impl TaskSpec {
    pub fn is_logistic(&self) -> bool {
        !matches!(self, TaskSpec::Mse { .. })
    }

    pub fn build(&self, model: &SpectralMixture) -> Result<Task> {
        let task = match self {
            TaskSpec::BinaryLogistic => Task::BinaryLogistic,
            TaskSpec::CrossEntropy { integration } => Task::CrossEntropy {
                integration: integration
                    .unwrap_or_else(|| SoftmaxIntegration::default_for(model.num_classes())),
            },
            TaskSpec::Mse {
                outputs,
                sigma,
                target_seed,
            } => {
                let l = outputs.unwrap_or(model.num_classes());
                Task::Mse {
                    target: random_target(model.dim(), l, *target_seed),
                    sigma: *sigma,
                }
            }
        };
        task.check(model)?;
        Ok(task)
    }
}

/// Output times; the last one is `run.horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Evenly spaced from 0, `points` including both ends.
    Linear { points: usize },
    /// 0 followed by `per_decade` log-spaced points from `start`.
    Log { start: f64, per_decade: usize },
    Explicit { times: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Log {
            start: 0.01,
            per_decade: 32,
        }
    }
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> Result<TimeGrid> {
        match self {
            GridSpec::Linear { points } => TimeGrid::linear(horizon, *points),
            GridSpec::Log { start, per_decade } => TimeGrid::log(*start, horizon, *per_decade),
            GridSpec::Explicit { times } => TimeGrid::new(times.clone()),
        }
    }
}

fn default_kinds() -> Vec<CurveKind> {
    vec![CurveKind::Ode]
}

fn default_bound() -> f64 {
    2.0
}

fn default_horizon() -> f64 {
    10.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<CurveKind>,
    /// Constant learning rates, one run each.
    #[serde(default)]
    pub gamma: Vec<f64>,
    /// Further schedules, one run each.
    #[serde(default)]
    pub schedule: Vec<ScheduleSpec>,
    #[serde(default = "default_bound")]
    pub gamma_bound: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hsgd_dt: Option<f64>,
    #[serde(default = "yes")]
    pub hsgd_diffusion: bool,
    /// Record zero-one block projections.
    #[serde(default = "yes")]
    pub partition: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kinds: default_kinds(),
            gamma: Vec::new(),
            schedule: Vec::new(),
            gamma_bound: default_bound(),
            horizon: default_horizon(),
            grid: GridSpec::default(),
            seeds: default_seeds(),
            solver: SolverSettings::default(),
            hsgd_dt: None,
            hsgd_diffusion: true,
            partition: true,
        }
    }
}

impl RunConfig {
    /// Every schedule to run: the constants first, then `schedule` entries.
    pub fn schedules(&self) -> Vec<ScheduleSpec> {
        self.gamma
            .iter()
            .map(|&gamma| ScheduleSpec::Constant { gamma })
            .chain(self.schedule.iter().cloned())
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.kinds.iter().all(|k| *k == CurveKind::Ode)
    }
}

fn default_column() -> String {
    "loss".into()
}

fn default_window() -> [f64; 2] {
    [1e2, 1e4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    #[serde(default = "default_column")]
    pub column: String,
    pub law: TailLaw,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
}

fn default_sweep_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationSpec {
    pub dims: Vec<usize>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Classify the power-law regime of the model.
    #[serde(default)]
    pub regime: bool,
    /// Track `W1 / (W1 - W2)` along every curve.
    #[serde(default)]
    pub cw: bool,
    #[serde(default)]
    pub tail: Vec<TailSpec>,
    /// Metrics for empirical-vs-ODE comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<Vec<Metric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationSpec>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// A semantic problem, tagged with the offending key.
#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub section: &'static str,
    pub key: &'static str,
    pub message: String,
}

impl ExperimentConfig {
    pub fn from_toml_str(source: &str, path: &Path) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            messages: vec![e.to_string()],
        })?;
        let issues = config.issues();
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config {
                path: path.to_path_buf(),
                messages: issues
                    .iter()
                    .map(|i| {
                        let at = locate(source, i.section, i.key)
                            .map(|l| format!(" (line {l})"))
                            .unwrap_or_default();
                        format!("{}.{}{at}: {}", i.section, i.key, i.message)
                    })
                    .collect(),
            })
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    /// Effective model limits.
    pub fn model_limits(&self) -> ModelLimits {
        self.limits.unwrap_or_default()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        self.run.grid.build(self.run.horizon)
    }

    pub fn schedules(&self) -> Result<Vec<Schedule>> {
        self.run.schedules().iter().map(Schedule::from_spec).collect()
    }

    /// Comparison metrics that will actually be evaluated.
    pub fn compare_metrics(&self) -> Vec<Metric> {
        let paired = self.run.kinds.contains(&CurveKind::Ode)
            && self.run.kinds.iter().any(|k| *k != CurveKind::Ode);
        match &self.analysis.compare {
            Some(m) => m.clone(),
            None if paired => vec![Metric::Sup],
            None => Vec::new(),
        }
    }

    /// Semantic checks beyond the schema.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut push = |section, key, message: String| {
            out.push(Issue {
                section,
                key,
                message,
            })
        };
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;

        if self.model.dim() == 0 {
            push("model", "d", "must be positive".into());
        }
        match &self.model {
            ModelSpec::Identity { norm, classes, .. } => {
                if !nonneg(*norm) {
                    push("model", "norm", format!("{norm} must be >= 0"));
                }
                if !(1..=2).contains(classes) {
                    push("model", "classes", format!("{classes} must be 1 or 2"));
                }
            }
            ModelSpec::PowerLaw { alpha, beta, norm, d } => {
                if alpha.is_empty() || alpha.len() > 2 {
                    push("model", "alpha", "give one exponent per class (one or two)".into());
                }
                for a in alpha {
                    if !nonneg(*a) {
                        push("model", "alpha", format!("exponent {a} must be >= 0"));
                    }
                }
                if !nonneg(*beta) {
                    push("model", "beta", format!("exponent {beta} must be >= 0"));
                }
                if !(norm.is_finite() && *norm > 0.0) {
                    push("model", "norm", format!("{norm} must be positive"));
                }
                if *d < 2 {
                    push("model", "d", "power-law models need d >= 2".into());
                }
            }
            ModelSpec::PowerLawMulticlass { alpha, classes, d, .. } => {
                if !nonneg(*alpha) {
                    push("model", "alpha", format!("exponent {alpha} must be >= 0"));
                }
                if *classes == 0 || classes > d {
                    push("model", "classes", format!("need 1 <= classes <= d, got {classes}"));
                }
            }
            ModelSpec::ZeroOne { fractions, mass, .. } => {
                if fractions.iter().any(|f| !nonneg(*f))
                    || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    push("model", "fractions", "must be nonnegative and sum to 1".into());
                }
                if mass.iter().any(|m| !nonneg(*m)) {
                    push("model", "mass", "must be nonnegative".into());
                }
            }
        }

        let classes = self.model.num_classes();
        match &self.task {
            TaskSpec::BinaryLogistic if classes != 2 => {
                push("task", "loss", format!("binary_logistic needs 2 classes, model has {classes}"))
            }
            TaskSpec::CrossEntropy { .. } if classes < 2 => {
                push("task", "loss", "cross_entropy needs at least 2 classes".into())
            }
            TaskSpec::Mse { sigma, outputs, .. } => {
                if !nonneg(*sigma) {
                    push("task", "sigma", format!("{sigma} must be >= 0"));
                }
                if *outputs == Some(0) {
                    push("task", "outputs", "must be positive".into());
                }
            }
            _ => {}
        }

        let run = &self.run;
        if run.kinds.is_empty() {
            push("run", "kinds", "at least one of sgd, hsgd, ode".into());
        }
        if run.gamma.is_empty() && run.schedule.is_empty() {
            push("run", "gamma", "no learning rate given (set `gamma` or `schedule`)".into());
        }
        if !(run.gamma_bound.is_finite() && run.gamma_bound > 0.0) {
            push("run", "gamma_bound", "must be positive".into());
        }
        for spec in run.schedules() {
            match Schedule::from_spec(&spec) {
                Ok(s) if s.bound() > run.gamma_bound => push(
                    "run",
                    "gamma",
                    format!("rate {} exceeds gamma_bound {}", s.bound(), run.gamma_bound),
                ),
                Ok(_) => {}
                Err(e) => push("run", "schedule", e.to_string()),
            }
        }
        if !(run.horizon.is_finite() && run.horizon > 0.0) {
            push("run", "horizon", format!("{} must be positive", run.horizon));
        }
        match &run.grid {
            GridSpec::Explicit { times } => {
                if times.last() != Some(&run.horizon) {
                    push("run", "grid", "explicit times must end at the horizon".into());
                }
            }
            GridSpec::Log { start, .. } if !(*start > 0.0 && *start < run.horizon) => {
                push("run", "grid", format!("log grid start {start} must lie in (0, horizon)"))
            }
            _ => {}
        }
        if run.horizon > 0.0 {
            if let Err(e) = run.grid.build(run.horizon) {
                push("run", "grid", e.to_string());
            }
        }
        if run.seeds.is_empty() && !run.is_deterministic() {
            push("run", "seeds", "empirical runs need at least one seed".into());
        }
        if let Err(e) = run.solver.check() {
            push("run", "solver", e.to_string());
        }
        if let Some(dt) = run.hsgd_dt {
            if !(dt > 0.0 && dt <= 0.01) {
                push("run", "hsgd_dt", format!("{dt} must lie in (0, 0.01]"));
            }
        }

        let an = &self.analysis;
        if an.cw && !matches!(self.task, TaskSpec::BinaryLogistic) {
            push("analysis", "cw", "needs a binary logistic task".into());
        }
        if an.regime && self.model.exponents().is_none() {
            push("analysis", "regime", "needs an identity or power_law model".into());
        }
        for t in &an.tail {
            if !(t.window[0] > 0.0 && t.window[1] > t.window[0]) {
                push("analysis", "tail", format!("window {:?} must satisfy 0 < t1 < t2", t.window));
            }
        }
        if let Some(m) = &an.compare {
            let ok = run.kinds.contains(&CurveKind::Ode)
                && run.kinds.iter().any(|k| *k != CurveKind::Ode);
            if !m.is_empty() && !ok {
                push("analysis", "compare", "needs `ode` and an empirical kind in run.kinds".into());
            }
        }
        if let Some(c) = &an.concentration {
            if c.dims.is_empty() || c.dims.contains(&0) {
                push("analysis", "concentration", "dims must be positive and nonempty".into());
            }
            if c.seeds.is_empty() {
                push("analysis", "concentration", "needs at least one seed".into());
            }
        }
        out
    }

    pub fn build_model(&self) -> Result<(SpectralMixture, Option<ZeroOnePartition>)> {
        self.model.build()
    }

    /// Model and task at dimension `d` (for concentration sweeps).
    pub fn build_at(&self, d: usize) -> Result<(SpectralMixture, Task)> {
        let (model, _) = self.model.with_dim(d).build()?;
        let task = self.task.build(&model)?;
        Ok((model, task))
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&source, path)
}

/// 1-based line of `key` inside `[section]`, if it can be found.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim_matches('[').trim().to_string();
            continue;
        }
        let k = line.split('=').next().unwrap_or("").trim();
        if current == section && k == key {
            return Some(i + 1);
        }
        // Dotted or inline forms such as `model.alpha = ...`.
        if current.is_empty() && k == format!("{section}.{key}") {
            return Some(i + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nkind = \"identity\"\nd = 100\n\n[task]\nloss = \"binary_logistic\"\n\n[run]\ngamma = [0.5]\n";

    #[test]
    fn minimal_gets_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL, Path::new("x.toml")).unwrap();
        assert_eq!(c.run.gamma_bound, 2.0);
        assert_eq!(
            c.run.grid,
            GridSpec::Log {
                start: 0.01,
                per_decade: 32
            }
        );
        assert_eq!(c.run.kinds, vec![CurveKind::Ode]);
        assert!(c.run.is_deterministic());
        assert_eq!(c.output.dir, PathBuf::from("out"));
        assert!(c.compare_metrics().is_empty());
    }

    #[test]
    fn negative_alpha_names_field() {
        let src = "[model]\nkind = \"power_law\"\nd = 100\nalpha = [-1.0, 1.0]\nbeta = 0.0\n\n[task]\nloss = \"binary_logistic\"\n\n[run]\ngamma = [0.5]\n";
        let err = ExperimentConfig::from_toml_str(src, Path::new("x.toml")).unwrap_err();
        let Error::Config { messages, .. } = err else { panic!("{err}") };
        assert_eq!(messages.len(), 1);
        assert!(messages[0].starts_with("model.alpha (line 4)"), "{}", messages[0]);
    }

    #[test]
    fn cw_needs_logistic_task() {
        let src = "[model]\nkind = \"identity\"\nd = 100\n\n[task]\nloss = \"mse\"\n\n[run]\ngamma = [0.5]\n\n[analysis]\ncw = true\n";
        let err = ExperimentConfig::from_toml_str(src, Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("analysis.cw"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let src = MINIMAL.replace("d = 100", "d = 100\ndim = 3");
        let err = ExperimentConfig::from_toml_str(&src, Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("dim"), "{err}");
        let src = format!("{MINIMAL}horizn = 3\n");
        assert!(ExperimentConfig::from_toml_str(&src, Path::new("x.toml")).is_err());
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_toml_str(MINIMAL, Path::new("x.toml")).unwrap();
        let text = c.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, Path::new("y.toml")).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn builds_every_family() {
        let specs = [
            ModelSpec::Identity { d: 8, norm: 0.0, classes: 1 },
            ModelSpec::PowerLaw { d: 8, alpha: vec![1.0, 1.0], beta: 0.5, norm: 1.0 },
            ModelSpec::PowerLawMulticlass { d: 8, alpha: 1.3, classes: 3, seed: 1 },
            ModelSpec::ZeroOne { d: 8, fractions: [0.25; 4], mass: [0.25; 4], seed: 0 },
        ];
        for s in specs {
            let (m, p) = s.build().unwrap();
            assert_eq!(m.dim(), 8);
            assert_eq!(m.num_classes(), s.num_classes());
            assert_eq!(p.is_some(), matches!(s, ModelSpec::ZeroOne { .. }));
            assert_eq!(s.with_dim(16).dim(), 16);
        }
    }
}
