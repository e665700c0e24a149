//! Gaussian expectations of loss derivatives at `theta = sqrt(B) z + m`.
//!
//! These drive every right-hand side of the deterministic dynamics. The
//! binary logistic case reduces to the scalars `W1 = E[w12]` and
//! `W2 = E[w12^2]` with `w12 = 1 / (1 + exp(m + sqrt(B) z))`; the multi-class
//! softmax case is integrated on a tensor-product grid (up to three outputs)
//! or by seeded Monte Carlo, and the soft-label square loss has closed forms.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{for_each_composite_normal, gauss_hermite, gauss_legendre, GaussRule};

/// `(W1, W2) = (E[w12], E[w12^2])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticMoments {
    pub w1: f64,
    pub w2: f64,
}

impl LogisticMoments {
    /// `W1 - W2 = E[w12 (1 - w12)]`, the expected logistic curvature.
    pub fn curvature(&self) -> f64 {
        self.w1 - self.w2
    }
}

/// Logistic moments together with `E[log(1 + exp(m + sqrt(B) z))]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticExpectations {
    pub w1: f64,
    pub w2: f64,
    pub softplus: f64,
}

impl LogisticExpectations {
    pub fn moments(&self) -> LogisticMoments {
        LogisticMoments {
            w1: self.w1,
            w2: self.w2,
        }
    }
}

#[inline]
fn sigmoid_neg(x: f64) -> f64 {
    // 1 / (1 + e^x)
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Quadrature for one-dimensional logistic-normal integrals.
///
/// For `sqrt(B) <= 1` a Gauss-Hermite rule is used. For steeper integrands the
/// poles of the logistic function (at imaginary distance `pi / sqrt(B)` from
/// the real line) spoil Gauss-Hermite convergence, so a composite
/// Gauss-Legendre rule with panel width `min(0.5, 1/sqrt(B))`, anchored at
/// the transition point `z = -m / sqrt(B)`, takes over.
#[derive(Clone, Debug)]
pub struct LogisticQuadrature {
    hermite: GaussRule,
    panel: GaussRule,
    width_scale: f64,
    cutoff: f64,
}

pub const DEFAULT_HERMITE_NODES: usize = 80;
const DEFAULT_PANEL_ORDER: usize = 10;

impl LogisticQuadrature {
    pub fn new(hermite_nodes: usize) -> Self {
        Self {
            hermite: gauss_hermite(hermite_nodes.max(1)),
            panel: gauss_legendre(DEFAULT_PANEL_ORDER),
            width_scale: 1.0,
            cutoff: 9.5,
        }
    }

    /// Shared instance with the default node count.
    pub fn shared() -> &'static LogisticQuadrature {
        static RULE: OnceLock<LogisticQuadrature> = OnceLock::new();
        RULE.get_or_init(|| LogisticQuadrature::new(DEFAULT_HERMITE_NODES))
    }

    /// Doubles every node count and halves the panel width.
    pub fn refined(&self) -> Self {
        Self {
            hermite: gauss_hermite(2 * self.hermite.len()),
            panel: gauss_legendre(2 * self.panel.len()),
            width_scale: 0.5 * self.width_scale,
            cutoff: self.cutoff + 1.0,
        }
    }

    pub fn hermite_nodes(&self) -> usize {
        self.hermite.len()
    }

    /// `E[w12]`, `E[w12^2]` and `E[softplus]` at `(m, B)`.
    pub fn expectations(&self, m: f64, b_var: f64) -> Result<LogisticExpectations> {
        if !m.is_finite() || !b_var.is_finite() {
            return Err(Error::NonFinite("logistic_moments"));
        }
        if b_var < 0.0 {
            return Err(Error::invalid("B", format!("variance {b_var} is negative")));
        }
        if b_var == 0.0 {
            let w = sigmoid_neg(m);
            return Ok(LogisticExpectations {
                w1: w,
                w2: w * w,
                softplus: softplus(m),
            });
        }
        let b = b_var.sqrt();
        let (mut w1, mut w2, mut sp) = (0.0, 0.0, 0.0);
        let mut acc = |z: f64, wt: f64| {
            let x = m + b * z;
            let w = sigmoid_neg(x);
            w1 += wt * w;
            w2 += wt * w * w;
            sp += wt * softplus(x);
        };
        if b <= 1.0 {
            for (z, wt) in self.hermite.nodes.iter().zip(&self.hermite.weights) {
                acc(*z, *wt);
            }
        } else {
            let width = self.width_scale * (1.0 / b).min(0.5);
            for_each_composite_normal(-m / b, width, self.cutoff, &self.panel, acc);
        }
        Ok(LogisticExpectations { w1, w2, softplus: sp })
    }

    pub fn moments(&self, m: f64, b_var: f64) -> Result<LogisticMoments> {
        self.expectations(m, b_var).map(|e| e.moments())
    }
}

/// `W1 = E[1/(1+e^{m+sqrt(B) z})]` and `W2 = E[(1/(1+e^{m+sqrt(B) z}))^2]`.
///
/// `nodes` is the Gauss-Hermite order used for shallow integrands; `B = 0`
/// is evaluated in closed form.
pub fn logistic_moments(m: f64, b_var: f64, nodes: usize) -> Result<LogisticMoments> {
    if nodes == DEFAULT_HERMITE_NODES {
        LogisticQuadrature::shared().moments(m, b_var)
    } else {
        LogisticQuadrature::new(nodes).moments(m, b_var)
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// True when `lo - slack <= x <= hi + slack`.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }
}

/// Deterministic bounds on `E[w12]` at `(m, B)`.
///
/// For `m >= 0`: `[1/(1+e^m), min(1/2, 2/(3+e^{m-B/2}))]`. For `m < 0` the
/// interval is obtained from `E[w12](m) = 1 - E[w12](-m)`.
pub fn w12_bounds(m: f64, b_var: f64) -> Interval {
    let upper_pos = |m: f64| 0.5f64.min(2.0 / (3.0 + (m - 0.5 * b_var).exp()));
    let lower_pos = |m: f64| sigmoid_neg(m);
    if m >= 0.0 {
        Interval {
            lo: lower_pos(m),
            hi: upper_pos(m),
        }
    } else {
        Interval {
            lo: 1.0 - upper_pos(-m),
            hi: 1.0 - lower_pos(-m),
        }
    }
}

/// Poincare-type bound `W2 <= W1 (B + 2) / (B + 4)`, valid for `m >= 0`.
pub fn poincare_w2_bound(w1: f64, b_var: f64) -> f64 {
    w1 * (b_var + 2.0) / (b_var + 4.0)
}

/// Gaussian moments of one class's loss derivatives.
///
/// With `l` trainable outputs and `lbar` augmented preactivation coordinates
/// (`lbar = l` for hard labels, `l + l*` for soft labels): `grad` is
/// `E[grad_x f]` (length `l`), `hess` is `E[d grad_x f / d r]` (`l x lbar`),
/// `fisher` is `E[grad_x f grad_x f^T]` (`l x l`) and `loss` is `E[f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTriple {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub fisher: DMatrix<f64>,
    pub loss: f64,
}

/// Supplies per-class moments from the Gaussian surrogate `(B_i, m_i)`.
pub trait MomentOracle: Send + Sync {
    /// Trainable outputs `l`.
    fn outputs(&self) -> usize;
    /// Width `lbar` of the preactivation the moments are taken over.
    fn augmented(&self) -> usize {
        self.outputs()
    }
    fn class_moments(
        &self,
        class: usize,
        cov: &DMatrix<f64>,
        mean: &DVector<f64>,
    ) -> Result<MomentTriple>;
}

/// Symmetric square root of a PSD matrix. Eigenvalues in `[-1e-8, 0)` are
/// clipped to zero; anything more negative is an error.
pub fn psd_sqrt(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if n != b.ncols() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", n, b.ncols())));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("psd_sqrt"));
    }
    if n == 1 {
        let v = b[(0, 0)];
        if v < -1e-8 {
            return Err(Error::NotPsd { min_eigenvalue: v });
        }
        return Ok(DMatrix::from_element(1, 1, v.max(0.0).sqrt()));
    }
    let sym = (b + b.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

fn check_inputs(cov: &DMatrix<f64>, mean: &DVector<f64>, width: usize) -> Result<()> {
    if cov.nrows() != width || cov.ncols() != width || mean.len() != width {
        return Err(Error::DimensionMismatch(format!(
            "expected {width}-dimensional moments, got cov {}x{} and mean {}",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    if cov.iter().chain(mean.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("class_moments"));
    }
    Ok(())
}

/// Binary logistic regression with one output: class 0 carries label 1,
/// every other class label 0.
#[derive(Clone, Debug)]
pub struct BinaryLogisticOracle {
    quad: LogisticQuadrature,
}

impl Default for BinaryLogisticOracle {
    fn default() -> Self {
        Self::new(DEFAULT_HERMITE_NODES)
    }
}

impl BinaryLogisticOracle {
    pub fn new(nodes: usize) -> Self {
        Self {
            quad: LogisticQuadrature::new(nodes),
        }
    }

    pub fn quadrature(&self) -> &LogisticQuadrature {
        &self.quad
    }
}

impl MomentOracle for BinaryLogisticOracle {
    fn outputs(&self) -> usize {
        1
    }

    fn class_moments(
        &self,
        class: usize,
        cov: &DMatrix<f64>,
        mean: &DVector<f64>,
    ) -> Result<MomentTriple> {
        check_inputs(cov, mean, 1)?;
        let (m, b) = (mean[0], cov[(0, 0)].max(0.0));
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        if class == 0 {
            // f = softplus(r) - r, f' = -w12 with w12 = 1/(1+e^r).
            let e = self.quad.expectations(m, b)?;
            Ok(MomentTriple {
                grad: DVector::from_element(1, -e.w1),
                hess: one(e.w1 - e.w2),
                fisher: one(e.w2),
                loss: e.softplus - m,
            })
        } else {
            // f = softplus(r), f' = sigma(r) = 1/(1+e^{-r}); reflect z.
            let e = self.quad.expectations(-m, b)?;
            Ok(MomentTriple {
                grad: DVector::from_element(1, e.w1),
                hess: one(e.w1 - e.w2),
                fisher: one(e.w2),
                loss: e.softplus + m,
            })
        }
    }
}

/// How the softmax expectations are integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SoftmaxIntegration {
    /// Tensor-product Gauss-Hermite with this many nodes per axis.
    Tensor { nodes_per_axis: usize },
    /// Seeded Monte Carlo; the same draws are reused on every call so the
    /// moment maps stay smooth in `(B, m)`.
    MonteCarlo { samples: usize, seed: u64 },
}

impl SoftmaxIntegration {
    /// Tensor rule for up to three outputs, Monte Carlo beyond.
    pub fn default_for(outputs: usize) -> Self {
        match outputs {
            1 => SoftmaxIntegration::Tensor { nodes_per_axis: 80 },
            2 => SoftmaxIntegration::Tensor { nodes_per_axis: 48 },
            3 => SoftmaxIntegration::Tensor { nodes_per_axis: 24 },
            _ => SoftmaxIntegration::MonteCarlo {
                samples: 200_000,
                seed: 0,
            },
        }
    }
}

/// Multi-class logistic regression (softmax cross-entropy) with hard
/// one-hot labels; class `i` has label `e_i`.
#[derive(Clone, Debug)]
pub struct CrossEntropyOracle {
    outputs: usize,
    integration: SoftmaxIntegration,
    /// Standard-normal draws (`n x outputs`, row-major) and their weights.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl CrossEntropyOracle {
    pub fn new(outputs: usize, integration: SoftmaxIntegration) -> Result<Self> {
        if outputs < 2 {
            return Err(Error::invalid("outputs", "softmax needs at least two outputs"));
        }
        let (points, weights) = match integration {
            SoftmaxIntegration::Tensor { nodes_per_axis } => {
                let n = nodes_per_axis.max(1);
                let total = n.checked_pow(outputs as u32).filter(|t| *t <= 5_000_000).ok_or_else(|| {
                    Error::invalid("nodes_per_axis", "tensor grid too large; use Monte Carlo")
                })?;
                let rule = gauss_hermite(n);
                let mut points = Vec::with_capacity(total * outputs);
                let mut weights = Vec::with_capacity(total);
                let mut idx = vec![0usize; outputs];
                for _ in 0..total {
                    let mut w = 1.0;
                    for &k in &idx {
                        points.push(rule.nodes[k]);
                        w *= rule.weights[k];
                    }
                    weights.push(w);
                    for slot in idx.iter_mut() {
                        *slot += 1;
                        if *slot < n {
                            break;
                        }
                        *slot = 0;
                    }
                }
                (points, weights)
            }
            SoftmaxIntegration::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::invalid("samples", "need at least one sample"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let points: Vec<f64> = (0..samples * outputs)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                (points, vec![1.0 / samples as f64; samples])
            }
        };
        Ok(Self {
            outputs,
            integration,
            points,
            weights,
        })
    }

    pub fn integration(&self) -> SoftmaxIntegration {
        self.integration
    }
}

impl MomentOracle for CrossEntropyOracle {
    fn outputs(&self) -> usize {
        self.outputs
    }

    fn class_moments(
        &self,
        class: usize,
        cov: &DMatrix<f64>,
        mean: &DVector<f64>,
    ) -> Result<MomentTriple> {
        let l = self.outputs;
        check_inputs(cov, mean, l)?;
        if class >= l {
            return Err(Error::invalid(
                "class",
                format!("class {class} has no output among {l}"),
            ));
        }
        let root = psd_sqrt(cov)?;
        let mut ew = vec![0.0; l];
        let mut ecurv = vec![0.0; l * l];
        let mut efish = vec![0.0; l * l];
        let mut loss = 0.0;
        let mut r = vec![0.0; l];
        let mut w = vec![0.0; l];
        for (z, &wt) in self.points.chunks_exact(l).zip(&self.weights) {
            for j in 0..l {
                let mut acc = mean[j];
                for k in 0..l {
                    acc += root[(j, k)] * z[k];
                }
                r[j] = acc;
            }
            let rmax = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..l {
                w[j] = (r[j] - rmax).exp();
                s += w[j];
            }
            w.iter_mut().for_each(|x| *x /= s);
            loss += wt * (rmax + s.ln() - r[class]);
            for j in 0..l {
                ew[j] += wt * w[j];
                let gj = w[j] - if j == class { 1.0 } else { 0.0 };
                for k in 0..l {
                    let gk = w[k] - if k == class { 1.0 } else { 0.0 };
                    efish[j * l + k] += wt * gj * gk;
                    ecurv[j * l + k] += wt * (if j == k { w[j] } else { 0.0 } - w[j] * w[k]);
                }
            }
        }
        let mut grad = DVector::from_vec(ew);
        grad[class] -= 1.0;
        Ok(MomentTriple {
            grad,
            hess: DMatrix::from_row_slice(l, l, &ecurv),
            fisher: DMatrix::from_row_slice(l, l, &efish),
            loss,
        })
    }
}

/// Softmax cross-entropy moments for one class at `(B, m)`.
pub fn cross_entropy_moments(
    cov: &DMatrix<f64>,
    mean: &DVector<f64>,
    class: usize,
    integration: SoftmaxIntegration,
) -> Result<MomentTriple> {
    CrossEntropyOracle::new(mean.len(), integration)?.class_moments(class, cov, mean)
}

/// Soft-label square loss `f = |r - r* - eps|^2 / 2` with `eps ~ N(0, sigma^2/l* I)`.
///
/// The preactivation is augmented as `(r, r*)`, so `lbar = 2 l`.
#[derive(Clone, Debug)]
pub struct SoftMseOracle {
    outputs: usize,
    noise_var: f64,
}

impl SoftMseOracle {
    /// `outputs = l = l*`; `sigma` is the total label-noise scale.
    pub fn new(outputs: usize, sigma: f64) -> Self {
        Self {
            outputs,
            noise_var: sigma * sigma / outputs as f64,
        }
    }
}

impl MomentOracle for SoftMseOracle {
    fn outputs(&self) -> usize {
        self.outputs
    }

    fn augmented(&self) -> usize {
        2 * self.outputs
    }

    fn class_moments(
        &self,
        _class: usize,
        cov: &DMatrix<f64>,
        mean: &DVector<f64>,
    ) -> Result<MomentTriple> {
        let l = self.outputs;
        check_inputs(cov, mean, 2 * l)?;
        let mut c = DMatrix::zeros(l, 2 * l);
        for j in 0..l {
            c[(j, j)] = 1.0;
            c[(j, l + j)] = -1.0;
        }
        let grad = &c * mean;
        let fisher = &c * cov * c.transpose()
            + &grad * grad.transpose()
            + DMatrix::identity(l, l) * self.noise_var;
        let loss = 0.5 * fisher.trace();
        Ok(MomentTriple {
            grad,
            hess: c,
            fisher,
            loss,
        })
    }
}
