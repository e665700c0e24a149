//! Gaussian-mixture problem instances expressed in the shared eigenbasis of
//! the (commuting) class covariances.
//!
//! Every covariance is diagonal in this basis, so a model is fully described
//! by per-class eigenvalues and per-class mean coordinates. Generators for the
//! identity, zero-one and power-law families live here.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bounds enforced by [`validate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLimits {
    /// Upper bound on every covariance eigenvalue.
    pub op_bound: f64,
    /// Upper bound on `sum_i p_i |mu_i|^2`.
    pub mean_bound: f64,
    /// Above this many classes the means must be mutually orthogonal.
    pub class_cap: usize,
}

impl Default for ModelLimits {
    fn default() -> Self {
        Self {
            op_bound: 1.0,
            mean_bound: 4.0,
            class_cap: 8,
        }
    }
}

/// A mixture of `num_classes` Gaussians `N(mu_i, K_i)` whose covariances share
/// the standard basis as eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMixture {
    dim: usize,
    probs: Vec<f64>,
    /// Class-major, `num_classes * dim`.
    eigvals: Vec<f64>,
    /// Class-major, `num_classes * dim`.
    mean_coords: Vec<f64>,
}

impl SpectralMixture {
    /// Assembles a model from per-class eigenvalues and mean coordinates.
    ///
    /// Only shapes and finiteness are checked here; the modelling assumptions
    /// are reported by [`validate`].
    pub fn new(probs: Vec<f64>, eigvals: Vec<Vec<f64>>, mean_coords: Vec<Vec<f64>>) -> Result<Self> {
        let classes = probs.len();
        if classes == 0 {
            return Err(Error::invalid("probs", "at least one class is required"));
        }
        if eigvals.len() != classes || mean_coords.len() != classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class probabilities but {} eigenvalue rows and {} mean rows",
                classes,
                eigvals.len(),
                mean_coords.len()
            )));
        }
        let dim = eigvals[0].len();
        if dim == 0 {
            return Err(Error::invalid("eigvals", "dimension must be positive"));
        }
        if eigvals.iter().chain(mean_coords.iter()).any(|row| row.len() != dim) {
            return Err(Error::DimensionMismatch(
                "every eigenvalue and mean row must have length d".into(),
            ));
        }
        let eigvals: Vec<f64> = eigvals.into_iter().flatten().collect();
        let mean_coords: Vec<f64> = mean_coords.into_iter().flatten().collect();
        if probs
            .iter()
            .chain(eigvals.iter())
            .chain(mean_coords.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("SpectralMixture::new"));
        }
        Ok(Self {
            dim,
            probs,
            eigvals,
            mean_coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Eigenvalues `lambda_rho^{(i)}` of class `i`.
    pub fn eigvals(&self, class: usize) -> &[f64] {
        &self.eigvals[class * self.dim..(class + 1) * self.dim]
    }

    /// Mean coordinates `<mu_i, u_rho>` of class `i`.
    pub fn means(&self, class: usize) -> &[f64] {
        &self.mean_coords[class * self.dim..(class + 1) * self.dim]
    }

    /// Squared mean coordinate `<mu_i, u_rho>^2`.
    pub fn mean_sq(&self, class: usize, mode: usize) -> f64 {
        let c = self.means(class)[mode];
        c * c
    }

    pub fn mean_norm_sq(&self, class: usize) -> f64 {
        self.means(class).iter().map(|c| c * c).sum()
    }

    pub fn mean_inner(&self, i: usize, j: usize) -> f64 {
        self.means(i)
            .iter()
            .zip(self.means(j))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn trace(&self, class: usize) -> f64 {
        self.eigvals(class).iter().sum()
    }

    /// Replaces the class probabilities.
    pub fn with_probs(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} probabilities, got {}",
                self.num_classes(),
                probs.len()
            )));
        }
        self.probs = probs;
        Ok(self)
    }

    /// True when the model is the symmetric binary set-up with means `+mu, -mu`.
    pub fn is_symmetric_binary(&self) -> bool {
        self.num_classes() == 2
            && self
                .means(0)
                .iter()
                .zip(self.means(1))
                .all(|(a, b)| (a + b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    /// True when every class shares the class-0 spectrum.
    pub fn has_shared_covariance(&self) -> bool {
        (1..self.num_classes()).all(|i| self.eigvals(i) == self.eigvals(0))
    }

    /// Hex SHA-256 of the model contents, used to tag curves and manifests.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for x in self.probs.iter().chain(&self.eigvals).chain(&self.mean_coords) {
            hasher.update(x.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Writes `rho, lambda_1..k, mu_1..k` rows for inspection.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.num_classes();
        let mut header = vec!["rho".to_string()];
        header.extend((1..=k).map(|i| format!("lambda_{i}")));
        header.extend((1..=k).map(|i| format!("mu_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for rho in 0..self.dim {
            let mut row = vec![(rho + 1).to_string()];
            row.extend((0..k).map(|i| self.eigvals(i)[rho].to_string()));
            row.extend((0..k).map(|i| self.means(i)[rho].to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Which modelling assumption a [`Violation`] breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// Class probabilities form a simplex.
    ClassStructure,
    /// Covariances bounded in operator norm (and nonnegative).
    BoundedCovariance,
    /// `sum_i p_i |mu_i|^2 <= A`.
    MeanScale,
    /// Means mutually orthogonal when the class count is large.
    OrthogonalMeans,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Assumption::ClassStructure => "class structure",
            Assumption::BoundedCovariance => "bounded covariance",
            Assumption::MeanScale => "mean scale",
            Assumption::OrthogonalMeans => "orthogonal means",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.assumption, self.message)
    }
}

/// Checks the model against the mixture assumptions. Returns an empty list
/// when everything holds.
pub fn validate(model: &SpectralMixture, limits: &ModelLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |assumption, message: String| out.push(Violation { assumption, message });

    let total: f64 = model.probs().iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        push(
            Assumption::ClassStructure,
            format!("probabilities do not sum to 1 (sum = {total})"),
        );
    }
    if let Some(p) = model.probs().iter().find(|p| **p < 0.0) {
        push(
            Assumption::ClassStructure,
            format!("negative class probability {p}"),
        );
    }

    for i in 0..model.num_classes() {
        let ev = model.eigvals(i);
        if let Some(min) = ev.iter().copied().reduce(f64::min) {
            if min < 0.0 {
                push(
                    Assumption::BoundedCovariance,
                    format!("class {} has negative eigenvalue {min}", i + 1),
                );
            }
        }
        if let Some(max) = ev.iter().copied().reduce(f64::max) {
            if max > limits.op_bound {
                push(
                    Assumption::BoundedCovariance,
                    format!(
                        "class {} eigenvalue {max} exceeds operator bound {}",
                        i + 1,
                        limits.op_bound
                    ),
                );
            }
        }
    }

    let weighted: f64 = (0..model.num_classes())
        .map(|i| model.probs()[i] * model.mean_norm_sq(i))
        .sum();
    if weighted > limits.mean_bound {
        push(
            Assumption::MeanScale,
            format!(
                "sum_i p_i |mu_i|^2 = {weighted} exceeds bound {}",
                limits.mean_bound
            ),
        );
    }

    if model.num_classes() > limits.class_cap {
        let mut worst = (0.0f64, 0, 0);
        for i in 0..model.num_classes() {
            for j in (i + 1)..model.num_classes() {
                let ip = model.mean_inner(i, j).abs();
                if ip > worst.0 {
                    worst = (ip, i, j);
                }
            }
        }
        if worst.0 > 1e-10 {
            push(
                Assumption::OrthogonalMeans,
                format!(
                    "{} classes exceed the cap of {} but means {} and {} overlap by {:e}",
                    model.num_classes(),
                    limits.class_cap,
                    worst.1 + 1,
                    worst.2 + 1,
                    worst.0
                ),
            );
        }
    }
    out
}

/// Binary (or single-class) power-law model:
/// `lambda_rho^{(i)} = (rho/d)^{alpha_i}` and `mu~_rho` proportional to
/// `(1/d)(rho/d)^beta`, rescaled so that `|mu|^2 = norm`.
///
/// With two classes the means are `+mu` and `-mu` and the classes are
/// equiprobable.
pub fn build_power_law(d: usize, alphas: &[f64], beta: f64, norm: f64) -> Result<SpectralMixture> {
    if d < 2 {
        return Err(Error::invalid("d", "power-law models need d >= 2"));
    }
    if alphas.is_empty() || alphas.len() > 2 {
        return Err(Error::invalid(
            "alpha",
            "one exponent per class, one or two classes",
        ));
    }
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::invalid("alpha", format!("exponent {a} must be >= 0")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid("beta", format!("exponent {beta} must be >= 0")));
    }
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::invalid("norm", format!("{norm} must be positive")));
    }
    let df = d as f64;
    let raw: Vec<f64> = (1..=d).map(|r| (r as f64 / df).powf(beta) / df).collect();
    let scale = norm / raw.iter().sum::<f64>();
    let mu: Vec<f64> = raw.iter().map(|m| (m * scale).sqrt()).collect();

    let eigvals: Vec<Vec<f64>> = alphas
        .iter()
        .map(|&a| (1..=d).map(|r| (r as f64 / df).powf(a)).collect())
        .collect();
    let k = alphas.len();
    let mut means = vec![mu.clone()];
    if k == 2 {
        means.push(mu.iter().map(|c| -c).collect());
    }
    SpectralMixture::new(vec![1.0 / k as f64; k], eigvals, means)
}

/// Identity covariance, binary `+-mu` with `mu` spread uniformly over modes.
pub fn build_identity(d: usize, norm: f64) -> Result<SpectralMixture> {
    build_power_law(d, &[0.0, 0.0], 0.0, norm)
}

/// Multi-class power-law model with shared spectrum `(rho/d)^alpha`, uniform
/// class probabilities and random means `N(0, I/d)` orthogonalized by
/// Gram-Schmidt (each mean keeps its sampled norm).
pub fn build_power_law_multiclass(
    d: usize,
    alpha: f64,
    classes: usize,
    seed: u64,
) -> Result<SpectralMixture> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("exponent {alpha} must be >= 0")));
    }
    if classes == 0 || classes > d {
        return Err(Error::invalid(
            "classes",
            format!("need 1 <= classes <= d, got {classes} with d = {d}"),
        ));
    }
    let df = d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut v: Vec<f64> = (0..d)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|z: f64| z / df.sqrt())
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Two passes of modified Gram-Schmidt keep the overlaps at round-off.
        for _ in 0..2 {
            for prev in &means {
                let pn: f64 = prev.iter().map(|x| x * x).sum();
                let ip: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, p) in v.iter_mut().zip(prev) {
                    *x -= ip / pn * p;
                }
            }
        }
        let now = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x *= norm / now);
        means.push(v);
    }
    let spectrum: Vec<f64> = (1..=d).map(|r| (r as f64 / df).powf(alpha)).collect();
    SpectralMixture::new(
        vec![1.0 / classes as f64; classes],
        vec![spectrum; classes],
        means,
    )
}

/// Block labels of the zero-one model, in storage order.
pub const ZERO_ONE_BLOCKS: [&str; 4] = ["00", "01", "10", "11"];

/// Partition of the modes by the pair of 0/1 eigenvalues of the two classes.
///
/// Block `jk` holds the modes where class 1 has eigenvalue `j` and class 2
/// has eigenvalue `k`; storage order is `00, 01, 10, 11`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOnePartition {
    blocks: [Vec<usize>; 4],
    mean_mass: [f64; 4],
}

impl ZeroOnePartition {
    /// Recovers the partition from a binary model whose spectra are all 0/1.
    pub fn from_model(model: &SpectralMixture) -> Result<Self> {
        if model.num_classes() != 2 {
            return Err(Error::invalid("model", "zero-one partition needs two classes"));
        }
        let mut blocks: [Vec<usize>; 4] = Default::default();
        let mut mean_mass = [0.0; 4];
        for rho in 0..model.dim() {
            let bit = |x: f64| -> Result<usize> {
                if x == 0.0 {
                    Ok(0)
                } else if x == 1.0 {
                    Ok(1)
                } else {
                    Err(Error::invalid(
                        "eigvals",
                        format!("mode {rho} has eigenvalue {x}, expected 0 or 1"),
                    ))
                }
            };
            let b = 2 * bit(model.eigvals(0)[rho])? + bit(model.eigvals(1)[rho])?;
            blocks[b].push(rho);
            mean_mass[b] += model.mean_sq(0, rho);
        }
        let part = Self { blocks, mean_mass };
        part.check()?;
        Ok(part)
    }

    fn check(&self) -> Result<()> {
        if self.blocks[0].is_empty() || self.mean_mass[0] <= 0.0 {
            return Err(Error::invalid(
                "partition",
                "the zero-variance block I00 must be nonempty and carry positive mean mass",
            ));
        }
        Ok(())
    }

    /// Modes of block `b` (0 = I00, 1 = I01, 2 = I10, 3 = I11).
    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    /// `mu~_(jk)`: squared mean norm carried by each block.
    pub fn mean_mass(&self) -> [f64; 4] {
        self.mean_mass
    }

    pub fn sizes(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|b| self.blocks[b].len())
    }

    /// Per-mode block index (inverse of [`Self::block`]).
    pub fn labels(&self, dim: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; dim];
        for (b, modes) in self.blocks.iter().enumerate() {
            for &rho in modes {
                out[rho] = b;
            }
        }
        out
    }
}

/// Symmetric binary zero-one model.
///
/// `fractions` gives `|I_jk| / d` and `mass` the squared mean norm placed in
/// each block (order `00, 01, 10, 11`). Within a block the mean direction is
/// uniform on the sphere, drawn from `seed`.
pub fn build_zero_one(
    d: usize,
    fractions: [f64; 4],
    mass: [f64; 4],
    seed: u64,
) -> Result<(SpectralMixture, ZeroOnePartition)> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be positive"));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(
            "fractions",
            format!("{fractions:?} must be nonnegative and sum to 1"),
        ));
    }
    if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::invalid("mass", format!("{mass:?} must be nonnegative")));
    }
    let mut sizes = [0usize; 4];
    for (b, f) in fractions.iter().enumerate() {
        let exact = f * d as f64;
        let n = exact.round();
        if (exact - n).abs() > 1e-9 {
            return Err(Error::invalid(
                "fractions",
                format!("block {} would hold {exact} modes; d must divide evenly", ZERO_ONE_BLOCKS[b]),
            ));
        }
        sizes[b] = n as usize;
    }
    if sizes.iter().sum::<usize>() != d {
        return Err(Error::invalid("fractions", "block sizes do not add up to d"));
    }
    for b in 0..4 {
        if sizes[b] == 0 && mass[b] > 0.0 {
            return Err(Error::invalid(
                "mass",
                format!("block {} is empty but was assigned mass {}", ZERO_ONE_BLOCKS[b], mass[b]),
            ));
        }
    }
    if sizes[0] == 0 || mass[0] <= 0.0 {
        return Err(Error::invalid(
            "mass",
            "the zero-variance block I00 must be nonempty and carry positive mean mass",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda1 = Vec::with_capacity(d);
    let mut lambda2 = Vec::with_capacity(d);
    let mut mu = Vec::with_capacity(d);
    for b in 0..4 {
        let (j, k) = ((b >> 1) as f64, (b & 1) as f64);
        let z: Vec<f64> = (0..sizes[b]).map(|_| StandardNormal.sample(&mut rng)).collect();
        let zn = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if zn > 0.0 { mass[b].sqrt() / zn } else { 0.0 };
        for zi in z {
            lambda1.push(j);
            lambda2.push(k);
            mu.push(zi * scale);
        }
    }
    let neg: Vec<f64> = mu.iter().map(|c| -c).collect();
    let model = SpectralMixture::new(vec![0.5, 0.5], vec![lambda1, lambda2], vec![mu, neg])?;

    let mut blocks: [Vec<usize>; 4] = Default::default();
    let mut start = 0;
    for b in 0..4 {
        blocks[b] = (start..start + sizes[b]).collect();
        start += sizes[b];
    }
    let mean_mass = [0, 1, 2, 3].map(|b| blocks[b].iter().map(|&r| model.mean_sq(0, r)).sum());
    let part = ZeroOnePartition { blocks, mean_mass };
    Ok((model, part))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn power_law_direct_substitution() {
        let m = build_power_law(4, &[1.0], 0.0, 1.0).unwrap();
        assert_eq!(m.eigvals(0), &[0.25, 0.5, 0.75, 1.0]);
        for rho in 0..4 {
            assert!(close(m.mean_sq(0, rho), 0.25, 1e-15));
        }
        assert!(close(m.mean_norm_sq(0), 1.0, 1e-15));
    }

    #[test]
    fn power_law_zero_exponent_is_identity() {
        let m = build_power_law(16, &[0.0, 0.0], 0.7, 1.0).unwrap();
        assert!(m.eigvals(0).iter().chain(m.eigvals(1)).all(|&l| l == 1.0));
        assert!(m.is_symmetric_binary());
    }

    #[test]
    fn power_law_beta_one_unnormalized() {
        let raw_sum: f64 = (1..=4).map(|r| r as f64 / 16.0).sum();
        let m = build_power_law(4, &[1.0], 1.0, raw_sum).unwrap();
        for rho in 0..4 {
            assert!(close(m.mean_sq(0, rho), (rho + 1) as f64 / 16.0, 1e-15));
        }
    }

    #[test]
    fn power_law_rejects_negative_exponents() {
        assert!(build_power_law(8, &[-1.0], 0.0, 1.0).is_err());
        assert!(build_power_law(8, &[1.0], -0.5, 1.0).is_err());
        assert!(build_power_law(1, &[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_one_equal_blocks() {
        let (m, part) = build_zero_one(8, [0.25; 4], [0.25; 4], 3).unwrap();
        assert_eq!(part.sizes(), [2, 2, 2, 2]);
        for mass in part.mean_mass() {
            assert!(close(mass, 0.25, 1e-14));
        }
        for (b, bits) in [(0, (0.0, 0.0)), (1, (0.0, 1.0)), (2, (1.0, 0.0)), (3, (1.0, 1.0))] {
            for &rho in part.block(b) {
                assert_eq!((m.eigvals(0)[rho], m.eigvals(1)[rho]), bits);
            }
        }
        assert!(m.is_symmetric_binary());
        assert_eq!(ZeroOnePartition::from_model(&m).unwrap(), part);
    }

    #[test]
    fn zero_one_all_mass_in_zero_variance_block() {
        let (m, part) = build_zero_one(8, [0.25; 4], [1.0, 0.0, 0.0, 0.0], 1).unwrap();
        for b in 1..4 {
            for &rho in part.block(b) {
                assert_eq!(m.means(0)[rho], 0.0);
            }
        }
        assert!(close(part.mean_mass()[0], 1.0, 1e-14));
    }

    #[test]
    fn zero_one_empty_blocks() {
        let (m, part) = build_zero_one(8, [0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0], 1).unwrap();
        assert_eq!(part.sizes(), [4, 4, 0, 0]);
        assert!(m.eigvals(0).iter().all(|&l| l == 0.0));
        assert!(validate(&m, &ModelLimits::default()).is_empty());
    }

    #[test]
    fn zero_one_rejects_empty_zero_variance_block() {
        assert!(build_zero_one(8, [0.0, 0.5, 0.5, 0.0], [0.5, 0.5, 0.0, 0.0], 1).is_err());
        assert!(build_zero_one(8, [0.25; 4], [0.0, 0.5, 0.5, 0.0], 1).is_err());
        assert!(build_zero_one(6, [0.25; 4], [0.25; 4], 1).is_err());
    }

    #[test]
    fn zero_one_is_seed_deterministic() {
        let a = build_zero_one(16, [0.25; 4], [0.25; 4], 9).unwrap();
        let b = build_zero_one(16, [0.25; 4], [0.25; 4], 9).unwrap();
        let c = build_zero_one(16, [0.25; 4], [0.25; 4], 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn validate_accepts_identity() {
        let m = build_identity(32, 1.0).unwrap();
        assert!(validate(&m, &ModelLimits::default()).is_empty());
    }

    #[test]
    fn validate_flags_probabilities() {
        let m = build_identity(4, 1.0).unwrap().with_probs(vec![0.7, 0.7]).unwrap();
        let v = validate(&m, &ModelLimits::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].assumption, Assumption::ClassStructure);
        assert!(v[0].message.contains("probabilities do not sum to 1"));
    }

    #[test]
    fn validate_flags_non_orthogonal_many_class_means() {
        let d = 64;
        let classes = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let means: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                (0..d)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .map(|z: f64| z / (d as f64).sqrt())
                    .collect()
            })
            .collect();
        let m = SpectralMixture::new(vec![1.0 / classes as f64; classes], vec![vec![1.0; d]; classes], means)
            .unwrap();
        let v = validate(&m, &ModelLimits::default());
        assert!(v.iter().any(|x| x.assumption == Assumption::OrthogonalMeans));
    }

    #[test]
    fn validate_flags_operator_norm_and_mean_scale() {
        let m = SpectralMixture::new(vec![1.0], vec![vec![2.0, 0.5]], vec![vec![3.0, 0.0]]).unwrap();
        let v = validate(&m, &ModelLimits::default());
        assert!(v.iter().any(|x| x.assumption == Assumption::BoundedCovariance));
        assert!(v.iter().any(|x| x.assumption == Assumption::MeanScale));
    }

    #[test]
    fn multiclass_means_are_orthogonal() {
        let m = build_power_law_multiclass(200, 1.3, 10, 4).unwrap();
        assert!(validate(&m, &ModelLimits::default()).is_empty());
        for i in 0..10 {
            for j in (i + 1)..10 {
                assert!(m.mean_inner(i, j).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_export_has_one_row_per_mode() {
        let m = build_power_law(5, &[1.0, 2.0], 0.0, 1.0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rho,lambda_1,lambda_2,mu_1,mu_2");
        assert_eq!(lines.len(), 6);
    }
}
