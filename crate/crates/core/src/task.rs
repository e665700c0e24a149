//! Loss families and label modes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::moments::{
    BinaryLogisticOracle, CrossEntropyOracle, MomentOracle, SoftMseOracle, SoftmaxIntegration,
    DEFAULT_HERMITE_NODES,
};
use crate::spectral::SpectralMixture;

/// What is being learned, and with which loss.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// One output, sigmoid cross-entropy; class 0 is the positive class.
    BinaryLogistic,
    /// One output per class, softmax cross-entropy with one-hot labels.
    CrossEntropy { integration: SoftmaxIntegration },
    /// Soft labels `y = <X*, a> + eps`, `eps ~ N(0, sigma^2 / l I)`, square
    /// loss `|r - y|^2 / 2`. `target` holds `X*` in eigencoordinates
    /// (`d x l`).
    Mse { target: DMatrix<f64>, sigma: f64 },
}

impl Task {
    pub fn cross_entropy(classes: usize) -> Self {
        Task::CrossEntropy {
            integration: SoftmaxIntegration::default_for(classes),
        }
    }

    /// Trainable outputs `l`.
    pub fn outputs(&self, model: &SpectralMixture) -> usize {
        match self {
            Task::BinaryLogistic => 1,
            Task::CrossEntropy { .. } => model.num_classes(),
            Task::Mse { target, .. } => target.ncols(),
        }
    }

    /// Width of the augmented preactivation `(r, r*)`.
    pub fn augmented(&self, model: &SpectralMixture) -> usize {
        match self {
            Task::Mse { target, .. } => 2 * target.ncols(),
            _ => self.outputs(model),
        }
    }

    /// Fixed part of the augmented iterate (`X*`), if any.
    pub fn target(&self) -> Option<&DMatrix<f64>> {
        match self {
            Task::Mse { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn is_logistic(&self) -> bool {
        !matches!(self, Task::Mse { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::BinaryLogistic => "binary_logistic",
            Task::CrossEntropy { .. } => "cross_entropy",
            Task::Mse { .. } => "mse",
        }
    }

    /// Checks that the task fits the model.
    pub fn check(&self, model: &SpectralMixture) -> Result<()> {
        match self {
            Task::BinaryLogistic => {
                if model.num_classes() != 2 {
                    return Err(Error::invalid(
                        "task",
                        format!("binary logistic needs 2 classes, model has {}", model.num_classes()),
                    ));
                }
            }
            Task::CrossEntropy { .. } => {
                if model.num_classes() < 2 {
                    return Err(Error::invalid("task", "cross-entropy needs at least 2 classes"));
                }
            }
            Task::Mse { target, sigma } => {
                if target.nrows() != model.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "target has {} rows, model dimension is {}",
                        target.nrows(),
                        model.dim()
                    )));
                }
                if target.ncols() == 0 {
                    return Err(Error::invalid("target", "needs at least one column"));
                }
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::invalid("sigma", format!("{sigma} must be >= 0")));
                }
                if target.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("target"));
                }
            }
        }
        Ok(())
    }

    /// Moment oracle for this task.
    pub fn oracle(&self, model: &SpectralMixture) -> Result<Box<dyn MomentOracle>> {
        self.check(model)?;
        Ok(match self {
            Task::BinaryLogistic => Box::new(BinaryLogisticOracle::new(DEFAULT_HERMITE_NODES)),
            Task::CrossEntropy { integration } => {
                Box::new(CrossEntropyOracle::new(model.num_classes(), *integration)?)
            }
            Task::Mse { target, sigma } => Box::new(SoftMseOracle::new(target.ncols(), *sigma)),
        })
    }
}

/// Random ground truth with i.i.d. `N(0, 1/(d l))` entries.
pub fn random_target(d: usize, outputs: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / ((d * outputs) as f64).sqrt();
    DMatrix::from_fn(d, outputs, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_identity;

    #[test]
    fn shapes() {
        let model = build_identity(6, 1.0).unwrap();
        assert_eq!(Task::BinaryLogistic.outputs(&model), 1);
        assert_eq!(Task::cross_entropy(2).augmented(&model), 2);
        let mse = Task::Mse {
            target: random_target(6, 2, 0),
            sigma: 0.0,
        };
        assert_eq!(mse.outputs(&model), 2);
        assert_eq!(mse.augmented(&model), 4);
        assert!(mse.oracle(&model).is_ok());
    }

    #[test]
    fn mismatched_target_rejected() {
        let model = build_identity(6, 1.0).unwrap();
        let mse = Task::Mse {
            target: random_target(5, 1, 0),
            sigma: 0.0,
        };
        assert!(matches!(mse.check(&model), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn random_target_is_seeded() {
        assert_eq!(random_target(10, 3, 4), random_target(10, 3, 4));
        assert_ne!(random_target(10, 3, 4), random_target(10, 3, 5));
    }
}
