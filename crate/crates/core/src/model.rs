//! Architecture descriptions and a classifier enum covering both model
//! kinds.

use serde::{Deserialize, Serialize};

use crate::baseline::SoftmaxMlp;
use crate::classifier::Classifier;
use crate::error::{PunnError, Result};
use crate::gates::{ActivationKind, GateShape, GateSpec};
use crate::numeric::{DenseMatrix, Rng};
use crate::partition::{balanced_class_map, PartitionModel};
use crate::scalar::Scalar;

/// Architecture of a classifier, without parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Punn {
        activation: ActivationKind,
        gate: GateShape,
        /// Number of partitions `k`; defaults to the number of classes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        partitions: Option<usize>,
        /// Partition-to-class map; defaults to `i mod C`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_map: Option<Vec<usize>>,
    },
    Mlp {
        hidden: Vec<usize>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Punn { activation, gate, .. } => {
                let g = match gate {
                    GateShape::Mlp { .. } => "mlp",
                    GateShape::Radial => "radial",
                    GateShape::Ellipsoid => "ellipsoid",
                    GateShape::Shell { .. } => "shell",
                    GateShape::Fourier { .. } => "fourier",
                    GateShape::Harmonic { .. } => "harmonic",
                };
                format!("punn-{}-{g}", activation.name())
            }
            Self::Mlp { .. } => "mlp".to_string(),
        }
    }

    /// Number of partitions for `classes` classes (the class count for
    /// baselines).
    pub fn partitions(&self, classes: usize) -> usize {
        match self {
            Self::Punn { partitions, .. } => partitions.unwrap_or(classes),
            Self::Mlp { .. } => classes,
        }
    }

    /// Checks the spec against a problem size without building it.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self {
            Self::Punn { class_map, .. } => {
                let k = self.partitions(classes);
                if k < 2 {
                    return Err(PunnError::Config("need at least two partitions".into()));
                }
                if k < classes {
                    return Err(PunnError::Config(format!(
                        "{k} partitions cannot cover {classes} classes (k must be at least C)"
                    )));
                }
                if let Some(m) = class_map {
                    if m.len() != k {
                        return Err(PunnError::Config(format!(
                            "class map has {} entries for {k} partitions",
                            m.len()
                        )));
                    }
                }
                Ok(())
            }
            Self::Mlp { .. } => Ok(()),
        }
    }

    /// Exact parameter count for the given problem size.
    pub fn param_count(&self, input_dim: usize, classes: usize) -> usize {
        match self {
            Self::Punn { activation, gate, .. } => {
                let per_gate = gate.param_count(input_dim) + usize::from(activation.has_amplitude());
                (self.partitions(classes) - 1) * per_gate
            }
            Self::Mlp { hidden } => {
                let mut sizes = vec![input_dim];
                sizes.extend_from_slice(hidden);
                sizes.push(classes);
                crate::numeric::mlp_param_count(&sizes)
            }
        }
    }

    /// Randomly initialized model.
    pub fn build<T: Scalar>(&self, input_dim: usize, classes: usize, rng: &mut Rng) -> Result<AnyModel<T>> {
        self.validate(classes)?;
        match self {
            Self::Punn {
                activation,
                gate,
                class_map,
                ..
            } => {
                let k = self.partitions(classes);
                let gates = (0..k - 1)
                    .map(|_| GateSpec::init(*activation, gate, input_dim, rng))
                    .collect::<Result<Vec<_>>>()?;
                let map = class_map.clone().unwrap_or_else(|| balanced_class_map(k, classes));
                Ok(AnyModel::Punn(PartitionModel::new(gates, classes, map)?))
            }
            Self::Mlp { hidden } => Ok(AnyModel::Mlp(SoftmaxMlp::init(input_dim, hidden, classes, rng)?)),
        }
    }
}

/// Either a partition model or the softmax baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum AnyModel<T> {
    Punn(PartitionModel<T>),
    Mlp(SoftmaxMlp<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn as_punn(&self) -> Option<&PartitionModel<T>> {
        match self {
            Self::Punn(m) => Some(m),
            Self::Mlp(_) => None,
        }
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Punn($m) => $e,
            AnyModel::Mlp($m) => $e,
        }
    };
}

impl<T: Scalar> Classifier<T> for AnyModel<T> {
    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn num_classes(&self) -> usize {
        delegate!(self, m => m.num_classes())
    }

    fn param_count(&self) -> usize {
        delegate!(self, m => m.param_count())
    }

    fn write_params(&self, out: &mut Vec<T>) {
        delegate!(self, m => m.write_params(out))
    }

    fn read_params(&mut self, src: &[T]) -> Result<usize> {
        delegate!(self, m => m.read_params(src))
    }

    fn predict_proba(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        delegate!(self, m => m.predict_proba(x))
    }

    fn loss_and_grad(&self, x: &DenseMatrix<T>, labels: &[usize], eps: T) -> Result<(T, Vec<T>)> {
        delegate!(self, m => m.loss_and_grad(x, labels, eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn punn(activation: ActivationKind, gate: GateShape, partitions: Option<usize>) -> ModelSpec {
        ModelSpec::Punn {
            activation,
            gate,
            partitions,
            class_map: None,
        }
    }

    #[test]
    fn counts_match_built_models() {
        let specs = [
            (punn(ActivationKind::Sigmoid, GateShape::Mlp { hidden: vec![32, 32] }, None), 2, 2, 1185),
            (punn(ActivationKind::BumpTanh, GateShape::Mlp { hidden: vec![32, 32] }, None), 2, 2, 1186),
            (ModelSpec::Mlp { hidden: vec![32, 32] }, 2, 2, 1218),
            (punn(ActivationKind::Sigmoid, GateShape::Radial, None), 2, 2, 4),
            (punn(ActivationKind::Sigmoid, GateShape::Shell { inner: true }, None), 2, 3, 10),
            (punn(ActivationKind::Sigmoid, GateShape::Ellipsoid, None), 4, 3, 20),
        ];
        let mut rng = Rng::new(0);
        for (spec, d, c, want) in specs {
            assert_eq!(spec.param_count(d, c), want, "{}", spec.name());
            let m: AnyModel<f64> = spec.build(d, c, &mut rng).unwrap();
            assert_eq!(m.param_count(), want);
            assert_eq!(m.params().len(), want);
        }
    }

    #[test]
    fn too_few_partitions() {
        let spec = punn(ActivationKind::Sigmoid, GateShape::Radial, Some(2));
        assert!(matches!(spec.validate(3), Err(PunnError::Config(_))));
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = punn(ActivationKind::Gaussian, GateShape::Harmonic { degree: 2, inner: false }, Some(4));
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), spec);
    }
}
