//! Softmax MLP baseline.

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{shape_err, PunnError, Result};
use crate::numeric::{DenseMatrix, MlpParams, Rng};
use crate::scalar::Scalar;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

/// Rectifier MLP with `C` outputs followed by a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SoftmaxMlp<T> {
    pub net: MlpParams<T>,
}

impl<T: Scalar> SoftmaxMlp<T> {
    pub fn new(net: MlpParams<T>) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(PunnError::Config("a softmax classifier needs at least two outputs".into()));
        }
        Ok(Self { net })
    }

    pub fn init(input: usize, hidden: &[usize], classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Self::new(MlpParams::init(&sizes, rng)?)
    }
}

impl<T: Scalar> Classifier<T> for SoftmaxMlp<T> {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn write_params(&self, out: &mut Vec<T>) {
        self.net.write_params(out);
    }

    fn read_params(&mut self, src: &[T]) -> Result<usize> {
        self.net.read_params(src)
    }

    fn predict_proba(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let (mut z, _) = self.net.forward(x)?;
        for r in 0..z.rows() {
            softmax_in_place(z.row_mut(r));
        }
        Ok(z)
    }

    /// Cross-entropy through the log-softmax; `eps` is not needed here
    /// because the log-probabilities are computed without forming `p`.
    fn loss_and_grad(&self, x: &DenseMatrix<T>, labels: &[usize], _eps: T) -> Result<(T, Vec<T>)> {
        let batch = x.rows();
        if batch == 0 {
            return Err(PunnError::Input("empty batch".into()));
        }
        if labels.len() != batch {
            return Err(shape_err(format!("{} labels for {batch} samples", labels.len())));
        }
        let c = self.num_classes();
        if let Some(&y) = labels.iter().find(|&&y| y >= c) {
            return Err(PunnError::Input(format!("label {y} out of range")));
        }
        let (z, cache) = self.net.forward(x)?;
        let inv = T::one() / T::lit(batch as f64);
        let mut loss = T::zero();
        let mut upstream = DenseMatrix::zeros(batch, c);
        for (b, &y) in labels.iter().enumerate() {
            let row = z.row(b);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss = loss + lse - row[y];
            let up = upstream.row_mut(b);
            for (j, u) in up.iter_mut().enumerate() {
                let p = (row[j] - lse).exp();
                *u = (if j == y { p - T::one() } else { p }) * inv;
            }
        }
        loss = loss * inv;
        if !loss.is_finite() {
            return Err(PunnError::Numeric(format!("loss is {loss}")));
        }
        let mut grad = vec![T::zero(); self.param_count()];
        self.net.backward(&cache, &upstream, &mut grad, false)?;
        Ok((loss, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_grad, mlp_param_count};
    use crate::numeric::gradcheck::max_relative_error;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0f64, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] < 1e-300);
        let a = softmax(&[0.3f64, -1.2, 2.0]);
        let b = softmax(&[7.3f64, 5.8, 9.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn param_counts() {
        assert_eq!(mlp_param_count(&[2, 32, 32, 2]), 1218);
        assert_eq!(mlp_param_count(&[4, 32, 32, 3]), 1315);
        assert_eq!(mlp_param_count(&[2, 32, 32, 3]), 1251);
        assert_eq!(mlp_param_count(&[784, 256, 256, 10]), 269_322);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let model = SoftmaxMlp::<f64>::init(3, &[6], 4, &mut rng).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.2, -1.0, 0.5], vec![1.3, 0.1, -0.7]]).unwrap();
        let y = [3, 1];
        let (_, grad) = model.loss_and_grad(&x, &y, 1e-10).unwrap();
        let num = finite_diff_grad(
            |p: &[f64]| {
                let mut m = model.clone();
                m.read_params(p).unwrap();
                m.loss_and_grad(&x, &y, 1e-10).unwrap().0
            },
            &model.params(),
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(&grad, &num) < 1e-6);
    }
}
