use crate::error::Result;
use crate::numeric::DenseMatrix;
use crate::scalar::Scalar;

/// A probabilistic classifier with a flat trainable parameter vector.
pub trait Classifier<T: Scalar> {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn param_count(&self) -> usize;

    fn write_params(&self, out: &mut Vec<T>);

    fn read_params(&mut self, src: &[T]) -> Result<usize>;

    /// Class probabilities, `batch x num_classes`.
    fn predict_proba(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>>;

    /// Mean negative log-likelihood over the batch and its gradient with
    /// respect to the flattened parameters.
    fn loss_and_grad(&self, x: &DenseMatrix<T>, labels: &[usize], eps: T) -> Result<(T, Vec<T>)>;

    fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.write_params(&mut out);
        out
    }

    /// Arg-max class per row; ties go to the lowest index.
    fn predict_batch(&self, x: &DenseMatrix<T>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}
