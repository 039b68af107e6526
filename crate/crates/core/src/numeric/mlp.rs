//! Fully connected rectifier networks with analytic gradients.
//!
//! Hidden layers apply `max(0, .)`; the output layer is linear. Parameters are
//! flattened layer by layer as `weights (row-major, out x in)` followed by
//! `bias`, which is also the layout of every gradient buffer.

use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::rng::Rng;
use crate::error::{shape_err, PunnError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Layer<T> {
    /// `out x in`
    pub weights: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: DenseMatrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(shape_err(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input of every layer; `inputs[0]` is the network input and
    /// `inputs[l + 1] = relu(z_l)`.
    inputs: Vec<DenseMatrix<T>>,
}

impl<T> MlpCache<T> {
    pub fn batch_size(&self) -> usize
    where
        T: Scalar,
    {
        self.inputs.first().map_or(0, DenseMatrix::rows)
    }
}

/// Gradient of a scalar objective with respect to an MLP and its input.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

/// Number of trainable scalars of a network with the given layer widths
/// (`[input, hidden.., output]`).
pub fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(shape_err(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// All-zero network with widths `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(shape_err("layer sizes need an input and an output width"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: DenseMatrix::zeros(w[1], w[0]),
                bias: vec![T::zero(); w[1]],
            })
            .collect();
        Self::new(layers)
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let fan = (layer.inputs() + layer.outputs()).max(1) as f64;
            let limit = (6.0 / fan).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = T::lit(rng.uniform(-limit, limit));
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// `[input, hidden.., output]`
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn write_params(&self, out: &mut Vec<T>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Reads `param_count()` values from the front of `src`.
    pub fn read_params(&mut self, src: &[T]) -> Result<usize> {
        let n = self.param_count();
        if src.len() < n {
            return Err(shape_err(format!(
                "need {n} parameters, only {} supplied",
                src.len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_mut_slice();
            w.copy_from_slice(&src[off..off + w.len()]);
            off += w.len();
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&src[off..off + b]);
            off += b;
        }
        Ok(n)
    }

    /// Batched forward pass; `x` is `batch x input_dim`.
    pub fn forward(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, MlpCache<T>)> {
        if x.cols() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        let last = self.layers.len() - 1;
        let mut out = DenseMatrix::zeros(0, 0);
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &inputs[l];
            let mut z = DenseMatrix::zeros(batch, layer.outputs());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            T::gemm(
                batch,
                layer.inputs(),
                layer.outputs(),
                T::one(),
                input.as_slice(),
                layer.inputs() as isize,
                1,
                layer.weights.as_slice(),
                1,
                layer.inputs() as isize,
                T::one(),
                z.as_mut_slice(),
                layer.outputs() as isize,
                1,
            );
            if l == last {
                out = z;
            } else {
                for v in z.as_mut_slice() {
                    if *v <= T::zero() {
                        *v = T::zero();
                    }
                }
                inputs.push(z);
            }
        }
        Ok((out, MlpCache { inputs }))
    }

    /// Batched backward pass.
    ///
    /// `upstream` is `batch x output_dim`; parameter gradients are
    /// accumulated into `grad` (length `param_count()`). Returns the gradient
    /// with respect to the input when `want_input` is set.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        upstream: &DenseMatrix<T>,
        grad: &mut [T],
        want_input: bool,
    ) -> Result<Option<DenseMatrix<T>>> {
        self.check_cache(cache)?;
        let batch = cache.batch_size();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(PunnError::Internal(format!(
                "upstream gradient is {}x{}, forward pass produced {}x{}",
                upstream.rows(),
                upstream.cols(),
                batch,
                self.output_dim()
            )));
        }
        if grad.len() != self.param_count() {
            return Err(shape_err(format!(
                "gradient buffer has {} slots, network has {} parameters",
                grad.len(),
                self.param_count()
            )));
        }

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        let mut dz = upstream.clone();
        let mut input_grad = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let input = &cache.inputs[l];
            let (gw, gb) = grad[offsets[l]..offsets[l] + layer.param_count()].split_at_mut(n_out * n_in);
            // dW += dz^T * input
            T::gemm(
                n_out,
                batch,
                n_in,
                T::one(),
                dz.as_slice(),
                1,
                n_out as isize,
                input.as_slice(),
                n_in as isize,
                1,
                T::one(),
                gw,
                n_in as isize,
                1,
            );
            for row in dz.iter_rows() {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let mut dx = DenseMatrix::zeros(batch, n_in);
            T::gemm(
                batch,
                n_out,
                n_in,
                T::one(),
                dz.as_slice(),
                n_out as isize,
                1,
                layer.weights.as_slice(),
                n_in as isize,
                1,
                T::zero(),
                dx.as_mut_slice(),
                n_in as isize,
                1,
            );
            if l == 0 {
                input_grad = Some(dx);
                break;
            }
            // rectifier mask; subgradient at exactly 0 is 0
            for (d, &a) in dx.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
            dz = dx;
        }
        Ok(input_grad)
    }

    fn check_cache(&self, cache: &MlpCache<T>) -> Result<()> {
        let stale = || PunnError::Internal("activation cache does not belong to this network".into());
        if cache.inputs.len() != self.layers.len() {
            return Err(stale());
        }
        let batch = cache.batch_size();
        for (input, layer) in cache.inputs.iter().zip(&self.layers) {
            if input.cols() != layer.inputs() || input.rows() != batch {
                return Err(stale());
            }
        }
        Ok(())
    }
}

/// Single-sample forward pass.
pub fn mlp_forward<T: Scalar>(params: &MlpParams<T>, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
    let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
    let (out, cache) = params.forward(&batch)?;
    Ok((out.into_vec(), cache))
}

/// Single-sample backward pass.
pub fn mlp_backward<T: Scalar>(
    params: &MlpParams<T>,
    cache: &MlpCache<T>,
    upstream: &[T],
) -> Result<MlpGradient<T>> {
    if cache.batch_size() != 1 {
        return Err(PunnError::Internal("single-sample backward needs a single-sample cache".into()));
    }
    let up = DenseMatrix::from_vec(1, upstream.len(), upstream.to_vec())?;
    let mut grad = vec![T::zero(); params.param_count()];
    let input = params
        .backward(cache, &up, &mut grad, true)?
        .map(DenseMatrix::into_vec)
        .unwrap_or_default();
    Ok(MlpGradient { params: grad, input })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{finite_diff_grad, max_relative_error};

    fn net(layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> MlpParams<f64> {
        MlpParams::new(
            layers
                .into_iter()
                .map(|(w, b)| Layer::new(DenseMatrix::from_rows(&w).unwrap(), b).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::<f64>::zeros(&[3, 5, 2]).unwrap();
        let (y, _) = mlp_forward(&p, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let p = net(vec![(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0])]);
        let (y, _) = mlp_forward(&p, &[2.0, -3.0]).unwrap();
        assert_eq!(y, vec![2.0, -3.0]);
    }

    #[test]
    fn rectifier_clamps_hidden_unit() {
        let p = net(vec![(vec![vec![1.0]], vec![-1.0]), (vec![vec![2.0]], vec![0.0])]);
        let (y, _) = mlp_forward(&p, &[0.5]).unwrap();
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn input_shape_error() {
        let p = MlpParams::<f64>::zeros(&[3, 1]).unwrap();
        assert!(matches!(mlp_forward(&p, &[1.0]), Err(PunnError::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(1);
        let p = MlpParams::<f64>::init(&[3, 4, 2], &mut rng).unwrap();
        let (_, cache) = mlp_forward(&p, &[0.3, -0.2, 0.9]).unwrap();
        let g = mlp_backward(&p, &cache, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().chain(&g.input).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_affine_gradient() {
        let w = 1.7;
        let x0 = -0.4;
        let p = net(vec![(vec![vec![w]], vec![0.0])]);
        let (_, cache) = mlp_forward(&p, &[x0]).unwrap();
        let g = mlp_backward(&p, &cache, &[1.0]).unwrap();
        assert_eq!(g.params, vec![x0, 1.0]);
        assert_eq!(g.input, vec![w]);
    }

    #[test]
    fn stale_cache_is_internal_error() {
        let mut rng = Rng::new(2);
        let a = MlpParams::<f64>::init(&[3, 4, 1], &mut rng).unwrap();
        let b = MlpParams::<f64>::init(&[2, 4, 1], &mut rng).unwrap();
        let (_, cache) = mlp_forward(&a, &[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(mlp_backward(&b, &cache, &[1.0]), Err(PunnError::Internal(_))));
    }

    #[test]
    fn random_two_layer_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let sizes = [3, 6, 5, 2];
        let p = MlpParams::<f64>::init(&sizes, &mut rng).unwrap();
        let x = [0.4, -1.1, 0.7];
        let up = [0.8, -1.3];
        let (_, cache) = mlp_forward(&p, &x).unwrap();
        let analytic = mlp_backward(&p, &cache, &up).unwrap();

        let mut flat = Vec::new();
        p.write_params(&mut flat);
        let objective = |theta: &[f64]| {
            let mut q = p.clone();
            q.read_params(theta).unwrap();
            let (y, _) = mlp_forward(&q, &x).unwrap();
            y[0] * up[0] + y[1] * up[1]
        };
        let numeric = finite_diff_grad(objective, &flat, 1e-5).unwrap();
        assert!(max_relative_error(&analytic.params, &numeric) < 1e-4);

        let numeric_x = finite_diff_grad(
            |xs: &[f64]| {
                let (y, _) = mlp_forward(&p, xs).unwrap();
                y[0] * up[0] + y[1] * up[1]
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(&analytic.input, &numeric_x) < 1e-4);
    }

    #[test]
    fn read_write_round_trip() {
        let mut rng = Rng::new(4);
        let p = MlpParams::<f32>::init(&[2, 3, 1], &mut rng).unwrap();
        let mut flat = Vec::new();
        p.write_params(&mut flat);
        let mut q = MlpParams::<f32>::zeros(&[2, 3, 1]).unwrap();
        assert_eq!(q.read_params(&flat).unwrap(), 13);
        assert_eq!(p, q);
    }

    #[test]
    fn init_bounds_follow_fan() {
        let mut rng = Rng::new(5);
        let p = MlpParams::<f64>::init(&[10, 20], &mut rng).unwrap();
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(p.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= limit));
        assert!(p.layers()[0].bias.iter().all(|&b| b == 0.0));
    }
}
