#![allow(dead_code)]

use punn::gates::GateShape;
use punn::numeric::Rng;
use punn::{ActivationKind, GateSpec, Matrix, Punn};

pub const ACTIVATIONS: [ActivationKind; 4] = [
    ActivationKind::Sigmoid,
    ActivationKind::Gaussian,
    ActivationKind::Bump,
    ActivationKind::BumpTanh,
];

/// Every gate shape usable in `dim` dimensions.
pub fn shapes(dim: usize) -> Vec<GateShape> {
    let mut out = vec![
        GateShape::Mlp { hidden: vec![6] },
        GateShape::Mlp { hidden: vec![4, 3] },
        GateShape::Radial,
        GateShape::Ellipsoid,
        GateShape::Shell { inner: false },
        GateShape::Shell { inner: true },
        GateShape::Harmonic { degree: 2, inner: true },
    ];
    if dim == 2 {
        out.push(GateShape::Fourier { order: 3, inner: false });
        out.push(GateShape::Fourier { order: 2, inner: true });
    }
    out
}

/// A random model with `k` partitions whose gates cycle through families
/// and activations.
pub fn random_model(rng: &mut Rng, dim: usize, k: usize) -> Punn {
    let shapes = shapes(dim);
    let gates = (0..k - 1)
        .map(|_| {
            let shape = &shapes[rng.below(shapes.len())];
            let act = ACTIVATIONS[rng.below(ACTIVATIONS.len())];
            GateSpec::init(act, shape, dim, rng).unwrap()
        })
        .collect();
    Punn::with_identity(gates).unwrap()
}

pub fn random_inputs(rng: &mut Rng, n: usize, dim: usize, scale: f64) -> Matrix {
    let data = (0..n * dim).map(|_| rng.uniform(-scale, scale)).collect();
    Matrix::from_vec(n, dim, data).unwrap()
}
