mod common;

use common::{random_inputs, random_model, shapes, ACTIVATIONS};
use punn::numeric::{max_relative_error, richardson_diff_grad};
use punn::partition::nll_loss;
use punn::{Classifier, GateSpec, LossConfig, Punn, Rng, SoftmaxMlp};

/// Nudges every parameter off its initial value; zero biases put rectifier
/// inputs exactly on the kink, where finite differences are meaningless.
fn jitter<C: Classifier<f64>>(model: &mut C, rng: &mut Rng) {
    let p: Vec<f64> = model.params().iter().map(|v| v + rng.uniform(-0.05, 0.05)).collect();
    model.read_params(&p).unwrap();
}

fn loss_gradient_error(model: &Punn, x: &punn::Matrix, labels: &[usize]) -> f64 {
    let cfg = LossConfig::default();
    let (_, grad) = nll_loss(model, x, labels, &cfg).unwrap();
    let num = richardson_diff_grad(
        |p: &[f64]| {
            let mut m = model.clone();
            m.read_params(p).unwrap();
            nll_loss(&m, x, labels, &cfg).unwrap().0
        },
        &model.params(),
        1e-5,
    )
    .unwrap();
    max_relative_error(&grad, &num)
}

#[test]
fn every_family_and_activation() {
    let mut rng = Rng::new(3);
    for dim in [2, 3] {
        for shape in shapes(dim) {
            for act in ACTIVATIONS {
                let gates = (0..2)
                    .map(|_| GateSpec::init(act, &shape, dim, &mut rng).unwrap())
                    .collect();
                let mut model = Punn::with_identity(gates).unwrap();
                jitter(&mut model, &mut rng);
                // inputs near the gates' support so bump gradients are nonzero
                let x = random_inputs(&mut rng, 6, dim, 1.0);
                let labels = [0, 1, 2, 0, 1, 2];
                let err = loss_gradient_error(&model, &x, &labels);
                assert!(err < 1e-4, "{shape:?} {act:?} d={dim}: {err:e}");
            }
        }
    }
}

#[test]
fn random_mixed_models() {
    let mut rng = Rng::new(4);
    let mut worst = 0.0f64;
    for n in 0..100 {
        let k = 2 + n % 5;
        let dim = [2, 4][n % 2];
        let mut model = random_model(&mut rng, dim, k);
        jitter(&mut model, &mut rng);
        let x = random_inputs(&mut rng, 5, dim, 1.5);
        let labels: Vec<usize> = (0..5).map(|i| (i + n) % k).collect();
        let e = loss_gradient_error(&model, &x, &labels);
        if e > 1e-4 { eprintln!("n={n} e={e:e} {:?}", model.gates().iter().map(|g| (g.shape(), g.activation)).collect::<Vec<_>>()); }
        worst = worst.max(e);
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn softmax_baseline() {
    let mut rng = Rng::new(5);
    let mut model = SoftmaxMlp::<f64>::init(3, &[7, 5], 4, &mut rng).unwrap();
    jitter(&mut model, &mut rng);
    let x = random_inputs(&mut rng, 6, 3, 2.0);
    let labels = [0, 1, 2, 3, 0, 1];
    let (_, grad) = model.loss_and_grad(&x, &labels, 0.0).unwrap();
    let num = richardson_diff_grad(
        |p: &[f64]| {
            let mut m = model.clone();
            m.read_params(p).unwrap();
            m.loss_and_grad(&x, &labels, 0.0).unwrap().0
        },
        &model.params(),
        1e-5,
    )
    .unwrap();
    assert!(max_relative_error(&grad, &num) < 1e-4);
}
