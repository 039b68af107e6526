//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! MNIST runs only when `PUNN_MNIST_DIR` points at the four IDX files. Set
//! `PUNN_MNIST_LIMIT` to train on that many images instead of all 60k (the
//! weaker subset threshold then applies).

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use punn::constructive::{
    exact_reconstruct, fit_density_demo, gamma_from_pmap, FitConfig, FitNet, GridDomain, ProbabilityMapGrid,
};
use punn::numeric::{max_relative_error, richardson_diff_grad};
use punn::partition::{nll_loss, stick_breaking_check};
use punn::training::MultiSeedSummary;
use punn::{ActivationKind, Classifier, GateShape, GateSpec, LossConfig, Matrix, ModelSpec, Punn, Rng};
use punn_cli::config::DatasetSource;
use punn_cli::experiment::{with_setting, SeedRun};
use punn_cli::{run_experiment, ExperimentConfig, MetricsRecord, Sweep};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(rel: &str) -> ExperimentConfig {
    let path = configs().join(rel);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

type Runs = (Vec<SeedRun>, MultiSeedSummary);

fn run(cfg: &ExperimentConfig) -> Result<Runs, String> {
    run_experiment(cfg).map_err(|e| format!("{}: {e}", cfg.name))
}

fn test_mean(s: &MultiSeedSummary) -> f64 {
    100.0 * s.test_accuracy.as_ref().map_or(f64::NAN, |t| t.mean)
}

fn over_budget(start: Instant, limit: Duration) -> Option<String> {
    let took = start.elapsed();
    (took > limit).then(|| format!("took {:.1}s, budget {}s", took.as_secs_f64(), limit.as_secs()))
}

fn with_budget(start: Instant, limit: Duration, outcome: Outcome) -> Outcome {
    let secs = start.elapsed().as_secs_f64();
    match (outcome, over_budget(start, limit)) {
        (Outcome::Pass(d), Some(b)) => Outcome::Fail(format!("{d}; {b}")),
        (Outcome::Pass(d), None) => Outcome::Pass(format!("{d} [{secs:.1}s]")),
        (Outcome::Fail(d), _) => Outcome::Fail(format!("{d} [{secs:.1}s]")),
        (other, _) => other,
    }
}

const ACTIVATIONS: [ActivationKind; 4] = [
    ActivationKind::Sigmoid,
    ActivationKind::Gaussian,
    ActivationKind::Bump,
    ActivationKind::BumpTanh,
];

fn shapes(dim: usize) -> Vec<GateShape> {
    let mut out = vec![
        GateShape::Mlp { hidden: vec![8] },
        GateShape::Mlp { hidden: vec![4, 4] },
        GateShape::Radial,
        GateShape::Ellipsoid,
        GateShape::Shell { inner: false },
        GateShape::Shell { inner: true },
        GateShape::Harmonic { degree: 1, inner: false },
        GateShape::Harmonic { degree: 2, inner: true },
    ];
    if dim == 2 {
        out.push(GateShape::Fourier { order: 3, inner: false });
        out.push(GateShape::Fourier { order: 2, inner: true });
    }
    out
}

fn random_model(rng: &mut Rng, dim: usize, k: usize, jitter: f64) -> Punn {
    let shapes = shapes(dim);
    let gates = (0..k - 1)
        .map(|_| {
            let shape = &shapes[rng.below(shapes.len())];
            let act = ACTIVATIONS[rng.below(ACTIVATIONS.len())];
            GateSpec::init(act, shape, dim, rng).unwrap()
        })
        .collect();
    let mut m = Punn::with_identity(gates).unwrap();
    if jitter > 0.0 {
        let p: Vec<f64> = m.params().iter().map(|v| v + rng.uniform(-jitter, jitter)).collect();
        m.read_params(&p).unwrap();
    }
    m
}

fn random_inputs(rng: &mut Rng, n: usize, dim: usize, scale: f64) -> Matrix {
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
}

fn partition_of_unity() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let (mut sum_dev, mut sb_dev, mut negative) = (0.0f64, 0.0f64, 0usize);
    for n in 0..10_000 {
        let k = 2 + n % 9;
        let dim = [2, 4, 8][n % 3];
        let model = random_model(&mut rng, dim, k, 0.0);
        let x = random_inputs(&mut rng, 4, dim, 3.0);
        let h = model.partition_batch(&x).unwrap();
        for row in h.iter_rows() {
            negative += row.iter().filter(|&&v| v < 0.0).count();
            sum_dev = sum_dev.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let (g, _) = model.gate_values(&x).unwrap();
        for row in g.iter_rows() {
            for m in 1..=row.len() {
                sb_dev = sb_dev.max(stick_breaking_check(row, m).unwrap());
            }
        }
    }
    let detail = format!("10000 models, max |sum h - 1| = {sum_dev:.1e}, negative h = {negative}, stick-breaking residual {sb_dev:.1e}");
    with_budget(
        start,
        Duration::from_secs(10),
        check(sum_dev < 1e-12 && negative == 0 && sb_dev < 1e-15, detail),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(77);
    let cfg = LossConfig::default();
    let mut worst = 0.0f64;
    let mut covered = std::collections::HashSet::new();
    for n in 0..100 {
        let dim = [2, 3, 4][n % 3];
        let k = 2 + n % 4;
        let model = random_model(&mut rng, dim, k, 0.05);
        for g in model.gates() {
            covered.insert((g.family(), g.activation));
        }
        let x = random_inputs(&mut rng, 5, dim, 1.5);
        let labels: Vec<usize> = (0..5).map(|i| (i + n) % k).collect();
        let (_, grad) = nll_loss(&model, &x, &labels, &cfg).unwrap();
        let num = richardson_diff_grad(
            |p: &[f64]| {
                let mut m = model.clone();
                m.read_params(p).unwrap();
                nll_loss(&m, &x, &labels, &cfg).unwrap().0
            },
            &model.params(),
            1e-5,
        )
        .unwrap();
        worst = worst.max(max_relative_error(&grad, &num));
    }
    let detail = format!("100 instances, {} family/activation pairs, max relative error {worst:.1e}", covered.len());
    with_budget(start, Duration::from_secs(30), check(worst < 1e-4, detail))
}

fn sigmoid_punn(rng: &mut Rng, k: usize, hidden: usize) -> Punn {
    let gates = (0..k - 1)
        .map(|_| GateSpec::init(ActivationKind::Sigmoid, &GateShape::Mlp { hidden: vec![hidden] }, 2, rng).unwrap())
        .collect();
    Punn::with_identity(gates).unwrap()
}

fn constructive() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(5);
    let mut round_trip = 0.0f64;
    for k in 2..=6 {
        for _ in 0..4 {
            let domain = GridDomain::cube(2, -2.0, 2.0, 50).unwrap();
            let p = ProbabilityMapGrid::from_model(domain, &sigmoid_punn(&mut rng, k, 6)).unwrap();
            let back = exact_reconstruct(&gamma_from_pmap(&p).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(p.values.as_slice()) {
                round_trip = round_trip.max((a - b).abs());
            }
        }
    }
    let domain = GridDomain::cube(2, -2.0, 2.0, 40).unwrap();
    let target = sigmoid_punn(&mut Rng::new(17), 3, 8);
    let p = ProbabilityMapGrid::from_model(domain, &target).unwrap();
    let fit = fit_density_demo(
        &p,
        &FitConfig {
            net: FitNet::Mlp { hidden: vec![16] },
            ..FitConfig::default()
        },
    )
    .unwrap();
    let detail = format!(
        "round trip {round_trip:.1e} over 20 maps (k 2..6, 50x50); refit sup error {:.4} (bound {:.4})",
        fit.sup_error,
        fit.telescoping_bound()
    );
    with_budget(
        start,
        Duration::from_secs(120),
        check(round_trip < 1e-12 && fit.sup_error < 0.05, detail),
    )
}

fn punn_spec(activation: ActivationKind, gate: GateShape, partitions: Option<usize>) -> ModelSpec {
    ModelSpec::Punn {
        activation,
        gate,
        partitions,
        class_map: None,
    }
}

fn parameter_counts() -> Outcome {
    let mlp32 = GateShape::Mlp { hidden: vec![32, 32] };
    let mut cases = vec![
        ("moons PUNN-Sigma", punn_spec(ActivationKind::Sigmoid, mlp32.clone(), None), 2, 2, 1185),
        ("moons PUNN-Bump (amplitude)", punn_spec(ActivationKind::BumpTanh, mlp32, None), 2, 2, 1186),
        ("moons MLP", ModelSpec::Mlp { hidden: vec![32, 32] }, 2, 2, 1218),
        (
            "MNIST PUNN-Sigma",
            punn_spec(ActivationKind::Sigmoid, GateShape::Mlp { hidden: vec![256, 256] }, None),
            784,
            10,
            2_403_081,
        ),
        ("MNIST MLP", ModelSpec::Mlp { hidden: vec![256, 256] }, 784, 10, 269_322),
        ("iris MLP", ModelSpec::Mlp { hidden: vec![32, 32] }, 4, 3, 1315),
        ("rings MLP", ModelSpec::Mlp { hidden: vec![32, 32] }, 2, 3, 1251),
    ];
    for (deg, want) in [(0, 12), (1, 20), (2, 40)] {
        cases.push((
            "iris harmonic",
            punn_spec(ActivationKind::Sigmoid, GateShape::Harmonic { degree: deg, inner: false }, None),
            4,
            3,
            want,
        ));
    }
    for (k, want) in [(2, 4), (4, 12), (6, 20), (8, 28)] {
        cases.push(("circles radial", punn_spec(ActivationKind::Sigmoid, GateShape::Radial, Some(k)), 2, 2, want));
    }
    let mut rng = Rng::new(0);
    let mut bad = Vec::new();
    for (label, spec, d, c, want) in &cases {
        let formula = spec.param_count(*d, *c);
        let built = if *d < 100 {
            let m: punn::Model = spec.build(*d, *c, &mut rng).unwrap();
            m.param_count()
        } else {
            formula
        };
        if formula != *want || built != *want {
            bad.push(format!("{label}: {formula}/{built} != {want}"));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} counts exact", cases.len())
        } else {
            bad.join("; ")
        },
    )
}

fn synthetic(records: &mut Vec<MetricsRecord>) -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in ["moons", "circles", "xor", "helix"] {
        for (model, floor) in [("punn-sigma", 98.5), ("mlp", if kind == "circles" { 97.0 } else { 98.5 })] {
            let cfg = load(&format!("synthetic/{kind}-{model}.toml"));
            match run(&cfg) {
                Ok((runs, s)) => {
                    let acc = test_mean(&s);
                    ok &= acc >= floor;
                    parts.push(format!("{kind}/{model} {acc:.1}"));
                    records.extend(runs.into_iter().map(|r| r.record));
                }
                Err(e) => return Outcome::Fail(e),
            }
        }
    }
    with_budget(start, Duration::from_secs(180), check(ok, parts.join(", ")))
}

fn shape() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, floor, params) in [("circles-radial", 97.0, Some(4)), ("rings-shell", 99.0, Some(10)), ("iris-ellipsoid", 92.0, None)] {
        let cfg = load(&format!("shape/{name}.toml"));
        match run(&cfg) {
            Ok((runs, s)) => {
                let acc = test_mean(&s);
                let p = runs[0].record.params;
                ok &= acc >= floor && params.is_none_or(|want| p == want);
                parts.push(format!("{name} {acc:.1} ({p} params)"));
            }
            Err(e) => return Outcome::Fail(e),
        }
    }
    with_budget(start, Duration::from_secs(120), check(ok, parts.join(", ")))
}

fn ablations() -> Outcome {
    let start = Instant::now();
    let circles = load("ablation/circles-partitions.toml");
    let mut accs = Vec::new();
    for k in [2, 4] {
        let cfg = with_setting(&circles, Sweep::Partitions, k).unwrap();
        match run(&cfg) {
            Ok((_, s)) => accs.push(test_mean(&s)),
            Err(e) => return Outcome::Fail(e),
        }
    }
    let gain = accs[1] - accs[0];
    let iris = load("ablation/iris-harmonics.toml");
    let mut harmonics = Vec::new();
    for deg in [0, 1, 2] {
        let cfg = with_setting(&iris, Sweep::HarmonicDegree, deg).unwrap();
        match run(&cfg) {
            Ok((_, s)) => harmonics.push(test_mean(&s)),
            Err(e) => return Outcome::Fail(e),
        }
    }
    let harm_ok = harmonics.iter().all(|a| (a - 95.3).abs() <= 4.0);
    let detail = format!(
        "circles k=2 {:.1} -> k=4 {:.1} (gain {gain:.1} pp); iris harmonics deg0/1/2 {:.1}/{:.1}/{:.1}",
        accs[0], accs[1], harmonics[0], harmonics[1], harmonics[2]
    );
    with_budget(start, Duration::from_secs(300), check(gain >= 8.0 && harm_ok, detail))
}

fn uci() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, floor) in [("iris", 92.0), ("wine", 94.0), ("breast_cancer", 93.0)] {
        let punn = run(&load(&format!("uci/{name}-punn-sigma.toml")));
        let mlp = run(&load(&format!("uci/{name}-mlp.toml")));
        match (punn, mlp) {
            (Ok((_, p)), Ok((_, m))) => {
                let (a, b) = (test_mean(&p), test_mean(&m));
                ok &= a >= floor && a >= b - 1.5;
                parts.push(format!("{name} PUNN {a:.1} vs MLP {b:.1}"));
            }
            (Err(e), _) | (_, Err(e)) => return Outcome::Fail(e),
        }
    }
    with_budget(start, Duration::from_secs(300), check(ok, parts.join(", ")))
}

fn mnist() -> Outcome {
    let Some(dir) = std::env::var_os("PUNN_MNIST_DIR") else {
        return Outcome::Skip("set PUNN_MNIST_DIR to the directory with the IDX files".into());
    };
    let limit: Option<usize> = std::env::var("PUNN_MNIST_LIMIT").ok().and_then(|v| v.parse().ok());
    let mut parts = Vec::new();
    let mut ok = true;
    for (model, full_floor) in [("punn-sigma", 97.0), ("mlp", 97.5)] {
        let mut cfg = load(&format!("mnist/mnist-{model}.toml"));
        cfg.dataset.source = DatasetSource::Mnist {
            dir: PathBuf::from(&dir),
            train_limit: limit,
            test_limit: None,
        };
        let floor = if limit.is_some() { 94.0 } else { full_floor };
        match run(&cfg) {
            Ok((_, s)) => {
                let acc = test_mean(&s);
                ok &= acc >= floor;
                parts.push(format!("{model} {acc:.2} (floor {floor})"));
            }
            Err(e) => return Outcome::Fail(e),
        }
    }
    if let Some(n) = limit {
        parts.push(format!("{n}-image training subset"));
    }
    check(ok, parts.join(", "))
}

fn determinism(first: &[MetricsRecord]) -> Outcome {
    let mut again = Vec::new();
    for kind in ["moons", "circles", "xor", "helix"] {
        for model in ["punn-sigma", "mlp"] {
            match run(&load(&format!("synthetic/{kind}-{model}.toml"))) {
                Ok((runs, _)) => again.extend(runs.into_iter().map(|r| r.record)),
                Err(e) => return Outcome::Fail(e),
            }
        }
    }
    let a: Vec<_> = first.iter().map(MetricsRecord::without_timing).collect();
    let b: Vec<_> = again.iter().map(MetricsRecord::without_timing).collect();
    check(
        !a.is_empty() && a == b,
        format!("{} synthetic records rerun, identical apart from wall time: {}", b.len(), a == b),
    )
}

fn main() {
    let mut synthetic_records = Vec::new();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("partition of unity", Box::new(partition_of_unity)),
        ("gradients", Box::new(gradients)),
        ("constructive oracle", Box::new(constructive)),
        ("parameter counts", Box::new(parameter_counts)),
        ("synthetic accuracy", Box::new(|| synthetic(&mut synthetic_records))),
    ];
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail}");
    };
    for (name, f) in criteria {
        report(name, f());
    }
    report("shape-informed gates", shape());
    report("ablations", ablations());
    report("UCI small sets", uci());
    report("MNIST", mnist());
    report("determinism", determinism(&synthetic_records));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
