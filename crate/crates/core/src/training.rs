//! Mini-batch Adam training, evaluation and multi-seed aggregation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::constructive::GridDomain;
use crate::datasets::Dataset;
use crate::error::{shape_err, PunnError, Result};
use crate::numeric::rng::STREAM_SHUFFLE;
use crate::numeric::{AdamConfig, AdamState, DenseMatrix, Rng};
use crate::partition::{PartitionModel, DEFAULT_LOSS_EPSILON};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss_epsilon: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 42,
            loss_epsilon: DEFAULT_LOSS_EPSILON,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(PunnError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(PunnError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(PunnError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.loss_epsilon > 0.0) {
            return Err(PunnError::Config("loss epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Sample-weighted mean training loss of every epoch.
    pub loss_history: Vec<f64>,
    pub wall_ms: u64,
    pub param_count: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Trains `model` on `train` and evaluates it on `train` and `test`.
///
/// Each epoch draws a fresh permutation from the shuffle stream of
/// `cfg.seed`, keeps the last partial batch, and takes one Adam step per
/// batch.
pub fn train<T: Scalar, C: Classifier<T>>(
    mut model: C,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<(C, RunMetrics)> {
    cfg.validate()?;
    train.check_trainable()?;
    check_dims(&model, train)?;
    let start = Instant::now();
    let n = train.len();
    let eps = T::lit(cfg.loss_epsilon);
    let mut rng = Rng::with_stream(cfg.seed, STREAM_SHUFFLE);
    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let full_batch = cfg.batch_size >= n && !cfg.shuffle;

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grad) = if full_batch {
                model.loss_and_grad(&train.features, &train.labels, eps)
            } else {
                let x = train.features.select_rows(chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
                model.loss_and_grad(&x, &y, eps)
            }
            .map_err(|e| match e {
                PunnError::Numeric(m) => PunnError::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PunnError::Numeric(format!(
                    "epoch {epoch}, batch {b}: loss {loss} or its gradient is not finite"
                )));
            }
            adam.step(&mut params, &grad)?;
            model.read_params(&params)?;
            total += Scalar::as_f64(loss) * chunk.len() as f64;
        }
        history.push(total / n as f64);
    }

    let train_accuracy = evaluate(&model, train)?.accuracy;
    let test_accuracy = match test {
        Some(t) if !t.is_empty() => Some(evaluate(&model, t)?.accuracy),
        _ => None,
    };
    let metrics = RunMetrics {
        train_accuracy,
        test_accuracy,
        loss_history: history,
        wall_ms: start.elapsed().as_millis() as u64,
        param_count: model.param_count(),
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    Ok((model, metrics))
}

fn check_dims<T: Scalar, C: Classifier<T>>(model: &C, ds: &Dataset<T>) -> Result<()> {
    if model.input_dim() != ds.dim() {
        return Err(shape_err(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            ds.dim()
        )));
    }
    if model.num_classes() != ds.classes {
        return Err(shape_err(format!(
            "model has {} classes, dataset has {}",
            model.num_classes(),
            ds.classes
        )));
    }
    Ok(())
}

/// Accuracy and confusion counts (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    /// Rows divided by their totals; rows of absent classes stay zero.
    pub fn normalized_confusion(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let s: usize = row.iter().sum();
                row.iter().map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 }).collect()
            })
            .collect()
    }
}

const EVAL_CHUNK: usize = 4096;

pub fn evaluate<T: Scalar, C: Classifier<T>>(model: &C, ds: &Dataset<T>) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(PunnError::Input("cannot evaluate on an empty dataset".into()));
    }
    check_dims(model, ds)?;
    let c = ds.classes;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x = if chunk.len() == ds.len() {
            ds.features.clone()
        } else {
            ds.features.select_rows(chunk)
        };
        for (&i, pred) in chunk.iter().zip(model.predict_batch(&x)?) {
            let y = ds.labels[i];
            confusion[y][pred] += 1;
            correct += usize::from(y == pred);
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        confusion,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(PunnError::Input("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedSummary {
    pub runs: Vec<RunMetrics>,
    pub train_accuracy: MeanStd,
    pub test_accuracy: Option<MeanStd>,
}

/// `count` consecutive seeds starting at `base`.
pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base + i).collect()
}

/// Runs `run` once per seed and summarizes the accuracies.
pub fn multi_seed<F>(seeds: &[u64], mut run: F) -> Result<MultiSeedSummary>
where
    F: FnMut(u64) -> Result<RunMetrics>,
{
    if seeds.is_empty() {
        return Err(PunnError::Config("need at least one seed".into()));
    }
    let runs = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    summarize(runs)
}

pub fn summarize(runs: Vec<RunMetrics>) -> Result<MultiSeedSummary> {
    let train: Vec<f64> = runs.iter().map(|r| r.train_accuracy).collect();
    let test: Option<Vec<f64>> = runs.iter().map(|r| r.test_accuracy).collect();
    Ok(MultiSeedSummary {
        train_accuracy: MeanStd::of(&train)?,
        test_accuracy: test.map(|t| MeanStd::of(&t)).transpose()?,
        runs,
    })
}

/// Values on a 2-D grid: one row of `values` per point, plus the predicted
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEval<T> {
    pub domain: GridDomain,
    pub points: DenseMatrix<T>,
    pub values: DenseMatrix<T>,
    pub predicted: Vec<usize>,
}

fn grid_points<T: Scalar>(input_dim: usize, domain: &GridDomain) -> Result<DenseMatrix<T>> {
    if input_dim != 2 || domain.dim() != 2 {
        return Err(PunnError::Unsupported(format!(
            "grid evaluation needs a 2-D model and box, got input dimension {input_dim}"
        )));
    }
    Ok(domain.points())
}

/// Partition functions `h_1..h_k` and predicted class on a grid.
pub fn grid_eval<T: Scalar>(model: &PartitionModel<T>, domain: &GridDomain) -> Result<GridEval<T>> {
    let points = grid_points(model.input_dim(), domain)?;
    let values = model.partition_batch(&points)?;
    let predicted = model.predict_batch(&points)?;
    Ok(GridEval {
        domain: domain.clone(),
        points,
        values,
        predicted,
    })
}

/// Class probabilities and predicted class on a grid for any classifier.
pub fn grid_eval_proba<T: Scalar, C: Classifier<T>>(model: &C, domain: &GridDomain) -> Result<GridEval<T>> {
    let points = grid_points(model.input_dim(), domain)?;
    let values = model.predict_proba(&points)?;
    let predicted = values.iter_rows().map(crate::classifier::argmax).collect();
    Ok(GridEval {
        domain: domain.clone(),
        points,
        values,
        predicted,
    })
}
