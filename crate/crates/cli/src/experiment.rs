//! Running experiments described by an [`ExperimentConfig`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use punn::datasets::{load_csv, load_mnist, make_synthetic, standardize, stratified_split};
use punn::numeric::rng::STREAM_INIT;
use punn::training::{summarize, MultiSeedSummary};
use punn::{train, AnyModel, Data, GateShape, ModelSpec, Rng, RunMetrics, StandardizationStats};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::CliError;
use crate::export::write_grid;
use crate::model_file::{ModelFile, Provenance};

/// One JSON line of the metrics output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub params: usize,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub wall_ms: u64,
    pub config_hash: String,
    /// Set by `ablate`: the swept setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<String>,
}

impl MetricsRecord {
    /// The record with the wall time zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_ms: 0, ..self.clone() }
    }
}

/// Standardized train/test data for one seed.
pub struct Prepared {
    pub train: Data,
    pub test: Data,
    pub stats: StandardizationStats,
}

/// Loads, relabels, splits and standardizes the data for `seed`.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64, cache: &mut Option<Data>) -> Result<Prepared, CliError> {
    let ds = &cfg.dataset;
    let (mut train, mut test) = match &ds.source {
        DatasetSource::Mnist { dir, train_limit, test_limit } => {
            let (mut tr, mut te): (Data, Data) = load_mnist(dir)?;
            if let Some(n) = train_limit {
                tr = tr.head(*n);
            }
            if let Some(n) = test_limit {
                te = te.head(*n);
            }
            (tr, te)
        }
        source => {
            let full = match source {
                DatasetSource::Synthetic { kind, samples, noise, data_seed } => {
                    make_synthetic(*kind, *samples, *noise, data_seed.unwrap_or(seed))?
                }
                DatasetSource::Csv { path, label_column, header } => {
                    if cache.is_none() {
                        *cache = Some(load_csv(path, label_column, *header)?);
                    }
                    cache.clone().expect("cached above")
                }
                DatasetSource::Mnist { .. } => unreachable!(),
            };
            stratified_split(&full, ds.test_fraction, seed)?
        }
    };
    if let Some(order) = &ds.class_order {
        train.reorder_classes(order)?;
        test.reorder_classes(order)?;
    }
    cfg.model.validate(train.classes)?;
    train.check_trainable()?;
    if !ds.standardize {
        let stats = StandardizationStats::identity(train.dim());
        return Ok(Prepared { train, test, stats });
    }
    let (train, others, stats) = standardize(&train, &[&test])?;
    let test = others.into_iter().next().expect("one extra dataset");
    Ok(Prepared { train, test, stats })
}

/// Result of training one seed.
pub struct SeedRun {
    pub record: MetricsRecord,
    pub metrics: RunMetrics,
    pub model: AnyModel<f64>,
    pub stats: StandardizationStats,
    pub class_names: Option<Vec<String>>,
    pub feature_names: Option<Vec<String>>,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, cache: &mut Option<Data>) -> Result<SeedRun, CliError> {
    let data = prepare_data(cfg, seed, cache)?;
    let mut rng = Rng::with_stream(seed, STREAM_INIT);
    let model: AnyModel<f64> = cfg.model.build(data.train.dim(), data.train.classes, &mut rng)?;
    let tcfg = punn::TrainConfig { seed, ..cfg.train.clone() };
    let test = (!data.test.is_empty()).then_some(&data.test);
    let (model, metrics) = train(model, &data.train, test, &tcfg)?;
    let record = MetricsRecord {
        experiment: cfg.name.clone(),
        dataset: cfg.dataset.name(),
        model: cfg.model.name(),
        seed,
        params: metrics.param_count,
        train_acc: metrics.train_accuracy,
        test_acc: metrics.test_accuracy,
        epochs: metrics.epochs,
        final_loss: metrics.loss_history.last().copied(),
        wall_ms: metrics.wall_ms,
        config_hash: cfg.hash(),
        ablation: None,
    };
    Ok(SeedRun {
        record,
        metrics,
        model,
        stats: data.stats,
        class_names: data.train.class_names.clone(),
        feature_names: data.train.feature_names.clone(),
    })
}

/// Trains every seed of `cfg` without writing anything.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<SeedRun>, MultiSeedSummary), CliError> {
    cfg.validate()?;
    let mut cache = None;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s, &mut cache))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(runs.iter().map(|r| r.metrics.clone()).collect())?;
    Ok((runs, summary))
}

/// Files written by [`run_and_write`].
#[derive(Debug, Default)]
pub struct Outputs {
    pub metrics: PathBuf,
    pub models: Vec<PathBuf>,
    pub grids: Vec<PathBuf>,
}

pub fn write_records(path: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `cfg` and writes metrics, model files and grids under its output
/// directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(Outputs, MultiSeedSummary), CliError> {
    let (runs, summary) = run_experiment(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut out = Outputs {
        metrics: dir.join(format!("{}.metrics.jsonl", cfg.name)),
        ..Outputs::default()
    };
    let records: Vec<MetricsRecord> = runs.iter().map(|r| r.record.clone()).collect();
    write_records(&out.metrics, &records)?;
    for run in &runs {
        let need_file = cfg.save_model || cfg.grid.is_some();
        if !need_file {
            continue;
        }
        let mut file = ModelFile::new(
            cfg.model.clone(),
            &run.model,
            run.stats.clone(),
            Provenance {
                experiment: cfg.name.clone(),
                config_hash: run.record.config_hash.clone(),
                seed: run.record.seed,
            },
        );
        file.class_names = run.class_names.clone();
        file.feature_names = run.feature_names.clone();
        if cfg.save_model {
            let p = dir.join(format!("{}.seed{}.model.json", cfg.name, run.record.seed));
            file.save(&p)?;
            out.models.push(p);
        }
        if let Some(g) = &cfg.grid {
            let p = dir.join(format!("{}.seed{}.grid.csv", cfg.name, run.record.seed));
            write_grid(&file, g.bounds, g.resolution, &p)?;
            out.grids.push(p);
        }
    }
    Ok((out, summary))
}

/// Setting swept by `ablate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Partitions,
    HarmonicDegree,
}

/// `cfg` with the swept setting replaced by `value`.
pub fn with_setting(cfg: &ExperimentConfig, sweep: Sweep, value: usize) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    match (&mut c.model, sweep) {
        (ModelSpec::Punn { partitions, class_map, .. }, Sweep::Partitions) => {
            *partitions = Some(value);
            *class_map = None;
        }
        (ModelSpec::Punn { gate: GateShape::Harmonic { degree, .. }, .. }, Sweep::HarmonicDegree) => {
            *degree = value;
        }
        _ => {
            return Err(CliError::Config(format!(
                "model: sweep {sweep:?} does not apply to {}",
                cfg.model.name()
            )))
        }
    }
    c.name = format!("{}-{}{value}", cfg.name, sweep.short());
    Ok(c)
}

impl Sweep {
    fn short(self) -> &'static str {
        match self {
            Self::Partitions => "k",
            Self::HarmonicDegree => "deg",
        }
    }
}

/// Summary row of one ablation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: usize,
    pub params: usize,
    pub test_mean: f64,
    pub test_std: f64,
    pub records: Vec<MetricsRecord>,
}

pub fn ablate(cfg: &ExperimentConfig, sweep: Sweep, values: &[usize]) -> Result<Vec<AblationRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("ablate: need at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let c = with_setting(cfg, sweep, v)?;
            let (runs, summary) = run_experiment(&c)?;
            let test = summary
                .test_accuracy
                .ok_or_else(|| CliError::Config("ablation needs a nonempty test split".into()))?;
            let records = runs
                .into_iter()
                .map(|r| MetricsRecord {
                    ablation: Some(format!("{}={v}", sweep.short())),
                    ..r.record
                })
                .collect::<Vec<_>>();
            Ok(AblationRow {
                value: v,
                params: records[0].params,
                test_mean: test.mean,
                test_std: test.std,
                records,
            })
        })
        .collect()
}
