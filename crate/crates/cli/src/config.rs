//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use punn::datasets::{LabelColumn, SyntheticKind, DEFAULT_NOISE};
use punn::{ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        kind: SyntheticKind,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        /// Generator seed; defaults to the run seed.
        #[serde(default)]
        data_seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: LabelColumn,
        #[serde(default = "yes")]
        header: bool,
    },
    /// IDX files with the standard MNIST names; uses the official
    /// train/test split instead of `test_fraction`.
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

fn default_samples() -> usize {
    1000
}

fn default_noise() -> f64 {
    DEFAULT_NOISE
}

fn yes() -> bool {
    true
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DatasetSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Renumbers classes: old class `class_order[i]` becomes class `i`.
    #[serde(default)]
    pub class_order: Option<Vec<usize>>,
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        match &self.source {
            DatasetSource::Synthetic { kind, .. } => kind.name().to_string(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
            DatasetSource::Mnist { .. } => "mnist".to_string(),
        }
    }
}

/// Optional 2-D grid export after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `[x1_min, x1_max, x2_min, x2_max]` in raw (unstandardized) units.
    pub bounds: [f64; 4],
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    300
}

fn default_seeds() -> Vec<u64> {
    vec![42]
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub save_model: bool,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config; relative dataset paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.exists() {
                let candidate = base.join(&*p);
                if candidate.exists() {
                    *p = candidate;
                }
            }
        };
        match &mut self.dataset.source {
            DatasetSource::Csv { path, .. } => fix(path),
            DatasetSource::Mnist { dir, .. } => fix(dir),
            DatasetSource::Synthetic { .. } => {}
        }
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "need at least one seed".into());
        }
        self.train.validate().or_else(|e| bad("train", e.to_string()))?;
        let frac = self.dataset.test_fraction;
        if !(0.0..1.0).contains(&frac) {
            return bad("dataset.test_fraction", format!("must lie in [0, 1), got {frac}"));
        }
        match &self.dataset.source {
            DatasetSource::Synthetic { kind, samples, noise, .. } => {
                if *samples < 2 {
                    return bad("dataset.samples", "need at least two samples".into());
                }
                if !(*noise >= 0.0) {
                    return bad("dataset.noise", format!("must be nonnegative, got {noise}"));
                }
                self.model
                    .validate(kind.classes())
                    .or_else(|e| bad("model", e.to_string()))?;
            }
            DatasetSource::Csv { path, .. } => {
                if !path.is_file() {
                    return bad("dataset.path", format!("{} does not exist", path.display()));
                }
            }
            DatasetSource::Mnist { dir, .. } => {
                if !dir.is_dir() {
                    return bad("dataset.dir", format!("{} is not a directory", dir.display()));
                }
            }
        }
        if let Some(g) = &self.grid {
            if g.resolution < 2 {
                return bad("grid.resolution", "must be at least 2".into());
            }
            if !(g.bounds[0] < g.bounds[1] && g.bounds[2] < g.bounds[3]) {
                return bad("grid.bounds", "expected [x1_min, x1_max, x2_min, x2_max] with min < max".into());
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, excluding the output location.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOONS: &str = r#"
name = "moons"
seeds = [42]

[dataset]
source = "synthetic"
kind = "moons"

[model]
type = "punn"
activation = "sigmoid"
gate = { kind = "mlp", hidden = [32, 32] }
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.dataset.test_fraction, 0.2);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.model.param_count(2, 2), 1185);
    }

    #[test]
    fn rejects_too_few_partitions() {
        let text = MOONS.replace("kind = \"moons\"", "kind = \"rings\"")
            .replace("hidden = [32, 32] }", "hidden = [32, 32] }\npartitions = 2");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("model"), "{err}");
    }

    #[test]
    fn unknown_field_is_a_config_error() {
        let text = MOONS.replace("seeds = [42]", "seeds = [42]\nepochs = 3");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_toml(MOONS).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.train.epochs = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
