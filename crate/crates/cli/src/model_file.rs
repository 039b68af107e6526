//! Versioned JSON model files.

use std::path::Path;

use punn::{AnyModel, Classifier, ModelSpec, Rng, StandardizationStats};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT: &str = "punn-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    #[serde(default)]
    pub feature_names: Option<Vec<String>>,
    pub params: Vec<f64>,
    pub standardization: StandardizationStats,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl ModelFile {
    pub fn new(
        spec: ModelSpec,
        model: &AnyModel<f64>,
        standardization: StandardizationStats,
        provenance: Provenance,
    ) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            spec,
            input_dim: model.input_dim(),
            classes: model.num_classes(),
            class_names: None,
            feature_names: None,
            params: model.params(),
            standardization,
            provenance,
        }
    }

    /// Rebuilds the classifier from the stored architecture and parameters.
    pub fn model(&self) -> Result<AnyModel<f64>, CliError> {
        let mut m: AnyModel<f64> = self.spec.build(self.input_dim, self.classes, &mut Rng::new(0))?;
        if self.params.len() != m.param_count() {
            return Err(CliError::Config(format!(
                "model file has {} parameters, architecture needs {}",
                self.params.len(),
                m.param_count()
            )));
        }
        m.read_params(&self.params)?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let parse = |e: serde_json::Error| CliError::Config(format!("model file does not parse: {e}"));
        let header: Header = serde_json::from_str(text).map_err(parse)?;
        if header.format != FORMAT {
            return Err(CliError::Config(format!("not a model file (format '{}')", header.format)));
        }
        if header.version != VERSION {
            return Err(CliError::Config(format!(
                "unsupported model file version {} (this build reads version {VERSION})",
                header.version
            )));
        }
        let file: Self = serde_json::from_str(text).map_err(parse)?;
        if file.standardization.mean.len() != file.input_dim || file.standardization.std.len() != file.input_dim {
            return Err(CliError::Config("standardization does not match the input dimension".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies the stored standardization to a raw input vector.
    pub fn standardize(&self, raw: &[f64]) -> Result<Vec<f64>, CliError> {
        if raw.len() != self.input_dim {
            return Err(CliError::Config(format!(
                "input has {} values, model expects {}",
                raw.len(),
                self.input_dim
            )));
        }
        let mut x = raw.to_vec();
        self.standardization.apply_row(&mut x);
        Ok(x)
    }
}
