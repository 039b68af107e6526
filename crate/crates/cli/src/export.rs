//! Grid exports and decision traces from saved models.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use punn::constructive::GridDomain;
use punn::partition::DecisionTrace;
use punn::training::{grid_eval, grid_eval_proba, GridEval};
use punn::{AnyModel, Matrix};
use serde::Serialize;

use crate::error::CliError;
use crate::model_file::ModelFile;

/// Grid in model (standardized) coordinates matching a raw-unit box.
fn standardized_domain(file: &ModelFile, bounds: [f64; 4], resolution: usize) -> Result<(GridDomain, Matrix), CliError> {
    if file.input_dim != 2 {
        return Err(CliError::Config(format!(
            "grid export needs a 2-D model, this one takes {} inputs",
            file.input_dim
        )));
    }
    let raw = GridDomain::new(vec![bounds[0], bounds[2]], vec![bounds[1], bounds[3]], resolution)?;
    let s = &file.standardization;
    let lower = (0..2).map(|a| (raw.lower[a] - s.mean[a]) / s.std[a]).collect();
    let upper = (0..2).map(|a| (raw.upper[a] - s.mean[a]) / s.std[a]).collect();
    Ok((GridDomain::new(lower, upper, resolution)?, raw.points()))
}

/// Evaluates a saved model on a grid. Partition models report `h_1..h_k`,
/// baselines report class probabilities.
pub fn evaluate_grid(file: &ModelFile, bounds: [f64; 4], resolution: usize) -> Result<(Matrix, GridEval<f64>, &'static str), CliError> {
    let (domain, raw) = standardized_domain(file, bounds, resolution)?;
    let model = file.model()?;
    let (eval, prefix) = match &model {
        AnyModel::Punn(m) => (grid_eval(m, &domain)?, "h"),
        AnyModel::Mlp(m) => (grid_eval_proba(m, &domain)?, "p"),
    };
    Ok((raw, eval, prefix))
}

/// Writes `x1,x2,h_1..h_k,class`, one row per grid point, first axis
/// fastest.
pub fn write_grid(file: &ModelFile, bounds: [f64; 4], resolution: usize, out: &Path) -> Result<usize, CliError> {
    let (raw, eval, prefix) = evaluate_grid(file, bounds, resolution)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    let k = eval.values.cols();
    let cols: Vec<String> = (1..=k).map(|i| format!("{prefix}_{i}")).collect();
    writeln!(w, "x1,x2,{},class", cols.join(","))?;
    for (i, (p, h)) in raw.iter_rows().zip(eval.values.iter_rows()).enumerate() {
        write!(w, "{},{}", p[0], p[1])?;
        for v in h {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", eval.predicted[i])?;
    }
    w.flush()?;
    Ok(raw.rows())
}

#[derive(Debug, Clone, Serialize)]
pub struct Explanation {
    pub input: Vec<f64>,
    pub standardized: Vec<f64>,
    pub class_names: Option<Vec<String>>,
    #[serde(flatten)]
    pub trace: DecisionTrace<f64>,
}

impl Explanation {
    /// Human-readable rendering of the trace.
    pub fn render(&self) -> String {
        let name = |c: usize| {
            self.class_names
                .as_ref()
                .and_then(|n| n.get(c).cloned())
                .unwrap_or_else(|| c.to_string())
        };
        let mut s = String::new();
        for st in &self.trace.steps {
            s.push_str(&format!(
                "gate {}: mass {:.6} -> accept {:.6} (g = {:.6}, class {}), pass on {:.6}\n",
                st.gate + 1,
                st.mass_before,
                st.accepted_mass,
                st.acceptance,
                name(st.class),
                st.mass_after
            ));
        }
        s.push_str(&format!(
            "remaining mass {:.6} -> class {}\n",
            self.trace.final_mass,
            name(self.trace.final_class)
        ));
        let probs: Vec<String> = self.trace.class_probs.iter().map(|p| format!("{p:.6}")).collect();
        s.push_str(&format!("class probabilities [{}]\n", probs.join(", ")));
        s.push_str(&format!("predicted class {}\n", name(self.trace.predicted)));
        s
    }
}

/// Hierarchical decision trace for a raw input vector.
pub fn explain(file: &ModelFile, input: &[f64]) -> Result<Explanation, CliError> {
    let x = file.standardize(input)?;
    let model = file.model()?;
    let Some(punn) = model.as_punn() else {
        return Err(CliError::Config("explain needs a partition model, not a softmax baseline".into()));
    };
    Ok(Explanation {
        input: input.to_vec(),
        standardized: x.clone(),
        class_names: file.class_names.clone(),
        trace: punn.explain(&x)?,
    })
}
