//! `density-demo`: refit a known probability map with MLP gates of growing
//! width and report the grid error.

use punn::constructive::{density_sweep, FitConfig, GridDomain, ProbabilityMapGrid, SweepPoint};
use punn::numeric::rng::STREAM_INIT;
use punn::scalar::sigmoid;
use punn::{ActivationKind, GateShape, GateSpec, PartitionModel, Rng};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Probability map to reconstruct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Partition functions of a random sigmoid-MLP partition model.
    RandomPunn,
    /// Two classes with `p_1 = sigmoid(3 x_1)`.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySetup {
    pub target: Target,
    pub partitions: usize,
    /// Hidden width of the generating model's gates.
    pub target_hidden: usize,
    pub lower: f64,
    pub upper: f64,
    pub resolution: usize,
    pub widths: Vec<usize>,
    pub fit: FitConfig,
}

impl Default for DensitySetup {
    fn default() -> Self {
        Self {
            target: Target::RandomPunn,
            partitions: 3,
            target_hidden: 8,
            lower: -2.0,
            upper: 2.0,
            resolution: 40,
            widths: vec![2, 4, 8, 16],
            fit: FitConfig::default(),
        }
    }
}

/// Builds the target map on the grid.
pub fn target_map(setup: &DensitySetup) -> Result<ProbabilityMapGrid<f64>, CliError> {
    let domain = GridDomain::cube(2, setup.lower, setup.upper, setup.resolution)?;
    match setup.target {
        Target::RandomPunn => {
            if setup.partitions < 2 {
                return Err(CliError::Config("partitions: need at least 2".into()));
            }
            // a different stream from the fit so target and fit never share draws
            let mut rng = Rng::with_stream(setup.fit.seed.wrapping_add(1_000_003), STREAM_INIT);
            let shape = GateShape::Mlp { hidden: vec![setup.target_hidden] };
            let gates = (0..setup.partitions - 1)
                .map(|_| GateSpec::init(ActivationKind::Sigmoid, &shape, 2, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let model = PartitionModel::with_identity(gates)?;
            Ok(ProbabilityMapGrid::from_model(domain, &model)?)
        }
        Target::Logistic => Ok(ProbabilityMapGrid::from_fn(domain, |x: &[f64]| {
            let p = sigmoid(3.0 * x[0]);
            vec![p, 1.0 - p]
        })?),
    }
}

pub fn run_density(setup: &DensitySetup) -> Result<Vec<SweepPoint>, CliError> {
    let p = target_map(setup)?;
    let widths: Vec<Vec<usize>> = setup.widths.iter().map(|&w| vec![w]).collect();
    Ok(density_sweep(&p, &widths, &setup.fit)?)
}
