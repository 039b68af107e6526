//! Constructive density demo.
//!
//! Any continuous probability map `p: K -> simplex` that stays in the open
//! simplex is reproduced exactly by gates `gamma_i = p_i / sum_{j>=i} p_j`.
//! Writing `gamma_i = sigmoid(phi_i)` turns the classification problem into
//! `k - 1` independent regression problems, one per gate argument. This
//! module computes the targets on a grid, fits MLPs to them by least
//! squares and measures how far the fitted partition drifts from `p`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, PunnError, Result};
use crate::gates::{ActivationKind, GateArgument, GateSpec};
use crate::numeric::{AdamConfig, AdamState, DenseMatrix, Layer, MlpParams, Rng};
use crate::numeric::rng::{STREAM_INIT, STREAM_SHUFFLE};
use crate::partition::{partition_from_gates, PartitionModel};
use crate::scalar::{logit, sigmoid, Scalar};

/// Targets are clamped into `[GAMMA_CLAMP, 1 - GAMMA_CLAMP]` before the logit.
pub const GAMMA_CLAMP: f64 = 1e-9;

/// Axis-aligned box sampled on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl GridDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(shape_err("grid bounds need one lower and one upper value per axis"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(PunnError::Input("grid bounds must be finite with lower < upper".into()));
        }
        if resolution < 2 {
            return Err(PunnError::Input("grid resolution must be at least 2".into()));
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// Square grid `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], resolution)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid points, `len() x dim`. The first axis varies fastest, so in two
    /// dimensions each block of `resolution` rows shares one `x2` value.
    pub fn points<T: Scalar>(&self) -> DenseMatrix<T> {
        let d = self.dim();
        let n = self.len();
        let r = self.resolution;
        let step: Vec<f64> = (0..d)
            .map(|a| (self.upper[a] - self.lower[a]) / (r - 1) as f64)
            .collect();
        let mut out = DenseMatrix::zeros(n, d);
        for i in 0..n {
            let mut idx = i;
            let row = out.row_mut(i);
            for a in 0..d {
                let j = idx % r;
                idx /= r;
                row[a] = T::lit(if j == r - 1 {
                    self.upper[a]
                } else {
                    self.lower[a] + j as f64 * step[a]
                });
            }
        }
        out
    }
}

/// Probability map sampled on a grid; every row lies in the open simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMapGrid<T> {
    pub domain: GridDomain,
    pub points: DenseMatrix<T>,
    /// `points x k`
    pub values: DenseMatrix<T>,
}

impl<T: Scalar> ProbabilityMapGrid<T> {
    pub fn new(domain: GridDomain, values: DenseMatrix<T>) -> Result<Self> {
        if values.rows() != domain.len() {
            return Err(shape_err(format!(
                "{} probability rows for {} grid points",
                values.rows(),
                domain.len()
            )));
        }
        if values.cols() < 2 {
            return Err(shape_err("a probability map needs at least two components"));
        }
        let tol = T::lit(1e-12);
        for (i, row) in values.iter_rows().enumerate() {
            if row.iter().any(|&v| !(v > T::zero())) {
                return Err(PunnError::Domain(format!(
                    "grid point {i} has a component that is not strictly positive"
                )));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(PunnError::Domain(format!("grid point {i} sums to {s}")));
            }
        }
        let points = domain.points();
        Ok(Self {
            domain,
            points,
            values,
        })
    }

    /// Evaluates `f` at every grid point.
    pub fn from_fn<F>(domain: GridDomain, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Vec<T>,
    {
        let points: DenseMatrix<T> = domain.points();
        let rows: Vec<Vec<T>> = points.iter_rows().map(&mut f).collect();
        Self::new(domain, DenseMatrix::from_rows(&rows)?)
    }

    /// The partition functions of `model` on the grid.
    pub fn from_model(domain: GridDomain, model: &PartitionModel<T>) -> Result<Self> {
        if model.input_dim() != domain.dim() {
            return Err(shape_err("model and grid dimensions differ"));
        }
        let values = model.partition_batch(&domain.points())?;
        Self::new(domain, values)
    }

    pub fn components(&self) -> usize {
        self.values.cols()
    }
}

/// Gate targets `gamma_1..gamma_{k-1}` per grid point, all in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGrid<T> {
    /// `points x (k - 1)`
    pub values: DenseMatrix<T>,
}

/// `gamma_i = p_i / sum_{j>=i} p_j` for `i < k`.
pub fn gamma_from_pmap<T: Scalar>(p: &ProbabilityMapGrid<T>) -> Result<GammaGrid<T>> {
    let k = p.components();
    let mut out = DenseMatrix::zeros(p.values.rows(), k - 1);
    for (n, row) in p.values.iter_rows().enumerate() {
        let gamma = gamma_point(row).map_err(|e| match e {
            PunnError::Domain(m) => PunnError::Domain(format!("grid point {n}: {m}")),
            other => other,
        })?;
        out.row_mut(n).copy_from_slice(&gamma);
    }
    Ok(GammaGrid { values: out })
}

/// The gamma recursion for a single probability vector.
pub fn gamma_point<T: Scalar>(p: &[T]) -> Result<Vec<T>> {
    let k = p.len();
    if k < 2 {
        return Err(shape_err("need at least two components"));
    }
    if p.iter().any(|&v| !(v > T::zero())) {
        return Err(PunnError::Domain("component is not strictly positive".into()));
    }
    let mut tail: T = p.iter().copied().sum();
    let mut gamma = Vec::with_capacity(k - 1);
    for &pi in &p[..k - 1] {
        if !(tail > T::zero()) {
            return Err(PunnError::Domain("tail sum is not positive".into()));
        }
        gamma.push(pi / tail);
        tail = tail - pi;
    }
    Ok(gamma)
}

/// Feeds the gamma grid through the partition recursion.
pub fn exact_reconstruct<T: Scalar>(gamma: &GammaGrid<T>) -> Result<DenseMatrix<T>> {
    let m = gamma.values.cols();
    let mut h = DenseMatrix::zeros(gamma.values.rows(), m + 1);
    for (n, row) in gamma.values.iter_rows().enumerate() {
        if row.iter().any(|&g| !(g > T::zero() && g < T::one())) {
            return Err(PunnError::Domain(format!("gamma at grid point {n} leaves (0, 1)")));
        }
        h.row_mut(n).copy_from_slice(&partition_from_gates(row));
    }
    Ok(h)
}

/// Gate-argument targets and how many gammas had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTargets<T> {
    /// `points x (k - 1)`
    pub values: DenseMatrix<T>,
    pub clamped: usize,
}

/// `phi_i = g^{-1}(gamma_i)`; only the sigmoid is invertible onto `(0, 1)`.
pub fn phi_targets<T: Scalar>(gamma: &GammaGrid<T>, activation: ActivationKind) -> Result<PhiTargets<T>> {
    if activation != ActivationKind::Sigmoid {
        return Err(PunnError::Unsupported(format!(
            "{} is not strictly monotone onto (0, 1)",
            activation.name()
        )));
    }
    let lo = T::lit(GAMMA_CLAMP);
    let hi = T::one() - lo;
    let mut clamped = 0;
    let values = DenseMatrix::from_vec(
        gamma.values.rows(),
        gamma.values.cols(),
        gamma
            .values
            .as_slice()
            .iter()
            .map(|&g| {
                if !(g > T::zero() && g < T::one()) {
                    return Err(PunnError::Domain(format!("gamma = {g} has no finite logit")));
                }
                let c = if g < lo {
                    clamped += 1;
                    lo
                } else if g > hi {
                    clamped += 1;
                    hi
                } else {
                    g
                };
                Ok(logit(c))
            })
            .collect::<Result<Vec<T>>>()?,
    )?;
    Ok(PhiTargets { values, clamped })
}

/// Network used for each gate argument in the density demo.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitNet {
    /// A single bias; its least-squares fit is the target mean.
    BiasOnly,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub net: FitNet,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains on the full grid each step.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            net: FitNet::Mlp { hidden: vec![16] },
            epochs: 2000,
            learning_rate: 0.01,
            batch_size: None,
            seed: 42,
        }
    }
}

/// Outcome of [`fit_density_demo`].
#[derive(Debug, Clone)]
pub struct DensityFit<T> {
    /// Partition model with the fitted sigmoid gates.
    pub model: PartitionModel<T>,
    /// `max_i max_x |h~_i(x) - p_i(x)|` over the grid.
    pub sup_error: f64,
    /// `max_x |sigmoid(theta_j(x)) - sigmoid(phi_j(x))|` per gate.
    pub gate_errors: Vec<f64>,
    /// Final mean squared error of each argument fit.
    pub argument_mse: Vec<f64>,
    /// Number of gamma values clamped before the logit.
    pub clamped: usize,
    pub param_count: usize,
}

impl<T> DensityFit<T> {
    /// `sum_j gate_errors[j]`, which bounds `sup_error`.
    pub fn telescoping_bound(&self) -> f64 {
        self.gate_errors.iter().sum()
    }
}

/// Fits one MLP per gate argument to the logit targets of `p` and reports
/// the resulting partition error on the grid.
pub fn fit_density_demo<T: Scalar>(p: &ProbabilityMapGrid<T>, cfg: &FitConfig) -> Result<DensityFit<T>> {
    if cfg.epochs == 0 {
        return Err(PunnError::Config("epochs must be at least 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(PunnError::Config("learning rate must be positive".into()));
    }
    let gamma = gamma_from_pmap(p)?;
    let phi = phi_targets(&gamma, ActivationKind::Sigmoid)?;
    let x = &p.points;
    let d = x.cols();
    let m = gamma.values.cols();
    let n = x.rows();
    let mut init_rng = Rng::with_stream(cfg.seed, STREAM_INIT);
    let mut shuffle_rng = Rng::with_stream(cfg.seed, STREAM_SHUFFLE);

    let mut gates = Vec::with_capacity(m);
    let mut argument_mse = Vec::with_capacity(m);
    for j in 0..m {
        let target: Vec<T> = (0..n).map(|i| phi.values.get(i, j)).collect();
        let (net, mse) = match &cfg.net {
            FitNet::BiasOnly => fit_bias(d, &target)?,
            FitNet::Mlp { hidden } => {
                let mut sizes = vec![d];
                sizes.extend_from_slice(hidden);
                sizes.push(1);
                let net = MlpParams::init(&sizes, &mut init_rng)?;
                fit_mlp(net, x, &target, cfg, &mut shuffle_rng, j)?
            }
        };
        argument_mse.push(mse);
        gates.push(GateSpec::new(ActivationKind::Sigmoid, GateArgument::Mlp(net))?);
    }

    let k = m + 1;
    let model = PartitionModel::new(gates, k, (0..k).collect())?;
    let (g, _) = model.gate_values(x)?;
    let mut gate_errors = vec![0.0f64; m];
    let mut sup_error = 0.0f64;
    for i in 0..n {
        let gi = g.row(i);
        for j in 0..m {
            let e = (gi[j] - sigmoid(phi.values.get(i, j))).abs().as_f64();
            gate_errors[j] = gate_errors[j].max(e);
        }
        let h = partition_from_gates(gi);
        for (hv, &pv) in h.iter().zip(p.values.row(i)) {
            sup_error = sup_error.max((*hv - pv).abs().as_f64());
        }
    }
    let param_count = model.gates().iter().map(GateSpec::param_count).sum();
    Ok(DensityFit {
        model,
        sup_error,
        gate_errors,
        argument_mse,
        clamped: phi.clamped,
        param_count,
    })
}

fn fit_bias<T: Scalar>(d: usize, target: &[T]) -> Result<(MlpParams<T>, f64)> {
    let nf = T::lit(target.len() as f64);
    let mean = target.iter().copied().sum::<T>() / nf;
    let mse = target.iter().map(|&t| (t - mean) * (t - mean)).sum::<T>() / nf;
    let layer = Layer::new(DenseMatrix::zeros(1, d), vec![mean])?;
    Ok((MlpParams::new(vec![layer])?, mse.as_f64()))
}

fn fit_mlp<T: Scalar>(
    mut net: MlpParams<T>,
    x: &DenseMatrix<T>,
    target: &[T],
    cfg: &FitConfig,
    rng: &mut Rng,
    gate: usize,
) -> Result<(MlpParams<T>, f64)> {
    let n = x.rows();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut params = Vec::with_capacity(net.param_count());
    net.write_params(&mut params);
    let mut adam = AdamState::new(params.len(), AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grad = vec![T::zero(); params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if batch < n {
            rng.shuffle(&mut order);
        }
        for chunk in order.chunks(batch) {
            let (xb, tb) = if batch < n {
                (x.select_rows(chunk), chunk.iter().map(|&i| target[i]).collect::<Vec<T>>())
            } else {
                (x.clone(), target.to_vec())
            };
            let (out, cache) = net.forward(&xb)?;
            let inv = T::one() / T::lit(chunk.len() as f64);
            let mut loss = T::zero();
            let mut upstream = DenseMatrix::zeros(chunk.len(), 1);
            for (i, (&o, &t)) in out.as_slice().iter().zip(&tb).enumerate() {
                let r = o - t;
                loss = loss + r * r;
                upstream.set(i, 0, r * inv);
            }
            if !loss.is_finite() {
                return Err(PunnError::Numeric(format!(
                    "least-squares loss for gate {gate} became {loss} at epoch {epoch}"
                )));
            }
            grad.iter_mut().for_each(|g| *g = T::zero());
            net.backward(&cache, &upstream, &mut grad, false)?;
            adam.step(&mut params, &grad)?;
            net.read_params(&params)?;
        }
    }
    let (out, _) = net.forward(x)?;
    let mse = out
        .as_slice()
        .iter()
        .zip(target)
        .map(|(&o, &t)| ((o - t) * (o - t)).as_f64())
        .sum::<f64>()
        / n as f64;
    Ok((net, mse))
}

/// One row of a convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub param_count: usize,
    pub sup_error: f64,
    pub telescoping_bound: f64,
    pub clamped: usize,
}

/// Refits `p` once per hidden-layer configuration.
pub fn density_sweep<T: Scalar>(
    p: &ProbabilityMapGrid<T>,
    widths: &[Vec<usize>],
    base: &FitConfig,
) -> Result<Vec<SweepPoint>> {
    widths
        .iter()
        .map(|hidden| {
            let cfg = FitConfig {
                net: FitNet::Mlp { hidden: hidden.clone() },
                ..base.clone()
            };
            let fit = fit_density_demo(p, &cfg)?;
            Ok(SweepPoint {
                hidden: hidden.clone(),
                epochs: cfg.epochs,
                param_count: fit.param_count,
                sup_error: fit.sup_error,
                telescoping_bound: fit.telescoping_bound(),
                clamped: fit.clamped,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        let g = gamma_point(&[0.2f64, 0.3, 0.5]).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-15 && (g[1] - 0.375).abs() < 1e-15);
        assert_eq!(gamma_point(&[0.35f64, 0.65]).unwrap(), vec![0.35]);
        let g = gamma_point(&[0.25f64; 4]).unwrap();
        for (a, b) in g.iter().zip([0.25, 1.0 / 3.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(gamma_point(&[0.0f64, 1.0]), Err(PunnError::Domain(_))));
    }

    #[test]
    fn reconstruct_examples() {
        let h = exact_reconstruct(&GammaGrid {
            values: DenseMatrix::from_rows(&[vec![0.2f64, 0.375], vec![0.9, 0.5]]).unwrap(),
        })
        .unwrap();
        for (a, b) in h.row(0).iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        let h = partition_from_gates(&[0.9f64]);
        assert!((h[0] - 0.9).abs() < 1e-15 && (h[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn phi_examples() {
        let gamma = GammaGrid {
            values: DenseMatrix::from_rows(&[vec![0.5f64], vec![sigmoid(2.0)]]).unwrap(),
        };
        let phi = phi_targets(&gamma, ActivationKind::Sigmoid).unwrap();
        assert_eq!(phi.values.get(0, 0), 0.0);
        assert!((phi.values.get(1, 0) - 2.0).abs() < 1e-12);
        assert_eq!(phi.clamped, 0);
        assert!(phi_targets(&gamma, ActivationKind::Gaussian).is_err());
        let edge = GammaGrid { values: DenseMatrix::from_rows(&[vec![1.0f64]]).unwrap() };
        assert!(matches!(phi_targets(&edge, ActivationKind::Sigmoid), Err(PunnError::Domain(_))));
        let tiny = GammaGrid { values: DenseMatrix::from_rows(&[vec![1e-12f64]]).unwrap() };
        assert_eq!(phi_targets(&tiny, ActivationKind::Sigmoid).unwrap().clamped, 1);
    }

    #[test]
    fn grid_corners() {
        let dom = GridDomain::cube(2, 0.0, 1.0, 2).unwrap();
        let pts: DenseMatrix<f64> = dom.points();
        assert_eq!(pts.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(GridDomain::cube(2, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn constant_map_bias_only() {
        let dom = GridDomain::cube(2, -1.0, 1.0, 10).unwrap();
        let p = ProbabilityMapGrid::from_fn(dom, |_: &[f64]| vec![0.3, 0.7]).unwrap();
        let cfg = FitConfig {
            net: FitNet::BiasOnly,
            ..FitConfig::default()
        };
        let fit = fit_density_demo(&p, &cfg).unwrap();
        assert!(fit.sup_error < 1e-6, "{}", fit.sup_error);
        assert_eq!(fit.param_count, 3);
    }

    #[test]
    fn rejects_boundary_maps() {
        let dom = GridDomain::cube(1, 0.0, 1.0, 3).unwrap();
        let err = ProbabilityMapGrid::from_fn(dom, |x: &[f64]| vec![x[0], 1.0 - x[0]]);
        assert!(matches!(err, Err(PunnError::Domain(_))));
    }
}
