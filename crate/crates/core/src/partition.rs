//! Stick-breaking partition of unity over an ordered list of gates.
//!
//! With gates `g_1..g_{k-1}` the partition functions are
//! `h_i = g_i * prod_{j<i} (1 - g_j)` for `i < k` and
//! `h_k = prod_{j<k} (1 - g_j)`. They are nonnegative and sum to one at
//! every input. Partitions are aggregated into classes through a surjective
//! map `pi`.

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, Classifier};
use crate::error::{shape_err, PunnError, Result};
use crate::gates::{GateCache, GateSpec};
use crate::numeric::DenseMatrix;
use crate::scalar::Scalar;

/// Default stabilizer inside `log(p + eps)`.
pub const DEFAULT_LOSS_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_LOSS_EPSILON,
        }
    }
}

/// `pi(i) = i mod classes`.
pub fn balanced_class_map(partitions: usize, classes: usize) -> Vec<usize> {
    (0..partitions).map(|i| i % classes).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PartitionModel<T> {
    gates: Vec<GateSpec<T>>,
    classes: usize,
    class_map: Vec<usize>,
}

impl<T: Scalar> PartitionModel<T> {
    pub fn new(gates: Vec<GateSpec<T>>, classes: usize, class_map: Vec<usize>) -> Result<Self> {
        let k = gates.len() + 1;
        if k < 2 {
            return Err(PunnError::Config("a partition needs at least one gate".into()));
        }
        if classes < 2 || classes > k {
            return Err(PunnError::Config(format!(
                "{k} partitions cannot cover {classes} classes"
            )));
        }
        if class_map.len() != k {
            return Err(PunnError::Config(format!(
                "class map has {} entries for {k} partitions",
                class_map.len()
            )));
        }
        let mut hit = vec![false; classes];
        for &c in &class_map {
            if c >= classes {
                return Err(PunnError::Config(format!("class map entry {c} out of range")));
            }
            hit[c] = true;
        }
        if hit.iter().any(|h| !h) {
            return Err(PunnError::Config("class map is not surjective".into()));
        }
        if k == classes && class_map.iter().enumerate().any(|(i, &c)| i != c) {
            return Err(PunnError::Config(
                "with one partition per class the class map must be the identity".into(),
            ));
        }
        let d = gates[0].input_dim();
        if gates.iter().any(|g| g.input_dim() != d) {
            return Err(shape_err("all gates must share the input dimension"));
        }
        Ok(Self {
            gates,
            classes,
            class_map,
        })
    }

    /// One partition per class.
    pub fn with_identity(gates: Vec<GateSpec<T>>) -> Result<Self> {
        let k = gates.len() + 1;
        Self::new(gates, k, (0..k).collect())
    }

    pub fn gates(&self) -> &[GateSpec<T>] {
        &self.gates
    }

    pub fn gates_mut(&mut self) -> &mut [GateSpec<T>] {
        &mut self.gates
    }

    pub fn partitions(&self) -> usize {
        self.gates.len() + 1
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_map(&self) -> &[usize] {
        &self.class_map
    }

    pub fn input_dim(&self) -> usize {
        self.gates[0].input_dim()
    }

    /// Gate values, `batch x (k - 1)`, plus per-gate caches.
    pub fn gate_values(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Vec<GateCache<T>>)> {
        let m = self.gates.len();
        let mut g = DenseMatrix::zeros(x.rows(), m);
        let mut caches = Vec::with_capacity(m);
        for (j, gate) in self.gates.iter().enumerate() {
            let (vals, cache) = gate.forward(x)?;
            for (b, v) in vals.into_iter().enumerate() {
                g.set(b, j, v);
            }
            caches.push(cache);
        }
        Ok((g, caches))
    }

    /// Partition functions, `batch x k`.
    pub fn partition_batch(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let (g, _) = self.gate_values(x)?;
        let k = self.partitions();
        let mut h = DenseMatrix::zeros(x.rows(), k);
        for b in 0..x.rows() {
            partition_into(g.row(b), h.row_mut(b));
        }
        Ok(h)
    }

    /// Hierarchical accept/reject trace for one input.
    pub fn explain(&self, x: &[T]) -> Result<DecisionTrace<T>> {
        let (h, cache) = partition_forward(self, x)?;
        let probs = class_probs(&h, &self.class_map, self.classes)?;
        let mut steps = Vec::with_capacity(cache.gates.len());
        let mut remaining = T::one();
        for (i, &g) in cache.gates.iter().enumerate() {
            let accepted = remaining * g;
            let after = remaining * (T::one() - g);
            steps.push(TraceStep {
                gate: i,
                class: self.class_map[i],
                acceptance: g,
                mass_before: remaining,
                accepted_mass: accepted,
                mass_after: after,
            });
            remaining = after;
        }
        Ok(DecisionTrace {
            steps,
            final_class: self.class_map[self.partitions() - 1],
            final_mass: remaining,
            predicted: argmax(&probs),
            partitions: h,
            class_probs: probs,
        })
    }
}

/// Partition functions for a vector of gate values (no model needed).
pub fn partition_from_gates<T: Scalar>(g: &[T]) -> Vec<T> {
    let mut h = vec![T::zero(); g.len() + 1];
    partition_into(g, &mut h);
    h
}

fn partition_into<T: Scalar>(g: &[T], h: &mut [T]) {
    let mut remaining = T::one();
    for (hi, &gi) in h.iter_mut().zip(g) {
        *hi = remaining * gi;
        remaining = remaining * (T::one() - gi);
    }
    h[g.len()] = remaining;
}

/// Gradient with respect to the gate values given `dL/dh`.
///
/// Uses the suffix recursion `R_{k-1} = a_k`,
/// `R_j = a_{j+1} g_{j+1} + (1 - g_{j+1}) R_{j+1}` and
/// `dL/dg_j = P_{j-1} (a_j - R_j)` with prefix products `P`, so no division
/// by `1 - g_j` is ever needed.
pub fn partition_backward<T: Scalar>(g: &[T], dh: &[T], dg: &mut [T]) {
    let m = g.len();
    debug_assert_eq!(dh.len(), m + 1);
    let mut prefix = Vec::with_capacity(m);
    let mut p = T::one();
    for &gi in g {
        prefix.push(p);
        p = p * (T::one() - gi);
    }
    let mut r = dh[m];
    for j in (0..m).rev() {
        dg[j] = prefix[j] * (dh[j] - r);
        r = dh[j] * g[j] + (T::one() - g[j]) * r;
    }
}

/// Cached gate values of a single-point forward pass.
#[derive(Debug, Clone)]
pub struct PartitionCache<T> {
    pub gates: Vec<T>,
}

pub fn partition_forward<T: Scalar>(model: &PartitionModel<T>, x: &[T]) -> Result<(Vec<T>, PartitionCache<T>)> {
    if x.len() != model.input_dim() {
        return Err(shape_err(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
    let (g, _) = model.gate_values(&batch)?;
    let gates = g.into_vec();
    Ok((partition_from_gates(&gates), PartitionCache { gates }))
}

/// `p_c = sum_{pi(i) = c} h_i`.
pub fn class_probs<T: Scalar>(h: &[T], class_map: &[usize], classes: usize) -> Result<Vec<T>> {
    if h.len() != class_map.len() {
        return Err(shape_err("partition values and class map differ in length"));
    }
    let mut p = vec![T::zero(); classes];
    for (&v, &c) in h.iter().zip(class_map) {
        if c >= classes {
            return Err(PunnError::Config(format!("class map entry {c} out of range")));
        }
        p[c] = p[c] + v;
    }
    Ok(p)
}

/// Most probable class (lowest index on ties) and class probabilities.
pub fn predict<T: Scalar>(model: &PartitionModel<T>, x: &[T]) -> Result<(usize, Vec<T>)> {
    let (h, _) = partition_forward(model, x)?;
    let p = class_probs(&h, model.class_map(), model.classes())?;
    Ok((argmax(&p), p))
}

/// `|sum_{j<=m} h_j - (1 - prod_{j<=m} (1 - g_j))|`.
pub fn stick_breaking_check<T: Scalar>(g: &[T], m: usize) -> Result<T> {
    if m == 0 || m > g.len() {
        return Err(PunnError::Input(format!(
            "m must lie in 1..={}, got {m}",
            g.len()
        )));
    }
    let h = partition_from_gates(g);
    let allocated: T = h[..m].iter().copied().sum();
    let rejected = g[..m].iter().fold(T::one(), |acc, &gj| acc * (T::one() - gj));
    Ok((allocated - (T::one() - rejected)).abs())
}

/// Mean `-log(p_y + eps)` over the batch and its gradient in all gate
/// parameters (flattened gate by gate).
pub fn nll_loss<T: Scalar>(
    model: &PartitionModel<T>,
    x: &DenseMatrix<T>,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(T, Vec<T>)> {
    let batch = x.rows();
    if batch == 0 {
        return Err(PunnError::Input("empty batch".into()));
    }
    if labels.len() != batch {
        return Err(shape_err(format!(
            "{} labels for {batch} samples",
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.classes()) {
        return Err(PunnError::Input(format!("label {y} out of range")));
    }
    let eps = T::lit(cfg.epsilon);
    let m = model.gates.len();
    let k = m + 1;
    let (g, caches) = model.gate_values(x)?;
    let inv_b = T::one() / T::lit(batch as f64);

    let mut loss = T::zero();
    let mut upstream = DenseMatrix::zeros(m, batch);
    let mut h = vec![T::zero(); k];
    let mut dh = vec![T::zero(); k];
    let mut dg = vec![T::zero(); m];
    for b in 0..batch {
        let gb = g.row(b);
        partition_into(gb, &mut h);
        let y = labels[b];
        let py: T = h
            .iter()
            .zip(&model.class_map)
            .filter(|(_, &c)| c == y)
            .map(|(&v, _)| v)
            .sum();
        loss = loss - (py + eps).ln();
        let dpy = -inv_b / (py + eps);
        for (d, &c) in dh.iter_mut().zip(&model.class_map) {
            *d = if c == y { dpy } else { T::zero() };
        }
        partition_backward(gb, &dh, &mut dg);
        for j in 0..m {
            upstream.set(j, b, dg[j]);
        }
    }
    loss = loss * inv_b;
    if !loss.is_finite() {
        return Err(PunnError::Numeric(format!("loss is {loss}")));
    }

    let mut grad = vec![T::zero(); model.param_count_total()];
    let mut off = 0;
    for (j, gate) in model.gates.iter().enumerate() {
        let n = gate.param_count();
        gate.backward(x, &caches[j], upstream.row(j), &mut grad[off..off + n])?;
        off += n;
    }
    Ok((loss, grad))
}

impl<T: Scalar> PartitionModel<T> {
    fn param_count_total(&self) -> usize {
        self.gates.iter().map(GateSpec::param_count).sum()
    }
}

impl<T: Scalar> Classifier<T> for PartitionModel<T> {
    fn input_dim(&self) -> usize {
        PartitionModel::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn param_count(&self) -> usize {
        self.param_count_total()
    }

    fn write_params(&self, out: &mut Vec<T>) {
        for g in &self.gates {
            g.write_params(out);
        }
    }

    fn read_params(&mut self, src: &[T]) -> Result<usize> {
        let total = self.param_count_total();
        if src.len() < total {
            return Err(shape_err(format!("model needs {total} parameters, got {}", src.len())));
        }
        let mut off = 0;
        for g in &mut self.gates {
            off += g.read_params(&src[off..])?;
        }
        Ok(off)
    }

    fn predict_proba(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let h = self.partition_batch(x)?;
        let mut p = DenseMatrix::zeros(x.rows(), self.classes);
        for b in 0..x.rows() {
            let row = p.row_mut(b);
            for (&v, &c) in h.row(b).iter().zip(&self.class_map) {
                row[c] = row[c] + v;
            }
        }
        Ok(p)
    }

    fn loss_and_grad(&self, x: &DenseMatrix<T>, labels: &[usize], eps: T) -> Result<(T, Vec<T>)> {
        nll_loss(self, x, labels, &LossConfig { epsilon: eps.as_f64() })
    }
}

/// One gate's accept/reject decision in a [`DecisionTrace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep<T> {
    pub gate: usize,
    /// Class receiving the mass this gate accepts.
    pub class: usize,
    pub acceptance: T,
    pub mass_before: T,
    pub accepted_mass: T,
    pub mass_after: T,
}

/// Explanation of a prediction as a sequence of gate decisions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTrace<T> {
    pub steps: Vec<TraceStep<T>>,
    /// Class of the last partition, which receives whatever every gate rejected.
    pub final_class: usize,
    pub final_mass: T,
    pub partitions: Vec<T>,
    pub class_probs: Vec<T>,
    pub predicted: usize,
}
