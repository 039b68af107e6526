//! Synthetic generators, CSV and IDX ingestion, standardization and
//! stratified splitting.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, PunnError, Result};
use crate::numeric::rng::{STREAM_DATA, STREAM_SPLIT};
use crate::numeric::{DenseMatrix, Rng};
use crate::scalar::Scalar;

/// Labeled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: DenseMatrix<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub feature_names: Option<Vec<String>>,
    pub class_names: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: DenseMatrix<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(shape_err(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(PunnError::Input(format!("label {y} out of range for {classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            classes,
            feature_names: None,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Fails unless every class appears at least once.
    pub fn check_trainable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(PunnError::Input("dataset is empty".into()));
        }
        if let Some(c) = self.class_counts().iter().position(|&n| n == 0) {
            return Err(PunnError::Input(format!("class {c} has no samples")));
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Renumbers classes so that old class `order[i]` becomes class `i`.
    pub fn reorder_classes(&mut self, order: &[usize]) -> Result<()> {
        let mut new_of = vec![usize::MAX; self.classes];
        if order.len() != self.classes {
            return Err(PunnError::Config(format!(
                "class order lists {} classes, dataset has {}",
                order.len(),
                self.classes
            )));
        }
        for (new, &old) in order.iter().enumerate() {
            if old >= self.classes || new_of[old] != usize::MAX {
                return Err(PunnError::Config("class order must be a permutation".into()));
            }
            new_of[old] = new;
        }
        for y in &mut self.labels {
            *y = new_of[*y];
        }
        if let Some(names) = &self.class_names {
            self.class_names = Some(order.iter().map(|&o| names[o].clone()).collect());
        }
        Ok(())
    }

    /// First `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Moons,
    Circles,
    Xor,
    Helix,
    Rings,
}

impl SyntheticKind {
    pub fn classes(self) -> usize {
        match self {
            Self::Rings => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Moons => "moons",
            Self::Circles => "circles",
            Self::Xor => "xor",
            Self::Helix => "helix",
            Self::Rings => "rings",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = PunnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "moons" => Ok(Self::Moons),
            "circles" => Ok(Self::Circles),
            "xor" => Ok(Self::Xor),
            "helix" | "spiral" | "spirals" => Ok(Self::Helix),
            "rings" => Ok(Self::Rings),
            other => Err(PunnError::Config(format!("unknown synthetic dataset '{other}'"))),
        }
    }
}

/// Default additive noise of the synthetic generators.
pub const DEFAULT_NOISE: f64 = 0.1;

/// Point of helix arm `class` (0 or 1) at parameter `t`.
pub fn helix_point(class: usize, t: f64) -> [f64; 2] {
    let phase = if class == 0 { 0.0 } else { PI };
    [t * (t + phase).cos(), t * (t + phase).sin()]
}

/// Generates `n` samples of a synthetic dataset.
///
/// Sample `i` belongs to class `i mod C`, so class counts differ by at most
/// one. Moons and circles follow the scikit-learn layout: unit half-circles
/// with the second one shifted by `(1, -0.5)`, and circles with the inner one
/// scaled by 0.5 (outer circle is class 0). Rings put class `c` in the radial
/// band `[c, c + 0.6]`.
pub fn make_synthetic<T: Scalar>(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 {
        return Err(PunnError::Input("need at least two samples".into()));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(PunnError::Input(format!("noise must be a finite nonnegative value, got {noise}")));
    }
    let classes = kind.classes();
    let mut rng = Rng::with_stream(seed, STREAM_DATA);
    let per_class: Vec<usize> = (0..classes).map(|c| (n + classes - 1 - c) / classes).collect();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let j = i / classes;
        let m = per_class[c];
        let p = match kind {
            SyntheticKind::Moons => {
                let t = if m > 1 { PI * j as f64 / (m - 1) as f64 } else { 0.0 };
                if c == 0 {
                    [t.cos(), t.sin()]
                } else {
                    [1.0 - t.cos(), 0.5 - t.sin()]
                }
            }
            SyntheticKind::Circles => {
                let t = 2.0 * PI * j as f64 / m as f64;
                let r = if c == 0 { 1.0 } else { 0.5 };
                [r * t.cos(), r * t.sin()]
            }
            SyntheticKind::Xor => {
                // class 0 alternates (-1,-1)/(1,1), class 1 alternates (-1,1)/(1,-1)
                let s = if j % 2 == 0 { -1.0 } else { 1.0 };
                if c == 0 {
                    [s, s]
                } else {
                    [s, -s]
                }
            }
            SyntheticKind::Helix => helix_point(c, rng.uniform(0.0, 4.0 * PI)),
            SyntheticKind::Rings => {
                let r = rng.uniform(c as f64, c as f64 + 0.6);
                let a = rng.uniform(0.0, 2.0 * PI);
                [r * a.cos(), r * a.sin()]
            }
        };
        for v in p {
            let e = if noise > 0.0 { noise * rng.normal() } else { 0.0 };
            data.push(T::lit(v + e));
        }
        labels.push(c);
    }
    let mut ds = Dataset::new(DenseMatrix::from_vec(n, 2, data)?, labels, classes)?;
    ds.feature_names = Some(vec!["x1".into(), "x2".into()]);
    Ok(ds)
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        Self::Name("class".into())
    }
}

/// Reads a rectangular numeric table with one label column.
///
/// Labels may be arbitrary strings; they are numbered in order of first
/// appearance. A label column given by name requires a header; a negative
/// index is not supported, use the name instead.
pub fn load_csv<T: Scalar>(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset<T>> {
    let file = File::open(path).map_err(|e| PunnError::Parse(format!("{}: {e}", path.display())))?;
    read_csv(file, label, has_header).map_err(|e| match e {
        PunnError::Parse(m) => PunnError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv<T: Scalar, R: Read>(reader: R, label: &LabelColumn, has_header: bool) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Option<Vec<String>> = if has_header {
        let h = rdr.headers().map_err(|e| PunnError::Parse(e.to_string()))?;
        if h.is_empty() {
            return Err(PunnError::Parse("file is empty".into()));
        }
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut label_idx = match (label, &header) {
        (LabelColumn::Index(i), _) => Some(*i),
        (LabelColumn::Name(n), Some(h)) => Some(
            h.iter()
                .position(|c| c == n)
                .ok_or_else(|| PunnError::Parse(format!("no column named '{n}'")))?,
        ),
        (LabelColumn::Name(n), None) => {
            return Err(PunnError::Parse(format!("label column '{n}' given by name but the file has no header")))
        }
    };

    let mut data: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1 + usize::from(has_header);
        let rec = rec.map_err(|e| PunnError::Parse(format!("row {row}: {e}")))?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(PunnError::Parse(format!("row {row} has {} columns, expected {w}", rec.len())));
        }
        let li = *label_idx.get_or_insert(w - 1);
        if li >= w {
            return Err(PunnError::Parse(format!("label column {li} is outside the {w} columns")));
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == li {
                let next = codes.len();
                let code = *codes.entry(cell.to_string()).or_insert_with(|| {
                    names.push(cell.to_string());
                    next
                });
                labels.push(code);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    PunnError::Parse(format!("row {row}, column {}: '{cell}' is not a number", c + 1))
                })?;
                if !v.is_finite() {
                    return Err(PunnError::Parse(format!("row {row}, column {}: non-finite value", c + 1)));
                }
                data.push(T::lit(v));
            }
        }
    }
    if labels.is_empty() {
        return Err(PunnError::Parse("file has no data rows".into()));
    }
    let w = width.unwrap_or(0);
    let li = label_idx.unwrap_or(0);
    if w < 2 {
        return Err(PunnError::Parse("need at least one feature column besides the label".into()));
    }
    let mut ds = Dataset::new(DenseMatrix::from_vec(labels.len(), w - 1, data)?, labels, names.len())?;
    ds.feature_names = header.map(|h| h.into_iter().enumerate().filter(|(i, _)| *i != li).map(|(_, n)| n).collect());
    ds.class_names = Some(names);
    Ok(ds)
}

/// Per-feature affine map to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    /// Statistics of `x`. Constant features get mean 0 and std 1, so they
    /// pass through unchanged.
    pub fn fit<T: Scalar>(x: &DenseMatrix<T>) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(PunnError::Input("cannot standardize an empty dataset".into()));
        }
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v.as_f64() - m;
                *s += c * c;
            }
        }
        let mut std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
        for (m, s) in mean.iter_mut().zip(std.iter_mut()) {
            if *s <= 1e-12 * m.abs().max(1.0) {
                *m = 0.0;
                *s = 1.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply<T: Scalar>(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.cols() != self.mean.len() {
            return Err(shape_err(format!(
                "stats cover {} features, data has {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            self.apply_row(out.row_mut(r));
        }
        Ok(out)
    }

    pub fn apply_row<T: Scalar>(&self, row: &mut [T]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = T::lit((v.as_f64() - m) / s);
        }
    }
}

/// Standardizes `train` and every dataset in `others` with statistics of
/// `train` alone.
pub fn standardize<T: Scalar>(
    train: &Dataset<T>,
    others: &[&Dataset<T>],
) -> Result<(Dataset<T>, Vec<Dataset<T>>, StandardizationStats)> {
    let stats = StandardizationStats::fit(&train.features)?;
    let map = |ds: &Dataset<T>| -> Result<Dataset<T>> {
        Ok(Dataset {
            features: stats.apply(&ds.features)?,
            ..ds.clone()
        })
    };
    let t = map(train)?;
    let o = others.iter().map(|d| map(d)).collect::<Result<Vec<_>>>()?;
    Ok((t, o, stats))
}

/// Train and test index sets of a stratified split, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class test counts: `round(fraction * count)` per class, then nudged
/// (largest rounding residual first) until the total is within one of
/// `round(fraction * n)`. Each class keeps at least one training sample.
fn test_counts(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let target = (fraction * n as f64).round() as i64;
    let mut out: Vec<usize> = counts
        .iter()
        .map(|&c| ((fraction * c as f64).round() as usize).min(c.saturating_sub(1)))
        .collect();
    let residual = |i: usize, out: &[usize]| fraction * counts[i] as f64 - out[i] as f64;
    loop {
        let total = out.iter().sum::<usize>() as i64;
        if (total - target).abs() <= 1 {
            break;
        }
        let candidates = (0..counts.len()).filter(|&i| {
            if total < target {
                out[i] + 1 < counts[i]
            } else {
                out[i] > 0
            }
        });
        let pick = if total < target {
            candidates.max_by(|&a, &b| residual(a, &out).total_cmp(&residual(b, &out)))
        } else {
            candidates.min_by(|&a, &b| residual(a, &out).total_cmp(&residual(b, &out)))
        };
        match pick {
            Some(i) if total < target => out[i] += 1,
            Some(i) => out[i] -= 1,
            None => break,
        }
    }
    out
}

pub fn stratified_split_indices(labels: &[usize], classes: usize, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(PunnError::Split(format!("test fraction must lie in [0, 1), got {fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(PunnError::Split(format!("label {y} out of range")));
        }
        by_class[y].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.len() == 1) {
        return Err(PunnError::Split(format!("class {c} has a single sample")));
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = test_counts(&counts, fraction);
    let mut rng = Rng::with_stream(seed, STREAM_SPLIT);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (members, q) in by_class.iter_mut().zip(quota) {
        rng.shuffle(members);
        test.extend_from_slice(&members[..q]);
        train.extend_from_slice(&members[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn stratified_split<T: Scalar>(ds: &Dataset<T>, fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let idx = stratified_split_indices(&ds.labels, ds.classes, fraction, seed)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.test)))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| PunnError::Parse("IDX header is truncated".into()))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path).map_err(|e| PunnError::Parse(format!("{}: {e}", path.display())))?)
        .read_to_end(&mut buf)?;
    Ok(buf)
}

/// Parses an IDX image file: returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(PunnError::Parse(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let r = read_u32(bytes, 8)? as usize;
    let c = read_u32(bytes, 12)? as usize;
    let need = n * r * c;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(PunnError::Parse(format!(
            "IDX image file is truncated: {} of {need} pixel bytes",
            body.len()
        )));
    }
    Ok((n, r, c, body[..need].to_vec()))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(PunnError::Parse(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(PunnError::Parse(format!("IDX label file is truncated: {} of {n} labels", body.len())));
    }
    Ok(body[..n].to_vec())
}

/// Loads an image/label IDX pair as a dataset of flattened images with raw
/// pixel intensities (0-255).
pub fn load_idx_pair<T: Scalar>(images: &Path, labels: &Path) -> Result<Dataset<T>> {
    let (n, r, c, pixels) = parse_idx_images(&read_all(images)?)?;
    let ys = parse_idx_labels(&read_all(labels)?)?;
    if ys.len() != n {
        return Err(PunnError::Parse(format!("{} images but {} labels", n, ys.len())));
    }
    let classes = ys.iter().map(|&y| y as usize + 1).max().unwrap_or(0).max(10);
    let data = pixels.into_iter().map(|p| T::lit(f64::from(p))).collect();
    Dataset::new(
        DenseMatrix::from_vec(n, r * c, data)?,
        ys.into_iter().map(usize::from).collect(),
        classes,
    )
}

/// Standard MNIST file names inside a directory.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the MNIST train and test sets from `dir`.
pub fn load_mnist<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let f = |i: usize| dir.join(MNIST_FILES[i]);
    Ok((load_idx_pair(&f(0), &f(1))?, load_idx_pair(&f(2), &f(3))?))
}
