//! Multilabel one-vs-rest classifiers and the small closed-form utilities
//! of the training protocol.
//!
//! Class balancing uses `w_i = S / (C * count_i)` over the label matrix; in
//! a binary subproblem each positive sample carries its class weight and
//! negatives carry weight 1. The RBF-gamma helper computes
//! `1 / (F * Var[X])` with the population variance over all matrix entries,
//! and the CNN scaling resolver turns `(alpha, beta, gamma, phi)` ratios
//! into integer depth / width / downsample-interval settings.

mod logreg;
mod tree;

pub use logreg::LogisticBinary;
pub use tree::{DecisionTree, Forest};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};
use crate::seed::derive_seed;

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// S x C binary label matrix with class names.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    data: Vec<u8>,
    rows: usize,
    cols: usize,
    pub class_names: Vec<String>,
}

impl LabelMatrix {
    pub fn new(data: Vec<u8>, rows: usize, cols: usize, class_names: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::parameter("label data does not fill the matrix"));
        }
        if class_names.len() != cols {
            return Err(Error::parameter(format!(
                "{} class names for {} columns",
                class_names.len(),
                cols
            )));
        }
        if data.iter().any(|v| *v > 1) {
            return Err(Error::parameter("label entries must be 0 or 1"));
        }
        Ok(LabelMatrix {
            data,
            rows,
            cols,
            class_names,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, s: usize, c: usize) -> bool {
        self.data[s * self.cols + c] == 1
    }

    pub fn row(&self, s: usize) -> &[u8] {
        &self.data[s * self.cols..(s + 1) * self.cols]
    }

    /// Positive count of class `c`.
    pub fn column_sum(&self, c: usize) -> usize {
        (0..self.rows).filter(|s| self.get(*s, c)).count()
    }

    pub fn column(&self, c: usize) -> Vec<bool> {
        (0..self.rows).map(|s| self.get(s, c)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        LabelMatrix {
            data,
            rows: indices.len(),
            cols: self.cols,
            class_names: self.class_names.clone(),
        }
    }

    /// Drop columns, keeping `keep` (indices into the current class order).
    pub fn select_columns(&self, keep: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for s in 0..self.rows {
            for &c in keep {
                data.push(self.data[s * self.cols + c]);
            }
        }
        LabelMatrix {
            data,
            rows: self.rows,
            cols: keep.len(),
            class_names: keep.iter().map(|&c| self.class_names[c].clone()).collect(),
        }
    }
}

/// S x F real feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::parameter("feature data does not fill the matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("features must be finite"));
        }
        Ok(FeatureMatrix { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::parameter("no feature rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::parameter("feature rows differ in length"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Self::from_flat(data, rows.len(), cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, s: usize, f: usize) -> f64 {
        self.data[s * self.cols + f]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.cols..(s + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            data,
            rows: indices.len(),
            cols: self.cols,
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-form utilities
// ---------------------------------------------------------------------------

/// Balanced class weights: `w_i = S / (C * sum_j Y[j, i])`.
///
/// Errors when a class has no positive samples, naming the class.
pub fn balanced_class_weights(y: &LabelMatrix) -> Result<Vec<f64>> {
    let s = y.rows() as f64;
    let c = y.cols() as f64;
    (0..y.cols())
        .map(|i| {
            let count = y.column_sum(i);
            if count == 0 {
                Err(Error::parameter(format!(
                    "class {:?} has no positive samples",
                    y.class_names[i]
                )))
            } else {
                Ok(s / (c * count as f64))
            }
        })
        .collect()
}

/// RBF kernel scale: `gamma = 1 / (F * Var[X])` with the population
/// variance over all entries of `X`.
pub fn rbf_gamma(x: &FeatureMatrix) -> Result<f64> {
    if x.cols() == 0 {
        return Err(Error::parameter("feature matrix has no columns"));
    }
    let n = x.values().len() as f64;
    let mean = x.values().iter().sum::<f64>() / n;
    let var = x
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if !(var > 0.0) {
        return Err(Error::degenerate("zero variance feature matrix"));
    }
    Ok(1.0 / (x.cols() as f64 * var))
}

// ---------------------------------------------------------------------------
// CNN scaling arithmetic
// ---------------------------------------------------------------------------

/// Uniform-scaling hyperparameters and the phi=0 baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub d0: u32,
    pub w0: u32,
    pub r0: u32,
}

/// Resolved network size: raw ratios and rounded integer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingResolution {
    pub raw_depth: f64,
    pub raw_width: f64,
    pub raw_interval: f64,
    /// Layer count, round-half-up of `d0 * alpha^phi`, at least 1.
    pub depth: u32,
    /// Initial channel count, round-half-up of `w0 * beta^phi`, at least 1.
    pub width: u32,
    /// Downsampling interval, round-half-up of `r0 * gamma^phi`, at least 1.
    pub interval: u32,
    /// `depth - 1`: one layer is the stem convolution.
    pub residual_blocks: u32,
}

fn round_half_up(x: f64) -> u32 {
    ((x + 0.5).floor().max(1.0)) as u32
}

/// Resolve the depth / width / downsample-interval of the scaled network.
pub fn resolve_cnn_scaling(spec: &ScalingSpec) -> Result<ScalingResolution> {
    for (name, v) in [
        ("alpha", spec.alpha),
        ("beta", spec.beta),
        ("gamma", spec.gamma),
    ] {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::parameter(format!("{} must be >= 1, got {}", name, v)));
        }
    }
    if !spec.phi.is_finite() {
        return Err(Error::parameter("phi must be finite"));
    }
    if spec.d0 < 1 || spec.w0 < 1 || spec.r0 < 1 {
        return Err(Error::parameter("baselines d0, w0, r0 must be >= 1"));
    }
    let raw_depth = spec.d0 as f64 * spec.alpha.powf(spec.phi);
    let raw_width = spec.w0 as f64 * spec.beta.powf(spec.phi);
    let raw_interval = spec.r0 as f64 * spec.gamma.powf(spec.phi);
    let depth = round_half_up(raw_depth);
    Ok(ScalingResolution {
        raw_depth,
        raw_width,
        raw_interval,
        depth,
        width: round_half_up(raw_width),
        interval: round_half_up(raw_interval),
        residual_blocks: depth.saturating_sub(1),
    })
}

// ---------------------------------------------------------------------------
// One-vs-rest models
// ---------------------------------------------------------------------------

/// One trained binary submodel.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryModel {
    Logistic(LogisticBinary),
    Tree(DecisionTree),
    Forest(Forest),
}

impl BinaryModel {
    fn score(&self, row: &[f64]) -> f64 {
        match self {
            BinaryModel::Logistic(m) => m.predict_prob(row),
            BinaryModel::Tree(t) => t.predict_prob(row),
            BinaryModel::Forest(f) => f.predict_prob(row),
        }
    }
}

/// A multilabel one-vs-rest model: one binary submodel and one decision
/// threshold per class (0.5 until calibrated).
#[derive(Debug, Clone, PartialEq)]
pub struct OvrModel {
    pub submodels: Vec<BinaryModel>,
    pub thresholds: Vec<f64>,
    pub n_features: usize,
    pub class_names: Vec<String>,
}

impl OvrModel {
    pub fn n_classes(&self) -> usize {
        self.submodels.len()
    }

    /// Binary predictions after thresholding (`score >= threshold`).
    pub fn predict_labels(&self, x: &FeatureMatrix) -> Result<LabelMatrix> {
        let scores = predict_scores(self, x)?;
        let mut data = Vec::with_capacity(x.rows() * self.n_classes());
        for s in 0..x.rows() {
            for c in 0..self.n_classes() {
                data.push((scores.get(s, c) >= self.thresholds[c]) as u8);
            }
        }
        LabelMatrix::new(data, x.rows(), self.n_classes(), self.class_names.clone())
    }
}

/// Per-class probability estimates in [0, 1], S x C. Thresholding is the
/// caller's concern.
pub fn predict_scores(model: &OvrModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.cols() != model.n_features {
        return Err(Error::parameter(format!(
            "model expects {} features, got {}",
            model.n_features,
            x.cols()
        )));
    }
    let c = model.n_classes();
    let mut data = vec![0.0f64; x.rows() * c];
    for (s, chunk) in data.chunks_exact_mut(c).enumerate() {
        let row = x.row(s);
        for (j, slot) in chunk.iter_mut().enumerate() {
            *slot = model.submodels[j].score(row);
        }
    }
    FeatureMatrix::from_flat(data, x.rows(), c)
}

fn validate_training(x: &FeatureMatrix, y: &LabelMatrix, weights: &[f64]) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::parameter(format!(
            "{} feature rows vs {} label rows",
            x.rows(),
            y.rows()
        )));
    }
    if weights.len() != y.cols() {
        return Err(Error::parameter(format!(
            "{} class weights for {} classes",
            weights.len(),
            y.cols()
        )));
    }
    for c in 0..y.cols() {
        let pos = y.column_sum(c);
        if pos == 0 || pos == y.rows() {
            return Err(Error::parameter(format!(
                "class {:?} needs both positive and negative samples",
                y.class_names[c]
            )));
        }
    }
    Ok(())
}

/// Positive samples of class `c` carry `weights[c]`, negatives carry 1.
fn sample_weights(y: &LabelMatrix, c: usize, class_weight: f64) -> Vec<f64> {
    (0..y.rows())
        .map(|s| if y.get(s, c) { class_weight } else { 1.0 })
        .collect()
}

/// Train per-class L2-regularized logistic regressions (intercept
/// unpenalized). `c_reg` is the inverse regularization strength.
pub fn train_logreg_ovr(
    x: &FeatureMatrix,
    y: &LabelMatrix,
    c_reg: f64,
    weights: &[f64],
) -> Result<OvrModel> {
    validate_training(x, y, weights)?;
    if !(c_reg > 0.0) {
        return Err(Error::parameter("C must be > 0"));
    }
    let submodels: Vec<BinaryModel> = (0..y.cols())
        .into_par_iter()
        .map(|c| {
            let labels = y.column(c);
            let sw = sample_weights(y, c, weights[c]);
            logreg::fit_binary_logistic(x, &labels, &sw, c_reg, 10_000, 1e-6)
                .map(BinaryModel::Logistic)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel {
        submodels,
        thresholds: vec![0.5; y.cols()],
        n_features: x.cols(),
        class_names: y.class_names.clone(),
    })
}

/// Train per-class CART trees (Gini impurity, grown to purity).
pub fn train_tree_ovr(x: &FeatureMatrix, y: &LabelMatrix, weights: &[f64]) -> Result<OvrModel> {
    validate_training(x, y, weights)?;
    let submodels: Vec<BinaryModel> = (0..y.cols())
        .into_par_iter()
        .map(|c| {
            let labels = y.column(c);
            let sw = sample_weights(y, c, weights[c]);
            Ok(BinaryModel::Tree(tree::fit_tree(x, &labels, &sw)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel {
        submodels,
        thresholds: vec![0.5; y.cols()],
        n_features: x.cols(),
        class_names: y.class_names.clone(),
    })
}

/// Random-forest controls. `m_try = None` means `round(sqrt(F))` features
/// per split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub m_try: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            m_try: None,
        }
    }
}

/// Train per-class bagged forests; per-class probability is the fraction of
/// trees voting positive.
pub fn train_forest_ovr(
    x: &FeatureMatrix,
    y: &LabelMatrix,
    weights: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<OvrModel> {
    validate_training(x, y, weights)?;
    if params.n_trees == 0 {
        return Err(Error::parameter("forest needs at least one tree"));
    }
    let submodels: Vec<BinaryModel> = (0..y.cols())
        .map(|c| {
            let labels = y.column(c);
            let sw = sample_weights(y, c, weights[c]);
            let class_seed = derive_seed(seed, "forest-class", c as u64);
            Ok(BinaryModel::Forest(tree::fit_forest(
                x, &labels, &sw, params, class_seed,
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel {
        submodels,
        thresholds: vec![0.5; y.cols()],
        n_features: x.cols(),
        class_names: y.class_names.clone(),
    })
}

// ---------------------------------------------------------------------------
// Persistence: versioned binary + JSON sidecar
// ---------------------------------------------------------------------------

const OVR_MAGIC: &[u8; 4] = b"OVR1";

/// Hyperparameter sidecar written next to the binary model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub kind: String,
    pub classes: Vec<String>,
    pub n_features: usize,
    pub hyperparameters: serde_json::Value,
}

/// Write the model binary plus a `<path>.json` sidecar.
pub fn save_ovr_model(
    path: &Path,
    model: &OvrModel,
    hyperparameters: serde_json::Value,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(OVR_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    let kind = match model.submodels.first() {
        Some(BinaryModel::Logistic(_)) => 0u8,
        Some(BinaryModel::Tree(_)) => 1,
        Some(BinaryModel::Forest(_)) => 2,
        None => return Err(Error::parameter("empty model")),
    };
    buf.push(kind);
    buf.extend_from_slice(&(model.n_classes() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.n_features as u32).to_le_bytes());
    for t in &model.thresholds {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for sub in &model.submodels {
        match sub {
            BinaryModel::Logistic(m) => {
                for w in &m.weights {
                    buf.extend_from_slice(&w.to_le_bytes());
                }
                buf.extend_from_slice(&m.intercept.to_le_bytes());
            }
            BinaryModel::Tree(t) => t.serialize_into(&mut buf),
            BinaryModel::Forest(f) => f.serialize_into(&mut buf),
        }
    }
    atomic_write(path, &buf)?;
    let sidecar = ModelSidecar {
        kind: match kind {
            0 => "logistic_regression",
            1 => "decision_tree",
            _ => "random_forest",
        }
        .to_string(),
        classes: model.class_names.clone(),
        n_features: model.n_features,
        hyperparameters,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    atomic_write(&sidecar_path(path), json.as_bytes())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Load a model written by [`save_ovr_model`].
pub fn load_ovr_model(path: &Path) -> Result<(OvrModel, ModelSidecar)> {
    let sidecar: ModelSidecar = serde_json::from_slice(&read_bytes(&sidecar_path(path))?)
        .map_err(|e| Error::format(&sidecar_path(path), e.to_string()))?;
    let buf = read_bytes(path)?;
    if buf.len() < 17 || &buf[0..4] != OVR_MAGIC {
        return Err(Error::format(path, "missing OVR1 magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::format(path, format!("unsupported version {}", version)));
    }
    let kind = buf[8];
    let n_classes = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
    let n_features = u32::from_le_bytes(buf[13..17].try_into().unwrap()) as usize;
    let mut cursor = 17usize;
    let read_f64 = |cursor: &mut usize, buf: &[u8]| -> Result<f64> {
        if buf.len() < *cursor + 8 {
            return Err(Error::format(path, "truncated payload"));
        }
        let v = f64::from_le_bytes(buf[*cursor..*cursor + 8].try_into().unwrap());
        *cursor += 8;
        Ok(v)
    };
    let mut thresholds = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        thresholds.push(read_f64(&mut cursor, &buf)?);
    }
    let mut submodels = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let sub = match kind {
            0 => {
                let mut weights = Vec::with_capacity(n_features);
                for _ in 0..n_features {
                    weights.push(read_f64(&mut cursor, &buf)?);
                }
                let intercept = read_f64(&mut cursor, &buf)?;
                BinaryModel::Logistic(LogisticBinary { weights, intercept })
            }
            1 => BinaryModel::Tree(
                DecisionTree::deserialize_from(&buf, &mut cursor)
                    .map_err(|e| Error::format(path, e.to_string()))?,
            ),
            2 => BinaryModel::Forest(
                Forest::deserialize_from(&buf, &mut cursor)
                    .map_err(|e| Error::format(path, e.to_string()))?,
            ),
            other => {
                return Err(Error::format(path, format!("unknown model kind {}", other)))
            }
        };
        submodels.push(sub);
    }
    if cursor != buf.len() {
        return Err(Error::format(path, "trailing bytes"));
    }
    Ok((
        OvrModel {
            submodels,
            thresholds,
            n_features,
            class_names: sidecar.classes.clone(),
        },
        sidecar,
    ))
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn labels(rows: &[&[u8]], names: &[&str]) -> LabelMatrix {
        let data: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LabelMatrix::new(
            data,
            rows.len(),
            names.len(),
            names.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn balanced_weights_match_hand_computation() {
        let y = labels(
            &[&[1, 0], &[0, 1], &[0, 1], &[0, 1]],
            &["rare", "common"],
        );
        let w = balanced_class_weights(&y).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-15);
        assert!((w[1] - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_weights_uniform_case_is_one() {
        let y = labels(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]], &["a", "b", "c"]);
        let w = balanced_class_weights(&y).unwrap();
        for v in w {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_weights_are_duplication_invariant() {
        let y1 = labels(&[&[1, 0], &[0, 1], &[1, 1]], &["a", "b"]);
        let y2 = labels(
            &[&[1, 0], &[0, 1], &[1, 1], &[1, 0], &[0, 1], &[1, 1]],
            &["a", "b"],
        );
        let w1 = balanced_class_weights(&y1).unwrap();
        let w2 = balanced_class_weights(&y2).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_weights_identity_sum() {
        // sum_i w_i * count_i == S for any label matrix
        for seed in 0..20u64 {
            let mut rng = rng_for(seed, "weights", 0);
            let s = rng.random_range(5..40);
            let c = rng.random_range(2..6);
            let mut data = vec![0u8; s * c];
            for col in 0..c {
                // guarantee at least one positive
                let hot = rng.random_range(0..s);
                data[hot * c + col] = 1;
            }
            for v in &mut data {
                if rng.random_bool(0.3) {
                    *v = 1;
                }
            }
            let names: Vec<String> = (0..c).map(|i| format!("c{}", i)).collect();
            let y = LabelMatrix::new(data, s, c, names).unwrap();
            let w = balanced_class_weights(&y).unwrap();
            let total: f64 = (0..c).map(|i| w[i] * y.column_sum(i) as f64).sum();
            assert!((total - s as f64).abs() < 1e-12 * s as f64);
        }
    }

    #[test]
    fn balanced_weights_reject_empty_class() {
        let y = labels(&[&[1, 0], &[1, 0]], &["full", "empty"]);
        let err = balanced_class_weights(&y).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn rbf_gamma_examples() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        // mean 1, population var 1, F=1
        assert!((rbf_gamma(&x).unwrap() - 1.0).abs() < 1e-15);

        // scaling X by 2 divides gamma by 4
        let x2 = FeatureMatrix::from_rows(&[vec![0.0], vec![4.0]]).unwrap();
        assert!((rbf_gamma(&x2).unwrap() - 0.25).abs() < 1e-15);

        let constant = FeatureMatrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert!(matches!(
            rbf_gamma(&constant),
            Err(crate::Error::Degenerate(_))
        ));
    }

    #[test]
    fn rbf_gamma_256_features() {
        // F=256, Var=0.5 -> 1/128
        let mut rng = rng_for(3, "gamma", 0);
        let raw: Vec<f64> = (0..256 * 40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // rescale to population variance exactly 0.5
        let scale = (0.5 / var).sqrt();
        let data: Vec<f64> = raw.iter().map(|v| mean + (v - mean) * scale).collect();
        let x = FeatureMatrix::from_flat(data, 40, 256).unwrap();
        let gamma = rbf_gamma(&x).unwrap();
        assert!((gamma - 0.0078125).abs() < 1e-12, "gamma {gamma}");
    }

    #[test]
    fn cnn_scaling_identity_at_phi_zero() {
        let spec = ScalingSpec {
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            phi: 0.0,
            d0: 3,
            w0: 16,
            r0: 1,
        };
        let r = resolve_cnn_scaling(&spec).unwrap();
        assert_eq!((r.depth, r.width, r.interval), (3, 16, 1));
        assert!((r.raw_depth - 3.0).abs() < 1e-15);
        assert_eq!(r.residual_blocks, 2);
    }

    #[test]
    fn cnn_scaling_reference_values() {
        let spec = ScalingSpec {
            alpha: 1.2,
            beta: 1.1,
            gamma: 1.15,
            phi: 2.0,
            d0: 3,
            w0: 16,
            r0: 1,
        };
        let r = resolve_cnn_scaling(&spec).unwrap();
        assert!((r.raw_depth - 4.32).abs() < 1e-12);
        assert!((r.raw_width - 19.36).abs() < 1e-12);
        assert!((r.raw_interval - 1.3225).abs() < 1e-12);
        assert_eq!((r.depth, r.width, r.interval), (4, 19, 1));
        assert_eq!(r.residual_blocks, 3);
    }

    #[test]
    fn cnn_scaling_is_monotone_in_phi() {
        let mut prev = (0.0, 0.0, 0.0);
        for k in 0..=10 {
            let spec = ScalingSpec {
                alpha: 1.2,
                beta: 1.1,
                gamma: 1.15,
                phi: k as f64 * 0.5,
                d0: 3,
                w0: 16,
                r0: 1,
            };
            let r = resolve_cnn_scaling(&spec).unwrap();
            assert!(r.raw_depth >= prev.0 && r.raw_width >= prev.1 && r.raw_interval >= prev.2);
            prev = (r.raw_depth, r.raw_width, r.raw_interval);
        }
    }

    #[test]
    fn cnn_scaling_rejects_bad_specs() {
        let mut spec = ScalingSpec {
            alpha: 0.9,
            beta: 1.1,
            gamma: 1.15,
            phi: 2.0,
            d0: 3,
            w0: 16,
            r0: 1,
        };
        assert!(resolve_cnn_scaling(&spec).is_err());
        spec.alpha = 1.2;
        spec.d0 = 0;
        assert!(resolve_cnn_scaling(&spec).is_err());
    }

    fn toy_problem() -> (FeatureMatrix, LabelMatrix) {
        // two linearly separable blobs in 2D, margin >= 1
        let mut rows = Vec::new();
        let mut lab = Vec::new();
        let mut rng = rng_for(1, "toy", 0);
        for i in 0..40 {
            let positive = i % 2 == 0;
            let cx = if positive { 2.5 } else { -2.5 };
            rows.push(vec![
                cx + rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            lab.push([positive as u8, !positive as u8]);
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let data: Vec<u8> = lab.iter().flat_map(|r| r.iter().copied()).collect();
        let y = LabelMatrix::new(data, 40, 2, vec!["pos".into(), "neg".into()]).unwrap();
        (x, y)
    }

    #[test]
    fn predict_scores_stay_in_unit_interval() {
        let (x, y) = toy_problem();
        let w = balanced_class_weights(&y).unwrap();
        for model in [
            train_logreg_ovr(&x, &y, 0.01, &w).unwrap(),
            train_tree_ovr(&x, &y, &w).unwrap(),
            train_forest_ovr(&x, &y, &w, &ForestParams::default(), 0).unwrap(),
        ] {
            let scores = predict_scores(&model, &x).unwrap();
            assert!(scores.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn model_files_round_trip() {
        let (x, y) = toy_problem();
        let w = balanced_class_weights(&y).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, model) in [
            ("lr.ovr", train_logreg_ovr(&x, &y, 0.01, &w).unwrap()),
            ("tree.ovr", train_tree_ovr(&x, &y, &w).unwrap()),
            (
                "forest.ovr",
                train_forest_ovr(
                    &x,
                    &y,
                    &w,
                    &ForestParams {
                        n_trees: 7,
                        ..Default::default()
                    },
                    3,
                )
                .unwrap(),
            ),
        ] {
            let path = dir.path().join(name);
            save_ovr_model(&path, &model, serde_json::json!({"seed": 3})).unwrap();
            let (back, sidecar) = load_ovr_model(&path).unwrap();
            assert_eq!(back, model);
            assert_eq!(sidecar.classes, model.class_names);
            let a = predict_scores(&model, &x).unwrap();
            let b = predict_scores(&back, &x).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }
}
