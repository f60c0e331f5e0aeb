//! Dataset assembly, splitting, metrics, and threshold calibration.
//!
//! Splitting isolates a uniform (non-stratified) 10% test draw, then
//! partitions the remainder into 10 stratified folds keyed by the label
//! combination interpreted as a binary integer (class order = manifest
//! order, least-significant bit first). Fold `k` validates on block `k` and
//! trains on the other nine blocks.
//!
//! F1 and Cohen's kappa are computed per class (binary) and averaged with
//! true-positive-count supports; Youden's J = TPR - FPR calibrates one
//! decision threshold per class on validation scores.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};
use crate::ml::{FeatureMatrix, LabelMatrix};
use crate::seed::rng_for;
use crate::simulate::DatasetManifest;
use rand::Rng;

/// Default time-sync tolerance in seconds.
pub const SYNC_TOLERANCE_S: f64 = 0.150;
/// Default minimum positive count for a class to survive filtering.
pub const MIN_CLASS_COUNT: usize = 100;
/// Cross-validation fold count.
pub const N_FOLDS: usize = 10;
/// Held-out test fraction.
pub const TEST_FRACTION: f64 = 0.10;

// ---------------------------------------------------------------------------
// Time-sync join
// ---------------------------------------------------------------------------

/// Pair each reference timestamp with the temporally closest `other`
/// timestamp (which may precede it); pairs farther than `tol` seconds are
/// discarded. Both streams must be sorted ascending. Returns `(ref_index,
/// other_index)` pairs.
pub fn sync_join(ref_ts: &[f64], other_ts: &[f64], tol: f64) -> Result<Vec<(usize, usize)>> {
    for (name, ts) in [("reference", ref_ts), ("other", other_ts)] {
        if ts.iter().any(|t| !t.is_finite()) {
            return Err(Error::parameter(format!("{} stream has non-finite timestamps", name)));
        }
        if ts.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::parameter(format!("{} stream is not sorted", name)));
        }
    }
    if other_ts.is_empty() {
        log::warn!("sync_join: other stream is empty, no pairs produced");
        return Ok(Vec::new());
    }
    let mut pairs = Vec::with_capacity(ref_ts.len());
    for (i, &t) in ref_ts.iter().enumerate() {
        let p = other_ts.partition_point(|&o| o < t);
        // candidates: the first at-or-after and the last before
        let mut best = None::<(usize, f64)>;
        for cand in [p.checked_sub(1), (p < other_ts.len()).then_some(p)]
            .into_iter()
            .flatten()
        {
            let d = (other_ts[cand] - t).abs();
            best = match best {
                None => Some((cand, d)),
                // strict comparison keeps the earlier candidate on ties
                Some((_, bd)) if d < bd => Some((cand, d)),
                keep => keep,
            };
        }
        if let Some((j, d)) = best {
            if d <= tol {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Class filtering
// ---------------------------------------------------------------------------

/// Outcome of rare-class filtering: per-class positive counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<(String, usize)>,
    pub removed: Vec<(String, usize)>,
}

/// Remove classes with fewer than `min_count` positives from the label
/// space. Samples left without labels stay in the dataset as all-negative
/// rows; other classes' columns are untouched.
pub fn filter_rare_classes(
    manifest: &DatasetManifest,
    min_count: usize,
) -> (DatasetManifest, FilterReport) {
    let counts = manifest.class_counts();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (name, count) in counts {
        if count < min_count {
            removed.push((name, count));
        } else {
            kept.push((name, count));
        }
    }
    let keep_set: Vec<&String> = kept.iter().map(|(n, _)| n).collect();
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.labels.retain(|l| keep_set.iter().any(|k| *k == l));
            e
        })
        .collect();
    let mut filtered = DatasetManifest::from_entries(entries, manifest.base_dir.clone());
    // keep the class universe explicit even if a kept class lost all
    // entries through double-label interactions
    filtered.class_names = kept.iter().map(|(n, _)| n.clone()).collect();
    (filtered, FilterReport { kept, removed })
}

/// Restrict the label space to `keep` (e.g. the material classes for the
/// material task); entry labels outside the set are dropped.
pub fn restrict_classes(manifest: &DatasetManifest, keep: &[String]) -> DatasetManifest {
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.labels.retain(|l| keep.contains(l));
            e
        })
        .collect();
    let mut out = DatasetManifest::from_entries(entries, manifest.base_dir.clone());
    out.class_names = keep
        .iter()
        .filter(|k| manifest.class_names.contains(k))
        .cloned()
        .collect();
    out
}

/// Label matrix of a manifest in its class order.
pub fn manifest_label_matrix(manifest: &DatasetManifest) -> Result<LabelMatrix> {
    let c = manifest.class_names.len();
    let mut data = Vec::with_capacity(manifest.len() * c);
    for e in &manifest.entries {
        for name in &manifest.class_names {
            data.push(e.labels.iter().any(|l| l == name) as u8);
        }
    }
    LabelMatrix::new(data, manifest.len(), c, manifest.class_names.clone())
}

// ---------------------------------------------------------------------------
// Stratification + fold plan
// ---------------------------------------------------------------------------

/// Interpret a label row as a binary integer: `key = sum_i row[i] * 2^i`
/// with `i` the class index in manifest order (least-significant first).
pub fn stratification_key(row: &[u8]) -> Result<u64> {
    if row.len() > 62 {
        return Err(Error::parameter(format!(
            "label row width {} exceeds 62 bits",
            row.len()
        )));
    }
    Ok(row
        .iter()
        .enumerate()
        .map(|(i, v)| u64::from(*v != 0) << i)
        .sum())
}

/// One cross-validation fold over the non-test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Test draw plus the 10 stratified folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Check the partition laws against a dataset of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut in_test = vec![false; n];
        for &i in &self.test {
            if i >= n {
                return Err(Error::parameter("test index out of range"));
            }
            in_test[i] = true;
        }
        for (k, fold) in self.folds.iter().enumerate() {
            let mut seen = vec![0u8; n];
            for &i in &fold.train {
                seen[i] += 1;
            }
            for &i in &fold.validation {
                seen[i] += 1;
            }
            for i in 0..n {
                let expected = u8::from(!in_test[i]);
                if seen[i] != expected {
                    return Err(Error::parameter(format!(
                        "fold {}: sample {} covered {} times, expected {}",
                        k, i, seen[i], expected
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Split a dataset: a uniform 10% test draw (non-stratified), then 10
/// stratified folds over the remainder. Within every stratification key the
/// per-fold counts differ by at most one.
pub fn split_dataset(manifest: &DatasetManifest, seed: u64) -> Result<FoldPlan> {
    let n = manifest.len();
    if n < 20 {
        return Err(Error::parameter(format!(
            "need at least 20 samples to split, got {}",
            n
        )));
    }
    let labels = manifest_label_matrix(manifest)?;
    let mut rng = rng_for(seed, "split", 0);

    // uniform test draw
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        let j = rng.random_range(0..=k);
        order.swap(k, j);
    }
    let n_test = (TEST_FRACTION * n as f64).round() as usize;
    let mut test: Vec<usize> = order[..n_test].to_vec();
    test.sort_unstable();
    let mut remainder: Vec<usize> = order[n_test..].to_vec();
    remainder.sort_unstable();
    if remainder.len() < N_FOLDS {
        return Err(Error::parameter(format!(
            "only {} non-test samples for {} folds",
            remainder.len(),
            N_FOLDS
        )));
    }

    // stratified blocks: shuffle within each key, deal round-robin
    let mut by_key: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &i in &remainder {
        let key = stratification_key(labels.row(i))?;
        by_key.entry(key).or_default().push(i);
    }
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); N_FOLDS];
    for bucket in by_key.values_mut() {
        let m = bucket.len();
        for k in (1..m).rev() {
            let j = rng.random_range(0..=k);
            bucket.swap(k, j);
        }
        let offset = rng.random_range(0..N_FOLDS);
        for (pos, &i) in bucket.iter().enumerate() {
            blocks[(offset + pos) % N_FOLDS].push(i);
        }
    }

    let folds = (0..N_FOLDS)
        .map(|k| {
            let mut validation = blocks[k].clone();
            validation.sort_unstable();
            let mut train: Vec<usize> = blocks
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != k)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, validation }
        })
        .collect();

    Ok(FoldPlan { test, folds })
}

/// Serialize a fold plan as JSON.
pub fn write_fold_plan(path: &Path, plan: &FoldPlan) -> Result<()> {
    let json = serde_json::to_string_pretty(plan).expect("fold plan serializes");
    atomic_write(path, json.as_bytes())
}

pub fn read_fold_plan(path: &Path) -> Result<FoldPlan> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Per-class scores with their supports and the support-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub per_class: Vec<f64>,
    pub supports: Vec<usize>,
    pub weighted: f64,
}

fn confusion(y_true: &LabelMatrix, y_pred: &LabelMatrix, c: usize) -> (f64, f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    let mut tn = 0.0;
    for s in 0..y_true.rows() {
        match (y_true.get(s, c), y_pred.get(s, c)) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    (tp, fp, fn_, tn)
}

fn check_shapes(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<()> {
    if y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() {
        return Err(Error::parameter(format!(
            "label shape {}x{} vs prediction shape {}x{}",
            y_true.rows(),
            y_true.cols(),
            y_pred.rows(),
            y_pred.cols()
        )));
    }
    Ok(())
}

fn support_weighted(per_class: &[f64], supports: &[usize]) -> f64 {
    let total: usize = supports.iter().sum();
    if total == 0 {
        return 0.0;
    }
    per_class
        .iter()
        .zip(supports)
        .map(|(m, s)| m * *s as f64)
        .sum::<f64>()
        / total as f64
}

/// Per-class binary F1 = 2TP / (2TP + FP + FN), 0 when the denominator is
/// 0, averaged with supports = positives in the truth.
pub fn f1_weighted(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<ClassMetrics> {
    check_shapes(y_true, y_pred)?;
    let mut per_class = Vec::with_capacity(y_true.cols());
    let mut supports = Vec::with_capacity(y_true.cols());
    for c in 0..y_true.cols() {
        let (tp, fp, fn_, _) = confusion(y_true, y_pred, c);
        let denom = 2.0 * tp + fp + fn_;
        per_class.push(if denom > 0.0 { 2.0 * tp / denom } else { 0.0 });
        supports.push((tp + fn_) as usize);
    }
    let weighted = support_weighted(&per_class, &supports);
    Ok(ClassMetrics {
        per_class,
        supports,
        weighted,
    })
}

/// Per-class binary Cohen's kappa, 0 when chance agreement is 1, averaged
/// with supports as for F1.
pub fn cohens_kappa_weighted(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<ClassMetrics> {
    check_shapes(y_true, y_pred)?;
    let n = y_true.rows() as f64;
    let mut per_class = Vec::with_capacity(y_true.cols());
    let mut supports = Vec::with_capacity(y_true.cols());
    for c in 0..y_true.cols() {
        let (tp, fp, fn_, tn) = confusion(y_true, y_pred, c);
        let p_o = (tp + tn) / n;
        let p_e = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
        let kappa = if (1.0 - p_e).abs() < 1e-15 {
            0.0
        } else {
            (p_o - p_e) / (1.0 - p_e)
        };
        per_class.push(kappa);
        supports.push((tp + fn_) as usize);
    }
    let weighted = support_weighted(&per_class, &supports);
    Ok(ClassMetrics {
        per_class,
        supports,
        weighted,
    })
}

// ---------------------------------------------------------------------------
// Youden-J threshold calibration
// ---------------------------------------------------------------------------

/// Per-class thresholds maximizing `J = TPR - FPR` on validation scores.
///
/// Candidates are the midpoints between consecutive distinct sorted scores
/// plus one candidate above all scores; ties break toward the higher
/// threshold. Predictions use `score >= threshold`.
pub fn youden_thresholds(scores: &FeatureMatrix, y_true: &LabelMatrix) -> Result<Vec<f64>> {
    if scores.rows() != y_true.rows() || scores.cols() != y_true.cols() {
        return Err(Error::parameter(format!(
            "score shape {}x{} vs label shape {}x{}",
            scores.rows(),
            scores.cols(),
            y_true.rows(),
            y_true.cols()
        )));
    }
    let n = y_true.rows();
    let mut thresholds = Vec::with_capacity(y_true.cols());
    for c in 0..y_true.cols() {
        let positives = y_true.column_sum(c);
        if positives == 0 || positives == n {
            return Err(Error::parameter(format!(
                "class {:?} is single-valued in the validation set",
                y_true.class_names[c]
            )));
        }
        let mut sorted: Vec<f64> = (0..n).map(|s| scores.get(s, c)).collect();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted.dedup();
        let mut candidates: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        candidates.push(sorted.last().unwrap() + 1.0);

        let mut best_j = f64::NEG_INFINITY;
        let mut best_t = f64::NEG_INFINITY;
        for &t in &candidates {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for s in 0..n {
                if scores.get(s, c) >= t {
                    if y_true.get(s, c) {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let j = tp / positives as f64 - fp / (n - positives) as f64;
            // ties break toward the higher threshold
            if j > best_j || (j == best_j && t > best_t) {
                best_j = j;
                best_t = t;
            }
        }
        thresholds.push(best_t);
    }
    Ok(thresholds)
}

// ---------------------------------------------------------------------------
// Metrics report
// ---------------------------------------------------------------------------

/// Per-class and weighted scores of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub per_class_f1: Vec<f64>,
    pub per_class_kappa: Vec<f64>,
    pub weighted_f1: f64,
    pub weighted_kappa: f64,
    pub thresholds: Vec<f64>,
}

/// Threshold scores and compute the full report.
pub fn evaluate_scores(
    scores: &FeatureMatrix,
    y_true: &LabelMatrix,
    thresholds: &[f64],
) -> Result<MetricsReport> {
    if thresholds.len() != y_true.cols() {
        return Err(Error::parameter(format!(
            "{} thresholds for {} classes",
            thresholds.len(),
            y_true.cols()
        )));
    }
    let mut data = Vec::with_capacity(scores.rows() * scores.cols());
    for s in 0..scores.rows() {
        for c in 0..scores.cols() {
            data.push((scores.get(s, c) >= thresholds[c]) as u8);
        }
    }
    let y_pred = LabelMatrix::new(
        data,
        scores.rows(),
        scores.cols(),
        y_true.class_names.clone(),
    )?;
    let f1 = f1_weighted(y_true, &y_pred)?;
    let kappa = cohens_kappa_weighted(y_true, &y_pred)?;
    Ok(MetricsReport {
        class_names: y_true.class_names.clone(),
        per_class_f1: f1.per_class,
        per_class_kappa: kappa.per_class,
        weighted_f1: f1.weighted,
        weighted_kappa: kappa.weighted,
        thresholds: thresholds.to_vec(),
    })
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{DatasetManifest, ManifestEntry};
    use std::path::PathBuf;

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

    fn manifest_with(labels: Vec<Vec<&str>>) -> DatasetManifest {
        let entries = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| ManifestEntry {
                path: format!("pdm/{:05}.pdm", i),
                timestamp_s: 0.1 * i as f64,
                labels: l.into_iter().map(String::from).collect(),
            })
            .collect();
        DatasetManifest::from_entries(entries, PathBuf::from("."))
    }

    #[test]
    fn sync_join_picks_nearest_and_applies_cutoff() {
        let pairs = sync_join(&[1.000], &[0.990, 1.200], 0.150).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);

        // 151 ms exceeds a 150 ms tolerance
        let pairs = sync_join(&[1.000], &[1.151], 0.150).unwrap();
        assert!(pairs.is_empty());
        // exactly at the tolerance is kept
        let pairs = sync_join(&[1.000], &[1.150], 0.150).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);

        let ts = [0.0, 1.0, 2.0, 3.0];
        let pairs = sync_join(&ts, &ts, 0.150).unwrap();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn sync_join_edge_cases() {
        assert!(sync_join(&[1.0, 0.5], &[0.0], 0.1).is_err()); // unsorted
        let pairs = sync_join(&[1.0], &[], 0.1).unwrap();
        assert!(pairs.is_empty());
        // tie between before/after resolves to the earlier sample
        let pairs = sync_join(&[1.0], &[0.9, 1.1], 0.5).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);
    }

    #[test]
    fn sync_join_symmetric_count_with_infinite_tolerance() {
        let a = [0.0, 1.0, 2.0, 3.3];
        let b = [0.1, 1.2, 1.9, 3.0];
        let ab = sync_join(&a, &b, f64::INFINITY).unwrap();
        let ba = sync_join(&b, &a, f64::INFINITY).unwrap();
        assert_eq!(ab.len(), ba.len());
    }

    #[test]
    fn rare_class_filter_boundary() {
        let mut rows: Vec<Vec<&str>> = Vec::new();
        for _ in 0..100 {
            rows.push(vec!["common"]);
        }
        for _ in 0..99 {
            rows.push(vec!["rare", "common"]);
        }
        let manifest = manifest_with(rows);
        let (filtered, report) = filter_rare_classes(&manifest, 100);
        assert_eq!(filtered.class_names, vec!["common".to_string()]);
        assert_eq!(report.removed, vec![("rare".to_string(), 99)]);
        assert_eq!(report.kept, vec![("common".to_string(), 199)]);
        // other classes' columns unchanged: every entry still has "common"
        assert!(filtered.entries.iter().all(|e| e.labels == vec!["common"]));

        // count exactly at the threshold is kept
        let mut rows: Vec<Vec<&str>> = Vec::new();
        for _ in 0..100 {
            rows.push(vec!["kept"]);
        }
        let (filtered, _) = filter_rare_classes(&manifest_with(rows), 100);
        assert_eq!(filtered.class_names, vec!["kept".to_string()]);
    }

    #[test]
    fn zero_label_rows_are_retained() {
        let mut rows: Vec<Vec<&str>> = vec![vec!["rare"]; 5];
        rows.extend(vec![vec!["common"]; 100]);
        let manifest = manifest_with(rows);
        let (filtered, _) = filter_rare_classes(&manifest, 100);
        assert_eq!(filtered.len(), 105);
        assert!(filtered.entries[0].labels.is_empty());
        let y = manifest_label_matrix(&filtered).unwrap();
        assert_eq!(y.rows(), 105);
        assert_eq!(y.column_sum(0), 100);
    }

    #[test]
    fn stratification_key_examples() {
        assert_eq!(stratification_key(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(stratification_key(&[1, 0, 1]).unwrap(), 5);
        assert_eq!(stratification_key(&[0, 1]).unwrap(), 2);
        assert!(stratification_key(&vec![1u8; 63]).is_err());
        // distinct combinations map to distinct keys
        let mut seen = std::collections::BTreeSet::new();
        for bits in 0u8..16 {
            let row = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1];
            assert!(seen.insert(stratification_key(&row).unwrap()));
        }
    }

    fn mixed_manifest(n: usize) -> DatasetManifest {
        let rows: Vec<Vec<&str>> = (0..n)
            .map(|i| match i % 4 {
                0 => vec!["a"],
                1 => vec!["b"],
                2 => vec!["a", "b"],
                _ => vec!["c"],
            })
            .collect();
        manifest_with(rows)
    }

    #[test]
    fn split_sizes_and_determinism() {
        let manifest = mixed_manifest(1000);
        let plan = split_dataset(&manifest, 7).unwrap();
        assert_eq!(plan.test.len(), 100);
        assert_eq!(plan.folds.len(), 10);
        for fold in &plan.folds {
            assert!((fold.validation.len() as i64 - 90).abs() <= 4);
            assert_eq!(fold.train.len() + fold.validation.len(), 900);
        }
        plan.validate(1000).unwrap();
        assert_eq!(plan, split_dataset(&manifest, 7).unwrap());
        assert_ne!(plan, split_dataset(&manifest, 8).unwrap());
    }

    #[test]
    fn split_stratification_balances_every_key() {
        let manifest = mixed_manifest(500);
        let labels = manifest_label_matrix(&manifest).unwrap();
        let plan = split_dataset(&manifest, 3).unwrap();
        // per key, validation-block sizes differ by <= 1 across folds
        let mut keys: BTreeSet<u64> = BTreeSet::new();
        let non_test: Vec<usize> = plan.folds[0]
            .train
            .iter()
            .chain(&plan.folds[0].validation)
            .copied()
            .collect();
        for &i in &non_test {
            keys.insert(stratification_key(labels.row(i)).unwrap());
        }
        for key in keys {
            let sizes: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| {
                    f.validation
                        .iter()
                        .filter(|&&i| stratification_key(labels.row(i)).unwrap() == key)
                        .count()
                })
                .collect();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            assert!(max - min <= 1, "key {key}: {sizes:?}");
        }
    }

    use std::collections::BTreeSet;

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(split_dataset(&mixed_manifest(19), 0).is_err());
        assert!(split_dataset(&mixed_manifest(20), 0).is_ok());
    }

    #[test]
    fn fold_plan_json_round_trip() {
        let plan = split_dataset(&mixed_manifest(60), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("folds.json");
        write_fold_plan(&path, &plan).unwrap();
        assert_eq!(read_fold_plan(&path).unwrap(), plan);
    }

    #[test]
    fn f1_examples() {
        let truth = labels(&[&[1], &[1], &[0], &[0]], &["x"]);
        let perfect = f1_weighted(&truth, &truth).unwrap();
        assert_eq!(perfect.weighted, 1.0);
        assert_eq!(perfect.per_class, vec![1.0]);

        let none = labels(&[&[0], &[0], &[0], &[0]], &["x"]);
        let zero = f1_weighted(&truth, &none).unwrap();
        assert_eq!(zero.per_class, vec![0.0]);

        // TP=8, FP=2, FN=4 -> F1 = 16/22
        let mut t_rows: Vec<[u8; 1]> = Vec::new();
        let mut p_rows: Vec<[u8; 1]> = Vec::new();
        for _ in 0..8 {
            t_rows.push([1]);
            p_rows.push([1]);
        }
        for _ in 0..2 {
            t_rows.push([0]);
            p_rows.push([1]);
        }
        for _ in 0..4 {
            t_rows.push([1]);
            p_rows.push([0]);
        }
        let t: Vec<&[u8]> = t_rows.iter().map(|r| r.as_slice()).collect();
        let p: Vec<&[u8]> = p_rows.iter().map(|r| r.as_slice()).collect();
        let m = f1_weighted(&labels(&t, &["x"]), &labels(&p, &["x"])).unwrap();
        assert!((m.per_class[0] - 16.0 / 22.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_examples() {
        let truth = labels(&[&[1], &[1], &[0], &[0]], &["x"]);
        let m = cohens_kappa_weighted(&truth, &truth).unwrap();
        assert!((m.weighted - 1.0).abs() < 1e-15);

        // independence: prediction constant -> p_o == p_e -> kappa 0
        let constant = labels(&[&[1], &[1], &[1], &[1]], &["x"]);
        let m = cohens_kappa_weighted(&truth, &constant).unwrap();
        assert!(m.per_class[0].abs() < 1e-12);

        // TP=40, FN=10, FP=20, TN=30 against a direct contingency oracle
        let mut t_rows: Vec<[u8; 1]> = Vec::new();
        let mut p_rows: Vec<[u8; 1]> = Vec::new();
        for _ in 0..40 {
            t_rows.push([1]);
            p_rows.push([1]);
        }
        for _ in 0..10 {
            t_rows.push([1]);
            p_rows.push([0]);
        }
        for _ in 0..20 {
            t_rows.push([0]);
            p_rows.push([1]);
        }
        for _ in 0..30 {
            t_rows.push([0]);
            p_rows.push([0]);
        }
        let t: Vec<&[u8]> = t_rows.iter().map(|r| r.as_slice()).collect();
        let p: Vec<&[u8]> = p_rows.iter().map(|r| r.as_slice()).collect();
        let m = cohens_kappa_weighted(&labels(&t, &["x"]), &labels(&p, &["x"])).unwrap();
        // oracle: p_o = 70/100; p_e = (60*50 + 50*40)/10000 = 0.5
        let expect = (0.70 - 0.50) / (1.0 - 0.50);
        assert!((m.per_class[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn youden_examples() {
        // perfectly separated scores
        let scores =
            FeatureMatrix::from_rows(&[vec![0.9], vec![0.8], vec![0.2], vec![0.1]]).unwrap();
        let truth = labels(&[&[1], &[1], &[0], &[0]], &["x"]);
        let t = youden_thresholds(&scores, &truth).unwrap();
        assert!((t[0] - 0.5).abs() < 1e-12, "threshold {}", t[0]);

        // identical scores: J = 0, threshold lands above all scores
        let scores =
            FeatureMatrix::from_rows(&[vec![0.4], vec![0.4], vec![0.4], vec![0.4]]).unwrap();
        let t = youden_thresholds(&scores, &truth).unwrap();
        assert!(t[0] > 0.4);

        // worked example: {0.1-, 0.4+, 0.35-, 0.8+} -> 0.375
        let scores =
            FeatureMatrix::from_rows(&[vec![0.1], vec![0.4], vec![0.35], vec![0.8]]).unwrap();
        let truth = labels(&[&[0], &[1], &[0], &[1]], &["x"]);
        let t = youden_thresholds(&scores, &truth).unwrap();
        assert!((t[0] - 0.375).abs() < 1e-12, "threshold {}", t[0]);

        // single-valued validation column is an error
        let bad = labels(&[&[1], &[1], &[1], &[1]], &["x"]);
        assert!(youden_thresholds(&scores, &bad).is_err());
    }

    #[test]
    fn youden_is_rank_invariant() {
        let scores = FeatureMatrix::from_rows(&[
            vec![0.12],
            vec![0.55],
            vec![0.31],
            vec![0.77],
            vec![0.40],
            vec![0.05],
        ])
        .unwrap();
        let truth = labels(&[&[0], &[1], &[0], &[1], &[1], &[0]], &["x"]);
        let t1 = youden_thresholds(&scores, &truth).unwrap();
        // strictly increasing transform: exp(3x) + 1
        let warped_rows: Vec<Vec<f64>> = (0..6)
            .map(|s| vec![(3.0 * scores.get(s, 0)).exp() + 1.0])
            .collect();
        let warped = FeatureMatrix::from_rows(&warped_rows).unwrap();
        let t2 = youden_thresholds(&warped, &truth).unwrap();
        // the induced partitions agree
        for s in 0..6 {
            assert_eq!(
                scores.get(s, 0) >= t1[0],
                warped.get(s, 0) >= t2[0],
                "sample {s}"
            );
        }
    }

    #[test]
    fn evaluate_scores_builds_full_report() {
        let scores = FeatureMatrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.8, 0.3],
            vec![0.2, 0.7],
            vec![0.1, 0.9],
        ])
        .unwrap();
        let truth = labels(&[&[1, 0], &[1, 0], &[0, 1], &[0, 1]], &["a", "b"]);
        let report = evaluate_scores(&scores, &truth, &[0.5, 0.5]).unwrap();
        assert_eq!(report.weighted_f1, 1.0);
        assert_eq!(report.weighted_kappa, 1.0);
        assert_eq!(report.class_names, vec!["a", "b"]);
    }
}
