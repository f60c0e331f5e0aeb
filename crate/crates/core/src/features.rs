//! The two preprocessing pipelines.
//!
//! The vector pipeline turns a cleaned energyscape into a fixed-length
//! feature vector: subtract the training-mean energyscape, max-pool along
//! the range axis (non-overlapping windows), flatten row-major
//! (direction-major), then project onto a whitened PCA basis fitted on the
//! training split only.
//!
//! The image pipeline keeps the energyscape as a matrix: a single random
//! time shift applied identically to all 32 microphone signals before
//! beamforming, then per-scape normalization and random horizontal /
//! vertical flips at training time.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::beamform::Energyscape;
use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};
use crate::ml::FeatureMatrix;
use crate::signal::Waveform;

/// Default pooling kernel along the range axis.
pub const POOL_KERNEL: usize = 5;
/// Default number of principal components.
pub const N_COMPONENTS: usize = 256;
/// Default whitening epsilon added under the square root.
pub const WHITEN_EPS: f64 = 1e-12;
/// Default maximum augmentation time shift in samples (100 us at 450 kHz).
pub const MAX_TIME_SHIFT: usize = 45;

// ---------------------------------------------------------------------------
// Range max-pooling
// ---------------------------------------------------------------------------

/// Non-overlapping max-pool along the range axis: output column `j` is the
/// max of input columns `j*kernel .. (j+1)*kernel`; trailing columns that do
/// not fill a window are dropped. Rows are unchanged.
pub fn maxpool_range(scape: &Energyscape, kernel: usize) -> Result<Energyscape> {
    if kernel < 1 {
        return Err(Error::parameter("pool kernel must be >= 1"));
    }
    if kernel > scape.cols() {
        return Err(Error::parameter(format!(
            "pool kernel {} exceeds {} columns",
            kernel,
            scape.cols()
        )));
    }
    let out_cols = scape.cols() / kernel;
    let mut out = Energyscape::zeros(scape.rows(), out_cols, scape.range_resolution * kernel as f64);
    out.directions = scape.directions.clone();
    for r in 0..scape.rows() {
        let src = scape.row(r);
        let dst = out.row_mut(r);
        for (j, slot) in dst.iter_mut().enumerate() {
            let window = &src[j * kernel..(j + 1) * kernel];
            *slot = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vector pipeline
// ---------------------------------------------------------------------------

/// Fit-time controls of the vector pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorPipelineParams {
    pub pool_kernel: usize,
    pub n_components: usize,
    pub whiten_eps: f64,
}

impl Default for VectorPipelineParams {
    fn default() -> Self {
        VectorPipelineParams {
            pool_kernel: POOL_KERNEL,
            n_components: N_COMPONENTS,
            whiten_eps: WHITEN_EPS,
        }
    }
}

/// Fitted vector-preprocessing state.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    /// Elementwise mean energyscape of the training samples.
    pub mean_scape: Energyscape,
    pub pool_kernel: usize,
    /// Mean of the pooled, flattened training vectors.
    pub pca_mean: Vec<f64>,
    /// Principal axes, row-major `n_components x dims`; rows orthonormal.
    pub pca_basis: Vec<f64>,
    /// Per-component variance of the training projections (Bessel-corrected).
    pub pca_eigenvalues: Vec<f64>,
    /// Usable component count (may be below the requested 256 when the
    /// training set is small or degenerate).
    pub n_components: usize,
    /// Flattened pooled dimensionality.
    pub dims: usize,
    pub whiten_eps: f64,
}

impl PipelineModel {
    pub fn basis_row(&self, j: usize) -> &[f64] {
        &self.pca_basis[j * self.dims..(j + 1) * self.dims]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Subtract the mean scape, pool, and flatten one sample.
fn pooled_vector(model_mean: &Energyscape, kernel: usize, scape: &Energyscape) -> Result<Vec<f64>> {
    if scape.rows() != model_mean.rows() || scape.cols() != model_mean.cols() {
        return Err(Error::parameter(format!(
            "scape shape {}x{} does not match pipeline {}x{}",
            scape.rows(),
            scape.cols(),
            model_mean.rows(),
            model_mean.cols()
        )));
    }
    let mut diff = scape.clone();
    for (d, m) in diff.values_mut().iter_mut().zip(model_mean.values()) {
        *d -= m;
    }
    Ok(maxpool_range(&diff, kernel)?.values().to_vec())
}

/// A scape source indexed by dataset position; lets the fit stream from
/// disk instead of holding every training scape in memory.
pub type ScapeLoader<'a> = &'a (dyn Fn(usize) -> Result<Energyscape> + Sync);

fn check_shape(expect_rows: usize, expect_cols: usize, s: &Energyscape, who: usize) -> Result<()> {
    if s.rows() != expect_rows || s.cols() != expect_cols {
        return Err(Error::parameter(format!(
            "training scape {} has shape {}x{}, expected {}x{}",
            who,
            s.rows(),
            s.cols(),
            expect_rows,
            expect_cols
        )));
    }
    Ok(())
}

/// Core fit from already pooled training vectors: PCA via the Gram matrix
/// of the centered rows. Returns the model plus the whitened training
/// projections (read off the eigendecomposition).
fn fit_from_pooled(
    mean_scape: Energyscape,
    pooled: Vec<Vec<f64>>,
    params: &VectorPipelineParams,
) -> Result<(PipelineModel, FeatureMatrix)> {
    let n = pooled.len();
    let dims = pooled[0].len();
    let inv_n = 1.0 / n as f64;

    let mut pca_mean = vec![0.0f64; dims];
    for v in &pooled {
        for (m, x) in pca_mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut pca_mean {
        *m *= inv_n;
    }

    // centered data matrix, row-major n x dims
    let mut x = vec![0.0f64; n * dims];
    for (i, v) in pooled.iter().enumerate() {
        for (t, val) in v.iter().enumerate() {
            x[i * dims + t] = val - pca_mean[t];
        }
    }
    drop(pooled);

    // Gram matrix of the centered rows
    let gram_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &x[i * dims..(i + 1) * dims];
            (0..=i)
                .map(|j| dot(xi, &x[j * dims..(j + 1) * dims]))
                .collect()
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (i, row) in gram_rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            gram[(i, j)] = *v;
            gram[(j, i)] = *v;
        }
    }

    let eigen = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eigen.eigenvalues[*b].total_cmp(&eigen.eigenvalues[*a]));

    let lambda_max = eigen.eigenvalues[order[0]].max(0.0);
    let tol = lambda_max * 1e-10;
    let max_rank = params.n_components.min(n - 1).min(dims);
    let mut kept: Vec<usize> = Vec::new();
    for &idx in order.iter().take(max_rank) {
        if eigen.eigenvalues[idx] > tol && eigen.eigenvalues[idx] > 0.0 {
            kept.push(idx);
        }
    }
    if kept.len() < params.n_components {
        log::warn!(
            "PCA kept {} of {} requested components (n={}, dims={})",
            kept.len(),
            params.n_components,
            n,
            dims
        );
    }

    // principal axes: v_j = X^T u_j / sigma_j
    let basis_rows: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|&idx| {
            let sigma = eigen.eigenvalues[idx].sqrt();
            let mut v = vec![0.0f64; dims];
            for i in 0..n {
                let coef = eigen.eigenvectors[(i, idx)] / sigma;
                let xi = &x[i * dims..(i + 1) * dims];
                for (slot, val) in v.iter_mut().zip(xi) {
                    *slot += coef * val;
                }
            }
            v
        })
        .collect();

    let n_components = kept.len();
    let mut pca_basis = vec![0.0f64; n_components * dims];
    let mut pca_eigenvalues = Vec::with_capacity(n_components);
    for (j, row) in basis_rows.iter().enumerate() {
        pca_basis[j * dims..(j + 1) * dims].copy_from_slice(row);
        pca_eigenvalues.push(eigen.eigenvalues[kept[j]] / (n as f64 - 1.0));
    }

    // whitened training projections: sigma_j u_ij / sqrt(lambda_j + eps)
    let mut scores = vec![0.0f64; n * n_components];
    for i in 0..n {
        for (j, &idx) in kept.iter().enumerate() {
            let sigma = eigen.eigenvalues[idx].sqrt();
            scores[i * n_components + j] = sigma * eigen.eigenvectors[(i, idx)]
                / (pca_eigenvalues[j] + params.whiten_eps).sqrt();
        }
    }
    let train_features = FeatureMatrix::from_flat(scores, n, n_components)?;

    let model = PipelineModel {
        mean_scape,
        pool_kernel: params.pool_kernel,
        pca_mean,
        pca_basis,
        pca_eigenvalues,
        n_components,
        dims,
        whiten_eps: params.whiten_eps,
    };
    Ok((model, train_features))
}

/// Fit the vector pipeline on training scapes.
///
/// The PCA is an economy decomposition via the Gram matrix of the centered
/// pooled vectors; components are capped at `min(requested, n - 1, dims)`
/// and at the numerical rank, with a warning when fewer than requested
/// survive.
pub fn fit_vector_pipeline(
    scapes: &[Energyscape],
    params: &VectorPipelineParams,
) -> Result<PipelineModel> {
    if scapes.len() < 2 {
        return Err(Error::parameter("need at least 2 training scapes"));
    }
    let rows = scapes[0].rows();
    let cols = scapes[0].cols();
    for (i, s) in scapes.iter().enumerate() {
        check_shape(rows, cols, s, i)?;
    }

    // mean energyscape across the training set (fixed summation order)
    let mut mean_scape = Energyscape::zeros(rows, cols, scapes[0].range_resolution);
    for s in scapes {
        for (m, v) in mean_scape.values_mut().iter_mut().zip(s.values()) {
            *m += v;
        }
    }
    let inv_n = 1.0 / scapes.len() as f64;
    for m in mean_scape.values_mut() {
        *m *= inv_n;
    }

    let pooled: Vec<Vec<f64>> = scapes
        .par_iter()
        .map(|s| pooled_vector(&mean_scape, params.pool_kernel, s))
        .collect::<Result<Vec<_>>>()?;

    fit_from_pooled(mean_scape, pooled, params).map(|(model, _)| model)
}

/// Streaming fit: training scapes are loaded twice (mean pass, pooling
/// pass) instead of held in memory. Returns the model and the training
/// features in `train` order.
pub fn fit_vector_pipeline_streaming(
    load: ScapeLoader<'_>,
    train: &[usize],
    params: &VectorPipelineParams,
) -> Result<(PipelineModel, FeatureMatrix)> {
    if train.len() < 2 {
        return Err(Error::parameter("need at least 2 training scapes"));
    }
    // pass 1: mean scape, fixed order
    let first = load(train[0])?;
    let (rows, cols) = (first.rows(), first.cols());
    let mut mean_scape = Energyscape::zeros(rows, cols, first.range_resolution);
    for (m, v) in mean_scape.values_mut().iter_mut().zip(first.values()) {
        *m += v;
    }
    for &i in &train[1..] {
        let s = load(i)?;
        check_shape(rows, cols, &s, i)?;
        for (m, v) in mean_scape.values_mut().iter_mut().zip(s.values()) {
            *m += v;
        }
    }
    let inv_n = 1.0 / train.len() as f64;
    for m in mean_scape.values_mut() {
        *m *= inv_n;
    }

    // pass 2: pooled vectors
    let pooled: Vec<Vec<f64>> = train
        .par_iter()
        .map(|&i| pooled_vector(&mean_scape, params.pool_kernel, &load(i)?))
        .collect::<Result<Vec<_>>>()?;

    fit_from_pooled(mean_scape, pooled, params)
}

/// Project scapes loaded by index; rows follow `indices` order.
pub fn apply_vector_pipeline_streaming(
    model: &PipelineModel,
    load: ScapeLoader<'_>,
    indices: &[usize],
) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = indices
        .par_iter()
        .map(|&i| apply_vector_pipeline(model, &load(i)?))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(&rows)
}

/// Project one scape through the fitted pipeline.
///
/// Component `j` is `(x . basis_j) / sqrt(eigenvalue_j + eps)`, i.e. the
/// whitened principal-component score.
pub fn apply_vector_pipeline(model: &PipelineModel, scape: &Energyscape) -> Result<Vec<f64>> {
    let mut v = pooled_vector(&model.mean_scape, model.pool_kernel, scape)?;
    if v.len() != model.dims {
        return Err(Error::parameter(format!(
            "pooled dimensionality {} does not match model {}",
            v.len(),
            model.dims
        )));
    }
    for (x, m) in v.iter_mut().zip(&model.pca_mean) {
        *x -= m;
    }
    Ok((0..model.n_components)
        .map(|j| {
            dot(&v, model.basis_row(j)) / (model.pca_eigenvalues[j] + model.whiten_eps).sqrt()
        })
        .collect())
}

/// Project many scapes; rows in input order.
pub fn apply_vector_pipeline_batch(
    model: &PipelineModel,
    scapes: &[Energyscape],
) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = scapes
        .par_iter()
        .map(|s| apply_vector_pipeline(model, s))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// Image-pipeline augmentations
// ---------------------------------------------------------------------------

/// Draw one shift `s ~ uniform{-max_shift ..= +max_shift}` and apply it to
/// every channel: positive shifts delay (zeros enter at the front), negative
/// shifts advance (zeros enter at the tail).
pub fn augment_time_shift(
    channels: &[Waveform],
    max_shift: usize,
    rng: &mut impl Rng,
) -> Vec<Waveform> {
    let s = rng.random_range(-(max_shift as i64)..=max_shift as i64);
    channels
        .iter()
        .map(|ch| {
            let n = ch.len();
            let mut samples = vec![0.0; n];
            if s >= 0 {
                let t = s as usize;
                if t < n {
                    samples[t..].copy_from_slice(&ch.samples[..n - t]);
                }
            } else {
                let t = (-s) as usize;
                if t < n {
                    samples[..n - t].copy_from_slice(&ch.samples[t..]);
                }
            }
            Waveform {
                samples,
                sample_rate: ch.sample_rate,
            }
        })
        .collect()
}

/// Independently flip the direction axis (row order) and the range axis
/// (column order), each with probability `p`. The horizontal draw happens
/// first.
pub fn augment_flip(scape: &Energyscape, rng: &mut impl Rng, p: f64) -> Energyscape {
    let horizontal = rng.random_bool(p);
    let vertical = rng.random_bool(p);
    let mut out = scape.clone();
    if horizontal {
        let rows = out.rows();
        for r in 0..rows / 2 {
            let (a, b) = (r, rows - 1 - r);
            for c in 0..out.cols() {
                let (va, vb) = (out.get(a, c), out.get(b, c));
                out.set(a, c, vb);
                out.set(b, c, va);
            }
        }
    }
    if vertical {
        for r in 0..out.rows() {
            out.row_mut(r).reverse();
        }
    }
    out
}

/// Normalize a scape to zero mean and unit standard deviation (population
/// statistics over all cells).
pub fn normalize_scape(scape: &Energyscape) -> Result<Energyscape> {
    let n = scape.values().len() as f64;
    let mean = scape.values().iter().sum::<f64>() / n;
    let var = scape
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::degenerate("constant scape has zero variance"));
    }
    let mut out = scape.clone();
    for v in out.values_mut() {
        *v = (*v - mean) / std;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Persistence: single binary file, f32 payload
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"VPM1";

/// Write the fitted pipeline: header (magic, version, scape rows/cols,
/// pool kernel, dims, component count, whitening eps, range resolution),
/// then f32 arrays in order: mean scape, PCA mean, eigenvalues, basis.
pub fn write_pipeline_model(path: &Path, model: &PipelineModel) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(model.mean_scape.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.mean_scape.cols() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.pool_kernel as u32).to_le_bytes());
    buf.extend_from_slice(&(model.dims as u64).to_le_bytes());
    buf.extend_from_slice(&(model.n_components as u32).to_le_bytes());
    buf.extend_from_slice(&model.whiten_eps.to_le_bytes());
    buf.extend_from_slice(&model.mean_scape.range_resolution.to_le_bytes());
    let write_f32 = |values: &[f64], buf: &mut Vec<u8>| {
        for v in values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    write_f32(model.mean_scape.values(), &mut buf);
    write_f32(&model.pca_mean, &mut buf);
    write_f32(&model.pca_eigenvalues, &mut buf);
    write_f32(&model.pca_basis, &mut buf);
    atomic_write(path, &buf)
}

/// Read a pipeline model written by [`write_pipeline_model`].
pub fn read_pipeline_model(path: &Path) -> Result<PipelineModel> {
    let buf = read_bytes(path)?;
    if buf.len() < 44 || &buf[0..4] != MODEL_MAGIC {
        return Err(Error::format(path, "missing VPM1 magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::format(path, format!("unsupported version {}", version)));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let pool_kernel = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as usize;
    let dims = u64::from_le_bytes(buf[20..28].try_into().unwrap()) as usize;
    let n_components = u32::from_le_bytes(buf[28..32].try_into().unwrap()) as usize;
    let whiten_eps = f64::from_le_bytes(buf[32..40].try_into().unwrap());
    let range_resolution = f64::from_le_bytes(buf[40..48].try_into().unwrap());
    let mut offset = 48usize;
    let mut take = |count: usize| -> Result<Vec<f64>> {
        let bytes = count * 4;
        if buf.len() < offset + bytes {
            return Err(Error::format(path, "truncated payload"));
        }
        let out = buf[offset..offset + bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        offset += bytes;
        Ok(out)
    };
    let mean_values = take(rows * cols)?;
    let pca_mean = take(dims)?;
    let pca_eigenvalues = take(n_components)?;
    let pca_basis = take(n_components * dims)?;
    if offset != buf.len() {
        return Err(Error::format(path, "trailing bytes"));
    }
    let mean_scape = Energyscape::from_values(mean_values, rows, cols, range_resolution)?;
    Ok(PipelineModel {
        mean_scape,
        pool_kernel,
        pca_mean,
        pca_basis,
        pca_eigenvalues,
        n_components,
        dims,
        whiten_eps,
    })
}

// ---------------------------------------------------------------------------
// Feature CSV
// ---------------------------------------------------------------------------

/// Export features as CSV with a header row: `sample,f000,f001,...`.
pub fn write_features_csv(path: &Path, ids: &[String], features: &FeatureMatrix) -> Result<()> {
    if ids.len() != features.rows() {
        return Err(Error::parameter(format!(
            "{} ids for {} feature rows",
            ids.len(),
            features.rows()
        )));
    }
    let mut out = String::from("sample");
    for j in 0..features.cols() {
        out.push_str(&format!(",f{:03}", j));
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in features.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Read features written by [`write_features_csv`].
pub fn read_features_csv(path: &Path) -> Result<(Vec<String>, FeatureMatrix)> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::format(path, "not valid UTF-8"))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let cols = header.split(',').count() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        ids.push(
            fields
                .next()
                .ok_or_else(|| Error::format(path, format!("line {}: empty", i + 2)))?
                .to_string(),
        );
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, format!("line {}: bad value", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != cols {
            return Err(Error::format(
                path,
                format!("line {}: {} values, expected {}", i + 2, row.len(), cols),
            ));
        }
        rows.push(row);
    }
    Ok((ids, FeatureMatrix::from_rows(&rows)?))
}

// ===========================================================================
// Tests
// ===========================================================================
