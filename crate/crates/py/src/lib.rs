//! Python bindings for the main types and operations of the pipeline:
//! chirp/PDM signal processing, beamforming, CFAR cleanup, preprocessing
//! utilities, the one-vs-rest training protocol helpers and the evaluation
//! metrics.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sonarscape::beamform::{
    build_energyscape, cfar_cleanup, steering_delays, ArrayGeometry, Direction, DirectionList,
    Energyscape,
};
use sonarscape::ml::{FeatureMatrix, LabelMatrix, ScalingSpec};
use sonarscape::signal::{ChirpSpec, PdmChannel, PdmFrame, Waveform};
use sonarscape::simulate::{render_echoes, Reflector, RenderParams, Scene};
use sonarscape::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn wave(samples: Vec<f64>, sample_rate: f64) -> PyResult<Waveform> {
    Waveform::new(samples, sample_rate).map_err(to_py_err)
}

fn geometry(positions: Vec<(f64, f64, f64)>, speed_of_sound: f64) -> PyResult<ArrayGeometry> {
    ArrayGeometry::new(
        positions.into_iter().map(|(x, y, z)| [x, y, z]).collect(),
        speed_of_sound,
    )
    .map_err(to_py_err)
}

fn scape_rows(scape: &Energyscape) -> Vec<Vec<f64>> {
    (0..scape.rows()).map(|r| scape.row(r).to_vec()).collect()
}

fn scape_from_rows(rows: Vec<Vec<f64>>, range_resolution: f64) -> PyResult<Energyscape> {
    let n_rows = rows.len();
    let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Energyscape::from_values(flat, n_rows, n_cols, range_resolution).map_err(to_py_err)
}

fn labels_from_rows(rows: Vec<Vec<u8>>) -> PyResult<LabelMatrix> {
    let s = rows.len();
    let c = rows.first().map(|r| r.len()).unwrap_or(0);
    let names: Vec<String> = (0..c).map(|i| format!("class{}", i)).collect();
    let flat: Vec<u8> = rows.into_iter().flatten().collect();
    LabelMatrix::new(flat, s, c, names).map_err(to_py_err)
}

/// Hyperbolic chirp samples for the given sweep.
#[pyfunction]
#[pyo3(signature = (f_start=20_000.0, f_end=50_000.0, duration_s=2.5e-3, sample_rate=450_000.0))]
fn chirp(f_start: f64, f_end: f64, duration_s: f64, sample_rate: f64) -> PyResult<Vec<f64>> {
    let spec = ChirpSpec {
        f_start,
        f_end,
        duration: duration_s,
        sample_rate,
    };
    Ok(sonarscape::signal::generate_chirp(&spec)
        .map_err(to_py_err)?
        .samples)
}

/// Sigma-delta encode one channel; returns `(packed_bytes, bit_count)`,
/// bits LSB-first within each byte.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate=450_000.0, oversample=10))]
fn pdm_encode(samples: Vec<f64>, sample_rate: f64, oversample: usize) -> PyResult<(Vec<u8>, usize)> {
    let w = wave(samples, sample_rate)?;
    let ch = sonarscape::signal::pdm_encode(&w, oversample).map_err(to_py_err)?;
    let bits = ch.len();
    Ok((ch.packed_bytes().to_vec(), bits))
}

/// Decode packed PDM channels (`(packed_bytes, bit_count)` pairs) recorded
/// at `pdm_rate` down to 450 kHz waveforms.
#[pyfunction]
#[pyo3(signature = (channels, pdm_rate=4_500_000.0))]
fn pdm_decode(channels: Vec<(Vec<u8>, usize)>, pdm_rate: f64) -> PyResult<Vec<Vec<f64>>> {
    let chans: Vec<PdmChannel> = channels
        .into_iter()
        .map(|(packed, bits)| PdmChannel::from_packed(packed, bits).map_err(to_py_err))
        .collect::<PyResult<Vec<_>>>()?;
    let frame = PdmFrame::new(chans, pdm_rate).map_err(to_py_err)?;
    Ok(sonarscape::signal::pdm_decode(&frame)
        .map_err(to_py_err)?
        .into_iter()
        .map(|w| w.samples)
        .collect())
}

/// Cross-correlate `signal` with `template`; index k is the template onset.
#[pyfunction]
#[pyo3(signature = (signal, template, sample_rate=450_000.0))]
fn matched_filter(signal: Vec<f64>, template: Vec<f64>, sample_rate: f64) -> PyResult<Vec<f64>> {
    let s = wave(signal, sample_rate)?;
    let t = wave(template, sample_rate)?;
    Ok(sonarscape::signal::matched_filter(&s, &t)
        .map_err(to_py_err)?
        .samples)
}

/// Magnitude of the analytic signal.
#[pyfunction]
#[pyo3(signature = (signal, sample_rate=450_000.0))]
fn envelope(signal: Vec<f64>, sample_rate: f64) -> PyResult<Vec<f64>> {
    let s = wave(signal, sample_rate)?;
    Ok(sonarscape::signal::envelope(&s).map_err(to_py_err)?.samples)
}

/// Peak normalized cross-correlation over integer lags, in [0, 1].
#[pyfunction]
fn peak_correlation(a: Vec<f64>, b: Vec<f64>) -> f64 {
    sonarscape::signal::peak_normalized_correlation(&a, &b)
}

/// The deterministic 32-microphone Poisson-disc layout: `(positions,
/// speed_of_sound)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn default_geometry(seed: u64) -> (Vec<(f64, f64, f64)>, f64) {
    let geom = sonarscape::beamform::default_geometry(seed);
    (
        geom.positions.iter().map(|p| (p[0], p[1], p[2])).collect(),
        geom.speed_of_sound,
    )
}

/// The standard 91-direction grid as `(azimuth_deg, elevation_deg)` pairs.
#[pyfunction]
fn standard_directions() -> Vec<(f64, f64)> {
    DirectionList::standard()
        .iter()
        .map(|d| (d.azimuth_deg, d.elevation_deg))
        .collect()
}

/// Per-microphone steering delays (seconds), shifted so the minimum is 0.
#[pyfunction]
fn delays(
    positions: Vec<(f64, f64, f64)>,
    speed_of_sound: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> PyResult<Vec<f64>> {
    let geom = geometry(positions, speed_of_sound)?;
    let dir = Direction::new(azimuth_deg, elevation_deg).map_err(to_py_err)?;
    Ok(steering_delays(&geom, &dir))
}

/// Render point reflectors `(azimuth_deg, elevation_deg, range_m, amplitude)`
/// to one echo signal per microphone.
#[pyfunction]
#[pyo3(signature = (reflectors, positions, speed_of_sound, template, n_samples, noise_db=f64::INFINITY, seed=0, sample_rate=450_000.0))]
#[allow(clippy::too_many_arguments)]
fn render_reflectors(
    reflectors: Vec<(f64, f64, f64, f64)>,
    positions: Vec<(f64, f64, f64)>,
    speed_of_sound: f64,
    template: Vec<f64>,
    n_samples: usize,
    noise_db: f64,
    seed: u64,
    sample_rate: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let geom = geometry(positions, speed_of_sound)?;
    let scene = Scene {
        reflectors: reflectors
            .into_iter()
            .map(|(az, el, r, a)| Reflector {
                azimuth_deg: az,
                elevation_deg: el,
                range_m: r,
                amplitude: a,
            })
            .collect(),
        material: sonarscape::simulate::Material::Asphalt,
        damages: Default::default(),
        seed,
    };
    let chirp = wave(template, sample_rate)?;
    let params = RenderParams {
        n_samples,
        noise_db,
        seed,
    };
    Ok(render_echoes(&scene, &geom, &chirp, &params)
        .map_err(to_py_err)?
        .into_iter()
        .map(|w| w.samples)
        .collect())
}

/// Delay-and-sum + envelope over the 91-direction grid; returns
/// `(rows, range_resolution)` with one row per direction.
#[pyfunction]
fn energyscape(
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
    positions: Vec<(f64, f64, f64)>,
    speed_of_sound: f64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let geom = geometry(positions, speed_of_sound)?;
    let waves: Vec<Waveform> = channels
        .into_iter()
        .map(|s| wave(s, sample_rate))
        .collect::<PyResult<Vec<_>>>()?;
    let scape =
        build_energyscape(&waves, &geom, &DirectionList::standard()).map_err(to_py_err)?;
    let res = scape.range_resolution;
    Ok((scape_rows(&scape), res))
}

/// CFAR-style cleanup of an energyscape given as rows.
#[pyfunction]
#[pyo3(signature = (rows, guard=4, train=16, min_floor=1e-12))]
fn cfar(rows: Vec<Vec<f64>>, guard: usize, train: usize, min_floor: f64) -> PyResult<Vec<Vec<f64>>> {
    let scape = scape_from_rows(rows, 1.0)?;
    let out = cfar_cleanup(&scape, guard, train, min_floor).map_err(to_py_err)?;
    Ok(scape_rows(&out))
}

/// Non-overlapping max-pool along the range axis.
#[pyfunction]
fn maxpool_range(rows: Vec<Vec<f64>>, kernel: usize) -> PyResult<Vec<Vec<f64>>> {
    let scape = scape_from_rows(rows, 1.0)?;
    let out = sonarscape::features::maxpool_range(&scape, kernel).map_err(to_py_err)?;
    Ok(scape_rows(&out))
}

/// Balanced class weights `w_i = S / (C * count_i)` of a binary label matrix.
#[pyfunction]
fn balanced_class_weights(labels: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
    sonarscape::ml::balanced_class_weights(&labels_from_rows(labels)?).map_err(to_py_err)
}

/// RBF kernel scale `1 / (F * Var[X])`.
#[pyfunction]
fn rbf_gamma(features: Vec<Vec<f64>>) -> PyResult<f64> {
    let x = FeatureMatrix::from_rows(&features).map_err(to_py_err)?;
    sonarscape::ml::rbf_gamma(&x).map_err(to_py_err)
}

/// Resolve the CNN uniform-scaling arithmetic; returns a dict with the raw
/// ratios, rounded sizes, and residual block count.
#[pyfunction]
fn resolve_cnn_scaling(
    py: Python<'_>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    phi: f64,
    d0: u32,
    w0: u32,
    r0: u32,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let spec = ScalingSpec {
        alpha,
        beta,
        gamma,
        phi,
        d0,
        w0,
        r0,
    };
    let r = sonarscape::ml::resolve_cnn_scaling(&spec).map_err(to_py_err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("raw_depth", r.raw_depth)?;
    dict.set_item("raw_width", r.raw_width)?;
    dict.set_item("raw_interval", r.raw_interval)?;
    dict.set_item("depth", r.depth)?;
    dict.set_item("width", r.width)?;
    dict.set_item("interval", r.interval)?;
    dict.set_item("residual_blocks", r.residual_blocks)?;
    Ok(dict.into())
}

/// Support-weighted F1: `(per_class, weighted)`.
#[pyfunction]
fn f1_weighted(y_true: Vec<Vec<u8>>, y_pred: Vec<Vec<u8>>) -> PyResult<(Vec<f64>, f64)> {
    let m = sonarscape::eval::f1_weighted(&labels_from_rows(y_true)?, &labels_from_rows(y_pred)?)
        .map_err(to_py_err)?;
    Ok((m.per_class, m.weighted))
}

/// Support-weighted Cohen's kappa: `(per_class, weighted)`.
#[pyfunction]
fn cohens_kappa_weighted(y_true: Vec<Vec<u8>>, y_pred: Vec<Vec<u8>>) -> PyResult<(Vec<f64>, f64)> {
    let m = sonarscape::eval::cohens_kappa_weighted(
        &labels_from_rows(y_true)?,
        &labels_from_rows(y_pred)?,
    )
    .map_err(to_py_err)?;
    Ok((m.per_class, m.weighted))
}

/// Per-class Youden-J thresholds from validation scores.
#[pyfunction]
fn youden_thresholds(scores: Vec<Vec<f64>>, y_true: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
    let s = FeatureMatrix::from_rows(&scores).map_err(to_py_err)?;
    sonarscape::eval::youden_thresholds(&s, &labels_from_rows(y_true)?).map_err(to_py_err)
}

/// Binary-integer stratification key of one label row (LSB = class 0).
#[pyfunction]
fn stratification_key(row: Vec<u8>) -> PyResult<u64> {
    sonarscape::eval::stratification_key(&row).map_err(to_py_err)
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn _sonarscape(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(chirp, m)?)?;
    m.add_function(wrap_pyfunction!(pdm_encode, m)?)?;
    m.add_function(wrap_pyfunction!(pdm_decode, m)?)?;
    m.add_function(wrap_pyfunction!(matched_filter, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(peak_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(default_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(standard_directions, m)?)?;
    m.add_function(wrap_pyfunction!(delays, m)?)?;
    m.add_function(wrap_pyfunction!(render_reflectors, m)?)?;
    m.add_function(wrap_pyfunction!(energyscape, m)?)?;
    m.add_function(wrap_pyfunction!(cfar, m)?)?;
    m.add_function(wrap_pyfunction!(maxpool_range, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_cnn_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(f1_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(youden_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(stratification_key, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
