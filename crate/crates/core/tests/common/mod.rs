//! Shared helpers for the integration and acceptance suites: independent
//! brute-force oracles and the full processing chain.

use std::collections::BTreeSet;

use rand::Rng;
use sonarscape::beamform::{build_energyscape, ArrayGeometry, DirectionList, Energyscape};
use sonarscape::ml::{FeatureMatrix, LabelMatrix};
use sonarscape::seed::rng_for;
use sonarscape::signal::{
    matched_filter, pdm_decode, pdm_encode, PdmFrame, Waveform,
};
use sonarscape::simulate::{render_echoes, RenderParams, Scene};

// ---------------------------------------------------------------------------
// Brute-force metric oracles (kept deliberately independent of the library
// implementations: precision/recall route for F1, direct contingency
// arithmetic for kappa, exhaustive candidate scan for Youden).
// ---------------------------------------------------------------------------

/// Per-class F1 via precision and recall, plus the support-weighted mean.
pub fn oracle_f1(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> (Vec<f64>, f64) {
    let classes = truth[0].len();
    let mut per_class = Vec::new();
    let mut supports = Vec::new();
    for c in 0..classes {
        let mut tp = 0usize;
        let mut pred_pos = 0usize;
        let mut true_pos = 0usize;
        for (t, p) in truth.iter().zip(pred) {
            if p[c] == 1 {
                pred_pos += 1;
            }
            if t[c] == 1 {
                true_pos += 1;
            }
            if t[c] == 1 && p[c] == 1 {
                tp += 1;
            }
        }
        let f1 = if pred_pos == 0 || true_pos == 0 || tp == 0 {
            // P or R undefined/zero: F1 is zero unless both are perfect-empty
            0.0
        } else {
            let precision = tp as f64 / pred_pos as f64;
            let recall = tp as f64 / true_pos as f64;
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(f1);
        supports.push(true_pos);
    }
    let total: usize = supports.iter().sum();
    let weighted = if total == 0 {
        0.0
    } else {
        per_class
            .iter()
            .zip(&supports)
            .map(|(f, s)| f * *s as f64)
            .sum::<f64>()
            / total as f64
    };
    (per_class, weighted)
}

/// Per-class binary kappa from the 2x2 contingency table.
pub fn oracle_kappa(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> (Vec<f64>, f64) {
    let n = truth.len() as f64;
    let classes = truth[0].len();
    let mut per_class = Vec::new();
    let mut supports = Vec::new();
    for c in 0..classes {
        let mut counts = [[0.0f64; 2]; 2]; // [truth][pred]
        for (t, p) in truth.iter().zip(pred) {
            counts[t[c] as usize][p[c] as usize] += 1.0;
        }
        let p_o = (counts[0][0] + counts[1][1]) / n;
        let truth_pos = counts[1][0] + counts[1][1];
        let truth_neg = counts[0][0] + counts[0][1];
        let pred_pos = counts[0][1] + counts[1][1];
        let pred_neg = counts[0][0] + counts[1][0];
        let p_e = (truth_pos * pred_pos + truth_neg * pred_neg) / (n * n);
        let kappa = if (1.0 - p_e).abs() < 1e-15 {
            0.0
        } else {
            (p_o - p_e) / (1.0 - p_e)
        };
        per_class.push(kappa);
        supports.push(truth_pos as usize);
    }
    let total: usize = supports.iter().sum();
    let weighted = if total == 0 {
        0.0
    } else {
        per_class
            .iter()
            .zip(&supports)
            .map(|(k, s)| k * *s as f64)
            .sum::<f64>()
            / total as f64
    };
    (per_class, weighted)
}

/// Exhaustive Youden scan for one class: all midpoints between consecutive
/// distinct sorted scores plus one candidate above the maximum; ties go to
/// the larger threshold; positives are `score >= threshold`.
pub fn oracle_youden(scores: &[f64], truth: &[u8]) -> f64 {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates: Vec<f64> = distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    candidates.push(distinct.last().unwrap() + 1.0);
    let pos = truth.iter().filter(|t| **t == 1).count() as f64;
    let neg = truth.len() as f64 - pos;
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &t in &candidates {
        let mut tpr = 0.0;
        let mut fpr = 0.0;
        for (s, y) in scores.iter().zip(truth) {
            if *s >= t {
                if *y == 1 {
                    tpr += 1.0;
                } else {
                    fpr += 1.0;
                }
            }
        }
        let j = tpr / pos - fpr / neg;
        if j > best.0 || (j == best.0 && t > best.1) {
            best = (j, t);
        }
    }
    best.1
}

// ---------------------------------------------------------------------------
// Random test-case generators
// ---------------------------------------------------------------------------

pub fn random_labels(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<u8>> {
    loop {
        let data: Vec<Vec<u8>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_bool(0.4) as u8).collect())
            .collect();
        // keep every class mixed so kappa/youden preconditions hold
        let ok = (0..cols).all(|c| {
            let pos = data.iter().filter(|r| r[c] == 1).count();
            pos > 0 && pos < rows
        });
        if ok {
            return data;
        }
    }
}

pub fn to_label_matrix(rows: &[Vec<u8>]) -> LabelMatrix {
    let cols = rows[0].len();
    let names: Vec<String> = (0..cols).map(|c| format!("c{}", c)).collect();
    let flat: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    LabelMatrix::new(flat, rows.len(), cols, names).unwrap()
}

pub fn to_score_matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows).unwrap()
}

// ---------------------------------------------------------------------------
// Full processing chain
// ---------------------------------------------------------------------------

/// render -> PDM encode -> decode -> matched filter -> energyscape, with the
/// dataset generator's fixed front-end gain.
pub fn full_chain_scape(
    scene: &Scene,
    geom: &ArrayGeometry,
    chirp: &Waveform,
    params: &RenderParams,
    oversample: usize,
    dirs: &DirectionList,
) -> Energyscape {
    let mut channels = render_echoes(scene, geom, chirp, params).unwrap();
    let peak = channels
        .iter()
        .flat_map(|c| c.samples.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.9 {
        let s = 0.9 / peak;
        for ch in &mut channels {
            for v in &mut ch.samples {
                *v *= s;
            }
        }
    }
    let encoded: Vec<_> = channels
        .iter()
        .map(|ch| pdm_encode(ch, oversample).unwrap())
        .collect();
    let frame = PdmFrame::new(encoded, chirp.sample_rate * oversample as f64).unwrap();
    let decoded = pdm_decode(&frame).unwrap();
    let filtered: Vec<Waveform> = decoded
        .iter()
        .map(|ch| matched_filter(ch, chirp).unwrap())
        .collect();
    build_energyscape(&filtered, geom, dirs).unwrap()
}

/// A band-limited multi-tone test signal: `k` tones below 60 kHz with a
/// combined peak amplitude of at most 0.9.
pub fn band_limited_signal(seed: u64, n: usize) -> Waveform {
    let mut rng = rng_for(seed, "bandlimited", 0);
    let k = rng.random_range(2..6);
    let tones: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(5_000.0..60_000.0),
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let fs = sonarscape::signal::BASEBAND_RATE;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            tones
                .iter()
                .map(|(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                .sum()
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut samples {
        *v *= 0.9 / peak;
    }
    Waveform {
        samples,
        sample_rate: fs,
    }
}

/// Single-reflector scene helper.
pub fn point_scene(az: f64, el: f64, range_m: f64, amplitude: f64) -> Scene {
    Scene {
        reflectors: vec![sonarscape::simulate::Reflector {
            azimuth_deg: az,
            elevation_deg: el,
            range_m,
            amplitude,
        }],
        material: sonarscape::simulate::Material::Asphalt,
        damages: BTreeSet::new(),
        seed: 0,
    }
}
