//! Array geometry, steering delays, delay-and-sum beamforming over the
//! 91-direction grid, and CFAR-style energyscape cleanup.
//!
//! Directions use the spherical convention
//!
//! ```text
//! u(az, el) = (cos el * sin az, sin el, cos el * cos az)
//! ```
//!
//! with z the array boresight; `u` points from the array toward the steered
//! direction, so the propagation vector of an incoming wave is `-u` and the
//! steering delay of microphone `i` is `-(p_i . u_prop)/c = (p_i . u)/c`,
//! shifted so the smallest delay is zero.
//!
//! Energyscape rows are aligned to the array phase center (the origin): a
//! reflector at range `r` peaks at range bin `2 r fs / c` regardless of the
//! steering direction.

mod scape;

pub use scape::{
    read_energyscape, read_energyscape_csv, write_energyscape, write_energyscape_csv, Energyscape,
};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};
use crate::seed::rng_for;
use crate::signal::{relative_ne, EnvelopeTransform, Waveform};

/// Default propagation speed in air (m/s).
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Microphone count of the standard array.
pub const NUM_CHANNELS: usize = 32;
/// Default CFAR window: guard cells skipped on each side of the cell.
pub const CFAR_GUARD: usize = 4;
/// Default CFAR window: training cells averaged on each side.
pub const CFAR_TRAIN: usize = 16;
/// Default lower clamp on the CFAR background estimate.
pub const CFAR_MIN_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Directions
// ---------------------------------------------------------------------------

/// A steering direction in degrees, both angles within +/-90.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Direction {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&azimuth_deg) || !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(Error::parameter(format!(
                "direction ({}, {}) outside +/-90 degrees",
                azimuth_deg, elevation_deg
            )));
        }
        Ok(Direction {
            azimuth_deg,
            elevation_deg,
        })
    }

    /// Unit vector toward the steered direction (z = boresight).
    pub fn unit_vector(&self) -> [f64; 3] {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()]
    }
}

/// The ordered direction grid used for beamforming.
///
/// Azimuth is the major axis and elevation the minor (fastest-cycling) one:
/// entry `i` has azimuth index `i / n_elevation` and elevation index
/// `i % n_elevation`. The standard grid is 13 azimuths x 7 elevations = 91
/// directions, both spanning -90..=+90 degrees inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionList {
    directions: Vec<Direction>,
    pub n_azimuth: usize,
    pub n_elevation: usize,
}

impl DirectionList {
    /// Uniform inclusive grid; needs at least 2 steps per axis.
    pub fn grid(n_azimuth: usize, n_elevation: usize) -> Result<Self> {
        if n_azimuth < 2 || n_elevation < 2 {
            return Err(Error::parameter("grid needs at least 2x2 directions"));
        }
        let mut directions = Vec::with_capacity(n_azimuth * n_elevation);
        for a in 0..n_azimuth {
            let az = -90.0 + 180.0 * a as f64 / (n_azimuth - 1) as f64;
            for e in 0..n_elevation {
                let el = -90.0 + 180.0 * e as f64 / (n_elevation - 1) as f64;
                directions.push(Direction {
                    azimuth_deg: az,
                    elevation_deg: el,
                });
            }
        }
        Ok(DirectionList {
            directions,
            n_azimuth,
            n_elevation,
        })
    }

    /// The standard 91-direction grid (13 azimuths x 7 elevations).
    pub fn standard() -> Self {
        Self::grid(13, 7).expect("standard grid")
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, i: usize) -> Direction {
        self.directions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Direction> {
        self.directions.iter()
    }

    /// Flat index of (azimuth index, elevation index).
    pub fn index_of(&self, az_idx: usize, el_idx: usize) -> usize {
        az_idx * self.n_elevation + el_idx
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Microphone positions in meters plus the propagation speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub positions: Vec<[f64; 3]>,
    pub speed_of_sound: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::parameter("geometry needs at least one microphone"));
        }
        if !(speed_of_sound > 0.0) {
            return Err(Error::parameter("speed_of_sound must be > 0"));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let d = dist3(&positions[i], &positions[j]);
                if d == 0.0 {
                    return Err(Error::parameter(format!(
                        "microphones {} and {} coincide",
                        i, j
                    )));
                }
            }
        }
        Ok(ArrayGeometry {
            positions,
            speed_of_sound,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Stand-in for the unpublished sensor layout: 32 microphones by
/// Poisson-disc sampling (minimum spacing 8 mm) on an 80 mm x 80 mm plane
/// at z = 0, deterministic for a given seed. The shipped default uses seed 0.
pub fn default_geometry(seed: u64) -> ArrayGeometry {
    let mut rng = rng_for(seed, "geometry", 0);
    let mut positions: Vec<[f64; 3]> = Vec::with_capacity(NUM_CHANNELS);
    let mut attempts = 0u32;
    while positions.len() < NUM_CHANNELS {
        attempts += 1;
        assert!(attempts < 1_000_000, "poisson-disc sampling stalled");
        let x = rng.random_range(-0.04..=0.04);
        let y = rng.random_range(-0.04..=0.04);
        let candidate = [x, y, 0.0];
        if positions
            .iter()
            .all(|p| dist3(p, &candidate) >= 0.008)
        {
            positions.push(candidate);
        }
    }
    ArrayGeometry {
        positions,
        speed_of_sound: SPEED_OF_SOUND,
    }
}

// ---------------------------------------------------------------------------
// Steering + delay-and-sum
// ---------------------------------------------------------------------------

/// Per-microphone steering delays (seconds) for `dir`, shifted so the
/// smallest delay is zero.
pub fn steering_delays(geom: &ArrayGeometry, dir: &Direction) -> Vec<f64> {
    let u = dir.unit_vector();
    let mut delays: Vec<f64> = geom
        .positions
        .iter()
        .map(|p| dot3(p, &u) / geom.speed_of_sound)
        .collect();
    let min = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    for d in &mut delays {
        *d -= min;
    }
    delays
}

/// Shift each channel right by `round(delay * fs)` samples, sum, and divide
/// by the channel count. Output length equals the input length.
pub fn delay_and_sum(channels: &[Waveform], delays: &[f64]) -> Result<Waveform> {
    validate_channels(channels)?;
    if delays.len() != channels.len() {
        return Err(Error::parameter(format!(
            "{} delays for {} channels",
            delays.len(),
            channels.len()
        )));
    }
    if delays.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::parameter("delays must be finite and >= 0"));
    }
    let fs = channels[0].sample_rate;
    let shifts: Vec<usize> = delays.iter().map(|d| (d * fs).round() as usize).collect();
    Ok(Waveform {
        samples: das_into(channels, &shifts),
        sample_rate: fs,
    })
}

fn validate_channels(channels: &[Waveform]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::parameter("no channels"));
    }
    let n = channels[0].len();
    let fs = channels[0].sample_rate;
    for (i, ch) in channels.iter().enumerate() {
        if ch.len() != n {
            return Err(Error::parameter(format!(
                "channel {} length {} differs from {}",
                i,
                ch.len(),
                n
            )));
        }
        if relative_ne(ch.sample_rate, fs) {
            return Err(Error::parameter(format!(
                "channel {} sample rate {} differs from {}",
                i, ch.sample_rate, fs
            )));
        }
    }
    Ok(())
}

/// Core delay-and-sum: channels shifted right by integer sample counts,
/// summed in fixed channel order, normalized by the channel count.
fn das_into(channels: &[Waveform], shifts: &[usize]) -> Vec<f64> {
    let n = channels[0].len();
    let mut acc = vec![0.0f64; n];
    for (ch, &t) in channels.iter().zip(shifts) {
        if t >= n {
            continue;
        }
        for k in t..n {
            acc[k] += ch.samples[k - t];
        }
    }
    let scale = 1.0 / channels.len() as f64;
    for v in &mut acc {
        *v *= scale;
    }
    acc
}

/// Signed shift: positive `t` delays (zeros enter at the front), negative
/// `t` advances (zeros enter at the tail).
fn shift_signed(x: &[f64], t: i64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if t >= 0 {
        let t = t as usize;
        if t < n {
            out[t..].copy_from_slice(&x[..n - t]);
        }
    } else {
        let t = (-t) as usize;
        if t < n {
            out[..n - t].copy_from_slice(&x[t..]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Energyscape construction
// ---------------------------------------------------------------------------

/// Beamform matched-filtered channels into an energyscape.
///
/// For each direction: delay-and-sum with that direction's steering delays,
/// re-align to the array phase center, then envelope-detect. Rows are
/// stacked in `dirs` order; `range_resolution = c / (2 fs)`.
///
/// The direction loop is a parallel map; each row's arithmetic runs in a
/// fixed order so results are identical regardless of thread count.
pub fn build_energyscape(
    channels: &[Waveform],
    geom: &ArrayGeometry,
    dirs: &DirectionList,
) -> Result<Energyscape> {
    validate_channels(channels)?;
    if channels.len() != geom.len() {
        return Err(Error::parameter(format!(
            "{} channels for {} microphones",
            channels.len(),
            geom.len()
        )));
    }
    let n = channels[0].len();
    let fs = channels[0].sample_rate;
    let env = EnvelopeTransform::new(n)?;
    let c = geom.speed_of_sound;

    let rows: Vec<Vec<f64>> = (0..dirs.len())
        .into_par_iter()
        .map(|di| {
            let u = dirs.get(di).unit_vector();
            let raw: Vec<f64> = geom.positions.iter().map(|p| dot3(p, &u) / c).collect();
            let s0 = raw.iter().cloned().fold(f64::INFINITY, f64::min);
            let shifts: Vec<usize> = raw.iter().map(|d| ((d - s0) * fs).round() as usize).collect();
            let summed = das_into(channels, &shifts);
            // remove the common shift so range bins are phase-center aligned
            let aligned = shift_signed(&summed, (s0 * fs).round() as i64);
            env.apply(&aligned)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scape = Energyscape::zeros(dirs.len(), n, c / (2.0 * fs));
    for (r, row) in rows.into_iter().enumerate() {
        scape.row_mut(r).copy_from_slice(&row);
    }
    scape.directions = Some(dirs.clone());
    Ok(scape)
}

// ---------------------------------------------------------------------------
// CFAR cleanup
// ---------------------------------------------------------------------------

/// Constant-false-alarm-rate style cleanup: each cell is divided by the mean
/// of its training cells along the range axis (`train` cells on each side,
/// skipping `guard` cells next to the cell), with the background estimate
/// clamped below by `min_floor`. Cells near the row ends use the training
/// cells that exist.
pub fn cfar_cleanup(
    scape: &Energyscape,
    guard: usize,
    train: usize,
    min_floor: f64,
) -> Result<Energyscape> {
    if train < 1 {
        return Err(Error::parameter("train must be >= 1"));
    }
    if !(min_floor > 0.0) {
        return Err(Error::parameter("min_floor must be > 0"));
    }
    let cols = scape.cols();
    let window = 2 * (guard + train) + 1;
    if cols < window {
        return Err(Error::parameter(format!(
            "row length {} shorter than CFAR window {}",
            cols, window
        )));
    }

    let mut out = Energyscape::zeros(scape.rows(), cols, scape.range_resolution);
    out.directions = scape.directions.clone();
    for r in 0..scape.rows() {
        let row = scape.row(r);
        // prefix sums for O(1) window sums
        let mut prefix = Vec::with_capacity(cols + 1);
        prefix.push(0.0);
        for v in row {
            prefix.push(prefix.last().unwrap() + v);
        }
        let window_sum = |lo: isize, hi: isize| -> (f64, usize) {
            // inclusive cell range clipped to the row
            let lo = lo.max(0) as usize;
            if hi < 0 {
                return (0.0, 0);
            }
            let hi = (hi as usize).min(cols - 1);
            if lo > hi {
                return (0.0, 0);
            }
            (prefix[hi + 1] - prefix[lo], hi - lo + 1)
        };
        let dst = out.row_mut(r);
        for (j, slot) in dst.iter_mut().enumerate() {
            let j_i = j as isize;
            let g = guard as isize;
            let t = train as isize;
            let (left, nl) = window_sum(j_i - g - t, j_i - g - 1);
            let (right, nr) = window_sum(j_i + g + 1, j_i + g + t);
            let count = nl + nr;
            let mean = if count == 0 {
                0.0
            } else {
                (left + right) / count as f64
            };
            *slot = row[j] / mean.max(min_floor);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Geometry config file
// ---------------------------------------------------------------------------

/// Write the geometry config: a comment header, one `speed_of_sound` line,
/// then one `x y z` row (meters) per microphone.
pub fn write_geometry(path: &Path, geom: &ArrayGeometry) -> Result<()> {
    let mut out = String::from("# microphone array geometry: x y z in meters, one row per element\n");
    out.push_str(&format!("speed_of_sound {}\n", geom.speed_of_sound));
    for p in &geom.positions {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    atomic_write(path, out.as_bytes())
}

/// Read a geometry config written by [`write_geometry`].
pub fn read_geometry(path: &Path) -> Result<ArrayGeometry> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::format(path, "not valid UTF-8"))?;
    let mut speed_of_sound = None;
    let mut positions = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] == "speed_of_sound" {
            if tokens.len() != 2 {
                return Err(Error::format(path, format!("line {}: speed_of_sound needs one value", lineno + 1)));
            }
            speed_of_sound = Some(tokens[1].parse::<f64>().map_err(|_| {
                Error::format(path, format!("line {}: bad speed_of_sound", lineno + 1))
            })?);
        } else {
            if tokens.len() != 3 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected `x y z`", lineno + 1),
                ));
            }
            let mut p = [0.0; 3];
            for (i, tok) in tokens.iter().enumerate() {
                p[i] = tok.parse::<f64>().map_err(|_| {
                    Error::format(path, format!("line {}: bad coordinate", lineno + 1))
                })?;
            }
            positions.push(p);
        }
    }
    let speed = speed_of_sound
        .ok_or_else(|| Error::format(path, "missing speed_of_sound line"))?;
    ArrayGeometry::new(positions, speed).map_err(|e| Error::format(path, e.to_string()))
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use crate::signal::{generate_chirp, ChirpSpec, BASEBAND_RATE};
    use rand::Rng;

    #[test]
    fn standard_grid_has_91_directions_elevation_minor() {
        let dirs = DirectionList::standard();
        assert_eq!(dirs.len(), 91);
        assert_eq!(dirs.n_azimuth, 13);
        assert_eq!(dirs.n_elevation, 7);
        // elevation cycles fastest
        assert_eq!(dirs.get(0).azimuth_deg, -90.0);
        assert_eq!(dirs.get(0).elevation_deg, -90.0);
        assert_eq!(dirs.get(1).azimuth_deg, -90.0);
        assert_eq!(dirs.get(1).elevation_deg, -60.0);
        assert_eq!(dirs.get(7).azimuth_deg, -75.0);
        assert_eq!(dirs.get(7).elevation_deg, -90.0);
        assert_eq!(dirs.get(90).azimuth_deg, 90.0);
        assert_eq!(dirs.get(90).elevation_deg, 90.0);
    }

    #[test]
    fn direction_rejects_out_of_range() {
        assert!(Direction::new(91.0, 0.0).is_err());
        assert!(Direction::new(0.0, -90.1).is_err());
    }

    #[test]
    fn default_geometry_is_deterministic_and_valid() {
        let a = default_geometry(0);
        let b = default_geometry(0);
        assert_eq!(a, b);
        assert_eq!(a.len(), NUM_CHANNELS);
        for (i, p) in a.positions.iter().enumerate() {
            assert!(p[0].abs() <= 0.04 && p[1].abs() <= 0.04);
            assert_eq!(p[2], 0.0);
            for q in &a.positions[i + 1..] {
                assert!(dist3(p, q) >= 0.008);
            }
        }
        // aperture within the sensor housing
        let mut max_d = 0.0f64;
        for (i, p) in a.positions.iter().enumerate() {
            for q in &a.positions[i + 1..] {
                max_d = max_d.max(dist3(p, q));
            }
        }
        assert!(max_d <= 0.2);
        assert_ne!(a, default_geometry(1));
    }

    #[test]
    fn broadside_delays_are_zero() {
        let geom = default_geometry(0);
        let d = steering_delays(&geom, &Direction::new(0.0, 0.0).unwrap());
        assert!(d.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn two_mic_endfire_delay_difference() {
        let geom = ArrayGeometry::new(
            vec![[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]],
            SPEED_OF_SOUND,
        )
        .unwrap();
        let d = steering_delays(&geom, &Direction::new(90.0, 0.0).unwrap());
        let diff = (d[0] - d[1]).abs();
        assert!((diff - 0.05 / 343.0).abs() < 1e-12, "diff {diff}");
        assert_eq!(d.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn mirrored_azimuth_permutes_x_symmetric_geometry() {
        // mics at (+/-x, y): mirroring azimuth swaps the pair's delays
        let geom = ArrayGeometry::new(
            vec![
                [0.02, 0.01, 0.0],
                [-0.02, 0.01, 0.0],
                [0.03, -0.015, 0.0],
                [-0.03, -0.015, 0.0],
            ],
            SPEED_OF_SOUND,
        )
        .unwrap();
        let fwd = steering_delays(&geom, &Direction::new(35.0, 20.0).unwrap());
        let mir = steering_delays(&geom, &Direction::new(-35.0, 20.0).unwrap());
        let perm = [1, 0, 3, 2];
        for i in 0..4 {
            assert!((fwd[i] - mir[perm[i]]).abs() < 1e-15);
        }
    }

    fn noise_channels(n: usize, len: usize, seed: u64) -> Vec<Waveform> {
        (0..n)
            .map(|i| {
                let mut rng = rng_for(seed, "das-noise", i as u64);
                Waveform {
                    samples: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    sample_rate: BASEBAND_RATE,
                }
            })
            .collect()
    }

    #[test]
    fn coherent_sum_has_unit_gain() {
        let base = noise_channels(1, 512, 3).pop().unwrap();
        let channels: Vec<Waveform> = (0..NUM_CHANNELS).map(|_| base.clone()).collect();
        let out = delay_and_sum(&channels, &vec![0.0; NUM_CHANNELS]).unwrap();
        for (a, b) in out.samples.iter().zip(&base.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn incoherent_noise_averages_down() {
        let channels = noise_channels(NUM_CHANNELS, 50_000, 11);
        let out = delay_and_sum(&channels, &vec![0.0; NUM_CHANNELS]).unwrap();
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
        };
        let mean_ch_var: f64 = channels.iter().map(|c| var(&c.samples)).sum::<f64>()
            / NUM_CHANNELS as f64;
        let expect = mean_ch_var / NUM_CHANNELS as f64;
        let got = var(&out.samples);
        assert!(
            (got - expect).abs() / expect < 0.2,
            "variance {got} vs expected {expect}"
        );
    }

    #[test]
    fn steered_signals_sum_coherently() {
        let geom = default_geometry(0);
        let dir = Direction::new(45.0, -30.0).unwrap();
        let delays = steering_delays(&geom, &dir);
        let fs = BASEBAND_RATE;
        let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
        let n = 4096;
        let base_onset = 1500usize;
        let max_shift: usize = delays.iter().map(|d| (d * fs).round() as usize).max().unwrap();

        // each channel carries the chirp advanced by its steering delay
        let channels: Vec<Waveform> = delays
            .iter()
            .map(|d| {
                let onset = base_onset + max_shift - (d * fs).round() as usize;
                let mut samples = vec![0.0; n];
                samples[onset..onset + chirp.len()].copy_from_slice(&chirp.samples);
                Waveform {
                    samples,
                    sample_rate: fs,
                }
            })
            .collect();

        let steered = delay_and_sum(&channels, &delays).unwrap();
        let peak = steered.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        // coherent reference: all channels identical
        let reference: Vec<Waveform> = (0..channels.len()).map(|_| channels[0].clone()).collect();
        let coherent = delay_and_sum(&reference, &vec![0.0; channels.len()]).unwrap();
        let coherent_peak = coherent.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        assert!(
            peak >= 0.95 * coherent_peak,
            "steered peak {peak} vs coherent {coherent_peak}"
        );
    }

    #[test]
    fn delay_and_sum_is_shift_equivariant() {
        let channels = noise_channels(4, 600, 9);
        let delays = vec![1.0 / BASEBAND_RATE, 0.0, 3.0 / BASEBAND_RATE, 2.0 / BASEBAND_RATE];
        let out = delay_and_sum(&channels, &delays).unwrap();
        let k = 7usize;
        let shifted: Vec<Waveform> = channels
            .iter()
            .map(|c| Waveform {
                samples: shift_signed(&c.samples, k as i64),
                sample_rate: c.sample_rate,
            })
            .collect();
        let out_shifted = delay_and_sum(&shifted, &delays).unwrap();
        for j in k..600 {
            assert!((out_shifted.samples[j] - out.samples[j - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_and_sum_rejects_mismatched_inputs() {
        let mut channels = noise_channels(3, 100, 1);
        assert!(delay_and_sum(&channels, &[0.0, 0.0]).is_err());
        assert!(delay_and_sum(&channels, &[0.0, -1.0, 0.0]).is_err());
        channels[1].samples.pop();
        assert!(delay_and_sum(&channels, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn energyscape_rows_follow_direction_order() {
        // a single channel pair with an impulse; rows must be stacked in
        // the same order as the direction list (checked via the tag column)
        let geom = ArrayGeometry::new(
            vec![[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]],
            SPEED_OF_SOUND,
        )
        .unwrap();
        let dirs = DirectionList::grid(2, 2).unwrap();
        let mut samples = vec![0.0; 64];
        samples[10] = 1.0;
        let channels = vec![
            Waveform {
                samples: samples.clone(),
                sample_rate: BASEBAND_RATE,
            },
            Waveform {
                samples,
                sample_rate: BASEBAND_RATE,
            },
        ];
        let scape = build_energyscape(&channels, &geom, &dirs).unwrap();
        assert_eq!(scape.rows(), 4);
        assert_eq!(scape.cols(), 64);
        assert_eq!(
            scape.range_resolution,
            SPEED_OF_SOUND / (2.0 * BASEBAND_RATE)
        );
        // the steering delay pattern is unique per direction; verify each row
        // matches a row built for that single direction alone
        for (i, dir) in dirs.iter().enumerate() {
            let single = DirectionList {
                directions: vec![*dir],
                n_azimuth: 1,
                n_elevation: 1,
            };
            let one = build_energyscape(&channels, &geom, &single).unwrap();
            assert_eq!(scape.row(i), one.row(0), "row {i}");
        }
    }

    #[test]
    fn zero_channels_make_zero_scape() {
        let geom = default_geometry(0);
        let channels: Vec<Waveform> = (0..NUM_CHANNELS)
            .map(|_| Waveform {
                samples: vec![0.0; 128],
                sample_rate: BASEBAND_RATE,
            })
            .collect();
        let scape = build_energyscape(&channels, &geom, &DirectionList::standard()).unwrap();
        assert!(scape.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_size_scape_shape() {
        let geom = default_geometry(0);
        let channels = noise_channels(NUM_CHANNELS, 16384, 21);
        let scape = build_energyscape(&channels, &geom, &DirectionList::standard()).unwrap();
        assert_eq!(scape.rows(), 91);
        assert_eq!(scape.cols(), 16384);
    }

    #[test]
    fn cfar_constant_row_maps_to_one() {
        let mut s = Energyscape::zeros(2, 100, 1.0);
        for c in 0..100 {
            s.set(0, c, 3.5);
            s.set(1, c, 0.25);
        }
        let out = cfar_cleanup(&s, 4, 16, 1e-12).unwrap();
        for c in 0..100 {
            assert!((out.get(0, c) - 1.0).abs() < 1e-12);
            assert!((out.get(1, c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cfar_isolated_peak_stands_out() {
        let mut s = Energyscape::zeros(1, 200, 1.0);
        for c in 0..200 {
            s.set(0, c, 1.0);
        }
        s.set(0, 100, 100.0);
        let out = cfar_cleanup(&s, 4, 16, 1e-12).unwrap();
        assert!(out.get(0, 100) >= 50.0, "peak {}", out.get(0, 100));
    }

    #[test]
    fn cfar_zero_row_stays_zero() {
        let s = Energyscape::zeros(1, 100, 1.0);
        let out = cfar_cleanup(&s, 4, 16, 1e-12).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cfar_is_scale_invariant() {
        let mut rng = rng_for(5, "cfar", 0);
        let mut s = Energyscape::zeros(3, 120, 1.0);
        for r in 0..3 {
            for c in 0..120 {
                s.set(r, c, rng.random_range(0.1..2.0));
            }
        }
        let mut scaled = s.clone();
        for v in scaled.values_mut() {
            *v *= 37.5;
        }
        let a = cfar_cleanup(&s, 4, 16, 1e-12).unwrap();
        let b = cfar_cleanup(&scaled, 4, 16, 1e-12).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn cfar_rejects_short_rows() {
        let s = Energyscape::zeros(1, 40, 1.0);
        assert!(cfar_cleanup(&s, 4, 16, 1e-12).is_err());
        assert!(cfar_cleanup(&s, 0, 0, 1e-12).is_err());
    }

    #[test]
    fn geometry_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("array.geom");
        let geom = default_geometry(0);
        write_geometry(&path, &geom).unwrap();
        let back = read_geometry(&path).unwrap();
        assert_eq!(geom.speed_of_sound, back.speed_of_sound);
        assert_eq!(geom.positions.len(), back.positions.len());
        for (a, b) in geom.positions.iter().zip(&back.positions) {
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
    }
}
