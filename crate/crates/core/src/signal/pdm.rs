//! Pulse-density modulation: first-order sigma-delta encoding and a
//! CIC-style decoder.
//!
//! The decoder runs four cascaded length-M moving averages over the ±1 bit
//! stream (exact integer arithmetic), decimates by M down to the 450 kHz
//! baseband, then applies a droop-compensating FIR whose passband equalizes
//! the moving-average rolloff. The FIR bakes in a fractional advance so that
//! an encode→decode round trip through the canonical modulator is
//! time-aligned to within a small fraction of a sample.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use super::{Waveform, BASEBAND_RATE};
use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};

const CIC_STAGES: usize = 4;
const COMP_TAPS: usize = 41;

// ---------------------------------------------------------------------------
// Bit containers
// ---------------------------------------------------------------------------

/// One channel of 1-bit samples, packed LSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdmChannel {
    packed: Vec<u8>,
    bits: usize,
}

impl PdmChannel {
    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut packed = Vec::new();
        let mut count = 0usize;
        for b in bits {
            if count % 8 == 0 {
                packed.push(0);
            }
            if b {
                *packed.last_mut().unwrap() |= 1 << (count % 8);
            }
            count += 1;
        }
        PdmChannel {
            packed,
            bits: count,
        }
    }

    pub fn from_packed(packed: Vec<u8>, bits: usize) -> Result<Self> {
        if packed.len() != bits.div_ceil(8) {
            return Err(Error::parameter(format!(
                "packed length {} does not hold {} bits",
                packed.len(),
                bits
            )));
        }
        Ok(PdmChannel { packed, bits })
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.packed[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn packed_bytes(&self) -> &[u8] {
        &self.packed
    }

    /// Number of set bits; bit density = ones / len.
    pub fn ones(&self) -> usize {
        let mut total: usize = self.packed.iter().map(|b| b.count_ones() as usize).sum();
        // mask padding bits in the last byte
        let tail = self.bits % 8;
        if tail != 0 {
            let last = *self.packed.last().unwrap();
            total -= (last >> tail).count_ones() as usize;
        }
        total
    }
}

/// A multichannel 1-bit recording.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmFrame {
    pub channels: Vec<PdmChannel>,
    /// Bit rate in Hz (4.5 MHz for the standard sensor).
    pub sample_rate: f64,
}

impl PdmFrame {
    pub fn new(channels: Vec<PdmChannel>, sample_rate: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::parameter("frame needs at least one channel"));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::parameter("sample_rate must be > 0"));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::parameter("channels differ in length"));
        }
        Ok(PdmFrame {
            channels,
            sample_rate,
        })
    }

    pub fn bits_per_channel(&self) -> usize {
        self.channels[0].len()
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// First-order sigma-delta modulation of the `oversample`-times upsampled
/// input (zero-order hold). Output length = input length x oversample bits.
pub fn pdm_encode(w: &Waveform, oversample: usize) -> Result<PdmChannel> {
    if oversample < 2 {
        return Err(Error::parameter("oversample must be >= 2"));
    }
    if let Some(bad) = w.samples.iter().find(|x| x.abs() > 1.0 || !x.is_finite()) {
        return Err(Error::parameter(format!(
            "amplitude out of range for sigma-delta input: {}",
            bad
        )));
    }
    let mut packed = Vec::with_capacity((w.len() * oversample).div_ceil(8));
    let mut bits = 0usize;
    let mut integrator = 0.0f64;
    let mut feedback = 0.0f64;
    for &x in &w.samples {
        for _ in 0..oversample {
            integrator += x - feedback;
            let bit = integrator >= 0.0;
            feedback = if bit { 1.0 } else { -1.0 };
            if bits % 8 == 0 {
                packed.push(0);
            }
            if bit {
                *packed.last_mut().unwrap() |= 1 << (bits % 8);
            }
            bits += 1;
        }
    }
    Ok(PdmChannel { packed, bits })
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Decode every channel of `frame` down to 450 kHz waveforms.
///
/// The decimation factor `frame.sample_rate / 450 kHz` must be integral.
/// A 163840-bit channel at 4.5 MHz yields exactly 16384 output samples.
pub fn pdm_decode(frame: &PdmFrame) -> Result<Vec<Waveform>> {
    let ratio = frame.sample_rate / BASEBAND_RATE;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-6 {
        return Err(Error::parameter(format!(
            "non-integral decimation factor {} from {} Hz",
            ratio, frame.sample_rate
        )));
    }
    let m = m as usize;
    let (fir, advance) = design_compensator(m);
    let out: Vec<Waveform> = frame
        .channels
        .par_iter()
        .map(|ch| Waveform {
            samples: decode_channel(ch, m, &fir, advance),
            sample_rate: BASEBAND_RATE,
        })
        .collect();
    Ok(out)
}

fn decode_channel(ch: &PdmChannel, m: usize, fir: &[f64], advance: usize) -> Vec<f64> {
    let n_bits = ch.len();
    let n_out = n_bits / m;
    if n_out == 0 {
        return Vec::new();
    }

    // cascaded moving sums over the +/-1 stream; values stay within m^4
    let mut cur: Vec<i64> = (0..n_bits)
        .map(|i| if ch.bit(i) { 1 } else { -1 })
        .collect();
    let mut next = vec![0i64; n_bits];
    for _ in 0..CIC_STAGES {
        let mut run = 0i64;
        for i in 0..n_bits {
            run += cur[i];
            if i >= m {
                run -= cur[i - m];
            }
            next[i] = run;
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let norm = 1.0 / (m as f64).powi(CIC_STAGES as i32);
    let decimated: Vec<f64> = (0..n_out)
        .map(|k| cur[(k + 1) * m - 1] as f64 * norm)
        .collect();

    // droop compensation, with the chain's nominal delay removed
    let taps = fir.len();
    let mut out = vec![0.0; n_out];
    for (i, slot) in out.iter_mut().enumerate() {
        let src = i + advance;
        if src >= n_out {
            break;
        }
        let reach = taps.min(src + 1);
        let mut acc = 0.0;
        for (j, &h) in fir.iter().enumerate().take(reach) {
            acc += h * decimated[src - j];
        }
        *slot = acc;
    }
    out
}

/// Magnitude response of the 4-stage length-`m` moving average at output
/// frequency `nu` (cycles per output sample, in [0, 0.5]).
fn cic_response(m: usize, nu: f64) -> f64 {
    if nu == 0.0 {
        return 1.0;
    }
    let num = (PI * nu).sin();
    let den = m as f64 * (PI * nu / m as f64).sin();
    (num / den).powi(CIC_STAGES as i32)
}

/// Design the droop-compensation FIR for decimation factor `m`.
///
/// Passband (0 to 0.25 of the output rate) equalizes 1/Hcic, a raised-cosine
/// transition rolls off to zero by 0.40, and the group delay is offset so
/// that CIC + FIR - advance cancels the canonical encoder's half-slot delay.
/// Returns `(taps, advance_in_output_samples)`.
fn design_compensator(m: usize) -> (Vec<f64>, usize) {
    let mf = m as f64;
    // encoder zero-order hold: (m-1)/(2m); CIC: 2(m-1)/m   [output samples]
    let chain_delay = 2.5 * (mf - 1.0) / mf;
    let advance = ((COMP_TAPS as f64 - 1.0) / 2.0 + chain_delay).round();
    let group_delay = advance - chain_delay;

    let grid = 4096usize;
    let amplitude = |nu: f64| -> f64 {
        if nu <= 0.25 {
            1.0 / cic_response(m, nu)
        } else if nu < 0.40 {
            let taper = 0.5 * (1.0 + (PI * (nu - 0.25) / 0.15).cos());
            taper / cic_response(m, nu)
        } else {
            0.0
        }
    };

    let mut taps = vec![0.0f64; COMP_TAPS];
    for (n, tap) in taps.iter_mut().enumerate() {
        let mut acc = 0.5 * amplitude(0.0); // trapezoid end points
        for k in 1..grid / 2 {
            let nu = k as f64 / grid as f64;
            acc += amplitude(nu) * (2.0 * PI * nu * (n as f64 - group_delay)).cos();
        }
        acc += 0.5 * amplitude(0.5) * (PI * (n as f64 - group_delay)).cos();
        *tap = 2.0 * acc / grid as f64;
    }
    // Hamming window, then exact unity DC gain
    for (n, tap) in taps.iter_mut().enumerate() {
        *tap *= 0.54 - 0.46 * (2.0 * PI * n as f64 / (COMP_TAPS - 1) as f64).cos();
    }
    let sum: f64 = taps.iter().sum();
    for tap in &mut taps {
        *tap /= sum;
    }
    (taps, advance as usize)
}

// ---------------------------------------------------------------------------
// PDM file format
// ---------------------------------------------------------------------------

const PDM_MAGIC: &[u8; 4] = b"PDM1";

/// Write a recording: magic "PDM1", u32 channel count, u64 bits per channel,
/// u32 sample rate (all little-endian), then channel-major bit-packed data,
/// LSB-first, each channel padded to a byte boundary.
pub fn write_pdm(path: &Path, frame: &PdmFrame) -> Result<()> {
    let bits = frame.bits_per_channel();
    let mut buf = Vec::with_capacity(20 + frame.channels.len() * bits.div_ceil(8));
    buf.extend_from_slice(PDM_MAGIC);
    buf.extend_from_slice(&(frame.channels.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(bits as u64).to_le_bytes());
    buf.extend_from_slice(&(frame.sample_rate.round() as u32).to_le_bytes());
    for ch in &frame.channels {
        buf.extend_from_slice(ch.packed_bytes());
    }
    atomic_write(path, &buf)
}

/// Read a recording written by [`write_pdm`].
pub fn read_pdm(path: &Path) -> Result<PdmFrame> {
    let buf = read_bytes(path)?;
    if buf.len() < 20 || &buf[0..4] != PDM_MAGIC {
        return Err(Error::format(path, "missing PDM1 magic"));
    }
    let n_channels = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let bits = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let sample_rate = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as f64;
    let bytes_per_channel = bits.div_ceil(8);
    let expect = 20 + n_channels * bytes_per_channel;
    if buf.len() != expect {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", expect, buf.len()),
        ));
    }
    let mut channels = Vec::with_capacity(n_channels);
    for c in 0..n_channels {
        let start = 20 + c * bytes_per_channel;
        let packed = buf[start..start + bytes_per_channel].to_vec();
        channels.push(PdmChannel::from_packed(packed, bits).map_err(|e| {
            Error::format(path, format!("channel {}: {}", c, e))
        })?);
    }
    PdmFrame::new(channels, sample_rate)
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::peak_normalized_correlation;
    use std::f64::consts::TAU;

    fn tone(freq: f64, amp: f64, n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| amp * (TAU * freq * i as f64 / BASEBAND_RATE).sin())
            .collect();
        Waveform {
            samples,
            sample_rate: BASEBAND_RATE,
        }
    }

    fn frame_of(ch: PdmChannel) -> PdmFrame {
        PdmFrame::new(vec![ch], super::super::PDM_RATE).unwrap()
    }

    #[test]
    fn saturated_input_gives_all_ones() {
        let w = Waveform {
            samples: vec![1.0; 500],
            sample_rate: BASEBAND_RATE,
        };
        let ch = pdm_encode(&w, 10).unwrap();
        assert_eq!(ch.len(), 5000);
        assert_eq!(ch.ones(), 5000);
    }

    #[test]
    fn zero_input_has_half_density() {
        let w = Waveform {
            samples: vec![0.0; 2000],
            sample_rate: BASEBAND_RATE,
        };
        let ch = pdm_encode(&w, 10).unwrap();
        assert!(ch.len() >= 10_000);
        let density = ch.ones() as f64 / ch.len() as f64;
        assert!((density - 0.5).abs() <= 0.01, "density {density}");
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let w = Waveform {
            samples: vec![1.5],
            sample_rate: BASEBAND_RATE,
        };
        assert!(pdm_encode(&w, 10).is_err());
        let w = Waveform {
            samples: vec![0.5],
            sample_rate: BASEBAND_RATE,
        };
        assert!(pdm_encode(&w, 1).is_err());
    }

    #[test]
    fn round_trip_tone_correlates() {
        let w = tone(30_000.0, 0.9, 16384);
        let ch = pdm_encode(&w, 10).unwrap();
        let decoded = pdm_decode(&frame_of(ch)).unwrap();
        let c = peak_normalized_correlation(&w.samples, &decoded[0].samples);
        assert!(c >= 0.99, "round-trip correlation {c}");
    }

    #[test]
    fn all_ones_settles_to_full_scale() {
        let ch = PdmChannel::from_bits((0..40_000).map(|_| true));
        let decoded = pdm_decode(&frame_of(ch)).unwrap();
        let tail = &decoded[0].samples[200..3800];
        for v in tail {
            assert!((v - 1.0).abs() < 0.01, "settled value {v}");
        }
    }

    #[test]
    fn nyquist_alternation_is_rejected() {
        let ch = PdmChannel::from_bits((0..40_000).map(|i| i % 2 == 0));
        let decoded = pdm_decode(&frame_of(ch)).unwrap();
        let tail = &decoded[0].samples[200..3800];
        for v in tail {
            assert!(v.abs() < 0.01, "leakage {v}");
        }
    }

    #[test]
    fn full_record_decodes_to_16384_samples() {
        let ch = PdmChannel::from_bits((0..163_840).map(|i| i % 3 == 0));
        let decoded = pdm_decode(&frame_of(ch)).unwrap();
        assert_eq!(decoded[0].len(), 16384);
    }

    #[test]
    fn non_integral_decimation_is_an_error() {
        let ch = PdmChannel::from_bits((0..1000).map(|_| true));
        let frame = PdmFrame::new(vec![ch], 1_000_000.0).unwrap();
        assert!(pdm_decode(&frame).is_err());
    }

    #[test]
    fn composite_response_is_flat_in_band() {
        // CIC droop times the compensator should be ~1 across the signal band
        let (fir, _) = design_compensator(10);
        for k in 0..=60 {
            let f_hz = k as f64 * 1000.0;
            let nu = f_hz / BASEBAND_RATE;
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, h) in fir.iter().enumerate() {
                re += h * (TAU * nu * n as f64).cos();
                im -= h * (TAU * nu * n as f64).sin();
            }
            let mag = (re * re + im * im).sqrt() * cic_response(10, nu);
            assert!(
                (mag - 1.0).abs() < 0.02,
                "composite gain {mag} at {f_hz} Hz"
            );
        }
    }

    #[test]
    fn channel_bit_accessors_agree() {
        let pattern: Vec<bool> = (0..77).map(|i| (i * 7) % 3 == 0).collect();
        let ch = PdmChannel::from_bits(pattern.iter().copied());
        assert_eq!(ch.len(), 77);
        for (i, b) in pattern.iter().enumerate() {
            assert_eq!(ch.bit(i), *b);
        }
        assert_eq!(ch.ones(), pattern.iter().filter(|b| **b).count());
    }

    #[test]
    fn pdm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.pdm");
        let channels: Vec<PdmChannel> = (0..4)
            .map(|c| PdmChannel::from_bits((0..1003).map(move |i| (i + c) % 5 == 0)))
            .collect();
        let frame = PdmFrame::new(channels, super::super::PDM_RATE).unwrap();
        write_pdm(&path, &frame).unwrap();
        let back = read_pdm(&path).unwrap();
        assert_eq!(frame, back);
    }

    #[test]
    fn truncated_pdm_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pdm");
        let frame = PdmFrame::new(
            vec![PdmChannel::from_bits((0..64).map(|i| i % 2 == 0))],
            super::super::PDM_RATE,
        )
        .unwrap();
        write_pdm(&path, &frame).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_pdm(&path).is_err());
    }
}
