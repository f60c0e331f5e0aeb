//! Per-channel time-domain stages: chirp generation, matched filtering and
//! envelope detection.
//!
//! The emitted waveform is a hyperbolic (linear-period) chirp whose
//! instantaneous frequency follows
//!
//! ```text
//! f(t) = f0 * f1 * T / (f1 * T + (f0 - f1) * t)
//! ```
//!
//! so that f(0) = f0 and f(T) = f1. Matched filtering correlates a received
//! record against the emitted template, compressing each echo into a sharp
//! peak; envelope detection takes the magnitude of the analytic signal.

mod pdm;

pub use pdm::{pdm_decode, pdm_encode, read_pdm, write_pdm, PdmChannel, PdmFrame};

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Rate of the decoded baseband signals (Hz).
pub const BASEBAND_RATE: f64 = 450_000.0;
/// Rate of the raw 1-bit sensor stream (Hz).
pub const PDM_RATE: f64 = 4_500_000.0;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Dimensionless amplitude samples. Finite values only.
    pub samples: Vec<f64>,
    /// Sample rate in Hz, strictly positive.
    pub sample_rate: f64,
}

impl Waveform {
    /// Validating constructor.
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::parameter("sample_rate must be > 0"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::parameter("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Signal energy, the sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Parameters of the emitted hyperbolic chirp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpSpec {
    /// Start frequency in Hz.
    pub f_start: f64,
    /// End frequency in Hz.
    pub f_end: f64,
    /// Sweep duration in seconds.
    pub duration: f64,
    /// Sample rate in Hz.
    pub sample_rate: f64,
}

impl Default for ChirpSpec {
    /// The sensor's emission: 20 kHz to 50 kHz over 2.5 ms at 450 kHz.
    fn default() -> Self {
        ChirpSpec {
            f_start: 20_000.0,
            f_end: 50_000.0,
            duration: 2.5e-3,
            sample_rate: BASEBAND_RATE,
        }
    }
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::parameter("chirp sample_rate must be > 0"));
        }
        let nyquist = self.sample_rate / 2.0;
        if !(self.f_start > 0.0 && self.f_start < nyquist) {
            return Err(Error::parameter(format!(
                "f_start {} Hz outside (0, {}) Hz",
                self.f_start, nyquist
            )));
        }
        if !(self.f_end > 0.0 && self.f_end < nyquist) {
            return Err(Error::parameter(format!(
                "f_end {} Hz outside (0, {}) Hz",
                self.f_end, nyquist
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::parameter("chirp duration must be > 0"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Chirp generation
// ---------------------------------------------------------------------------

/// Generate the hyperbolic chirp described by `spec`.
///
/// The phase is the closed-form integral of the instantaneous frequency law,
/// so two calls with the same spec are bit-identical.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<Waveform> {
    spec.validate()?;
    let n = (spec.duration * spec.sample_rate).round() as usize;
    let f0 = spec.f_start;
    let f1 = spec.f_end;
    let t_total = spec.duration;
    let degenerate = (f0 - f1).abs() < 1e-9 * f1.abs();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / spec.sample_rate;
            let phase = if degenerate {
                TAU * f0 * t
            } else {
                // integral of f0*f1*T / (f1*T + (f0-f1)*t)
                TAU * f0 * f1 * t_total / (f0 - f1)
                    * (1.0 + (f0 - f1) * t / (f1 * t_total)).ln()
            };
            phase.sin()
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

// ---------------------------------------------------------------------------
// Matched filter
// ---------------------------------------------------------------------------

/// Cross-correlate `signal` against `template`.
///
/// Output index `k` corresponds to the template onset at sample `k`:
/// `out[k] = sum_j signal[k + j] * template[j]`, with the signal treated as
/// zero beyond its end. Output length equals the signal length. Long inputs
/// go through an FFT path, short ones are correlated directly.
pub fn matched_filter(signal: &Waveform, template: &Waveform) -> Result<Waveform> {
    if relative_ne(signal.sample_rate, template.sample_rate) {
        return Err(Error::parameter(format!(
            "sample-rate mismatch: signal {} Hz vs template {} Hz",
            signal.sample_rate, template.sample_rate
        )));
    }
    let ls = signal.len();
    let lt = template.len();
    if lt == 0 {
        return Err(Error::parameter("empty template"));
    }
    if lt > ls {
        return Err(Error::parameter(format!(
            "template length {} exceeds signal length {}",
            lt, ls
        )));
    }
    let out = if ls > 4096 {
        xcorr_fft(&signal.samples, &template.samples, ls)
    } else {
        xcorr_direct(&signal.samples, &template.samples, ls)
    };
    Ok(Waveform {
        samples: out,
        sample_rate: signal.sample_rate,
    })
}

fn xcorr_direct(signal: &[f64], template: &[f64], n_out: usize) -> Vec<f64> {
    (0..n_out)
        .map(|k| {
            let reach = template.len().min(signal.len() - k);
            (0..reach).map(|j| signal[k + j] * template[j]).sum()
        })
        .collect()
}

fn xcorr_fft(signal: &[f64], template: &[f64], n_out: usize) -> Vec<f64> {
    let n = (signal.len() + template.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut a = to_complex(signal, n);
    let mut b = to_complex(template, n);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..n_out].iter().map(|c| c.re * scale).collect()
}

fn to_complex(x: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); n];
    for (o, v) in out.iter_mut().zip(x) {
        o.re = *v;
    }
    out
}

// ---------------------------------------------------------------------------
// Envelope detection
// ---------------------------------------------------------------------------

/// Magnitude of the analytic signal, built in the frequency domain.
///
/// Nonnegative, same length as the input. Exact for narrowband pulses.
pub fn envelope(signal: &Waveform) -> Result<Waveform> {
    let n = signal.len();
    if n < 8 {
        return Err(Error::parameter(format!(
            "envelope needs at least 8 samples, got {}",
            n
        )));
    }
    let mut planner = FftPlanner::new();
    let mut buf = to_complex(&signal.samples, n);
    planner.plan_fft_forward(n).process(&mut buf);
    // analytic-signal spectrum: keep DC (and Nyquist when n is even),
    // double positive frequencies, zero negative frequencies
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // unchanged
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let samples = buf.iter().map(|c| (c * scale).norm()).collect();
    Ok(Waveform {
        samples,
        sample_rate: signal.sample_rate,
    })
}

/// Reusable envelope transform for repeated same-length calls.
///
/// Behaves exactly like [`envelope`] but plans the FFTs once; used by the
/// beamformer where 91 rows of identical length are processed.
pub struct EnvelopeTransform {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl EnvelopeTransform {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::parameter(format!(
                "envelope needs at least 8 samples, got {}",
                n
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(EnvelopeTransform {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn apply(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.n {
            return Err(Error::parameter(format!(
                "envelope transform planned for {} samples, got {}",
                self.n,
                samples.len()
            )));
        }
        let n = self.n;
        let mut buf = to_complex(samples, n);
        self.fwd.process(&mut buf);
        let half = n / 2;
        for (k, v) in buf.iter_mut().enumerate() {
            if k == 0 || (n % 2 == 0 && k == half) {
            } else if k < half || (n % 2 == 1 && k == half) {
                *v *= 2.0;
            } else {
                *v = Complex::new(0.0, 0.0);
            }
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.iter().map(|c| (c * scale).norm()).collect())
    }
}

// ---------------------------------------------------------------------------
// Correlation utilities
// ---------------------------------------------------------------------------

/// Peak normalized cross-correlation between two signals over all integer
/// lags: `max_tau |sum_i a[i] b[i + tau]| / (||a|| ||b||)`. Returns 0 for
/// degenerate inputs. Used to score encode/decode round trips.
pub fn peak_normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa = to_complex(a, n);
    let mut fb = to_complex(b, n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = x.conj() * *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter()
        .map(|c| (c.re * scale).abs())
        .fold(0.0, f64::max)
        / (na * nb)
}

pub(crate) fn relative_ne(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-9 * a.abs().max(b.abs())
}

// ===========================================================================
// Tests
// ===========================================================================
