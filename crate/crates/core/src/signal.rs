//! Sample-domain primitives shared by the modem and the optical channel.
//!
//! Waveform containers, a unitary power-of-two transform, band-limited
//! resampling by spectral zero-padding/truncation, and reproducible
//! Gaussian noise streams.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("waveform contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("rate ratio {ratio} does not map {len} samples onto an integer length")]
    NonIntegralLength { len: usize, ratio: f64 },
    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),
}

/// Real-valued sampled signal, e.g. the DAC output or the photocurrent.
#[derive(Debug, Clone, PartialEq)]
pub struct RealWaveform {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl RealWaveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self, SignalError> {
        check_rate(sample_rate)?;
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
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

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Complex field envelope referenced to an absolute optical carrier.
///
/// Samples follow the sqrt(W) convention so `|E|^2` is instantaneous power.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    /// Absolute frequency (Hz) that baseband 0 Hz corresponds to.
    pub center_frequency: f64,
}

impl ComplexEnvelope {
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate: f64,
        center_frequency: f64,
    ) -> Result<Self, SignalError> {
        check_rate(sample_rate)?;
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
            center_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

fn check_rate(rate: f64) -> Result<(), SignalError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(SignalError::InvalidRate(rate))
    }
}

/// Seeded random source. Identical `(seed, stream_id)` pairs replay identical
/// draws; distinct stream ids select independent ChaCha keystreams.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// `n` uniformly random bits, one per byte (0 or 1).
    pub fn bits(&mut self, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let word = self.rng.next_u64();
            let take = (n - out.len()).min(64);
            out.extend((0..take).map(|i| ((word >> i) & 1) as u8));
        }
        out
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized in-place DFT of any length (`inverse` uses `e^{+j}`).
pub(crate) fn dft_in_place(buf: &mut [Complex64], inverse: bool) {
    if buf.len() <= 1 {
        return;
    }
    plan(buf.len(), inverse).process(buf);
}

/// DFT bin frequencies in standard order (0, positive, then negative).
pub fn bin_frequencies(len: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / len as f64;
    (0..len)
        .map(|k| {
            if k <= (len - 1) / 2 {
                k as f64 * df
            } else {
                (k as f64 - len as f64) * df
            }
        })
        .collect()
}

/// Applies a frequency response `h(f)` to a complex block by circular
/// (whole-block) filtering.
pub(crate) fn apply_response<F>(samples: &mut [Complex64], sample_rate: f64, mut h: F)
where
    F: FnMut(f64) -> Complex64,
{
    let n = samples.len();
    if n == 0 {
        return;
    }
    dft_in_place(samples, false);
    let scale = 1.0 / n as f64;
    for (x, f) in samples.iter_mut().zip(bin_frequencies(n, sample_rate)) {
        *x *= h(f) * scale;
    }
    dft_in_place(samples, true);
}

fn unitary(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>, SignalError> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(SignalError::NotPowerOfTwo(n));
    }
    let mut buf = x.to_vec();
    dft_in_place(&mut buf, inverse);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

/// Unitary forward DFT (`1/sqrt(N)` scaling). Length must be a power of two.
pub fn forward_transform(x: &[Complex64]) -> Result<Vec<Complex64>, SignalError> {
    unitary(x, false)
}

/// Unitary inverse DFT, the exact inverse of [`forward_transform`].
pub fn inverse_transform(x: &[Complex64]) -> Result<Vec<Complex64>, SignalError> {
    unitary(x, true)
}

/// Band-limited sample-rate change.
pub trait Resample: Sized {
    fn resample(&self, new_rate: f64) -> Result<Self, SignalError>;
}

fn target_len(len: usize, old_rate: f64, new_rate: f64) -> Result<usize, SignalError> {
    check_rate(new_rate)?;
    let ratio = new_rate / old_rate;
    let exact = len as f64 * ratio;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-6 * exact.max(1.0) {
        return Err(SignalError::NonIntegralLength { len, ratio });
    }
    Ok(rounded as usize)
}

/// Moves the spectrum of an `n`-point block onto an `m`-point grid. Bins above
/// the smaller Nyquist are dropped; a shared Nyquist bin is split on the way up
/// and folded back on the way down so up-then-down is the identity.
fn resample_block(x: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = x.len();
    if n == m || n == 0 {
        return x.to_vec();
    }
    if m == 0 {
        return Vec::new();
    }
    let mut spec = x.to_vec();
    dft_in_place(&mut spec, false);

    let k = n.min(m);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let pos = k.div_ceil(2); // bins 0..pos
    let neg = (k - 1) / 2; // bins -neg..-1
    out[..pos].copy_from_slice(&spec[..pos]);
    for i in 1..=neg {
        out[m - i] = spec[n - i];
    }
    if k.is_multiple_of(2) {
        let h = k / 2;
        if m > n {
            out[h] = spec[h] * 0.5;
            out[m - h] = spec[h] * 0.5;
        } else {
            out[h] = spec[h] + spec[n - h];
        }
    }

    dft_in_place(&mut out, true);
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

impl Resample for RealWaveform {
    fn resample(&self, new_rate: f64) -> Result<Self, SignalError> {
        let m = target_len(self.samples.len(), self.sample_rate, new_rate)?;
        if m == self.samples.len() {
            return Ok(Self {
                samples: self.samples.clone(),
                sample_rate: new_rate,
            });
        }
        let x: Vec<Complex64> = self
            .samples
            .iter()
            .map(|&s| Complex64::new(s, 0.0))
            .collect();
        let y = resample_block(&x, m);
        Ok(Self {
            samples: y.into_iter().map(|c| c.re).collect(),
            sample_rate: new_rate,
        })
    }
}

impl Resample for ComplexEnvelope {
    fn resample(&self, new_rate: f64) -> Result<Self, SignalError> {
        let m = target_len(self.samples.len(), self.sample_rate, new_rate)?;
        Ok(Self {
            samples: resample_block(&self.samples, m),
            sample_rate: new_rate,
            center_frequency: self.center_frequency,
        })
    }
}

/// Circular complex Gaussian draws with the given variance per real component.
pub fn gaussian_noise(
    stream: &mut RandomStream,
    n: usize,
    variance_per_component: f64,
) -> Result<Vec<Complex64>, SignalError> {
    if variance_per_component < 0.0 || variance_per_component.is_nan() {
        return Err(SignalError::NegativeVariance(variance_per_component));
    }
    if variance_per_component == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let sigma = variance_per_component.sqrt();
    Ok((0..n)
        .map(|_| {
            let re = stream.standard_normal();
            let im = stream.standard_normal();
            Complex64::new(sigma * re, sigma * im)
        })
        .collect())
}
