//! DMT transmitter and receiver.
//!
//! A frame is one `2N`-point inverse transform over Hermitian-extended
//! subcarriers `1..N` (bin 0 and bin `N` stay empty so the output is real
//! and DC-free), hard-clipped at a fixed ratio above its RMS, and prefixed
//! with a cyclic prefix. Subcarrier symbols are written at unit scale, so a
//! frame with unit power on every data bin has an RMS of
//! `sqrt((N-1)/N)`, i.e. almost exactly one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{label_to_bits, Constellation, MAX_ORDER_BITS};
use crate::signal::{forward_transform, inverse_transform, RandomStream, RealWaveform};

/// Fixed seed of the synchronization frame so the receiver can regenerate it.
const SYNC_SEED: u64 = 0x5EED_D317_0000_0001;

/// Reported SNR when the measured error variance is zero.
pub const SNR_CEILING: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModemError {
    #[error("invalid DMT configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid loading table: {0}")]
    InvalidTable(String),
    #[error("payload has {got} bits, loading table carries {expected} per frame")]
    PayloadLength { expected: usize, got: usize },
    #[error("received length {len} is not a multiple of the {frame} sample frame")]
    FrameLength { len: usize, frame: usize },
    #[error("no sync found")]
    NoSync,
    #[error("channel estimation needs at least {needed} training frames, got {got}")]
    InsufficientTraining { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmtConfig {
    /// Subcarrier grid size N; the transform is 2N points.
    pub n_subcarriers: usize,
    pub cp_samples: usize,
    /// DAC/ADC sample rate in Hz.
    pub dac_rate: f64,
    /// Clip level relative to the frame RMS, `20·log10(A_clip/σ)`.
    pub clipping_ratio_db: f64,
    pub pilot_indices: [usize; 2],
    /// Linear power of each pilot tone; 0 switches the pilots off.
    pub pilot_power: f64,
    pub n_training_frames: usize,
    pub max_order_bits: u8,
    /// Half-width (in bins) of the window the noise variance is averaged over
    /// during SNR estimation. 0 gives the raw per-bin estimate.
    pub noise_smoothing_bins: usize,
}

impl Default for DmtConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 512,
            cp_samples: 16,
            dac_rate: 56e9,
            clipping_ratio_db: 12.5,
            pilot_indices: [255, 256],
            pilot_power: 1.0,
            n_training_frames: 64,
            max_order_bits: 8,
            noise_smoothing_bins: 4,
        }
    }
}

impl DmtConfig {
    pub fn validate(&self) -> Result<(), ModemError> {
        let bad = |m: &str| Err(ModemError::InvalidConfig(m.to_string()));
        if self.n_subcarriers < 4 || !self.n_subcarriers.is_power_of_two() {
            return bad("n_subcarriers must be a power of two >= 4");
        }
        if self.cp_samples > self.fft_len() {
            return bad("cyclic prefix longer than the transform");
        }
        if !(self.dac_rate > 0.0 && self.dac_rate.is_finite()) {
            return bad("dac_rate must be positive");
        }
        if self.clipping_ratio_db.is_nan() {
            return bad("clipping_ratio_db must be a number");
        }
        let [a, b] = self.pilot_indices;
        if b != a + 1 || a < 1 || b >= self.n_subcarriers {
            return bad("pilot indices must be two consecutive bins inside 1..N");
        }
        if !(self.pilot_power >= 0.0 && self.pilot_power.is_finite()) {
            return bad("pilot_power must be non-negative");
        }
        if !(1..=MAX_ORDER_BITS).contains(&self.max_order_bits) {
            return bad("max_order_bits must be within 1..=8");
        }
        Ok(())
    }

    pub fn fft_len(&self) -> usize {
        2 * self.n_subcarriers
    }

    pub fn frame_len(&self) -> usize {
        self.fft_len() + self.cp_samples
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.dac_rate / self.fft_len() as f64
    }

    pub fn symbol_rate(&self) -> f64 {
        self.dac_rate / self.frame_len() as f64
    }

    pub fn is_pilot(&self, k: usize) -> bool {
        self.pilot_indices.contains(&k)
    }

    /// Bins that can carry payload: `1..N` minus the pilots.
    pub fn loadable_carriers(&self) -> Vec<usize> {
        (1..self.n_subcarriers)
            .filter(|&k| !self.is_pilot(k))
            .collect()
    }

    /// Payload bits per frame needed for a given gross line rate.
    pub fn bits_per_frame_for_rate(&self, line_rate: f64) -> f64 {
        line_rate / self.symbol_rate()
    }

    fn clip_factor(&self) -> f64 {
        10f64.powf(self.clipping_ratio_db / 20.0)
    }
}

/// Per-subcarrier bit count and linear power scaling, indexed by bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingTable {
    pub bits: Vec<u8>,
    pub power: Vec<f64>,
}

impl LoadingTable {
    pub fn empty(n_subcarriers: usize) -> Self {
        Self {
            bits: vec![0; n_subcarriers],
            power: vec![0.0; n_subcarriers],
        }
    }

    /// Same order and unit power on every loadable carrier.
    pub fn uniform(cfg: &DmtConfig, bits: u8) -> Self {
        let mut t = Self::empty(cfg.n_subcarriers);
        if bits > 0 {
            for k in cfg.loadable_carriers() {
                t.bits[k] = bits;
                t.power[k] = 1.0;
            }
        }
        t
    }

    pub fn total_bits(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn active_carriers(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b > 0)
            .map(|(k, _)| k)
    }

    pub fn validate(&self, cfg: &DmtConfig) -> Result<(), ModemError> {
        let bad = |m: String| Err(ModemError::InvalidTable(m));
        if self.bits.len() != cfg.n_subcarriers || self.power.len() != cfg.n_subcarriers {
            return bad(format!("table must cover {} bins", cfg.n_subcarriers));
        }
        if self.bits[0] != 0 {
            return bad("bin 0 cannot carry bits".into());
        }
        for &p in &cfg.pilot_indices {
            if self.bits[p] != 0 {
                return bad(format!("pilot bin {p} carries bits"));
            }
        }
        if let Some(k) = self.bits.iter().position(|&b| b > cfg.max_order_bits) {
            return bad(format!("bin {k} exceeds the maximum order"));
        }
        if let Some(k) = self
            .power
            .iter()
            .position(|p| !(p.is_finite() && *p >= 0.0))
        {
            return bad(format!("bin {k} has an invalid power"));
        }
        Ok(())
    }
}

/// One-tap channel estimate and per-bin SNR, indexed by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h: Vec<Complex64>,
    pub snr: Vec<f64>,
}

impl ChannelEstimate {
    pub fn identity(cfg: &DmtConfig) -> Self {
        let mut h = vec![Complex64::new(1.0, 0.0); cfg.n_subcarriers];
        h[0] = Complex64::new(0.0, 0.0);
        let mut snr = vec![SNR_CEILING; cfg.n_subcarriers];
        snr[0] = 0.0;
        Self { h, snr }
    }
}

/// Known content of the synchronization and training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    /// Sync frame followed by `n_training_frames` training frames.
    pub waveform: RealWaveform,
    /// Transmitted symbol per bin for each training frame.
    pub training: Vec<Vec<Complex64>>,
}

fn pilot_symbol() -> Complex64 {
    Complex64::new(1.0, 1.0) / std::f64::consts::SQRT_2
}

fn qpsk(bits: (u8, u8)) -> Complex64 {
    let re = if bits.0 == 0 { 1.0 } else { -1.0 };
    let im = if bits.1 == 0 { 1.0 } else { -1.0 };
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

/// Turns one frame's positive-frequency symbols into clipped, CP-extended
/// time samples.
fn synthesize(symbols: &[Complex64], cfg: &DmtConfig) -> Vec<f64> {
    let n = cfg.n_subcarriers;
    let fft_len = cfg.fft_len();
    let mut spec = vec![Complex64::new(0.0, 0.0); fft_len];
    for k in 1..n {
        spec[k] = symbols[k];
        spec[fft_len - k] = symbols[k].conj();
    }
    let time = inverse_transform(&spec).expect("power-of-two transform");
    let mut core: Vec<f64> = time.into_iter().map(|c| c.re).collect();

    let rms = (core.iter().map(|x| x * x).sum::<f64>() / fft_len as f64).sqrt();
    let limit = rms * cfg.clip_factor();
    if limit.is_finite() {
        core.iter_mut().for_each(|x| *x = x.clamp(-limit, limit));
    }

    let mut frame = Vec::with_capacity(cfg.frame_len());
    frame.extend_from_slice(&core[fft_len - cfg.cp_samples..]);
    frame.extend_from_slice(&core);
    frame
}

fn constellations() -> Vec<Constellation> {
    (1..=MAX_ORDER_BITS)
        .map(|b| Constellation::new(b).expect("supported order"))
        .collect()
}

fn frame_symbols(
    payload: &[u8],
    table: &LoadingTable,
    cfg: &DmtConfig,
    alphabets: &[Constellation],
) -> Vec<Complex64> {
    let mut symbols = vec![Complex64::new(0.0, 0.0); cfg.n_subcarriers];
    let mut cursor = 0;
    for k in table.active_carriers() {
        let b = table.bits[k] as usize;
        let c = &alphabets[b - 1];
        let label = crate::constellation::bits_to_label(&payload[cursor..cursor + b]);
        symbols[k] = c.map_label(label) * table.power[k].sqrt();
        cursor += b;
    }
    let pilot = pilot_symbol() * cfg.pilot_power.sqrt();
    for &p in &cfg.pilot_indices {
        symbols[p] = pilot;
    }
    symbols
}

/// Builds one DMT frame (`2N + cp` samples) carrying `payload_bits`.
pub fn build_frame(
    payload_bits: &[u8],
    table: &LoadingTable,
    cfg: &DmtConfig,
) -> Result<RealWaveform, ModemError> {
    cfg.validate()?;
    table.validate(cfg)?;
    if payload_bits.len() != table.total_bits() {
        return Err(ModemError::PayloadLength {
            expected: table.total_bits(),
            got: payload_bits.len(),
        });
    }
    let symbols = frame_symbols(payload_bits, table, cfg, &constellations());
    Ok(RealWaveform {
        samples: synthesize(&symbols, cfg),
        sample_rate: cfg.dac_rate,
    })
}

/// Builds consecutive frames; the payload must fill a whole number of frames.
pub fn build_frames(
    payload_bits: &[u8],
    table: &LoadingTable,
    cfg: &DmtConfig,
) -> Result<RealWaveform, ModemError> {
    cfg.validate()?;
    table.validate(cfg)?;
    let per_frame = table.total_bits();
    if per_frame == 0 {
        if !payload_bits.is_empty() {
            return Err(ModemError::PayloadLength {
                expected: 0,
                got: payload_bits.len(),
            });
        }
        return Ok(RealWaveform {
            samples: Vec::new(),
            sample_rate: cfg.dac_rate,
        });
    }
    if payload_bits.is_empty() || !payload_bits.len().is_multiple_of(per_frame) {
        return Err(ModemError::PayloadLength {
            expected: per_frame,
            got: payload_bits.len(),
        });
    }
    let alphabets = constellations();
    let mut samples = Vec::with_capacity(payload_bits.len() / per_frame * cfg.frame_len());
    for chunk in payload_bits.chunks(per_frame) {
        samples.extend(synthesize(
            &frame_symbols(chunk, table, cfg, &alphabets),
            cfg,
        ));
    }
    Ok(RealWaveform {
        samples,
        sample_rate: cfg.dac_rate,
    })
}

/// Symbols of the synchronization frame: QPSK on even bins only (scaled by
/// sqrt(2) to keep the frame power), which makes the transform core two
/// identical halves.
pub fn sync_symbols(cfg: &DmtConfig) -> Vec<Complex64> {
    let mut stream = RandomStream::new(SYNC_SEED, 0);
    let mut symbols = vec![Complex64::new(0.0, 0.0); cfg.n_subcarriers];
    for k in (2..cfg.n_subcarriers).step_by(2) {
        let b = stream.bits(2);
        symbols[k] = qpsk((b[0], b[1])) * std::f64::consts::SQRT_2;
    }
    symbols
}

/// Sync frame plus `n_training_frames` frames of random QPSK on every data
/// bin (pilot bins carry the pilot symbol).
pub fn training_preamble(
    cfg: &DmtConfig,
    stream: &mut RandomStream,
) -> Result<Preamble, ModemError> {
    cfg.validate()?;
    let mut samples = synthesize(&sync_symbols(cfg), cfg);
    let mut training = Vec::with_capacity(cfg.n_training_frames);
    for _ in 0..cfg.n_training_frames {
        let mut symbols = vec![Complex64::new(0.0, 0.0); cfg.n_subcarriers];
        let bits = stream.bits(2 * (cfg.n_subcarriers - 1));
        for k in 1..cfg.n_subcarriers {
            symbols[k] = if cfg.is_pilot(k) {
                pilot_symbol()
            } else {
                qpsk((bits[2 * (k - 1)], bits[2 * (k - 1) + 1]))
            };
        }
        samples.extend(synthesize(&symbols, cfg));
        training.push(symbols);
    }
    Ok(Preamble {
        waveform: RealWaveform {
            samples,
            sample_rate: cfg.dac_rate,
        },
        training,
    })
}

/// Threshold on the normalized half-correlation metric.
const SYNC_THRESHOLD: f64 = 0.6;
/// Minimum window energy, relative to the mean power of the whole input.
const SYNC_ENERGY_GATE: f64 = 0.05;

/// Locates the start (first cyclic-prefix sample) of the synchronization
/// frame.
///
/// Coarse timing uses the half-correlation metric
/// `P(d) / (½·(R₁(d) + R₂(d)))` over two adjacent `N`-sample windows, which
/// sits near one across the cyclic-prefix plateau of the sync frame. Fine
/// timing then cross-correlates against the known sync frame around that
/// plateau.
pub fn frame_sync(rx: &RealWaveform, cfg: &DmtConfig) -> Result<usize, ModemError> {
    cfg.validate()?;
    let x = &rx.samples;
    let half = cfg.n_subcarriers;
    let fft_len = cfg.fft_len();
    let cp = cfg.cp_samples;
    if x.len() < cfg.frame_len() + cp {
        return Err(ModemError::NoSync);
    }
    let mean_power = rx.mean_power();
    if mean_power <= 0.0 {
        return Err(ModemError::NoSync);
    }

    // Running sums over d in 0..=x.len()-fft_len.
    let last = x.len() - fft_len;
    let mut p: f64 = (0..half).map(|m| x[m] * x[m + half]).sum();
    let mut r1: f64 = x[..half].iter().map(|v| v * v).sum();
    let mut r2: f64 = x[half..fft_len].iter().map(|v| v * v).sum();
    let gate = SYNC_ENERGY_GATE * mean_power * half as f64;
    let metric = |p: f64, r1: f64, r2: f64| {
        let e = 0.5 * (r1 + r2);
        if e > gate {
            p / e
        } else {
            0.0
        }
    };

    let mut first: Option<usize> = None;
    let mut peak = (0usize, f64::NEG_INFINITY);
    let search_span = half + cp;
    for d in 0..=last {
        let m = metric(p, r1, r2);
        match first {
            None if m > SYNC_THRESHOLD => {
                first = Some(d);
                peak = (d, m);
            }
            Some(f) if d > f + search_span => break,
            Some(_) if m > peak.1 => peak = (d, m),
            _ => {}
        }
        if d < last {
            p += x[d + half] * x[d + fft_len] - x[d] * x[d + half];
            r1 += x[d + half] * x[d + half] - x[d] * x[d];
            r2 += x[d + fft_len] * x[d + fft_len] - x[d + half] * x[d + half];
        }
    }
    if first.is_none() {
        return Err(ModemError::NoSync);
    }

    // The metric plateau covers [start, start + cp], so the frame start lies
    // at most one prefix before the peak.
    let reference = synthesize(&sync_symbols(cfg), cfg);
    let core = &reference[cp..];
    let lo = peak.0.saturating_sub(cp + 8);
    let hi = (peak.0 + 8).min(x.len() - cfg.frame_len());
    let mut best = (lo, f64::NEG_INFINITY);
    for d in lo..=hi {
        let c: f64 = core
            .iter()
            .zip(&x[d + cp..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .abs();
        if c > best.1 {
            best = (d, c);
        }
    }
    Ok(best.0)
}

fn frame_spectrum(samples: &[f64], cfg: &DmtConfig) -> Vec<Complex64> {
    let block: Vec<Complex64> = samples[cfg.cp_samples..cfg.frame_len()]
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    forward_transform(&block).expect("power-of-two transform")
}

/// Least-squares one-tap estimate from the training frames.
///
/// `rx` starts at the sync frame (as returned by [`frame_sync`]) and must cover
/// every training frame in `known`. The noise variance per bin is the residual
/// variance `Σ|Y - H·X|² / (n-1)`, averaged over `noise_smoothing_bins` on
/// either side before forming `snr = |H|²·E|X|² / σ²`.
pub fn estimate_channel(
    rx: &RealWaveform,
    known: &[Vec<Complex64>],
    cfg: &DmtConfig,
) -> Result<ChannelEstimate, ModemError> {
    cfg.validate()?;
    let n_frames = known.len();
    if n_frames < 2 {
        return Err(ModemError::InsufficientTraining {
            needed: 2,
            got: n_frames,
        });
    }
    let fl = cfg.frame_len();
    let available = (rx.len() / fl).saturating_sub(1);
    if available < n_frames {
        return Err(ModemError::InsufficientTraining {
            needed: n_frames,
            got: available,
        });
    }
    let n = cfg.n_subcarriers;
    let spectra: Vec<Vec<Complex64>> = (0..n_frames)
        .map(|i| frame_spectrum(&rx.samples[(i + 1) * fl..(i + 2) * fl], cfg))
        .collect();

    let mut h = vec![Complex64::new(0.0, 0.0); n];
    let mut noise = vec![0.0; n];
    let mut sig = vec![0.0; n];
    for k in 1..n {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut used = 0usize;
        for (y, x) in spectra.iter().zip(known) {
            if x[k].norm_sqr() > 0.0 {
                acc += y[k] / x[k];
                used += 1;
            }
        }
        if used < 2 {
            continue;
        }
        h[k] = acc / used as f64;
        let mut resid = 0.0;
        let mut energy = 0.0;
        for (y, x) in spectra.iter().zip(known) {
            if x[k].norm_sqr() > 0.0 {
                resid += (y[k] - h[k] * x[k]).norm_sqr();
                energy += x[k].norm_sqr();
            }
        }
        noise[k] = resid / (used - 1) as f64;
        sig[k] = energy / used as f64;
    }

    let w = cfg.noise_smoothing_bins;
    let mut snr = vec![0.0; n];
    for k in 1..n {
        if sig[k] == 0.0 {
            continue;
        }
        let lo = k.saturating_sub(w).max(1);
        let hi = (k + w).min(n - 1);
        let var = noise[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        let s = h[k].norm_sqr() * sig[k];
        snr[k] = if var > 0.0 {
            (s / var).min(SNR_CEILING)
        } else {
            SNR_CEILING
        };
    }
    Ok(ChannelEstimate { h, snr })
}

/// One-tap equalization and hard decisions for consecutive payload frames.
pub fn demodulate(
    rx: &RealWaveform,
    est: &ChannelEstimate,
    table: &LoadingTable,
    cfg: &DmtConfig,
) -> Result<Vec<u8>, ModemError> {
    cfg.validate()?;
    table.validate(cfg)?;
    let fl = cfg.frame_len();
    if !rx.len().is_multiple_of(fl) {
        return Err(ModemError::FrameLength {
            len: rx.len(),
            frame: fl,
        });
    }
    let alphabets = constellations();
    let active: Vec<(usize, Complex64, &Constellation)> = table
        .active_carriers()
        .map(|k| {
            let gain = est.h[k] * table.power[k].sqrt();
            (k, gain.inv(), &alphabets[table.bits[k] as usize - 1])
        })
        .collect();
    let mut out = Vec::with_capacity(rx.len() / fl * table.total_bits());
    for frame in rx.samples.chunks(fl) {
        let spec = frame_spectrum(frame, cfg);
        for &(k, inv_gain, c) in &active {
            let label = c.demap_label(spec[k] * inv_gain);
            out.extend(label_to_bits(label, c.order_bits()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn add_awgn(w: &RealWaveform, noise_var: f64, stream: &mut RandomStream) -> RealWaveform {
        let sigma = noise_var.sqrt();
        RealWaveform {
            samples: w
                .samples
                .iter()
                .map(|v| v + sigma * stream.standard_normal())
                .collect(),
            sample_rate: w.sample_rate,
        }
    }

    fn random_frames(
        table: &LoadingTable,
        cfg: &DmtConfig,
        frames: usize,
        seed: u64,
    ) -> (Vec<u8>, RealWaveform) {
        let bits = RandomStream::new(seed, 1).bits(table.total_bits() * frames);
        let w = build_frames(&bits, table, cfg).unwrap();
        (bits, w)
    }

    #[test]
    fn rate_identity() {
        let cfg = DmtConfig::default();
        assert_eq!(cfg.frame_len(), 1040);
        assert_eq!(cfg.bits_per_frame_for_rate(112e9), 2080.0);
        assert_eq!(cfg.bits_per_frame_for_rate(56e9), 1040.0);
        assert_eq!(cfg.loadable_carriers().len(), 509);
    }

    #[test]
    fn frame_length_and_cyclic_prefix() {
        let cfg = DmtConfig::default();
        let table = LoadingTable::uniform(&cfg, 4);
        let (_, w) = random_frames(&table, &cfg, 1, 2);
        assert_eq!(w.len(), 1040);
        assert_eq!(&w.samples[..16], &w.samples[1024..1040]);
        let single = build_frame(
            &RandomStream::new(2, 1).bits(table.total_bits()),
            &table,
            &cfg,
        )
        .unwrap();
        assert_eq!(single, w);
    }

    #[test]
    fn silent_frame_is_zero() {
        let cfg = DmtConfig {
            pilot_power: 0.0,
            ..DmtConfig::default()
        };
        let w = build_frame(&[], &LoadingTable::empty(512), &cfg).unwrap();
        assert_eq!(w.len(), 1040);
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn payload_length_checked() {
        let cfg = DmtConfig::default();
        let table = LoadingTable::uniform(&cfg, 2);
        assert!(matches!(
            build_frame(&[0; 10], &table, &cfg),
            Err(ModemError::PayloadLength { .. })
        ));
    }

    #[test]
    fn output_is_real_and_hermitian() {
        let cfg = DmtConfig {
            clipping_ratio_db: 200.0,
            ..DmtConfig::default()
        };
        let table = LoadingTable::uniform(&cfg, 6);
        let bits = RandomStream::new(4, 1).bits(table.total_bits());
        let symbols = frame_symbols(&bits, &table, &cfg, &constellations());
        let mut spec = vec![Complex64::new(0.0, 0.0); 1024];
        for k in 1..512 {
            spec[k] = symbols[k];
            spec[1024 - k] = symbols[k].conj();
        }
        let time = inverse_transform(&spec).unwrap();
        let imag = time.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        assert!(imag < 1e-15, "imaginary residual {imag}");
        assert_eq!(spec[0], Complex64::new(0.0, 0.0));
        assert_eq!(spec[512], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn clipping_bounds_peak_to_rms() {
        let cfg = DmtConfig::default();
        let unclipped = DmtConfig {
            clipping_ratio_db: 200.0,
            ..cfg.clone()
        };
        let table = LoadingTable::uniform(&cfg, 4);
        let limit = 10f64.powf(12.5 / 20.0);
        assert!((limit - 4.217).abs() < 1e-3);
        let mut clipped_any = false;
        for seed in 0..200 {
            let bits = RandomStream::new(seed, 7).bits(table.total_bits());
            let raw = build_frame(&bits, &table, &unclipped).unwrap();
            let clipped = build_frame(&bits, &table, &cfg).unwrap();
            let rms = (raw.samples[16..].iter().map(|v| v * v).sum::<f64>() / 1024.0).sqrt();
            let peak = clipped.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(peak <= rms * limit * (1.0 + 1e-12));
            clipped_any |= clipped != raw;
        }
        assert!(clipped_any, "200 frames never reached the clip level");
    }

    #[test]
    fn clipping_count_is_monotone() {
        let table = LoadingTable::uniform(&DmtConfig::default(), 4);
        let bits = RandomStream::new(99, 7).bits(table.total_bits());
        let unclipped = build_frame(
            &bits,
            &table,
            &DmtConfig {
                clipping_ratio_db: 200.0,
                ..DmtConfig::default()
            },
        )
        .unwrap();
        let mut prev = usize::MAX;
        for cr in [0.0, 3.0, 6.0, 8.0, 10.0, 12.5, 15.0] {
            let cfg = DmtConfig {
                clipping_ratio_db: cr,
                ..DmtConfig::default()
            };
            let w = build_frame(&bits, &table, &cfg).unwrap();
            let clipped = w
                .samples
                .iter()
                .zip(&unclipped.samples)
                .filter(|(a, b)| a != b)
                .count();
            assert!(clipped <= prev);
            prev = clipped;
        }
    }

    #[test]
    fn preamble_structure() {
        let cfg = DmtConfig::default();
        let a = training_preamble(&cfg, &mut RandomStream::new(8, 3)).unwrap();
        let b = training_preamble(&cfg, &mut RandomStream::new(8, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.waveform.len(), 65 * 1040);
        let core = &a.waveform.samples[16..1040];
        assert_eq!(&core[..512], &core[512..]);
        for frame in &a.training {
            for x in &frame[1..512] {
                assert!((x.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    fn embed(preamble: &RealWaveform, delay: usize, tail: usize) -> RealWaveform {
        let mut samples = vec![0.0; delay];
        samples.extend_from_slice(&preamble.samples);
        samples.extend(std::iter::repeat_n(0.0, tail));
        RealWaveform {
            samples,
            sample_rate: preamble.sample_rate,
        }
    }

    #[test]
    fn sync_noise_free() {
        let cfg = DmtConfig::default();
        let p = training_preamble(&cfg, &mut RandomStream::new(1, 1)).unwrap();
        let rx = embed(&p.waveform, 5000, 300);
        assert_eq!(frame_sync(&rx, &cfg).unwrap(), 5000);
    }

    #[test]
    fn sync_rejects_noise() {
        let cfg = DmtConfig::default();
        let mut s = RandomStream::new(3, 3);
        let rx = RealWaveform {
            samples: (0..80_000).map(|_| s.standard_normal()).collect(),
            sample_rate: cfg.dac_rate,
        };
        assert_eq!(frame_sync(&rx, &cfg), Err(ModemError::NoSync));
    }

    #[test]
    fn sync_under_awgn() {
        let cfg = DmtConfig {
            n_training_frames: 4,
            ..DmtConfig::default()
        };
        let p = training_preamble(&cfg, &mut RandomStream::new(1, 1)).unwrap();
        let clean = embed(&p.waveform, 5000, 300);
        let noise_var = p.waveform.mean_power() / 10f64.powf(1.5);
        let mut hits = 0;
        for trial in 0..100 {
            let rx = add_awgn(&clean, noise_var, &mut RandomStream::new(trial, 77));
            if let Ok(d) = frame_sync(&rx, &cfg) {
                if (4998..=5002).contains(&d) {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 99, "{hits}/100 within tolerance");
    }

    #[test]
    fn estimate_identity_channel() {
        let cfg = DmtConfig {
            clipping_ratio_db: 200.0,
            ..DmtConfig::default()
        };
        let p = training_preamble(&cfg, &mut RandomStream::new(2, 2)).unwrap();
        let est = estimate_channel(&p.waveform, &p.training, &cfg).unwrap();
        for k in 1..512 {
            assert!(
                (est.h[k] - Complex64::new(1.0, 0.0)).norm() < 1e-9,
                "bin {k}"
            );
            assert!(est.snr[k] > 1e9);
        }
    }

    #[test]
    fn estimate_rejects_short_training() {
        let cfg = DmtConfig::default();
        let p = training_preamble(&cfg, &mut RandomStream::new(2, 2)).unwrap();
        assert!(matches!(
            estimate_channel(&p.waveform, &p.training[..1], &cfg),
            Err(ModemError::InsufficientTraining { .. })
        ));
        let short = RealWaveform {
            samples: p.waveform.samples[..10 * 1040].to_vec(),
            sample_rate: cfg.dac_rate,
        };
        assert!(matches!(
            estimate_channel(&short, &p.training, &cfg),
            Err(ModemError::InsufficientTraining { .. })
        ));
    }

    #[test]
    fn estimate_snr_under_calibrated_noise() {
        // Per-bin noise variance of real white noise under the unitary
        // transform equals its time-domain variance; symbols have unit energy.
        let cfg = DmtConfig {
            clipping_ratio_db: 200.0,
            ..DmtConfig::default()
        };
        let p = training_preamble(&cfg, &mut RandomStream::new(5, 5)).unwrap();
        let rx = add_awgn(&p.waveform, 0.01, &mut RandomStream::new(5, 6));
        let est = estimate_channel(&rx, &p.training, &cfg).unwrap();
        let within = (1..512)
            .filter(|&k| (10.0 * est.snr[k].log10() - 20.0).abs() <= 0.5)
            .count();
        assert!(
            within as f64 >= 0.95 * 511.0,
            "{within}/511 bins within 0.5 dB"
        );
    }

    #[test]
    fn estimate_pure_delay() {
        let cfg = DmtConfig {
            clipping_ratio_db: 200.0,
            ..DmtConfig::default()
        };
        let p = training_preamble(&cfg, &mut RandomStream::new(6, 6)).unwrap();
        let rx = embed(&p.waveform, 3, 0);
        let est = estimate_channel(&rx, &p.training, &cfg).unwrap();
        for k in 1..512 {
            assert!((est.h[k].norm() - 1.0).abs() < 1e-9);
            let expected = -2.0 * PI * 3.0 * k as f64 / 1024.0;
            let diff = (est.h[k].arg() - expected).rem_euclid(2.0 * PI);
            assert!(diff < 1e-9 || 2.0 * PI - diff < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn noiseless_loopback_recovers_payload() {
        let cfg = DmtConfig::default();
        for b in 1..=8 {
            let table = LoadingTable::uniform(&cfg, b);
            let (bits, w) = random_frames(&table, &cfg, 3, b as u64);
            let rx = demodulate(&w, &ChannelEstimate::identity(&cfg), &table, &cfg).unwrap();
            assert_eq!(rx, bits, "order {b}");
        }
    }

    #[test]
    fn loopback_through_delay() {
        let cfg = DmtConfig::default();
        let p = training_preamble(&cfg, &mut RandomStream::new(9, 9)).unwrap();
        let table = LoadingTable::uniform(&cfg, 6);
        let (bits, payload) = random_frames(&table, &cfg, 4, 9);
        let mut tx = p.waveform.samples.clone();
        tx.extend_from_slice(&payload.samples);
        let rx = embed(
            &RealWaveform {
                samples: tx,
                sample_rate: cfg.dac_rate,
            },
            3,
            0,
        );
        let est = estimate_channel(&rx, &p.training, &cfg).unwrap();
        let start = 65 * 1040;
        let data = RealWaveform {
            samples: rx.samples[start..start + 4 * 1040].to_vec(),
            sample_rate: cfg.dac_rate,
        };
        assert_eq!(demodulate(&data, &est, &table, &cfg).unwrap(), bits);
    }

    #[test]
    fn demodulate_checks_length() {
        let cfg = DmtConfig::default();
        let rx = RealWaveform {
            samples: vec![0.0; 1000],
            sample_rate: cfg.dac_rate,
        };
        assert!(matches!(
            demodulate(
                &rx,
                &ChannelEstimate::identity(&cfg),
                &LoadingTable::uniform(&cfg, 2),
                &cfg
            ),
            Err(ModemError::FrameLength { .. })
        ));
    }

    #[test]
    fn qpsk_ber_at_12_db_matches_oracle() {
        let cfg = DmtConfig::default();
        let table = LoadingTable::uniform(&cfg, 2);
        let snr = 10f64.powf(1.2);
        let (bits, w) = random_frames(&table, &cfg, 4000, 12);
        let rx = add_awgn(&w, 1.0 / snr, &mut RandomStream::new(12, 99));
        let out = demodulate(&rx, &ChannelEstimate::identity(&cfg), &table, &cfg).unwrap();
        let errors = bits.iter().zip(&out).filter(|(a, b)| a != b).count();
        let n = bits.len() as f64;
        let p = Constellation::new(2).unwrap().analytic_ber(snr);
        let measured = errors as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(errors >= 100);
        assert!(
            (measured - p).abs() <= 3.0 * se,
            "measured {measured}, analytic {p}"
        );
    }
}
