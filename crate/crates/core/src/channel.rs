//! IM/DD optical link: Mach-Zehnder modulator, fiber dispersion, DWDM
//! filtering, ASE noise loading at a set OSNR and square-law detection.
//!
//! Optical fields are complex envelopes referenced to the laser frequency.
//! Every linear stage filters the whole block in the frequency domain, so
//! blocks behave as periodic; callers pad with guard samples.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{
    apply_response, gaussian_noise, ComplexEnvelope, RandomStream, RealWaveform, Resample,
    SignalError,
};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// OSNR reference bandwidth, 0.1 nm at 1550 nm.
pub const OSNR_REFERENCE_BW: f64 = 12.5e9;

/// 3-dB angular frequency of the delay-normalized 5th-order Bessel low-pass.
const BESSEL5_W3DB: f64 = 2.427_410_702_152_628;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot set an OSNR on a field with zero power")]
    ZeroPower,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub span_km: f64,
    pub dispersion_ps_nm_km: f64,
    /// Accumulated dispersion of the compensating fiber (<= 0; 0 means none).
    pub dcf_total_ps_nm: f64,
    pub laser_freq_thz: f64,
    /// Laser detuning from `laser_freq_thz`; positive moves it above the
    /// filter center and suppresses the upper sideband.
    pub laser_offset_ghz: f64,
    pub filter_center_thz: f64,
    pub filter_fwhm_ghz: f64,
    /// Super-Gaussian order of the MUX/DEMUX passband.
    pub filter_order: f64,
    /// Also pass the signal through the transmit-side MUX before the fiber.
    pub mux_filter: bool,
    /// Add ASE after the DEMUX instead of at the pre-amplifier before it.
    pub ase_after_demux: bool,
    /// OSNR in 0.1 nm; `inf` disables noise loading.
    pub osnr_db: f64,
    pub tx_bw_ghz: f64,
    pub rx_bw_ghz: f64,
    pub vpi_volts: f64,
    /// Bias point as a fraction of V_pi; 0.5 is quadrature.
    pub bias_fraction: f64,
    /// Drive voltage produced by a unit-RMS DAC waveform.
    pub drive_rms_volts: f64,
    pub oversample_factor: usize,
    /// Electrical (DAC/ADC) sample rate in Hz.
    pub electrical_rate: f64,
    /// Not modeled; carried so configs record the lab operating point.
    pub launch_power_dbm: f64,
    /// Not modeled; DCF launch power relative to the fiber launch power.
    pub dcf_launch_offset_db: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            span_km: 0.0,
            dispersion_ps_nm_km: 17.0,
            dcf_total_ps_nm: 0.0,
            laser_freq_thz: 193.4,
            laser_offset_ghz: 0.0,
            filter_center_thz: 193.4,
            filter_fwhm_ghz: 63.0,
            filter_order: 3.0,
            mux_filter: false,
            ase_after_demux: false,
            osnr_db: f64::INFINITY,
            tx_bw_ghz: 27.0,
            rx_bw_ghz: 30.0,
            vpi_volts: 3.0,
            bias_fraction: 0.5,
            drive_rms_volts: 0.24,
            oversample_factor: 4,
            electrical_rate: 56e9,
            launch_power_dbm: 7.0,
            dcf_launch_offset_db: -6.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidConfig(m.to_string()));
        if !(self.span_km >= 0.0 && self.span_km.is_finite()) {
            return bad("span_km must be non-negative");
        }
        if !(self.dcf_total_ps_nm <= 0.0 && self.dcf_total_ps_nm.is_finite()) {
            return bad("dcf_total_ps_nm must be zero or negative");
        }
        if !(self.filter_fwhm_ghz > 0.0 && self.filter_order > 0.0) {
            return bad("filter FWHM and order must be positive");
        }
        if !(self.tx_bw_ghz > 0.0 && self.rx_bw_ghz > 0.0) {
            return bad("electrical bandwidths must be positive");
        }
        if !(self.vpi_volts > 0.0 && self.vpi_volts.is_finite()) {
            return bad("vpi_volts must be positive");
        }
        if !(self.electrical_rate > 0.0 && self.electrical_rate.is_finite()) {
            return bad("electrical_rate must be positive");
        }
        if self.oversample_factor < 1 {
            return bad("oversample_factor must be at least 1");
        }
        let needed = 2.0 * (self.laser_offset_ghz.abs() * 1e9 + 0.5 * self.electrical_rate);
        if self.optical_rate() <= needed {
            return bad("oversampled bandwidth does not cover the detuned signal");
        }
        if self.osnr_db.is_nan() {
            return bad("osnr_db must be a number");
        }
        Ok(())
    }

    pub fn optical_rate(&self) -> f64 {
        self.electrical_rate * self.oversample_factor as f64
    }

    /// Absolute laser frequency in Hz.
    pub fn carrier_frequency(&self) -> f64 {
        self.laser_freq_thz * 1e12 + self.laser_offset_ghz * 1e9
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency()
    }

    pub fn span_dispersion_ps_nm(&self) -> f64 {
        self.span_km * self.dispersion_ps_nm_km
    }

    /// First power-fading notch of a small-signal DSB link over the span,
    /// `sqrt(c / (2·λ²·D·L))`, in Hz. `None` without net dispersion.
    pub fn first_fading_notch(&self) -> Option<f64> {
        let d_acc = (self.span_dispersion_ps_nm() + self.dcf_total_ps_nm) * 1e-3;
        if d_acc == 0.0 {
            return None;
        }
        let lambda = self.wavelength();
        Some((SPEED_OF_LIGHT / (2.0 * lambda * lambda * d_acc.abs())).sqrt())
    }
}

/// Magnitude of a 5th-order Bessel low-pass with 3-dB cutoff `f3db`, applied
/// with zero phase.
pub fn bessel5_magnitude(f: f64, f3db: f64) -> f64 {
    let w = BESSEL5_W3DB * f / f3db;
    let s = Complex64::new(0.0, w);
    let den = ((((s + 15.0) * s + 105.0) * s + 420.0) * s + 945.0) * s + 945.0;
    945.0 / den.norm()
}

/// Super-Gaussian field response `exp(-ln2/2 · (2Δf/FWHM)^(2n))`.
pub fn super_gaussian_field(offset: f64, fwhm: f64, order: f64) -> f64 {
    (-0.5 * LN_2 * (2.0 * offset.abs() / fwhm).powf(2.0 * order)).exp()
}

fn low_pass_real(w: &RealWaveform, f3db: f64) -> RealWaveform {
    let mut buf: Vec<Complex64> = w.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    apply_response(&mut buf, w.sample_rate, |f| {
        Complex64::new(bessel5_magnitude(f, f3db), 0.0)
    });
    RealWaveform {
        samples: buf.into_iter().map(|c| c.re).collect(),
        sample_rate: w.sample_rate,
    }
}

/// Chirp-free push-pull MZM: `E = cos(π/2 · (v/Vπ + bias))`.
pub fn mzm_modulate(drive: &RealWaveform, cfg: &LinkConfig) -> ComplexEnvelope {
    let samples = drive
        .samples
        .iter()
        .map(|&v| {
            Complex64::new(
                (0.5 * PI * (v / cfg.vpi_volts + cfg.bias_fraction)).cos(),
                0.0,
            )
        })
        .collect();
    ComplexEnvelope {
        samples,
        sample_rate: drive.sample_rate,
        center_frequency: cfg.carrier_frequency(),
    }
}

/// All-pass chromatic dispersion `H(f) = exp(jπλ²D_acc f²/c)`, with `f`
/// relative to the envelope center and `λ` taken from the envelope's carrier.
pub fn fiber_propagate(field: &ComplexEnvelope, accumulated_ps_nm: f64) -> ComplexEnvelope {
    let mut out = field.clone();
    if accumulated_ps_nm == 0.0 {
        return out;
    }
    let lambda = SPEED_OF_LIGHT / field.center_frequency;
    let d_acc = accumulated_ps_nm * 1e-3; // ps/nm -> s/m
    let k = PI * lambda * lambda * d_acc / SPEED_OF_LIGHT;
    apply_response(&mut out.samples, field.sample_rate, |f| {
        Complex64::from_polar(1.0, k * f * f)
    });
    out
}

/// MUX/DEMUX passband centered on `filter_center_thz`, zero phase.
pub fn optical_filter(field: &ComplexEnvelope, cfg: &LinkConfig) -> ComplexEnvelope {
    let mut out = field.clone();
    let center = cfg.filter_center_thz * 1e12 - field.center_frequency;
    let fwhm = cfg.filter_fwhm_ghz * 1e9;
    apply_response(&mut out.samples, field.sample_rate, |f| {
        Complex64::new(
            super_gaussian_field(f - center, fwhm, cfg.filter_order),
            0.0,
        )
    });
    out
}

/// Adds white ASE over the simulated band at density
/// `N0 = P_signal / (OSNR · 12.5 GHz)`.
pub fn load_ase(
    field: &ComplexEnvelope,
    osnr_db: f64,
    stream: &mut RandomStream,
) -> Result<ComplexEnvelope, ChannelError> {
    if osnr_db == f64::INFINITY {
        return Ok(field.clone());
    }
    let power = field.mean_power();
    if power <= 0.0 {
        return Err(ChannelError::ZeroPower);
    }
    let n0 = power / (10f64.powf(osnr_db / 10.0) * OSNR_REFERENCE_BW);
    let noise = gaussian_noise(stream, field.len(), 0.5 * n0 * field.sample_rate)?;
    let mut out = field.clone();
    out.samples.iter_mut().zip(noise).for_each(|(s, n)| *s += n);
    Ok(out)
}

/// OSNR (dB, 0.1 nm) of `noisy` relative to the noise-free `clean` field.
pub fn measure_osnr(clean: &ComplexEnvelope, noisy: &ComplexEnvelope) -> f64 {
    let signal = clean.mean_power();
    let noise = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(a, b)| (b - a).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    let n0 = noise / clean.sample_rate;
    10.0 * (signal / (n0 * OSNR_REFERENCE_BW)).log10()
}

/// Square-law PIN/TIA: `|E|²`, electrical low-pass, resampling to the ADC
/// rate and AC coupling.
pub fn photodetect(
    field: &ComplexEnvelope,
    cfg: &LinkConfig,
) -> Result<RealWaveform, ChannelError> {
    let intensity = RealWaveform {
        samples: field.samples.iter().map(|s| s.norm_sqr()).collect(),
        sample_rate: field.sample_rate,
    };
    let filtered = low_pass_real(&intensity, cfg.rx_bw_ghz * 1e9);
    let mut out = filtered.resample(cfg.electrical_rate)?;
    let mean = out.samples.iter().sum::<f64>() / out.len().max(1) as f64;
    out.samples.iter_mut().for_each(|v| *v -= mean);
    Ok(out)
}

/// Driver, modulator, optional MUX, fiber span and DCF: the field arriving
/// at the receiver pre-amplifier.
pub fn launch_and_propagate(
    tx: &RealWaveform,
    cfg: &LinkConfig,
) -> Result<ComplexEnvelope, ChannelError> {
    cfg.validate()?;
    let driven = RealWaveform {
        samples: tx.samples.iter().map(|v| v * cfg.drive_rms_volts).collect(),
        sample_rate: tx.sample_rate,
    };
    let shaped = low_pass_real(&driven, cfg.tx_bw_ghz * 1e9);
    let drive = shaped.resample(cfg.optical_rate())?;
    let mut field = mzm_modulate(&drive, cfg);
    if cfg.mux_filter {
        field = optical_filter(&field, cfg);
    }
    field = fiber_propagate(&field, cfg.span_dispersion_ps_nm());
    Ok(fiber_propagate(&field, cfg.dcf_total_ps_nm))
}

/// Complete link from DAC samples to ADC samples at the electrical rate.
/// ASE is loaded at the pre-amplifier, ahead of the DEMUX, unless
/// `ase_after_demux` is set.
pub fn run_link(
    tx: &RealWaveform,
    cfg: &LinkConfig,
    stream: &mut RandomStream,
) -> Result<RealWaveform, ChannelError> {
    let field = launch_and_propagate(tx, cfg)?;
    let received = if cfg.ase_after_demux {
        load_ase(&optical_filter(&field, cfg), cfg.osnr_db, stream)?
    } else {
        optical_filter(&load_ase(&field, cfg.osnr_db, stream)?, cfg)
    };
    photodetect(&received, cfg)
}
