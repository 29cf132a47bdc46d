//! Bit-error counting, required-OSNR extraction and rate estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loading::{GapModel, SnrProfile};
use crate::modem::{DmtConfig, LoadingTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("bit streams differ in length ({tx} vs {rx})")]
    LengthMismatch { tx: usize, rx: usize },
    #[error("{len} bits is not a whole number of {per_frame}-bit frames")]
    PartialFrame { len: usize, per_frame: usize },
    #[error("curve osnr values must be finite and strictly increasing")]
    UnorderedCurve,
    #[error("curve BER values must lie in [0, 0.5], got {0}")]
    BerOutOfRange(f64),
    #[error("cannot merge statistics over {0} and {1} subcarriers")]
    ShapeMismatch(usize, usize),
}

/// Bit-error counts, attributed to the subcarrier that carried each bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BerStats {
    pub total_bits: u64,
    pub error_bits: u64,
    /// Errors per bin, same indexing as [`LoadingTable`].
    pub per_subcarrier_errors: Vec<u64>,
}

impl BerStats {
    pub fn new(n_subcarriers: usize) -> Self {
        Self {
            total_bits: 0,
            error_bits: 0,
            per_subcarrier_errors: vec![0; n_subcarriers],
        }
    }

    pub fn ber(&self) -> f64 {
        if self.total_bits == 0 {
            0.0
        } else {
            self.error_bits as f64 / self.total_bits as f64
        }
    }

    pub fn merge(&mut self, other: &BerStats) -> Result<(), MetricsError> {
        if self.per_subcarrier_errors.len() != other.per_subcarrier_errors.len() {
            return Err(MetricsError::ShapeMismatch(
                self.per_subcarrier_errors.len(),
                other.per_subcarrier_errors.len(),
            ));
        }
        self.total_bits += other.total_bits;
        self.error_bits += other.error_bits;
        for (a, b) in self
            .per_subcarrier_errors
            .iter_mut()
            .zip(&other.per_subcarrier_errors)
        {
            *a += b;
        }
        Ok(())
    }
}

/// Compares payload streams frame by frame. Within a frame, bits follow the
/// active carriers in ascending bin order, `table.bits[k]` bits each.
pub fn count_ber(tx: &[u8], rx: &[u8], table: &LoadingTable) -> Result<BerStats, MetricsError> {
    if tx.len() != rx.len() {
        return Err(MetricsError::LengthMismatch {
            tx: tx.len(),
            rx: rx.len(),
        });
    }
    let per_frame = table.total_bits();
    if (per_frame == 0 && !tx.is_empty()) || (per_frame > 0 && !tx.len().is_multiple_of(per_frame))
    {
        return Err(MetricsError::PartialFrame {
            len: tx.len(),
            per_frame,
        });
    }
    let mut owner = Vec::with_capacity(per_frame);
    for k in table.active_carriers() {
        owner.extend(std::iter::repeat_n(k, table.bits[k] as usize));
    }
    let mut stats = BerStats::new(table.bits.len());
    stats.total_bits = tx.len() as u64;
    for (i, (a, b)) in tx.iter().zip(rx).enumerate() {
        if (a ^ b) & 1 == 1 {
            stats.error_bits += 1;
            stats.per_subcarrier_errors[owner[i % per_frame]] += 1;
        }
    }
    Ok(stats)
}

/// Measured BER against OSNR, ordered by OSNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsnrCurve {
    points: Vec<(f64, f64)>,
}

impl OsnrCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MetricsError> {
        if points.iter().any(|p| !p.0.is_finite()) || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MetricsError::UnorderedCurve);
        }
        if let Some(p) = points.iter().find(|p| !(0.0..=0.5).contains(&p.1)) {
            return Err(MetricsError::BerOutOfRange(p.1));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// OSNR at which the curve last crosses down through `limit`, interpolating
/// `log10(BER)` linearly between the bracketing points.
///
/// Returns `None` ("not reached") when the highest-OSNR point is still above
/// the limit. When every point is at or below the limit, the lowest OSNR
/// measured is returned as an upper bound.
pub fn required_osnr(curve: &OsnrCurve, limit: f64) -> Option<f64> {
    let pts = curve.points();
    let last_above = pts.iter().rposition(|p| p.1 > limit);
    match last_above {
        None => pts.first().map(|p| p.0),
        Some(i) if i + 1 == pts.len() => None,
        Some(i) => {
            let (x0, b0) = pts[i];
            let (x1, b1) = pts[i + 1];
            if b1 == limit {
                return Some(x1);
            }
            let l0 = b0.log10();
            let l1 = b1.max(f64::MIN_POSITIVE).log10();
            let t = (limit.log10() - l0) / (l1 - l0);
            Some(x0 + t * (x1 - x0))
        }
    }
}

/// Highest order whose threshold (with margin) the SNR meets, up to `max_b`.
pub fn supported_bits(snr: f64, gap: &GapModel, max_b: u8) -> u8 {
    (1..=max_b)
        .take_while(|&b| snr >= gap.required_snr(b))
        .last()
        .unwrap_or(0)
}

/// Gap-limited throughput in Gbit/s: every entry of `profile` carries the
/// highest order its SNR supports, at the configured symbol rate.
pub fn achievable_rate(profile: &SnrProfile, gap: &GapModel, cfg: &DmtConfig) -> f64 {
    let bits: u64 = profile
        .snr
        .iter()
        .map(|&s| supported_bits(s, gap, cfg.max_order_bits) as u64)
        .sum();
    bits as f64 * cfg.symbol_rate() / 1e9
}

/// Number of whole channels a band holds on a fixed grid.
pub fn grid_channels(band_ghz: f64, spacing_ghz: f64) -> u64 {
    (band_ghz / spacing_ghz + 1e-9).floor() as u64
}

/// Aggregate capacity in Tbit/s of a band filled with identical channels.
pub fn band_capacity_tbps(band_ghz: f64, spacing_ghz: f64, channel_rate: f64) -> f64 {
    grid_channels(band_ghz, spacing_ghz) as f64 * channel_rate / 1e12
}

/// Location and depth of the lowest point of an SNR profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Notch {
    pub index: usize,
    pub frequency_hz: f64,
    /// Mean SNR (dB) over the reference band minus the minimum.
    pub depth_db: f64,
}

/// Deepest SNR minimum with frequency inside `search`, measured against the
/// mean SNR inside `reference`. Entries with non-finite SNR are skipped.
pub fn find_notch(
    snr_db: &[f64],
    freqs_hz: &[f64],
    search: (f64, f64),
    reference: (f64, f64),
) -> Option<Notch> {
    let within = |f: f64, band: (f64, f64)| f >= band.0 && f <= band.1;
    let refs: Vec<f64> = snr_db
        .iter()
        .zip(freqs_hz)
        .filter(|(s, &f)| s.is_finite() && within(f, reference))
        .map(|(s, _)| *s)
        .collect();
    if refs.is_empty() {
        return None;
    }
    let ref_mean = refs.iter().sum::<f64>() / refs.len() as f64;
    snr_db
        .iter()
        .zip(freqs_hz)
        .enumerate()
        .filter(|(_, (s, &f))| s.is_finite() && within(f, search))
        .min_by(|a, b| a.1 .0.total_cmp(b.1 .0))
        .map(|(index, (s, &f))| Notch {
            index,
            frequency_hz: f,
            depth_db: ref_mean - s,
        })
}
