//! Rate-adaptive bit and power loading under an SNR-gap model.
//!
//! Each order `b` has a threshold `T(b)`: the symbol SNR at which the
//! Gray-QAM error-rate approximation meets the target BER. Putting `b` bits on
//! a carrier with unit-power SNR `s` costs `T(b)/s` of transmit power. With a
//! budget of one unit per carrier, the common margin an allocation reaches is
//! `γ = N / Σ T(b_k)/s_k`, so maximising the margin means minimising the
//! summed cost at a fixed bit total.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{Constellation, MAX_ORDER_BITS};
use crate::modem::{DmtConfig, LoadingTable};

/// Nominal FEC threshold of the PHY.
pub const FEC_LIMIT_BER: f64 = 3.3e-3;
/// Full and fallback gross line rates (bit/s).
pub const FULL_RATE: f64 = 112e9;
pub const HALF_RATE: f64 = 56e9;
/// Largest per-carrier power, relative to the mean, before a table is refused.
pub const DEFAULT_POWER_CAP_DB: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadingError {
    #[error("target BER {0} is not attainable (must lie in (0, 0.5))")]
    UnattainableTarget(f64),
    #[error("order {0} is outside 1..={MAX_ORDER_BITS}")]
    InvalidOrder(u8),
    #[error("SNR profile entry {0} is negative or not finite")]
    InvalidProfile(usize),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Linear SNR per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrProfile {
    pub snr: Vec<f64>,
}

impl SnrProfile {
    pub fn new(snr: Vec<f64>) -> Result<Self, LoadingError> {
        if let Some(k) = snr.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(LoadingError::InvalidProfile(k));
        }
        Ok(Self { snr })
    }

    pub fn len(&self) -> usize {
        self.snr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr.is_empty()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            snr: self.snr.iter().map(|s| s * gain).collect(),
        }
    }

    pub fn snr_db(&self) -> Vec<f64> {
        self.snr.iter().map(|s| 10.0 * s.log10()).collect()
    }
}

/// Per-order SNR thresholds at a target BER, plus a uniform design margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub target_ber: f64,
    pub margin_db: f64,
    /// `thresholds[b - 1]` is the linear symbol SNR for order `b`.
    thresholds: Vec<f64>,
}

impl GapModel {
    pub fn new(target_ber: f64, margin_db: f64) -> Result<Self, LoadingError> {
        let thresholds = (1..=MAX_ORDER_BITS)
            .map(|b| min_snr_for_order(b, target_ber))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            target_ber,
            margin_db,
            thresholds,
        })
    }

    /// Exact inverse of the BER approximation, without the design margin.
    pub fn threshold(&self, b: u8) -> f64 {
        if b == 0 {
            0.0
        } else {
            self.thresholds[b as usize - 1]
        }
    }

    /// Threshold including the design margin; what loading works against.
    pub fn required_snr(&self, b: u8) -> f64 {
        self.threshold(b) * 10f64.powf(self.margin_db / 10.0)
    }

    /// SNR gap `T(b)/(2^b - 1)` in dB.
    pub fn gap_db(&self, b: u8) -> f64 {
        10.0 * (self.threshold(b) / ((1u32 << b) - 1) as f64).log10()
    }

    /// True when `required_snr` has non-decreasing increments up to `max_b`,
    /// which is the condition for greedy allocation to be optimal.
    pub fn is_convex(&self, max_b: u8) -> bool {
        let mut prev_step = 0.0;
        for b in 1..=max_b {
            let step = self.required_snr(b) - self.required_snr(b - 1);
            if step < prev_step * (1.0 - 1e-9) {
                return false;
            }
            prev_step = step;
        }
        true
    }
}

impl Default for GapModel {
    fn default() -> Self {
        Self::new(FEC_LIMIT_BER, 0.0).expect("default target is attainable")
    }
}

/// Smallest symbol SNR at which order `b` reaches `target_ber`, found by
/// bisection on the analytic BER curve.
pub fn min_snr_for_order(b: u8, target_ber: f64) -> Result<f64, LoadingError> {
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(LoadingError::UnattainableTarget(target_ber));
    }
    let c = Constellation::new(b).map_err(|_| LoadingError::InvalidOrder(b))?;
    if c.analytic_ber(0.0) <= target_ber {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while c.analytic_ber(hi) > target_ber {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if c.analytic_ber(mid) > target_ber {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(hi)
}

/// Bits, power and common margin for one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bits: Vec<u8>,
    pub power: Vec<f64>,
    /// Common margin of every active carrier over its threshold, in dB.
    pub margin_db: f64,
}

impl Allocation {
    pub fn total_bits(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

fn carrier_cost(gap: &GapModel, snr: f64, b: u8) -> f64 {
    if b == 0 {
        0.0
    } else if snr > 0.0 {
        gap.required_snr(b) / snr
    } else {
        f64::INFINITY
    }
}

/// Equal-margin margin (linear) of a fixed bit assignment under a budget of
/// one power unit per entry of `snr`.
pub fn table_margin(snr: &[f64], bits: &[u8], gap: &GapModel) -> f64 {
    let cost: f64 = snr
        .iter()
        .zip(bits)
        .map(|(&s, &b)| carrier_cost(gap, s, b))
        .sum();
    if cost == 0.0 {
        f64::INFINITY
    } else {
        snr.len() as f64 / cost
    }
}

#[derive(PartialEq)]
struct Step {
    cost: f64,
    carrier: usize,
}

impl Eq for Step {}

impl Ord for Step {
    // Min-heap on cost, ties to the lowest carrier index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.carrier.cmp(&self.carrier))
    }
}

impl PartialOrd for Step {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn greedy_bits(snr: &[f64], target: usize, gap: &GapModel, max_b: u8) -> Vec<u8> {
    let mut bits = vec![0u8; snr.len()];
    let mut heap: BinaryHeap<Step> = snr
        .iter()
        .enumerate()
        .map(|(k, &s)| Step {
            cost: carrier_cost(gap, s, 1),
            carrier: k,
        })
        .filter(|s| s.cost.is_finite())
        .collect();
    for _ in 0..target {
        let step = heap.pop().expect("feasibility checked by caller");
        let k = step.carrier;
        bits[k] += 1;
        if bits[k] < max_b {
            let next = carrier_cost(gap, snr[k], bits[k] + 1) - carrier_cost(gap, snr[k], bits[k]);
            heap.push(Step {
                cost: next,
                carrier: k,
            });
        }
    }
    bits
}

/// Exact minimum-cost allocation by dynamic programming over
/// (carrier, bits placed so far).
fn exact_bits(snr: &[f64], target: usize, gap: &GapModel, max_b: u8) -> Vec<u8> {
    let n = snr.len();
    let mut best = vec![f64::INFINITY; target + 1];
    best[0] = 0.0;
    let mut choice = vec![0u8; n * (target + 1)];
    let mut next = vec![f64::INFINITY; target + 1];
    for k in 0..n {
        let costs: Vec<f64> = (0..=max_b).map(|b| carrier_cost(gap, snr[k], b)).collect();
        next.iter_mut().for_each(|v| *v = f64::INFINITY);
        for t in 0..=target {
            for (b, &c) in costs.iter().enumerate() {
                if b > t {
                    break;
                }
                let v = best[t - b] + c;
                if v < next[t] {
                    next[t] = v;
                    choice[k * (target + 1) + t] = b as u8;
                }
            }
        }
        std::mem::swap(&mut best, &mut next);
    }
    let mut bits = vec![0u8; n];
    let mut t = target;
    for k in (0..n).rev() {
        let b = choice[k * (target + 1) + t];
        bits[k] = b;
        t -= b as usize;
    }
    bits
}

/// Margin-maximising allocation of exactly `target_bits` bits.
///
/// Incremental-cost (Levin-Campello) greedy allocation is used when the
/// per-order thresholds are convex; otherwise an exact dynamic program solves
/// the same problem. Power then places every active carrier at the same margin
/// above its threshold, scaled to a mean of one over all carriers.
pub fn levin_campello(
    profile: &SnrProfile,
    target_bits: usize,
    gap: &GapModel,
    max_b: u8,
) -> Result<Allocation, LoadingError> {
    levin_campello_capped(profile, target_bits, gap, max_b, DEFAULT_POWER_CAP_DB)
}

pub fn levin_campello_capped(
    profile: &SnrProfile,
    target_bits: usize,
    gap: &GapModel,
    max_b: u8,
    power_cap_db: f64,
) -> Result<Allocation, LoadingError> {
    if !(1..=MAX_ORDER_BITS).contains(&max_b) {
        return Err(LoadingError::InvalidOrder(max_b));
    }
    let snr = &profile.snr;
    if let Some(k) = snr.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(LoadingError::InvalidProfile(k));
    }
    let n = snr.len();
    if target_bits == 0 {
        return Ok(Allocation {
            bits: vec![0; n],
            power: vec![0.0; n],
            margin_db: f64::INFINITY,
        });
    }
    let capacity = snr.iter().filter(|&&s| s > 0.0).count() * max_b as usize;
    if capacity < target_bits {
        return Err(LoadingError::Infeasible(format!(
            "{target_bits} bits requested, at most {capacity} fit at {max_b} bits per usable carrier"
        )));
    }

    let bits = if gap.is_convex(max_b) {
        greedy_bits(snr, target_bits, gap, max_b)
    } else {
        exact_bits(snr, target_bits, gap, max_b)
    };

    let gamma = table_margin(snr, &bits, gap);
    let power: Vec<f64> = snr
        .iter()
        .zip(&bits)
        .map(|(&s, &b)| gamma * carrier_cost(gap, s, b))
        .collect();
    let cap = 10f64.powf(power_cap_db / 10.0);
    if let Some(k) = power.iter().position(|&p| p > cap) {
        return Err(LoadingError::Infeasible(format!(
            "carrier {k} needs {:.1} dB above mean power",
            10.0 * power[k].log10()
        )));
    }
    Ok(Allocation {
        bits,
        power,
        margin_db: 10.0 * gamma.log10(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rate {
    Full,
    Half,
    None,
}

impl Rate {
    pub fn line_rate(self) -> f64 {
        match self {
            Rate::Full => FULL_RATE,
            Rate::Half => HALF_RATE,
            Rate::None => 0.0,
        }
    }

    pub fn bits_per_frame(self, cfg: &DmtConfig) -> usize {
        cfg.bits_per_frame_for_rate(self.line_rate()).round() as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rate::Full => "full",
            Rate::Half => "half",
            Rate::None => "none",
        }
    }
}

/// Outcome of one loading attempt during rate selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAttempt {
    pub rate: Rate,
    pub target_bits: usize,
    /// Achieved margin, or `None` when the allocation was infeasible.
    pub margin_db: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSelection {
    pub rate: Rate,
    pub table: Option<LoadingTable>,
    pub margin_db: Option<f64>,
    pub attempts: Vec<RateAttempt>,
}

/// Loads `rate` onto the loadable carriers of a bin-indexed profile.
pub fn load_rate(
    profile: &SnrProfile,
    gap: &GapModel,
    cfg: &DmtConfig,
    rate: Rate,
) -> (RateAttempt, Option<(LoadingTable, f64)>) {
    let target = rate.bits_per_frame(cfg);
    let carriers = cfg.loadable_carriers();
    let sub = SnrProfile {
        snr: carriers
            .iter()
            .map(|&k| profile.snr.get(k).copied().unwrap_or(0.0))
            .collect(),
    };
    match levin_campello(&sub, target, gap, cfg.max_order_bits) {
        Ok(alloc) => {
            let mut table = LoadingTable::empty(cfg.n_subcarriers);
            for (i, &k) in carriers.iter().enumerate() {
                table.bits[k] = alloc.bits[i];
                table.power[k] = alloc.power[i];
            }
            let attempt = RateAttempt {
                rate,
                target_bits: target,
                margin_db: Some(alloc.margin_db),
                note: None,
            };
            (attempt, Some((table, alloc.margin_db)))
        }
        Err(e) => (
            RateAttempt {
                rate,
                target_bits: target,
                margin_db: None,
                note: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// Full rate if it loads with non-negative margin, else half rate under the
/// same condition, else nothing.
pub fn select_rate(profile: &SnrProfile, gap: &GapModel, cfg: &DmtConfig) -> RateSelection {
    let mut attempts = Vec::new();
    for rate in [Rate::Full, Rate::Half] {
        let (attempt, loaded) = load_rate(profile, gap, cfg, rate);
        attempts.push(attempt);
        if let Some((table, margin)) = loaded {
            if margin >= 0.0 {
                return RateSelection {
                    rate,
                    table: Some(table),
                    margin_db: Some(margin),
                    attempts,
                };
            }
        }
    }
    RateSelection {
        rate: Rate::None,
        table: None,
        margin_db: None,
        attempts,
    }
}
