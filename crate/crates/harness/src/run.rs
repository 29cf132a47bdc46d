use std::time::{Duration, Instant};

use dmtlink_core::channel::{run_link, LinkConfig};
use dmtlink_core::loading::{
    load_rate, select_rate, GapModel, Rate, RateAttempt, SnrProfile, FEC_LIMIT_BER,
};
use dmtlink_core::metrics::{count_ber, required_osnr, BerStats, OsnrCurve};
use dmtlink_core::modem::{
    build_frames, demodulate, estimate_channel, frame_sync, training_preamble, DmtConfig,
    LoadingTable,
};
use dmtlink_core::signal::{RandomStream, RealWaveform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{RatePolicy, Scenario};
use crate::HarnessError;

/// How a sweep point ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointOutcome {
    Measured,
    NoSync,
    NoLoading(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub osnr_db: f64,
    pub outcome: PointOutcome,
    /// Rate chosen by the policy; `None` when no rate closes with margin.
    pub selected_rate: Rate,
    /// Rate of the payload actually sent (auto-fallback sends half rate on a
    /// best-effort basis when nothing closes).
    pub transmitted_rate: Rate,
    pub margin_db: Option<f64>,
    pub attempts: Vec<RateAttempt>,
    pub table: Option<LoadingTable>,
    /// Estimated SNR per bin.
    pub snr: Option<SnrProfile>,
    pub stats: BerStats,
    pub payload_frames: usize,
    pub wall_time: Duration,
}

impl RunRecord {
    /// Measured BER, or `None` for points that never carried payload.
    pub fn ber(&self) -> Option<f64> {
        (self.outcome == PointOutcome::Measured && self.stats.total_bits > 0)
            .then(|| self.stats.ber())
    }

    /// Fewer errors than the stopping target: the BER is an estimate from a
    /// capped run.
    pub fn low_confidence(&self, min_errors: u64) -> bool {
        self.stats.error_bits < min_errors
    }

    pub fn without_timing(&self) -> Self {
        Self {
            wall_time: Duration::ZERO,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub records: Vec<RunRecord>,
    pub required_osnr_db: Option<f64>,
}

impl ScenarioResult {
    /// Record at the highest OSNR, which is the one summaries report.
    pub fn reference_record(&self) -> Option<&RunRecord> {
        self.records.last()
    }
}

/// Run-wide overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub sweep: Option<Vec<f64>>,
    pub payload_frames: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, s: &Scenario) -> Result<Scenario, HarnessError> {
        let mut s = s.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(sweep) = &self.sweep {
            s.osnr_sweep = sweep.clone();
        }
        if let Some(n) = self.payload_frames {
            s.payload_frames = n.min(s.payload_frames);
        }
        s.validate()?;
        Ok(s)
    }
}

const TRAINING_BITS: u64 = 0;
const TRAINING_NOISE: u64 = 1;
const PAYLOAD_BITS: u64 = 2;
const PAYLOAD_NOISE: u64 = 3;

/// Streams are keyed by sweep index, purpose and block number, so every
/// point draws the same numbers whatever thread runs it.
fn stream(seed: u64, point: usize, purpose: u64, block: u64) -> RandomStream {
    RandomStream::new(seed, ((point as u64 + 1) << 40) | (block << 8) | purpose)
}

/// Surrounds a burst with one idle frame on each side so circular filtering
/// in the link does not wrap signal from one end to the other.
fn with_guards(w: &RealWaveform, guard: usize) -> RealWaveform {
    let mut samples = vec![0.0; guard];
    samples.extend_from_slice(&w.samples);
    samples.extend(std::iter::repeat_n(0.0, guard));
    RealWaveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

fn slice(w: &RealWaveform, start: usize, len: usize) -> RealWaveform {
    RealWaveform {
        samples: w.samples[start..start + len].to_vec(),
        sample_rate: w.sample_rate,
    }
}

struct Loaded {
    selected: Rate,
    transmitted: Rate,
    table: LoadingTable,
    margin_db: f64,
    attempts: Vec<RateAttempt>,
}

fn apply_policy(
    policy: RatePolicy,
    profile: &SnrProfile,
    gap: &GapModel,
    cfg: &DmtConfig,
) -> Result<Loaded, Vec<RateAttempt>> {
    let fixed = |rate: Rate| {
        let (attempt, loaded) = load_rate(profile, gap, cfg, rate);
        match loaded {
            Some((table, margin_db)) => Ok(Loaded {
                selected: rate,
                transmitted: rate,
                table,
                margin_db,
                attempts: vec![attempt],
            }),
            None => Err(vec![attempt]),
        }
    };
    match policy {
        RatePolicy::FixedFull => fixed(Rate::Full),
        RatePolicy::FixedHalf => fixed(Rate::Half),
        RatePolicy::AutoFallback => {
            let sel = select_rate(profile, gap, cfg);
            match (sel.table, sel.margin_db) {
                (Some(table), Some(margin_db)) => Ok(Loaded {
                    selected: sel.rate,
                    transmitted: sel.rate,
                    table,
                    margin_db,
                    attempts: sel.attempts,
                }),
                _ => match load_rate(profile, gap, cfg, Rate::Half).1 {
                    Some((table, margin_db)) => Ok(Loaded {
                        selected: Rate::None,
                        transmitted: Rate::Half,
                        table,
                        margin_db,
                        attempts: sel.attempts,
                    }),
                    None => Err(sel.attempts),
                },
            }
        }
    }
}

/// Training, loading and payload measurement at one OSNR set point.
///
/// `point` is the index of the set point within the sweep; it keys the
/// random streams.
pub fn run_point(s: &Scenario, point: usize, osnr_db: f64) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let cfg = &s.modem;
    let link = LinkConfig {
        osnr_db,
        ..s.link.clone()
    };
    let fl = cfg.frame_len();
    let guard = fl;
    let backoff = cfg.cp_samples / 2;

    let mut record = RunRecord {
        scenario: s.name.clone(),
        osnr_db,
        outcome: PointOutcome::NoSync,
        selected_rate: Rate::None,
        transmitted_rate: Rate::None,
        margin_db: None,
        attempts: Vec::new(),
        table: None,
        snr: None,
        stats: BerStats::new(cfg.n_subcarriers),
        payload_frames: 0,
        wall_time: Duration::ZERO,
    };

    let preamble = training_preamble(cfg, &mut stream(s.seed, point, TRAINING_BITS, 0))?;
    let burst = with_guards(&preamble.waveform, guard);
    let rx = run_link(&burst, &link, &mut stream(s.seed, point, TRAINING_NOISE, 0))?;
    let start = match frame_sync(&rx, cfg) {
        Ok(k) if k >= backoff && k + backoff <= 2 * guard => k - backoff,
        _ => {
            record.wall_time = started.elapsed();
            return Ok(record);
        }
    };
    // Same offset from the burst start for every later burst.
    let offset = start;
    let needed = (preamble.training.len() + 1) * fl;
    if offset + needed > rx.len() {
        record.wall_time = started.elapsed();
        return Ok(record);
    }
    let est = estimate_channel(&slice(&rx, offset, needed), &preamble.training, cfg)?;
    let profile = SnrProfile::new(est.snr.clone())?;
    record.snr = Some(profile.clone());

    let gap = GapModel::default();
    let loaded = match apply_policy(s.rate_policy, &profile, &gap, cfg) {
        Ok(l) => l,
        Err(attempts) => {
            let note = attempts
                .iter()
                .filter_map(|a| a.note.clone())
                .collect::<Vec<_>>()
                .join("; ");
            record.attempts = attempts;
            record.outcome = PointOutcome::NoLoading(note);
            record.wall_time = started.elapsed();
            return Ok(record);
        }
    };
    record.selected_rate = loaded.selected;
    record.transmitted_rate = loaded.transmitted;
    record.margin_db = Some(loaded.margin_db);
    record.attempts = loaded.attempts;
    let table = loaded.table;

    let per_frame = table.total_bits();
    let mut block = 0u64;
    while record.payload_frames < s.payload_frames && record.stats.error_bits < s.min_errors {
        let n = s.batch_frames.min(s.payload_frames - record.payload_frames);
        let bits = stream(s.seed, point, PAYLOAD_BITS, block).bits(n * per_frame);
        let tx = build_frames(&bits, &table, cfg)?;
        let rx = run_link(
            &with_guards(&tx, guard),
            &link,
            &mut stream(s.seed, point, PAYLOAD_NOISE, block),
        )?;
        let decided = demodulate(&slice(&rx, offset, n * fl), &est, &table, cfg)?;
        record.stats.merge(&count_ber(&bits, &decided, &table)?)?;
        record.payload_frames += n;
        block += 1;
    }
    record.table = Some(table);
    record.outcome = PointOutcome::Measured;
    record.wall_time = started.elapsed();
    Ok(record)
}

/// BER curve over a scenario's records; points without payload count as
/// failing.
pub fn osnr_curve(records: &[RunRecord]) -> Result<OsnrCurve, HarnessError> {
    let points = records
        .iter()
        .map(|r| (r.osnr_db, r.ber().unwrap_or(0.5).min(0.5)))
        .collect();
    Ok(OsnrCurve::new(points)?)
}

/// Runs every sweep point on a pool of `jobs` threads (0 = all cores).
/// Records come back in sweep order regardless of scheduling.
pub fn run_scenario(s: &Scenario, jobs: usize) -> Result<ScenarioResult, HarnessError> {
    s.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let records = pool.install(|| {
        s.osnr_sweep
            .par_iter()
            .enumerate()
            .map(|(i, &osnr)| run_point(s, i, osnr))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let required_osnr_db = required_osnr(&osnr_curve(&records)?, FEC_LIMIT_BER);
    Ok(ScenarioResult {
        scenario: s.clone(),
        records,
        required_osnr_db,
    })
}
