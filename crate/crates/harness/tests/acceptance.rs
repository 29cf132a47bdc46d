//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use dmtlink_core::channel::{launch_and_propagate, load_ase, measure_osnr, LinkConfig};
use dmtlink_core::constellation::Constellation;
use dmtlink_core::loading::{
    levin_campello_capped, min_snr_for_order, table_margin, GapModel, Rate, SnrProfile,
    FEC_LIMIT_BER, FULL_RATE,
};
use dmtlink_core::metrics::{band_capacity_tbps, count_ber, find_notch, grid_channels, Notch};
use dmtlink_core::modem::{build_frames, demodulate, ChannelEstimate, DmtConfig, LoadingTable};
use dmtlink_core::signal::RandomStream;
use dmtlink_harness::{
    bundled, emit_outputs, run_point, run_scenario, RatePolicy, RunOptions, Scenario,
    ScenarioResult,
};
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Bundled scenario measured with 1000 errors per point over a 1 dB grid.
fn precise(name: &str, sweep: std::ops::RangeInclusive<i32>) -> Scenario {
    let mut s = RunOptions {
        sweep: Some(sweep.map(f64::from).collect()),
        ..RunOptions::default()
    }
    .apply(&bundled(name).unwrap())
    .unwrap();
    s.min_errors = 1000;
    s.payload_frames = 3000;
    s
}

fn required(res: &ScenarioResult) -> Result<f64, String> {
    res.required_osnr_db
        .ok_or_else(|| format!("{}: FEC limit not reached", res.scenario.name))
}

fn profile_at(s: &Scenario, osnr_db: f64) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut s = s.clone();
    s.payload_frames = 1;
    let rec = run_point(&s, 0, osnr_db).map_err(|e| e.to_string())?;
    let snr = rec.snr.ok_or("no SNR estimate (sync failed)")?;
    let cfg = &s.modem;
    let freqs = (0..cfg.n_subcarriers)
        .map(|k| k as f64 * cfg.subcarrier_spacing())
        .collect();
    Ok((snr.snr_db(), freqs))
}

fn first_notch(s: &Scenario, osnr_db: f64, around_hz: f64) -> Result<Notch, String> {
    let (db, f) = profile_at(s, osnr_db)?;
    find_notch(&db, &f, (0.6 * around_hz, 1.4 * around_hz), (0.5e9, 3e9))
        .ok_or_else(|| "empty search band".to_string())
}

fn dsb_without_dcf(km: f64) -> Scenario {
    let mut s = bundled("dsb-dcf-40km").unwrap();
    s.name = format!("dsb-{km}km");
    s.link.span_km = km;
    s.link.dcf_total_ps_nm = 0.0;
    s
}

fn c1_frame_rate_identity() -> Result<String, String> {
    let cfg = DmtConfig::default();
    ensure(cfg.frame_len() == 1040, || {
        format!("frame is {} samples", cfg.frame_len())
    })?;
    let full = Rate::Full.bits_per_frame(&cfg);
    ensure(full == 2080, || format!("full rate needs {full} bits"))?;
    ensure(FULL_RATE * 1040.0 / 56e9 == 2080.0, || {
        "rate identity".into()
    })?;
    ensure(Rate::Half.bits_per_frame(&cfg) == 1040, || {
        "half rate".into()
    })?;
    Ok("1040 samples/frame, 2080 bits/frame at 112 Gbit/s".into())
}

fn c2_awgn_oracle() -> Result<String, String> {
    let cfg = DmtConfig {
        clipping_ratio_db: 200.0,
        ..DmtConfig::default()
    };
    let est = ChannelEstimate::identity(&cfg);
    let mut worst: f64 = 0.0;
    for b in [1u8, 2, 4, 6] {
        let c = Constellation::new(b).unwrap();
        let table = LoadingTable::uniform(&cfg, b);
        for (i, target) in [1e-2, 1e-3, 1e-4].into_iter().enumerate() {
            let snr = min_snr_for_order(b, target).map_err(|e| e.to_string())?;
            let p = c.analytic_ber(snr);
            let sigma = (1.0 / snr).sqrt();
            let mut bits_stream = RandomStream::new(2024, (b as u64) << 4 | i as u64);
            let mut noise = RandomStream::new(2025, (b as u64) << 4 | i as u64);
            let (mut errors, mut total) = (0u64, 0u64);
            while errors < 300 {
                let bits = bits_stream.bits(table.total_bits() * 50);
                let mut tx = build_frames(&bits, &table, &cfg).map_err(|e| e.to_string())?;
                for v in &mut tx.samples {
                    *v += sigma * noise.standard_normal();
                }
                let rx = demodulate(&tx, &est, &table, &cfg).map_err(|e| e.to_string())?;
                let st = count_ber(&bits, &rx, &table).map_err(|e| e.to_string())?;
                errors += st.error_bits;
                total += st.total_bits;
            }
            let measured = errors as f64 / total as f64;
            let se = (p * (1.0 - p) / total as f64).sqrt();
            let z = (measured - p).abs() / se;
            worst = worst.max(z);
            ensure(z <= 3.0, || {
                format!(
                    "b={b} snr={:.2} dB: measured {measured:.3e} vs {p:.3e} ({z:.1} se)",
                    10.0 * snr.log10()
                )
            })?;
        }
    }
    Ok(format!(
        "12 points within 3 standard errors (worst {worst:.2})"
    ))
}

fn c3_loading_optimality() -> Result<String, String> {
    let gap = GapModel::default();
    let mut rng = RandomStream::new(3, 3);
    for inst in 0..500 {
        let n = rng.random_range(1..=8usize);
        let max_b = rng.random_range(1..=4u8);
        let target = rng.random_range(1..=n * max_b as usize);
        let snr: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.random_range(0.3..4.0)))
            .collect();
        let alloc = levin_campello_capped(
            &SnrProfile::new(snr.clone()).unwrap(),
            target,
            &gap,
            max_b,
            f64::INFINITY,
        )
        .map_err(|e| format!("instance {inst}: {e}"))?;
        let mut best = 0.0f64;
        let mut bits = vec![0u8; n];
        loop {
            if bits.iter().map(|&b| b as usize).sum::<usize>() == target {
                best = best.max(table_margin(&snr, &bits, &gap));
            }
            let mut k = 0;
            while k < n && bits[k] == max_b {
                bits[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
            bits[k] += 1;
        }
        let opt_db = 10.0 * best.log10();
        ensure(alloc.total_bits() == target, || {
            format!("instance {inst}: wrong total")
        })?;
        ensure((alloc.margin_db - opt_db).abs() < 1e-9, || {
            format!(
                "instance {inst}: {} dB vs optimum {opt_db} dB",
                alloc.margin_db
            )
        })?;
    }
    Ok("500/500 instances match exhaustive search".into())
}

fn c4_fading_notch() -> Result<String, String> {
    let mut parts = Vec::new();
    for (km, expected, tol) in [(10.0, 19.2e9, 1.0e9), (40.0, 9.6e9, 0.5e9)] {
        let s = dsb_without_dcf(km);
        let analytic = s.link.first_fading_notch().unwrap();
        let (db, f) = profile_at(&s, f64::INFINITY)?;
        let notch = if km == 10.0 {
            find_notch(&db, &f, (0.5e9, 27.5e9), (0.5e9, 3e9))
        } else {
            find_notch(&db, &f, (0.5 * analytic, 1.5 * analytic), (0.5e9, 3e9))
        }
        .ok_or("no notch")?;
        ensure((notch.frequency_hz - expected).abs() <= tol, || {
            format!("{km} km: notch at {:.2} GHz", notch.frequency_hz / 1e9)
        })?;
        parts.push(format!(
            "{km} km at {:.2} GHz (analytic {:.2})",
            notch.frequency_hz / 1e9,
            analytic / 1e9
        ));
    }
    Ok(parts.join(", "))
}

fn c5_dcf_restoration() -> Result<String, String> {
    let b2b = run_scenario(&precise("b2b-dsb", 36..=42), 0).map_err(|e| e.to_string())?;
    let mut dcf = precise("dsb-dcf-40km", 36..=42);
    // Independent noise so agreement is not an artifact of shared draws.
    dcf.seed += 1;
    let dcf = run_scenario(&dcf, 0).map_err(|e| e.to_string())?;
    let top = |r: &ScenarioResult| {
        r.records
            .last()
            .and_then(|x| x.snr.clone())
            .ok_or("no profile")
    };
    let (a, b) = (top(&b2b)?.snr_db(), top(&dcf)?.snr_db());
    let cfg = &b2b.scenario.modem;
    let close = (1..cfg.n_subcarriers)
        .filter(|&k| (a[k] - b[k]).abs() <= 2.0)
        .count();
    let frac = close as f64 / (cfg.n_subcarriers - 1) as f64;
    ensure(frac >= 0.95, || {
        format!("only {:.1}% within 2 dB", 100.0 * frac)
    })?;
    let (ra, rb) = (required(&b2b)?, required(&dcf)?);
    ensure((ra - rb).abs() <= 1.0, || {
        format!("required OSNR {rb:.2} vs b2b {ra:.2} dB")
    })?;
    Ok(format!(
        "{:.1}% of subcarriers within 2 dB; required OSNR {rb:.2} dB vs b2b {ra:.2} dB",
        100.0 * frac
    ))
}

fn c6_vsb_orderings() -> Result<String, String> {
    let run = |name: &str, sweep| run_scenario(&precise(name, sweep), 0).map_err(|e| e.to_string());
    let dsb = required(&run("b2b-dsb", 35..=43)?)?;
    let vsb0 = required(&run("vsb-b2b", 35..=43)?)?;
    let vsb10 = required(&run("vsb-10km", 35..=45)?)?;
    let vsb20 = required(&run("vsb-20km", 36..=47)?)?;
    ensure((vsb0 - dsb).abs() <= 0.5, || {
        format!("VSB b2b {vsb0:.2} vs DSB b2b {dsb:.2} dB")
    })?;
    ensure(vsb0 < vsb10 && vsb10 < vsb20, || {
        format!("not increasing: b2b {vsb0:.2}, 10 km {vsb10:.2}, 20 km {vsb20:.2} dB")
    })?;

    let dsb40 = dsb_without_dcf(40.0);
    let f1 = dsb40.link.first_fading_notch().unwrap();
    let d_dsb = first_notch(&dsb40, 50.0, f1)?.depth_db;
    let d_vsb = first_notch(&bundled("vsb-40km").unwrap(), 50.0, f1)?.depth_db;
    ensure(d_dsb - d_vsb >= 10.0, || {
        format!("40 km dip DSB {d_dsb:.1} dB, VSB {d_vsb:.1} dB")
    })?;
    Ok(format!(
        "DSB b2b {dsb:.2}, VSB b2b {vsb0:.2}, 10 km {vsb10:.2}, 20 km {vsb20:.2} dB; 40 km dip {d_dsb:.1} vs {d_vsb:.1} dB"
    ))
}

fn c7_osnr_calibration() -> Result<String, String> {
    let cfg = DmtConfig::default();
    let table = LoadingTable::uniform(&cfg, 4);
    let bits = RandomStream::new(7, 0).bits(table.total_bits() * 250);
    let tx = build_frames(&bits, &table, &cfg).map_err(|e| e.to_string())?;
    let field = launch_and_propagate(&tx, &LinkConfig::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (i, set) in (20..=50).step_by(5).enumerate() {
        let set = set as f64;
        let noisy = load_ase(&field, set, &mut RandomStream::new(7, 1 + i as u64))
            .map_err(|e| e.to_string())?;
        let err = (measure_osnr(&field, &noisy) - set).abs();
        worst = worst.max(err);
        ensure(err <= 0.1, || {
            format!("set {set} dB measured off by {err:.3} dB")
        })?;
    }
    Ok(format!(
        "20..50 dB over {} samples, worst error {worst:.4} dB",
        field.len()
    ))
}

fn c8_rate_fallback() -> Result<String, String> {
    let mut s = dsb_without_dcf(40.0);
    s.rate_policy = RatePolicy::AutoFallback;
    s.min_errors = 1000;
    let osnr = 40.0;
    let auto = run_point(&s, 0, osnr).map_err(|e| e.to_string())?;
    let full = auto.attempts.first().ok_or("no attempts")?;
    ensure(
        full.rate == Rate::Full && full.margin_db.is_none_or(|m| m < 0.0),
        || format!("full rate closes with margin {:?}", full.margin_db),
    )?;
    ensure(auto.selected_rate == Rate::Half, || {
        format!("selected {:?}", auto.selected_rate)
    })?;
    let ber = auto.ber().ok_or("half rate not measured")?;
    ensure(ber < FEC_LIMIT_BER, || format!("half-rate BER {ber:.2e}"))?;

    s.rate_policy = RatePolicy::FixedFull;
    let forced = run_point(&s, 0, osnr).map_err(|e| e.to_string())?;
    let forced_ber = forced.ber().unwrap_or(0.5);
    ensure(forced_ber > FEC_LIMIT_BER, || {
        format!("full rate would have worked ({forced_ber:.2e})")
    })?;
    let margin = full
        .margin_db
        .map(|m| format!("{m:.2} dB"))
        .unwrap_or_else(|| "infeasible".into());
    Ok(format!(
        "40 km DSB at {osnr} dB: full margin {margin} (BER {forced_ber:.2e}), half selected with BER {ber:.2e}"
    ))
}

fn c9_determinism() -> Result<String, String> {
    let opts = RunOptions {
        payload_frames: Some(200),
        ..RunOptions::default()
    };
    let mut names = Vec::new();
    for name in ["vsb-20km", "dsb-dcf-60km"] {
        let s = opts
            .apply(&bundled(name).unwrap())
            .map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for jobs in [1, 4, 1] {
            let res = run_scenario(&s, jobs).map_err(|e| e.to_string())?;
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let files = emit_outputs(&[res], dir.path()).map_err(|e| e.to_string())?;
            let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
            outputs.push(bytes);
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || {
            format!("{name}: CSVs differ")
        })?;
        names.push(name);
    }
    Ok(format!(
        "{} byte-identical across reruns with 1 and 4 threads",
        names.join(", ")
    ))
}

fn c10_capacity() -> Result<String, String> {
    let n = grid_channels(4400.0, 100.0);
    let c = band_capacity_tbps(4400.0, 100.0, FULL_RATE);
    ensure(n == 44, || format!("{n} channels"))?;
    ensure((c - 4.928).abs() < 1e-12, || format!("{c} Tbit/s"))?;
    ensure(format!("{c:.1}") == "4.9", || "rounding".into())?;
    Ok(format!("{n} x 112 Gbit/s = {c:.3} Tbit/s"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("frame/rate identity", c1_frame_rate_identity),
        ("AWGN BER oracle", c2_awgn_oracle),
        ("loading optimality", c3_loading_optimality),
        ("CD fading notch", c4_fading_notch),
        ("DCF restoration", c5_dcf_restoration),
        ("VSB orderings", c6_vsb_orderings),
        ("OSNR loading calibration", c7_osnr_calibration),
        ("rate fallback", c8_rate_fallback),
        ("determinism", c9_determinism),
        ("C-band capacity", c10_capacity),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {id:>2} {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {id:>2} {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
