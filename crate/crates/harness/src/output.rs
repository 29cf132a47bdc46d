//! CSV datasets: per-subcarrier SNR and loading, BER against OSNR, and a
//! per-scenario summary.

use std::fs;
use std::path::{Path, PathBuf};

use crate::run::ScenarioResult;
use crate::HarnessError;

pub const SNR_PROFILE_FILE: &str = "snr_profile.csv";
pub const BER_FILE: &str = "ber_vs_osnr.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

type Table<'a> = (&'a str, &'a [&'a str], Vec<Vec<String>>);

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let out_err = |e: csv::Error| HarnessError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(out_err)?;
    w.write_record(header).map_err(out_err)?;
    for row in rows {
        w.write_record(row).map_err(out_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn fmt_db(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One row per subcarrier `1..N` for the highest-OSNR record that produced
/// an SNR estimate. Pilot rows carry `pilot` in the bits column.
pub fn snr_profile_rows(res: &ScenarioResult) -> Vec<Vec<String>> {
    let cfg = &res.scenario.modem;
    let Some(rec) = res.records.iter().rev().find(|r| r.snr.is_some()) else {
        return Vec::new();
    };
    let snr = rec.snr.as_ref().expect("filtered on presence");
    (1..cfg.n_subcarriers)
        .map(|k| {
            let freq = k as f64 * cfg.subcarrier_spacing() / 1e9;
            let (bits, power) = if cfg.is_pilot(k) {
                ("pilot".to_string(), cfg.pilot_power)
            } else {
                match &rec.table {
                    Some(t) => (t.bits[k].to_string(), t.power[k]),
                    None => ("0".to_string(), 0.0),
                }
            };
            vec![
                res.scenario.name.clone(),
                k.to_string(),
                format!("{freq:.6}"),
                fmt_db(10.0 * snr.snr[k].log10()),
                bits,
                format!("{power:.6}"),
            ]
        })
        .collect()
}

pub fn ber_rows(res: &ScenarioResult) -> Vec<Vec<String>> {
    res.records
        .iter()
        .map(|r| {
            vec![
                res.scenario.name.clone(),
                format!("{:.3}", r.osnr_db),
                r.ber().map(|b| format!("{b:.6e}")).unwrap_or_default(),
                r.stats.total_bits.to_string(),
                format!("{}", r.transmitted_rate.line_rate() / 1e9),
            ]
        })
        .collect()
}

pub fn summary_row(res: &ScenarioResult) -> Vec<String> {
    let required = res
        .required_osnr_db
        .map(|x| format!("{x:.3}"))
        .unwrap_or_else(|| "not reached".into());
    let rate = res
        .reference_record()
        .map(|r| r.selected_rate.as_str())
        .unwrap_or("none");
    vec![res.scenario.name.clone(), required, rate.to_string()]
}

/// Writes the three CSV files into `dir`, creating it if needed. Output is
/// a pure function of the results, so fixed seeds give identical bytes.
pub fn emit_outputs(results: &[ScenarioResult], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let files: [Table; 3] = [
        (
            SNR_PROFILE_FILE,
            &[
                "scenario",
                "subcarrier_index",
                "frequency_ghz",
                "snr_db",
                "bits",
                "power",
            ],
            results.iter().flat_map(snr_profile_rows).collect(),
        ),
        (
            BER_FILE,
            &["scenario", "osnr_db", "ber", "total_bits", "rate_gbps"],
            results.iter().flat_map(ber_rows).collect(),
        ),
        (
            SUMMARY_FILE,
            &["scenario", "required_osnr_db", "selected_rate"],
            results.iter().map(summary_row).collect(),
        ),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, header, rows) in files {
        let path = dir.join(name);
        write_csv(&path, header, &rows)?;
        written.push(path);
    }
    Ok(written)
}
