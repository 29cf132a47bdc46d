use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmtlink_core::loading::FULL_RATE;
use dmtlink_core::metrics::{band_capacity_tbps, grid_channels};
use dmtlink_harness::{
    bundled, bundled_names, emit_outputs, resolve, run_scenario, HarnessError, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "dmtlink",
    version,
    about = "DMT over IM/DD optical link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios (file paths or bundled names) and write CSV datasets.
    Run {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the OSNR sweep, comma separated dB values.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Worker threads (0 uses every core).
        #[arg(short, long, default_value_t = 0)]
        jobs: usize,
        /// Cap payload at 200 frames per point.
        #[arg(long)]
        quick: bool,
    },
    /// List bundled scenarios.
    List,
    /// Print a scenario as TOML.
    Show { scenario: String },
    /// Aggregate capacity of a band filled with full-rate channels.
    Capacity {
        #[arg(long, default_value_t = 4400.0)]
        band_ghz: f64,
        #[arg(long, default_value_t = 100.0)]
        spacing_ghz: f64,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            scenarios,
            out,
            seed,
            sweep,
            jobs,
            quick,
        } => {
            let opts = RunOptions {
                seed,
                sweep,
                payload_frames: quick.then_some(200),
            };
            let resolved = scenarios
                .iter()
                .map(|a| resolve(a).and_then(|s| opts.apply(&s)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut results = Vec::with_capacity(resolved.len());
            for s in &resolved {
                let res = run_scenario(s, jobs)?;
                for r in &res.records {
                    let ber = r
                        .ber()
                        .map(|b| format!("{b:.3e}"))
                        .unwrap_or_else(|| format!("{:?}", r.outcome));
                    let flag = if r.low_confidence(s.min_errors) {
                        " (few errors)"
                    } else {
                        ""
                    };
                    eprintln!(
                        "{:>14}  osnr {:5.1} dB  rate {:<4}  ber {ber}{flag}",
                        s.name,
                        r.osnr_db,
                        r.selected_rate.as_str()
                    );
                }
                let required = res
                    .required_osnr_db
                    .map(|x| format!("{x:.2} dB"))
                    .unwrap_or_else(|| "not reached".into());
                println!("{}: required OSNR {required}", s.name);
                results.push(res);
            }
            for path in emit_outputs(&results, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::List => {
            for name in bundled_names() {
                let s = bundled(name).expect("listed names exist");
                println!("{name:<14} {}", s.description);
            }
        }
        Command::Show { scenario } => print!("{}", resolve(&scenario)?.to_toml()),
        Command::Capacity {
            band_ghz,
            spacing_ghz,
        } => {
            let n = grid_channels(band_ghz, spacing_ghz);
            let c = band_capacity_tbps(band_ghz, spacing_ghz, FULL_RATE);
            println!(
                "{n} channels x {} Gbit/s = {c:.3} Tbit/s ({c:.1} Tbit/s)",
                FULL_RATE / 1e9
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
