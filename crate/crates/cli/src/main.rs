use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use sidelink_core::allocation::sci_overhead_bits;
use sidelink_core::{load_config, run_simulation, run_simulation_traced, write_metrics_csv, SimConfig};

#[derive(Parser)]
#[command(name = "sidelink", version, about = "Sidelink Mode 2 repetition/cancellation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metric CSVs.
    Simulate {
        /// Scenario file (`key = value` lines). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value`, applied after the file. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write the receiver event trace of this vehicle to `trace.csv`.
        #[arg(long)]
        trace_vehicle: Option<u32>,
    },
    /// Print the extra SCI bits needed to point at every copy.
    Overhead {
        #[arg(long)]
        n_copies: u32,
        /// Largest TTI distance an SCI can address.
        #[arg(long, default_value_t = 32)]
        n_dtti: u32,
        #[arg(long, default_value_t = 10)]
        n_subch: u32,
    },
}

fn build_config(config: Option<PathBuf>, seed: Option<u64>, overrides: &[String]) -> Result<SimConfig, String> {
    let mut cfg = match config {
        Some(path) => load_config(&path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => SimConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.rng_seed = seed;
    }
    cfg.apply_overrides(overrides).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate { config, out, seed, overrides, trace_vehicle } => {
            let cfg = build_config(config, seed, &overrides)?;
            info!(
                "{} vehicles, {} / {} / {}, n_retx {}, seed {}",
                cfg.vehicle_count(),
                cfg.traffic_mode,
                cfg.allocation_mode,
                cfg.receiver_mode,
                cfg.n_retx,
                cfg.rng_seed
            );
            let (outputs, trace) = match trace_vehicle {
                Some(v) => {
                    let (o, t) = run_simulation_traced(&cfg, v).map_err(|e| e.to_string())?;
                    (o, Some(t))
                }
                None => (run_simulation(&cfg).map_err(|e| e.to_string())?, None),
            };
            write_metrics_csv(&outputs, &out).map_err(|e| e.to_string())?;
            if let Some(trace) = trace {
                let mut body = String::from("tti,event,tx,packet_id\n");
                for e in trace {
                    body.push_str(&format!("{},{},{},{}\n", e.tti, e.kind.as_str(), e.tx, e.packet_id));
                }
                let path = out.join("trace.csv");
                fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let s = outputs.stats;
            info!(
                "{} packets, {} transmissions, {} deliveries ({} via backward cancellation), range {} m",
                s.packets_generated, s.transmissions, s.deliveries, s.backward_recoveries, outputs.range_m
            );
            Ok(())
        }
        Command::Overhead { n_copies, n_dtti, n_subch } => {
            if n_copies == 0 {
                return Err("n_copies must be at least 1".into());
            }
            let frc = sci_overhead_bits(n_copies, n_dtti, n_subch, false);
            let bkc = sci_overhead_bits(n_copies, n_dtti, n_subch, true);
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "frc_bits,frc_bkc_bits\n{frc},{bkc}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
