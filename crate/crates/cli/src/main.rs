use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Zone-level occupancy from sniffed WiFi probe requests.
#[derive(Debug, Parser)]
#[command(name = "occusense", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Scenario file (TOML). Built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; replaces any explicit seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Minimum number of nodes for a window to be used.
    #[arg(long, global = true)]
    pub n_min: Option<usize>,
    /// Occupancy series resolution, seconds.
    #[arg(long, global = true, default_value_t = 3600.0)]
    pub resolution_s: f64,
    /// Presence grace period, seconds.
    #[arg(long, global = true)]
    pub grace_s: Option<f64>,
    /// Sample-and-hold length, windows.
    #[arg(long, global = true)]
    pub hold_l: Option<usize>,
    /// Sampling window length, seconds.
    #[arg(long, global = true)]
    pub window_t: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate probe logs and ground truth for every run of the scenario.
    Simulate {
        /// Number of runs, overriding the scenario.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Track every device in a probe log.
    Track {
        /// Probe log, CSV with header or JSON lines.
        #[arg(long)]
        log: PathBuf,
        /// Reference-node CSV; the scenario's nodes otherwise.
        #[arg(long)]
        nodes: Option<PathBuf>,
        /// Salt for hashing MAC addresses.
        #[arg(long, default_value = "")]
        salt: String,
    },
    /// Occupancy series and dwell histogram from a track dump.
    Count {
        #[arg(long)]
        tracks: PathBuf,
        /// Zone map TOML; the scenario's zones otherwise.
        #[arg(long)]
        zones: Option<PathBuf>,
        /// Series start, seconds. Defaults to 0.
        #[arg(long)]
        start_s: Option<f64>,
        /// Series end (exclusive), seconds. Defaults to the last record time.
        #[arg(long)]
        end_s: Option<f64>,
    },
    /// Score a track dump against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<PathBuf>,
    },
    /// Simulate, track and score every run in parallel.
    Mc {
        #[arg(long)]
        runs: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
