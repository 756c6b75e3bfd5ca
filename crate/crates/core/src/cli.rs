//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! numerical failures (including a failed verification case).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::config::RawConfig;
use crate::io::presets;
use crate::sim::{network_spec, run_simulation, run_sweep, RunOptions};
use crate::vasculature::{save_network, NetworkSpec};
use crate::verify;

const KELVIN: f64 = 273.15;

#[derive(Debug, Parser)]
#[command(name = "nanotherm", version, about = "Nanoparticle hyperthermia simulator")]
pub struct Cli {
    /// Directory for CSV, snapshot and report files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Worker threads for sweeps, assembly and verification (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario (a config file or a bundled preset name).
    Run { config: String },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: String,
        /// Parameter path as `section.key`, e.g. `protocol.sar`.
        #[arg(long)]
        param: String,
        /// Comma-separated values including units, e.g. `1.5 MW/kg,2 MW/kg`.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<String>,
    },
    /// Generate a synthetic vessel network from a `[network]` section.
    GenNetwork {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a verification case (`all`, or one of the named cases).
    Verify {
        #[arg(default_value = "all")]
        case: String,
    },
    /// List the bundled presets.
    Presets,
}

/// Parse `args`, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.quiet);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

fn execute(cli: &Cli) -> Result<i32> {
    let quiet = cli.quiet;
    match &cli.command {
        Command::Run { config } => {
            let cfg = presets::resolve(config)?;
            log::info!("resolved configuration: {cfg:#?}");
            let opts = RunOptions {
                out_dir: Some(cli.out_dir.clone()),
                keep_history: false,
            };
            let r = run_simulation(&cfg, &opts)?;
            let (peak, t_peak) = r.peak_mean();
            say!(quiet, "scenario {}: {} steps", cfg.name, r.records.len());
            say!(
                quiet,
                "peak mean temperature {:.3} degC at {:.1} min; maximum {:.3} degC",
                peak - KELVIN,
                t_peak / 60.0,
                r.max_temperature() - KELVIN
            );
            if let Some(csv) = &r.csv {
                say!(quiet, "time series: {}", csv.display());
            }
            say!(quiet, "snapshots: {}", r.snapshots.len());
            Ok(0)
        }
        Command::Sweep { config, param, values } => {
            let cfg = presets::resolve(config)?;
            let rows = run_sweep(&cfg, param, values, Some(&cli.out_dir))?;
            say!(quiet, "{param:>24}  peak_T_mean  t_peak_min  T_max");
            for r in &rows {
                say!(
                    quiet,
                    "{:>24}  {:>11.3}  {:>10.1}  {:>6.3}",
                    r.value,
                    r.peak_mean - KELVIN,
                    r.peak_time / 60.0,
                    r.max_temperature - KELVIN
                );
            }
            say!(quiet, "summary: {}", cli.out_dir.join("sweep.csv").display());
            Ok(0)
        }
        Command::GenNetwork { spec, output } => {
            let network = generate_network(spec)?;
            save_network(&network, output)?;
            say!(
                quiet,
                "{} nodes, {} segments, total length {:.3} mm, mean open-vessel radius {:.3} um -> {}",
                network.num_nodes(),
                network.num_segments(),
                network.total_length() * 1e3,
                network.mean_radius() * 1e6,
                output.display()
            );
            Ok(0)
        }
        Command::Verify { case } => {
            let metrics = verify::run_case(case)?;
            for m in &metrics {
                say!(
                    quiet,
                    "{:<5} {:<14} {:<34} {:>12.5e}  {}",
                    if m.pass { "PASS" } else { "FAIL" },
                    m.case,
                    m.metric,
                    m.value,
                    m.threshold
                );
            }
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
            verify::write_report(&metrics, &cli.out_dir.join("verify_report.csv"))?;
            let failed = metrics.iter().filter(|m| !m.pass).count();
            if failed > 0 {
                eprintln!("{failed} verification metric(s) failed");
                return Ok(2);
            }
            Ok(0)
        }
        Command::Presets => {
            for name in presets::names() {
                say!(quiet, "{name}");
            }
            Ok(0)
        }
    }
}

/// Build a network from the `[network]` section of a spec file. The extent
/// defaults to the `[mesh]` size when present.
pub fn generate_network(spec: &Path) -> Result<crate::vasculature::VesselNetwork> {
    let raw = RawConfig::load(spec)?;
    if !raw.has_section("network") {
        return Err(Error::config(format!("{}: missing [network] section", spec.display())));
    }
    let mesh = raw.section("mesh");
    let extent = match (
        mesh.quantity("lx", crate::units::Dim::LENGTH)?,
        mesh.quantity("ly", crate::units::Dim::LENGTH)?,
    ) {
        (Some(lx), Some(ly)) => [lx, ly],
        _ => NetworkSpec::default().extent,
    };
    let section = raw.section("network");
    if section.string("file").is_some() {
        return Err(Error::config(format!("{}: [network] names a file, nothing to generate", spec.display())));
    }
    // only meaningful for a simulation run
    let _ = section.string("cell_length");
    let spec_values = network_spec(&section, extent)?;
    raw.reject_unused_in("network")?;
    spec_values.generate()
}
