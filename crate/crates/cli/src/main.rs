//! `jppc`: solve single instances, run distance sweeps, or self-check the solvers.
//!
//! Exit status: 0 on success (an outage is a result, not a failure), 1 for
//! configuration or usage errors, 2 for numerical failures, 3 when the
//! self-test finds a failing property.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use jppc_core::config::{ChannelFile, ConfigFile};
use jppc_core::experiments::{emit_results, fmt_sig, run_sweep, summary_path, OutputFormat};
use jppc_core::jppc::{solve_jppc, Scheme, SolveOptions, TrialOutcome};
use jppc_core::scenario::{sample_channels_seeded, NetworkScenario};
use jppc_core::selftest::{run_selftest, Tolerances};
use jppc_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICS: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "jppc", version, about = "Joint backhaul and access power control for wireless-backhauled small cells")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one channel realization of the scenario in a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// JSON channel realization; drawn from the config seed when absent.
        #[arg(long)]
        channels: Option<PathBuf>,
        #[arg(long, default_value = "dpc")]
        scheme: Scheme,
    },
    /// Run the Monte Carlo distance sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Overrides `seed` from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `sweep.trials` from the config file.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Check the solver properties on built-in random instances.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Replace every tolerance with this value.
        #[arg(long, hide = true, allow_negative_numbers = true)]
        tolerance_override: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match cli.command {
        Command::Solve { config, channels, scheme } => cmd_solve(&config, channels.as_deref(), scheme),
        Command::Sweep { config, out, format, seed, trials } => cmd_sweep(&config, &out, format.into(), seed, trials),
        Command::Selftest { seed, instances, tolerance_override } => return cmd_selftest(seed, instances, tolerance_override),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICS })
        }
    }
}

fn cmd_solve(config: &Path, channels: Option<&Path>, scheme: Scheme) -> Result<(), Error> {
    let file = ConfigFile::load(config)?;
    let scenario = file.to_scenario()?;
    let ch = match channels {
        Some(path) => {
            let ch = ChannelFile::load(path)?;
            ChannelFile::check_against(&ch, &scenario)?;
            ch
        }
        None => sample_channels_seeded(&scenario),
    };
    let out = solve_jppc(&scenario, &ch, SolveOptions { scheme, order: file.order })?;
    print_outcome(&scenario, &out);
    Ok(())
}

fn print_outcome(scenario: &NetworkScenario, out: &TrialOutcome) {
    let bh = &out.backhaul;
    println!("scheme: {}", out.scheme);
    if out.scheme == Scheme::Dpc {
        println!("encoding order: {:?}", bh.order.as_slice());
    }
    let dual_label = match out.scheme {
        Scheme::Dpc => "dual power",
        Scheme::Zfbf => "link power",
    };
    for (m, cell) in scenario.cells.iter().enumerate() {
        println!(
            "cell {m}: {dual_label} {} W, precoder power {} W, backhaul rate {} nats",
            fmt_sig(bh.dual_powers_w[m]),
            fmt_sig(bh.precoders[m].norm_squared()),
            fmt_sig(bh.achieved_rates_nats[m]),
        );
        for (n, ue) in cell.ues.iter().enumerate() {
            match (out.access.powers_w.get(m), out.access.sinr.get(m)) {
                (Some(p), Some(s)) => println!(
                    "  ue {n}: power {} W, sinr {}, rate {} nats (target {})",
                    fmt_sig(p[n]),
                    fmt_sig(s[n]),
                    fmt_sig(s[n].ln_1p()),
                    fmt_sig(ue.rate_req_nats),
                ),
                _ => println!("  ue {n}: no valid power (target {} nats)", fmt_sig(ue.rate_req_nats)),
            }
        }
    }
    println!("backhaul power: {} W", fmt_sig(bh.total_power_w));
    println!("access power: {} W", fmt_sig(out.access.total_power_w()));
    println!("total power: {} W", fmt_sig(out.total_power_w));
    if out.system_outage {
        let mut parts = Vec::new();
        if out.backhaul_outage() {
            parts.push("backhaul".to_string());
        }
        if out.access_outage() {
            parts.push(format!("access: {:?}", out.access.status));
        }
        println!("status: OUTAGE ({})", parts.join(", "));
    } else {
        println!("status: OK");
    }
}

fn cmd_sweep(config: &Path, out: &Path, format: OutputFormat, seed: Option<u64>, trials: Option<usize>) -> Result<(), Error> {
    let file = ConfigFile::load(config)?;
    let mut spec = file.to_sweep_spec()?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(trials) = trials {
        spec.trials = trials;
    }
    spec.validate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Error::InvalidArgument(format!("output directory {} does not exist", dir.display())));
        }
    }
    let echo = serde_json::to_string_pretty(&spec).expect("sweep spec serializes");
    println!("effective configuration:\n{echo}");

    let stats = run_sweep(&spec)?;
    emit_results(&stats, &spec, out, format)?;
    for p in &stats.points {
        println!(
            "{:>9.1} m  {:<4}  mean power {:>12.5e} W  outage {:.4}",
            p.distance_m,
            p.scheme.label(),
            p.mean_power_w,
            p.outage_prob
        );
    }
    match format {
        OutputFormat::Csv => println!("wrote {} and {}", out.display(), summary_path(out).display()),
        OutputFormat::Json => println!("wrote {}", out.display()),
    }
    Ok(())
}

fn cmd_selftest(seed: u64, instances: usize, tolerance_override: Option<f64>) -> ExitCode {
    let tol = tolerance_override.map_or_else(Tolerances::default, Tolerances::uniform);
    let report = run_selftest(&tol, seed, instances.max(1));
    for check in &report.checks {
        println!("{check}");
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} properties, {failed} failed", report.checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SELFTEST)
    }
}
