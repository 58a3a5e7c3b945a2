//! Binary entry point: the argument surface and its mapping onto
//! [`qfclink_cli::commands`]. Exit codes: 0 on success (including `--help`
//! and `--version`), 1 for usage or parse errors, 2 when the reference-table
//! reproduction diffs, 3 for I/O failures.

use clap::{Args, Parser, Subcommand};
use qfclink_cli::commands::{self, CliError, NoiseRateConvention};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qfclink",
    version,
    about = "Link budgets, coincidence statistics, time-tag simulation, and \
             curve fits for a frequency-converted single-photon channel"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// The flags shared by every scenario-driven subcommand.
#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (.scn) describing the link
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Directory the output files are written into
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form link budget for one operating point
    Budget {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// SNR versus pump power over the scenario's sweep grid
    ScanPump {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// SNR and fidelity versus fiber length over the sweep grid
    ScanLength {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Expected and sampled coincidence tables with a fidelity estimate
    Coincidence {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Override the scenario's random seed
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Simulated detector stream, folded histogram, and gated SNR
    Timetags {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Override the scenario's random seed
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Override the scenario's simulated duration
        #[arg(long, value_name = "SECONDS")]
        duration_s: Option<f64>,
        /// Whether the scenario's background rates are continuous-wave or
        /// in-gate quantities
        #[arg(long, value_name = "CONVENTION", default_value = "in-gate",
              value_parser = parse_convention)]
        noise_rate_convention: NoiseRateConvention,
    },
    /// Fit the conversion-efficiency saturation curve to measured points
    FitEfficiency {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Measured-curve CSV with header pump_w,value[,weight]
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
    },
    /// Fit the through-origin noise-rate line to measured points
    FitNoise {
        /// Measured-curve CSV with header pump_w,value[,weight]
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Directory the output files are written into
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Recompute the reference SNR/fidelity table and diff it against the
    /// embedded expected values
    #[command(name = "repro-table1")]
    ReproTable1 {
        /// Directory the output files are written into
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Replace one embedded expected value (for self-test of the diff
        /// path), as <set>_<length>km_<snr|fidelity>=VALUE
        #[arg(long, hide = true, value_name = "KEY=VALUE")]
        override_expected: Vec<String>,
    },
}

fn parse_convention(text: &str) -> Result<NoiseRateConvention, String> {
    text.parse()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Budget { common } => commands::budget(&common.scenario, &common.out),
        Command::ScanPump { common } => commands::scan_pump(&common.scenario, &common.out),
        Command::ScanLength { common } => commands::scan_length(&common.scenario, &common.out),
        Command::Coincidence { common, seed } => {
            commands::coincidence(&common.scenario, &common.out, seed)
        }
        Command::Timetags {
            common,
            seed,
            duration_s,
            noise_rate_convention,
        } => commands::timetags(
            &common.scenario,
            &common.out,
            seed,
            duration_s,
            noise_rate_convention,
        ),
        Command::FitEfficiency { common, data } => {
            commands::fit_efficiency(&common.scenario, &data, &common.out)
        }
        Command::FitNoise { data, out } => commands::fit_noise(&data, &out),
        Command::ReproTable1 {
            out,
            override_expected,
        } => {
            let overrides = override_expected
                .iter()
                .map(|text| commands::parse_reference_override(text))
                .collect::<Result<Vec<_>, _>>()?;
            commands::repro_table1(&out, &overrides)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version are not errors; true usage mistakes are
            // exit 1 (clap's own default of 2 is claimed by the diff code).
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
