//! Subcommand implementations behind the `qfclink` binary.
//!
//! Every command reads a scenario and/or a data file, runs the library, and
//! writes its results as CSV (plus the plain-text stream and fit reports)
//! into the output directory. Files are written atomically — to a temp name
//! in the same directory, then renamed — so a crashed run never leaves a
//! half-written table behind. Outputs carry no timestamps or absolute
//! paths: identical inputs and seeds give byte-identical files.

use qfclink::coincidence::{
    estimate_fidelity, expected_table, fidelity_closed_form, sample_table, CoincidenceError,
    CoincidenceTable,
};
use qfclink::fitting::{
    fit_conversion_curve, fit_noise_linear, predict_with_band, FitError, FitModel,
};
use qfclink::model::{
    cascade_insertion_loss_db, cascade_isolation_db, link_budget, ModelError, TargetBand,
};
use qfclink::montecarlo::{
    fold_histogram, format_timetags, gated_snr, generate_stream, MonteCarloError,
};
use qfclink::{Basis, BellSign, ChannelRates, Converter, CurvePoint, FitResult, NoiseModel};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

use crate::scenario::{parse_scenario, Scenario, Sweep};

/// Everything that can make a command fail, sorted by exit code:
/// usage and parse problems exit 1, a reproduction diff exits 2, and
/// filesystem trouble exits 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Diff(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Diff(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

macro_rules! usage_from {
    ($($source:ty),*) => {$(
        impl From<$source> for CliError {
            fn from(err: $source) -> Self {
                CliError::Usage(err.to_string())
            }
        }
    )*};
}
usage_from!(
    crate::scenario::ScenarioError,
    ModelError,
    CoincidenceError,
    MonteCarloError,
    FitError
);

/// Which time base the scenario's background rates are quoted in: `cw` rates
/// run over all time; `in-gate` rates count only within the detection gates
/// and are divided by the gate duty cycle before driving the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRateConvention {
    Cw,
    InGate,
}

impl FromStr for NoiseRateConvention {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match text {
            "cw" => Ok(NoiseRateConvention::Cw),
            "in-gate" => Ok(NoiseRateConvention::InGate),
            other => Err(format!("`{other}` is not one of `cw`, `in-gate`")),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    parse_scenario(&read_file(path)?)
        .map_err(|err| CliError::Usage(format!("{}: {err}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

/// Write-temp-then-rename in the target directory.
fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let temp = dir.join(format!("{name}.tmp"));
    let target = dir.join(name);
    std::fs::write(&temp, content).map_err(io_error(&temp))?;
    std::fs::rename(&temp, &target).map_err(io_error(&target))?;
    println!("wrote {}", target.display());
    Ok(())
}

/// Closed-form link budget to `budget.csv`.
pub fn budget(scenario_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    ensure_out_dir(out_dir)?;
    let budget = link_budget(&scenario.link_inputs())?;
    let mut csv = String::from(
        "eta_c,eta_l,detected_signal_rate_hz,detected_noise_rate_hz,dark_rate_hz,snr,fidelity\n",
    );
    let _ = writeln!(
        csv,
        "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        budget.eta_c,
        budget.eta_l,
        budget.detected_signal_rate_hz,
        budget.detected_noise_rate_hz,
        budget.dark_rate_hz,
        budget.snr,
        budget.fidelity
    );
    if !scenario.filters.is_empty() {
        println!(
            "filter cascade: insertion loss {:.1} dB, pump isolation {:.1} dB, \
             background isolation {:.1} dB",
            cascade_insertion_loss_db(&scenario.filters),
            cascade_isolation_db(&scenario.filters, TargetBand::Pump),
            cascade_isolation_db(&scenario.filters, TargetBand::SpdcNoise),
        );
    }
    println!("snr {:.6}, fidelity {:.6}", budget.snr, budget.fidelity);
    write_atomic(out_dir, "budget.csv", &csv)
}

/// SNR versus pump power over the scenario's sweep grid, to `scan_pump.csv`.
pub fn scan_pump(scenario_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let sweep = match scenario.sweep {
        Some(sweep @ Sweep::PumpPower { .. }) => sweep,
        _ => {
            return Err(CliError::Usage(
                "scan-pump requires a [sweep] section with axis = pump_power_w".to_string(),
            ))
        }
    };
    if !matches!(scenario.converter, Converter::Curve(_)) {
        return Err(CliError::Usage(
            "scan-pump requires the converter curve triple \
             (waveguide_length_m, alpha_qfc_per_w_m2, eta_max); \
             a fixed eta_c cannot respond to pump power"
                .to_string(),
        ));
    }
    if !matches!(scenario.noise, NoiseModel::LinearInPump { .. }) {
        return Err(CliError::Usage(
            "scan-pump requires [noise] slope_hz_per_w; \
             a fixed rate_hz cannot respond to pump power"
                .to_string(),
        ));
    }
    ensure_out_dir(out_dir)?;
    let scan = qfclink::model::scan_snr_vs_pump(&scenario.link_inputs(), &sweep.grid())?;
    let mut csv = String::from("pump_power_w,eta_c,noise_rate_hz,snr\n");
    for point in &scan.points {
        let _ = writeln!(
            csv,
            "{:.6},{:.6},{:.6},{:.6}",
            point.pump_power_w, point.eta_c, point.noise_rate_hz, point.snr
        );
    }
    println!(
        "{} grid points; best snr at {:.6} W pump",
        scan.points.len(),
        scan.best_pump_power_w
    );
    write_atomic(out_dir, "scan_pump.csv", &csv)
}

/// SNR and fidelity versus fiber length, to `scan_length.csv`.
pub fn scan_length(scenario_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let sweep = match scenario.sweep {
        Some(sweep @ Sweep::FiberLength { .. }) => sweep,
        _ => {
            return Err(CliError::Usage(
                "scan-length requires a [sweep] section with axis = fiber_length_km".to_string(),
            ))
        }
    };
    ensure_out_dir(out_dir)?;
    let scan = qfclink::model::scan_fidelity_vs_length(&scenario.link_inputs(), &sweep.grid())?;
    let mut csv = String::from("fiber_length_km,eta_l,snr,fidelity\n");
    for point in &scan.points {
        let _ = writeln!(
            csv,
            "{:.6},{:.6},{:.6},{:.6}",
            point.length_km, point.eta_l, point.snr, point.fidelity
        );
    }
    let first = scan.points.first().expect("grid is never empty");
    let last = scan.points.last().expect("grid is never empty");
    println!(
        "fidelity {:.6} at {:.1} km down to {:.6} at {:.1} km",
        first.fidelity, first.length_km, last.fidelity, last.length_km
    );
    write_atomic(out_dir, "scan_length.csv", &csv)
}

fn table_csv(tables: &[CoincidenceTable], decimals: usize) -> String {
    let mut csv = String::from("basis,n_pp,n_pm,n_mp,n_mm\n");
    for table in tables {
        let _ = writeln!(
            csv,
            "{},{:.dec$},{:.dec$},{:.dec$},{:.dec$}",
            table.basis.label(),
            table.n_pp,
            table.n_pm,
            table.n_mp,
            table.n_mm,
            dec = decimals
        );
    }
    csv
}

/// Expected and sampled per-basis coincidence tables plus the fidelity
/// estimate, to `coincidence_{expected,sampled,fidelity}.csv`.
pub fn coincidence(
    scenario_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    ensure_out_dir(out_dir)?;
    let seed = seed_override.unwrap_or(scenario.seed);
    let budget = link_budget(&scenario.link_inputs())?;
    let window_s = scenario.coincidence_window_s;
    let rates = ChannelRates::new(
        budget.detected_signal_rate_hz * window_s,
        budget.detected_noise_rate_hz * window_s,
        budget.dark_rate_hz * window_s,
    )?;

    let expected: Vec<CoincidenceTable> = Basis::ALL
        .iter()
        .map(|&basis| expected_table(basis, &rates))
        .collect();
    let sampled: Vec<CoincidenceTable> = expected
        .iter()
        .enumerate()
        .map(|(i, table)| sample_table(table, seed.wrapping_add(i as u64)))
        .collect::<Result<_, _>>()?;

    let closed_form = fidelity_closed_form(&rates)?;
    let estimate = estimate_fidelity(&sampled[0], &sampled[1], &sampled[2], BellSign::Plus)?;

    let mut fidelity_csv = String::from("fidelity_closed_form,fidelity_estimate,std_error\n");
    let _ = writeln!(
        fidelity_csv,
        "{closed_form:.6},{:.6},{:.6}",
        estimate.fidelity, estimate.std_error
    );

    println!(
        "window {window_s} s, seed {seed}: fidelity {:.6} +- {:.6} (closed form {closed_form:.6})",
        estimate.fidelity, estimate.std_error
    );
    write_atomic(
        out_dir,
        "coincidence_expected.csv",
        &table_csv(&expected, 6),
    )?;
    write_atomic(out_dir, "coincidence_sampled.csv", &table_csv(&sampled, 0))?;
    write_atomic(out_dir, "coincidence_fidelity.csv", &fidelity_csv)
}

/// Simulated detector stream (`stream.tt`), folded histogram
/// (`histogram.csv`), and the gated SNR (`gated_snr.csv`).
pub fn timetags(
    scenario_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    duration_override_s: Option<f64>,
    convention: NoiseRateConvention,
) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    ensure_out_dir(out_dir)?;
    let seed = seed_override.unwrap_or(scenario.seed);
    let duration_s = duration_override_s.unwrap_or(scenario.montecarlo_duration_s);
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(CliError::Usage(format!(
            "duration must be positive and finite, got {duration_s}"
        )));
    }
    let budget = link_budget(&scenario.link_inputs())?;
    let gate = scenario.gate_config()?;
    let (noise_cw_hz, dark_cw_hz) = match convention {
        NoiseRateConvention::Cw => (budget.detected_noise_rate_hz, budget.dark_rate_hz),
        NoiseRateConvention::InGate => {
            let duty = gate.gate_duty_cycle();
            (
                budget.detected_noise_rate_hz / duty,
                budget.dark_rate_hz / duty,
            )
        }
    };

    let stream = generate_stream(
        &scenario.source,
        budget.detected_signal_rate_hz,
        noise_cw_hz,
        dark_cw_hz,
        duration_s,
        seed,
    )?;
    let histogram = fold_histogram(&stream, &gate)?;
    let result = gated_snr(&stream, &gate)?;

    let mut histogram_csv = String::from("bin_start_ns,count\n");
    for (bin, count) in histogram.counts.iter().enumerate() {
        let _ = writeln!(histogram_csv, "{},{count}", bin as u64 * histogram.bin_ns);
    }
    let mut snr_csv = String::from("snr,k_signal,k_noise,noise_gate_empty\n");
    let _ = writeln!(
        snr_csv,
        "{:.6},{},{},{}",
        result.snr, result.k_signal, result.k_noise, result.noise_gate_empty
    );

    println!(
        "{} events over {duration_s} s (seed {seed}); gated snr {:.6} \
         (k_signal {}, k_noise {})",
        stream.len(),
        result.snr,
        result.k_signal,
        result.k_noise
    );
    write_atomic(out_dir, "stream.tt", &format_timetags(&stream))?;
    write_atomic(out_dir, "histogram.csv", &histogram_csv)?;
    write_atomic(out_dir, "gated_snr.csv", &snr_csv)
}

/// Reads a measured-curve CSV: header `pump_w,value` or
/// `pump_w,value,weight`, one point per line.
fn read_curve_points(path: &Path) -> Result<Vec<CurvePoint>, CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, line)| line.trim())
        .unwrap_or_default();
    let has_weight = match header {
        "pump_w,value" => false,
        "pump_w,value,weight" => true,
        other => {
            return Err(CliError::Usage(format!(
                "{}: header must be `pump_w,value` or `pump_w,value,weight`, got `{other}`",
                path.display()
            )))
        }
    };
    let mut points = Vec::new();
    for (index, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if has_weight { 3 } else { 2 };
        if fields.len() != expected {
            return Err(CliError::Usage(format!(
                "{}: line {}: expected {expected} comma-separated fields, got {}",
                path.display(),
                index + 1,
                fields.len()
            )));
        }
        let parse = |field: &str, name: &str| -> Result<f64, CliError> {
            field.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "{}: line {}: {name} `{field}` is not a number",
                    path.display(),
                    index + 1
                ))
            })
        };
        let x = parse(fields[0], "pump_w")?;
        let y = parse(fields[1], "value")?;
        let weight = if has_weight {
            Some(parse(fields[2], "weight")?)
        } else {
            None
        };
        points.push(CurvePoint { x, y, weight });
    }
    Ok(points)
}

/// Key = value report for a fit, full precision.
fn fit_report(fit: &FitResult) -> String {
    let mut out = String::new();
    match fit.model {
        FitModel::ConversionCurve { waveguide_length_m } => {
            out.push_str("model = conversion_curve\n");
            let _ = writeln!(out, "waveguide_length_m = {waveguide_length_m}");
        }
        FitModel::NoiseThroughOrigin => out.push_str("model = noise_through_origin\n"),
    }
    for parameter in &fit.parameters {
        let _ = writeln!(out, "{} = {}", parameter.name, parameter.value);
        let _ = writeln!(
            out,
            "{}_std_error = {}",
            parameter.name, parameter.std_error
        );
    }
    let _ = writeln!(out, "residual_sum_squares = {}", fit.residual_sum_squares);
    let _ = writeln!(out, "iterations = {}", fit.iterations);
    let _ = writeln!(out, "converged = {}", fit.converged);
    let _ = writeln!(out, "flat_direction = {}", fit.flat_direction);
    out
}

fn band_csv(fit: &FitResult, xs: &[f64]) -> Result<String, CliError> {
    let band = predict_with_band(fit, xs)?;
    let mut csv = String::from("pump_w,y_hat,y_err\n");
    for point in band {
        let _ = writeln!(csv, "{:.6},{:.6},{:.6}", point.x, point.y_hat, point.y_err);
    }
    Ok(csv)
}

fn band_grid(points: &[CurvePoint]) -> Vec<f64> {
    let max_x = points.iter().map(|p| p.x).fold(0.0f64, f64::max);
    (0..=100).map(|i| max_x * i as f64 / 100.0).collect()
}

fn report_fit(fit: &FitResult) {
    for parameter in &fit.parameters {
        println!(
            "{} = {} +- {}",
            parameter.name, parameter.value, parameter.std_error
        );
    }
    println!(
        "converged {} in {} iterations, rss {}",
        fit.converged, fit.iterations, fit.residual_sum_squares
    );
    if fit.flat_direction {
        println!("warning: the data leave a parameter direction essentially unconstrained");
    }
}

/// Fits the conversion-efficiency curve to a measured CSV; the waveguide
/// length comes from the scenario's converter triple.
pub fn fit_efficiency(
    scenario_path: &Path,
    data_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let length_m = match scenario.converter {
        Converter::Curve(params) => params.waveguide_length_m(),
        Converter::Fixed(_) => {
            return Err(CliError::Usage(
                "fit-efficiency needs the converter curve triple in the scenario \
                 to supply waveguide_length_m"
                    .to_string(),
            ))
        }
    };
    let points = read_curve_points(data_path)?;
    ensure_out_dir(out_dir)?;
    let fit = fit_conversion_curve(&points, length_m, None)?;
    report_fit(&fit);
    write_atomic(out_dir, "fit_efficiency.txt", &fit_report(&fit))?;
    if fit.converged {
        write_atomic(
            out_dir,
            "fit_efficiency_band.csv",
            &band_csv(&fit, &band_grid(&points))?,
        )?;
    } else {
        println!("fit did not converge; no prediction band written");
    }
    Ok(())
}

/// Fits the through-origin noise line to a measured CSV.
pub fn fit_noise(data_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let points = read_curve_points(data_path)?;
    ensure_out_dir(out_dir)?;
    let fit = fit_noise_linear(&points)?;
    report_fit(&fit);
    write_atomic(out_dir, "fit_noise.txt", &fit_report(&fit))?;
    write_atomic(
        out_dir,
        "fit_noise_band.csv",
        &band_csv(&fit, &band_grid(&points))?,
    )
}

/// One embedded reference row: a parameter set evaluated at one fiber length,
/// against the published SNR (2 decimals) and fidelity percentage (1 decimal).
struct ReferenceRow {
    set: &'static str,
    length_km: f64,
    snr: f64,
    fidelity_pct: f64,
}

/// The two parameter sets behind the reference table. Fiber attenuation is
/// 0.16 dB/km for both; source timing is 300 ns pulses at 1 MHz.
struct ParameterSet {
    label: &'static str,
    signal_rate_hz: f64,
    eta_c: f64,
    noise_rate_hz: f64,
    detector_efficiency: f64,
    dark_rate_hz: f64,
}

const PARAMETER_SETS: [ParameterSet; 2] = [
    ParameterSet {
        label: "ours",
        signal_rate_hz: 32_700.0,
        eta_c: 0.09,
        noise_rate_hz: 154.0,
        detector_efficiency: 0.9,
        dark_rate_hz: 54.0,
    },
    ParameterSet {
        label: "ref",
        signal_rate_hz: 35_500.0,
        eta_c: 0.17,
        noise_rate_hz: 415.0,
        detector_efficiency: 0.41,
        dark_rate_hz: 190.0,
    },
];

const REFERENCE_ROWS: [ReferenceRow; 6] = [
    ReferenceRow {
        set: "ours",
        length_km: 0.0,
        snr: 13.74,
        fidelity_pct: 90.5,
    },
    ReferenceRow {
        set: "ours",
        length_km: 60.0,
        snr: 4.19,
        fidelity_pct: 75.8,
    },
    ReferenceRow {
        set: "ours",
        length_km: 100.0,
        snr: 1.16,
        fidelity_pct: 52.5,
    },
    ReferenceRow {
        set: "ref",
        length_km: 0.0,
        snr: 6.87,
        fidelity_pct: 83.1,
    },
    ReferenceRow {
        set: "ref",
        length_km: 60.0,
        snr: 1.30,
        fidelity_pct: 54.5,
    },
    ReferenceRow {
        set: "ref",
        length_km: 100.0,
        snr: 0.32,
        fidelity_pct: 35.3,
    },
];

const SNR_TOLERANCE: f64 = 0.01;
const FIDELITY_TOLERANCE_PP: f64 = 0.1;
/// Guard against the comparison boundary itself being lost to the binary
/// representation of the decimal tolerances.
const TOLERANCE_EPSILON: f64 = 1e-9;

fn round_to_decimals(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round_ties_even() / scale
}

/// Parses one `--override-expected KEY=VALUE` argument; the key names a cell
/// as `<set>_<length>km_<snr|fidelity>`, e.g. `ours_0km_snr`.
pub fn parse_reference_override(text: &str) -> Result<(String, f64), CliError> {
    let (key, value) = text.split_once('=').ok_or_else(|| {
        CliError::Usage(format!("override `{text}` is not of the form KEY=VALUE"))
    })?;
    let value: f64 = value
        .parse()
        .map_err(|_| CliError::Usage(format!("override value `{value}` is not a number")))?;
    let valid = REFERENCE_ROWS.iter().flat_map(|row| {
        ["snr", "fidelity"]
            .into_iter()
            .map(move |kind| format!("{}_{:.0}km_{kind}", row.set, row.length_km))
    });
    if !valid.clone().any(|candidate| candidate == key) {
        let known: Vec<String> = valid.collect();
        return Err(CliError::Usage(format!(
            "unknown override key `{key}`; known keys: {}",
            known.join(", ")
        )));
    }
    Ok((key.to_string(), value))
}

/// Recomputes the reference table from the embedded parameter sets and diffs
/// it against the embedded expected values; any row outside tolerance makes
/// the command fail with the diff exit code after the report is written.
pub fn repro_table1(out_dir: &Path, overrides: &[(String, f64)]) -> Result<(), CliError> {
    ensure_out_dir(out_dir)?;
    let mut csv = String::from(
        "set,fiber_length_km,snr_model,snr_expected,snr_within_tolerance,\
         fidelity_model_pct,fidelity_expected_pct,fidelity_within_tolerance\n",
    );
    let mut failures = 0usize;
    for row in &REFERENCE_ROWS {
        let set = PARAMETER_SETS
            .iter()
            .find(|set| set.label == row.set)
            .expect("every reference row names an embedded parameter set");
        let inputs = qfclink::LinkInputs {
            source: qfclink::SourceModel::new(set.signal_rate_hz, 1.0e6, 300.0e-9)?,
            converter: Converter::Fixed(set.eta_c),
            pump_power_w: 0.0,
            noise: NoiseModel::FixedRate {
                rate_hz: set.noise_rate_hz,
            },
            fiber: qfclink::FiberLink::new(row.length_km, 0.16)?,
            detector: qfclink::DetectorModel::new(set.detector_efficiency, set.dark_rate_hz)?,
        };
        let budget = link_budget(&inputs)?;

        let lookup = |kind: &str, fallback: f64| {
            let key = format!("{}_{:.0}km_{kind}", row.set, row.length_km);
            overrides
                .iter()
                .rev()
                .find(|(k, _)| *k == key)
                .map_or(fallback, |(_, v)| *v)
        };
        let expected_snr = lookup("snr", row.snr);
        let expected_fidelity_pct = lookup("fidelity", row.fidelity_pct);

        let snr_model = round_to_decimals(budget.snr, 2);
        let fidelity_model_pct = round_to_decimals(budget.fidelity * 100.0, 1);
        let snr_ok = (snr_model - expected_snr).abs() <= SNR_TOLERANCE + TOLERANCE_EPSILON;
        let fidelity_ok = (fidelity_model_pct - expected_fidelity_pct).abs()
            <= FIDELITY_TOLERANCE_PP + TOLERANCE_EPSILON;
        failures += usize::from(!snr_ok) + usize::from(!fidelity_ok);

        let _ = writeln!(
            csv,
            "{},{:.0},{snr_model:.2},{expected_snr:.2},{snr_ok},\
             {fidelity_model_pct:.1},{expected_fidelity_pct:.1},{fidelity_ok}",
            row.set, row.length_km
        );
        println!(
            "{:<4} {:>3.0} km  snr {snr_model:>5.2} (expected {expected_snr:.2}) {}  \
             fidelity {fidelity_model_pct:.1}% (expected {expected_fidelity_pct:.1}%) {}",
            row.set,
            row.length_km,
            if snr_ok { "ok" } else { "MISMATCH" },
            if fidelity_ok { "ok" } else { "MISMATCH" },
        );
    }
    write_atomic(out_dir, "repro_table1.csv", &csv)?;
    if failures > 0 {
        return Err(CliError::Diff(format!(
            "repro-table1: {failures} of {} values outside tolerance",
            2 * REFERENCE_ROWS.len()
        )));
    }
    println!(
        "repro-table1: all {} values within tolerance",
        2 * REFERENCE_ROWS.len()
    );
    Ok(())
}
