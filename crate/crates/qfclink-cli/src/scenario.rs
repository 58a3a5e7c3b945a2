//! Scenario files: the one configuration format every subcommand reads.
//!
//! The format is INI-style. `[section]` headers group `key = value` lines,
//! `#` starts a comment (whole-line or trailing), and keys carry their unit
//! as a suffix (`signal_rate_hz = 32700`), so a value can never be read in
//! the wrong unit without the mismatch being visible in the file itself.
//!
//! Parsing is fail-closed: unknown sections, unknown keys, duplicates, and
//! malformed values are hard errors carrying line numbers. A typo must stop
//! the run rather than silently fall back to a default.

use qfclink::model::{ModelError, TargetBand};
use qfclink::montecarlo::{source_timing_ns, MonteCarloError};
use qfclink::{
    Converter, ConverterParams, DetectorModel, FiberLink, FilterStage, GateConfig, GateWindow,
    LinkInputs, NoiseModel, SourceModel,
};
use std::collections::BTreeMap;
use thiserror::Error;

/// Errors from scenario parsing, with the offending line where one exists.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: expected `[section]` or `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: section [{section}] does not accept key `{key}`")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in section [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate section [{name}]")]
    DuplicateSection { line: usize, name: String },
    #[error("line {line}: key `{key}` appears before any section header")]
    KeyOutsideSection { line: usize, key: String },
    #[error("missing required section [{0}]")]
    MissingSection(&'static str),
    #[error("section [{section}] is missing required key `{key}`")]
    MissingKey { section: String, key: &'static str },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("section [{section}]: {message}")]
    Conflict { section: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gate-timing overrides from the optional `[gating]` section; `None` means
/// "derive from the source" (pulse-aligned signal gate, background gate half
/// a period later, 10 ns bins when they divide the period).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatingOverrides {
    pub signal_offset_ns: Option<u64>,
    pub noise_offset_ns: Option<u64>,
    pub width_ns: Option<u64>,
    pub bin_ns: Option<u64>,
}

/// Sweep grid for the scan subcommands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sweep {
    PumpPower {
        start_w: f64,
        stop_w: f64,
        points: usize,
    },
    FiberLength {
        start_km: f64,
        stop_km: f64,
        points: usize,
    },
}

impl Sweep {
    /// The evenly spaced grid, endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let (start, stop, points) = match *self {
            Sweep::PumpPower {
                start_w,
                stop_w,
                points,
            } => (start_w, stop_w, points),
            Sweep::FiberLength {
                start_km,
                stop_km,
                points,
            } => (start_km, stop_km, points),
        };
        if points == 1 {
            return vec![start];
        }
        (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect()
    }
}

/// A fully validated scenario: constructed model values, not raw numbers.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub source: SourceModel,
    pub converter: Converter,
    pub pump_power_w: f64,
    pub noise: NoiseModel,
    pub fiber: FiberLink,
    pub detector: DetectorModel,
    pub filters: Vec<FilterStage>,
    pub gating: GatingOverrides,
    pub sweep: Option<Sweep>,
    pub seed: u64,
    pub coincidence_window_s: f64,
    pub montecarlo_duration_s: f64,
}

impl Scenario {
    /// The closed-form budget inputs this scenario describes.
    pub fn link_inputs(&self) -> LinkInputs {
        LinkInputs {
            source: self.source,
            converter: self.converter,
            pump_power_w: self.pump_power_w,
            noise: self.noise,
            fiber: self.fiber,
            detector: self.detector,
        }
    }

    /// Gate geometry: source-derived defaults with `[gating]` overrides
    /// applied, validated as one piece.
    pub fn gate_config(&self) -> Result<GateConfig, MonteCarloError> {
        let (period_ns, pulse_ns) = source_timing_ns(&self.source)?;
        let width_ns = self.gating.width_ns.unwrap_or(pulse_ns);
        let bin_ns = self
            .gating
            .bin_ns
            .unwrap_or(if period_ns % 10 == 0 { 10 } else { 1 });
        GateConfig::new(
            period_ns,
            GateWindow {
                offset_ns: self.gating.signal_offset_ns.unwrap_or(0),
                width_ns,
            },
            GateWindow {
                offset_ns: self.gating.noise_offset_ns.unwrap_or(period_ns / 2),
                width_ns,
            },
            bin_ns,
        )
    }
}

/// One parsed `key = value` with its source line.
struct Entry {
    line: usize,
    value: String,
}

/// One section's entries, consumed key by key so leftovers can be rejected.
struct Section {
    name: String,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<(usize, f64)>, ScenarioError> {
        match self.take(key) {
            None => Ok(None),
            Some(entry) => {
                let value: f64 = entry
                    .value
                    .parse()
                    .map_err(|_| ScenarioError::InvalidValue {
                        line: entry.line,
                        key: key.to_string(),
                        message: format!("`{}` is not a number", entry.value),
                    })?;
                if !value.is_finite() {
                    return Err(ScenarioError::InvalidValue {
                        line: entry.line,
                        key: key.to_string(),
                        message: format!("`{}` is not finite", entry.value),
                    });
                }
                Ok(Some((entry.line, value)))
            }
        }
    }

    fn require_f64(&mut self, key: &'static str) -> Result<f64, ScenarioError> {
        match self.take_f64(key)? {
            Some((_, value)) => Ok(value),
            None => Err(ScenarioError::MissingKey {
                section: self.name.clone(),
                key,
            }),
        }
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>, ScenarioError> {
        match self.take(key) {
            None => Ok(None),
            Some(entry) => entry
                .value
                .parse()
                .map(Some)
                .map_err(|_| ScenarioError::InvalidValue {
                    line: entry.line,
                    key: key.to_string(),
                    message: format!("`{}` is not a non-negative integer", entry.value),
                }),
        }
    }

    /// Every key must have been consumed by now; anything left is unknown.
    fn finish(self) -> Result<(), ScenarioError> {
        if let Some((key, entry)) = self.entries.into_iter().next() {
            return Err(ScenarioError::UnknownKey {
                line: entry.line,
                section: self.name,
                key,
            });
        }
        Ok(())
    }
}

fn section_name_allowed(name: &str) -> bool {
    matches!(
        name,
        "source"
            | "converter"
            | "noise"
            | "fiber"
            | "detector"
            | "gating"
            | "sweep"
            | "rng"
            | "coincidence"
            | "montecarlo"
    ) || name
        .strip_prefix("filter.")
        .is_some_and(|rest| !rest.is_empty())
}

/// First pass: raw sections in file order, every key still a string.
fn split_sections(text: &str) -> Result<Vec<Section>, ScenarioError> {
    let mut sections: Vec<Section> = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line = index + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| ScenarioError::Syntax {
                    line,
                    text: content.to_string(),
                })?;
            if !section_name_allowed(name) {
                return Err(ScenarioError::UnknownSection {
                    line,
                    name: name.to_string(),
                });
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(ScenarioError::DuplicateSection {
                    line,
                    name: name.to_string(),
                });
            }
            sections.push(Section {
                name: name.to_string(),
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ScenarioError::Syntax {
                line,
                text: content.to_string(),
            })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ScenarioError::Syntax {
                line,
                text: content.to_string(),
            });
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| ScenarioError::KeyOutsideSection {
                line,
                key: key.to_string(),
            })?;
        if section.entries.contains_key(key) {
            return Err(ScenarioError::DuplicateKey {
                line,
                section: section.name.clone(),
                key: key.to_string(),
            });
        }
        section.entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(sections)
}

fn pop_section(sections: &mut Vec<Section>, name: &str) -> Option<Section> {
    sections
        .iter()
        .position(|s| s.name == name)
        .map(|i| sections.remove(i))
}

fn require_section(
    sections: &mut Vec<Section>,
    name: &'static str,
) -> Result<Section, ScenarioError> {
    pop_section(sections, name).ok_or(ScenarioError::MissingSection(name))
}

fn parse_source(mut section: Section) -> Result<SourceModel, ScenarioError> {
    let signal = section.require_f64("signal_rate_hz")?;
    let rep = section.require_f64("rep_rate_hz")?;
    let width = section.require_f64("pulse_width_s")?;
    section.finish()?;
    Ok(SourceModel::new(signal, rep, width)?)
}

fn parse_converter(mut section: Section) -> Result<(Converter, f64), ScenarioError> {
    let eta_c = section.take_f64("eta_c")?;
    let length = section.take_f64("waveguide_length_m")?;
    let alpha = section.take_f64("alpha_qfc_per_w_m2")?;
    let eta_max = section.take_f64("eta_max")?;
    let pump = section.take_f64("pump_power_w")?;
    let name = section.name.clone();
    section.finish()?;

    let conflict = |message: &str| ScenarioError::Conflict {
        section: name.clone(),
        message: message.to_string(),
    };
    let curve_keys = [length, alpha, eta_max];
    let curve_count = curve_keys.iter().filter(|k| k.is_some()).count();
    match (eta_c, curve_count) {
        (Some(_), 1..) => Err(conflict(
            "give either a fixed eta_c or the curve triple \
             (waveguide_length_m, alpha_qfc_per_w_m2, eta_max), not both",
        )),
        (Some((_, eta)), 0) => {
            if pump.is_some() {
                return Err(conflict(
                    "pump_power_w only has an effect with the curve triple, not a fixed eta_c",
                ));
            }
            let converter = Converter::Fixed(eta);
            // Validate the fraction now rather than at first use.
            converter.efficiency(0.0)?;
            Ok((converter, 0.0))
        }
        (None, 3) => {
            let params =
                ConverterParams::new(length.unwrap().1, alpha.unwrap().1, eta_max.unwrap().1)?;
            Ok((Converter::Curve(params), pump.map_or(0.0, |(_, p)| p)))
        }
        (None, 0) => Err(conflict(
            "needs either eta_c or the curve triple \
             (waveguide_length_m, alpha_qfc_per_w_m2, eta_max)",
        )),
        (None, _) => Err(conflict(
            "the curve triple (waveguide_length_m, alpha_qfc_per_w_m2, eta_max) \
             is only valid as a whole",
        )),
    }
}

fn parse_noise(mut section: Section) -> Result<NoiseModel, ScenarioError> {
    let rate = section.take_f64("rate_hz")?;
    let slope = section.take_f64("slope_hz_per_w")?;
    let name = section.name.clone();
    section.finish()?;
    let check_nonneg = |key: &str, line: usize, value: f64| {
        if value < 0.0 {
            return Err(ScenarioError::InvalidValue {
                line,
                key: key.to_string(),
                message: format!("must be non-negative, got {value}"),
            });
        }
        Ok(value)
    };
    match (rate, slope) {
        (Some(_), Some(_)) => Err(ScenarioError::Conflict {
            section: name,
            message: "give either rate_hz or slope_hz_per_w, not both".to_string(),
        }),
        (Some((line, rate_hz)), None) => Ok(NoiseModel::FixedRate {
            rate_hz: check_nonneg("rate_hz", line, rate_hz)?,
        }),
        (None, Some((line, slope_hz_per_w))) => Ok(NoiseModel::LinearInPump {
            slope_hz_per_w: check_nonneg("slope_hz_per_w", line, slope_hz_per_w)?,
        }),
        (None, None) => Err(ScenarioError::Conflict {
            section: name,
            message: "needs either rate_hz or slope_hz_per_w".to_string(),
        }),
    }
}

fn parse_filter(mut section: Section) -> Result<FilterStage, ScenarioError> {
    let stage_name = section
        .name
        .strip_prefix("filter.")
        .unwrap_or(&section.name)
        .to_string();
    let insertion_loss_db = section.require_f64("insertion_loss_db")?;
    let isolation_db = section.require_f64("isolation_db")?;
    let band_entry = section
        .take("target_band")
        .ok_or_else(|| ScenarioError::MissingKey {
            section: section.name.clone(),
            key: "target_band",
        })?;
    let target_band = match band_entry.value.as_str() {
        "pump" => TargetBand::Pump,
        "spdc_noise" => TargetBand::SpdcNoise,
        other => {
            return Err(ScenarioError::InvalidValue {
                line: band_entry.line,
                key: "target_band".to_string(),
                message: format!("`{other}` is not one of `pump`, `spdc_noise`"),
            })
        }
    };
    let center = section.take_f64("center_wavelength_nm")?;
    let bandwidth_nm = section.take_f64("bandwidth_nm")?;
    let bandwidth_hz = section.take_f64("bandwidth_hz")?;
    let name = section.name.clone();
    section.finish()?;

    let mut stage = FilterStage::new(stage_name, insertion_loss_db, isolation_db, target_band)?;
    if let Some((_, nm)) = center {
        stage = stage.with_center_wavelength_nm(nm);
    }
    stage = match (bandwidth_nm, bandwidth_hz) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Conflict {
                section: name,
                message: "give either bandwidth_nm or bandwidth_hz, not both".to_string(),
            })
        }
        (Some((_, nm)), None) => stage.with_bandwidth(qfclink::model::Bandwidth::Nanometers(nm)),
        (None, Some((_, hz))) => stage.with_bandwidth(qfclink::model::Bandwidth::Hertz(hz)),
        (None, None) => stage,
    };
    Ok(stage)
}

fn parse_gating(mut section: Section) -> Result<GatingOverrides, ScenarioError> {
    let overrides = GatingOverrides {
        signal_offset_ns: section.take_u64("signal_offset_ns")?,
        noise_offset_ns: section.take_u64("noise_offset_ns")?,
        width_ns: section.take_u64("width_ns")?,
        bin_ns: section.take_u64("bin_ns")?,
    };
    section.finish()?;
    Ok(overrides)
}

fn parse_sweep(mut section: Section) -> Result<Sweep, ScenarioError> {
    let axis_entry = section
        .take("axis")
        .ok_or_else(|| ScenarioError::MissingKey {
            section: section.name.clone(),
            key: "axis",
        })?;
    let points_entry = section
        .take_u64("points")?
        .ok_or_else(|| ScenarioError::MissingKey {
            section: section.name.clone(),
            key: "points",
        })?;
    let points = points_entry as usize;

    let sweep = match axis_entry.value.as_str() {
        "pump_power_w" => Sweep::PumpPower {
            start_w: section.require_f64("start_w")?,
            stop_w: section.require_f64("stop_w")?,
            points,
        },
        "fiber_length_km" => Sweep::FiberLength {
            start_km: section.require_f64("start_km")?,
            stop_km: section.require_f64("stop_km")?,
            points,
        },
        other => {
            return Err(ScenarioError::InvalidValue {
                line: axis_entry.line,
                key: "axis".to_string(),
                message: format!("`{other}` is not one of `pump_power_w`, `fiber_length_km`"),
            })
        }
    };
    let name = section.name.clone();
    section.finish()?;

    let (start, stop) = match sweep {
        Sweep::PumpPower {
            start_w, stop_w, ..
        } => (start_w, stop_w),
        Sweep::FiberLength {
            start_km, stop_km, ..
        } => (start_km, stop_km),
    };
    let conflict = |message: String| ScenarioError::Conflict {
        section: name.clone(),
        message,
    };
    if start < 0.0 || stop < start {
        return Err(conflict(format!(
            "sweep bounds must satisfy 0 <= start <= stop, got {start}..{stop}"
        )));
    }
    if points == 0 || (points == 1 && start != stop) || (points > 1 && start == stop) {
        return Err(conflict(format!(
            "points must be >= 2 for a range, or exactly 1 when start == stop, \
             got {points} over {start}..{stop}"
        )));
    }
    if points > 1_000_000 {
        return Err(conflict(format!(
            "points must be at most 1000000, got {points}"
        )));
    }
    Ok(sweep)
}

/// Parses and validates a complete scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sections = split_sections(text)?;

    let source = parse_source(require_section(&mut sections, "source")?)?;
    let (converter, pump_power_w) = parse_converter(require_section(&mut sections, "converter")?)?;
    let noise = parse_noise(require_section(&mut sections, "noise")?)?;

    let mut fiber_section = require_section(&mut sections, "fiber")?;
    let fiber = FiberLink::new(
        fiber_section.require_f64("length_km")?,
        fiber_section.require_f64("attenuation_db_per_km")?,
    )?;
    fiber_section.finish()?;

    let mut detector_section = require_section(&mut sections, "detector")?;
    let detector = DetectorModel::new(
        detector_section.require_f64("efficiency")?,
        detector_section.require_f64("dark_rate_hz")?,
    )?;
    detector_section.finish()?;

    let gating = match pop_section(&mut sections, "gating") {
        Some(section) => parse_gating(section)?,
        None => GatingOverrides::default(),
    };
    let sweep = match pop_section(&mut sections, "sweep") {
        Some(section) => Some(parse_sweep(section)?),
        None => None,
    };

    let seed = match pop_section(&mut sections, "rng") {
        Some(mut section) => {
            let seed = section.take_u64("seed")?.unwrap_or(1);
            section.finish()?;
            seed
        }
        None => 1,
    };

    let coincidence_window_s = match pop_section(&mut sections, "coincidence") {
        Some(mut section) => {
            let window = match section.take_f64("window_s")? {
                Some((line, value)) if value <= 0.0 => {
                    return Err(ScenarioError::InvalidValue {
                        line,
                        key: "window_s".to_string(),
                        message: format!("must be positive, got {value}"),
                    })
                }
                Some((_, value)) => value,
                None => 1.0,
            };
            section.finish()?;
            window
        }
        None => 1.0,
    };

    let montecarlo_duration_s = match pop_section(&mut sections, "montecarlo") {
        Some(mut section) => {
            let duration = match section.take_f64("duration_s")? {
                Some((line, value)) if value <= 0.0 => {
                    return Err(ScenarioError::InvalidValue {
                        line,
                        key: "duration_s".to_string(),
                        message: format!("must be positive, got {value}"),
                    })
                }
                Some((_, value)) => value,
                None => 10.0,
            };
            section.finish()?;
            duration
        }
        None => 10.0,
    };

    // Whatever is left is a filter stage, in file order.
    let mut filters = Vec::new();
    for section in std::mem::take(&mut sections) {
        debug_assert!(section.name.starts_with("filter."));
        filters.push(parse_filter(section)?);
    }

    Ok(Scenario {
        source,
        converter,
        pump_power_w,
        noise,
        fiber,
        detector,
        filters,
        gating,
        sweep,
        seed,
        coincidence_window_s,
        montecarlo_duration_s,
    })
}
