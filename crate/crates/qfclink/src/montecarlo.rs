//! Synthetic time-tag streams and the gated SNR estimator.
//!
//! The detector in the modeled link reports a timestamp per click. Signal
//! photons arrive only inside the source's pulse windows, while converter
//! noise and dark counts arrive uniformly in time. This module generates
//! such streams as seeded Poisson processes, folds them into per-period
//! histograms, and evaluates the time-gated signal-to-noise estimator
//! `(k_S - k_N) / k_N`, where `k_S` counts clicks inside the signal gates
//! and `k_N` inside equal-width background gates.
//!
//! Timestamps are integer nanoseconds: event times are drawn continuously
//! and floored, which is far below the histogram bin width in resolution.
//!
//! A unit subtlety worth spelling out: a continuous background at rate `R`
//! contributes only `R * w * f` clicks per second inside gates of width `w`
//! repeating at rate `f`. Quoted background rates therefore mean different
//! things depending on whether they are full-time ("cw") rates or in-gate
//! rates; generation here always takes cw rates, and callers converting
//! in-gate quotes must divide by the duty factor first.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::model::SourceModel;

/// Errors from stream generation, folding, gating, or the text format.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("{name} must be non-negative and finite, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error(
        "source timing resolves below the 1 ns clock (period {period_ns} ns, pulse {pulse_ns} ns)"
    )]
    TimingResolution { period_ns: u64, pulse_ns: u64 },
    #[error("duty cycle is zero but the signal rate is positive")]
    ZeroDutyCycle,
    #[error("gate [{offset_ns}, {offset_ns}+{width_ns}) does not fit in a {period_ns} ns period")]
    GateOutsidePeriod {
        offset_ns: u64,
        width_ns: u64,
        period_ns: u64,
    },
    #[error(
        "signal gate ({signal_ns} ns) and background gate ({noise_ns} ns) have different widths"
    )]
    UnequalGateWidths { signal_ns: u64, noise_ns: u64 },
    #[error("signal and background gates overlap")]
    OverlappingGates,
    #[error("bin width {bin_ns} ns does not divide the {period_ns} ns period")]
    NonDividingBin { bin_ns: u64, period_ns: u64 },
    #[error("stream repetition period {stream_ns} ns does not match gate period {gate_ns} ns")]
    PeriodMismatch { stream_ns: u64, gate_ns: u64 },
    #[error("no room for a background gate: duty cycle above one half")]
    NoBackgroundWindow,
    #[error("time-tag parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Where a simulated click came from. Carried as simulation truth for
/// audits; never exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Signal,
    Noise,
    Dark,
}

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTag {
    pub timestamp_ns: u64,
    /// `None` for imported streams, where the truth is unknowable.
    pub origin: Option<Origin>,
}

/// A time-ordered sequence of detector clicks plus the repetition period
/// they fold over.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    rep_period_ns: u64,
    tags: Vec<TimeTag>,
}

impl TimeTagStream {
    /// Builds a stream from already-sorted tags.
    pub fn new(rep_period_ns: u64, tags: Vec<TimeTag>) -> Result<Self, MonteCarloError> {
        if rep_period_ns == 0 {
            return Err(MonteCarloError::TimingResolution {
                period_ns: 0,
                pulse_ns: 0,
            });
        }
        if let Some(position) = tags
            .windows(2)
            .position(|pair| pair[1].timestamp_ns < pair[0].timestamp_ns)
        {
            return Err(MonteCarloError::Parse {
                line: position + 2,
                message: "timestamps must be non-decreasing".into(),
            });
        }
        Ok(Self {
            rep_period_ns,
            tags,
        })
    }

    pub fn rep_period_ns(&self) -> u64 {
        self.rep_period_ns
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// A half-open time window `[offset, offset + width)` within one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateWindow {
    pub offset_ns: u64,
    pub width_ns: u64,
}

impl GateWindow {
    fn contains_phase(&self, phase_ns: u64) -> bool {
        phase_ns >= self.offset_ns && phase_ns < self.offset_ns + self.width_ns
    }
}

/// Validated gating geometry: where the signal and background gates sit in
/// the repetition period and how finely to bin folded histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateConfig {
    rep_period_ns: u64,
    signal_gate: GateWindow,
    noise_gate: GateWindow,
    bin_ns: u64,
}

impl GateConfig {
    pub fn new(
        rep_period_ns: u64,
        signal_gate: GateWindow,
        noise_gate: GateWindow,
        bin_ns: u64,
    ) -> Result<Self, MonteCarloError> {
        for gate in [&signal_gate, &noise_gate] {
            let end = gate.offset_ns.checked_add(gate.width_ns);
            if gate.width_ns == 0 || end.is_none() || end.unwrap() > rep_period_ns {
                return Err(MonteCarloError::GateOutsidePeriod {
                    offset_ns: gate.offset_ns,
                    width_ns: gate.width_ns,
                    period_ns: rep_period_ns,
                });
            }
        }
        if signal_gate.width_ns != noise_gate.width_ns {
            return Err(MonteCarloError::UnequalGateWidths {
                signal_ns: signal_gate.width_ns,
                noise_ns: noise_gate.width_ns,
            });
        }
        let disjoint = signal_gate.offset_ns + signal_gate.width_ns <= noise_gate.offset_ns
            || noise_gate.offset_ns + noise_gate.width_ns <= signal_gate.offset_ns;
        if !disjoint {
            return Err(MonteCarloError::OverlappingGates);
        }
        if bin_ns == 0 || !rep_period_ns.is_multiple_of(bin_ns) {
            return Err(MonteCarloError::NonDividingBin {
                bin_ns,
                period_ns: rep_period_ns,
            });
        }
        Ok(Self {
            rep_period_ns,
            signal_gate,
            noise_gate,
            bin_ns,
        })
    }

    /// Default gating for a source: the signal gate covers the pulse at the
    /// start of the period, the background gate sits half a period later
    /// with the same width, and bins are 10 ns when that divides the period
    /// (1 ns otherwise).
    pub fn for_source(source: &SourceModel) -> Result<Self, MonteCarloError> {
        let (rep_period_ns, pulse_ns) = source_timing_ns(source)?;
        let noise_offset_ns = rep_period_ns / 2;
        if noise_offset_ns + pulse_ns > rep_period_ns || pulse_ns > noise_offset_ns {
            return Err(MonteCarloError::NoBackgroundWindow);
        }
        let bin_ns = if rep_period_ns % 10 == 0 { 10 } else { 1 };
        Self::new(
            rep_period_ns,
            GateWindow {
                offset_ns: 0,
                width_ns: pulse_ns,
            },
            GateWindow {
                offset_ns: noise_offset_ns,
                width_ns: pulse_ns,
            },
            bin_ns,
        )
    }

    pub fn rep_period_ns(&self) -> u64 {
        self.rep_period_ns
    }

    pub fn signal_gate(&self) -> GateWindow {
        self.signal_gate
    }

    pub fn noise_gate(&self) -> GateWindow {
        self.noise_gate
    }

    pub fn bin_ns(&self) -> u64 {
        self.bin_ns
    }

    /// Fraction of each period covered by one gate.
    pub fn gate_duty_cycle(&self) -> f64 {
        self.signal_gate.width_ns as f64 / self.rep_period_ns as f64
    }
}

/// Repetition period and pulse width in integer nanoseconds, the resolution
/// the stream generator and gating logic work at. Errors when either rounds
/// to zero or the pulse outlasts the period.
pub fn source_timing_ns(source: &SourceModel) -> Result<(u64, u64), MonteCarloError> {
    let period_ns = (1e9 / source.rep_rate_hz()).round() as u64;
    let pulse_ns = (source.pulse_width_s() * 1e9).round() as u64;
    if period_ns == 0 || pulse_ns == 0 || pulse_ns > period_ns {
        return Err(MonteCarloError::TimingResolution {
            period_ns,
            pulse_ns,
        });
    }
    Ok((period_ns, pulse_ns))
}

fn check_rate(name: &'static str, value: f64) -> Result<(), MonteCarloError> {
    if !value.is_finite() || value < 0.0 {
        return Err(MonteCarloError::InvalidRate { name, value });
    }
    Ok(())
}

/// Generates a detector click stream for one observation run.
///
/// `detected_signal_rate_hz` is the full delivered signal rate; all of it
/// arrives inside pulse windows that open at the start of each repetition
/// period. `noise_rate_hz` and `dark_rate_hz` are continuous (cw) rates over
/// all time. The three processes are independent Poisson processes; the
/// output is their merge, sorted, with truth labels attached. Identical
/// seeds give identical streams.
pub fn generate_stream(
    source: &SourceModel,
    detected_signal_rate_hz: f64,
    noise_rate_hz: f64,
    dark_rate_hz: f64,
    duration_s: f64,
    rng_seed: u64,
) -> Result<TimeTagStream, MonteCarloError> {
    check_rate("detected_signal_rate_hz", detected_signal_rate_hz)?;
    check_rate("noise_rate_hz", noise_rate_hz)?;
    check_rate("dark_rate_hz", dark_rate_hz)?;
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(MonteCarloError::InvalidDuration(duration_s));
    }
    let (period_ns, pulse_ns) = source_timing_ns(source)?;
    let duration_ns = (duration_s * 1e9).round() as u64;
    let duty = pulse_ns as f64 / period_ns as f64;
    if duty == 0.0 && detected_signal_rate_hz > 0.0 {
        return Err(MonteCarloError::ZeroDutyCycle);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut tags: Vec<TimeTag> = Vec::new();

    // Signal: a homogeneous Poisson process on the concatenation of the
    // pulse windows, mapped back onto absolute time. Compressing the dead
    // time out means the in-window rate must be the delivered rate divided
    // by the duty cycle.
    if detected_signal_rate_hz > 0.0 {
        let full_periods = duration_ns / period_ns;
        let tail_ns = duration_ns % period_ns;
        let window_measure_ns = (full_periods * pulse_ns + tail_ns.min(pulse_ns)) as f64;
        let rate_per_window_ns = detected_signal_rate_hz / duty / 1e9;
        let exp = Exp::new(rate_per_window_ns).expect("positive rate");
        let mut along_windows_ns = 0.0f64;
        loop {
            along_windows_ns += exp.sample(&mut rng);
            if along_windows_ns >= window_measure_ns {
                break;
            }
            let flat = along_windows_ns.floor() as u64;
            let timestamp_ns = (flat / pulse_ns) * period_ns + flat % pulse_ns;
            tags.push(TimeTag {
                timestamp_ns,
                origin: Some(Origin::Signal),
            });
        }
    }

    for (rate_hz, origin) in [(noise_rate_hz, Origin::Noise), (dark_rate_hz, Origin::Dark)] {
        if rate_hz == 0.0 {
            continue;
        }
        let rate_per_ns = rate_hz / 1e9;
        let exp = Exp::new(rate_per_ns).expect("positive rate");
        let mut at_ns = 0.0f64;
        loop {
            at_ns += exp.sample(&mut rng);
            if at_ns >= duration_ns as f64 {
                break;
            }
            tags.push(TimeTag {
                timestamp_ns: at_ns.floor() as u64,
                origin: Some(origin),
            });
        }
    }

    // A stable key including the origin keeps the merge order deterministic
    // even when two processes click in the same nanosecond.
    tags.sort_by_key(|tag| {
        let origin_rank = match tag.origin {
            Some(Origin::Signal) => 0u8,
            Some(Origin::Noise) => 1,
            Some(Origin::Dark) => 2,
            None => 3,
        };
        (tag.timestamp_ns, origin_rank)
    });

    TimeTagStream::new(period_ns, tags)
}

/// Detection counts folded over one repetition period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bin_ns: u64,
    pub counts: Vec<u64>,
}

/// Folds every tag to its phase within the period and bins the phases.
pub fn fold_histogram(
    stream: &TimeTagStream,
    gate: &GateConfig,
) -> Result<Histogram, MonteCarloError> {
    if stream.rep_period_ns() != gate.rep_period_ns() {
        return Err(MonteCarloError::PeriodMismatch {
            stream_ns: stream.rep_period_ns(),
            gate_ns: gate.rep_period_ns(),
        });
    }
    let bins = (gate.rep_period_ns() / gate.bin_ns()) as usize;
    let mut counts = vec![0u64; bins];
    for tag in stream.tags() {
        let phase_ns = tag.timestamp_ns % gate.rep_period_ns();
        counts[(phase_ns / gate.bin_ns()) as usize] += 1;
    }
    Ok(Histogram {
        bin_ns: gate.bin_ns(),
        counts,
    })
}

/// Result of the gated SNR estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatedSnr {
    /// `(k_signal - k_noise) / k_noise`; `f64::INFINITY` when the background
    /// gates are empty.
    pub snr: f64,
    pub k_signal: u64,
    pub k_noise: u64,
    /// Set when the background gates caught nothing, making the estimate a
    /// sentinel rather than a measurement.
    pub noise_gate_empty: bool,
}

/// Counts clicks inside the signal and background gates across all periods
/// and forms `(k_S - k_N) / k_N`.
///
/// In expectation the numerator holds the signal (background subtracts out)
/// and the denominator the in-gate background, so for long runs the estimate
/// converges to `r_s / ((r_n + r_d) * w * f)` with cw background rates, or
/// equivalently to signal over background with in-gate rates.
pub fn gated_snr(stream: &TimeTagStream, gate: &GateConfig) -> Result<GatedSnr, MonteCarloError> {
    if stream.rep_period_ns() != gate.rep_period_ns() {
        return Err(MonteCarloError::PeriodMismatch {
            stream_ns: stream.rep_period_ns(),
            gate_ns: gate.rep_period_ns(),
        });
    }
    let mut k_signal = 0u64;
    let mut k_noise = 0u64;
    for tag in stream.tags() {
        let phase_ns = tag.timestamp_ns % gate.rep_period_ns();
        if gate.signal_gate().contains_phase(phase_ns) {
            k_signal += 1;
        } else if gate.noise_gate().contains_phase(phase_ns) {
            k_noise += 1;
        }
    }
    if k_noise == 0 {
        return Ok(GatedSnr {
            snr: f64::INFINITY,
            k_signal,
            k_noise,
            noise_gate_empty: true,
        });
    }
    Ok(GatedSnr {
        snr: (k_signal as f64 - k_noise as f64) / k_noise as f64,
        k_signal,
        k_noise,
        noise_gate_empty: false,
    })
}

/// Serializes a stream to the interchange text format.
///
/// The header is `# timetag v1 rep_period_ns=<N>`; each following line is
/// `<timestamp_ns><TAB><channel>` with channel 0 the single detector.
/// Origin labels are simulation truth and are never exported.
pub fn format_timetags(stream: &TimeTagStream) -> String {
    let mut out = String::with_capacity(16 + stream.len() * 12);
    out.push_str(&format!(
        "# timetag v1 rep_period_ns={}\n",
        stream.rep_period_ns()
    ));
    for tag in stream.tags() {
        out.push_str(&format!("{}\t0\n", tag.timestamp_ns));
    }
    out
}

/// Parses the interchange text format back into a stream.
///
/// The parser is strict: the header must match exactly, every line must be
/// `<timestamp_ns><TAB>0`, and timestamps must be non-decreasing. Imported
/// tags carry no origin label.
pub fn parse_timetags(text: &str) -> Result<TimeTagStream, MonteCarloError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(MonteCarloError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let rep_period_ns = header
        .strip_prefix("# timetag v1 rep_period_ns=")
        .and_then(|rest| rest.trim().parse::<u64>().ok())
        .ok_or_else(|| MonteCarloError::Parse {
            line: 1,
            message: format!("bad header {header:?}"),
        })?;
    let mut tags = Vec::new();
    let mut previous = 0u64;
    for (index, line) in lines {
        let line_number = index + 1;
        if line.is_empty() {
            return Err(MonteCarloError::Parse {
                line: line_number,
                message: "empty line".into(),
            });
        }
        let (stamp, channel) = line
            .split_once('\t')
            .ok_or_else(|| MonteCarloError::Parse {
                line: line_number,
                message: "expected <timestamp_ns><TAB><channel>".into(),
            })?;
        let timestamp_ns = stamp.parse::<u64>().map_err(|e| MonteCarloError::Parse {
            line: line_number,
            message: format!("bad timestamp {stamp:?}: {e}"),
        })?;
        if channel != "0" {
            return Err(MonteCarloError::Parse {
                line: line_number,
                message: format!("unknown channel {channel:?}; only channel 0 is defined"),
            });
        }
        if timestamp_ns < previous {
            return Err(MonteCarloError::Parse {
                line: line_number,
                message: "timestamps must be non-decreasing".into(),
            });
        }
        previous = timestamp_ns;
        tags.push(TimeTag {
            timestamp_ns,
            origin: None,
        });
    }
    TimeTagStream::new(rep_period_ns, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceModel;

    fn demo_source() -> SourceModel {
        SourceModel::new(32_700.0, 1.0e6, 300e-9).unwrap()
    }

    fn manual_stream(rep_period_ns: u64, stamps: &[u64]) -> TimeTagStream {
        let tags = stamps
            .iter()
            .map(|&timestamp_ns| TimeTag {
                timestamp_ns,
                origin: None,
            })
            .collect();
        TimeTagStream::new(rep_period_ns, tags).unwrap()
    }

    #[test]
    fn test_generate_all_zero_rates_is_empty() {
        let stream = generate_stream(&demo_source(), 0.0, 0.0, 0.0, 5.0, 1).unwrap();
        assert!(stream.is_empty());
        assert_eq!(stream.rep_period_ns(), 1000);
    }

    #[test]
    fn test_generate_signal_stays_inside_pulses() {
        let stream = generate_stream(&demo_source(), 5000.0, 0.0, 0.0, 20.0, 3).unwrap();
        assert!(!stream.is_empty());
        for tag in stream.tags() {
            assert!(tag.timestamp_ns % 1000 < 300, "tag {tag:?}");
            assert_eq!(tag.origin, Some(Origin::Signal));
        }
    }

    #[test]
    fn test_generate_total_count_within_poisson_band() {
        let stream = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 60.0, 17).unwrap();
        let mean = 60.0 * (2600.0 + 150.0 + 54.0f64);
        let sigma = mean.sqrt();
        let count = stream.len() as f64;
        assert!(
            (count - mean).abs() <= 5.0 * sigma,
            "count {count}, mean {mean}"
        );
    }

    #[test]
    fn test_generate_deterministic() {
        let a = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 10.0, 8).unwrap();
        let b = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 10.0, 8).unwrap();
        assert_eq!(a, b);
        let c = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 10.0, 9).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn test_generate_sortedness() {
        let stream = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 30.0, 21).unwrap();
        for pair in stream.tags().windows(2) {
            assert!(pair[0].timestamp_ns <= pair[1].timestamp_ns);
        }
    }

    #[test]
    fn test_generate_rejects_bad_arguments() {
        let source = demo_source();
        assert!(matches!(
            generate_stream(&source, -1.0, 0.0, 0.0, 1.0, 0),
            Err(MonteCarloError::InvalidRate { .. })
        ));
        assert!(matches!(
            generate_stream(&source, 0.0, f64::NAN, 0.0, 1.0, 0),
            Err(MonteCarloError::InvalidRate { .. })
        ));
        assert!(matches!(
            generate_stream(&source, 0.0, 0.0, 0.0, 0.0, 0),
            Err(MonteCarloError::InvalidDuration(_))
        ));
    }

    #[test]
    fn test_gate_config_defaults_for_demo_source() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        assert_eq!(gate.rep_period_ns(), 1000);
        assert_eq!(
            gate.signal_gate(),
            GateWindow {
                offset_ns: 0,
                width_ns: 300
            }
        );
        assert_eq!(
            gate.noise_gate(),
            GateWindow {
                offset_ns: 500,
                width_ns: 300
            }
        );
        assert_eq!(gate.bin_ns(), 10);
        assert!((gate.gate_duty_cycle() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn test_gate_config_rejects_bad_geometry() {
        let signal = GateWindow {
            offset_ns: 0,
            width_ns: 300,
        };
        assert!(matches!(
            GateConfig::new(
                1000,
                signal,
                GateWindow {
                    offset_ns: 800,
                    width_ns: 300
                },
                10
            ),
            Err(MonteCarloError::GateOutsidePeriod { .. })
        ));
        assert!(matches!(
            GateConfig::new(
                1000,
                signal,
                GateWindow {
                    offset_ns: 500,
                    width_ns: 200
                },
                10
            ),
            Err(MonteCarloError::UnequalGateWidths { .. })
        ));
        assert!(matches!(
            GateConfig::new(
                1000,
                signal,
                GateWindow {
                    offset_ns: 200,
                    width_ns: 300
                },
                10
            ),
            Err(MonteCarloError::OverlappingGates)
        ));
        assert!(matches!(
            GateConfig::new(
                1000,
                signal,
                GateWindow {
                    offset_ns: 500,
                    width_ns: 300
                },
                7
            ),
            Err(MonteCarloError::NonDividingBin { .. })
        ));
    }

    #[test]
    fn test_fold_empty_stream() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let stream = manual_stream(1000, &[]);
        let histogram = fold_histogram(&stream, &gate).unwrap();
        assert_eq!(histogram.counts.len(), 100);
        assert!(histogram.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn test_fold_single_tag_phase() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let stream = manual_stream(1000, &[2135]);
        let histogram = fold_histogram(&stream, &gate).unwrap();
        assert_eq!(histogram.counts[13], 1);
        assert_eq!(histogram.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn test_fold_conserves_mass_and_confines_signal() {
        let stream = generate_stream(&demo_source(), 5000.0, 0.0, 0.0, 10.0, 33).unwrap();
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let histogram = fold_histogram(&stream, &gate).unwrap();
        assert_eq!(histogram.counts.iter().sum::<u64>(), stream.len() as u64);
        for (bin, &count) in histogram.counts.iter().enumerate() {
            let bin_start_ns = bin as u64 * histogram.bin_ns;
            if bin_start_ns >= 300 {
                assert_eq!(count, 0, "background bin {bin} holds counts");
            }
        }
    }

    #[test]
    fn test_fold_rejects_period_mismatch() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let stream = manual_stream(2000, &[5]);
        assert!(matches!(
            fold_histogram(&stream, &gate),
            Err(MonteCarloError::PeriodMismatch { .. })
        ));
    }

    #[test]
    fn test_gated_snr_definition() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        // Four clicks in signal gates, two in background gates: SNR 1.0.
        let stream = manual_stream(1000, &[10, 250, 600, 1020, 1100, 1650]);
        let result = gated_snr(&stream, &gate).unwrap();
        assert_eq!(result.k_signal, 4);
        assert_eq!(result.k_noise, 2);
        assert_eq!(result.snr, 1.0);
        assert!(!result.noise_gate_empty);
    }

    #[test]
    fn test_gated_snr_empty_background_sentinel() {
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let stream = manual_stream(1000, &[10, 20, 1250]);
        let result = gated_snr(&stream, &gate).unwrap();
        assert_eq!(result.k_signal, 3);
        assert_eq!(result.k_noise, 0);
        assert!(result.snr.is_infinite());
        assert!(result.noise_gate_empty);
    }

    #[test]
    fn test_gated_snr_converges_to_rate_ratio() {
        // 10 s at the measured-channel rates (cw convention): expect the
        // estimator near r_s / ((r_n + r_d) * duty).
        let (r_s, r_n, r_d) = (2648.7, 462.0, 180.0);
        let stream = generate_stream(&demo_source(), r_s, r_n, r_d, 10.0, 5).unwrap();
        let gate = GateConfig::for_source(&demo_source()).unwrap();
        let result = gated_snr(&stream, &gate).unwrap();
        let expected = r_s / ((r_n + r_d) * 0.3);
        // Loose five-sigma band from the Poisson counts themselves.
        let mu_s = (r_s + (r_n + r_d) * 0.3) * 10.0;
        let mu_n = (r_n + r_d) * 0.3 * 10.0;
        let se = (mu_s / mu_n) * (1.0 / mu_s + 1.0 / mu_n).sqrt();
        assert!(
            (result.snr - expected).abs() <= 5.0 * se,
            "snr {} vs expected {expected} (se {se})",
            result.snr
        );
    }

    #[test]
    fn test_format_parse_round_trip() {
        let stream = generate_stream(&demo_source(), 2600.0, 150.0, 54.0, 2.0, 12).unwrap();
        let text = format_timetags(&stream);
        assert!(text.starts_with("# timetag v1 rep_period_ns=1000\n"));
        let parsed = parse_timetags(&text).unwrap();
        assert_eq!(parsed.rep_period_ns(), stream.rep_period_ns());
        assert_eq!(parsed.len(), stream.len());
        for (a, b) in parsed.tags().iter().zip(stream.tags()) {
            assert_eq!(a.timestamp_ns, b.timestamp_ns);
            assert_eq!(a.origin, None);
        }
    }

    #[test]
    fn test_parse_rejects_malformed_input() {
        assert!(matches!(
            parse_timetags(""),
            Err(MonteCarloError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_timetags("# wrong header\n1\t0\n"),
            Err(MonteCarloError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_timetags("# timetag v1 rep_period_ns=1000\n5 0\n"),
            Err(MonteCarloError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_timetags("# timetag v1 rep_period_ns=1000\n5\t1\n"),
            Err(MonteCarloError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_timetags("# timetag v1 rep_period_ns=1000\n9\t0\n5\t0\n"),
            Err(MonteCarloError::Parse { line: 3, .. })
        ));
    }
}
