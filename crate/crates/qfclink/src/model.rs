//! Closed-form link budget for a frequency-converted single-photon channel.
//!
//! The chain under study is: a pulsed single-photon source, a nonlinear
//! wavelength converter pumped at power `P`, a cascade of spectral filters, a
//! fiber span, and a single-photon detector with a dark-count floor. This
//! module evaluates that chain analytically; statistical verification of the
//! same quantities lives in [`crate::montecarlo`] and [`crate::coincidence`].
//!
//! Conventions used throughout:
//!
//! - all rates are plain hertz stored as `f64`; decibel quantities are
//!   converted to linear factors at the point of use and never stored twice,
//! - the converter noise rate is defined at the converter output, before the
//!   fiber, so it is attenuated by both the fiber and the detector efficiency,
//! - detector dark counts originate in the detector and are attenuated by
//!   neither,
//! - a noiseless, dark-count-free channel has no finite SNR; it is reported
//!   as an explicit `f64::INFINITY` sentinel rather than a division by zero.

use thiserror::Error;

/// Errors from constructing or evaluating link-budget inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A constructor or evaluation argument violated its documented range.
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    /// Pump powers are meaningful only when finite and non-negative.
    #[error("pump power must be non-negative and finite, got {0}")]
    InvalidPumpPower(f64),
    /// The fidelity map is defined for non-negative SNR only.
    #[error("snr must be non-negative, got {0}")]
    NegativeSnr(f64),
    /// Sweep grids must contain at least one point.
    #[error("scan grid is empty")]
    EmptyGrid,
}

fn require(
    name: &'static str,
    requirement: &'static str,
    value: f64,
    ok: bool,
) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            requirement,
            value,
        })
    }
}

/// Parameters of the nonlinear wavelength converter.
///
/// The external conversion efficiency follows a sinusoidal saturation law in
/// pump power: `eta_max * sin^2(L * sqrt(alpha * P))`. `eta_max` bundles all
/// fixed propagation losses of the converter assembly, `alpha` is the
/// normalized power efficiency of the waveguide, and `L` its length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    waveguide_length_m: f64,
    alpha_qfc_per_w_m2: f64,
    eta_max: f64,
}

impl ConverterParams {
    pub fn new(
        waveguide_length_m: f64,
        alpha_qfc_per_w_m2: f64,
        eta_max: f64,
    ) -> Result<Self, ModelError> {
        require(
            "waveguide_length_m",
            "positive and finite",
            waveguide_length_m,
            waveguide_length_m.is_finite() && waveguide_length_m > 0.0,
        )?;
        require(
            "alpha_qfc_per_w_m2",
            "positive and finite",
            alpha_qfc_per_w_m2,
            alpha_qfc_per_w_m2.is_finite() && alpha_qfc_per_w_m2 > 0.0,
        )?;
        require(
            "eta_max",
            "a fraction in [0, 1]",
            eta_max,
            eta_max.is_finite() && (0.0..=1.0).contains(&eta_max),
        )?;
        Ok(Self {
            waveguide_length_m,
            alpha_qfc_per_w_m2,
            eta_max,
        })
    }

    pub fn waveguide_length_m(&self) -> f64 {
        self.waveguide_length_m
    }

    pub fn alpha_qfc_per_w_m2(&self) -> f64 {
        self.alpha_qfc_per_w_m2
    }

    pub fn eta_max(&self) -> f64 {
        self.eta_max
    }

    /// Pump power at which the conversion efficiency first reaches its peak,
    /// i.e. where the sine argument equals pi/2.
    pub fn peak_pump_power_w(&self) -> f64 {
        let half_pi_over_l = std::f64::consts::FRAC_PI_2 / self.waveguide_length_m;
        half_pi_over_l * half_pi_over_l / self.alpha_qfc_per_w_m2
    }
}

/// External conversion efficiency at the given pump power.
pub fn conversion_efficiency(
    params: &ConverterParams,
    pump_power_w: f64,
) -> Result<f64, ModelError> {
    if !pump_power_w.is_finite() || pump_power_w < 0.0 {
        return Err(ModelError::InvalidPumpPower(pump_power_w));
    }
    let argument = params.waveguide_length_m * (params.alpha_qfc_per_w_m2 * pump_power_w).sqrt();
    Ok(params.eta_max * argument.sin().powi(2))
}

/// Which background band a filter stage targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetBand {
    /// Residual pump light.
    Pump,
    /// Broadband parametric down-conversion noise around the signal.
    SpdcNoise,
}

/// A filter bandwidth, quoted in whichever unit the vendor uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Nanometers(f64),
    Hertz(f64),
}

/// One stage of the spectral filtering cascade.
///
/// Only the scalar insertion loss (signal band) and isolation (targeted
/// background band) enter the budget; center wavelength and bandwidth are
/// carried as documentation of the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStage {
    name: String,
    center_wavelength_nm: Option<f64>,
    bandwidth: Option<Bandwidth>,
    insertion_loss_db: f64,
    isolation_db: f64,
    target_band: TargetBand,
}

impl FilterStage {
    pub fn new(
        name: impl Into<String>,
        insertion_loss_db: f64,
        isolation_db: f64,
        target_band: TargetBand,
    ) -> Result<Self, ModelError> {
        require(
            "insertion_loss_db",
            "non-negative and finite",
            insertion_loss_db,
            insertion_loss_db.is_finite() && insertion_loss_db >= 0.0,
        )?;
        require(
            "isolation_db",
            "non-negative and finite",
            isolation_db,
            isolation_db.is_finite() && isolation_db >= 0.0,
        )?;
        Ok(Self {
            name: name.into(),
            center_wavelength_nm: None,
            bandwidth: None,
            insertion_loss_db,
            isolation_db,
            target_band,
        })
    }

    pub fn with_center_wavelength_nm(mut self, nm: f64) -> Self {
        self.center_wavelength_nm = Some(nm);
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = Some(bandwidth);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn center_wavelength_nm(&self) -> Option<f64> {
        self.center_wavelength_nm
    }

    pub fn bandwidth(&self) -> Option<Bandwidth> {
        self.bandwidth
    }

    pub fn insertion_loss_db(&self) -> f64 {
        self.insertion_loss_db
    }

    pub fn isolation_db(&self) -> f64 {
        self.isolation_db
    }

    pub fn target_band(&self) -> TargetBand {
        self.target_band
    }
}

/// Total signal-band insertion loss of a filter cascade, in dB.
pub fn cascade_insertion_loss_db(stages: &[FilterStage]) -> f64 {
    stages.iter().map(|s| s.insertion_loss_db).sum()
}

/// Total isolation a filter cascade offers against one background band, in dB.
///
/// Stages targeting the other band contribute nothing; a filter built to
/// reject pump light is transparent bookkeeping-wise to the broadband noise
/// and vice versa.
pub fn cascade_isolation_db(stages: &[FilterStage], band: TargetBand) -> f64 {
    stages
        .iter()
        .filter(|s| s.target_band == band)
        .map(|s| s.isolation_db)
        .sum()
}

/// Converts a loss quoted in dB to a linear power transmittance.
pub fn transmittance_from_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// A fiber span characterized by length and attenuation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberLink {
    length_km: f64,
    attenuation_db_per_km: f64,
}

impl FiberLink {
    pub fn new(length_km: f64, attenuation_db_per_km: f64) -> Result<Self, ModelError> {
        require(
            "length_km",
            "non-negative and finite",
            length_km,
            length_km.is_finite() && length_km >= 0.0,
        )?;
        require(
            "attenuation_db_per_km",
            "non-negative and finite",
            attenuation_db_per_km,
            attenuation_db_per_km.is_finite() && attenuation_db_per_km >= 0.0,
        )?;
        Ok(Self {
            length_km,
            attenuation_db_per_km,
        })
    }

    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    pub fn attenuation_db_per_km(&self) -> f64 {
        self.attenuation_db_per_km
    }
}

/// Power transmittance of a fiber span, `10^(-alpha * l / 10)`.
pub fn fiber_transmittance(link: &FiberLink) -> f64 {
    transmittance_from_db(link.attenuation_db_per_km * link.length_km)
}

/// Single-photon detector model: quantum efficiency plus a dark-count floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    efficiency: f64,
    dark_rate_hz: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_rate_hz: f64) -> Result<Self, ModelError> {
        require(
            "efficiency",
            "a fraction in [0, 1]",
            efficiency,
            efficiency.is_finite() && (0.0..=1.0).contains(&efficiency),
        )?;
        require(
            "dark_rate_hz",
            "non-negative and finite",
            dark_rate_hz,
            dark_rate_hz.is_finite() && dark_rate_hz >= 0.0,
        )?;
        Ok(Self {
            efficiency,
            dark_rate_hz,
        })
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn dark_rate_hz(&self) -> f64 {
        self.dark_rate_hz
    }
}

/// Pulsed single-photon source: delivered photon rate plus pulse timing.
///
/// The photon rate counts all photons, and all of them arrive inside pulses;
/// the timing fields describe how those pulses tile the repetition period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    signal_rate_hz: f64,
    rep_rate_hz: f64,
    pulse_width_s: f64,
}

impl SourceModel {
    pub fn new(
        signal_rate_hz: f64,
        rep_rate_hz: f64,
        pulse_width_s: f64,
    ) -> Result<Self, ModelError> {
        require(
            "signal_rate_hz",
            "non-negative and finite",
            signal_rate_hz,
            signal_rate_hz.is_finite() && signal_rate_hz >= 0.0,
        )?;
        require(
            "rep_rate_hz",
            "positive and finite",
            rep_rate_hz,
            rep_rate_hz.is_finite() && rep_rate_hz > 0.0,
        )?;
        require(
            "pulse_width_s",
            "positive and finite",
            pulse_width_s,
            pulse_width_s.is_finite() && pulse_width_s > 0.0,
        )?;
        let duty = pulse_width_s * rep_rate_hz;
        require(
            "pulse_width_s * rep_rate_hz",
            "at most 1",
            duty,
            duty <= 1.0,
        )?;
        Ok(Self {
            signal_rate_hz,
            rep_rate_hz,
            pulse_width_s,
        })
    }

    pub fn signal_rate_hz(&self) -> f64 {
        self.signal_rate_hz
    }

    pub fn rep_rate_hz(&self) -> f64 {
        self.rep_rate_hz
    }

    pub fn pulse_width_s(&self) -> f64 {
        self.pulse_width_s
    }

    /// Fraction of each repetition period during which the pulse is on.
    pub fn duty_cycle(&self) -> f64 {
        self.pulse_width_s * self.rep_rate_hz
    }
}

/// Converter-output noise model.
///
/// The dominant background is parametric down-conversion created by the pump
/// inside the converter, so its rate either is quoted at a fixed operating
/// point or grows linearly from zero with pump power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Noise rate quoted at the operating point, independent of pump power.
    FixedRate { rate_hz: f64 },
    /// Noise rate proportional to pump power, passing through the origin.
    LinearInPump { slope_hz_per_w: f64 },
}

impl NoiseModel {
    /// Noise rate at the converter output for the given pump power.
    pub fn rate_at(&self, pump_power_w: f64) -> Result<f64, ModelError> {
        match *self {
            NoiseModel::FixedRate { rate_hz } => {
                require(
                    "rate_hz",
                    "non-negative and finite",
                    rate_hz,
                    rate_hz.is_finite() && rate_hz >= 0.0,
                )?;
                Ok(rate_hz)
            }
            NoiseModel::LinearInPump { slope_hz_per_w } => {
                require(
                    "slope_hz_per_w",
                    "non-negative and finite",
                    slope_hz_per_w,
                    slope_hz_per_w.is_finite() && slope_hz_per_w >= 0.0,
                )?;
                if !pump_power_w.is_finite() || pump_power_w < 0.0 {
                    return Err(ModelError::InvalidPumpPower(pump_power_w));
                }
                Ok(slope_hz_per_w * pump_power_w)
            }
        }
    }
}

/// Conversion-efficiency slot of the budget: either a directly measured
/// value, or the saturation curve evaluated at the pump power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Converter {
    Fixed(f64),
    Curve(ConverterParams),
}

impl Converter {
    pub fn efficiency(&self, pump_power_w: f64) -> Result<f64, ModelError> {
        match *self {
            Converter::Fixed(eta_c) => {
                require(
                    "eta_c",
                    "a fraction in [0, 1]",
                    eta_c,
                    eta_c.is_finite() && (0.0..=1.0).contains(&eta_c),
                )?;
                Ok(eta_c)
            }
            Converter::Curve(params) => conversion_efficiency(&params, pump_power_w),
        }
    }
}

/// Everything the analytic budget needs for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInputs {
    pub source: SourceModel,
    pub converter: Converter,
    pub pump_power_w: f64,
    pub noise: NoiseModel,
    pub fiber: FiberLink,
    pub detector: DetectorModel,
}

/// Result of evaluating the budget at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetResult {
    /// Conversion efficiency used for this evaluation.
    pub eta_c: f64,
    /// Fiber power transmittance.
    pub eta_l: f64,
    /// Signal rate arriving at the detector output.
    pub detected_signal_rate_hz: f64,
    /// Converter-noise rate arriving at the detector output (darks excluded).
    pub detected_noise_rate_hz: f64,
    /// Detector dark-count rate (not attenuated by the channel).
    pub dark_rate_hz: f64,
    /// Ratio of detected signal to detected background; `f64::INFINITY` when
    /// the channel has neither noise nor dark counts.
    pub snr: f64,
    /// Entanglement fidelity supported by this operating point, in [0.25, 1].
    pub fidelity: f64,
}

/// Evaluates the full analytic budget at one operating point.
///
/// The detected signal rate is `R_S * eta_c * eta_l * eta_d` and the detected
/// noise rate is `R_N * eta_l * eta_d`; dark counts add to the background
/// unattenuated. The SNR is their ratio and the fidelity follows from the
/// same three rates.
pub fn link_budget(inputs: &LinkInputs) -> Result<LinkBudgetResult, ModelError> {
    let eta_c = inputs.converter.efficiency(inputs.pump_power_w)?;
    let eta_l = fiber_transmittance(&inputs.fiber);
    let noise_rate_hz = inputs.noise.rate_at(inputs.pump_power_w)?;
    let eta_d = inputs.detector.efficiency();

    let detected_signal_rate_hz = inputs.source.signal_rate_hz() * eta_c * eta_l * eta_d;
    let detected_noise_rate_hz = noise_rate_hz * eta_l * eta_d;
    let dark_rate_hz = inputs.detector.dark_rate_hz();
    let background_rate_hz = detected_noise_rate_hz + dark_rate_hz;

    let (snr, fidelity) = if background_rate_hz == 0.0 {
        (f64::INFINITY, 1.0)
    } else {
        let snr = detected_signal_rate_hz / background_rate_hz;
        // Written in terms of the rates rather than via the SNR so that the
        // two published forms of the fidelity stay independently testable.
        let fidelity = 1.0
            - 3.0 * background_rate_hz / (2.0 * detected_signal_rate_hz + 4.0 * background_rate_hz);
        (snr, fidelity)
    };

    Ok(LinkBudgetResult {
        eta_c,
        eta_l,
        detected_signal_rate_hz,
        detected_noise_rate_hz,
        dark_rate_hz,
        snr,
        fidelity,
    })
}

/// Entanglement fidelity supported by a given SNR: `1 - 3 / (2 (SNR + 2))`.
///
/// Monotone increasing from 0.25 at SNR 0 toward 1; an infinite SNR maps to
/// exactly 1.
pub fn fidelity_from_snr(snr: f64) -> Result<f64, ModelError> {
    if snr.is_nan() || snr < 0.0 {
        return Err(ModelError::NegativeSnr(snr));
    }
    if snr.is_infinite() {
        return Ok(1.0);
    }
    Ok(1.0 - 3.0 / (2.0 * (snr + 2.0)))
}

/// One row of a pump-power sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpScanPoint {
    pub pump_power_w: f64,
    pub eta_c: f64,
    /// Converter-output noise rate at this pump power (before the fiber).
    pub noise_rate_hz: f64,
    pub snr: f64,
}

/// Pump-power sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpScan {
    pub points: Vec<PumpScanPoint>,
    /// Grid point with the highest SNR (the first one on ties).
    pub best_pump_power_w: f64,
}

/// Sweeps pump power over `pump_grid_w`, holding everything else fixed.
///
/// Because the conversion efficiency saturates while the noise keeps growing
/// linearly, the SNR peaks near (slightly below) the efficiency maximum and
/// rolls off beyond it; the returned `best_pump_power_w` locates that peak on
/// the grid.
pub fn scan_snr_vs_pump(inputs: &LinkInputs, pump_grid_w: &[f64]) -> Result<PumpScan, ModelError> {
    if pump_grid_w.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut points = Vec::with_capacity(pump_grid_w.len());
    let mut best = (pump_grid_w[0], f64::NEG_INFINITY);
    for &pump_power_w in pump_grid_w {
        let mut case = *inputs;
        case.pump_power_w = pump_power_w;
        let budget = link_budget(&case)?;
        let noise_rate_hz = case.noise.rate_at(pump_power_w)?;
        if budget.snr > best.1 {
            best = (pump_power_w, budget.snr);
        }
        points.push(PumpScanPoint {
            pump_power_w,
            eta_c: budget.eta_c,
            noise_rate_hz,
            snr: budget.snr,
        });
    }
    Ok(PumpScan {
        points,
        best_pump_power_w: best.0,
    })
}

/// One row of a fiber-length sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthScanPoint {
    pub length_km: f64,
    pub eta_l: f64,
    pub snr: f64,
    pub fidelity: f64,
}

/// Fiber-length sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthScan {
    pub points: Vec<LengthScanPoint>,
}

/// Sweeps fiber length over `length_grid_km`, holding everything else fixed.
pub fn scan_fidelity_vs_length(
    inputs: &LinkInputs,
    length_grid_km: &[f64],
) -> Result<LengthScan, ModelError> {
    if length_grid_km.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut points = Vec::with_capacity(length_grid_km.len());
    for &length_km in length_grid_km {
        let mut case = *inputs;
        case.fiber = FiberLink::new(length_km, inputs.fiber.attenuation_db_per_km())?;
        let budget = link_budget(&case)?;
        points.push(LengthScanPoint {
            length_km,
            eta_l: budget.eta_l,
            snr: budget.snr,
            fidelity: budget.fidelity,
        });
    }
    Ok(LengthScan { points })
}
