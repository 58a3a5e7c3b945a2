//! Simulation and analysis toolkit for frequency-converted single-photon links.
//!
//! The crate models an optical channel in which single photons from a pulsed
//! source are wavelength-converted in a nonlinear waveguide, spectrally
//! filtered, sent through a fiber span, and detected on a single-photon
//! detector. It answers the questions that come up when budgeting such a
//! link: how much signal survives, how much pump-induced noise and detector
//! dark counting contaminate it, what signal-to-noise ratio results, and what
//! spin-photon entanglement fidelity that ratio supports.
//!
//! The functionality is split into four modules:
//!
//! - [`model`]: closed-form link-budget arithmetic (conversion efficiency,
//!   filter cascades, fiber transmittance, SNR, fidelity, parameter sweeps).
//! - [`coincidence`]: per-basis coincidence-count tables for the time-bin
//!   entangled state, visibilities, Bell-state fidelity, and Poisson sampling
//!   of measured tables.
//! - [`montecarlo`]: synthetic time-tag streams for pulsed signal plus
//!   continuous background, folded histograms, and the gated SNR estimator.
//! - [`fitting`]: least-squares recovery of the conversion-efficiency curve
//!   parameters and of the noise-versus-pump slope from measured points.
//!
//! All randomness is driven by explicit seeds, so every simulated quantity in
//! this crate is reproducible bit for bit.

pub mod coincidence;
pub mod fitting;
pub mod model;
pub mod montecarlo;

pub use coincidence::{Basis, BellSign, ChannelRates, CoincidenceTable, Visibilities};
pub use fitting::{CurvePoint, FitModel, FitResult};
pub use model::{
    Converter, ConverterParams, DetectorModel, FiberLink, FilterStage, LinkBudgetResult,
    LinkInputs, NoiseModel, SourceModel,
};
pub use montecarlo::{GateConfig, GateWindow, TimeTag, TimeTagStream};
