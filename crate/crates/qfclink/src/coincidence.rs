//! Coincidence-count tables for the time-bin spin-photon state.
//!
//! A joint spin-photon measurement in one basis produces a 2x2 table of
//! coincidence counts, indexed by the sign of each party's outcome. This
//! module builds the expected tables for a given mix of signal, converter
//! noise, and dark counts; reduces tables to visibilities; combines the three
//! basis visibilities into a Bell-state fidelity; and adds a Poisson sampling
//! layer so the whole chain can be exercised statistically.
//!
//! Two structural facts about the expected tables are worth knowing. First,
//! every basis table sums to the same total, `s + 2n + 2d`, so the bases see
//! identical statistics overall and differ only in how counts distribute.
//! Second, the X-basis noise pattern is asymmetric: noise lands in the
//! (+,+) and (-,+) cells only. That asymmetry is encoded here verbatim as
//! measured; it does not affect any visibility because the row sums that
//! enter the contrast cancel it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

/// Errors from coincidence-table arithmetic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoincidenceError {
    /// Per-window rates must be non-negative and finite.
    #[error("{name} must be non-negative and finite, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    /// Visibility of an empty table is undefined.
    #[error("coincidence table total is zero; visibility undefined")]
    ZeroTotal,
    /// The fidelity denominator vanishes when all rates are zero.
    #[error("fidelity denominator is zero (no signal, noise, or darks)")]
    ZeroDenominator,
    /// Table entries must be finite (and non-negative for sampling means).
    #[error("table entry {name} must be non-negative and finite, got {value}")]
    InvalidEntry { name: &'static str, value: f64 },
    /// A table was passed in a slot reserved for a different basis.
    #[error("expected a {expected:?}-basis table, got {got:?}")]
    BasisMismatch { expected: Basis, got: Basis },
}

/// Measurement basis for a joint spin-photon readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn label(&self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::Y => "Y",
            Basis::Z => "Z",
        }
    }
}

/// Coincidence counts for one basis, ordered (+,+), (+,-), (-,+), (-,-).
///
/// Entries are expected counts (non-negative reals) or sampled counts
/// (integer-valued); both share this representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceTable {
    pub basis: Basis,
    pub n_pp: f64,
    pub n_pm: f64,
    pub n_mp: f64,
    pub n_mm: f64,
}

impl CoincidenceTable {
    pub fn total(&self) -> f64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("n_pp", self.n_pp),
            ("n_pm", self.n_pm),
            ("n_mp", self.n_mp),
            ("n_mm", self.n_mm),
        ]
    }
}

/// Visibilities of the three measurement bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibilities {
    pub v_x: f64,
    pub v_y: f64,
    pub v_z: f64,
}

/// Which Bell state a fidelity refers to; the two differ only in the signs
/// with which the X and Y visibilities enter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellSign {
    Plus,
    Minus,
}

/// Detected counts per measurement window, split by origin.
///
/// `signal` is the entangled-photon coincidence budget after conversion,
/// channel, and detector efficiencies; `noise` is the converter background
/// after the same channel losses; `dark` is the detector's own floor. The
/// window length is whatever the caller accumulated over; only the mix
/// matters here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRates {
    signal: f64,
    noise: f64,
    dark: f64,
}

impl ChannelRates {
    pub fn new(signal: f64, noise: f64, dark: f64) -> Result<Self, CoincidenceError> {
        for (name, value) in [("signal", signal), ("noise", noise), ("dark", dark)] {
            if !value.is_finite() || value < 0.0 {
                return Err(CoincidenceError::InvalidRate { name, value });
            }
        }
        Ok(Self {
            signal,
            noise,
            dark,
        })
    }

    pub fn signal(&self) -> f64 {
        self.signal
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn dark(&self) -> f64 {
        self.dark
    }
}

/// Expected coincidence table for one basis.
///
/// The signal splits between the correlated cells of the basis, the noise
/// follows the measured per-basis pattern, and dark counts add `d/2` to every
/// cell uniformly. (Distributing the darks in the noise pattern instead would
/// change no visibility; the uniform reading is adopted.)
pub fn expected_table(basis: Basis, rates: &ChannelRates) -> CoincidenceTable {
    let s = rates.signal;
    let n = rates.noise;
    let d = rates.dark;
    let (n_pp, n_pm, n_mp, n_mm) = match basis {
        Basis::X => (
            s / 2.0 + n + d / 2.0,
            d / 2.0,
            n + d / 2.0,
            s / 2.0 + d / 2.0,
        ),
        Basis::Y => (
            s / 2.0 + n / 2.0 + d / 2.0,
            n / 2.0 + d / 2.0,
            n / 2.0 + d / 2.0,
            s / 2.0 + n / 2.0 + d / 2.0,
        ),
        Basis::Z => (
            n / 2.0 + d / 2.0,
            s / 2.0 + n / 2.0 + d / 2.0,
            s / 2.0 + n / 2.0 + d / 2.0,
            n / 2.0 + d / 2.0,
        ),
    };
    CoincidenceTable {
        basis,
        n_pp,
        n_pm,
        n_mp,
        n_mm,
    }
}

/// Normalized correlation contrast of one table, in [-1, 1].
pub fn visibility(table: &CoincidenceTable) -> Result<f64, CoincidenceError> {
    for (name, value) in table.entries() {
        if !value.is_finite() || value < 0.0 {
            return Err(CoincidenceError::InvalidEntry { name, value });
        }
    }
    let total = table.total();
    if total <= 0.0 {
        return Err(CoincidenceError::ZeroTotal);
    }
    Ok((table.n_pp - table.n_pm - table.n_mp + table.n_mm) / total)
}

/// Bell-state fidelity from the three basis visibilities.
///
/// For the plus state: `(1 + V_X + V_Y - V_Z) / 4`; the minus state flips the
/// signs of the X and Y terms. The raw formula value is returned without
/// clamping so callers can see when an estimate drifts out of the physical
/// range.
pub fn bell_fidelity(v: &Visibilities, sign: BellSign) -> f64 {
    match sign {
        BellSign::Plus => (1.0 + v.v_x + v.v_y - v.v_z) / 4.0,
        BellSign::Minus => (1.0 - v.v_x - v.v_y - v.v_z) / 4.0,
    }
}

/// Closed-form fidelity of the plus Bell state for a given count mix:
/// `1 - 3 (n + d) / (2 s + 4 (n + d))`.
///
/// Algebraically identical to building the three expected tables, reducing
/// them to visibilities, and applying [`bell_fidelity`]; kept as a separate
/// implementation so the two routes check each other.
pub fn fidelity_closed_form(rates: &ChannelRates) -> Result<f64, CoincidenceError> {
    let background = rates.noise + rates.dark;
    let denominator = 2.0 * rates.signal + 4.0 * background;
    if denominator <= 0.0 {
        return Err(CoincidenceError::ZeroDenominator);
    }
    Ok(1.0 - 3.0 * background / denominator)
}

/// Draws an integer-count table from an expected table, treating every cell
/// as an independent Poisson variable. Deterministic for a given seed.
pub fn sample_table(
    expected: &CoincidenceTable,
    rng_seed: u64,
) -> Result<CoincidenceTable, CoincidenceError> {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    sample_table_with(expected, &mut rng)
}

/// As [`sample_table`], but drawing from a caller-supplied generator so that
/// repeated sampling does not pay per-call seeding.
pub fn sample_table_with<R: rand::Rng>(
    expected: &CoincidenceTable,
    rng: &mut R,
) -> Result<CoincidenceTable, CoincidenceError> {
    let mut draw = |name: &'static str, mean: f64| -> Result<f64, CoincidenceError> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(CoincidenceError::InvalidEntry { name, value: mean });
        }
        if mean == 0.0 {
            return Ok(0.0);
        }
        let poisson =
            Poisson::new(mean).map_err(|_| CoincidenceError::InvalidEntry { name, value: mean })?;
        Ok(poisson.sample(rng))
    };
    Ok(CoincidenceTable {
        basis: expected.basis,
        n_pp: draw("n_pp", expected.n_pp)?,
        n_pm: draw("n_pm", expected.n_pm)?,
        n_mp: draw("n_mp", expected.n_mp)?,
        n_mm: draw("n_mm", expected.n_mm)?,
    })
}

/// A fidelity estimate with its first-order propagated uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub std_error: f64,
}

/// Estimates the Bell-state fidelity from one measured (or sampled) table per
/// basis.
///
/// The fidelity is the visibility route; the standard error treats each table
/// entry as an independent Poisson count, using the observed count as its own
/// variance estimate, and propagates to first order through the visibility
/// ratio and the Bell combination. Passing the expected tables themselves
/// reproduces the closed-form fidelity exactly.
pub fn estimate_fidelity(
    x_table: &CoincidenceTable,
    y_table: &CoincidenceTable,
    z_table: &CoincidenceTable,
    sign: BellSign,
) -> Result<FidelityEstimate, CoincidenceError> {
    for (expected, table) in Basis::ALL.iter().zip([x_table, y_table, z_table]) {
        if table.basis != *expected {
            return Err(CoincidenceError::BasisMismatch {
                expected: *expected,
                got: table.basis,
            });
        }
    }
    let (v_x, var_x) = visibility_with_variance(x_table)?;
    let (v_y, var_y) = visibility_with_variance(y_table)?;
    let (v_z, var_z) = visibility_with_variance(z_table)?;
    let fidelity = bell_fidelity(&Visibilities { v_x, v_y, v_z }, sign);
    // The three visibilities enter with coefficient 1/4 in magnitude
    // regardless of sign, so their variances add with weight 1/16.
    let std_error = ((var_x + var_y + var_z) / 16.0).sqrt();
    Ok(FidelityEstimate {
        fidelity,
        std_error,
    })
}

/// Visibility plus its delta-method variance under independent Poisson cells.
///
/// For V = D/T with D the signed and T the plain sum of the four cells,
/// dV/dn_i = (s_i T - D) / T^2 with s_i the cell's sign in D; each cell
/// contributes its observed count as the variance estimate.
fn visibility_with_variance(table: &CoincidenceTable) -> Result<(f64, f64), CoincidenceError> {
    let v = visibility(table)?;
    let total = table.total();
    let signed = table.n_pp - table.n_pm - table.n_mp + table.n_mm;
    let mut variance = 0.0;
    for (sign, count) in [
        (1.0, table.n_pp),
        (-1.0, table.n_pm),
        (-1.0, table.n_mp),
        (1.0, table.n_mm),
    ] {
        let gradient = (sign * total - signed) / (total * total);
        variance += gradient * gradient * count;
    }
    Ok((v, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    fn rates(s: f64, n: f64, d: f64) -> ChannelRates {
        ChannelRates::new(s, n, d).unwrap()
    }

    #[test]
    fn test_expected_table_pure_signal_z() {
        let table = expected_table(Basis::Z, &rates(1000.0, 0.0, 0.0));
        assert_eq!(
            (table.n_pp, table.n_pm, table.n_mp, table.n_mm),
            (0.0, 500.0, 500.0, 0.0)
        );
    }

    #[test]
    fn test_expected_table_pure_darks_uniform() {
        let table = expected_table(Basis::X, &rates(0.0, 0.0, 200.0));
        assert_eq!(
            (table.n_pp, table.n_pm, table.n_mp, table.n_mm),
            (100.0, 100.0, 100.0, 100.0)
        );
    }

    #[test]
    fn test_expected_table_x_noise_pattern() {
        // The X-basis noise is asymmetric: it feeds the (+,+) and (-,+)
        // cells only. Encoded as measured.
        let table = expected_table(Basis::X, &rates(0.0, 80.0, 0.0));
        assert_eq!(
            (table.n_pp, table.n_pm, table.n_mp, table.n_mm),
            (80.0, 0.0, 80.0, 0.0)
        );
    }

    #[test]
    fn test_all_tables_share_the_same_total() {
        let r = rates(5000.0, 1500.0, 500.0);
        let expected_total = 5000.0 + 2.0 * 1500.0 + 2.0 * 500.0;
        for basis in Basis::ALL {
            let table = expected_table(basis, &r);
            assert_close(table.total(), expected_total, 1e-9);
        }
    }

    #[test]
    fn test_visibility_perfect_correlation() {
        let table = CoincidenceTable {
            basis: Basis::X,
            n_pp: 500.0,
            n_pm: 0.0,
            n_mp: 0.0,
            n_mm: 500.0,
        };
        assert_eq!(visibility(&table).unwrap(), 1.0);
    }

    #[test]
    fn test_visibility_z_example() {
        let table = expected_table(Basis::Z, &rates(1000.0, 100.0, 0.0));
        assert_close(visibility(&table).unwrap(), -1000.0 / 1200.0, 1e-15);
    }

    #[test]
    fn test_visibility_uniform_table_is_zero() {
        let table = CoincidenceTable {
            basis: Basis::Y,
            n_pp: 42.0,
            n_pm: 42.0,
            n_mp: 42.0,
            n_mm: 42.0,
        };
        assert_eq!(visibility(&table).unwrap(), 0.0);
    }

    #[test]
    fn test_visibility_zero_total_errors() {
        let table = CoincidenceTable {
            basis: Basis::X,
            n_pp: 0.0,
            n_pm: 0.0,
            n_mp: 0.0,
            n_mm: 0.0,
        };
        assert!(matches!(
            visibility(&table),
            Err(CoincidenceError::ZeroTotal)
        ));
    }

    #[test]
    fn test_pure_signal_visibilities_are_exact() {
        let r = rates(777.0, 0.0, 0.0);
        assert_eq!(visibility(&expected_table(Basis::X, &r)).unwrap(), 1.0);
        assert_eq!(visibility(&expected_table(Basis::Y, &r)).unwrap(), 1.0);
        assert_eq!(visibility(&expected_table(Basis::Z, &r)).unwrap(), -1.0);
    }

    #[test]
    fn test_pure_background_visibilities_vanish() {
        let r = rates(0.0, 300.0, 100.0);
        for basis in Basis::ALL {
            assert_eq!(visibility(&expected_table(basis, &r)).unwrap(), 0.0);
        }
    }

    #[test]
    fn test_bell_fidelity_ideal_states() {
        let ideal_plus = Visibilities {
            v_x: 1.0,
            v_y: 1.0,
            v_z: -1.0,
        };
        assert_eq!(bell_fidelity(&ideal_plus, BellSign::Plus), 1.0);
        let ideal_minus = Visibilities {
            v_x: -1.0,
            v_y: -1.0,
            v_z: -1.0,
        };
        assert_eq!(bell_fidelity(&ideal_minus, BellSign::Minus), 1.0);
    }

    #[test]
    fn test_bell_fidelity_fully_mixed() {
        let mixed = Visibilities {
            v_x: 0.0,
            v_y: 0.0,
            v_z: 0.0,
        };
        assert_eq!(bell_fidelity(&mixed, BellSign::Plus), 0.25);
        assert_eq!(bell_fidelity(&mixed, BellSign::Minus), 0.25);
    }

    #[test]
    fn test_fidelity_closed_form_limits() {
        assert_eq!(fidelity_closed_form(&rates(123.0, 0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(fidelity_closed_form(&rates(0.0, 55.0, 0.0)).unwrap(), 0.25);
        assert!(matches!(
            fidelity_closed_form(&rates(0.0, 0.0, 0.0)),
            Err(CoincidenceError::ZeroDenominator)
        ));
    }

    #[test]
    fn test_fidelity_closed_form_operating_point() {
        // A signal-to-background ratio equal to the measured channel's SNR
        // supports a fidelity of about 90.5%.
        let f = fidelity_closed_form(&rates(13.74, 0.6, 0.4)).unwrap();
        assert_close(f, 0.905, 5e-4);
    }

    #[test]
    fn test_table_route_matches_closed_form() {
        let cases = [
            (5000.0, 1500.0, 500.0),
            (100.0, 0.0, 0.0),
            (0.0, 10.0, 5.0),
            (2648.7, 138.6, 54.0),
        ];
        for (s, n, d) in cases {
            let r = rates(s, n, d);
            let v = Visibilities {
                v_x: visibility(&expected_table(Basis::X, &r)).unwrap(),
                v_y: visibility(&expected_table(Basis::Y, &r)).unwrap(),
                v_z: visibility(&expected_table(Basis::Z, &r)).unwrap(),
            };
            let via_tables = bell_fidelity(&v, BellSign::Plus);
            let direct = fidelity_closed_form(&r).unwrap();
            assert!((via_tables - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn test_sample_table_zero_means() {
        let zero = expected_table(Basis::X, &rates(0.0, 0.0, 0.0));
        let sample = sample_table(&zero, 99).unwrap();
        assert_eq!(sample.total(), 0.0);
    }

    #[test]
    fn test_sample_table_deterministic() {
        let expected = expected_table(Basis::Y, &rates(5000.0, 1500.0, 500.0));
        let a = sample_table(&expected, 4242).unwrap();
        let b = sample_table(&expected, 4242).unwrap();
        assert_eq!(a, b);
        let c = sample_table(&expected, 4243).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn test_sample_table_large_means_stay_close() {
        let expected = CoincidenceTable {
            basis: Basis::Z,
            n_pp: 1e6,
            n_pm: 1e6,
            n_mp: 1e6,
            n_mm: 1e6,
        };
        let sample = sample_table(&expected, 7).unwrap();
        for (_, value) in sample.entries() {
            assert!((value - 1e6).abs() <= 5.0 * 1e3, "value {value}");
            assert_eq!(value.fract(), 0.0);
        }
    }

    #[test]
    fn test_sample_table_rejects_bad_means() {
        let bad = CoincidenceTable {
            basis: Basis::X,
            n_pp: f64::NAN,
            n_pm: 0.0,
            n_mp: 0.0,
            n_mm: 0.0,
        };
        assert!(sample_table(&bad, 1).is_err());
    }

    #[test]
    fn test_estimate_on_expected_tables_is_exact() {
        let r = rates(5000.0, 1500.0, 500.0);
        let estimate = estimate_fidelity(
            &expected_table(Basis::X, &r),
            &expected_table(Basis::Y, &r),
            &expected_table(Basis::Z, &r),
            BellSign::Plus,
        )
        .unwrap();
        let direct = fidelity_closed_form(&r).unwrap();
        assert!((estimate.fidelity - direct).abs() <= 1e-12);
        assert!(estimate.std_error > 0.0);
    }

    #[test]
    fn test_estimate_asymptotics_in_signal() {
        let r = rates(5e6, 1.5, 0.5);
        let estimate = estimate_fidelity(
            &expected_table(Basis::X, &r),
            &expected_table(Basis::Y, &r),
            &expected_table(Basis::Z, &r),
            BellSign::Plus,
        )
        .unwrap();
        assert!(estimate.fidelity > 0.999_999);
        assert!(estimate.std_error < 1e-3);
    }

    #[test]
    fn test_estimate_rejects_misordered_tables() {
        let r = rates(100.0, 10.0, 1.0);
        let x = expected_table(Basis::X, &r);
        let z = expected_table(Basis::Z, &r);
        assert!(matches!(
            estimate_fidelity(&z, &x, &x, BellSign::Plus),
            Err(CoincidenceError::BasisMismatch { .. })
        ));
    }

    #[test]
    fn test_estimator_calibration_against_sampling() {
        use rand::SeedableRng;
        // Totals above 1e4 per basis; the empirical mean over many sampled
        // tables must sit within three standard errors of the mean from the
        // closed-form value, and the bias must stay below one per-sample
        // standard error.
        let r = rates(8000.0, 1000.0, 500.0);
        let truth = fidelity_closed_form(&r).unwrap();
        let expected: Vec<CoincidenceTable> =
            Basis::ALL.iter().map(|&b| expected_table(b, &r)).collect();
        let per_sample_se =
            estimate_fidelity(&expected[0], &expected[1], &expected[2], BellSign::Plus)
                .unwrap()
                .std_error;

        let runs = 10_000;
        let mut rng = ChaCha12Rng::seed_from_u64(20_260_822);
        let mut sum = 0.0;
        for _ in 0..runs {
            let x = sample_table_with(&expected[0], &mut rng).unwrap();
            let y = sample_table_with(&expected[1], &mut rng).unwrap();
            let z = sample_table_with(&expected[2], &mut rng).unwrap();
            sum += estimate_fidelity(&x, &y, &z, BellSign::Plus)
                .unwrap()
                .fidelity;
        }
        let mean = sum / runs as f64;
        let se_of_mean = per_sample_se / (runs as f64).sqrt();
        assert!(
            (mean - truth).abs() <= 3.0 * se_of_mean,
            "mean {mean} vs truth {truth}, se of mean {se_of_mean}"
        );
        assert!((mean - truth).abs() < per_sample_se);
    }
}
