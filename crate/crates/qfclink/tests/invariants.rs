//! Property tests for the algebraic contracts that hold across modules:
//! bounds and monotonicity of the closed-form link model, consistency
//! between the coincidence-table route and the closed-form fidelity, and
//! statistical sanity of the gated estimator on simulated streams.

use proptest::prelude::*;
use qfclink::coincidence::{
    bell_fidelity, expected_table, fidelity_closed_form, visibility, Visibilities,
};
use qfclink::model::{cascade_insertion_loss_db, fidelity_from_snr, link_budget, FilterStage};
use qfclink::montecarlo::{
    fold_histogram, format_timetags, gated_snr, generate_stream, parse_timetags, GateConfig,
    GateWindow,
};
use qfclink::{
    Basis, BellSign, ChannelRates, Converter, ConverterParams, DetectorModel, FiberLink,
    LinkInputs, NoiseModel, SourceModel,
};

fn demo_source() -> SourceModel {
    SourceModel::new(32_700.0, 1.0e6, 300.0e-9).unwrap()
}

fn budget_inputs(
    signal_rate_hz: f64,
    noise_rate_hz: f64,
    fiber_length_km: f64,
    efficiency: f64,
    dark_rate_hz: f64,
) -> LinkInputs {
    LinkInputs {
        source: SourceModel::new(signal_rate_hz, 1.0e6, 300.0e-9).unwrap(),
        converter: Converter::Fixed(0.09),
        pump_power_w: 0.0,
        noise: NoiseModel::FixedRate {
            rate_hz: noise_rate_hz,
        },
        fiber: FiberLink::new(fiber_length_km, 0.16).unwrap(),
        detector: DetectorModel::new(efficiency, dark_rate_hz).unwrap(),
    }
}

proptest! {
    /// The conversion curve never leaves [0, eta_max] at any pump power.
    #[test]
    fn prop_conversion_efficiency_bounded(
        eta_max in 0.0..=1.0f64,
        alpha in 1.0..1.0e5f64,
        length_m in 1.0e-3..0.1f64,
        pump_w in 0.0..10.0f64,
    ) {
        let params = ConverterParams::new(length_m, alpha, eta_max).unwrap();
        let eta = qfclink::model::conversion_efficiency(&params, pump_w).unwrap();
        prop_assert!(eta >= 0.0);
        prop_assert!(eta <= eta_max);
    }

    /// Fidelity is strictly increasing in SNR and confined to [0.25, 1).
    #[test]
    fn prop_fidelity_monotone_in_snr(a in 0.0..1.0e6f64, b in 0.0..1.0e6f64) {
        let fa = fidelity_from_snr(a).unwrap();
        let fb = fidelity_from_snr(b).unwrap();
        prop_assert!((0.25..1.0).contains(&fa));
        prop_assert!((0.25..1.0).contains(&fb));
        if a < b {
            prop_assert!(fa < fb);
        } else if a > b {
            prop_assert!(fa > fb);
        }
    }

    /// The budget's fidelity and its SNR are two views of one number.
    #[test]
    fn prop_budget_fidelity_matches_snr_route(
        signal in 1.0..1.0e6f64,
        noise in 0.0..1.0e5f64,
        length_km in 0.0..200.0f64,
        efficiency in 0.01..1.0f64,
        dark in 0.0..1.0e4f64,
    ) {
        let budget = link_budget(&budget_inputs(signal, noise, length_km, efficiency, dark)).unwrap();
        let via_snr = fidelity_from_snr(budget.snr).unwrap();
        let tolerance = 1e-12 * via_snr.abs().max(1.0);
        prop_assert!(
            (budget.fidelity - via_snr).abs() <= tolerance,
            "fidelity {} vs snr route {}",
            budget.fidelity,
            via_snr
        );
    }

    /// Longer fiber never improves fidelity; with dark counts it strictly hurts.
    #[test]
    fn prop_fidelity_monotone_in_length(
        near_km in 0.0..300.0f64,
        extra_km in 0.001..300.0f64,
    ) {
        let far_km = near_km + extra_km;
        let near = link_budget(&budget_inputs(3.0e4, 150.0, near_km, 0.9, 54.0)).unwrap();
        let far = link_budget(&budget_inputs(3.0e4, 150.0, far_km, 0.9, 54.0)).unwrap();
        prop_assert!(far.fidelity < near.fidelity);
    }

    /// Attenuations compose: a dB then b dB equals (a+b) dB.
    #[test]
    fn prop_decibel_linear_duality(a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let split = qfclink::model::transmittance_from_db(a)
            * qfclink::model::transmittance_from_db(b);
        let joint = qfclink::model::transmittance_from_db(a + b);
        prop_assert!((split - joint).abs() <= 1e-12 * joint);
    }

    /// Insertion losses of a cascade add linearly in dB.
    #[test]
    fn prop_cascade_loss_is_sum(il in proptest::collection::vec(0.0..10.0f64, 1..6)) {
        let stages: Vec<FilterStage> = il
            .iter()
            .map(|&loss| {
                FilterStage::new("stage", loss, 20.0, qfclink::model::TargetBand::SpdcNoise)
                    .unwrap()
            })
            .collect();
        let expected: f64 = il.iter().sum();
        prop_assert!((cascade_insertion_loss_db(&stages) - expected).abs() <= 1e-9);
    }

    /// The table route (per-basis visibilities folded into the Bell-state
    /// formula) agrees with the closed-form fidelity to floating-point
    /// accuracy, and every intermediate quantity respects its bounds.
    #[test]
    fn prop_table_route_matches_closed_form(
        signal in 0.0..1.0e6f64,
        noise in 0.0..1.0e6f64,
        dark in 0.0..1.0e6f64,
    ) {
        prop_assume!(signal + noise + dark > 0.0);
        let rates = ChannelRates::new(signal, noise, dark).unwrap();
        let expected_total = signal + 2.0 * noise + 2.0 * dark;
        let mut components = [0.0f64; 3];
        for (slot, basis) in Basis::ALL.iter().enumerate() {
            let table = expected_table(*basis, &rates);
            prop_assert!(
                (table.total() - expected_total).abs() <= 1e-9 * expected_total.max(1.0),
                "basis {basis:?} total {} vs {expected_total}",
                table.total()
            );
            let v = visibility(&table).unwrap();
            prop_assert!(v.abs() <= 1.0 + 1e-12);
            components[slot] = v;
        }
        let vis = Visibilities {
            v_x: components[0],
            v_y: components[1],
            v_z: components[2],
        };
        let via_tables = bell_fidelity(&vis, BellSign::Plus);
        let closed = fidelity_closed_form(&rates).unwrap();
        prop_assert!(
            (via_tables - closed).abs() <= 1e-12 * closed.abs().max(1.0),
            "table route {via_tables} vs closed form {closed}"
        );
    }

    /// Visibility is a ratio of counts, so rescaling the whole table is a no-op.
    #[test]
    fn prop_visibility_scale_invariant(
        signal in 0.1..1.0e4f64,
        noise in 0.0..1.0e4f64,
        dark in 0.0..1.0e4f64,
        scale in 1.0e-3..1.0e6f64,
    ) {
        let rates = ChannelRates::new(signal, noise, dark).unwrap();
        for basis in Basis::ALL {
            let mut table = expected_table(basis, &rates);
            let v_base = visibility(&table).unwrap();
            table.n_pp *= scale;
            table.n_pm *= scale;
            table.n_mp *= scale;
            table.n_mm *= scale;
            let v_scaled = visibility(&table).unwrap();
            prop_assert!(
                (v_base - v_scaled).abs() <= 1e-12,
                "basis {basis:?}: {v_base} vs {v_scaled} at scale {scale}"
            );
        }
    }

    /// A background with no signal carries no correlations in any basis.
    #[test]
    fn prop_pure_background_visibilities_vanish(
        noise in 0.0..1.0e4f64,
        dark in 0.0..1.0e4f64,
    ) {
        prop_assume!(noise + dark > 0.0);
        let rates = ChannelRates::new(0.0, noise, dark).unwrap();
        for basis in Basis::ALL {
            let table = expected_table(basis, &rates);
            let v = visibility(&table).unwrap();
            prop_assert!(v.abs() <= 1e-12, "basis {basis:?} visibility {v}");
        }
    }
}

/// A noiseless source shows perfect correlations: (V_X, V_Y, V_Z) = (1, 1, -1)
/// with no floating-point slack, because the table entries cancel exactly.
#[test]
fn test_pure_signal_visibilities_exact() {
    let rates = ChannelRates::new(8192.0, 0.0, 0.0).unwrap();
    let expected = [1.0, 1.0, -1.0];
    for (basis, want) in Basis::ALL.into_iter().zip(expected) {
        let table = expected_table(basis, &rates);
        assert_eq!(visibility(&table).unwrap(), want, "basis {basis:?}");
    }
}

/// Round trip through the text format preserves everything the format
/// carries: the folded histogram and the gated SNR come out identical.
#[test]
fn test_stream_text_round_trip_preserves_analysis() {
    let source = demo_source();
    let stream = generate_stream(&source, 2600.0, 400.0, 100.0, 5.0, 424_242).unwrap();
    let parsed = parse_timetags(&format_timetags(&stream)).unwrap();
    assert_eq!(parsed.rep_period_ns(), stream.rep_period_ns());
    assert_eq!(parsed.len(), stream.len());
    for (a, b) in stream.tags().iter().zip(parsed.tags()) {
        assert_eq!(a.timestamp_ns, b.timestamp_ns);
    }
    let gate = GateConfig::for_source(&source).unwrap();
    assert_eq!(
        fold_histogram(&stream, &gate).unwrap().counts,
        fold_histogram(&parsed, &gate).unwrap().counts
    );
    let original = gated_snr(&stream, &gate).unwrap();
    let reparsed = gated_snr(&parsed, &gate).unwrap();
    assert_eq!(original.snr, reparsed.snr);
    assert_eq!(original.k_signal, reparsed.k_signal);
    assert_eq!(original.k_noise, reparsed.k_noise);
}

/// Identical seeds must reproduce the stream bit for bit; different seeds
/// must not.
#[test]
fn test_generation_determinism_across_calls() {
    let source = demo_source();
    let a = generate_stream(&source, 2600.0, 150.0, 54.0, 3.0, 7).unwrap();
    let b = generate_stream(&source, 2600.0, 150.0, 54.0, 3.0, 7).unwrap();
    assert_eq!(format_timetags(&a), format_timetags(&b));
    let c = generate_stream(&source, 2600.0, 150.0, 54.0, 3.0, 8).unwrap();
    assert_ne!(format_timetags(&a), format_timetags(&c));
}

/// The background is time-homogeneous, so which equal-width background gate
/// is read out must not matter beyond counting noise. Both estimates also
/// straddle the analytic expectation.
#[test]
fn test_equal_width_background_gates_agree() {
    let source = demo_source();
    let (signal, noise, dark) = (2600.0, 400.0, 100.0);
    let duration_s = 20.0;
    let stream = generate_stream(&source, signal, noise, dark, duration_s, 90_125).unwrap();

    let width_ns = 300;
    let signal_gate = GateWindow {
        offset_ns: 0,
        width_ns,
    };
    let gate_a = GateConfig::new(
        1_000,
        signal_gate,
        GateWindow {
            offset_ns: 500,
            width_ns,
        },
        10,
    )
    .unwrap();
    let gate_b = GateConfig::new(
        1_000,
        signal_gate,
        GateWindow {
            offset_ns: 610,
            width_ns,
        },
        10,
    )
    .unwrap();

    let result_a = gated_snr(&stream, &gate_a).unwrap();
    let result_b = gated_snr(&stream, &gate_b).unwrap();

    // Delta-method error bars for (k_S - k_N)/k_N with Poisson counts.
    let se = |k_s: f64, k_n: f64| (k_s / k_n) * (1.0 / k_s + 1.0 / k_n).sqrt();
    let se_a = se(result_a.k_signal as f64, result_a.k_noise as f64);
    let se_b = se(result_b.k_signal as f64, result_b.k_noise as f64);
    let gap = (result_a.snr - result_b.snr).abs();
    let bound = 3.0 * (se_a * se_a + se_b * se_b).sqrt();
    assert!(gap < bound, "gates disagree: {gap} vs bound {bound}");

    // Consistency with the generation model: CW background at rate r lands
    // in a gate of width w at rate r*w*f.
    let in_gate_background = (noise + dark) * source.duty_cycle();
    let predicted = signal / in_gate_background;
    for (result, se) in [(&result_a, se_a), (&result_b, se_b)] {
        assert!(
            (result.snr - predicted).abs() < 3.0 * se,
            "snr {} vs predicted {predicted} (se {se})",
            result.snr
        );
    }
}
