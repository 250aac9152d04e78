use atomsqueeze::bragg::{
    calibrate_adapted_mirror, calibrate_beam_splitter, extract_two_port_centered, propagate_columns, propagate_pulse,
    BeamSplitterSearch, Columns, GaussianPulse, MirrorSearch, QuasiMomentum, SolverSettings, DETECTED,
};
use atomsqueeze::spin_io::{QuadratureSettings, WavePacket};
use nalgebra::Matrix2;
use num_complex::Complex64;

fn splitter(rabi: f64) -> GaussianPulse {
    calibrate_beam_splitter(rabi, &SolverSettings::default(), &BeamSplitterSearch::default()).unwrap().pulse
}

#[test]
fn beam_splitter_duration_falls_with_rabi_frequency() {
    let settings = SolverSettings::default();
    let mut last = f64::INFINITY;
    for rabi in [5.0, 7.0, 9.0, 11.0] {
        let cal = calibrate_beam_splitter(rabi, &settings, &BeamSplitterSearch::default()).unwrap();
        assert!(cal.residual.abs() < 1e-6, "Ω₀ = {rabi}: residual {}", cal.residual);
        assert!((cal.transfer - cal.stay).abs() < 1e-6);
        assert!(cal.pulse.duration < last, "Ω₀ = {rabi}: τ = {}", cal.pulse.duration);
        last = cal.pulse.duration;
    }
}

#[test]
fn adapted_mirror_reflects_the_main_paths() {
    let cal = calibrate_adapted_mirror(&MirrorSearch::default(), &SolverSettings::default()).unwrap();
    assert!(cal.transfer > 0.95, "transfer {}", cal.transfer);
    assert!(!cal.bypass);
}

#[test]
fn mirror_bypass_is_passed_through() {
    let search = MirrorSearch { bypass: Some((12.0, 0.5)), ..MirrorSearch::default() };
    let cal = calibrate_adapted_mirror(&search, &SolverSettings::default()).unwrap();
    assert_eq!((cal.pulse.rabi_peak, cal.pulse.duration), (12.0, 0.5));
    assert!(cal.bypass);
    assert!(cal.transfer > 0.9);
}

#[test]
fn propagator_is_unitary_on_every_quadrature_node() {
    let settings = SolverSettings::default();
    let pulse = splitter(8.0);
    let packet = WavePacket::gaussian(0.1, &QuadratureSettings::default()).unwrap();
    for &(q, _) in packet.nodes.iter().step_by(3) {
        let a = propagate_pulse(&pulse, QuasiMomentum::new(q).unwrap(), &settings).unwrap();
        assert!(a.unitarity_defect() < 1e-6, "q = {q}: defect {}", a.unitarity_defect());
        assert!(a.max_singular_value() < 1.0 + 1e-6);
    }
}

#[test]
fn reversed_quasimomentum_swaps_the_ports() {
    let settings = SolverSettings::default();
    let pulse = splitter(7.0);
    let x = Matrix2::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    for q in [0.013, 0.08, 0.3] {
        let plus = propagate_columns(&pulse, QuasiMomentum::new(q).unwrap(), &settings, DETECTED).unwrap();
        let minus = propagate_columns(&pulse, QuasiMomentum::new(-q).unwrap(), &settings, DETECTED).unwrap();
        let zp = extract_two_port_centered(&plus);
        let zm = extract_two_port_centered(&minus);
        assert!((zm - x * zp * x).camax() < 1e-7, "q = {q}");
    }
}

#[test]
fn zero_strength_pulse_is_the_identity_when_centred() {
    let pulse = GaussianPulse::new(0.0, 1.3, 6.0).unwrap();
    let a = propagate_columns(&pulse, QuasiMomentum::new(0.2).unwrap(), &SolverSettings::default(), Columns::All).unwrap();
    let z = extract_two_port_centered(&a);
    assert!((z - Matrix2::identity()).camax() < 1e-14);
}

#[test]
fn entries_are_stable_under_refinement() {
    let settings = SolverSettings::default();
    let pulse = splitter(6.0);
    let q = QuasiMomentum::new(0.05).unwrap();
    let base = propagate_columns(&pulse, q, &settings, DETECTED).unwrap();
    let refined_settings = SolverSettings { m_max: settings.m_max + 4, integ_tol: 0.5 * settings.integ_tol, ..settings };
    let refined = propagate_columns(&pulse, q, &refined_settings, DETECTED).unwrap();
    let d = (extract_two_port_centered(&base) - extract_two_port_centered(&refined)).camax();
    assert!(d < 1e-6, "change {d}");
    assert!(base.refinement_delta.unwrap() < 1e-6);
}
