use atomsqueeze::optimize::{Blocks, Engine, OptimizeError};
use atomsqueeze::spin_io::SpinIoError;
use atomsqueeze::states;

const N: u32 = 20_000;

#[test]
fn lossy_uncorrelated_input_stays_above_the_standard_limit() {
    let e = Engine::with_blocks(Blocks::Bragg);
    for (rabi, dp) in [(6.0, Some(0.1)), (11.5, None)] {
        let ev = e.sensitivity_for(rabi, dp, N, 0.0).unwrap();
        assert!(ev.dphi * (N as f64).sqrt() >= 1.0, "Ω₀ = {rabi}: {}", ev.dphi);
    }
}

#[test]
fn twist_optimum_moves_smoothly_with_rabi_frequency() {
    let e = Engine::with_blocks(Blocks::Bragg);
    let mus: Vec<f64> =
        [8.0, 8.05, 8.1].iter().map(|&r| e.optimize_squeezing(r, Some(0.05), N).unwrap().twist).collect();
    for w in mus.windows(2) {
        assert!((w[1] - w[0]).abs() < 0.03 * w[0], "{mus:?}");
    }
}

#[test]
fn wider_packets_never_help() {
    let e = Engine::with_blocks(Blocks::Bragg);
    let rabi = 8.0;
    let mut last = 0.0;
    for dp in [None, Some(0.01), Some(0.05), Some(0.1)] {
        let d = e.optimize_squeezing(rabi, dp, N).unwrap().evaluation.dphi;
        assert!(d >= last * (1.0 - 1e-6), "dp = {dp:?}: {d} < {last}");
        last = d;
    }
}

#[test]
fn sweep_rows_respect_the_ideal_bound() {
    let e = Engine::with_blocks(Blocks::Bragg);
    let bound = states::ideal_minimum(N).unwrap().xi;
    let rows = e.sweep_rabi(&[6.0, 9.0], &[None, Some(0.05)], N);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r.is_ok(), "{}", r.error);
        assert!(r.gain_sqrt_n >= bound - 1e-6);
        assert!(r.mu_opt > 0.0 && r.xi_opt < 1.0);
        assert!((r.gain_db + 20.0 * r.gain_sqrt_n.log10()).abs() < 1e-12);
    }
    // Widths outermost, grid order inside.
    assert_eq!((rows[0].dp, rows[0].omega0), (0.0, 6.0));
    assert_eq!((rows[3].dp, rows[3].omega0), (0.05, 9.0));
}

#[test]
fn failed_points_are_recorded_without_aborting() {
    let e = Engine::with_blocks(Blocks::Bragg);
    let rows = e.sweep_rabi(&[0.5, 8.0], &[Some(0.4), Some(0.05)], N);
    assert_eq!(rows.len(), 4);
    // Δp = 0.4 clips too much of the packet; Ω₀ = 0.5 has no balancing root.
    assert!(rows[..2].iter().all(|r| !r.is_ok() && r.gain_sqrt_n.is_nan()));
    assert!(!rows[2].is_ok());
    assert!(rows[3].is_ok());
}

#[test]
fn too_wide_packet_is_rejected() {
    let e = Engine::with_blocks(Blocks::ideal());
    match e.sensitivity_for(0.0, Some(0.4), N, 0.0) {
        Err(OptimizeError::SpinIo(SpinIoError::QuadratureUnderflow { clipped, .. })) => assert!(clipped > 1e-6),
        other => panic!("{other:?}"),
    }
}
