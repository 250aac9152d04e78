//! Gaussian Bragg pulses on a truncated momentum ladder.
//!
//! Units: momenta in ħk, energies and frequencies in the recoil frequency
//! ω_r = ħk²/2m, times in 1/ω_r, ħ = 1. In these units the kinetic energy of
//! the ladder state with momentum `m + q` is `(m + q)²`.
//!
//! The resonant third-order ladder consists of the odd multiples of ħk; the
//! lattice couples neighbours two units apart. Channel 1 is `m = +3`, channel
//! 2 is `m = -3`.

mod cache;
mod calibrate;

pub use cache::{BlockCache, CachedBlock};
pub use calibrate::{
    balance_residual, calibrate_adapted_mirror, calibrate_beam_splitter, mirror_objective,
    BeamSplitterSearch, MirrorSearch, PulseCalibration, PulseKind,
};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{self, OdeError, Tolerances};

/// Ladder index of the detected channel 1.
pub const CHANNEL_1: i32 = 3;
/// Ladder index of the detected channel 2.
pub const CHANNEL_2: i32 = -3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BraggError {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("invalid momentum ladder: m_max = {0} (must be odd and >= 3)")]
    InvalidLadder(i32),
    #[error("quasimomentum {0} outside (-1, 1]")]
    InvalidQuasiMomentum(f64),
    #[error("pulse propagation did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("no root of the balance residual in the bracket [{lo}, {hi}]: {reason}")]
    NoRootInBracket { lo: f64, hi: f64, reason: String },
    #[error("empty search box")]
    EmptySearchBox,
}

impl From<OdeError> for BraggError {
    fn from(e: OdeError) -> Self {
        BraggError::ConvergenceFailure(e.to_string())
    }
}

/// Odd momenta `-m_max, ..., -1, +1, ..., +m_max` (units ħk).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentumLadder {
    m_max: i32,
}

impl MomentumLadder {
    pub fn new(m_max: i32) -> Result<Self, BraggError> {
        if m_max < 3 || m_max % 2 == 0 {
            return Err(BraggError::InvalidLadder(m_max));
        }
        Ok(Self { m_max })
    }

    pub fn m_max(&self) -> i32 {
        self.m_max
    }

    pub fn len(&self) -> usize {
        (self.m_max + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Momenta in basis order (ascending).
    pub fn momenta(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.len() as i32).map(move |i| -self.m_max + 2 * i)
    }

    pub fn index_of(&self, m: i32) -> Option<usize> {
        if m.abs() > self.m_max || m % 2 == 0 {
            return None;
        }
        Some(((m + self.m_max) / 2) as usize)
    }

    pub fn widened(&self, by: i32) -> Self {
        Self { m_max: self.m_max + by }
    }
}

/// Quasimomentum `q ∈ (-1, 1]` in units of ħk.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QuasiMomentum(f64);

impl QuasiMomentum {
    pub const ZERO: QuasiMomentum = QuasiMomentum(0.0);

    pub fn new(q: f64) -> Result<Self, BraggError> {
        if q.is_finite() && q > -1.0 && q <= 1.0 {
            Ok(Self(q))
        } else {
            Err(BraggError::InvalidQuasiMomentum(q))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Gaussian pulse `Ω(t) = Ω₀ exp(-t²/2τ²)` integrated over `[-sτ, +sτ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    /// Peak two-photon Rabi frequency Ω₀ (units ω_r).
    pub rabi_peak: f64,
    /// Gaussian width τ (units 1/ω_r).
    pub duration: f64,
    /// Half-window in units of τ.
    pub window_factor: f64,
}

impl GaussianPulse {
    pub const DEFAULT_WINDOW: f64 = 6.0;

    pub fn new(rabi_peak: f64, duration: f64, window_factor: f64) -> Result<Self, BraggError> {
        let p = Self { rabi_peak, duration, window_factor };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BraggError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(BraggError::InvalidPulse(format!("duration {} must be > 0", self.duration)));
        }
        if !(self.rabi_peak >= 0.0) || !self.rabi_peak.is_finite() {
            return Err(BraggError::InvalidPulse(format!(
                "peak Rabi frequency {} must be >= 0",
                self.rabi_peak
            )));
        }
        if !(self.window_factor >= 4.0) {
            return Err(BraggError::InvalidPulse(format!(
                "window factor {} must be >= 4",
                self.window_factor
            )));
        }
        Ok(())
    }

    pub fn rabi_at(&self, t: f64) -> f64 {
        let x = t / self.duration;
        self.rabi_peak * (-0.5 * x * x).exp()
    }

    pub fn half_window(&self) -> f64 {
        self.window_factor * self.duration
    }
}

/// Numerical settings of the pulse solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Initial ladder truncation (odd).
    pub m_max: i32,
    /// Largest truncation tried before giving up on convergence.
    pub max_m_max: i32,
    /// Relative (and absolute) integrator tolerance.
    pub integ_tol: f64,
    /// Allowed change of the `A_{±3,±3}` entries under `m_max → m_max + 4`
    /// and halved integrator tolerance.
    pub conv_tol: f64,
    /// Run the refinement test on every propagation.
    pub check_convergence: bool,
    pub max_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            m_max: 11,
            max_m_max: 23,
            integ_tol: 1e-10,
            conv_tol: 1e-6,
            check_convergence: true,
            max_steps: 2_000_000,
        }
    }
}

impl SolverSettings {
    pub fn ladder(&self) -> Result<MomentumLadder, BraggError> {
        MomentumLadder::new(self.m_max)
    }

    pub fn validate(&self) -> Result<(), BraggError> {
        MomentumLadder::new(self.m_max)?;
        MomentumLadder::new(self.max_m_max)?;
        if self.max_m_max < self.m_max {
            return Err(BraggError::InvalidLadder(self.max_m_max));
        }
        if !(self.integ_tol > 0.0) || !(self.conv_tol > 0.0) {
            return Err(BraggError::ConvergenceFailure("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// Bragg Hamiltonian at fixed quasimomentum in ladder order:
/// `H_mm = (m+q)²`, `H_{m,m±2} = Ω/2`.
pub fn build_hamiltonian(q: QuasiMomentum, omega: f64, ladder: &MomentumLadder) -> DMatrix<f64> {
    let n = ladder.len();
    let mut h = DMatrix::zeros(n, n);
    for (i, m) in ladder.momenta().enumerate() {
        let p = m as f64 + q.value();
        h[(i, i)] = p * p;
        if i + 1 < n {
            h[(i, i + 1)] = 0.5 * omega;
            h[(i + 1, i)] = 0.5 * omega;
        }
    }
    h
}

/// Propagator `A(q) = U(+sτ, -sτ)` of one pulse on the ladder (lab frame).
///
/// Only the columns listed in `columns` (initial momenta) are stored; a full
/// propagation keeps every ladder column.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionAmplitudes {
    pub q: QuasiMomentum,
    pub ladder: MomentumLadder,
    /// Initial momenta of the stored columns, ascending.
    pub columns: Vec<i32>,
    /// `ladder.len() × columns.len()` amplitudes.
    pub matrix: DMatrix<Complex64>,
    /// Half-window `sτ` of the pulse that produced the matrix.
    pub half_window: f64,
    /// Largest change of the `A_{±3,±3}` entries seen in the refinement test
    /// (`None` when the test was not run).
    pub refinement_delta: Option<f64>,
}

impl TransitionAmplitudes {
    fn column_of(&self, m_prime: i32) -> usize {
        self.columns
            .iter()
            .position(|&c| c == m_prime)
            .unwrap_or_else(|| panic!("column {m_prime} was not propagated"))
    }

    /// `A_{m,m'}`: amplitude to end in `m` having started in `m'`.
    pub fn amplitude(&self, m: i32, m_prime: i32) -> Complex64 {
        let i = self.ladder.index_of(m).expect("momentum not on ladder");
        self.matrix[(i, self.column_of(m_prime))]
    }

    pub fn is_complete(&self) -> bool {
        self.columns.len() == self.ladder.len()
    }

    fn kinetic(&self, m: i32) -> f64 {
        let p = m as f64 + self.q.value();
        p * p
    }

    /// Amplitudes with the free kinetic evolution of the two half-windows
    /// removed, i.e. the propagator in the interaction picture referenced to
    /// the pulse centre. Equals the identity for a pulse of zero strength.
    pub fn centered(&self) -> DMatrix<Complex64> {
        let rows: Vec<f64> = self.ladder.momenta().map(|m| self.kinetic(m)).collect();
        let t = self.half_window;
        DMatrix::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| {
            let e = rows[i] + self.kinetic(self.columns[j]);
            Complex64::from_polar(1.0, e * t) * self.matrix[(i, j)]
        })
    }

    /// `max |A†A - I|` over the stored columns.
    pub fn unitarity_defect(&self) -> f64 {
        let k = self.matrix.ncols();
        let g = self.matrix.adjoint() * &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn max_singular_value(&self) -> f64 {
        self.matrix.clone().singular_values().max()
    }
}

/// Detected two-port block `[[A_{+3,+3}, A_{+3,-3}], [A_{-3,+3}, A_{-3,-3}]]`.
pub fn extract_two_port(amps: &TransitionAmplitudes) -> Matrix2<Complex64> {
    Matrix2::new(
        amps.amplitude(CHANNEL_1, CHANNEL_1),
        amps.amplitude(CHANNEL_1, CHANNEL_2),
        amps.amplitude(CHANNEL_2, CHANNEL_1),
        amps.amplitude(CHANNEL_2, CHANNEL_2),
    )
}

/// Two-port block of the centred (interaction-picture) propagator.
pub fn extract_two_port_centered(amps: &TransitionAmplitudes) -> Matrix2<Complex64> {
    let mut z = extract_two_port(amps);
    let e1 = amps.kinetic(CHANNEL_1);
    let e2 = amps.kinetic(CHANNEL_2);
    let t = amps.half_window;
    let e = [e1, e2];
    for i in 0..2 {
        for j in 0..2 {
            z[(i, j)] *= Complex64::from_polar(1.0, (e[i] + e[j]) * t);
        }
    }
    z
}

/// Which initial momenta to propagate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns<'a> {
    All,
    Only(&'a [i32]),
}

/// Columns needed for the detected two-port block.
pub const DETECTED: Columns<'static> = Columns::Only(&[CHANNEL_2, CHANNEL_1]);

/// Integrate `i dU/dt = H(t) U` for one pulse at fixed `m_max` and tolerance.
///
/// The equation is solved in the interaction picture of the kinetic term, which
/// leaves only the pulse-localized coupling for the integrator, and the result
/// is transformed back to the lab frame.
pub fn propagate_fixed(
    pulse: &GaussianPulse,
    q: QuasiMomentum,
    ladder: &MomentumLadder,
    columns: Columns<'_>,
    integ_tol: f64,
    max_steps: usize,
) -> Result<TransitionAmplitudes, BraggError> {
    pulse.validate()?;
    if !(integ_tol > 0.0) {
        return Err(BraggError::ConvergenceFailure("integrator tolerance must be > 0".into()));
    }
    let n = ladder.len();
    let mut cols: Vec<i32> = match columns {
        Columns::All => ladder.momenta().collect(),
        Columns::Only(c) => c.to_vec(),
    };
    cols.sort_unstable();
    cols.dedup();
    let col_idx: Vec<usize> = cols
        .iter()
        .map(|&m| ladder.index_of(m).ok_or(BraggError::InvalidLadder(ladder.m_max())))
        .collect::<Result<_, _>>()?;
    let k = cols.len();

    let energies: Vec<f64> = ladder
        .momenta()
        .map(|m| {
            let p = m as f64 + q.value();
            p * p
        })
        .collect();
    // Coupling between ladder neighbours i and i+1 rotates at E_i - E_{i+1}.
    let detunings: Vec<f64> = energies.windows(2).map(|w| w[0] - w[1]).collect();
    let t_half = pulse.half_window();

    // Row-major n × k block of U, starting from the selected identity columns.
    let mut u = vec![Complex64::default(); n * k];
    for (c, &i) in col_idx.iter().enumerate() {
        u[i * k + c] = Complex64::new(1.0, 0.0);
    }

    if pulse.rabi_peak > 0.0 {
        let mut coupling = vec![Complex64::default(); n.saturating_sub(1)];
        let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            let half_rabi = 0.5 * pulse.rabi_at(t);
            for (c, d) in coupling.iter_mut().zip(&detunings) {
                *c = Complex64::from_polar(half_rabi, d * t);
            }
            for i in 0..n {
                let row = &mut dy[i * k..(i + 1) * k];
                let below = if i > 0 { Some((coupling[i - 1].conj(), &y[(i - 1) * k..i * k])) } else { None };
                let above = if i + 1 < n { Some((coupling[i], &y[(i + 1) * k..(i + 2) * k])) } else { None };
                for (c, r) in row.iter_mut().enumerate() {
                    let mut acc = Complex64::default();
                    if let Some((cb, src)) = below {
                        acc += cb * src[c];
                    }
                    if let Some((ca, src)) = above {
                        acc += ca * src[c];
                    }
                    // -i · acc
                    *r = Complex64::new(acc.im, -acc.re);
                }
            }
        };
        let tol = Tolerances { rtol: integ_tol, atol: integ_tol, max_steps, h_max: 0.5 * pulse.duration };
        ode::integrate(rhs, -t_half, t_half, &mut u, tol)?;
    }

    let matrix = DMatrix::from_fn(n, k, |i, c| {
        let j = col_idx[c];
        Complex64::from_polar(1.0, -(energies[i] + energies[j]) * t_half) * u[i * k + c]
    });
    Ok(TransitionAmplitudes {
        q,
        ladder: *ladder,
        columns: cols,
        matrix,
        half_window: t_half,
        refinement_delta: None,
    })
}

/// Largest change among the four detected-channel entries.
pub fn channel_entry_delta(a: &TransitionAmplitudes, b: &TransitionAmplitudes) -> f64 {
    let mut worst: f64 = 0.0;
    for &m in &[CHANNEL_1, CHANNEL_2] {
        for &mp in &[CHANNEL_1, CHANNEL_2] {
            worst = worst.max((a.amplitude(m, mp) - b.amplitude(m, mp)).norm());
        }
    }
    worst
}

/// Propagate every ladder column of one pulse, escalating the truncation
/// until the detected entries are stable under `m_max → m_max + 4` and a
/// halved tolerance.
pub fn propagate_pulse(
    pulse: &GaussianPulse,
    q: QuasiMomentum,
    settings: &SolverSettings,
) -> Result<TransitionAmplitudes, BraggError> {
    propagate_columns(pulse, q, settings, Columns::All)
}

/// [`propagate_pulse`] restricted to selected initial momenta (which must
/// include ±3 when the refinement test is enabled).
pub fn propagate_columns(
    pulse: &GaussianPulse,
    q: QuasiMomentum,
    settings: &SolverSettings,
    columns: Columns<'_>,
) -> Result<TransitionAmplitudes, BraggError> {
    settings.validate()?;
    let mut ladder = settings.ladder()?;
    if !settings.check_convergence {
        return propagate_fixed(pulse, q, &ladder, columns, settings.integ_tol, settings.max_steps);
    }
    // The refined run only needs the detected columns.
    let mut last_delta = f64::NAN;
    while ladder.m_max() <= settings.max_m_max {
        let base = propagate_fixed(pulse, q, &ladder, columns, settings.integ_tol, settings.max_steps)?;
        let refined = propagate_fixed(
            pulse,
            q,
            &ladder.widened(4),
            DETECTED,
            0.5 * settings.integ_tol,
            settings.max_steps,
        )?;
        let delta = channel_entry_delta(&base, &refined);
        if delta < settings.conv_tol {
            return Ok(TransitionAmplitudes { refinement_delta: Some(delta), ..base });
        }
        last_delta = delta;
        ladder = ladder.widened(4);
    }
    Err(BraggError::ConvergenceFailure(format!(
        "detected entries still change by {last_delta:.3e} at m_max = {}",
        settings.max_m_max
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder(m: i32) -> MomentumLadder {
        MomentumLadder::new(m).unwrap()
    }

    #[test]
    fn ladder_layout() {
        let l = ladder(3);
        assert_eq!(l.momenta().collect::<Vec<_>>(), vec![-3, -1, 1, 3]);
        assert_eq!(l.index_of(-3), Some(0));
        assert_eq!(l.index_of(3), Some(3));
        assert_eq!(l.index_of(2), None);
        assert_eq!(l.index_of(5), None);
        assert!(MomentumLadder::new(4).is_err());
        assert!(MomentumLadder::new(1).is_err());
        let l = ladder(11);
        let m: Vec<i32> = l.momenta().collect();
        assert!(m.windows(2).all(|w| w[1] - w[0] == 2));
        assert_eq!(m.first(), Some(&-11));
    }

    #[test]
    fn quasimomentum_range() {
        assert!(QuasiMomentum::new(1.0).is_ok());
        assert!(QuasiMomentum::new(-1.0).is_err());
        assert!(QuasiMomentum::new(f64::NAN).is_err());
    }

    #[test]
    fn free_hamiltonian_at_rest() {
        let h = build_hamiltonian(QuasiMomentum::ZERO, 0.0, &ladder(3));
        let diag: Vec<f64> = (0..4).map(|i| h[(i, i)]).collect();
        assert_eq!(diag, vec![9.0, 1.0, 1.0, 9.0]);
        assert_eq!(h.iter().filter(|x| **x != 0.0).count(), 4);
    }

    #[test]
    fn free_hamiltonian_shifted() {
        let h = build_hamiltonian(QuasiMomentum::new(0.5).unwrap(), 0.0, &ladder(3));
        let diag: Vec<f64> = (0..4).map(|i| h[(i, i)]).collect();
        assert_eq!(diag, vec![6.25, 0.25, 2.25, 12.25]);
    }

    #[test]
    fn coupling_is_half_rabi() {
        let h = build_hamiltonian(QuasiMomentum::ZERO, 2.0, &ladder(5));
        for i in 0..5 {
            assert_eq!(h[(i, i + 1)], 1.0);
            assert_eq!(h[(i + 1, i)], 1.0);
        }
        assert_eq!(h[(0, 2)], 0.0);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn rejects_bad_pulses() {
        assert!(GaussianPulse::new(5.0, 0.0, 6.0).is_err());
        assert!(GaussianPulse::new(5.0, -1.0, 6.0).is_err());
        assert!(GaussianPulse::new(-1.0, 1.0, 6.0).is_err());
        assert!(GaussianPulse::new(5.0, 1.0, 3.0).is_err());
        let bad = GaussianPulse { rabi_peak: 5.0, duration: 0.0, window_factor: 6.0 };
        let err = propagate_pulse(&bad, QuasiMomentum::ZERO, &SolverSettings::default());
        assert!(matches!(err, Err(BraggError::InvalidPulse(_))));
    }

    #[test]
    fn zero_strength_is_free_evolution() {
        let pulse = GaussianPulse::new(0.0, 1.3, 6.0).unwrap();
        let q = QuasiMomentum::new(0.2).unwrap();
        let a = propagate_pulse(&pulse, q, &SolverSettings::default()).unwrap();
        let span = 2.0 * 6.0 * 1.3;
        for (i, m) in a.ladder.momenta().enumerate() {
            for j in 0..a.ladder.len() {
                let expected = if i == j {
                    Complex64::from_polar(1.0, -(m as f64 + 0.2).powi(2) * span)
                } else {
                    Complex64::default()
                };
                assert!((a.matrix[(i, j)] - expected).norm() < 1e-12);
            }
        }
        let z = extract_two_port(&a);
        assert!(z[(0, 1)].norm() == 0.0 && z[(1, 0)].norm() == 0.0);
        assert!((z[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((z[(1, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gives_identity_two_port() {
        let l = ladder(5);
        let a = TransitionAmplitudes {
            q: QuasiMomentum::ZERO,
            ladder: l,
            columns: l.momenta().collect(),
            matrix: DMatrix::identity(l.len(), l.len()),
            half_window: 0.0,
            refinement_delta: None,
        };
        assert_eq!(extract_two_port(&a), Matrix2::identity());
    }

    #[test]
    fn mirror_symmetry_at_rest() {
        let pulse = GaussianPulse::new(8.0, 0.4, 6.0).unwrap();
        let a = propagate_fixed(&pulse, QuasiMomentum::ZERO, &ladder(11), Columns::All, 1e-10, 1_000_000).unwrap();
        let ms: Vec<i32> = a.ladder.momenta().collect();
        for &m in &ms {
            for &mp in &ms {
                assert!((a.amplitude(m, mp) - a.amplitude(-m, -mp)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn dynamics_are_unitary() {
        let pulse = GaussianPulse::new(12.0, 0.3, 6.0).unwrap();
        let a = propagate_pulse(&pulse, QuasiMomentum::new(0.07).unwrap(), &SolverSettings::default())
            .unwrap();
        assert!(a.unitarity_defect() < 1e-6, "{}", a.unitarity_defect());
        assert!(a.max_singular_value() <= 1.0 + 1e-6);
        assert!(a.refinement_delta.unwrap() < 1e-6);
    }

    #[test]
    fn quasimomentum_reflection_swaps_ports() {
        let pulse = GaussianPulse::new(10.0, 0.35, 6.0).unwrap();
        let s = SolverSettings::default();
        let zp = extract_two_port(&propagate_pulse(&pulse, QuasiMomentum::new(0.13).unwrap(), &s).unwrap());
        let zm = extract_two_port(&propagate_pulse(&pulse, QuasiMomentum::new(-0.13).unwrap(), &s).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                assert!((zm[(i, j)] - zp[(1 - i, 1 - j)]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn forward_then_backward_is_identity() {
        // H(t) is real and even in t, so the backward propagator U(-T, T) is
        // the complex conjugate of A; conj(A)·A must return the identity and A
        // must be symmetric.
        let pulse = GaussianPulse::new(9.0, 0.5, 6.0).unwrap();
        let a = propagate_fixed(&pulse, QuasiMomentum::new(0.1).unwrap(), &ladder(11), Columns::All, 1e-11, 1_000_000)
            .unwrap();
        let round = a.matrix.map(|z| z.conj()) * &a.matrix;
        let n = a.ladder.len();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((round[(i, j)] - target).norm() < 1e-8);
            }
        }
        assert!((&a.matrix - a.matrix.transpose()).iter().all(|z| z.norm() < 1e-8));
    }
}
