//! Beam-splitter and adapted-mirror calibration at zero quasimomentum.

use serde::{Deserialize, Serialize};

use super::{propagate_columns, BraggError, Columns, GaussianPulse, QuasiMomentum, SolverSettings};
use super::{TransitionAmplitudes, CHANNEL_1, CHANNEL_2};
use crate::search::{brent_root, geomspace, linspace, nelder_mead_box};

/// Columns read by the calibration objectives.
const CALIBRATION: Columns<'static> = Columns::Only(&[-3, -1, 1, 3]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    BeamSplitter,
    Mirror,
}

/// Flat record of one calibrated pulse, suitable for key-value output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseCalibration {
    pub kind: PulseKind,
    pub pulse: GaussianPulse,
    /// Beam splitter: balance residual `|A_{+3,-3}|² - |A_{-3,-3}|²`.
    /// Mirror: value of the mirror objective.
    pub residual: f64,
    /// `|A_{+3,-3}(0)|²`.
    pub transfer: f64,
    /// `|A_{-3,-3}(0)|²`.
    pub stay: f64,
    /// `|A_{+1,-1}(0)|²`, reflection of the first-order parasitic class.
    pub first_order_reflection: f64,
    pub m_max: i32,
    /// Supplied directly instead of searched.
    pub bypass: bool,
}

impl PulseCalibration {
    fn measure(
        kind: PulseKind,
        pulse: GaussianPulse,
        residual: f64,
        a: &TransitionAmplitudes,
        bypass: bool,
    ) -> Self {
        Self {
            kind,
            pulse,
            residual,
            transfer: a.amplitude(CHANNEL_1, CHANNEL_2).norm_sqr(),
            stay: a.amplitude(CHANNEL_2, CHANNEL_2).norm_sqr(),
            first_order_reflection: a.amplitude(1, -1).norm_sqr(),
            m_max: a.ladder.m_max(),
            bypass,
        }
    }

    /// Key-value lines `key = value`, numeric values with 17 significant digits.
    pub fn to_records(&self) -> Vec<(String, String)> {
        let kind = match self.kind {
            PulseKind::BeamSplitter => "bs",
            PulseKind::Mirror => "mirror",
        };
        let num = |x: f64| format!("{x:.16e}");
        vec![
            ("pulse".into(), kind.into()),
            ("omega0".into(), num(self.pulse.rabi_peak)),
            ("tau".into(), num(self.pulse.duration)),
            ("window_factor".into(), num(self.pulse.window_factor)),
            ("residual".into(), num(self.residual)),
            ("transfer".into(), num(self.transfer)),
            ("stay".into(), num(self.stay)),
            ("first_order_reflection".into(), num(self.first_order_reflection)),
            ("m_max".into(), self.m_max.to_string()),
            ("bypass".into(), self.bypass.to_string()),
        ]
    }
}

/// `|A_{+3,-3}(0)|² - |A_{-3,-3}(0)|²` for a pulse at rest.
pub fn balance_residual(pulse: &GaussianPulse, settings: &SolverSettings) -> Result<f64, BraggError> {
    let a = propagate_columns(pulse, QuasiMomentum::ZERO, settings, CALIBRATION)?;
    Ok(balance_of(&a))
}

fn balance_of(a: &TransitionAmplitudes) -> f64 {
    a.amplitude(CHANNEL_1, CHANNEL_2).norm_sqr() - a.amplitude(CHANNEL_2, CHANNEL_2).norm_sqr()
}

/// Search bracket and tolerances for the beam-splitter duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSplitterSearch {
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// Geometric scan points used to locate the first sign change.
    pub scan_points: usize,
    pub balance_tol: f64,
    pub window_factor: f64,
}

impl Default for BeamSplitterSearch {
    fn default() -> Self {
        Self { tau_lo: 0.02, tau_hi: 20.0, scan_points: 48, balance_tol: 1e-6, window_factor: 6.0 }
    }
}

/// Smallest duration in the bracket that balances the two detected outputs
/// of a pulse at rest.
pub fn calibrate_beam_splitter(
    rabi_peak: f64,
    settings: &SolverSettings,
    search: &BeamSplitterSearch,
) -> Result<PulseCalibration, BraggError> {
    let (lo, hi) = (search.tau_lo, search.tau_hi);
    if !(lo > 0.0) || !(hi > lo) {
        return Err(BraggError::NoRootInBracket { lo, hi, reason: "empty bracket".into() });
    }
    if !(rabi_peak > 0.0) {
        return Err(BraggError::NoRootInBracket {
            lo,
            hi,
            reason: "no diffraction at zero Rabi frequency".into(),
        });
    }
    let pulse_at = |tau: f64| GaussianPulse::new(rabi_peak, tau, search.window_factor);
    let residual_at = |tau: f64| -> Result<f64, BraggError> { balance_residual(&pulse_at(tau)?, settings) };

    let grid = geomspace(lo, hi, search.scan_points.max(2));
    let mut prev = (grid[0], residual_at(grid[0])?);
    if prev.1 >= 0.0 {
        return Err(BraggError::NoRootInBracket {
            lo,
            hi,
            reason: format!("residual already non-negative ({:.3e}) at the lower end", prev.1),
        });
    }
    for &tau in &grid[1..] {
        let r = residual_at(tau)?;
        if r >= 0.0 {
            let (root, _) = brent_root(residual_at, prev.0, tau, prev.1, r, 1e-14 * tau, 0.05 * search.balance_tol, 200)?;
            let pulse = pulse_at(root)?;
            let a = propagate_columns(&pulse, QuasiMomentum::ZERO, settings, CALIBRATION)?;
            let residual = balance_of(&a);
            if residual.abs() >= search.balance_tol {
                return Err(BraggError::ConvergenceFailure(format!(
                    "balance residual {residual:.3e} above tolerance at tau = {root}"
                )));
            }
            return Ok(PulseCalibration::measure(PulseKind::BeamSplitter, pulse, residual, &a, false));
        }
        prev = (tau, r);
    }
    Err(BraggError::NoRootInBracket {
        lo,
        hi,
        reason: format!("balance residual stays negative (last {:.3e})", prev.1),
    })
}

/// Search box, weight and optional bypass for the adapted mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSearch {
    pub rabi_lo: f64,
    pub rabi_hi: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// Points per axis of the coarse grid.
    pub grid_points: usize,
    pub penalty_weight: f64,
    pub window_factor: f64,
    /// `(Ω₀, τ)` used verbatim when present.
    pub bypass: Option<(f64, f64)>,
}

impl Default for MirrorSearch {
    fn default() -> Self {
        Self {
            rabi_lo: 4.0,
            rabi_hi: 16.0,
            tau_lo: 0.3,
            tau_hi: 3.0,
            grid_points: 13,
            penalty_weight: 1.0,
            window_factor: 6.0,
            bypass: None,
        }
    }
}

/// `(1 - |A_{+3,-3}|²) + w (|A_{+1,-1}|² + |A_{-1,+1}|²)` at zero quasimomentum.
pub fn mirror_objective(
    pulse: &GaussianPulse,
    penalty_weight: f64,
    settings: &SolverSettings,
) -> Result<f64, BraggError> {
    let a = propagate_columns(pulse, QuasiMomentum::ZERO, settings, CALIBRATION)?;
    Ok(objective_of(&a, penalty_weight))
}

fn objective_of(a: &TransitionAmplitudes, w: f64) -> f64 {
    let reflect = a.amplitude(CHANNEL_1, CHANNEL_2).norm_sqr();
    let parasitic = a.amplitude(1, -1).norm_sqr() + a.amplitude(-1, 1).norm_sqr();
    (1.0 - reflect) + w * parasitic
}

/// Minimize the mirror objective over the box: coarse grid, then Nelder–Mead
/// from the best grid point. With `bypass` set, the configured pulse is
/// measured and returned unchanged.
pub fn calibrate_adapted_mirror(
    search: &MirrorSearch,
    settings: &SolverSettings,
) -> Result<PulseCalibration, BraggError> {
    let w = search.penalty_weight;
    if !(w >= 0.0) {
        return Err(BraggError::InvalidPulse(format!("penalty weight {w} must be >= 0")));
    }
    if let Some((rabi, tau)) = search.bypass {
        let pulse = GaussianPulse::new(rabi, tau, search.window_factor)?;
        let a = propagate_columns(&pulse, QuasiMomentum::ZERO, settings, CALIBRATION)?;
        return Ok(PulseCalibration::measure(PulseKind::Mirror, pulse, objective_of(&a, w), &a, true));
    }
    let box_ok = search.rabi_lo > 0.0
        && search.rabi_hi > search.rabi_lo
        && search.tau_lo > 0.0
        && search.tau_hi > search.tau_lo
        && search.grid_points >= 2;
    if !box_ok {
        return Err(BraggError::EmptySearchBox);
    }
    let eval = |x: [f64; 2]| -> Result<f64, BraggError> {
        let pulse = GaussianPulse::new(x[0], x[1], search.window_factor)?;
        mirror_objective(&pulse, w, settings)
    };
    let rabis = linspace(search.rabi_lo, search.rabi_hi, search.grid_points);
    let taus = geomspace(search.tau_lo, search.tau_hi, search.grid_points);
    let mut best = ([rabis[0], taus[0]], f64::INFINITY);
    for &r in &rabis {
        for &t in &taus {
            let v = eval([r, t])?;
            if v < best.1 {
                best = ([r, t], v);
            }
        }
    }
    let step = [
        (search.rabi_hi - search.rabi_lo) / (search.grid_points - 1) as f64,
        best.0[1] * ((search.tau_hi / search.tau_lo).powf(1.0 / (search.grid_points - 1) as f64) - 1.0),
    ];
    let (x, _) = nelder_mead_box(
        eval,
        best.0,
        step,
        [search.rabi_lo, search.tau_lo],
        [search.rabi_hi, search.tau_hi],
        1e-10,
        400,
    )?;
    let pulse = GaussianPulse::new(x[0], x[1], search.window_factor)?;
    let a = propagate_columns(&pulse, QuasiMomentum::ZERO, settings, CALIBRATION)?;
    Ok(PulseCalibration::measure(PulseKind::Mirror, pulse, objective_of(&a, w), &a, false))
}
