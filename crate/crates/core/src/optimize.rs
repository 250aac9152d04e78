//! Sensitivity pipeline and the nested searches over twist and Rabi
//! frequency.
//!
//! For a beam-splitter Rabi frequency Ω₀ and momentum width Δp the pipeline
//! calibrates the splitter, takes the mirror from its search (or bypass),
//! composes the Mach–Zehnder blocks on the quadrature nodes and reduces them to
//! a transport matrix. That matrix depends on neither the atom number nor the
//! twist, so it is computed once per `(Ω₀, Δp)` and the inner twist search only
//! re-evaluates Dicke-basis moments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bragg::{
    calibrate_adapted_mirror, calibrate_beam_splitter, BeamSplitterSearch, BlockCache, BraggError, MirrorSearch,
    PulseCalibration, SolverSettings,
};
use crate::interferometer::{BraggMachZehnder, FixedBlocks, InterferometerError};
use crate::search::{geomspace, scan_then_golden};
use crate::spin_io::{q_matrix, sensitivity, QMatrix, QuadratureSettings, SpinIoError, SpinMoments, WavePacket};
use crate::states::{self, OatOptimum, StatesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Bragg(#[from] BraggError),
    #[error(transparent)]
    Interferometer(#[from] InterferometerError),
    #[error(transparent)]
    SpinIo(#[from] SpinIoError),
    #[error(transparent)]
    States(#[from] StatesError),
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
}

/// Search tolerances of the nested optimizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Log-spaced twist values scanned before the golden-section refinement.
    pub twist_grid_points: usize,
    /// Golden-section tolerance on the twist, relative to the twist cap.
    pub twist_rel_tol: f64,
    /// Golden-section tolerance on Ω₀ (units ω_r).
    pub rabi_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { twist_grid_points: 24, twist_rel_tol: 1e-5, rabi_tol: 1e-2 }
    }
}

/// Which pulse blocks build the interferometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Blocks {
    /// Calibrated Gaussian Bragg pulses.
    Bragg,
    /// The same splitter and mirror at every quasimomentum, independent of Ω₀.
    Fixed(FixedBlocks),
}

impl Blocks {
    pub fn ideal() -> Self {
        Blocks::Fixed(FixedBlocks::ideal())
    }

    /// Ideal blocks with every amplitude scaled by `sqrt(eta)`.
    pub fn uniform_loss(eta: f64) -> Self {
        let s = Complex64::new(eta.sqrt(), 0.0);
        let ideal = FixedBlocks::ideal();
        Blocks::Fixed(FixedBlocks { beam_splitter: ideal.beam_splitter * s, mirror: ideal.mirror * s })
    }
}

/// Transport matrix at `φ = 0` together with the splitter that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub q: QMatrix,
    /// Beam-splitter duration, NaN for fixed blocks.
    pub tau_bs: f64,
}

impl Transport {
    /// Probability that an atom entering port 1 (resp. 2) is detected.
    pub fn survival(&self) -> (f64, f64) {
        let q = &self.q.q;
        (q[(0, 0)] + q[(0, 3)], q[(0, 0)] - q[(0, 3)])
    }
}

/// One evaluation of the sensitivity pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub dphi: f64,
    pub slope: f64,
    pub variance: f64,
    /// Readout rotation applied to the input state.
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezingOptimum {
    pub twist: f64,
    /// Squeezing of the optimal input state.
    pub xi: f64,
    pub evaluation: Evaluation,
}

/// One row of a sweep. Numeric fields of failed points are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub omega0: f64,
    pub tau_bs: f64,
    /// Momentum width; 0 marks the single-node packet at rest.
    pub dp: f64,
    pub n_atoms: u32,
    pub mu_opt: f64,
    pub xi_opt: f64,
    pub dphi: f64,
    #[serde(rename = "gain_sqrtN")]
    pub gain_sqrt_n: f64,
    pub gain_db: f64,
    pub survival_1: f64,
    pub survival_2: f64,
    pub slope: f64,
    pub error: String,
}

impl SweepRecord {
    fn failed(omega0: f64, width: Option<f64>, n_atoms: u32, err: &OptimizeError) -> Self {
        let nan = f64::NAN;
        Self {
            omega0,
            tau_bs: nan,
            dp: width.unwrap_or(0.0),
            n_atoms,
            mu_opt: nan,
            xi_opt: nan,
            dphi: nan,
            gain_sqrt_n: nan,
            gain_db: nan,
            survival_1: nan,
            survival_2: nan,
            slope: nan,
            error: err.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

/// `−20 log₁₀(Δφ √N)`: positive when beating the standard quantum limit.
pub fn gain_db(gain: f64) -> f64 {
    -20.0 * gain.log10()
}

/// Best Ω₀ and the bound for one `(N, Δp)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleRecord {
    pub record: SweepRecord,
    /// `min_μ ξ(μ)` for this atom number.
    pub ideal_bound: f64,
}

type CalibrationSlot = Result<PulseCalibration, BraggError>;

/// Pipeline state shared across evaluations: pulse-block memo, calibrations
/// and transport matrices.
#[derive(Debug)]
pub struct Engine {
    pub solver: SolverSettings,
    pub splitter_search: BeamSplitterSearch,
    pub mirror_search: MirrorSearch,
    pub quadrature: QuadratureSettings,
    pub optimizer: OptimizerSettings,
    pub blocks: Blocks,
    cache: Arc<BlockCache>,
    splitters: Mutex<HashMap<u64, CalibrationSlot>>,
    mirror: OnceLock<CalibrationSlot>,
    transports: Mutex<HashMap<(u64, u64), Transport>>,
    ideal: Mutex<HashMap<u32, OatOptimum>>,
}

fn width_key(width: Option<f64>) -> u64 {
    width.map_or(0, f64::to_bits)
}

impl Engine {
    pub fn new(
        solver: SolverSettings,
        splitter_search: BeamSplitterSearch,
        mirror_search: MirrorSearch,
        quadrature: QuadratureSettings,
        optimizer: OptimizerSettings,
        blocks: Blocks,
    ) -> Self {
        Self {
            solver,
            splitter_search,
            mirror_search,
            quadrature,
            optimizer,
            blocks,
            cache: Arc::new(BlockCache::new()),
            splitters: Mutex::new(HashMap::new()),
            mirror: OnceLock::new(),
            transports: Mutex::new(HashMap::new()),
            ideal: Mutex::new(HashMap::new()),
        }
    }

    /// Defaults everywhere with the given blocks.
    pub fn with_blocks(blocks: Blocks) -> Self {
        Self::new(
            SolverSettings::default(),
            BeamSplitterSearch::default(),
            MirrorSearch::default(),
            QuadratureSettings::default(),
            OptimizerSettings::default(),
            blocks,
        )
    }

    pub fn cached_blocks(&self) -> usize {
        self.cache.len()
    }

    pub fn beam_splitter(&self, rabi: f64) -> Result<PulseCalibration, BraggError> {
        if let Some(hit) = self.splitters.lock().unwrap().get(&rabi.to_bits()) {
            return hit.clone();
        }
        let res = calibrate_beam_splitter(rabi, &self.solver, &self.splitter_search);
        self.splitters.lock().unwrap().insert(rabi.to_bits(), res.clone());
        res
    }

    pub fn mirror(&self) -> Result<PulseCalibration, BraggError> {
        self.mirror.get_or_init(|| calibrate_adapted_mirror(&self.mirror_search, &self.solver)).clone()
    }

    pub fn packet(&self, width: Option<f64>) -> Result<WavePacket, SpinIoError> {
        match width {
            None => Ok(WavePacket::at_rest()),
            Some(w) => WavePacket::gaussian(w, &self.quadrature),
        }
    }

    /// Packet-averaged transport at the working point `φ = 0`.
    pub fn transport(&self, rabi: f64, width: Option<f64>) -> Result<Transport, OptimizeError> {
        let key = match self.blocks {
            Blocks::Bragg => (rabi.to_bits(), width_key(width)),
            Blocks::Fixed(_) => (0, width_key(width)),
        };
        if let Some(hit) = self.transports.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let packet = self.packet(width)?;
        let t = match &self.blocks {
            Blocks::Fixed(fixed) => Transport { q: q_matrix(fixed, &packet, 0.0)?, tau_bs: f64::NAN },
            Blocks::Bragg => {
                let bs = self.beam_splitter(rabi)?;
                let mirror = self.mirror()?;
                let mzi = BraggMachZehnder::new(bs.pulse, mirror.pulse, self.solver).with_cache(self.cache.clone());
                Transport { q: q_matrix(&mzi, &packet, 0.0)?, tau_bs: bs.pulse.duration }
            }
        };
        self.transports.lock().unwrap().insert(key, t);
        Ok(t)
    }

    pub fn ideal_minimum(&self, atoms: u32) -> Result<OatOptimum, StatesError> {
        if let Some(hit) = self.ideal.lock().unwrap().get(&atoms) {
            return Ok(*hit);
        }
        let opt = states::ideal_minimum(atoms)?;
        self.ideal.lock().unwrap().insert(atoms, opt);
        Ok(opt)
    }

    /// Δφ for a twisted input read out at the angle that puts its
    /// minimum-variance direction onto the detected observable.
    pub fn sensitivity_for(&self, rabi: f64, width: Option<f64>, atoms: u32, twist: f64) -> Result<Evaluation, OptimizeError> {
        let t = self.transport(rabi, width)?;
        evaluate(&t.q, &states::oat_moments(atoms, twist))
    }

    /// Twist in `[0, 2 μ_ideal]` minimizing Δφ.
    pub fn optimize_squeezing(&self, rabi: f64, width: Option<f64>, atoms: u32) -> Result<SqueezingOptimum, OptimizeError> {
        let t = self.transport(rabi, width)?;
        optimize_twist(&t.q, atoms, &self.ideal_minimum(atoms)?, &self.optimizer)
    }

    fn record_at(&self, rabi: f64, width: Option<f64>, atoms: u32) -> Result<SweepRecord, OptimizeError> {
        let t = self.transport(rabi, width)?;
        let opt = optimize_twist(&t.q, atoms, &self.ideal_minimum(atoms)?, &self.optimizer)?;
        let (s1, s2) = t.survival();
        let gain = opt.evaluation.dphi * (atoms as f64).sqrt();
        Ok(SweepRecord {
            omega0: rabi,
            tau_bs: t.tau_bs,
            dp: width.unwrap_or(0.0),
            n_atoms: atoms,
            mu_opt: opt.twist,
            xi_opt: opt.xi,
            dphi: opt.evaluation.dphi,
            gain_sqrt_n: gain,
            gain_db: gain_db(gain),
            survival_1: s1,
            survival_2: s2,
            slope: opt.evaluation.slope,
            error: String::new(),
        })
    }

    /// One row per grid point; failures are recorded in the row.
    pub fn record(&self, rabi: f64, width: Option<f64>, atoms: u32) -> SweepRecord {
        self.record_at(rabi, width, atoms).unwrap_or_else(|e| SweepRecord::failed(rabi, width, atoms, &e))
    }

    /// Grid over `(Δp, Ω₀)`, widths outermost, in input order.
    pub fn sweep_rabi(&self, rabi_grid: &[f64], widths: &[Option<f64>], atoms: u32) -> Vec<SweepRecord> {
        // Mirror calibration is shared by all points.
        if matches!(self.blocks, Blocks::Bragg) {
            let _ = self.mirror();
        }
        let points: Vec<(Option<f64>, f64)> =
            widths.iter().flat_map(|&w| rabi_grid.iter().map(move |&r| (w, r))).collect();
        points.par_iter().map(|&(w, r)| self.record(r, w, atoms)).collect()
    }

    /// For each `(N, Δp)`, the Ω₀ in `[grid₀, grid_last]` with the best
    /// optimized sensitivity: scan of `rabi_grid`, then golden section.
    pub fn sweep_particles(&self, atoms: &[u32], widths: &[Option<f64>], rabi_grid: &[f64]) -> Vec<ParticleRecord> {
        if matches!(self.blocks, Blocks::Bragg) {
            let _ = self.mirror();
        }
        // Transport matrices on the coarse grid are shared by all atom numbers.
        let grid_points: Vec<(Option<f64>, f64)> =
            widths.iter().flat_map(|&w| rabi_grid.iter().map(move |&r| (w, r))).collect();
        grid_points.par_iter().for_each(|&(w, r)| {
            let _ = self.transport(r, w);
        });
        let pairs: Vec<(u32, Option<f64>)> = atoms.iter().flat_map(|&n| widths.iter().map(move |&w| (n, w))).collect();
        pairs
            .par_iter()
            .map(|&(n, w)| {
                let bound = self.ideal_minimum(n).map(|o| o.xi).unwrap_or(f64::NAN);
                let objective = |r: f64| -> Result<f64, OptimizeError> {
                    Ok(match self.optimize_squeezing(r, w, n) {
                        Ok(o) => o.evaluation.dphi,
                        Err(_) => f64::INFINITY,
                    })
                };
                let record = match scan_then_golden(objective, rabi_grid, self.optimizer.rabi_tol) {
                    Ok(best) if best.value.is_finite() => self.record(best.x, w, n),
                    Ok(_) => SweepRecord::failed(
                        f64::NAN,
                        w,
                        n,
                        &OptimizeError::InvalidConfig("no grid point produced a sensitivity".into()),
                    ),
                    Err(e) => SweepRecord::failed(f64::NAN, w, n, &e),
                };
                ParticleRecord { record, ideal_bound: bound }
            })
            .collect()
    }
}

/// Pipeline tail shared by all block sources.
pub fn evaluate(q: &QMatrix, unrotated: &SpinMoments) -> Result<Evaluation, OptimizeError> {
    let direction = q.q[(3, 3)].atan2(q.q[(3, 2)]);
    let theta = states::aligned_theta(unrotated, direction);
    let input = states::rotate_about_1(unrotated, theta);
    let s = sensitivity(&input, q)?;
    Ok(Evaluation { dphi: s.dphi, slope: s.slope, variance: s.variance, theta })
}

/// Scan of `[0] ∪ geomspace(cap/10³, cap)` followed by golden section, with
/// `cap = 2 μ_ideal`.
pub fn optimize_twist(
    q: &QMatrix,
    atoms: u32,
    ideal: &OatOptimum,
    settings: &OptimizerSettings,
) -> Result<SqueezingOptimum, OptimizeError> {
    let cap = 2.0 * ideal.twist;
    let eval = |mu: f64| evaluate(q, &states::oat_moments(atoms, mu));
    if !(cap > 0.0) {
        let e = eval(0.0)?;
        return Ok(SqueezingOptimum { twist: 0.0, xi: 1.0, evaluation: e });
    }
    let mut grid = vec![0.0];
    grid.extend(geomspace(1e-3 * cap, cap, settings.twist_grid_points.max(3)));
    let best = scan_then_golden(|mu| eval(mu).map(|e| e.dphi), &grid, settings.twist_rel_tol * cap)?;
    let evaluation = eval(best.x)?;
    Ok(SqueezingOptimum { twist: best.x, xi: states::squeezing(atoms, best.x)?, evaluation })
}
