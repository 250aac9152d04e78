use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::Matrix2;
use num_complex::Complex64;

use super::{extract_two_port_centered, propagate_columns, BraggError, GaussianPulse, QuasiMomentum, SolverSettings, DETECTED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    rabi: u64,
    duration: u64,
    window: u64,
    q: u64,
    m_max: i32,
    tol: u64,
    checked: bool,
}

impl Key {
    fn new(pulse: &GaussianPulse, q: QuasiMomentum, settings: &SolverSettings) -> Self {
        Self {
            rabi: pulse.rabi_peak.to_bits(),
            duration: pulse.duration.to_bits(),
            window: pulse.window_factor.to_bits(),
            q: q.value().to_bits(),
            m_max: settings.m_max,
            tol: settings.integ_tol.to_bits(),
            checked: settings.check_convergence,
        }
    }
}

/// Detected two-port block of one pulse at one quasimomentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedBlock {
    /// Centred (interaction-picture) block.
    pub block: Matrix2<Complex64>,
    pub refinement_delta: Option<f64>,
    pub unitarity_defect: f64,
}

/// Memo of pulse blocks keyed by the exact bit patterns of pulse, quasimomentum
/// and solver settings. Shared between worker threads.
#[derive(Debug, Default)]
pub struct BlockCache {
    map: RwLock<HashMap<Key, CachedBlock>>,
}

impl BlockCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(
        &self,
        pulse: &GaussianPulse,
        q: QuasiMomentum,
        settings: &SolverSettings,
    ) -> Result<CachedBlock, BraggError> {
        let key = Key::new(pulse, q, settings);
        if let Some(hit) = self.map.read().unwrap().get(&key) {
            return Ok(*hit);
        }
        let amps = propagate_columns(pulse, q, settings, DETECTED)?;
        let entry = CachedBlock {
            block: extract_two_port_centered(&amps),
            refinement_delta: amps.refinement_delta,
            unitarity_defect: amps.unitarity_defect(),
        };
        // Concurrent misses compute identical values, so last writer wins.
        self.map.write().unwrap().insert(key, entry);
        Ok(entry)
    }
}
