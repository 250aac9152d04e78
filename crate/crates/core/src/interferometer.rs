//! Two-port transfer matrices of pulse sequences.
//!
//! A sequence is stored in application order; [`compose`] multiplies later
//! elements on the left, so `[M, BS, M, Phase, BS]` yields
//! `Z = BS · G(φ) · M · BS · M`.

use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bragg::{BlockCache, BraggError, GaussianPulse, QuasiMomentum, SolverSettings};

pub type Block = Matrix2<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterferometerError {
    #[error("sequence must contain exactly one phase element, found {0}")]
    MultiplePhaseElements(usize),
    #[error(transparent)]
    Bragg(#[from] BraggError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    BeamSplitter,
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Pulse { kind: BlockKind, block: Block },
    /// Relative phase `G(φ)`; the value of `φ` is supplied at composition.
    Phase,
}

/// Elements in the order they act on the atoms, all evaluated at one
/// quasimomentum.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub elements: Vec<Element>,
}

/// `Z(q, φ)` of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPortTransfer {
    pub entries: Block,
    pub q: QuasiMomentum,
    pub phi: f64,
}

impl TwoPortTransfer {
    pub fn max_singular_value(&self) -> f64 {
        self.entries.singular_values().max()
    }
}

pub fn phase_element(phi: f64) -> Block {
    let h = 0.5 * phi;
    Matrix2::new(
        Complex64::from_polar(1.0, -h),
        Complex64::default(),
        Complex64::default(),
        Complex64::from_polar(1.0, h),
    )
}

fn phase_derivative(phi: f64) -> Block {
    let g = phase_element(phi);
    Matrix2::new(
        g[(0, 0)] * Complex64::new(0.0, -0.5),
        Complex64::default(),
        Complex64::default(),
        g[(1, 1)] * Complex64::new(0.0, 0.5),
    )
}

/// Lossless balanced splitter `(1/√2)[[1, -i], [-i, 1]]`.
pub fn ideal_beam_splitter() -> Block {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Matrix2::new(
        Complex64::new(r, 0.0),
        Complex64::new(0.0, -r),
        Complex64::new(0.0, -r),
        Complex64::new(r, 0.0),
    )
}

/// Lossless mirror `[[0, -i], [-i, 0]]`.
pub fn ideal_mirror() -> Block {
    Matrix2::new(
        Complex64::default(),
        Complex64::new(0.0, -1.0),
        Complex64::new(0.0, -1.0),
        Complex64::default(),
    )
}

impl PulseSequence {
    /// Auxiliary mirror, splitter, mirror, phase, splitter.
    pub fn mach_zehnder(bs: Block, mirror: Block) -> Self {
        use BlockKind::*;
        Self {
            elements: vec![
                Element::Pulse { kind: Mirror, block: mirror },
                Element::Pulse { kind: BeamSplitter, block: bs },
                Element::Pulse { kind: Mirror, block: mirror },
                Element::Phase,
                Element::Pulse { kind: BeamSplitter, block: bs },
            ],
        }
    }

    /// Splitter, mirror, phase, splitter.
    pub fn three_pulse(bs: Block, mirror: Block) -> Self {
        use BlockKind::*;
        Self {
            elements: vec![
                Element::Pulse { kind: BeamSplitter, block: bs },
                Element::Pulse { kind: Mirror, block: mirror },
                Element::Phase,
                Element::Pulse { kind: BeamSplitter, block: bs },
            ],
        }
    }

    pub fn phase_count(&self) -> usize {
        self.elements.iter().filter(|e| matches!(e, Element::Phase)).count()
    }
}

/// Product of the sequence, rightmost (first) element acting first.
pub fn compose(seq: &PulseSequence, q: QuasiMomentum, phi: f64) -> TwoPortTransfer {
    let mut z = Block::identity();
    for e in &seq.elements {
        let m = match e {
            Element::Pulse { block, .. } => *block,
            Element::Phase => phase_element(phi),
        };
        z = m * z;
    }
    TwoPortTransfer { entries: z, q, phi }
}

/// `∂Z/∂φ` by the product rule.
pub fn compose_dphi(seq: &PulseSequence, phi: f64) -> Result<Block, InterferometerError> {
    let count = seq.phase_count();
    if count != 1 {
        return Err(InterferometerError::MultiplePhaseElements(count));
    }
    let mut z = Block::identity();
    for e in &seq.elements {
        let m = match e {
            Element::Pulse { block, .. } => *block,
            Element::Phase => phase_derivative(phi),
        };
        z = m * z;
    }
    Ok(z)
}

/// `(Z, ∂Z/∂φ)` at one quasimomentum.
pub trait TransferModel: Sync {
    fn transfer(&self, q: QuasiMomentum, phi: f64) -> Result<(Block, Block), InterferometerError>;
}

/// Same blocks at every quasimomentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedBlocks {
    pub beam_splitter: Block,
    pub mirror: Block,
}

impl FixedBlocks {
    pub fn ideal() -> Self {
        Self { beam_splitter: ideal_beam_splitter(), mirror: ideal_mirror() }
    }
}

impl TransferModel for FixedBlocks {
    fn transfer(&self, _q: QuasiMomentum, phi: f64) -> Result<(Block, Block), InterferometerError> {
        let seq = PulseSequence::mach_zehnder(self.beam_splitter, self.mirror);
        Ok((compose(&seq, QuasiMomentum::ZERO, phi).entries, compose_dphi(&seq, phi)?))
    }
}

/// A constant transfer matrix independent of `φ` apart from a single phase
/// element placed last, `Z = G(φ)·Z₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAfter(pub Block);

impl TransferModel for PhaseAfter {
    fn transfer(&self, _q: QuasiMomentum, phi: f64) -> Result<(Block, Block), InterferometerError> {
        Ok((phase_element(phi) * self.0, phase_derivative(phi) * self.0))
    }
}

/// Mach–Zehnder built from Gaussian Bragg pulses; blocks are taken in the
/// interaction picture of the kinetic term and memoized.
#[derive(Debug, Clone)]
pub struct BraggMachZehnder {
    pub beam_splitter: GaussianPulse,
    pub mirror: GaussianPulse,
    pub settings: SolverSettings,
    pub cache: Arc<BlockCache>,
}

impl BraggMachZehnder {
    pub fn new(beam_splitter: GaussianPulse, mirror: GaussianPulse, settings: SolverSettings) -> Self {
        Self { beam_splitter, mirror, settings, cache: Arc::new(BlockCache::new()) }
    }

    pub fn with_cache(mut self, cache: Arc<BlockCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn sequence(&self, q: QuasiMomentum) -> Result<PulseSequence, InterferometerError> {
        let bs = self.cache.block(&self.beam_splitter, q, &self.settings)?.block;
        let m = self.cache.block(&self.mirror, q, &self.settings)?.block;
        Ok(PulseSequence::mach_zehnder(bs, m))
    }
}

impl TransferModel for BraggMachZehnder {
    fn transfer(&self, q: QuasiMomentum, phi: f64) -> Result<(Block, Block), InterferometerError> {
        let seq = self.sequence(q)?;
        Ok((compose(&seq, q, phi).entries, compose_dphi(&seq, phi)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &Block, b: &Block) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn all_identity() -> PulseSequence {
        PulseSequence::mach_zehnder(Block::identity(), Block::identity())
    }

    #[test]
    fn phase_element_values() {
        assert!(max_diff(&phase_element(0.0), &Block::identity()) < 1e-15);
        assert!(max_diff(&phase_element(2.0 * PI), &(-Block::identity())) < 1e-15);
        let g = phase_element(PI);
        assert!(max_diff(&g, &Matrix2::new(c(0.0, -1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0))) < 1e-15);
    }

    #[test]
    fn identity_blocks_leave_only_the_phase() {
        let z = compose(&all_identity(), QuasiMomentum::ZERO, 0.7);
        assert!(max_diff(&z.entries, &phase_element(0.7)) < 1e-15);
        let d = compose_dphi(&all_identity(), 0.0).unwrap();
        assert!(max_diff(&d, &Matrix2::new(c(0.0, -0.5), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.5))) < 1e-15);
    }

    #[test]
    fn zero_phase_is_plain_product() {
        let bs = ideal_beam_splitter();
        let m = Matrix2::new(c(0.1, 0.2), c(0.0, -0.9), c(0.3, -0.8), c(0.05, 0.0));
        let z = compose(&PulseSequence::mach_zehnder(bs, m), QuasiMomentum::ZERO, 0.0);
        assert!(max_diff(&z.entries, &(bs * m * bs * m)) < 1e-15);
    }

    #[test]
    fn ideal_mach_zehnder_fringe_has_full_visibility() {
        let seq = PulseSequence::mach_zehnder(ideal_beam_splitter(), ideal_mirror());
        for k in 0..32 {
            let phi = -PI + 2.0 * PI * k as f64 / 32.0;
            let z = compose(&seq, QuasiMomentum::ZERO, phi).entries;
            // Input in port 1 leaves port 1 with probability sin²(φ/2).
            assert_relative_eq!(z[(0, 0)].norm_sqr(), (0.5 * phi).sin().powi(2), epsilon = 1e-14);
            assert_relative_eq!(z[(1, 0)].norm_sqr(), (0.5 * phi).cos().powi(2), epsilon = 1e-14);
            assert_relative_eq!(z.singular_values().max(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let bs = Matrix2::new(c(0.6, 0.1), c(0.1, -0.55), c(-0.2, -0.5), c(0.58, 0.05));
        let m = Matrix2::new(c(0.05, 0.02), c(0.1, -0.95), c(0.0, -0.9), c(0.1, 0.0));
        let seq = PulseSequence::mach_zehnder(bs, m);
        let phi = 0.37;
        let exact = compose_dphi(&seq, phi).unwrap();
        let err = |h: f64| {
            let fd = (compose(&seq, QuasiMomentum::ZERO, phi + h).entries
                - compose(&seq, QuasiMomentum::ZERO, phi - h).entries)
                / Complex64::new(2.0 * h, 0.0);
            max_diff(&fd, &exact)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        // Halving h quarters the error.
        assert!((e1 / e2 - 4.0).abs() < 0.05, "{e1} {e2}");
        assert!(e1 < 1e-4);
    }

    #[test]
    fn derivative_flips_sign_over_one_period() {
        let seq = PulseSequence::mach_zehnder(ideal_beam_splitter(), ideal_mirror());
        let a = compose_dphi(&seq, 0.4).unwrap();
        let b = compose_dphi(&seq, 0.4 + 2.0 * PI).unwrap();
        assert!(max_diff(&a, &(-b)) < 1e-14);
    }

    #[test]
    fn derivative_needs_exactly_one_phase() {
        let mut seq = all_identity();
        seq.elements.push(Element::Phase);
        assert_eq!(compose_dphi(&seq, 0.0), Err(InterferometerError::MultiplePhaseElements(2)));
        seq.elements.retain(|e| !matches!(e, Element::Phase));
        assert_eq!(compose_dphi(&seq, 0.0), Err(InterferometerError::MultiplePhaseElements(0)));
    }

    #[test]
    fn three_pulse_preset_order() {
        let bs = ideal_beam_splitter();
        let m = ideal_mirror();
        let z = compose(&PulseSequence::three_pulse(bs, m), QuasiMomentum::ZERO, 0.3).entries;
        assert!(max_diff(&z, &(bs * phase_element(0.3) * m * bs)) < 1e-15);
    }
}
