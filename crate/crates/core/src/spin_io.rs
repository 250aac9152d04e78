//! Moment transport through a lossy two-port interferometer.
//!
//! Pseudo-spin components are `J_α = ½ Σ a_i† [σ_α]_ij a_j` with `σ_0 = I`,
//! so a state of `N` atoms has `P_0 = N/2`. Second moments are the
//! symmetrized covariances `½⟨{J_α, J_β}⟩ − P_α P_β`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bragg::QuasiMomentum;
use crate::interferometer::{InterferometerError, TransferModel};

pub type Polarization = Vector4<f64>;
pub type Covariance = Matrix4<f64>;

/// Largest imaginary part tolerated in a transport trace.
pub const TRACE_IMAG_TOL: f64 = 1e-10;
pub const SLOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinIoError {
    #[error("momentum width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("quadrature clips {clipped:.3e} of the packet mass (limit {limit:.1e})")]
    QuadratureUnderflow { clipped: f64, limit: f64 },
    #[error("transport trace has imaginary part {0:.3e}")]
    ComplexTrace(f64),
    #[error("signal slope {0:.3e} is below the floor")]
    ZeroSlope(f64),
    #[error(transparent)]
    Transfer(#[from] InterferometerError),
}

/// First and second moments of a pseudo-spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMoments {
    pub polarization: Polarization,
    pub covariance: Covariance,
}

impl SpinMoments {
    pub fn atom_number(&self) -> f64 {
        2.0 * self.polarization[0]
    }

    /// Moments after the 4×4 linear map `R` acting on spin components.
    pub fn transformed(&self, r: &Matrix4<f64>) -> Self {
        Self { polarization: r * self.polarization, covariance: r * self.covariance * r.transpose() }
    }
}

/// `Λ(P)`: first row and column `P`, remaining diagonal `P_0`.
pub fn lambda_matrix(p: &Polarization) -> Matrix4<f64> {
    let mut l = Matrix4::from_diagonal_element(p[0]);
    for a in 1..4 {
        l[(0, a)] = p[a];
        l[(a, 0)] = p[a];
    }
    l
}

/// Quadrature over a Gaussian momentum distribution `|φ(q)|²` of width Δp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    /// `None` for the single-node packet at rest.
    pub width: Option<f64>,
    /// `(q, weight)` with weights summing to one.
    pub nodes: Vec<(f64, f64)>,
    /// Mass of the Gaussian lost outside the integration interval.
    pub clipped_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSettings {
    pub nodes: usize,
    /// Half-width of the integration interval in units of Δp (capped at 1 ħk).
    pub span_widths: f64,
    pub clip_tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { nodes: 64, span_widths: 6.0, clip_tol: 1e-6 }
    }
}

impl WavePacket {
    /// Everything at `q = 0`.
    pub fn at_rest() -> Self {
        Self { width: None, nodes: vec![(0.0, 1.0)], clipped_mass: 0.0 }
    }

    pub fn gaussian(width: f64, settings: &QuadratureSettings) -> Result<Self, SpinIoError> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(SpinIoError::InvalidWidth(width));
        }
        let n = NonZeroUsize::new(settings.nodes.max(1)).unwrap();
        let rule = GaussLegendre::new(n);
        let half = (settings.span_widths * width).min(1.0);
        let norm: f64 = 1.0 / (width * (2.0 * std::f64::consts::PI).sqrt());
        let mut nodes: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| {
                let q = half * x;
                (q, half * w * norm * (-0.5 * (q / width).powi(2)).exp())
            })
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mass: f64 = nodes.iter().map(|n| n.1).sum();
        let clipped = (1.0_f64 - mass).max(0.0);
        if clipped > settings.clip_tol {
            return Err(SpinIoError::QuadratureUnderflow { clipped, limit: settings.clip_tol });
        }
        for n in &mut nodes {
            n.1 /= mass;
        }
        Ok(Self { width: Some(width), nodes, clipped_mass: clipped })
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.1).sum()
    }
}

pub fn pauli() -> [Matrix2<Complex64>; 4] {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        Matrix2::new(one, o, o, one),
        Matrix2::new(o, one, one, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(one, o, o, -one),
    ]
}

/// Packet-averaged transport matrix and its phase derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrix {
    pub q: Matrix4<f64>,
    pub dq: Matrix4<f64>,
}

type ComplexForm = [[Complex64; 4]; 4];

/// `½ tr(A† σ_α B σ_β)` for all α, β.
fn trace_form(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>, s: &[Matrix2<Complex64>; 4]) -> ComplexForm {
    let ad = a.adjoint();
    let mut out = [[Complex64::default(); 4]; 4];
    for al in 0..4 {
        let left = ad * s[al] * b;
        for be in 0..4 {
            out[al][be] = (left * s[be]).trace() * 0.5;
        }
    }
    out
}

fn real_part(form: &ComplexForm) -> Result<Matrix4<f64>, SpinIoError> {
    let mut out = Matrix4::zeros();
    for al in 0..4 {
        for be in 0..4 {
            let t = form[al][be];
            if t.im.abs() > TRACE_IMAG_TOL {
                return Err(SpinIoError::ComplexTrace(t.im));
            }
            out[(al, be)] = t.re;
        }
    }
    Ok(out)
}

/// Transport matrix of a single transfer matrix and its derivative.
pub fn q_matrix_single(z: &Matrix2<Complex64>, dz: &Matrix2<Complex64>) -> Result<QMatrix, SpinIoError> {
    let s = pauli();
    let q = real_part(&trace_form(z, z, &s))?;
    let mut d = trace_form(dz, z, &s);
    let other = trace_form(z, dz, &s);
    for (row, o) in d.iter_mut().zip(&other) {
        for (x, y) in row.iter_mut().zip(o) {
            *x += y;
        }
    }
    Ok(QMatrix { q, dq: real_part(&d)? })
}

/// `Q_αβ = Σ_nodes w ½ tr(Z† σ_α Z σ_β)` and its φ-derivative.
///
/// Nodes are evaluated in parallel and summed in node order.
pub fn q_matrix<T: TransferModel + ?Sized>(model: &T, packet: &WavePacket, phi: f64) -> Result<QMatrix, SpinIoError> {
    let parts: Vec<QMatrix> = packet
        .nodes
        .par_iter()
        .map(|&(q, _)| {
            let q = QuasiMomentum::new(q).map_err(InterferometerError::from)?;
            let (z, dz) = model.transfer(q, phi)?;
            q_matrix_single(&z, &dz)
        })
        .collect::<Result<_, _>>()?;
    let mut acc = QMatrix { q: Matrix4::zeros(), dq: Matrix4::zeros() };
    for (part, &(_, w)) in parts.iter().zip(&packet.nodes) {
        acc.q += part.q * w;
        acc.dq += part.dq * w;
    }
    Ok(acc)
}

/// Output moments and the loss-induced noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatedMoments {
    pub polarization: Polarization,
    pub covariance: Covariance,
    pub noise: Covariance,
}

impl PropagatedMoments {
    pub fn moments(&self) -> SpinMoments {
        SpinMoments { polarization: self.polarization, covariance: self.covariance }
    }
}

/// Partition noise of the particles dropped by `Q`:
/// `½ [Λ(Q P) − Q Λ(P) Qᵀ]`.
///
/// The factor ½ is the one-body anticommutator `½⟨{J_α, J_β}⟩ = ½ Λ(P)_αβ`
/// of a single atom in the half-spin normalization.
pub fn noise_matrix(p_in: &Polarization, q: &Matrix4<f64>) -> Covariance {
    let n = lambda_matrix(&(q * p_in)) - q * lambda_matrix(p_in) * q.transpose();
    // Symmetrized, then halved.
    0.25 * (n + n.transpose())
}

pub fn propagate_moments(input: &SpinMoments, q: &Matrix4<f64>) -> PropagatedMoments {
    let noise = noise_matrix(&input.polarization, q);
    let mut cov = q * input.covariance * q.transpose() + noise;
    cov = 0.5 * (cov + cov.transpose());
    PropagatedMoments { polarization: q * input.polarization, covariance: cov, noise }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    /// Phase uncertainty Δφ.
    pub dphi: f64,
    /// `∂⟨S_3⟩/∂φ`.
    pub slope: f64,
    /// `Var(S_3)` at the output.
    pub variance: f64,
}

/// `Δφ = sqrt(Γ_out,33) / |∂_φ P_out,3|` from the transport matrix at the
/// working point.
pub fn sensitivity(input: &SpinMoments, q: &QMatrix) -> Result<Sensitivity, SpinIoError> {
    let slope = (q.dq * input.polarization)[3];
    if !(slope.abs() > SLOPE_FLOOR) {
        return Err(SpinIoError::ZeroSlope(slope));
    }
    let variance = propagate_moments(input, &q.q).covariance[(3, 3)];
    Ok(Sensitivity { dphi: variance.max(0.0).sqrt() / slope.abs(), slope, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{phase_element, PhaseAfter};
    use approx::assert_relative_eq;

    fn max_abs(m: &Matrix4<f64>) -> f64 {
        m.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_matrix(&Vector4::new(1.0, 0.0, 0.0, 0.0)), Matrix4::identity());
        let n = 10.0;
        let l = lambda_matrix(&Vector4::new(n / 2.0, n / 2.0, 0.0, 0.0));
        assert_eq!(l.row(0).transpose(), Vector4::new(5.0, 5.0, 0.0, 0.0));
        assert_eq!(l.diagonal(), Vector4::from_element(5.0));
        assert_eq!(l[(2, 3)], 0.0);
    }

    #[test]
    fn gaussian_packet_is_normalized() {
        for dp in [0.001, 0.01, 0.05, 0.1, 0.15] {
            let p = WavePacket::gaussian(dp, &QuadratureSettings::default()).unwrap();
            assert_eq!(p.nodes.len(), 64);
            assert!((p.total_weight() - 1.0).abs() < 1e-12);
            assert!(p.nodes.iter().all(|&(q, w)| w > 0.0 && q > -1.0 && q <= 1.0));
            // Variance of the Gaussian truncated at ±6Δp.
            let var: f64 = p.nodes.iter().map(|&(q, w)| w * q * q).sum();
            assert_relative_eq!(var, dp * dp, max_relative = 1e-7);
        }
    }

    #[test]
    fn wide_packets_are_rejected() {
        let err = WavePacket::gaussian(0.4, &QuadratureSettings::default()).unwrap_err();
        assert!(matches!(err, SpinIoError::QuadratureUnderflow { .. }));
        assert!(matches!(WavePacket::gaussian(0.0, &QuadratureSettings::default()), Err(SpinIoError::InvalidWidth(_))));
    }

    #[test]
    fn identity_transfer_gives_identity_q() {
        let q = q_matrix(&PhaseAfter(Matrix2::identity()), &WavePacket::at_rest(), 0.0).unwrap();
        assert!(max_abs(&(q.q - Matrix4::identity())) < 1e-15);
    }

    #[test]
    fn uniform_loss_scales_q() {
        let eta: f64 = 0.37;
        let z = Matrix2::identity() * Complex64::new(eta.sqrt(), 0.0);
        let q = q_matrix(&PhaseAfter(z), &WavePacket::at_rest(), 0.0).unwrap();
        assert!(max_abs(&(q.q - Matrix4::identity() * eta)) < 1e-15);
    }

    #[test]
    fn phase_rotates_about_axis_three() {
        let phi = 0.83;
        let q = q_matrix_single(&phase_element(phi), &Matrix2::zeros()).unwrap().q;
        let (c, s) = (phi.cos(), phi.sin());
        let expect = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, c, -s, 0.0, //
            0.0, s, c, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert!(max_abs(&(q - expect)) < 1e-15);
    }

    #[test]
    fn orthogonal_q_has_no_noise() {
        let q = q_matrix_single(&phase_element(1.1), &Matrix2::zeros()).unwrap().q;
        let p = Vector4::new(3.0, 1.0, -2.0, 0.5);
        assert!(max_abs(&noise_matrix(&p, &q)) < 1e-15);
        let m = SpinMoments { polarization: p, covariance: Matrix4::identity() };
        let out = propagate_moments(&m, &Matrix4::identity());
        assert_eq!(out.polarization, p);
        assert!(max_abs(&(out.covariance - Matrix4::identity())) < 1e-15);
    }

    #[test]
    fn zero_slope_is_reported() {
        let m = SpinMoments {
            polarization: Vector4::new(1.0, 1.0, 0.0, 0.0),
            covariance: Matrix4::zeros(),
        };
        let q = QMatrix { q: Matrix4::identity(), dq: Matrix4::zeros() };
        assert!(matches!(sensitivity(&m, &q), Err(SpinIoError::ZeroSlope(_))));
    }
}
