//! Coherent and one-axis-twisted spin states, evaluated exactly in the Dicke
//! basis `|j, m⟩`, `j = N/2`, where `m = (n_1 - n_2)/2`.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{brent_root, geomspace, scan_then_golden};
use crate::spin_io::{Covariance, Polarization, SpinMoments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatesError {
    #[error("mean spin along axis 1 is {0:.3e}; squeezing is undefined")]
    DepolarizedState(f64),
    #[error("squeezing target {target} outside [{min}, 1]")]
    OutOfRange { target: f64, min: f64 },
    #[error("atom number must be at least 1")]
    NoAtoms,
}

/// Input-state knobs: atom number, twisting strength and readout rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OatParams {
    pub atoms: u32,
    pub twist: f64,
    pub theta: f64,
}

/// Amplitudes of a state in the symmetric subspace, index `k = j + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeState {
    pub coefficients: Vec<Complex64>,
}

impl DickeState {
    /// Coherent state polarized along +1.
    pub fn coherent(atoms: u32) -> Self {
        let n = atoms as usize;
        // ln C(N, k) by the multiplicative recurrence.
        let mut log_binom = vec![0.0; n + 1];
        for k in 0..n {
            log_binom[k + 1] = log_binom[k] + ((n - k) as f64 / (k + 1) as f64).ln();
        }
        let half_ln2n = 0.5 * n as f64 * std::f64::consts::LN_2;
        let mut c: Vec<Complex64> =
            log_binom.iter().map(|&l| Complex64::new((0.5 * l - half_ln2n).exp(), 0.0)).collect();
        let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut c {
            *z /= norm;
        }
        Self { coefficients: c }
    }

    /// Applies `exp(-i μ/2 J_3²)`.
    pub fn twisted(mut self, twist: f64) -> Self {
        let j = 0.5 * (self.coefficients.len() - 1) as f64;
        for (k, z) in self.coefficients.iter_mut().enumerate() {
            let m = k as f64 - j;
            *z *= Complex64::from_polar(1.0, -0.5 * twist * m * m);
        }
        self
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }

    /// First and symmetrized second moments of `J_1, J_2, J_3`.
    pub fn moments(&self) -> SpinMoments {
        let c = &self.coefficients;
        let dim = c.len();
        let j = 0.5 * (dim - 1) as f64;
        // J_+ |m⟩ = sqrt(j(j+1) - m(m+1)) |m+1⟩
        let raise: Vec<f64> = (0..dim)
            .map(|k| {
                let m = k as f64 - j;
                (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
            })
            .collect();
        let mut v1 = vec![Complex64::default(); dim];
        let mut v2 = vec![Complex64::default(); dim];
        let mut v3 = vec![Complex64::default(); dim];
        for k in 0..dim {
            // (J_+ c)_k and (J_- c)_k
            let up = if k > 0 { c[k - 1] * raise[k - 1] } else { Complex64::default() };
            let down = if k + 1 < dim { c[k + 1] * raise[k] } else { Complex64::default() };
            v1[k] = 0.5 * (up + down);
            v2[k] = (up - down) * Complex64::new(0.0, -0.5);
            v3[k] = c[k] * (k as f64 - j);
        }
        let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
        };
        let vs = [&v1, &v2, &v3];
        let mut p = Polarization::zeros();
        p[0] = j * self.norm_sqr();
        for a in 0..3 {
            p[a + 1] = dot(c, vs[a]);
        }
        let mut g = Covariance::zeros();
        for a in 0..3 {
            for b in a..3 {
                let v = dot(vs[a], vs[b]) - p[a + 1] * p[b + 1];
                g[(a + 1, b + 1)] = v;
                g[(b + 1, a + 1)] = v;
            }
        }
        SpinMoments { polarization: p, covariance: g }
    }
}

pub fn css_moments(atoms: u32) -> SpinMoments {
    let n = atoms as f64;
    SpinMoments {
        polarization: Polarization::new(0.5 * n, 0.5 * n, 0.0, 0.0),
        covariance: Covariance::from_diagonal(&Polarization::new(0.0, 0.0, 0.25 * n, 0.25 * n)),
    }
}

/// Moments of the twisted coherent state before any readout rotation.
pub fn oat_moments(atoms: u32, twist: f64) -> SpinMoments {
    DickeState::coherent(atoms).twisted(twist).moments()
}

/// Moments after `exp(-iθ J_1)`: `(J_2, J_3)` rotate by `+θ`.
pub fn rotate_about_1(m: &SpinMoments, theta: f64) -> SpinMoments {
    let (s, c) = theta.sin_cos();
    let mut r = Matrix4::identity();
    r[(2, 2)] = c;
    r[(2, 3)] = -s;
    r[(3, 2)] = s;
    r[(3, 3)] = c;
    m.transformed(&r)
}

/// Rotation angle in `[0, π)` minimizing the variance along axis 2.
pub fn optimal_theta(m: &SpinMoments) -> f64 {
    let g = &m.covariance;
    let half_diff = 0.5 * (g[(3, 3)] - g[(2, 2)]);
    let off = g[(2, 3)];
    let mean = 0.5 * (g[(2, 2)] + g[(3, 3)]);
    if half_diff.hypot(off) <= 1e-13 * mean.abs() {
        return 0.0;
    }
    wrap_half_turn(0.5 * off.atan2(half_diff))
}

/// Rotation angle in `[0, π)` that puts the minimum-variance direction of the
/// (2,3) plane along the unit direction at angle `direction` from axis 2.
pub fn aligned_theta(m: &SpinMoments, direction: f64) -> f64 {
    wrap_half_turn(optimal_theta(m) + direction)
}

fn wrap_half_turn(x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let y = x.rem_euclid(pi);
    if y >= pi {
        0.0
    } else {
        y
    }
}

/// `ξ = sqrt(N Var J_2) / ⟨J_1⟩`.
pub fn wineland_xi(m: &SpinMoments) -> Result<f64, StatesError> {
    let p1 = m.polarization[1];
    if !(p1 > 0.0) {
        return Err(StatesError::DepolarizedState(p1));
    }
    Ok((m.atom_number() * m.covariance[(2, 2)].max(0.0)).sqrt() / p1)
}

/// Squeezing of the twisted state at its best readout angle.
pub fn squeezing(atoms: u32, twist: f64) -> Result<f64, StatesError> {
    let m = oat_moments(atoms, twist);
    wineland_xi(&rotate_about_1(&m, optimal_theta(&m)))
}

/// Strongest useful squeezing of a twisted state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OatOptimum {
    pub twist: f64,
    pub xi: f64,
}

/// Minimum of `ξ(μ)` on its first basin.
pub fn ideal_minimum(atoms: u32) -> Result<OatOptimum, StatesError> {
    if atoms == 0 {
        return Err(StatesError::NoAtoms);
    }
    if atoms < 2 {
        return Ok(OatOptimum { twist: 0.0, xi: 1.0 });
    }
    // Optimal twist scales like N^(-2/3).
    let scale = (0.5 * atoms as f64).powf(-2.0 / 3.0);
    let hi = (10.0 * scale).min(std::f64::consts::PI);
    let grid: Vec<f64> = geomspace(1e-3 * scale, hi, 64).iter().map(|x| x.ln()).collect();
    let objective = |l: f64| match squeezing(atoms, l.exp()) {
        Err(StatesError::DepolarizedState(_)) => Ok(f64::INFINITY),
        other => other,
    };
    let best = scan_then_golden(objective, &grid, 1e-9)?;
    Ok(OatOptimum { twist: best.x.exp(), xi: best.value })
}

/// Twist producing squeezing `target` on the branch `0 ≤ μ ≤ μ_opt`.
pub fn xi_to_mu(atoms: u32, target: f64) -> Result<f64, StatesError> {
    let opt = ideal_minimum(atoms)?;
    xi_to_mu_with(atoms, target, &opt)
}

/// [`xi_to_mu`] with a precomputed optimum.
pub fn xi_to_mu_with(atoms: u32, target: f64, opt: &OatOptimum) -> Result<f64, StatesError> {
    if !(target >= opt.xi && target <= 1.0) {
        return Err(StatesError::OutOfRange { target, min: opt.xi });
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    if target == opt.xi {
        return Ok(opt.twist);
    }
    let f = |mu: f64| squeezing(atoms, mu).map(|x| x - target);
    let (mu, _) = brent_root(f, 0.0, opt.twist, 1.0 - target, opt.xi - target, 1e-12 * opt.twist, 0.0, 400)?;
    Ok(mu)
}
