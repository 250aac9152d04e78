//! Brute-force reference for the moment-transport relations.
//!
//! A sub-unitary two-port `Z` is embedded in a 4×4 unitary by adjoining two
//! loss modes, and a few-atom state is pushed through the resulting
//! one-body map in the full Fock space. Detected-port moments are then read
//! off directly. Deliberately naive.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::spin_io::{self, pauli, Covariance, Polarization, SpinMoments};
use crate::states;

/// Largest atom number the oracle accepts.
pub const ORACLE_CAP: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("transfer matrix has singular value {0} > 1")]
    NotSubUnitary(f64),
    #[error("{0} atoms exceed the oracle cap of {ORACLE_CAP}")]
    CapExceeded(u32),
}

type Occupation = [u8; 4];

/// Superposition of four-mode Fock states (modes 1, 2 detected; 3, 4 loss).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FockState4 {
    pub amplitudes: BTreeMap<Occupation, Complex64>,
}

impl FockState4 {
    pub fn vacuum() -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert([0; 4], Complex64::new(1.0, 0.0));
        Self { amplitudes }
    }

    /// Applies `Σ_j w_j a_j†`.
    pub fn create(&self, w: &[Complex64; 4]) -> Self {
        let mut out = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            for j in 0..4 {
                if w[j] == Complex64::default() {
                    continue;
                }
                let mut next = *occ;
                next[j] += 1;
                let f = (next[j] as f64).sqrt();
                *out.entry(next).or_insert(Complex64::default()) += amp * w[j] * f;
            }
        }
        Self { amplitudes: out }
    }

    /// Applies `Σ_{i,j ∈ {1,2}} m_ij a_i† a_j`.
    pub fn bilinear(&self, m: &Matrix2<Complex64>) -> Self {
        let mut out = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            for j in 0..2 {
                if occ[j] == 0 {
                    continue;
                }
                let mut mid = *occ;
                let fj = (mid[j] as f64).sqrt();
                mid[j] -= 1;
                for i in 0..2 {
                    let mut next = mid;
                    next[i] += 1;
                    let fi = (next[i] as f64).sqrt();
                    *out.entry(next).or_insert(Complex64::default()) += amp * m[(i, j)] * fi * fj;
                }
            }
        }
        Self { amplitudes: out }
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .filter_map(|(k, a)| other.amplitudes.get(k).map(|b| a.conj() * b))
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(mut self, s: Complex64) -> Self {
        for a in self.amplitudes.values_mut() {
            *a *= s;
        }
        self
    }

    pub fn total_number(&self) -> Option<u32> {
        let mut it = self.amplitudes.keys().map(|o| o.iter().map(|&n| n as u32).sum::<u32>());
        let first = it.next()?;
        it.all(|n| n == first).then_some(first)
    }

    fn add_scaled(&mut self, other: &Self, s: Complex64) {
        for (k, a) in &other.amplitudes {
            *self.amplitudes.entry(*k).or_default() += a * s;
        }
    }
}

/// 4×4 unitary whose upper-left block is the detected transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dilation {
    pub matrix: Matrix4<Complex64>,
}

impl Dilation {
    pub fn identity() -> Self {
        Self { matrix: Matrix4::identity() }
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.matrix.adjoint() * self.matrix - Matrix4::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn detected_block(&self) -> Matrix2<Complex64> {
        self.matrix.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

fn defect_roots(z: &Matrix2<Complex64>) -> Result<(Matrix2<Complex64>, Matrix2<Complex64>), OracleError> {
    let svd = z.svd(true, true);
    let w = svd.u.unwrap();
    let v = svd.v_t.unwrap().adjoint();
    let smax = svd.singular_values.max();
    if smax > 1.0 + 1e-10 {
        return Err(OracleError::NotSubUnitary(smax));
    }
    let d = Matrix2::from_diagonal(&svd.singular_values.map(|s| Complex64::new((1.0 - s * s).max(0.0).sqrt(), 0.0)));
    // (I - Z Z†)^{1/2} and (I - Z† Z)^{1/2}
    Ok((w * d * w.adjoint(), v * d * v.adjoint()))
}

/// Unitary completion `[[Z, (I − ZZ†)^½], [(I − Z†Z)^½, −Z†]]`.
pub fn dilate(z: &Matrix2<Complex64>) -> Result<Dilation, OracleError> {
    dilate_with(z, &Matrix2::identity(), &Matrix2::identity())
}

/// Completion with the loss blocks dressed by unitaries `k` (loss inputs) and
/// `l` (loss outputs). Every choice reproduces `Z` on the detected ports.
pub fn dilate_with(
    z: &Matrix2<Complex64>,
    k: &Matrix2<Complex64>,
    l: &Matrix2<Complex64>,
) -> Result<Dilation, OracleError> {
    let (left, right) = defect_roots(z)?;
    let mut u = Matrix4::zeros();
    u.fixed_view_mut::<2, 2>(0, 0).copy_from(z);
    u.fixed_view_mut::<2, 2>(0, 2).copy_from(&(left * k));
    u.fixed_view_mut::<2, 2>(2, 0).copy_from(&(l * right));
    u.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-(l * z.adjoint() * k)));
    Ok(Dilation { matrix: u })
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `e^{-iθJ_1} e^{-iμ/2 J_3²} ((a_1† + a_2†)/√2)^N |vac⟩ / √N!` by explicit
/// operator application.
pub fn build_oat_fock(atoms: u32, twist: f64, theta: f64) -> Result<FockState4, OracleError> {
    if atoms > ORACLE_CAP {
        return Err(OracleError::CapExceeded(atoms));
    }
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let o = Complex64::default();
    let mut state = FockState4::vacuum();
    for _ in 0..atoms {
        state = state.create(&[r, r, o, o]);
    }
    state = state.scaled(Complex64::new(1.0 / factorial(atoms).sqrt(), 0.0));

    // Two-mode basis |n, N − n⟩, n = 0..N.
    let n = atoms as usize;
    let mut amps: Vec<Complex64> = (0..=n)
        .map(|k| {
            let occ = [k as u8, (n - k) as u8, 0, 0];
            let jz = 0.5 * (k as f64 - (n - k) as f64);
            state.amplitudes.get(&occ).copied().unwrap_or_default() * Complex64::from_polar(1.0, -0.5 * twist * jz * jz)
        })
        .collect();

    // J_1 = (a_1† a_2 + a_2† a_1)/2 in the same basis.
    let mut j1 = DMatrix::<f64>::zeros(n + 1, n + 1);
    for k in 0..n {
        let e = 0.5 * (((k + 1) * (n - k)) as f64).sqrt();
        j1[(k + 1, k)] = e;
        j1[(k, k + 1)] = e;
    }
    let eig = SymmetricEigen::new(j1);
    let vecs = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -theta * l)));
    let rot = &vecs * phases * vecs.transpose();
    let v = DMatrix::from_column_slice(n + 1, 1, &amps);
    let rotated = rot * v;
    amps = rotated.iter().copied().collect();

    let mut out = FockState4::default();
    for (k, a) in amps.into_iter().enumerate() {
        out.amplitudes.insert([k as u8, (n - k) as u8, 0, 0], a);
    }
    Ok(out)
}

/// Image of `state` under the one-body map `a_k† → Σ_j U_jk a_j†`.
pub fn apply_dilation(state: &FockState4, u: &Dilation) -> FockState4 {
    let mut out = FockState4::default();
    for (occ, &amp) in &state.amplitudes {
        let mut term = FockState4::vacuum();
        let mut norm = 1.0;
        for (k, &count) in occ.iter().enumerate() {
            let column = [u.matrix[(0, k)], u.matrix[(1, k)], u.matrix[(2, k)], u.matrix[(3, k)]];
            for _ in 0..count {
                term = term.create(&column);
            }
            norm *= factorial(count as u32);
        }
        out.add_scaled(&term, amp / norm.sqrt());
    }
    out
}

/// Moments of the detected pseudo-spin `S_α = ½ Σ a_i† [σ_α]_ij a_j`.
pub fn detected_moments(state: &FockState4) -> SpinMoments {
    let s = pauli();
    let images: Vec<FockState4> = s.iter().map(|sig| state.bilinear(&(sig * Complex64::new(0.5, 0.0)))).collect();
    let mut p = Polarization::zeros();
    for a in 0..4 {
        p[a] = state.inner(&images[a]).re;
    }
    let mut g = Covariance::zeros();
    for a in 0..4 {
        for b in 0..4 {
            // ½⟨{S_a, S_b}⟩ = Re⟨S_a ψ | S_b ψ⟩ for Hermitian S.
            g[(a, b)] = images[a].inner(&images[b]).re - p[a] * p[b];
        }
    }
    SpinMoments { polarization: p, covariance: g }
}

pub fn exact_output_moments(state: &FockState4, u: &Dilation) -> SpinMoments {
    detected_moments(&apply_dilation(state, u))
}

/// Random 2×2 matrix with largest singular value in `(0.2, 1]`; one in five is
/// exactly unitary.
pub fn random_sub_unitary<R: Rng>(rng: &mut R) -> Matrix2<Complex64> {
    let mut g = Matrix2::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    if rng.gen_bool(0.2) {
        let qr = g.qr();
        g = qr.q();
        return g;
    }
    let smax = g.singular_values().max();
    g * Complex64::new(rng.gen_range(0.2..1.0) / smax, 0.0)
}

pub fn random_unitary<R: Rng>(rng: &mut R) -> Matrix2<Complex64> {
    Matrix2::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).qr().q()
}

/// Closed-form output moments. With `flip_noise` the loss noise enters with
/// the wrong sign; used to check that the comparison catches it.
pub fn closed_form_output(input: &SpinMoments, z: &Matrix2<Complex64>, flip_noise: bool) -> SpinMoments {
    let q = spin_io::q_matrix_single(z, &Matrix2::zeros()).expect("real transport trace").q;
    let out = spin_io::propagate_moments(input, &q);
    if flip_noise {
        SpinMoments { polarization: out.polarization, covariance: out.covariance - 2.0 * out.noise }
    } else {
        out.moments()
    }
}

pub fn max_deviation(a: &SpinMoments, b: &SpinMoments) -> f64 {
    let dp = (a.polarization - b.polarization).amax();
    let dg = (a.covariance - b.covariance).amax();
    dp.max(dg)
}

/// One random comparison between the oracle and the closed-form relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub atoms: u32,
    pub twist: f64,
    pub theta: f64,
    pub deviation: f64,
}

/// Deterministic generator for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `trials` random `(Z, μ, θ)` per atom number; input moments come from the
/// Dicke-basis state module, outputs from the Fock oracle.
pub fn equivalence_trials(seed: u64, atoms: &[u32], trials: usize, flip_noise: bool) -> Result<Vec<Trial>, OracleError> {
    let jobs: Vec<(u32, usize)> = atoms.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(n, _))| {
            let mut rng = trial_rng(seed, i as u64);
            let z = random_sub_unitary(&mut rng);
            let twist = rng.gen_range(0.0..std::f64::consts::PI);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let input = states::rotate_about_1(&states::oat_moments(n, twist), theta);
            let expect = closed_form_output(&input, &z, flip_noise);
            let exact = exact_output_moments(&build_oat_fock(n, twist, theta)?, &dilate(&z)?);
            Ok(Trial { atoms: n, twist, theta, deviation: max_deviation(&expect, &exact) })
        })
        .collect()
}

/// Result of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Self { name: name.into(), worst, tolerance, passed: worst < tolerance }
    }
}

/// The oracle suite run by `verify`.
pub fn verification_suite(seed: u64, flip_noise: bool) -> Result<Vec<CheckReport>, OracleError> {
    let mut out = Vec::new();

    let trials = equivalence_trials(seed, &[1, 2, 3, 4, 5], 50, flip_noise)?;
    let worst = trials.iter().map(|t| t.deviation).fold(0.0, f64::max);
    out.push(CheckReport::new("closed form vs Fock dilation (N = 1..5, 50 trials each)", worst, 1e-9));

    // Completion independence and number conservation.
    let mut worst_completion: f64 = 0.0;
    let mut worst_number: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = trial_rng(seed ^ 0x9e37_79b9, i);
        let z = random_sub_unitary(&mut rng);
        let (k, l) = (random_unitary(&mut rng), random_unitary(&mut rng));
        let n = rng.gen_range(1..=6);
        let psi = build_oat_fock(n, rng.gen_range(0.0..3.0), rng.gen_range(0.0..6.0))?;
        let a = apply_dilation(&psi, &dilate(&z)?);
        let b = apply_dilation(&psi, &dilate_with(&z, &k, &l)?);
        worst_completion = worst_completion.max(max_deviation(&detected_moments(&a), &detected_moments(&b)));
        if a.total_number() != Some(n) {
            worst_number = f64::INFINITY;
        }
        worst_number = worst_number.max((a.norm_sqr() - 1.0).abs());
    }
    out.push(CheckReport::new("detected moments independent of completion", worst_completion, 1e-9));
    out.push(CheckReport::new("atom number and norm conserved", worst_number, 1e-10));

    // Dicke-basis input moments vs Fock construction.
    let mut worst_input: f64 = 0.0;
    for n in 1..=ORACLE_CAP {
        let mut rng = trial_rng(seed ^ 0x51ed_270b, n as u64);
        let (mu, th) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..6.3));
        let dicke = states::rotate_about_1(&states::oat_moments(n, mu), th);
        let fock = detected_moments(&build_oat_fock(n, mu, th)?);
        worst_input = worst_input.max(max_deviation(&dicke, &fock));
    }
    out.push(CheckReport::new("Dicke moments vs Fock state (N = 1..12)", worst_input, 1e-10));

    // Unitary transfer: no noise and orthogonal rotation block.
    let mut worst_su2: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = trial_rng(seed ^ 0x2545_f491, i);
        let z = random_unitary(&mut rng);
        let q = spin_io::q_matrix_single(&z, &Matrix2::zeros()).expect("real trace").q;
        let p = Polarization::new(3.0, rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let noise = spin_io::noise_matrix(&p, &q);
        let r = q.fixed_view::<3, 3>(1, 1).into_owned();
        let orth = (r.transpose() * r - nalgebra::Matrix3::identity()).amax();
        worst_su2 = worst_su2.max(noise.amax()).max(orth);
    }
    out.push(CheckReport::new("unitary transfer: zero noise, orthogonal rotation", worst_su2, 1e-12));

    Ok(out)
}
