//! Adaptive Dormand–Prince 8(5,3) integrator for complex linear systems.
//!
//! The state is a flat slice of complex amplitudes; the right-hand side is
//! supplied as a closure writing `dy/dt` into a preallocated buffer. Error
//! control follows Hairer's DOP853 (combined 5th/3rd order estimator).

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { max_steps: usize, t: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on a single step, keeps fast oscillations from being skipped
    /// when the drive is momentarily negligible.
    pub h_max: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (with `t1 > t0`), overwriting `y`.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y: &mut [Complex64],
    tol: Tolerances,
) -> Result<Stats, OdeError>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len();
    let mut stats = Stats::default();
    if t1 <= t0 || n == 0 {
        return Ok(stats);
    }
    let mut k: Vec<Vec<Complex64>> = (0..12).map(|_| vec![Complex64::default(); n]).collect();
    let mut stage = vec![Complex64::default(); n];
    let mut y_new = vec![Complex64::default(); n];

    let span = t1 - t0;
    let h_max = tol.h_max.min(span);
    let mut t = t0;

    rhs(t, y, &mut k[0]);
    stats.rhs_evals += 1;
    let mut h = initial_step(y, &k[0], span, tol).min(h_max);
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(OdeError::StepBudget { max_steps: tol.max_steps, t });
        }
        if t + 1.01 * h >= t1 {
            h = t1 - t;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) * 10.0 {
            return Err(OdeError::StepUnderflow { t, h });
        }

        // Stages 2..=12 (k[1]..k[11]); k[0] holds f(t, y).
        for s in 1..12 {
            let row = A[s];
            for i in 0..n {
                let mut acc = Complex64::default();
                for (j, &a) in row.iter().enumerate() {
                    if a != 0.0 {
                        acc += k[j][i] * a;
                    }
                }
                stage[i] = y[i] + acc * h;
            }
            rhs(t + C[s] * h, &stage, &mut k[s]);
        }
        stats.rhs_evals += 11;

        // 8th-order solution.
        for i in 0..n {
            let mut acc = Complex64::default();
            for (j, &b) in B.iter().enumerate() {
                if b != 0.0 {
                    acc += k[j][i] * b;
                }
            }
            y_new[i] = y[i] + acc * h;
        }

        // Error estimate; k[11] is the stage evaluated at t + h.
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for i in 0..n {
            let sk = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
            let mut bsum = Complex64::default();
            for (j, &b) in B.iter().enumerate() {
                if b != 0.0 {
                    bsum += k[j][i] * b;
                }
            }
            let e3 = bsum - k[0][i] * BHH[0] - k[8][i] * BHH[1] - k[11][i] * BHH[2];
            let mut e5 = Complex64::default();
            for (j, &e) in ER.iter().enumerate() {
                if e != 0.0 {
                    e5 += k[j][i] * e;
                }
            }
            err3 += (e3 / sk).norm_sqr();
            err5 += (e5 / sk).norm_sqr();
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 * (1.0 / (deno * (n as f64))).sqrt();

        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / SAFETY).clamp(1.0 / 6.0, 1.0 / 0.333);
        let mut h_new = h / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            t += h;
            y.copy_from_slice(&y_new);
            if t >= t1 {
                return Ok(stats);
            }
            rhs(t, y, &mut k[0]);
            stats.rhs_evals += 1;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
        } else {
            h_new = h / (1.0 / 0.333f64).min(fac11 / SAFETY);
            stats.rejected += 1;
            last_rejected = true;
        }
        h = h_new.min(h_max);
    }
}

fn initial_step(y: &[Complex64], f0: &[Complex64], span: f64, tol: Tolerances) -> f64 {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sk = tol.atol + tol.rtol * yi.norm();
        dnf += (fi / sk).norm_sqr();
        dny += (yi / sk).norm_sqr();
    }
    let h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h.min(span).max(1e-12 * span)
}

const SAFETY: f64 = 0.9;

// Tableau coefficients are kept as published, digits beyond f64 included.

#[allow(clippy::excessive_precision)]
const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488E-01,
    0.789002279381515978178381316732E-01,
    0.118350341907227396726757197510E+00,
    0.281649658092772603273242802490E+00,
    0.333333333333333333333333333333E+00,
    0.25E+00,
    0.307692307692307692307692307692E+00,
    0.651282051282051282051282051282E+00,
    0.6E+00,
    0.857142857142857142857142857142E+00,
    1.0,
];

#[allow(clippy::excessive_precision)]
#[rustfmt::skip]
const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.26001519587677318785587544488E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.97250569845378994544595329183E-2, 5.91751709536136983633785987549E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.95875854768068491816892993775E-2, 0.0, 8.87627564304205475450678981324E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.41365134159266685502369798665E-1, 0.0, -8.84549479328286085344864962717E-1, 9.24834003261792003115737966543E-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7037037037037037037037037037E-2, 0.0, 0.0, 1.70828608729473871279604482173E-1, 1.25467687566822425016691814123E-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7109375E-2, 0.0, 0.0, 1.70252211019544039314978060272E-1, 6.02165389804559606850219397283E-2, -1.7578125E-2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.70920001185047927108779319836E-2, 0.0, 0.0, 1.70383925712239993810214054705E-1, 1.07262030446373284651809199168E-1, -1.53194377486244017527936158236E-2, 8.27378916381402288758473766002E-3, 0.0, 0.0, 0.0, 0.0],
    [6.24110958716075717114429577812E-1, 0.0, 0.0, -3.36089262944694129406857109825E0, -8.68219346841726006818189891453E-1, 2.75920996994467083049415600797E1, 2.01540675504778934086186788979E1, -4.34898841810699588477366255144E1, 0.0, 0.0, 0.0],
    [4.77662536438264365890433908527E-1, 0.0, 0.0, -2.48811461997166764192642586468E0, -5.90290826836842996371446475743E-1, 2.12300514481811942347288949897E1, 1.52792336328824235832596922938E1, -3.32882109689848629194453265587E1, -2.03312017085086261358222928593E-2, 0.0, 0.0],
    [-9.3714243008598732571704021658E-1, 0.0, 0.0, 5.18637242884406370830023853209E0, 1.09143734899672957818500254654E0, -8.14978701074692612513997267357E0, -1.85200656599969598641566180701E1, 2.27394870993505042818970056734E1, 2.49360555267965238987089396762E0, -3.0467644718982195003823669022E0, 0.0],
    [2.27331014751653820792359768449E0, 0.0, 0.0, -1.05344954667372501984066689879E1, -2.00087205822486249909675718444E0, -1.79589318631187989172765950534E1, 2.79488845294199600508499808837E1, -2.85899827713502369474065508674E0, -8.87285693353062954433549289258E0, 1.23605671757943030647266201528E1, 6.43392746015763530355970484046E-1],
];

#[allow(clippy::excessive_precision)]
#[rustfmt::skip]
const B: [f64; 12] = [
    5.42937341165687622380535766363E-2, 0.0, 0.0, 0.0, 0.0,
    4.45031289275240888144113950566E0,
    1.89151789931450038304281599044E0,
    -5.8012039600105847814672114227E0,
    3.1116436695781989440891606237E-1,
    -1.52160949662516078556178806805E-1,
    2.01365400804030348374776537501E-1,
    4.47106157277725905176885569043E-2,
];

#[allow(clippy::excessive_precision)]
const BHH: [f64; 3] = [
    0.244094488188976377952755905512E+00,
    0.733846688281611857341361741547E+00,
    0.220588235294117647058823529412E-01,
];

#[allow(clippy::excessive_precision)]
#[rustfmt::skip]
const ER: [f64; 12] = [
    0.1312004499419488073250102996E-01, 0.0, 0.0, 0.0, 0.0,
    -0.1225156446376204440720569753E+01,
    -0.4957589496572501915214079952E+00,
    0.1664377182454986536961530415E+01,
    -0.3503288487499736816886487290E+00,
    0.3341791187130174790297318841E+00,
    0.8192320648511571246570742613E-01,
    -0.2235530786388629525884427845E-01,
];

#[cfg(test)]
mod tests {
    use super::*;

    fn tol(rtol: f64) -> Tolerances {
        Tolerances { rtol, atol: rtol, max_steps: 1_000_000, h_max: f64::INFINITY }
    }

    #[test]
    fn harmonic_phase_is_exact_to_tolerance() {
        let omega = 7.3;
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let stats = integrate(
            |_, y, dy| dy[0] = Complex64::new(0.0, -omega) * y[0],
            0.0,
            3.0,
            &mut y,
            tol(1e-11),
        )
        .unwrap();
        let exact = Complex64::from_polar(1.0, -omega * 3.0);
        assert!((y[0] - exact).norm() < 1e-9, "{} vs {}", y[0], exact);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn time_dependent_rate_matches_closed_form() {
        // y' = -i t^2 y  =>  y(t) = exp(-i t^3 / 3)
        let mut y = vec![Complex64::new(1.0, 0.0)];
        integrate(
            |t, y, dy| dy[0] = Complex64::new(0.0, -t * t) * y[0],
            0.0,
            2.5,
            &mut y,
            tol(1e-12),
        )
        .unwrap();
        let exact = Complex64::from_polar(1.0, -2.5f64.powi(3) / 3.0);
        assert!((y[0] - exact).norm() < 1e-10);
    }

    #[test]
    fn error_shrinks_at_high_order() {
        let run = |rtol: f64| {
            let mut y = vec![Complex64::new(1.0, 0.0)];
            integrate(
                |t, y, dy| dy[0] = Complex64::new(0.0, -(1.0 + (2.0 * t).cos())) * y[0],
                0.0,
                10.0,
                &mut y,
                tol(rtol),
            )
            .unwrap();
            let exact = Complex64::from_polar(1.0, -(10.0 + (20.0f64).sin() / 2.0));
            (y[0] - exact).norm()
        };
        assert!(run(1e-6) < 1e-5);
        assert!(run(1e-11) < 1e-9);
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let res = integrate(
            |_, y, dy| dy[0] = Complex64::new(0.0, -500.0) * y[0],
            0.0,
            10.0,
            &mut y,
            Tolerances { max_steps: 10, ..tol(1e-10) },
        );
        assert!(matches!(res, Err(OdeError::StepBudget { .. })));
    }
}
