//! Derivative-free scalar searches shared by the calibration and optimization
//! layers: Brent root bracketing, golden-section minimization and a
//! box-constrained Nelder–Mead.

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
///
/// Stops when the bracket is narrower than `xtol` or `|f| <= ftol`.
#[allow(clippy::too_many_arguments)]
pub fn brent_root<F, E>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    debug_assert!(fa * fb <= 0.0);
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..max_iter {
        if fb.abs() <= ftol || (b - a).abs() <= xtol {
            return Ok((b, fb));
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        let bisect = !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < xtol)
            || (!mflag && (c - d).abs() < xtol);
        if bisect {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok((b, fb))
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section<F, E>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<Minimum, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut evaluations = 0;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    evaluations += 2;
    while (hi - lo) > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Minimum { x, value, evaluations })
}

/// Coarse scan followed by golden-section refinement around the best grid
/// point. `grid` must be sorted ascending. Ties keep the smallest abscissa.
pub fn scan_then_golden<F, E>(mut f: F, grid: &[f64], xtol: f64) -> Result<Minimum, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    assert!(!grid.is_empty());
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect::<Result<_, E>>()?;
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    if grid.len() < 3 {
        return Ok(Minimum { x: grid[best], value: values[best], evaluations: grid.len() });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section(&mut f, lo, hi, xtol)?;
    let evaluations = grid.len() + refined.evaluations;
    if refined.value <= values[best] {
        Ok(Minimum { evaluations, ..refined })
    } else {
        Ok(Minimum { x: grid[best], value: values[best], evaluations })
    }
}

/// Nelder–Mead on a box; trial points are clamped into `[lo, hi]`.
pub fn nelder_mead_box<F, E, const D: usize>(
    mut f: F,
    start: [f64; D],
    step: [f64; D],
    lo: [f64; D],
    hi: [f64; D],
    ftol: f64,
    max_evals: usize,
) -> Result<([f64; D], f64), E>
where
    F: FnMut([f64; D]) -> Result<f64, E>,
{
    let clamp = |mut x: [f64; D]| {
        for k in 0..D {
            x[k] = x[k].clamp(lo[k], hi[k]);
        }
        x
    };
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    let x0 = clamp(start);
    simplex.push((x0, f(x0)?));
    for k in 0..D {
        let mut x = x0;
        x[k] += step[k];
        if x[k] > hi[k] {
            x[k] = x0[k] - step[k];
        }
        let x = clamp(x);
        simplex.push((x, f(x)?));
    }
    let mut evals = D + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[D].1 - simplex[0].1;
        if spread.abs() <= ftol {
            break;
        }
        let mut centroid = [0.0; D];
        for (x, _) in &simplex[..D] {
            for k in 0..D {
                centroid[k] += x[k] / D as f64;
            }
        }
        let worst = simplex[D];
        let along = |t: f64| {
            let mut x = [0.0; D];
            for k in 0..D {
                x[k] = centroid[k] + t * (worst.0[k] - centroid[k]);
            }
            clamp(x)
        };
        let xr = along(-1.0);
        let fr = f(xr)?;
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(xe)?;
            evals += 1;
            simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { along(-0.5) } else { along(0.5) };
            let fc = f(xc)?;
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[D] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let mut x = [0.0; D];
                    for k in 0..D {
                        x[k] = best[k] + 0.5 * (entry.0[k] - best[k]);
                    }
                    let x = clamp(x);
                    *entry = (x, f(x)?);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(simplex[0])
}

/// `n` points geometrically spaced on `[lo, hi]` (both > 0).
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo * (r * i as f64).exp() }).collect()
        }
    }
}

/// `n` points evenly spaced on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}
