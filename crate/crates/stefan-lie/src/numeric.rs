//! Shared numerical kernels: adaptive quadrature, bracketed scalar root
//! finding, a damped two-dimensional Newton iteration, and a fixed-step RK4
//! used for integrating one-parameter group flows.

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("non-finite value in {context} at {at}")]
    NonFinite { context: &'static str, at: f64 },
    #[error("iteration limit reached in {context}")]
    IterationLimit { context: &'static str },
    #[error("singular Jacobian in Newton iteration")]
    SingularJacobian,
    #[error("quadrature did not converge: error {achieved:.3e} > requested {requested:.3e}")]
    QuadratureDidNotConverge { achieved: f64, requested: f64 },
    #[error("{0}")]
    Eval(String),
}

// ---------------------------------------------------------------------------
// Gauss-Kronrod 7/15 adaptive quadrature
// ---------------------------------------------------------------------------

// Kronrod-15 abscissae on [0, 1] side of the symmetric rule.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

// Gauss-7 weights, matching XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

const MAX_QUAD_INTERVALS: usize = 4096;

/// One Gauss-Kronrod 7/15 panel: returns (kronrod value, |kronrod - gauss|,
/// integral of |f|).  The last is the scale of the panel's roundoff floor.
fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64, f64), NumericError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    let mut resabs = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (fp, fm) = if x == 0.0 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c + h * x), f(c - h * x))
        };
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NumericError::NonFinite { context: "quadrature integrand", at: c + h * x });
        }
        let pair = if x == 0.0 { fp } else { fp + fm };
        kronrod += wk * pair;
        resabs += wk * (fp.abs() + fm.abs());
        if i % 2 == 1 || x == 0.0 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * h, (kronrod - gauss).abs() * h.abs(), resabs * h.abs()))
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `tol`,
/// Gauss-Kronrod panels with interval bisection.  Signed: `a > b` integrates
/// backwards.
pub fn adaptive_quad(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, NumericError> {
    if a == b {
        return Ok(0.0);
    }
    let (value, err, resabs) = gk15(f, a, b)?;
    let mut stack = vec![(a, b, value, err, resabs)];
    let mut total = 0.0;
    let mut slack = tol;
    let mut panels = 0usize;
    while let Some((a, b, value, err, resabs)) = stack.pop() {
        panels += 1;
        if panels > MAX_QUAD_INTERVALS {
            return Err(NumericError::QuadratureDidNotConverge { achieved: err, requested: tol });
        }
        // Accept a panel when its error fits the remaining budget
        // proportionally to its length, or when the estimate has hit the
        // panel's roundoff floor and bisection cannot improve it.
        let share = slack
            * ((b - a).abs()
                / (stack.iter().map(|(p, q, _, _, _)| (q - p).abs()).sum::<f64>()
                    + (b - a).abs()));
        let floor = 50.0 * f64::EPSILON * resabs;
        if err <= share.max(floor).max(1e-300)
            || (b - a).abs() < 1e-14 * (a.abs() + b.abs() + 1.0)
        {
            total += value;
            slack = (slack - err).max(tol * 1e-3);
            continue;
        }
        let m = 0.5 * (a + b);
        let (v1, e1, r1) = gk15(f, a, m)?;
        let (v2, e2, r2) = gk15(f, m, b)?;
        stack.push((a, m, v1, e1, r1));
        stack.push((m, b, v2, e2, r2));
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Scalar root finding
// ---------------------------------------------------------------------------

/// Subintervals of `[lo, hi]` (n probes) where `f` changes sign.  Probe
/// points where `f` fails to evaluate are skipped.
pub fn scan_brackets(
    f: &mut dyn FnMut(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let Some(fx) = f(x).filter(|v| v.is_finite()) else {
            prev = None;
            continue;
        };
        if let Some((px, pf)) = prev {
            if pf == 0.0 {
                out.push((px, px));
            } else if pf * fx < 0.0 {
                out.push((px, x));
            }
        }
        prev = Some((x, fx));
    }
    if let Some((px, pf)) = prev {
        if pf == 0.0 {
            out.push((px, px));
        }
    }
    out
}

/// Root of `f` inside the bracket `[a, b]` (`f(a)` and `f(b)` of opposite
/// sign): bisection with a secant candidate each step, converging on the
/// bracket width `tol`.
pub fn bracket_root(
    f: &mut dyn FnMut(f64) -> Result<f64, NumericError>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, NumericError> {
    let mut lo = a;
    let mut hi = b;
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(NumericError::NoBracket { lo: a, hi: b });
    }
    let mut fhi = fhi;
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        // Secant candidate, forced strictly inside; fall back to midpoint.
        let mut x = if (fhi - flo).abs() > 1e-300 {
            lo - flo * (hi - lo) / (fhi - flo)
        } else {
            0.5 * (lo + hi)
        };
        let margin = 0.01 * (hi - lo);
        if !(x > lo + margin && x < hi - margin) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if flo * fx < 0.0 {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Newton iterations from `x0` with analytic derivative, clamped to stay
/// inside `[lo, hi]`; bisection-free polish used after bracketing.
pub fn newton_polish(
    f: &mut dyn FnMut(f64) -> Result<f64, NumericError>,
    df: &mut dyn FnMut(f64) -> Result<f64, NumericError>,
    x0: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, NumericError> {
    let mut x = x0;
    for _ in 0..60 {
        let fx = f(x)?;
        let dfx = df(x)?;
        if dfx == 0.0 {
            return Ok(x);
        }
        let step = fx / dfx;
        let next = (x - step).clamp(lo, hi);
        if (next - x).abs() <= tol {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Secant iteration without a bracket; used where the residual is known to
/// be monotone (e.g. far-field slope shooting).
pub fn secant(
    f: &mut dyn FnMut(f64) -> Result<f64, NumericError>,
    x0: f64,
    x1: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, NumericError> {
    let mut a = x0;
    let mut b = x1;
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    for _ in 0..max_iter {
        if fb.abs() <= tol {
            return Ok(b);
        }
        let denom = fb - fa;
        if denom.abs() < 1e-300 {
            return Err(NumericError::IterationLimit { context: "secant (flat residual)" });
        }
        let c = b - fb * (b - a) / denom;
        if !c.is_finite() {
            return Err(NumericError::NonFinite { context: "secant", at: b });
        }
        a = b;
        fa = fb;
        b = c;
        fb = f(b)?;
    }
    if fb.abs() <= tol * 10.0 {
        Ok(b)
    } else {
        Err(NumericError::IterationLimit { context: "secant" })
    }
}

/// Damped Newton for a 2-component residual with forward-difference
/// Jacobian.  `guard` rejects trial points outside the admissible region
/// (treated like a failed residual evaluation: the step is damped).
pub fn newton2(
    residual: &mut dyn FnMut([f64; 2]) -> Result<[f64; 2], NumericError>,
    guard: &dyn Fn([f64; 2]) -> bool,
    x0: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> Result<([f64; 2], [f64; 2]), NumericError> {
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut x = x0;
    if !guard(x) {
        return Err(NumericError::Eval("initial Newton iterate violates constraints".into()));
    }
    let mut r = residual(x)?;
    for _ in 0..max_iter {
        if norm(r) <= tol {
            return Ok((x, r));
        }
        // Forward-difference Jacobian.
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let h = 1e-7 * x[j].abs().max(1e-3);
            let mut xp = x;
            xp[j] += h;
            if !guard(xp) {
                xp[j] = x[j] - h;
            }
            let rp = residual(xp)?;
            for i in 0..2 {
                jac[i][j] = (rp[i] - r[i]) / (xp[j] - x[j]);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(NumericError::SingularJacobian);
        }
        let dx = [
            (-r[0] * jac[1][1] + r[1] * jac[0][1]) / det,
            (-r[1] * jac[0][0] + r[0] * jac[1][0]) / det,
        ];
        // Halve the step until the residual norm decreases.
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 256.0 {
            let trial = [x[0] + lambda * dx[0], x[1] + lambda * dx[1]];
            if guard(trial) {
                if let Ok(rt) = residual(trial) {
                    if norm(rt) < norm(r) || norm(rt) <= tol {
                        x = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(NumericError::IterationLimit { context: "damped Newton (no descent)" });
        }
    }
    if norm(r) <= tol {
        Ok((x, r))
    } else {
        Err(NumericError::IterationLimit { context: "damped Newton" })
    }
}

// ---------------------------------------------------------------------------
// Fixed-step RK4 (group flows, small auxiliary ODEs)
// ---------------------------------------------------------------------------

/// Classical RK4 from `s0` to `s1` in `n_steps` equal steps.
pub fn rk4<const N: usize>(
    f: &mut dyn FnMut(f64, &[f64; N]) -> Result<[f64; N], NumericError>,
    s0: f64,
    s1: f64,
    y0: [f64; N],
    n_steps: usize,
) -> Result<[f64; N], NumericError> {
    let h = (s1 - s0) / n_steps as f64;
    let mut y = y0;
    let mut s = s0;
    let axpy = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += c * k[i];
        }
        out
    };
    for _ in 0..n_steps {
        let k1 = f(s, &y)?;
        let k2 = f(s + 0.5 * h, &axpy(&y, &k1, 0.5 * h))?;
        let k3 = f(s + 0.5 * h, &axpy(&y, &k2, 0.5 * h))?;
        let k4 = f(s + h, &axpy(&y, &k3, h))?;
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
    }
    Ok(y)
}
