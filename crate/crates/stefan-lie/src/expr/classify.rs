//! Diffusivity classification.
//!
//! The symmetry structure of the reduced system depends only on which of a
//! handful of families the diffusivities fall into, up to scalings and shifts
//! of the dependent variable: constants, exponentials `a*exp(b*s)`, powers
//! `a*(s-c)^n`, the special power `n = -4/3`, or none of these (arbitrary).
//!
//! Matching is structural on the simplified tree first; a sampled fit of
//! `log d` against linear and log-linear models is the fallback, which also
//! serves opaque numeric coefficients.

use super::{canonical_cmp, diff, eval, expand, simplify, Bindings, Exponent, Expr, Sym};
use thiserror::Error;

/// Shape of a diffusivity, with normalization data relating the input to the
/// canonical pattern: `input = scale * pattern(s - shift)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffusivityClass {
    Arbitrary,
    Constant { value: f64 },
    /// `scale * exp(rate * s)`; shifts fold into the scale.
    Exponential { scale: f64, rate: f64 },
    /// `scale * (s - shift)^exponent`
    Power { scale: f64, shift: f64, exponent: Exponent },
    /// `scale * (s - shift)^(-4/3)`
    PowerMinusFourThirds { scale: f64, shift: f64 },
}

impl DiffusivityClass {
    pub fn label(&self) -> String {
        match self {
            DiffusivityClass::Arbitrary => "arbitrary".to_string(),
            DiffusivityClass::Constant { value } => format!("constant ({value})"),
            DiffusivityClass::Exponential { rate, .. } => format!("exponential (rate {rate})"),
            DiffusivityClass::Power { exponent, .. } => format!("power (exponent {exponent})"),
            DiffusivityClass::PowerMinusFourThirds { .. } => "power (exponent -4/3)".to_string(),
        }
    }

    /// Power-law exponent as a float, if this is a power class.
    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            DiffusivityClass::Power { exponent, .. } => Some(exponent.value()),
            DiffusivityClass::PowerMinusFourThirds { .. } => Some(-4.0 / 3.0),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("diffusivity depends on `{}`; expected a function of `{}` only", .found.name(), .expected.name())]
    ForeignSymbol { expected: Sym, found: Sym },
    #[error("diffusivity is not strictly positive on the declared range: d({at}) = {value}")]
    NotPositive { at: f64, value: f64 },
    #[error("diffusivity could not be evaluated at {at}: {reason}")]
    EvalFailed { at: f64, reason: String },
    #[error("empty or inverted sample range [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },
}

const FIT_POINTS: usize = 32;
const POSITIVITY_POINTS: usize = 64;
const FIT_RESIDUAL_TOL: f64 = 1e-9;

/// Interior sample points of `(lo, hi)`; endpoints are avoided so that
/// power-law singularities at a range edge do not abort classification.
fn sample_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Classifies an expression `e(s)` on the declared range.
///
/// The expression must depend on `s` only and be strictly positive on the
/// open range (sampled).  Structural matching runs on the simplified tree;
/// when it fails, sampled fits of `ln e` against `alpha + beta*s`
/// (exponential) and `alpha + n*ln s` (power through the origin) are
/// attempted with max residual below `1e-9`.
pub fn classify_diffusivity(
    e: &Expr,
    s: Sym,
    range: (f64, f64),
) -> Result<DiffusivityClass, ClassifyError> {
    let syms = e.free_syms();
    if let Some(found) = syms.iter().find(|&sym| sym != s) {
        return Err(ClassifyError::ForeignSymbol { expected: s, found });
    }
    let f = |x: f64| -> Result<f64, String> {
        eval(e, &Bindings::new().set(s, x)).map_err(|err| err.to_string())
    };
    check_positive(&f, range)?;
    if let Some(class) = structural_match(e, s) {
        return Ok(class);
    }
    Ok(fit_samples(&f, range))
}

/// Classification for opaque numeric coefficients (e.g. composed through a
/// numeric inverse).  Only the sampled-fit path is available, so shifted
/// power laws are reported as arbitrary.
pub fn classify_samples(
    f: &dyn Fn(f64) -> Result<f64, String>,
    range: (f64, f64),
) -> Result<DiffusivityClass, ClassifyError> {
    check_positive(f, range)?;
    Ok(fit_samples(f, range))
}

fn check_positive(
    f: &dyn Fn(f64) -> Result<f64, String>,
    (lo, hi): (f64, f64),
) -> Result<(), ClassifyError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(ClassifyError::BadRange { lo, hi });
    }
    for x in sample_points(lo, hi, POSITIVITY_POINTS) {
        let v = f(x).map_err(|reason| ClassifyError::EvalFailed { at: x, reason })?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(ClassifyError::NotPositive { at: x, value: v });
        }
    }
    Ok(())
}

/// `e = a*s + b` with constant `a`, `b`? Returns `(a, b)`.
fn as_affine(e: &Expr, s: Sym) -> Option<(f64, f64)> {
    let slope = expand(&diff(e, s));
    let a = slope.is_const()?;
    let rem = expand(&(e.clone() - Expr::Const(a) * Expr::Var(s)));
    let b = rem.is_const()?;
    Some((a, b))
}

fn structural_match(e: &Expr, s: Sym) -> Option<DiffusivityClass> {
    let simplified = simplify(e);
    let (coeff, factors) = split_coefficient(simplified);
    match factors.len() {
        0 => Some(DiffusivityClass::Constant { value: coeff }),
        1 => match_single_factor(coeff, &factors[0], s),
        _ => None,
    }
}

fn split_coefficient(e: Expr) -> (f64, Vec<Expr>) {
    match e {
        Expr::Const(c) => (c, Vec::new()),
        Expr::Product(fs) => {
            let mut coeff = 1.0;
            let mut rest = Vec::new();
            for f in fs {
                match f {
                    Expr::Const(c) => coeff *= c,
                    other => rest.push(other),
                }
            }
            rest.sort_by(canonical_cmp);
            (coeff, rest)
        }
        other => (1.0, vec![other]),
    }
}

fn match_single_factor(coeff: f64, factor: &Expr, s: Sym) -> Option<DiffusivityClass> {
    match factor {
        Expr::Var(v) if *v == s => Some(make_power(coeff, 0.0, Exponent::int(1))),
        Expr::Sum(_) => {
            let (a, b) = as_affine(factor, s)?;
            if a == 0.0 {
                return Some(DiffusivityClass::Constant { value: coeff * b });
            }
            Some(make_power(coeff * a, -b / a, Exponent::int(1)))
        }
        Expr::Power(base, n) => {
            let (a, b) = as_affine(base, s)?;
            if a == 0.0 {
                return None; // constant base folds earlier; treat as arbitrary
            }
            // a*(slope*s + off)^n = a*slope^n * (s - (-off/slope))^n;
            // folding a negative slope requires an integer exponent.
            let scale = if a > 0.0 {
                coeff * a.powf(n.value())
            } else if n.is_integer() {
                coeff * a.powi(n.as_integer()? as i32)
            } else {
                return None;
            };
            Some(make_power(scale, -b / a, *n))
        }
        Expr::Exp(arg) => {
            let (a, b) = as_affine(arg, s)?;
            if a == 0.0 {
                return Some(DiffusivityClass::Constant { value: coeff * b.exp() });
            }
            Some(DiffusivityClass::Exponential { scale: coeff * b.exp(), rate: a })
        }
        _ => None,
    }
}

fn make_power(scale: f64, shift: f64, exponent: Exponent) -> DiffusivityClass {
    if exponent.matches_rational(-4, 3) {
        DiffusivityClass::PowerMinusFourThirds { scale, shift }
    } else {
        DiffusivityClass::Power { scale, shift, exponent }
    }
}

fn fit_samples(f: &dyn Fn(f64) -> Result<f64, String>, (lo, hi): (f64, f64)) -> DiffusivityClass {
    let xs = sample_points(lo, hi, FIT_POINTS);
    let mut logs = Vec::with_capacity(xs.len());
    for &x in &xs {
        match f(x) {
            Ok(v) if v > 0.0 => logs.push(v.ln()),
            _ => return DiffusivityClass::Arbitrary,
        }
    }

    // Constant: spread of ln d below tolerance.
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    if logs.iter().all(|&l| (l - mean).abs() < FIT_RESIDUAL_TOL) {
        return DiffusivityClass::Constant { value: mean.exp() };
    }

    // Exponential: ln d linear in s.
    if let Some((intercept, slope)) = linear_fit(&xs, &logs, FIT_RESIDUAL_TOL) {
        return DiffusivityClass::Exponential { scale: intercept.exp(), rate: slope };
    }

    // Power through the origin: ln d linear in ln s (positive range only).
    if xs.iter().all(|&x| x > 0.0) {
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        if let Some((intercept, slope)) = linear_fit(&lx, &logs, FIT_RESIDUAL_TOL) {
            let exponent = Exponent::Float(slope);
            return make_power(intercept.exp(), 0.0, exponent);
        }
    }

    DiffusivityClass::Arbitrary
}

/// Least-squares line through `(x, y)`; `Some((intercept, slope))` when the
/// max residual stays below `tol`.
fn linear_fit(xs: &[f64], ys: &[f64], tol: f64) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let sx = xs.iter().sum::<f64>();
    let sy = ys.iter().sum::<f64>();
    let sxx = xs.iter().map(|x| x * x).sum::<f64>();
    let sxy = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let max_resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (max_resid < tol).then_some((intercept, slope))
}
