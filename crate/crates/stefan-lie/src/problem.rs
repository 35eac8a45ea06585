//! Problem definitions and the substitution that brings a two-phase melting
//! problem with a moving evaporation surface into canonical form.
//!
//! The physical model tracks two temperature fields separated by free
//! boundaries `S1(t)` (evaporation surface) and `S2(t)` (melting front):
//!
//! ```text
//!   c1(T) rho1(T) T_t = (k1(T) T_x)_x          S1 < x < S2   (liquid)
//!   c2(T) rho2(T) T_t = (k2(T) T_x)_x          S2 < x        (solid)
//!   q(t, T) = rho1(T) l_v V1 - k1(T) T_x       x = S1
//!   V1 = h(t, T)                               x = S1
//!   T = t_melt on both sides                   x = S2
//!   k2 T_x|solid - k1 T_x|liquid = rho2 l_m V2 x = S2
//!   T -> t_far                                 x -> infinity
//! ```
//!
//! Integrating the volumetric heat capacity (`u = phi1(T)`, `v = phi2(T)`)
//! turns both heat equations into divergence form `u_t = (d1(u) u_x)_x` with
//! `d1 = k1 / (c1 rho1)` composed with the inverse map.  All downstream
//! analysis (symmetry admission, reduction, solving, validation) works on
//! the resulting [`CanonicalProblem`].

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::parse::{parse, ParseError};
use crate::expr::{eval, simplify, subst, Bindings, Expr, Sym, SymSet};
use crate::numeric::{adaptive_quad, bracket_root, newton_polish, NumericError};

const PHI_QUAD_TOL: f64 = 1e-13;
const PHI_INV_TOL: f64 = 1e-13;
const POSITIVITY_SAMPLES: usize = 48;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("field `{field}`: {source}")]
    Parse { field: String, source: ParseError },
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("failed to read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

// ---------------------------------------------------------------------------
// Coefficient functions
// ---------------------------------------------------------------------------

/// Coefficient of one state variable, either a closed-form expression (kept
/// symbolic so structure can be classified exactly) or a numeric closure
/// (produced e.g. by composing with a numerically inverted substitution).
#[derive(Clone)]
pub enum Coef {
    Expr { expr: Expr, var: Sym },
    Fn { f: Arc<dyn Fn(f64) -> Result<f64, String> + Send + Sync>, label: String },
}

impl Coef {
    pub fn from_expr(expr: Expr, var: Sym) -> Self {
        Coef::Expr { expr: simplify(&expr), var }
    }

    pub fn constant(value: f64) -> Self {
        Coef::Expr { expr: Expr::num(value), var: Sym::U }
    }

    pub fn from_fn(
        label: impl Into<String>,
        f: impl Fn(f64) -> Result<f64, String> + Send + Sync + 'static,
    ) -> Self {
        Coef::Fn { f: Arc::new(f), label: label.into() }
    }

    pub fn eval(&self, x: f64) -> Result<f64, NumericError> {
        match self {
            Coef::Expr { expr, var } => {
                let b = Bindings::new().set(*var, x);
                eval(expr, &b).map_err(|e| NumericError::Eval(e.to_string()))
            }
            Coef::Fn { f, .. } => f(x).map_err(NumericError::Eval),
        }
    }

    /// Symbolic form, when available.
    pub fn expr(&self) -> Option<(&Expr, Sym)> {
        match self {
            Coef::Expr { expr, var } => Some((expr, *var)),
            Coef::Fn { .. } => None,
        }
    }

    /// Constant value, when the coefficient is symbolically constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coef::Expr { expr: Expr::Const(c), .. } => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coef::Expr { expr, var } => write!(f, "{expr} [{}]", var.name()),
            Coef::Fn { label, .. } => write!(f, "<fn {label}>"),
        }
    }
}

/// Boundary coefficient of time and the surface state value.
#[derive(Clone)]
pub enum Coef2 {
    Expr(Expr),
    Fn { f: Arc<dyn Fn(f64, f64) -> Result<f64, String> + Send + Sync>, label: String },
}

impl Coef2 {
    pub fn from_expr(expr: Expr) -> Self {
        Coef2::Expr(simplify(&expr))
    }

    pub fn from_fn(
        label: impl Into<String>,
        f: impl Fn(f64, f64) -> Result<f64, String> + Send + Sync + 'static,
    ) -> Self {
        Coef2::Fn { f: Arc::new(f), label: label.into() }
    }

    pub fn eval(&self, t: f64, u: f64) -> Result<f64, NumericError> {
        match self {
            Coef2::Expr(expr) => {
                let b = Bindings::new().set(Sym::T, t).set(Sym::U, u);
                eval(expr, &b).map_err(|e| NumericError::Eval(e.to_string()))
            }
            Coef2::Fn { f, .. } => f(t, u).map_err(NumericError::Eval),
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Coef2::Expr(expr) => Some(expr),
            Coef2::Fn { .. } => None,
        }
    }

    /// The time-free factor `g(u) = g_hat(1, u)`, used by the reductions:
    /// both admissible time dependences (none, `1/sqrt(t)`) restrict to this
    /// at `t = 1`.
    pub fn at_unit_time(&self) -> Coef {
        match self {
            Coef2::Expr(expr) => {
                Coef::from_expr(subst(expr, Sym::T, &Expr::one()), Sym::U)
            }
            Coef2::Fn { f, label } => {
                let f = Arc::clone(f);
                Coef::from_fn(format!("{label}(1, .)"), move |u| f(1.0, u))
            }
        }
    }
}

impl fmt::Debug for Coef2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coef2::Expr(expr) => write!(f, "{expr}"),
            Coef2::Fn { label, .. } => write!(f, "<fn {label}>"),
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical problem
// ---------------------------------------------------------------------------

/// Divergence-form two-phase problem after the heat-capacity substitution.
///
/// ```text
///   u_t = (d1(u) u_x)_x                          S1 < x < S2
///   v_t = (d2(v) v_x)_x                          S2 < x
///   qhat(t, u) = rho1(u) l_v V1 - d1(u) u_x      x = S1
///   V1 = hhat(t, u)                              x = S1
///   u = u_m, v = v_m                             x = S2
///   d2(v) v_x - d1(u) u_x = rho2(v_m) l_m V2     x = S2
///   v -> v_inf                                   x -> infinity
/// ```
///
/// `V_k = -S_t / S_x` is the front velocity when the fronts are written as
/// level sets `S(t, x) = 0`.
#[derive(Clone, Debug)]
pub struct CanonicalProblem {
    pub d1: Coef,
    pub d2: Coef,
    pub rho1: Coef,
    pub rho2: Coef,
    pub qhat: Coef2,
    pub hhat: Coef2,
    pub u_m: f64,
    pub v_m: f64,
    pub v_inf: f64,
    pub l_v: f64,
    pub l_m: f64,
    /// Working range of `u` used for sampling and classification.
    pub u_range: (f64, f64),
    /// Working range of `v`; spans the far-field and melt values.
    pub v_range: (f64, f64),
}

impl CanonicalProblem {
    /// Default sampling range for the liquid variable.
    pub fn default_u_range(u_m: f64) -> (f64, f64) {
        (u_m, u_m + 3.0 * u_m.abs().max(1.0))
    }

    /// Sanity checks: positive diffusivities and densities on the working
    /// ranges, distinct melt and far-field values, positive latent heats.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let invalid = |field: &str, reason: String| ProblemError::Invalid {
            field: field.into(),
            reason,
        };
        if self.v_m == self.v_inf {
            return Err(invalid("v_inf", "far-field value must differ from the melt value".into()));
        }
        if !(self.u_range.0 < self.u_range.1) {
            return Err(invalid("u_range", "must be a nonempty interval".into()));
        }
        if !(self.v_range.0 < self.v_range.1) {
            return Err(invalid("v_range", "must be a nonempty interval".into()));
        }
        if !(self.l_v > 0.0) {
            return Err(invalid("l_v", "latent heat of evaporation must be positive".into()));
        }
        if !(self.l_m > 0.0) {
            return Err(invalid("l_m", "latent heat of melting must be positive".into()));
        }
        for (name, coef, range) in [
            ("d1", &self.d1, self.u_range),
            ("rho1", &self.rho1, self.u_range),
            ("d2", &self.d2, self.v_range),
            ("rho2", &self.rho2, self.v_range),
        ] {
            for i in 0..POSITIVITY_SAMPLES {
                let x = range.0
                    + (range.1 - range.0) * (i as f64 + 0.5) / POSITIVITY_SAMPLES as f64;
                let v = coef
                    .eval(x)
                    .map_err(|e| invalid(name, format!("failed to evaluate at {x}: {e}")))?;
                if !(v > 0.0) {
                    return Err(invalid(name, format!("must be positive; got {v} at {x}")));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Physical problem and the canonicalizing substitution
// ---------------------------------------------------------------------------

/// Material description in temperature form.  Coefficient expressions use
/// the symbol `T`; the boundary laws `q_flux` and `h_vel` may also use `t`.
#[derive(Clone, Debug)]
pub struct PhysicalProblem {
    pub c1: Expr,
    pub rho1: Expr,
    pub k1: Expr,
    pub c2: Expr,
    pub rho2: Expr,
    pub k2: Expr,
    pub q_flux: Expr,
    pub h_vel: Expr,
    pub l_v: f64,
    pub l_m: f64,
    /// Interface temperature at the melting front.
    pub t_melt: f64,
    /// Far-field temperature deep in the solid.
    pub t_far: f64,
    /// Upper working temperature of the liquid (sets the sampling range).
    pub t_hot: f64,
}

/// Monotone map `phi(T) = integral of c(z) rho(z) dz from 0 to T` with a
/// numeric inverse.
#[derive(Clone)]
pub struct PhiMap {
    integrand: Expr,
    /// Search window for the inverse, grown on demand.
    temp_window: (f64, f64),
}

impl PhiMap {
    pub fn new(c: &Expr, rho: &Expr, temp_window: (f64, f64)) -> Self {
        PhiMap { integrand: simplify(&(c.clone() * rho.clone())), temp_window }
    }

    fn integrand_at(&self, temp: f64) -> Result<f64, NumericError> {
        let b = Bindings::new().set(Sym::Temp, temp);
        eval(&self.integrand, &b).map_err(|e| NumericError::Eval(e.to_string()))
    }

    pub fn forward(&self, temp: f64) -> Result<f64, NumericError> {
        let mut bad: Option<NumericError> = None;
        let mut f = |z: f64| match self.integrand_at(z) {
            Ok(v) => v,
            Err(e) => {
                bad = Some(e);
                f64::NAN
            }
        };
        let out = adaptive_quad(&mut f, 0.0, temp, PHI_QUAD_TOL);
        match (out, bad) {
            (_, Some(e)) => Err(e),
            (res, None) => res,
        }
    }

    /// Inverse by bracketing (the integrand is positive, so `forward` is
    /// strictly increasing) followed by a Newton polish with the exact
    /// derivative `c(T) rho(T)`.
    pub fn inverse(&self, val: f64) -> Result<f64, NumericError> {
        let (mut lo, mut hi) = self.temp_window;
        let span = (hi - lo).abs().max(1.0);
        let mut flo = self.forward(lo)? - val;
        let mut fhi = self.forward(hi)? - val;
        for _ in 0..60 {
            if flo * fhi <= 0.0 {
                break;
            }
            if flo > 0.0 {
                lo -= span;
                flo = self.forward(lo)? - val;
            } else {
                hi += span;
                fhi = self.forward(hi)? - val;
            }
        }
        if flo * fhi > 0.0 {
            return Err(NumericError::NoBracket { lo, hi });
        }
        let mut f = |z: f64| Ok(self.forward(z)? - val);
        let rough = bracket_root(&mut f, lo, hi, 1e-9)?;
        let mut f = |z: f64| Ok(self.forward(z)? - val);
        let mut df = |z: f64| self.integrand_at(z);
        newton_polish(&mut f, &mut df, rough, lo, hi, PHI_INV_TOL)
    }
}

/// The substitution maps returned alongside the canonical problem, used to
/// express reconstructed solutions in temperature form again.
#[derive(Clone)]
pub struct GoodmanMaps {
    pub phi1: PhiMap,
    pub phi2: PhiMap,
}

fn require_syms(expr: &Expr, field: &str, allowed: SymSet) -> Result<(), ProblemError> {
    let found = expr.free_syms();
    if found.is_subset_of(allowed) {
        return Ok(());
    }
    let extra: Vec<&str> =
        found.iter().filter(|s| !allowed.contains(*s)).map(|s| s.name()).collect();
    Err(ProblemError::Invalid {
        field: field.into(),
        reason: format!("unexpected symbol(s): {}", extra.join(", ")),
    })
}

/// Substitution `u = phi1(T)`, `v = phi2(T)` applied to a physical problem.
///
/// When a phase has constant volumetric heat capacity the substitution is
/// linear and the canonical coefficients stay symbolic; otherwise they
/// become numeric closures through the inverted map.
pub fn goodman_transform(
    p: &PhysicalProblem,
) -> Result<(CanonicalProblem, GoodmanMaps), ProblemError> {
    for (field, e) in [
        ("c1", &p.c1),
        ("rho1", &p.rho1),
        ("k1", &p.k1),
        ("c2", &p.c2),
        ("rho2", &p.rho2),
        ("k2", &p.k2),
    ] {
        require_syms(e, field, SymSet::single(Sym::Temp))?;
    }
    let tt = SymSet::single(Sym::T).union(SymSet::single(Sym::Temp));
    require_syms(&p.q_flux, "q_flux", tt)?;
    require_syms(&p.h_vel, "h_vel", tt)?;

    let liquid_window = (p.t_melt.min(p.t_hot), p.t_melt.max(p.t_hot));
    let solid_window = (p.t_far.min(p.t_melt), p.t_far.max(p.t_melt));
    let phi1 = PhiMap::new(&p.c1, &p.rho1, liquid_window);
    let phi2 = PhiMap::new(&p.c2, &p.rho2, solid_window);

    let u_m = phi1.forward(p.t_melt)?;
    let u_hot = phi1.forward(p.t_hot)?;
    let v_m = phi2.forward(p.t_melt)?;
    let v_inf = phi2.forward(p.t_far)?;

    // Phase 1 coefficients as functions of u.
    let cr1 = simplify(&(p.c1.clone() * p.rho1.clone()));
    let d1_of_temp = simplify(&(p.k1.clone() / cr1.clone()));
    let (d1, rho1, qhat, hhat) = if let Expr::Const(a) = cr1 {
        // u = a T, so T = u / a stays symbolic.
        let t_of_u = Expr::num(1.0 / a) * Expr::var(Sym::U);
        let in_u = |e: &Expr| simplify(&subst(e, Sym::Temp, &t_of_u));
        (
            Coef::from_expr(in_u(&d1_of_temp), Sym::U),
            Coef::from_expr(in_u(&p.rho1), Sym::U),
            Coef2::from_expr(in_u(&p.q_flux)),
            Coef2::from_expr(in_u(&p.h_vel)),
        )
    } else {
        let mk = |e: &Expr, label: &str| {
            let e = simplify(e);
            let phi = phi1.clone();
            let label_owned = label.to_string();
            let f = move |t: f64, u: f64| -> Result<f64, String> {
                let temp = phi.inverse(u).map_err(|er| er.to_string())?;
                let b = Bindings::new().set(Sym::T, t).set(Sym::Temp, temp);
                eval(&e, &b).map_err(|er| er.to_string())
            };
            (f, label_owned)
        };
        let (fd, ld) = mk(&d1_of_temp, "d1");
        let (fr, lr) = mk(&p.rho1, "rho1");
        let (fq, lq) = mk(&p.q_flux, "qhat");
        let (fh, lh) = mk(&p.h_vel, "hhat");
        (
            Coef::from_fn(ld, move |u| fd(1.0, u)),
            Coef::from_fn(lr, move |u| fr(1.0, u)),
            Coef2::from_fn(lq, fq),
            Coef2::from_fn(lh, fh),
        )
    };

    // Phase 2 coefficients as functions of v.
    let cr2 = simplify(&(p.c2.clone() * p.rho2.clone()));
    let d2_of_temp = simplify(&(p.k2.clone() / cr2.clone()));
    let (d2, rho2) = if let Expr::Const(a) = cr2 {
        let t_of_v = Expr::num(1.0 / a) * Expr::var(Sym::V);
        let in_v = |e: &Expr| simplify(&subst(e, Sym::Temp, &t_of_v));
        (
            Coef::from_expr(in_v(&d2_of_temp), Sym::V),
            Coef::from_expr(in_v(&p.rho2), Sym::V),
        )
    } else {
        let mk = |e: &Expr, label: &str| {
            let e = simplify(e);
            let phi = phi2.clone();
            let label = label.to_string();
            let f = move |v: f64| -> Result<f64, String> {
                let temp = phi.inverse(v).map_err(|er| er.to_string())?;
                let b = Bindings::new().set(Sym::Temp, temp);
                eval(&e, &b).map_err(|er| er.to_string())
            };
            (f, label)
        };
        let (fd, ld) = mk(&d2_of_temp, "d2");
        let (fr, lr) = mk(&p.rho2, "rho2");
        (Coef::from_fn(ld, fd), Coef::from_fn(lr, fr))
    };

    let u_range = if u_hot > u_m { (u_m, u_hot) } else { (u_hot, u_m) };
    let v_range = if v_inf < v_m { (v_inf, v_m) } else { (v_m, v_inf) };
    let canonical = CanonicalProblem {
        d1,
        d2,
        rho1,
        rho2,
        qhat,
        hhat,
        u_m,
        v_m,
        v_inf,
        l_v: p.l_v,
        l_m: p.l_m,
        u_range,
        v_range,
    };
    canonical.validate()?;
    Ok((canonical, GoodmanMaps { phi1, phi2 }))
}

// ---------------------------------------------------------------------------
// Equivalence transformations
// ---------------------------------------------------------------------------

/// Scalings and shifts of the canonical variables that map problems of the
/// class onto problems of the class:
///
/// ```text
///   t -> e_t t + t_shift,  x -> e_x x + x_shift,
///   u -> e_u u + u_shift,  v -> e_u v + v_shift.
/// ```
///
/// The melting-front flux condition couples the two state scalings, so `u`
/// and `v` share the factor `e_u`.  All scale factors must be positive;
/// `t_shift` must be zero when boundary coefficients carry an explicit
/// `1/sqrt(t)` factor, which is the caller's responsibility.
#[derive(Clone, Copy, Debug)]
pub struct EquivalenceTransform {
    pub e_t: f64,
    pub e_x: f64,
    pub e_u: f64,
    pub t_shift: f64,
    pub x_shift: f64,
    pub u_shift: f64,
    pub v_shift: f64,
}

impl EquivalenceTransform {
    pub fn identity() -> Self {
        EquivalenceTransform {
            e_t: 1.0,
            e_x: 1.0,
            e_u: 1.0,
            t_shift: 0.0,
            x_shift: 0.0,
            u_shift: 0.0,
            v_shift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        for (name, v) in [("e_t", self.e_t), ("e_x", self.e_x), ("e_u", self.e_u)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ProblemError::Invalid {
                    field: name.into(),
                    reason: format!("scale factor must be positive and finite; got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Transformed problem.  Coefficient rules, with `s` the old and
    /// `s~ = e_u s + shift` the new state value:
    ///
    /// ```text
    ///   d~(s~)    = (e_x^2 / e_t) d(s)
    ///   rho~(s~)  = rho(s)
    ///   q~(t~, u~) = (e_x e_u / e_t) q(t, u)
    ///   h~(t~, u~) = (e_x / e_t) h(t, u)
    ///   l_v~ = e_u l_v,  l_m~ = e_u l_m
    /// ```
    pub fn apply(&self, p: &CanonicalProblem) -> Result<CanonicalProblem, ProblemError> {
        self.validate()?;
        let tr = *self;

        let state_pullback = |var: Sym, shift: f64| -> Expr {
            // old = (new - shift) / e_u
            (Expr::var(var) - Expr::num(shift)) * Expr::num(1.0 / tr.e_u)
        };
        let map_coef = |c: &Coef, var: Sym, shift: f64, scale: f64| -> Coef {
            match c {
                Coef::Expr { expr, var: old_var } => {
                    let pulled = subst(expr, *old_var, &state_pullback(var, shift));
                    Coef::from_expr(Expr::num(scale) * pulled, var)
                }
                Coef::Fn { f, label } => {
                    let f = Arc::clone(f);
                    let label = label.clone();
                    Coef::from_fn(format!("{label}~"), move |s| {
                        Ok(scale * f((s - shift) / tr.e_u)?)
                    })
                }
            }
        };
        let map_coef2 = |c: &Coef2, scale: f64| -> Coef2 {
            match c {
                Coef2::Expr(expr) => {
                    let pulled = subst(expr, Sym::U, &state_pullback(Sym::U, tr.u_shift));
                    let t_old = (Expr::var(Sym::T) - Expr::num(tr.t_shift))
                        * Expr::num(1.0 / tr.e_t);
                    let pulled = subst(&pulled, Sym::T, &t_old);
                    Coef2::from_expr(Expr::num(scale) * pulled)
                }
                Coef2::Fn { f, label } => {
                    let f = Arc::clone(f);
                    let label = label.clone();
                    Coef2::from_fn(format!("{label}~"), move |t, u| {
                        Ok(scale * f((t - tr.t_shift) / tr.e_t, (u - tr.u_shift) / tr.e_u)?)
                    })
                }
            }
        };

        let d_scale = self.e_x * self.e_x / self.e_t;
        let out = CanonicalProblem {
            d1: map_coef(&p.d1, Sym::U, self.u_shift, d_scale),
            d2: map_coef(&p.d2, Sym::V, self.v_shift, d_scale),
            rho1: map_coef(&p.rho1, Sym::U, self.u_shift, 1.0),
            rho2: map_coef(&p.rho2, Sym::V, self.v_shift, 1.0),
            qhat: map_coef2(&p.qhat, self.e_x * self.e_u / self.e_t),
            hhat: map_coef2(&p.hhat, self.e_x / self.e_t),
            u_m: self.e_u * p.u_m + self.u_shift,
            v_m: self.e_u * p.v_m + self.v_shift,
            v_inf: self.e_u * p.v_inf + self.v_shift,
            l_v: self.e_u * p.l_v,
            l_m: self.e_u * p.l_m,
            u_range: (
                self.e_u * p.u_range.0 + self.u_shift,
                self.e_u * p.u_range.1 + self.u_shift,
            ),
            v_range: (
                self.e_u * p.v_range.0 + self.v_shift,
                self.e_u * p.v_range.1 + self.v_shift,
            ),
        };
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// JSON input
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(default)]
    canonical: Option<CanonicalDto>,
    #[serde(default)]
    physical: Option<PhysicalDto>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalDto {
    d1: String,
    d2: String,
    #[serde(default = "one_str")]
    rho1: String,
    #[serde(default = "one_str")]
    rho2: String,
    q: String,
    h: String,
    /// "none" leaves `q`/`h` as written; "inv_sqrt_t" multiplies both by
    /// `t^(-1/2)`.
    #[serde(default)]
    time_dependence: Option<String>,
    u_m: f64,
    v_m: f64,
    v_inf: f64,
    l_v: f64,
    l_m: f64,
    #[serde(default)]
    u_range: Option<[f64; 2]>,
    #[serde(default)]
    v_range: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicalDto {
    c1: String,
    rho1: String,
    k1: String,
    c2: String,
    rho2: String,
    k2: String,
    q_flux: String,
    h_vel: String,
    l_v: f64,
    l_m: f64,
    t_melt: f64,
    t_far: f64,
    t_hot: f64,
}

fn one_str() -> String {
    "1".into()
}

/// Problem as loaded from disk, before any transformation.
pub enum ProblemInput {
    Canonical(CanonicalProblem),
    Physical(PhysicalProblem),
}

impl ProblemInput {
    /// Canonical form, applying the heat-capacity substitution if needed.
    pub fn into_canonical(self) -> Result<(CanonicalProblem, Option<GoodmanMaps>), ProblemError> {
        match self {
            ProblemInput::Canonical(c) => Ok((c, None)),
            ProblemInput::Physical(p) => {
                let (c, maps) = goodman_transform(&p)?;
                Ok((c, Some(maps)))
            }
        }
    }
}

fn parse_field(field: &str, text: &str) -> Result<Expr, ProblemError> {
    parse(text).map_err(|source| ProblemError::Parse { field: field.into(), source })
}

fn canonical_from_dto(dto: CanonicalDto) -> Result<CanonicalProblem, ProblemError> {
    let d1 = parse_field("d1", &dto.d1)?;
    let d2 = parse_field("d2", &dto.d2)?;
    let rho1 = parse_field("rho1", &dto.rho1)?;
    let rho2 = parse_field("rho2", &dto.rho2)?;
    let mut q = parse_field("q", &dto.q)?;
    let mut h = parse_field("h", &dto.h)?;

    require_syms(&d1, "d1", SymSet::single(Sym::U))?;
    require_syms(&rho1, "rho1", SymSet::single(Sym::U))?;
    require_syms(&d2, "d2", SymSet::single(Sym::V))?;
    require_syms(&rho2, "rho2", SymSet::single(Sym::V))?;
    let tu = SymSet::single(Sym::T).union(SymSet::single(Sym::U));
    require_syms(&q, "q", tu)?;
    require_syms(&h, "h", tu)?;

    match dto.time_dependence.as_deref() {
        None | Some("none") => {}
        Some("inv_sqrt_t") => {
            let damp = Expr::var(Sym::T).powr(-1, 2);
            q = q * damp.clone();
            h = h * damp;
        }
        Some(other) => {
            return Err(ProblemError::Invalid {
                field: "time_dependence".into(),
                reason: format!("expected \"none\" or \"inv_sqrt_t\", got \"{other}\""),
            });
        }
    }

    let u_range = dto
        .u_range
        .map(|[a, b]| (a, b))
        .unwrap_or_else(|| CanonicalProblem::default_u_range(dto.u_m));
    let v_range = dto.v_range.map(|[a, b]| (a, b)).unwrap_or_else(|| {
        (dto.v_m.min(dto.v_inf), dto.v_m.max(dto.v_inf))
    });

    let problem = CanonicalProblem {
        d1: Coef::from_expr(d1, Sym::U),
        d2: Coef::from_expr(d2, Sym::V),
        rho1: Coef::from_expr(rho1, Sym::U),
        rho2: Coef::from_expr(rho2, Sym::V),
        qhat: Coef2::from_expr(q),
        hhat: Coef2::from_expr(h),
        u_m: dto.u_m,
        v_m: dto.v_m,
        v_inf: dto.v_inf,
        l_v: dto.l_v,
        l_m: dto.l_m,
        u_range,
        v_range,
    };
    problem.validate()?;
    Ok(problem)
}

fn physical_from_dto(dto: PhysicalDto) -> Result<PhysicalProblem, ProblemError> {
    let p = PhysicalProblem {
        c1: parse_field("c1", &dto.c1)?,
        rho1: parse_field("rho1", &dto.rho1)?,
        k1: parse_field("k1", &dto.k1)?,
        c2: parse_field("c2", &dto.c2)?,
        rho2: parse_field("rho2", &dto.rho2)?,
        k2: parse_field("k2", &dto.k2)?,
        q_flux: parse_field("q_flux", &dto.q_flux)?,
        h_vel: parse_field("h_vel", &dto.h_vel)?,
        l_v: dto.l_v,
        l_m: dto.l_m,
        t_melt: dto.t_melt,
        t_far: dto.t_far,
        t_hot: dto.t_hot,
    };
    if p.t_hot <= p.t_melt {
        return Err(ProblemError::Invalid {
            field: "t_hot".into(),
            reason: "liquid working temperature must exceed the melt temperature".into(),
        });
    }
    if p.t_far >= p.t_melt {
        return Err(ProblemError::Invalid {
            field: "t_far".into(),
            reason: "far-field temperature must lie below the melt temperature".into(),
        });
    }
    Ok(p)
}

pub fn load_problem_str(text: &str) -> Result<ProblemInput, ProblemError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    match (file.canonical, file.physical) {
        (Some(c), None) => Ok(ProblemInput::Canonical(canonical_from_dto(c)?)),
        (None, Some(p)) => Ok(ProblemInput::Physical(physical_from_dto(p)?)),
        (Some(_), Some(_)) => Err(ProblemError::Invalid {
            field: "canonical/physical".into(),
            reason: "problem file must contain exactly one of the two blocks".into(),
        }),
        (None, None) => Err(ProblemError::Invalid {
            field: "canonical/physical".into(),
            reason: "problem file is missing both blocks".into(),
        }),
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemInput, ProblemError> {
    load_problem_str(&std::fs::read_to_string(path)?)
}

/// The constant-coefficient sample fixture used throughout the tests: unit
/// diffusivities and densities, `q = 3.5`, `h(u) = u`.
pub fn reference_constant_problem() -> CanonicalProblem {
    CanonicalProblem {
        d1: Coef::constant(1.0),
        d2: Coef::Expr { expr: Expr::one(), var: Sym::V },
        rho1: Coef::constant(1.0),
        rho2: Coef::Expr { expr: Expr::one(), var: Sym::V },
        qhat: Coef2::from_expr(Expr::num(3.5)),
        hhat: Coef2::from_expr(Expr::var(Sym::U)),
        u_m: 0.5,
        v_m: 1.0,
        v_inf: 0.0,
        l_v: 1.0,
        l_m: 1.0,
        u_range: (0.5, 2.0),
        v_range: (0.0, 1.0),
    }
}
