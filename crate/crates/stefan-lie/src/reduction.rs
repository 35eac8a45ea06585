//! Reduction of an admissible problem to an ODE boundary-value problem in
//! the invariant variable, and reconstruction of PDE fields from reduced
//! profiles.
//!
//! The wave generator gives `xi = x - mu t` with phase equations
//! `(d_k(w) w')' + mu w' = 0`; the dilation gives `omega = x / sqrt(t)` with
//! `(d_k(w) w')' + (omega/2) w' = 0`.  Both are integrated in the conserved
//! state `(w, g)` with `g = d(w) w'`, which keeps the front conditions in
//! their natural flux variables and avoids differentiating `d` numerically.
//!
//! Gauge choice: the evaporation front sits at `xi = 0` for the traveling
//! wave (the shift freedom in `xi` is spent there), so the melt front is at
//! `xi = delta` and the fronts move as `S1 = mu t`, `S2 = mu t + delta`.

use serde::Serialize;
use thiserror::Error;

use crate::numeric::NumericError;
use crate::ode::OdeSolution;
use crate::problem::{CanonicalProblem, Coef};
use crate::symmetry::{check_invariance, AdmittedForm, LieOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ReducedKind {
    TravelingWave,
    SelfSimilar,
}

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("generator {form} is not admitted: condition {condition:?} fails")]
    NotAdmitted { form: String, condition: String },
    #[error("no reduction is defined for generator {0}")]
    NoReduction(String),
    #[error("self-similar reconstruction needs t > 0, got t = {0}")]
    NonPositiveTime(f64),
    #[error("x = {x} lies left of the evaporation front at {s1}")]
    OutsideDomain { x: f64, s1: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Reduced two-phase BVP with two unknown parameters: `(mu, delta)` for the
/// traveling wave, `(omega1, omega2)` for the self-similar form.  The
/// reduced source and velocity laws `q`, `h` are the time-independent
/// factors of the admissible boundary data.
#[derive(Clone, Debug)]
pub struct ReducedBVP {
    pub kind: ReducedKind,
    pub d1: Coef,
    pub d2: Coef,
    pub rho1: Coef,
    pub rho2: Coef,
    pub q: Coef,
    pub h: Coef,
    pub u_m: f64,
    pub v_m: f64,
    pub v_inf: f64,
    pub l_v: f64,
    pub l_m: f64,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
}

impl ReducedBVP {
    /// Drift coefficient multiplying `w'` in the reduced equation at
    /// invariant coordinate `s`; `mu` is ignored for the self-similar kind.
    pub fn drift(&self, mu: f64, s: f64) -> f64 {
        match self.kind {
            ReducedKind::TravelingWave => mu,
            ReducedKind::SelfSimilar => 0.5 * s,
        }
    }

    /// Phase-1 right-hand side in the conserved state `y = (u, g)`,
    /// `g = d1(u) u'`.
    pub fn u_rhs(&self, mu: f64, s: f64, y: &[f64; 2]) -> Result<[f64; 2], NumericError> {
        let d = self.d1.eval(y[0])?;
        let up = y[1] / d;
        Ok([up, -self.drift(mu, s) * up])
    }

    /// Phase-2 right-hand side in the conserved state `y = (v, g)`,
    /// `g = d2(v) v'`.
    pub fn v_rhs(&self, mu: f64, s: f64, y: &[f64; 2]) -> Result<[f64; 2], NumericError> {
        let d = self.d2.eval(y[0])?;
        let vp = y[1] / d;
        Ok([vp, -self.drift(mu, s) * vp])
    }

    /// Front speed associated with a front coordinate: `mu` itself for the
    /// traveling wave, `s/2` for the self-similar form (where the physical
    /// speed is `s / (2 sqrt(t))`).
    pub fn front_speed(&self, mu: f64, s: f64) -> f64 {
        match self.kind {
            ReducedKind::TravelingWave => mu,
            ReducedKind::SelfSimilar => 0.5 * s,
        }
    }

    /// Evaporation-front flux condition: `g(0) = rho1(u0) L_v speed - q(u0)`.
    pub fn surface_flux_residual(&self, u0: f64, g0: f64, speed: f64) -> Result<f64, NumericError> {
        Ok(g0 - (self.rho1.eval(u0)? * self.l_v * speed - self.q.eval(u0)?))
    }

    /// Evaporation-front velocity law: `speed = h(u0)`.
    pub fn surface_velocity_residual(&self, u0: f64, speed: f64) -> Result<f64, NumericError> {
        Ok(speed - self.h.eval(u0)?)
    }

    /// Melt-front flux matching in the conserved state: the profile fluxes
    /// are exactly `d_k(w) w'`, so the condition is linear in them.
    pub fn stefan_residual(&self, g_u: f64, g_v: f64, speed: f64) -> Result<f64, NumericError> {
        Ok(g_v - g_u - self.rho2.eval(self.v_m)? * self.l_m * speed)
    }

    pub fn parameter_labels(&self) -> [&'static str; 2] {
        match self.kind {
            ReducedKind::TravelingWave => ["mu", "delta"],
            ReducedKind::SelfSimilar => ["omega1", "omega2"],
        }
    }

    pub fn invariant_variable(&self) -> &'static str {
        match self.kind {
            ReducedKind::TravelingWave => "xi",
            ReducedKind::SelfSimilar => "omega",
        }
    }

    /// Human-readable sketch of the reduced system and its conditions.
    pub fn describe(&self) -> String {
        let s = self.invariant_variable();
        let (drift, left, right, speed1, speed2) = match self.kind {
            ReducedKind::TravelingWave => ("mu", "xi = 0", "xi = delta", "mu", "mu"),
            ReducedKind::SelfSimilar => {
                ("omega/2", "omega = omega1", "omega = omega2", "omega1/2", "omega2/2")
            }
        };
        format!(
            "phase 1: (d1(u) u')' + {drift} u' = 0\n\
             phase 2: (d2(v) v')' + {drift} v' = 0\n\
             {left}: d1(u) u' = rho1(u) L_v {speed1} - q(u), {speed1} = h(u)\n\
             {right}: d2(v_m) v' = d1(u_m) u' + rho2(v_m) L_m {speed2}, u = u_m, v = v_m\n\
             {s} -> infinity: v -> v_inf\n\
             unknowns: ({}, {})",
            self.parameter_labels()[0],
            self.parameter_labels()[1],
        )
    }
}

/// Build the reduced BVP for an admitted generator form; the admission is
/// re-checked so a non-invariant problem cannot be reduced silently.
pub fn reduce(p: &CanonicalProblem, form: &AdmittedForm) -> Result<ReducedBVP, ReductionError> {
    let (op, kind) = match form {
        AdmittedForm::X1Family => (LieOperator::wave_family(), ReducedKind::TravelingWave),
        AdmittedForm::X2 => (LieOperator::dilation(), ReducedKind::SelfSimilar),
        AdmittedForm::Unexpected { label } => {
            return Err(ReductionError::NoReduction(label.clone()))
        }
    };
    let rep = check_invariance(&op, p);
    if !rep.admitted {
        let condition = rep
            .first_failure()
            .map(|v| v.condition.clone())
            .unwrap_or_else(|| "unknown".to_string());
        return Err(ReductionError::NotAdmitted { form: op.label, condition });
    }
    Ok(ReducedBVP {
        kind,
        d1: p.d1.clone(),
        d2: p.d2.clone(),
        rho1: p.rho1.clone(),
        rho2: p.rho2.clone(),
        q: p.qhat.at_unit_time(),
        h: p.hhat.at_unit_time(),
        u_m: p.u_m,
        v_m: p.v_m,
        v_inf: p.v_inf,
        l_v: p.l_v,
        l_m: p.l_m,
        u_range: p.u_range,
        v_range: p.v_range,
    })
}

// ---------------------------------------------------------------------------
// Profiles and reconstruction
// ---------------------------------------------------------------------------

/// One phase's profile in the invariant variable, kept as the integrator's
/// dense output so interior evaluation retains integration accuracy.
#[derive(Clone, Debug)]
pub struct PhaseProfile {
    pub span: (f64, f64),
    sol: OdeSolution<2>,
}

impl PhaseProfile {
    pub fn new(span: (f64, f64), sol: OdeSolution<2>) -> Self {
        PhaseProfile { span, sol }
    }

    /// State `(w, g)` at `s`, `None` outside the integrated span.
    pub fn state(&self, s: f64) -> Option<[f64; 2]> {
        self.sol.sample(s)
    }

    pub fn value(&self, s: f64) -> Option<f64> {
        self.state(s).map(|y| y[0])
    }

    pub fn flux(&self, s: f64) -> Option<f64> {
        self.state(s).map(|y| y[1])
    }

    /// End state as integrated (full accuracy, no interpolation).
    pub fn end_state(&self) -> [f64; 2] {
        self.sol.y_end
    }

    /// Uniform resampling as `(s, w, g)` rows for artifacts.
    pub fn rows(&self, n: usize) -> Vec<[f64; 3]> {
        let (a, b) = self.span;
        (0..=n)
            .map(|i| {
                let s = a + (b - a) * (i as f64 / n as f64);
                let y = self.state(s).unwrap_or(self.sol.y_end);
                [s, y[0], y[1]]
            })
            .collect()
    }
}

/// Reduced solution: the two found parameters and the two phase profiles.
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    /// `(mu, delta)` or `(omega1, omega2)`.
    pub params: [f64; 2],
    pub u: PhaseProfile,
    pub v: PhaseProfile,
}

/// Field values and front positions at one `(t, x)` point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointState {
    pub u: f64,
    pub v: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Front positions at time `t`.
pub fn fronts(r: &ReducedBVP, sol: &ReducedSolution, t: f64) -> Result<(f64, f64), ReductionError> {
    match r.kind {
        ReducedKind::TravelingWave => {
            let [mu, delta] = sol.params;
            Ok((mu * t, mu * t + delta))
        }
        ReducedKind::SelfSimilar => {
            if t <= 0.0 {
                return Err(ReductionError::NonPositiveTime(t));
            }
            let [om1, om2] = sol.params;
            Ok((om1 * t.sqrt(), om2 * t.sqrt()))
        }
    }
}

/// Reconstruct `(u, v)` at a point.  The liquid field is defined on
/// `[S1, S2]` and continues as `u_m` beyond the melt front; the solid field
/// is `v_m` left of the melt front and decays to `v_inf` beyond the
/// integrated span.  Points left of `S1` are outside the problem domain.
pub fn reconstruct(
    r: &ReducedBVP,
    sol: &ReducedSolution,
    t: f64,
    x: f64,
) -> Result<PointState, ReductionError> {
    let (s1, s2) = fronts(r, sol, t)?;
    let scale = 1.0 + s1.abs().max(s2.abs());
    if x < s1 - 1e-9 * scale {
        return Err(ReductionError::OutsideDomain { x, s1 });
    }
    let s = match r.kind {
        ReducedKind::TravelingWave => x - sol.params[0] * t,
        ReducedKind::SelfSimilar => x / t.sqrt(),
    };
    let (a1, b1) = sol.u.span;
    let u = if s <= b1 {
        sol.u.value(s.clamp(a1, b1)).unwrap_or(r.u_m)
    } else {
        r.u_m
    };
    let (a2, _) = sol.v.span;
    let v = if s < a2 {
        r.v_m
    } else {
        sol.v.value(s).unwrap_or(r.v_inf)
    };
    Ok(PointState { u, v, s1, s2 })
}
