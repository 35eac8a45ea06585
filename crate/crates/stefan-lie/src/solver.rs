//! Solvers for the reduced free-parameter BVPs.
//!
//! The traveling wave is solved on a first-integral path: the far field
//! forces `d2(v) v' = mu (v_inf - v)`, the melt conditions then pin the
//! phase-1 integral `C1 = d1(u) u' + mu u`, and the surface conditions
//! close a scalar matching function `F(mu)` whose root gives everything
//! else by quadrature.  An independent generic-shooting route solves the
//! same problem by forward integration and must agree; the gap between the
//! two is reported.
//!
//! The self-similar form has no usable first integral, so it is solved as a
//! two-parameter shooting problem in `(omega1, omega2)` with a damped
//! Newton iteration, an inner sub-shoot (or erfc closed form when `d2` is
//! constant) for the semi-infinite solid phase, and a nested bracketed
//! fallback when Newton stalls.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{self, NumericError};
use crate::ode::{integrate, Dopri5Options, OdeError, OdeSolution};
use crate::problem::Coef;
use crate::reduction::{PhaseProfile, ReducedBVP, ReducedKind, ReducedSolution};

#[derive(Clone, Debug, Serialize)]
pub struct ShootingConfig {
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Boundary residuals are driven below this.
    pub root_tol: f64,
    pub max_newton_iter: usize,
    /// Far-field truncation accepted when |v - v_inf| ends below this.
    pub far_value_tol: f64,
    /// Doubling the truncation must move the parameters by less than this.
    pub far_stability_tol: f64,
    /// Hard cap on the truncation coordinate.
    pub far_cap: f64,
    /// Optional seed: `(mu, ignored)` or `(omega1, omega2)`.
    pub guess: Option<[f64; 2]>,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            ode_rtol: 1e-10,
            ode_atol: 1e-12,
            root_tol: 1e-10,
            max_newton_iter: 50,
            far_value_tol: 1e-9,
            far_stability_tol: 1e-8,
            far_cap: 1e4,
            guess: None,
        }
    }
}

impl ShootingConfig {
    fn ode_opts(&self) -> Dopri5Options {
        Dopri5Options { rtol: self.ode_rtol, atol: self.ode_atol, ..Dopri5Options::default() }
    }

    fn check(&self) -> Result<(), SolverError> {
        let tols = [
            self.ode_rtol,
            self.ode_atol,
            self.root_tol,
            self.far_value_tol,
            self.far_stability_tol,
            self.far_cap,
        ];
        if tols.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(SolverError::Config("tolerances must be positive and finite".into()));
        }
        if self.max_newton_iter == 0 {
            return Err(SolverError::Config("max_newton_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("reduced problem has kind {found:?}, this solver wants {expected:?}")]
    WrongKind { expected: ReducedKind, found: ReducedKind },
    #[error("velocity law is not strictly monotone on {lo}..{hi}; no inversion branch rule exists")]
    NonMonotoneVelocityLaw { lo: f64, hi: f64 },
    #[error("{context}: no sign change; sampled (parameter, residual) pairs: {samples:?}")]
    NoBracket { context: &'static str, samples: Vec<(f64, f64)> },
    #[error("front gap delta = {0}; the melt front must lie right of the evaporation front")]
    NonPositiveGap(f64),
    #[error("phase-1 gradient changes sign between the fronts; the profile would fold")]
    FoldedProfile,
    #[error("Newton and the bracketed fallback both failed; best residual points (omega1, omega2, norm): {landscape:?}")]
    NewtonDiverged { landscape: Vec<(f64, f64, f64)> },
    #[error("initial guess violates the front ordering omega1 < omega2")]
    FrontOrdering,
    #[error("far-field truncation hit the cap {0} before the tail stabilized")]
    FarFieldCap(f64),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Absolute boundary and conservation residuals, re-evaluated from the
/// stored profiles rather than from construction-time identities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualNorms {
    pub surface_flux: f64,
    pub surface_velocity: f64,
    pub melt_u: f64,
    pub melt_v: f64,
    pub stefan: f64,
    pub far_field: f64,
    /// Traveling wave only: max drift of `d1(u) u' + mu u` along phase 1.
    pub first_integral: Option<f64>,
}

impl ResidualNorms {
    pub fn max_boundary(&self) -> f64 {
        self.surface_flux
            .abs()
            .max(self.surface_velocity.abs())
            .max(self.melt_u.abs())
            .max(self.melt_v.abs())
            .max(self.stefan.abs())
            .max(self.far_field.abs())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Residual-map evaluations across scans, Newton, and fallbacks.
    pub iterations: usize,
    /// Truncation coordinate used for the far field.
    pub far_coordinate: f64,
    pub stationary_front: bool,
    pub u_monotone: bool,
    pub v_monotone: bool,
    /// Every root of the matching function found in the scan window
    /// (traveling wave); the solved one comes first in `params`.
    pub roots: Vec<f64>,
    /// Max parameter gap between the first-integral and shooting routes.
    pub cross_method_gap: Option<f64>,
    pub method: String,
}

/// A solved reduced BVP.  Boundary residuals sit below the root tolerance
/// except for results flagged `stationary_front`, where the melt and
/// far-field mismatches of the zero-speed state are reported as they are.
pub struct SolutionResult {
    pub reduced: ReducedSolution,
    pub residuals: ResidualNorms,
    pub diagnostics: Diagnostics,
}

impl SolutionResult {
    pub fn params(&self) -> [f64; 2] {
        self.reduced.params
    }
}

/// Adaptive integration with the solver tolerances.
pub fn integrate_ode<const N: usize>(
    rhs: &mut dyn FnMut(f64, &[f64; N]) -> Result<[f64; N], NumericError>,
    span: (f64, f64),
    y0: [f64; N],
    cfg: &ShootingConfig,
    event: Option<&dyn Fn(f64, &[f64; N]) -> f64>,
) -> Result<OdeSolution<N>, OdeError> {
    integrate(rhs, span.0, span.1, y0, &cfg.ode_opts(), event)
}

pub fn solve(r: &ReducedBVP, cfg: &ShootingConfig) -> Result<SolutionResult, SolverError> {
    match r.kind {
        ReducedKind::TravelingWave => solve_traveling_wave(r, cfg),
        ReducedKind::SelfSimilar => solve_self_similar(r, cfg),
    }
}

// ---------------------------------------------------------------------------
// Velocity-law inversion
// ---------------------------------------------------------------------------

const H_SAMPLES: usize = 64;

fn velocity_samples(h: &Coef, range: (f64, f64)) -> Result<Vec<f64>, SolverError> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(SolverError::Config(format!("empty inversion range {lo}..{hi}")));
    }
    let mut vals = Vec::with_capacity(H_SAMPLES + 1);
    for i in 0..=H_SAMPLES {
        vals.push(h.eval(lo + (hi - lo) * i as f64 / H_SAMPLES as f64)?);
    }
    Ok(vals)
}

fn strictly_monotone(vals: &[f64]) -> bool {
    vals.windows(2).all(|w| w[1] > w[0]) || vals.windows(2).all(|w| w[1] < w[0])
}

/// Inverse of the reduced velocity law on `range` by bracketed root-find.
/// `h` must be strictly monotone there; folds are rejected outright because
/// no branch rule exists for this problem class.
pub fn velocity_inverse(
    h: &Coef,
    range: (f64, f64),
    target: f64,
    tol: f64,
) -> Result<f64, SolverError> {
    let vals = velocity_samples(h, range)?;
    if !strictly_monotone(&vals) {
        return Err(SolverError::NonMonotoneVelocityLaw { lo: range.0, hi: range.1 });
    }
    let (a, b) = (vals[0], vals[H_SAMPLES]);
    if target < a.min(b) || target > a.max(b) {
        return Err(SolverError::Numeric(NumericError::NoBracket { lo: range.0, hi: range.1 }));
    }
    let width = 1e-4 * tol * (1.0 + range.0.abs() + range.1.abs());
    Ok(numeric::bracket_root(&mut |u| Ok(h.eval(u)? - target), range.0, range.1, width)?)
}

// ---------------------------------------------------------------------------
// Shared assembly
// ---------------------------------------------------------------------------

fn profile_state(p: &PhaseProfile, s: f64, what: &str) -> Result<[f64; 2], SolverError> {
    p.state(s).ok_or_else(|| {
        SolverError::Numeric(NumericError::Eval(format!("{what}: no profile data at {s}")))
    })
}

fn monotone(rows: &[[f64; 3]]) -> bool {
    let mut up = true;
    let mut down = true;
    for w in rows.windows(2) {
        let slack = 1e-12 * (1.0 + w[0][1].abs() + w[1][1].abs());
        if w[1][1] > w[0][1] + slack {
            down = false;
        }
        if w[1][1] < w[0][1] - slack {
            up = false;
        }
    }
    up || down
}

/// Re-evaluates every boundary condition from the dense profiles and fills
/// the residual and monotonicity fields.  `speeds` holds the front speeds
/// at the evaporation and melt fronts.
fn assemble(
    r: &ReducedBVP,
    params: [f64; 2],
    u: PhaseProfile,
    v: PhaseProfile,
    speeds: (f64, f64),
    first_integral_mu: Option<f64>,
    mut diagnostics: Diagnostics,
) -> Result<SolutionResult, SolverError> {
    let (speed1, speed2) = speeds;
    let (ua, ub) = u.span;
    let (va, vb) = v.span;
    let y_surf = profile_state(&u, ua, "surface state")?;
    let y_melt_u = profile_state(&u, ub, "melt state, liquid side")?;
    let y_melt_v = profile_state(&v, va, "melt state, solid side")?;
    let y_far = profile_state(&v, vb, "far state")?;

    let first_integral = match first_integral_mu {
        Some(mu) => {
            let c1 = y_surf[1] + mu * y_surf[0];
            let drift = u
                .rows(400)
                .iter()
                .map(|row| (row[2] + mu * row[1] - c1).abs())
                .fold(0.0_f64, f64::max);
            Some(drift)
        }
        None => None,
    };

    let residuals = ResidualNorms {
        surface_flux: r.surface_flux_residual(y_surf[0], y_surf[1], speed1)?.abs(),
        surface_velocity: r.surface_velocity_residual(y_surf[0], speed1)?.abs(),
        melt_u: (y_melt_u[0] - r.u_m).abs(),
        melt_v: (y_melt_v[0] - r.v_m).abs(),
        stefan: r.stefan_residual(y_melt_u[1], y_melt_v[1], speed2)?.abs(),
        far_field: (y_far[0] - r.v_inf).abs(),
        first_integral,
    };
    diagnostics.u_monotone = monotone(&u.rows(400));
    diagnostics.v_monotone = monotone(&v.rows(400));
    diagnostics.far_coordinate = vb;

    Ok(SolutionResult {
        reduced: ReducedSolution { params, u, v },
        residuals,
        diagnostics,
    })
}

fn blank_diagnostics(method: &str) -> Diagnostics {
    Diagnostics {
        iterations: 0,
        far_coordinate: 0.0,
        stationary_front: false,
        u_monotone: false,
        v_monotone: false,
        roots: Vec::new(),
        cross_method_gap: None,
        method: method.to_string(),
    }
}

fn thin_samples(samples: &[(f64, f64)], keep: usize) -> Vec<(f64, f64)> {
    if samples.len() <= keep {
        return samples.to_vec();
    }
    let stride = samples.len().div_ceil(keep);
    samples.iter().step_by(stride).copied().collect()
}

// ---------------------------------------------------------------------------
// Traveling wave
// ---------------------------------------------------------------------------

struct TwEnv<'a> {
    r: &'a ReducedBVP,
    cfg: &'a ShootingConfig,
    rho2m: f64,
    /// `g_u(delta) = mu * kappa` from the far field plus the melt flux
    /// condition.
    kappa: f64,
    evals: Cell<usize>,
}

impl<'a> TwEnv<'a> {
    /// Scalar matching function whose roots are admissible wave speeds:
    /// the phase-1 first integral evaluated at the surface minus the
    /// surface flux condition.
    fn f_match(&self, mu: f64) -> Result<f64, SolverError> {
        self.evals.set(self.evals.get() + 1);
        let r = self.r;
        let u0 = velocity_inverse(&r.h, r.u_range, mu, self.cfg.root_tol)?;
        let c1 = mu * (self.kappa + r.u_m);
        let g0 = c1 - mu * u0;
        Ok(g0 - (r.rho1.eval(u0)? * r.l_v * mu - r.q.eval(u0)?))
    }

    /// Generic-shooting residual: launch phase 1 from the surface
    /// conditions, catch the melt front as an event, hand the flux across
    /// via the melt condition, and measure the far-field miss.
    fn shoot(&self, mu: f64, far_span: f64) -> Result<(f64, f64), NumericError> {
        self.evals.set(self.evals.get() + 1);
        let r = self.r;
        let u0 = velocity_inverse(&r.h, r.u_range, mu, self.cfg.root_tol)
            .map_err(|e| NumericError::Eval(e.to_string()))?;
        let g0 = r.rho1.eval(u0)? * r.l_v * mu - r.q.eval(u0)?;
        let ev1 = |_: f64, y: &[f64; 2]| y[0] - r.u_m;
        let sol1 = integrate::<2>(
            &mut |s, y| r.u_rhs(mu, s, y),
            0.0,
            self.cfg.far_cap,
            [u0, g0],
            &self.cfg.ode_opts(),
            Some(&ev1),
        )
        .map_err(|e| NumericError::Eval(e.to_string()))?;
        let Some((delta, y_melt)) = sol1.event else {
            return Err(NumericError::Eval("phase 1 never reaches u_m".into()));
        };
        let g_v = y_melt[1] + self.rho2m * r.l_m * mu;
        let big = 100.0 * (1.0 + r.v_m.abs() + r.v_inf.abs());
        let ev2 = |_: f64, y: &[f64; 2]| y[0].abs() - big;
        let sol2 = integrate::<2>(
            &mut |s, y| r.v_rhs(mu, s, y),
            delta,
            delta + far_span,
            [r.v_m, g_v],
            &self.cfg.ode_opts(),
            Some(&ev2),
        )
        .map_err(|e| NumericError::Eval(e.to_string()))?;
        Ok((sol2.y_end[0] - r.v_inf, delta))
    }

    /// Root of the shooting residual near `mu_center`.
    fn shoot_root(&self, mu_center: f64, far_span: f64) -> Result<(f64, f64), SolverError> {
        let tol = 1e-13 * (1.0 + mu_center.abs());
        for half_width in [0.2, 1.0] {
            let lo = mu_center * (1.0 - half_width);
            let hi = mu_center * (1.0 + half_width);
            let brackets = numeric::scan_brackets(
                &mut |m| self.shoot(m, far_span).ok().map(|(rr, _)| rr),
                lo.max(1e-9),
                hi,
                32,
            );
            let best = brackets
                .iter()
                .min_by(|a, b| {
                    let da = (0.5 * (a.0 + a.1) - mu_center).abs();
                    let db = (0.5 * (b.0 + b.1) - mu_center).abs();
                    da.total_cmp(&db)
                })
                .copied();
            if let Some((a, b)) = best {
                let mu = numeric::bracket_root(
                    &mut |m| self.shoot(m, far_span).map(|(rr, _)| rr),
                    a,
                    b,
                    tol,
                )?;
                let (_, delta) = self.shoot(mu, far_span)?;
                return Ok((mu, delta));
            }
        }
        let mut samples = Vec::new();
        for i in 0..=24 {
            let m = mu_center * (0.5 + 1.5 * i as f64 / 24.0);
            if let Ok((rr, _)) = self.shoot(m, far_span) {
                samples.push((m, rr));
            }
        }
        Err(SolverError::NoBracket { context: "generic-shooting cross-check", samples })
    }
}

fn coef_max(c: &Coef, range: (f64, f64), fallback_at: f64) -> f64 {
    let mut best = f64::NAN;
    for i in 0..=32 {
        let x = range.0 + (range.1 - range.0) * i as f64 / 32.0;
        if let Ok(v) = c.eval(x) {
            best = if best.is_nan() { v } else { best.max(v) };
        }
    }
    if best.is_finite() && best > 0.0 {
        best
    } else {
        c.eval(fallback_at).unwrap_or(1.0).max(1e-12)
    }
}

pub fn solve_traveling_wave(
    r: &ReducedBVP,
    cfg: &ShootingConfig,
) -> Result<SolutionResult, SolverError> {
    cfg.check()?;
    if r.kind != ReducedKind::TravelingWave {
        return Err(SolverError::WrongKind {
            expected: ReducedKind::TravelingWave,
            found: r.kind,
        });
    }
    let h_vals = velocity_samples(&r.h, r.u_range)?;
    if !strictly_monotone(&h_vals) {
        return Err(SolverError::NonMonotoneVelocityLaw { lo: r.u_range.0, hi: r.u_range.1 });
    }
    let rho2m = r.rho2.eval(r.v_m)?;
    let env = TwEnv {
        r,
        cfg,
        rho2m,
        kappa: (r.v_inf - r.v_m) - rho2m * r.l_m,
        evals: Cell::new(0),
    };

    // Wave speeds are constrained to the attainable range of h; scan the
    // positive part of that window for roots of F.
    let (h_lo, h_hi) = (
        h_vals[0].min(h_vals[H_SAMPLES]),
        h_vals[0].max(h_vals[H_SAMPLES]),
    );
    let margin = 1e-9 * (1.0 + h_hi.abs() + h_lo.abs());
    let scan_lo = (h_lo + margin).max(1e-6);
    let scan_hi = h_hi - margin;
    let mut samples = Vec::new();
    let mut roots: Vec<f64> = Vec::new();
    if scan_hi > scan_lo {
        let brackets = numeric::scan_brackets(
            &mut |m| {
                let v = env.f_match(m).ok();
                if let Some(fv) = v {
                    samples.push((m, fv));
                }
                v
            },
            scan_lo,
            scan_hi,
            240,
        );
        for (a, b) in brackets {
            let root = if a == b {
                a
            } else {
                numeric::bracket_root(
                    &mut |m| env.f_match(m).map_err(|e| NumericError::Eval(e.to_string())),
                    a,
                    b,
                    1e-13 * (1.0 + b.abs()),
                )?
            };
            if !roots.iter().any(|r0| (r0 - root).abs() < 1e-8 * (1.0 + root.abs())) {
                roots.push(root);
            }
        }
    }
    roots.sort_by(f64::total_cmp);

    // Zero speed is a fixed point of F whenever q vanishes at h^-1(0); it
    // cannot carry a genuine two-phase profile (the solid phase would have
    // to be constant at v_m != v_inf), so it is only reported when no
    // moving wave exists.
    let stationary_u0 = if h_lo < 0.0 && h_hi > 0.0 {
        velocity_inverse(&r.h, r.u_range, 0.0, cfg.root_tol)
            .ok()
            .filter(|u0| r.q.eval(*u0).map(|q0| q0.abs() <= cfg.root_tol).unwrap_or(false))
    } else {
        None
    };

    if roots.is_empty() {
        if let Some(u0) = stationary_u0 {
            return stationary_result(r, cfg, u0, env.evals.get());
        }
        return Err(SolverError::NoBracket {
            context: "traveling-wave matching function",
            samples: thin_samples(&samples, 24),
        });
    }

    let mu = match cfg.guess {
        Some([g, _]) => roots
            .iter()
            .copied()
            .min_by(|a, b| (a - g).abs().total_cmp(&(b - g).abs()))
            .unwrap(),
        None => roots[0],
    };

    // First-integral quantities at the chosen root.
    let u0 = velocity_inverse(&r.h, r.u_range, mu, cfg.root_tol)?;
    let c1 = mu * (env.kappa + r.u_m);
    let g0 = c1 - mu * u0;

    // The gradient d1(u) u' = C1 - mu u must keep one sign between the
    // surface and melt values or the quadrature is singular.
    let (w_lo, w_hi) = (u0.min(r.u_m), u0.max(r.u_m));
    let mut sign = 0.0_f64;
    for i in 0..=32 {
        let w = w_lo + (w_hi - w_lo) * i as f64 / 32.0;
        let s = c1 - mu * w;
        if s == 0.0 || (sign != 0.0 && s.signum() != sign) {
            return Err(SolverError::FoldedProfile);
        }
        sign = s.signum();
    }

    let delta = numeric::adaptive_quad(
        &mut |w| {
            let d = r.d1.eval(w).unwrap_or(f64::NAN);
            d / (c1 - mu * w)
        },
        u0,
        r.u_m,
        1e-2 * cfg.root_tol,
    )?;
    if !(delta > 0.0) {
        return Err(SolverError::NonPositiveGap(delta));
    }

    let u_sol = integrate::<2>(
        &mut |s, y| r.u_rhs(mu, s, y),
        0.0,
        delta,
        [u0, g0],
        &cfg.ode_opts(),
        None,
    )?;

    // Extend the solid phase until its tail sits firmly on v_inf; the
    // first-integral parameters do not depend on the truncation, so only
    // the tail criterion drives the doubling.
    let v_interval = (r.v_m.min(r.v_inf), r.v_m.max(r.v_inf));
    let d2_bar = coef_max(&r.d2, v_interval, r.v_m);
    let tail_target = cfg.far_value_tol.min(1e-11);
    let mut far_span = (6.0 * d2_bar / mu).max(2.0);
    let v_sol = loop {
        if delta + far_span > cfg.far_cap {
            return Err(SolverError::FarFieldCap(cfg.far_cap));
        }
        let sol = integrate::<2>(
            &mut |s, y| r.v_rhs(mu, s, y),
            delta,
            delta + far_span,
            [r.v_m, mu * (r.v_inf - r.v_m)],
            &cfg.ode_opts(),
            None,
        )?;
        if (sol.y_end[0] - r.v_inf).abs() <= tail_target {
            break sol;
        }
        far_span *= 2.0;
    };

    // Independent route; doubling the truncation must leave it stable.
    let (mut mu_sh, mut delta_sh) = env.shoot_root(mu, far_span)?;
    loop {
        let wider = (2.0 * far_span).min(cfg.far_cap - delta);
        let (mu2, delta2) = env.shoot_root(mu, wider)?;
        if (mu2 - mu_sh).abs() < cfg.far_stability_tol
            && (delta2 - delta_sh).abs() < cfg.far_stability_tol
        {
            mu_sh = mu2;
            delta_sh = delta2;
            break;
        }
        if wider >= cfg.far_cap - delta {
            return Err(SolverError::FarFieldCap(cfg.far_cap));
        }
        far_span = wider;
        mu_sh = mu2;
        delta_sh = delta2;
    }
    let gap = (mu - mu_sh).abs().max((delta - delta_sh).abs());

    let mut diag = blank_diagnostics("first integral, cross-checked by generic shooting");
    diag.iterations = env.evals.get();
    diag.roots = roots;
    diag.cross_method_gap = Some(gap);
    assemble(
        r,
        [mu, delta],
        PhaseProfile::new((0.0, delta), u_sol),
        PhaseProfile::new((delta, delta + far_span), v_sol),
        (mu, mu),
        Some(mu),
        diag,
    )
}

/// Zero-speed fixed point: both phases frozen at their front values.  The
/// melt and far-field conditions cannot hold (v_m != v_inf), so their
/// mismatches pass through to the report.
fn stationary_result(
    r: &ReducedBVP,
    cfg: &ShootingConfig,
    u0: f64,
    evals: usize,
) -> Result<SolutionResult, SolverError> {
    let flat = |y0: [f64; 2]| {
        integrate::<2>(
            &mut |_, _| Ok([0.0, 0.0]),
            0.0,
            1.0,
            y0,
            &cfg.ode_opts(),
            None,
        )
    };
    let u_sol = flat([u0, 0.0])?;
    let v_sol = flat([r.v_m, 0.0])?;
    let mut diag = blank_diagnostics("first integral (stationary front)");
    diag.iterations = evals;
    diag.stationary_front = true;
    diag.roots = vec![0.0];
    assemble(
        r,
        [0.0, 0.0],
        PhaseProfile::new((0.0, 1.0), u_sol),
        PhaseProfile::new((0.0, 1.0), v_sol),
        (0.0, 0.0),
        Some(0.0),
        diag,
    )
}

// ---------------------------------------------------------------------------
// Self-similar
// ---------------------------------------------------------------------------

struct SsEnv<'a> {
    r: &'a ReducedBVP,
    cfg: &'a ShootingConfig,
    rho2m: f64,
    d2_const: Option<f64>,
    evals: Cell<usize>,
    /// Last sub-shoot result `(om2, flux)`, reused as a warm start.
    p2_cache: Cell<Option<(f64, f64)>>,
}

impl<'a> SsEnv<'a> {
    /// Flux `d2(v_m) v'` at the melt front that lets the solid phase decay
    /// to `v_inf`: the erfc closed form when `d2` is constant, otherwise a
    /// secant sub-shoot over the truncated tail.
    fn phase2_flux(&self, om2: f64, far_span: f64) -> Result<f64, NumericError> {
        let r = self.r;
        let erfc_flux = |d2: f64| {
            let x = om2 / (2.0 * d2.sqrt());
            d2 * (r.v_inf - r.v_m) * (-x * x).exp() / ((PI * d2).sqrt() * libm::erfc(x))
        };
        if let Some(d2) = self.d2_const {
            return Ok(erfc_flux(d2));
        }
        // The outer residual inherits this flux's error, so the sub-shoot
        // runs two digits tighter than the outer tolerances.
        let opts = Dopri5Options {
            rtol: (self.cfg.ode_rtol * 1e-2).max(1e-13),
            atol: (self.cfg.ode_atol * 1e-2).max(1e-14),
            ..Dopri5Options::default()
        };
        let big = 100.0 * (1.0 + r.v_m.abs() + r.v_inf.abs());
        let ev = |_: f64, y: &[f64; 2]| y[0].abs() - big;
        let mut miss = |g: f64| -> Result<f64, NumericError> {
            let sol = integrate::<2>(
                &mut |s, y| r.v_rhs(0.0, s, y),
                om2,
                om2 + far_span,
                [r.v_m, g],
                &opts,
                Some(&ev),
            )
            .map_err(|e| NumericError::Eval(e.to_string()))?;
            Ok(sol.y_end[0] - r.v_inf)
        };
        let g0 = match self.p2_cache.get() {
            Some((om_prev, g_prev)) if (om_prev - om2).abs() < 0.3 => g_prev,
            _ => erfc_flux(r.d2.eval(r.v_m)?.max(1e-12)),
        };
        let g1 = g0 * 1.001 + 1e-9 * g0.signum();
        let g = numeric::secant(&mut miss, g0, g1, 0.1 * self.cfg.root_tol, 60)?;
        self.p2_cache.set(Some((om2, g)));
        Ok(g)
    }

    fn residuals(&self, x: [f64; 2], far_span: f64) -> Result<[f64; 2], NumericError> {
        self.evals.set(self.evals.get() + 1);
        let [om1, om2] = x;
        let r = self.r;
        if !(om2 - om1 > 1e-9) {
            return Err(NumericError::Eval("front ordering omega1 < omega2 violated".into()));
        }
        let u0 = velocity_inverse(&r.h, r.u_range, 0.5 * om1, self.cfg.root_tol)
            .map_err(|e| NumericError::Eval(e.to_string()))?;
        let g0 = r.rho1.eval(u0)? * r.l_v * (0.5 * om1) - r.q.eval(u0)?;
        let sol1 = integrate::<2>(
            &mut |s, y| r.u_rhs(0.0, s, y),
            om1,
            om2,
            [u0, g0],
            &self.cfg.ode_opts(),
            None,
        )
        .map_err(|e| NumericError::Eval(e.to_string()))?;
        let g_v = self.phase2_flux(om2, far_span)?;
        Ok([
            sol1.y_end[0] - r.u_m,
            g_v - sol1.y_end[1] - self.rho2m * r.l_m * (0.5 * om2),
        ])
    }

    /// Coarse sweep of the residual map, best (lowest norm) first.
    fn grid_candidates(&self, far_span: f64) -> Vec<(f64, f64, f64)> {
        let Ok(h_vals) = velocity_samples(&self.r.h, self.r.u_range) else {
            return Vec::new();
        };
        let (h_lo, h_hi) = (
            h_vals[0].min(h_vals[H_SAMPLES]),
            h_vals[0].max(h_vals[H_SAMPLES]),
        );
        let w = h_hi - h_lo;
        let mut out = Vec::new();
        for i in 1..=9 {
            let om1 = 2.0 * (h_lo + w * i as f64 / 10.0);
            for gap in [0.05, 0.15, 0.4, 0.9, 1.8, 3.5] {
                let om2 = om1 + gap;
                if let Ok(res) = self.residuals([om1, om2], far_span) {
                    let norm = res[0].abs().max(res[1].abs());
                    if norm.is_finite() {
                        out.push((om1, om2, norm));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.2.total_cmp(&b.2));
        out
    }

    /// Scalar-in-scalar fallback: for each melt coordinate, pin the surface
    /// coordinate with the melt-value condition, then bracket the Stefan
    /// mismatch over the melt coordinate.
    fn nested_fallback(&self, far_span: f64) -> Result<[f64; 2], SolverError> {
        let h_vals = velocity_samples(&self.r.h, self.r.u_range)?;
        let (h_lo, h_hi) = (
            h_vals[0].min(h_vals[H_SAMPLES]),
            h_vals[0].max(h_vals[H_SAMPLES]),
        );
        let margin = 1e-6 * (1.0 + h_lo.abs() + h_hi.abs());
        let (w1_lo, w1_hi) = (2.0 * (h_lo + margin), 2.0 * (h_hi - margin));
        let width = 1e-4 * self.cfg.root_tol;

        let inner = |om2: f64| -> Option<f64> {
            let hi = w1_hi.min(om2 - 0.01);
            if !(hi > w1_lo) {
                return None;
            }
            let brackets = numeric::scan_brackets(
                &mut |om1| self.residuals([om1, om2], far_span).ok().map(|r| r[0]),
                w1_lo,
                hi,
                40,
            );
            let (a, b) = *brackets.first()?;
            numeric::bracket_root(
                &mut |om1| self.residuals([om1, om2], far_span).map(|r| r[0]),
                a,
                b,
                width,
            )
            .ok()
        };

        let om2_hi = (8.0_f64).max(4.0 * far_span.sqrt());
        let brackets = numeric::scan_brackets(
            &mut |om2| {
                let om1 = inner(om2)?;
                self.residuals([om1, om2], far_span).ok().map(|r| r[1])
            },
            0.05,
            om2_hi,
            48,
        );
        let Some((a, b)) = brackets.first().copied() else {
            let landscape = self.grid_candidates(far_span).into_iter().take(12).collect();
            return Err(SolverError::NewtonDiverged { landscape });
        };
        let om2 = numeric::bracket_root(
            &mut |om2| {
                let om1 = inner(om2)
                    .ok_or_else(|| NumericError::Eval("inner melt-value solve failed".into()))?;
                self.residuals([om1, om2], far_span).map(|r| r[1])
            },
            a,
            b,
            width,
        )?;
        let om1 = inner(om2)
            .ok_or_else(|| NumericError::Eval("inner melt-value solve failed".into()))?;
        Ok([om1, om2])
    }

    /// One full solve at a fixed truncation: Newton from the seed, retries
    /// from the best grid points, nested bracketed fallback last.
    fn solve_at(&self, seed: [f64; 2], far_span: f64) -> Result<[f64; 2], SolverError> {
        let guard = |x: [f64; 2]| {
            x[0].is_finite() && x[1].is_finite() && x[1] - x[0] > 1e-9
        };
        if !guard(seed) {
            return Err(SolverError::FrontOrdering);
        }
        let newton = |start: [f64; 2]| {
            numeric::newton2(
                &mut |x| self.residuals(x, far_span),
                &guard,
                start,
                self.cfg.root_tol,
                self.cfg.max_newton_iter,
            )
        };
        if let Ok((x, _)) = newton(seed) {
            return Ok(x);
        }
        for &(a, b, _) in self.grid_candidates(far_span).iter().take(3) {
            if let Ok((x, _)) = newton([a, b]) {
                return Ok(x);
            }
        }
        self.nested_fallback(far_span)
    }
}

/// Constant-coefficient surrogate: freezes the diffusivities and densities
/// at the front values, keeping the boundary data, so both phases become
/// erf-shaped and the solve is cheap.  Used only for initial guesses.
fn frozen_surrogate(r: &ReducedBVP) -> ReducedBVP {
    let freeze = |c: &Coef, at: f64| Coef::constant(c.eval(at).unwrap_or(1.0));
    ReducedBVP {
        d1: freeze(&r.d1, r.u_m),
        d2: freeze(&r.d2, r.v_m),
        rho1: freeze(&r.rho1, r.u_m),
        rho2: freeze(&r.rho2, r.v_m),
        ..r.clone()
    }
}

pub fn solve_self_similar(
    r: &ReducedBVP,
    cfg: &ShootingConfig,
) -> Result<SolutionResult, SolverError> {
    cfg.check()?;
    if r.kind != ReducedKind::SelfSimilar {
        return Err(SolverError::WrongKind {
            expected: ReducedKind::SelfSimilar,
            found: r.kind,
        });
    }
    let h_vals = velocity_samples(&r.h, r.u_range)?;
    if !strictly_monotone(&h_vals) {
        return Err(SolverError::NonMonotoneVelocityLaw { lo: r.u_range.0, hi: r.u_range.1 });
    }
    let env = SsEnv {
        r,
        cfg,
        rho2m: r.rho2.eval(r.v_m)?,
        d2_const: r.d2.as_constant(),
        evals: Cell::new(0),
        p2_cache: Cell::new(None),
    };

    let v_interval = (r.v_m.min(r.v_inf), r.v_m.max(r.v_inf));
    let d2_bar = coef_max(&r.d2, v_interval, r.v_m);
    let mut far_span = (6.0 * d2_bar.sqrt()).max(2.0);

    let seed = match cfg.guess {
        Some(g) => g,
        None => {
            let sur = frozen_surrogate(r);
            let sur_env = SsEnv {
                r: &sur,
                cfg,
                rho2m: sur.rho2.eval(sur.v_m)?,
                d2_const: sur.d2.as_constant(),
                evals: Cell::new(0),
                p2_cache: Cell::new(None),
            };
            let sur_seed = sur_env
                .grid_candidates(far_span)
                .first()
                .map(|&(a, b, _)| [a, b]);
            let guess = sur_seed.and_then(|s| sur_env.solve_at(s, far_span).ok());
            env.evals.set(sur_env.evals.get());
            match guess.or(sur_seed) {
                Some(g) => g,
                None => {
                    let landscape =
                        env.grid_candidates(far_span).into_iter().take(12).collect();
                    return Err(SolverError::NewtonDiverged { landscape });
                }
            }
        }
    };

    // Solve, then re-solve with a doubled tail until the parameters stop
    // moving and the computed tail actually reaches v_inf.
    let mut params = env.solve_at(seed, far_span)?;
    loop {
        if params[1] + far_span > cfg.far_cap {
            return Err(SolverError::FarFieldCap(cfg.far_cap));
        }
        let wider = 2.0 * far_span;
        let next = env.solve_at(params, wider)?;
        let stable = (next[0] - params[0]).abs() < cfg.far_stability_tol
            && (next[1] - params[1]).abs() < cfg.far_stability_tol;
        let g_v = env.phase2_flux(next[1], wider)?;
        let tail_sol = integrate::<2>(
            &mut |s, y| r.v_rhs(0.0, s, y),
            next[1],
            next[1] + wider,
            [r.v_m, g_v],
            &cfg.ode_opts(),
            None,
        )?;
        let tail = (tail_sol.y_end[0] - r.v_inf).abs();
        params = next;
        far_span = wider;
        if stable && tail <= cfg.far_value_tol {
            break;
        }
    }

    let [om1, om2] = params;
    let u0 = velocity_inverse(&r.h, r.u_range, 0.5 * om1, cfg.root_tol)?;
    let g0 = r.rho1.eval(u0)? * r.l_v * (0.5 * om1) - r.q.eval(u0)?;
    let u_sol = integrate::<2>(
        &mut |s, y| r.u_rhs(0.0, s, y),
        om1,
        om2,
        [u0, g0],
        &cfg.ode_opts(),
        None,
    )?;
    let g_v = env.phase2_flux(om2, far_span)?;
    let v_sol = integrate::<2>(
        &mut |s, y| r.v_rhs(0.0, s, y),
        om2,
        om2 + far_span,
        [r.v_m, g_v],
        &cfg.ode_opts(),
        None,
    )?;

    let mut diag = blank_diagnostics(if env.d2_const.is_some() {
        "damped Newton shooting, erfc closed-form solid phase"
    } else {
        "damped Newton shooting, sub-shot solid phase"
    });
    diag.iterations = env.evals.get();
    diag.stationary_front = om1.abs() <= 1e-12 * (1.0 + om2.abs());
    assemble(
        r,
        params,
        PhaseProfile::new((om1, om2), u_sol),
        PhaseProfile::new((om2, om2 + far_span), v_sol),
        (0.5 * om1, 0.5 * om2),
        None,
        diag,
    )
}
