//! Independent verification of reconstructed solutions.
//!
//! Three tools, each usable on its own: closed-form profiles for constant
//! diffusivities ([`analytic_constant_case`]), a finite-difference residual
//! scan of the moving-boundary heat equations ([`pde_residual`]), and a
//! direct front-tracking simulation on immobilized coordinates
//! ([`front_track`]).  [`validate_solution`] drives all of them and folds
//! the verdicts into a [`ValidationReport`].
//!
//! None of these re-use the shooting machinery: the residual scan differences
//! field samples, and the tracker discretizes the free-boundary system in
//! physical time, so agreement with the reduced solution is evidence rather
//! than tautology.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, NumericError};
use crate::problem::{CanonicalProblem, Coef, Coef2};
use crate::reduction::{ReducedBVP, ReducedKind, ReducedSolution};
use crate::solver::SolverError;

/// Initial far-field closeness required of the truncation point.
const FAR_INIT_TOL: f64 = 1e-9;
/// Far-field closeness required when re-checked at the final time.
const FAR_END_TOL: f64 = 1e-6;
/// Node spacing of the re-integrated profile sweep.
const NODE_STEP: f64 = 1e-3;
/// Substep bound for the per-stencil refinement legs.
const SUB_STEP: f64 = 5e-4;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("{0} must be constant for the closed-form profiles")]
    NonConstantDiffusivity(&'static str),
    #[error("closed-form profiles are degenerate: {0}")]
    Degenerate(String),
    #[error("self-similar fields require t > 0; got t = {0}")]
    NonPositiveTime(f64),
    #[error("sampling window at t = {t} leaves no room between the fronts")]
    GridTouchesFront { t: f64 },
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("melt layer collapsed at t = {t}: s1 = {s1}, s2 = {s2}")]
    FrontCrossing { t: f64, s1: f64, s2: f64 },
    #[error("melt front reached the truncation boundary at t = {t}: s2 = {s2}, x_far = {x_far}")]
    Truncation { t: f64, s2: f64, x_far: f64 },
    #[error("time step collapsed at t = {t}: dt = {dt}")]
    Stiffness { t: f64, dt: f64 },
    #[error("{context} became non-finite at t = {t}")]
    NonFinite { context: &'static str, t: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

// ---------------------------------------------------------------------------
// Closed forms for constant diffusivities
// ---------------------------------------------------------------------------

/// Exact reduced profiles when both diffusivities are constant: exponentials
/// in the traveling frame, `erf`/`erfc` pairs in the similarity variable.
/// Coefficients are fixed by the boundary values at the two fronts and the
/// far field, so the profiles depend only on the problem data and the solved
/// front parameters.
#[derive(Clone, Debug)]
pub struct ClosedFormProfiles {
    pub kind: ReducedKind,
    pub params: [f64; 2],
    pub d1: f64,
    pub d2: f64,
    /// `u(s) = u_coef[0] + u_coef[1] * basis(s)` with basis `exp(-mu s / d1)`
    /// or `erf(s / (2 sqrt(d1)))`.
    pub u_coef: [f64; 2],
    /// `v(s) = v_coef[0] + v_coef[1] * basis(s)` with basis `exp(-mu s / d2)`
    /// or `erfc(s / (2 sqrt(d2)))`.
    pub v_coef: [f64; 2],
}

impl ClosedFormProfiles {
    pub fn u(&self, s: f64) -> f64 {
        let basis = match self.kind {
            ReducedKind::TravelingWave => (-self.params[0] * s / self.d1).exp(),
            ReducedKind::SelfSimilar => libm::erf(0.5 * s / self.d1.sqrt()),
        };
        self.u_coef[0] + self.u_coef[1] * basis
    }

    pub fn v(&self, s: f64) -> f64 {
        let basis = match self.kind {
            ReducedKind::TravelingWave => (-self.params[0] * s / self.d2).exp(),
            ReducedKind::SelfSimilar => libm::erfc(0.5 * s / self.d2.sqrt()),
        };
        self.v_coef[0] + self.v_coef[1] * basis
    }
}

/// Closed-form solution of the reduced problem for constant diffusivities.
///
/// The surface value comes from inverting the velocity law at the front
/// speed, the remaining coefficients from two-point interpolation in the
/// exponential or error-function basis, and the solid tail from the far
/// field.  Non-constant diffusivities are a contract error.
pub fn analytic_constant_case(
    r: &ReducedBVP,
    params: [f64; 2],
) -> Result<ClosedFormProfiles, ValidateError> {
    let d1 = r
        .d1
        .as_constant()
        .ok_or(ValidateError::NonConstantDiffusivity("d1"))?;
    let d2 = r
        .d2
        .as_constant()
        .ok_or(ValidateError::NonConstantDiffusivity("d2"))?;
    let speed1 = r.front_speed(params[0], params[0]);
    let u0 = crate::solver::velocity_inverse(&r.h, r.u_range, speed1, 1e-11)?;
    let (u_coef, v_coef) = match r.kind {
        ReducedKind::TravelingWave => {
            let (mu, delta) = (params[0], params[1]);
            if !(mu != 0.0 && delta > 0.0) {
                return Err(ValidateError::Degenerate(format!(
                    "need mu != 0 and delta > 0; got mu = {mu}, delta = {delta}"
                )));
            }
            let eb = (-mu * delta / d1).exp();
            if (1.0 - eb).abs() < 1e-300 {
                return Err(ValidateError::Degenerate("flat liquid basis".into()));
            }
            let b = (u0 - r.u_m) / (1.0 - eb);
            let bv = (r.v_m - r.v_inf) * (mu * delta / d2).exp();
            ([u0 - b, b], [r.v_inf, bv])
        }
        ReducedKind::SelfSimilar => {
            let (om1, om2) = (params[0], params[1]);
            if !(om2 > om1) {
                return Err(ValidateError::Degenerate(format!(
                    "need omega2 > omega1; got {om1}, {om2}"
                )));
            }
            let e1 = libm::erf(0.5 * om1 / d1.sqrt());
            let e2 = libm::erf(0.5 * om2 / d1.sqrt());
            if (e2 - e1).abs() < 1e-300 {
                return Err(ValidateError::Degenerate("flat liquid basis".into()));
            }
            let b = (r.u_m - u0) / (e2 - e1);
            let ec = libm::erfc(0.5 * om2 / d2.sqrt());
            if ec < 1e-300 {
                return Err(ValidateError::Degenerate("vanishing solid basis".into()));
            }
            ([u0 - b * e1, b], [r.v_inf, (r.v_m - r.v_inf) / ec])
        }
    };
    Ok(ClosedFormProfiles { kind: r.kind, params, d1, d2, u_coef, v_coef })
}

// ---------------------------------------------------------------------------
// Field samplers
// ---------------------------------------------------------------------------

/// A two-phase field in physical coordinates, queried by the residual scan
/// and used as initial data by the tracker.
///
/// `sample_u`/`sample_v` take a cluster of nearby points (one difference
/// stencil) and must return values that are mutually consistent to near
/// machine precision: the residual scan divides second differences by `h^2`,
/// so independent pointwise noise at the integration tolerance would swamp
/// the discretization error being measured.
pub trait PdeField {
    /// Front positions `(s1, s2)` at time `t`.
    fn fronts_at(&self, t: f64) -> Result<(f64, f64), ValidateError>;
    /// Largest solid-phase coordinate safe to sample at time `t`.
    fn outer_edge(&self, t: f64) -> Result<f64, ValidateError>;
    /// Liquid values at a cluster of nearby `(x, t)` points.
    fn sample_u(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError>;
    /// Solid values at a cluster of nearby `(x, t)` points.
    fn sample_v(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError>;
}

fn invariant_coord(kind: ReducedKind, params: [f64; 2], x: f64, t: f64) -> Result<f64, ValidateError> {
    match kind {
        ReducedKind::TravelingWave => Ok(x - params[0] * t),
        ReducedKind::SelfSimilar => {
            if !(t > 0.0) {
                return Err(ValidateError::NonPositiveTime(t));
            }
            Ok(x / t.sqrt())
        }
    }
}

fn fronts_of(kind: ReducedKind, params: [f64; 2], t: f64) -> Result<(f64, f64), ValidateError> {
    match kind {
        ReducedKind::TravelingWave => Ok((params[0] * t, params[0] * t + params[1])),
        ReducedKind::SelfSimilar => {
            if !(t > 0.0) {
                return Err(ValidateError::NonPositiveTime(t));
            }
            Ok((params[0] * t.sqrt(), params[1] * t.sqrt()))
        }
    }
}

impl PdeField for ClosedFormProfiles {
    fn fronts_at(&self, t: f64) -> Result<(f64, f64), ValidateError> {
        fronts_of(self.kind, self.params, t)
    }

    fn outer_edge(&self, t: f64) -> Result<f64, ValidateError> {
        let tail = match self.kind {
            // 25 e-foldings of the exponential tail.
            ReducedKind::TravelingWave => self.params[1] + 25.0 * self.d2 / self.params[0].abs(),
            ReducedKind::SelfSimilar => self.params[1] + 17.0 * self.d2.sqrt(),
        };
        match self.kind {
            ReducedKind::TravelingWave => Ok(self.params[0] * t + tail),
            ReducedKind::SelfSimilar => {
                if !(t > 0.0) {
                    return Err(ValidateError::NonPositiveTime(t));
                }
                Ok(tail * t.sqrt())
            }
        }
    }

    fn sample_u(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
        pts.iter()
            .map(|&(x, t)| Ok(self.u(invariant_coord(self.kind, self.params, x, t)?)))
            .collect()
    }

    fn sample_v(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
        pts.iter()
            .map(|&(x, t)| Ok(self.v(invariant_coord(self.kind, self.params, x, t)?)))
            .collect()
    }
}

type PhaseRhs<'a> = Box<dyn Fn(f64, [f64; 2]) -> Result<[f64; 2], NumericError> + 'a>;

/// One classical RK4 leg from `s` to `target`, substeps bounded by
/// `max_step`.  The cap keeps long extrapolation legs affordable; they only
/// occur in flat far-field tails where the error is negligible anyway.
fn rk4_leg(
    rhs: &PhaseRhs<'_>,
    mut s: f64,
    mut y: [f64; 2],
    target: f64,
    max_step: f64,
) -> Result<[f64; 2], NumericError> {
    let dist = target - s;
    if dist == 0.0 {
        return Ok(y);
    }
    let n = ((dist.abs() / max_step).ceil() as usize).clamp(1, 400);
    let h = dist / n as f64;
    for _ in 0..n {
        let k1 = rhs(s, y)?;
        let k2 = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]])?;
        let k3 = rhs(s + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]])?;
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]])?;
        y[0] += h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]);
        s += h;
    }
    Ok(y)
}

/// Re-integrated phase profile with dense nodes, supporting clustered
/// evaluation along a single trajectory.  All values returned for one
/// cluster lie on one RK4 flow from one stored node, so their mutual
/// consistency is at the RK4 roundoff level rather than at the adaptive
/// integrator's tolerance.
struct RefinedPhase<'a> {
    rhs: PhaseRhs<'a>,
    /// `(s, y)` nodes in ascending `s`, spaced by at most `NODE_STEP`.
    nodes: Vec<(f64, [f64; 2])>,
}

impl<'a> RefinedPhase<'a> {
    fn new(rhs: PhaseRhs<'a>, start: [f64; 2], span: (f64, f64)) -> Result<Self, NumericError> {
        let width = span.1 - span.0;
        let n = ((width / NODE_STEP).ceil() as usize).max(1);
        let h = width / n as f64;
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push((span.0, start));
        let mut y = start;
        for i in 1..=n {
            let s_prev = span.0 + (i - 1) as f64 * h;
            let s_next = span.0 + i as f64 * h;
            y = rk4_leg(&rhs, s_prev, y, s_next, h)?;
            nodes.push((s_next, y));
        }
        Ok(Self { rhs, nodes })
    }

    /// Values at ascending coordinates, chained along one trajectory.
    /// Coordinates outside the node range extrapolate by integration.
    fn eval_sorted(&self, targets: &[f64]) -> Result<Vec<[f64; 2]>, NumericError> {
        let first = targets.first().copied().unwrap_or(0.0);
        let idx = self
            .nodes
            .partition_point(|(s, _)| *s <= first)
            .saturating_sub(1);
        let (mut s, mut y) = self.nodes[idx];
        let mut out = Vec::with_capacity(targets.len());
        for &tg in targets {
            y = rk4_leg(&self.rhs, s, y, tg, SUB_STEP)?;
            s = tg;
            out.push(y);
        }
        Ok(out)
    }

    fn sample(&self, kind: ReducedKind, params: [f64; 2], pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
        let mut coords = Vec::with_capacity(pts.len());
        for &(x, t) in pts {
            coords.push(invariant_coord(kind, params, x, t)?);
        }
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&i, &j| coords[i].total_cmp(&coords[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| coords[i]).collect();
        let vals = self.eval_sorted(&sorted)?;
        let mut out = vec![0.0; pts.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = vals[k][0];
        }
        Ok(out)
    }
}

/// Physical-coordinate view of a reduced solution, backed by re-integrated
/// profiles of the phase equations from the solved boundary states.
pub struct ReconstructedField<'a> {
    kind: ReducedKind,
    params: [f64; 2],
    v_span: (f64, f64),
    u_phase: RefinedPhase<'a>,
    v_phase: RefinedPhase<'a>,
}

impl<'a> ReconstructedField<'a> {
    pub fn new(r: &'a ReducedBVP, sol: &'a ReducedSolution) -> Result<Self, ValidateError> {
        let mu = sol.params[0];
        let u0 = sol.u.state(sol.u.span.0).ok_or_else(|| {
            ValidateError::Grid("liquid profile has no stored states".into())
        })?;
        let v0 = sol.v.state(sol.v.span.0).ok_or_else(|| {
            ValidateError::Grid("solid profile has no stored states".into())
        })?;
        let u_rhs: PhaseRhs<'a> = Box::new(move |s, y| r.u_rhs(mu, s, &y));
        let v_rhs: PhaseRhs<'a> = Box::new(move |s, y| r.v_rhs(mu, s, &y));
        Ok(Self {
            kind: r.kind,
            params: sol.params,
            v_span: sol.v.span,
            u_phase: RefinedPhase::new(u_rhs, u0, sol.u.span)?,
            v_phase: RefinedPhase::new(v_rhs, v0, sol.v.span)?,
        })
    }
}

impl PdeField for ReconstructedField<'_> {
    fn fronts_at(&self, t: f64) -> Result<(f64, f64), ValidateError> {
        fronts_of(self.kind, self.params, t)
    }

    fn outer_edge(&self, t: f64) -> Result<f64, ValidateError> {
        let s_edge = self.v_span.1 - 0.01 * (self.v_span.1 - self.v_span.0);
        match self.kind {
            ReducedKind::TravelingWave => Ok(self.params[0] * t + s_edge),
            ReducedKind::SelfSimilar => {
                if !(t > 0.0) {
                    return Err(ValidateError::NonPositiveTime(t));
                }
                Ok(s_edge * t.sqrt())
            }
        }
    }

    fn sample_u(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
        self.u_phase.sample(self.kind, self.params, pts)
    }

    fn sample_v(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
        self.v_phase.sample(self.kind, self.params, pts)
    }
}

// ---------------------------------------------------------------------------
// PDE residual scan
// ---------------------------------------------------------------------------

/// Space-time grid for the residual scan.  `nx` points per phase strip and
/// `nt` time samples; `h` is the difference spacing in both `x` and `t`.
/// A band of width `3h` around each front is excluded so every stencil stays
/// strictly inside its phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualGrid {
    pub nx: usize,
    pub nt: usize,
    pub h: f64,
    pub t_range: (f64, f64),
}

impl Default for ResidualGrid {
    fn default() -> Self {
        Self { nx: 50, nt: 50, h: 1e-3, t_range: (1.0, 2.0) }
    }
}

/// Largest absolute conservation-law residual seen in each phase.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseResiduals {
    pub liquid: f64,
    pub solid: f64,
}

/// Finite-difference residual of `w_t = (d(w) w_x)_x` over both phase
/// strips: centered time difference against a conserved-form flux
/// difference `[F(x + h/2) - F(x - h/2)] / h` with the diffusivity taken at
/// midpoint values.  Exact fields leave only the `O(h^2)` discretization
/// error, so the scan is an independent check on any sampler.
pub fn pde_residual(
    p: &CanonicalProblem,
    field: &dyn PdeField,
    grid: &ResidualGrid,
) -> Result<PhaseResiduals, ValidateError> {
    if grid.nx < 2 || grid.nt < 1 {
        return Err(ValidateError::Grid("need nx >= 2 and nt >= 1".into()));
    }
    if !(grid.h > 0.0) {
        return Err(ValidateError::Grid(format!("spacing must be positive; got {}", grid.h)));
    }
    if !(grid.t_range.0 < grid.t_range.1) && grid.nt > 1 {
        return Err(ValidateError::Grid("time range must be a nonempty interval".into()));
    }
    let h = grid.h;
    let band = 3.0 * h;
    let mut out = PhaseResiduals { liquid: 0.0, solid: 0.0 };
    for liquid in [true, false] {
        let d = if liquid { &p.d1 } else { &p.d2 };
        let mut worst = 0.0_f64;
        for ti in 0..grid.nt {
            let t = if grid.nt == 1 {
                grid.t_range.0
            } else {
                grid.t_range.0
                    + (grid.t_range.1 - grid.t_range.0) * ti as f64 / (grid.nt - 1) as f64
            };
            let (s1, s2) = field.fronts_at(t)?;
            let (lo, hi) = if liquid {
                (s1 + band, s2 - band)
            } else {
                (s2 + band, field.outer_edge(t)?)
            };
            if !(hi - lo > 2.0 * h) {
                return Err(ValidateError::GridTouchesFront { t });
            }
            for xi in 0..grid.nx {
                let x = lo + (hi - lo) * xi as f64 / (grid.nx - 1) as f64;
                let pts = [(x - h, t), (x, t), (x + h, t), (x, t - h), (x, t + h)];
                let w = if liquid { field.sample_u(&pts)? } else { field.sample_v(&pts)? };
                let wt = (w[4] - w[3]) / (2.0 * h);
                let f_plus = d.eval(0.5 * (w[1] + w[2]))? * (w[2] - w[1]) / h;
                let f_minus = d.eval(0.5 * (w[0] + w[1]))? * (w[1] - w[0]) / h;
                let r = wt - (f_plus - f_minus) / h;
                if !r.is_finite() {
                    return Err(ValidateError::NonFinite { context: "pde residual", t });
                }
                worst = worst.max(r.abs());
            }
        }
        if liquid {
            out.liquid = worst;
        } else {
            out.solid = worst;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Front tracking
// ---------------------------------------------------------------------------

/// Discretization of the front-tracking run.  Fronts are immobilized by
/// mapping the liquid strip to `[0, 1]` between `s1` and `s2` and the solid
/// region to `[0, 1]` between `s2` and the truncation point `x_far`; cell
/// counts are per phase.  With `x_far: None` the truncation point is placed
/// where the initial solid field is within `1e-9` of the far value, with
/// diffusive-growth headroom; pass it explicitly for translating fronts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackGrid {
    pub melt_cells: usize,
    pub solid_cells: usize,
    /// Number of equally spaced output rows, including both endpoints.
    pub samples: usize,
    pub x_far: Option<f64>,
    /// Diffusive step-size safety factor: `dt <= cfl * dx^2 / d`.
    pub cfl: f64,
}

impl Default for TrackGrid {
    fn default() -> Self {
        Self { melt_cells: 40, solid_cells: 400, samples: 13, x_far: None, cfl: 0.4 }
    }
}

/// One output row of the tracker.  The residuals re-evaluate the two front
/// conditions with third-order one-sided differences; the advance itself
/// uses second-order stencils, so these measure discretization error instead
/// of echoing the enforced closure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub s1: f64,
    pub s2: f64,
    /// Liquid value at the evaporation front.
    pub u_surface: f64,
    /// Surface flux-balance residual at `s1`.
    pub flux_residual: f64,
    /// Melt flux-balance residual at `s2`.
    pub stefan_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackResult {
    pub samples: Vec<TrackSample>,
    pub steps: usize,
    pub x_far: f64,
    /// `|v - v_inf|` just inside the truncation point at the final time.
    pub far_field_value: f64,
}

/// Direct simulation of the free-boundary system by the method of lines on
/// immobilized coordinates, explicit Euler in time with the diffusive step
/// restriction.  The evaporation-front value solves the flux balance with
/// the velocity law substituted, `s1` advances with that law, and `s2`
/// advances with the melt flux balance; melt values are pinned to `u_m` and
/// `v_m`, the truncation point to `v_inf`.
///
/// The fields and fronts at `t0` come from `init`; nothing about `init`
/// beyond those samples enters the run, so matching trajectories are
/// independent evidence that the sampled solution solves the system.
pub fn front_track(
    p: &CanonicalProblem,
    init: &dyn PdeField,
    t0: f64,
    t_end: f64,
    grid: &TrackGrid,
) -> Result<TrackResult, ValidateError> {
    if grid.melt_cells < 4 || grid.solid_cells < 4 {
        return Err(ValidateError::Grid("need at least 4 cells per phase".into()));
    }
    if grid.samples < 2 {
        return Err(ValidateError::Grid("need at least 2 output samples".into()));
    }
    if !(t_end > t0) {
        return Err(ValidateError::Grid(format!("need t_end > t0; got {t0} .. {t_end}")));
    }
    if !(grid.cfl > 0.0 && grid.cfl <= 0.9) {
        return Err(ValidateError::Grid(format!("cfl must lie in (0, 0.9]; got {}", grid.cfl)));
    }

    let (mut s1, mut s2) = init.fronts_at(t0)?;
    if !(s2 > s1) {
        return Err(ValidateError::FrontCrossing { t: t0, s1, s2 });
    }
    let x_far = match grid.x_far {
        Some(x) => {
            if !(x > s2) {
                return Err(ValidateError::Grid(format!("x_far = {x} must exceed s2 = {s2}")));
            }
            x
        }
        None => {
            let mut step = (s2 - s1).max(1e-3 * (1.0 + s2.abs()));
            let mut x = s2 + step;
            let cap = 1e4 * (1.0 + s2.abs());
            loop {
                let v = init.sample_v(&[(x, t0)])?[0];
                if (v - p.v_inf).abs() < FAR_INIT_TOL {
                    break;
                }
                x += step;
                step *= 1.25;
                if x > cap {
                    return Err(ValidateError::Grid(format!(
                        "initial solid field never reaches the far value within {cap}"
                    )));
                }
            }
            s2 + (x - s2) * (1.0 + (t_end / t0.max(1e-12)).sqrt())
        }
    };

    let n1 = grid.melt_cells;
    let n2 = grid.solid_cells;
    let dy = 1.0 / n1 as f64;
    let dz = 1.0 / n2 as f64;

    // Initial fields on the mapped grids; melt and truncation values pinned.
    let l1 = s2 - s1;
    let l2 = x_far - s2;
    let (l1_init, l2_init) = (l1, l2);
    let mut u: Vec<f64> = {
        let pts: Vec<(f64, f64)> = (0..=n1).map(|i| (s1 + l1 * i as f64 * dy, t0)).collect();
        init.sample_u(&pts)?
    };
    let mut v: Vec<f64> = {
        let pts: Vec<(f64, f64)> = (0..=n2).map(|j| (s2 + l2 * j as f64 * dz, t0)).collect();
        init.sample_v(&pts)?
    };
    u[n1] = p.u_m;
    v[0] = p.v_m;
    v[n2] = p.v_inf;

    // Values pinned at the melt front make these evaluations loop constants.
    let d1m = p.d1.eval(p.u_m)?;
    let d2m = p.d2.eval(p.v_m)?;
    let rho2m = p.rho2.eval(p.v_m)?;
    let rl2 = rho2m * p.l_m;
    if rl2 == 0.0 {
        return Err(ValidateError::Grid("rho2(v_m) * l_m must be nonzero".into()));
    }

    let sample_times: Vec<f64> = (0..grid.samples)
        .map(|k| t0 + (t_end - t0) * k as f64 / (grid.samples - 1) as f64)
        .collect();
    let t_eps = 1e-12 * (t_end - t0).max(1.0);
    let dt_floor = 1e-13 * (t_end - t0);

    let mut t = t0;
    let mut du = vec![0.0; n1 + 1];
    let mut dv = vec![0.0; n2 + 1];
    let mut out = Vec::with_capacity(grid.samples);
    let mut next_sample = 0usize;
    let mut steps = 0usize;

    loop {
        let l1 = s2 - s1;
        let l2 = x_far - s2;
        // Near-collapse the step size stalls quadratically, so an absolute
        // threshold would never be reached; a relative one ends the run
        // while the trajectory is still meaningful.
        if !(s2 > s1) || l1 <= 1e-3 * l1_init {
            return Err(ValidateError::FrontCrossing { t, s1, s2 });
        }
        if l2 <= 1e-3 * l2_init {
            return Err(ValidateError::Truncation { t, s2, x_far });
        }

        // Evaporation-front closure: flux balance with the velocity law
        // substituted, one-sided difference toward the interior.
        let (u1, u2) = (u[1], u[2]);
        let mut closure = |w: f64| -> Result<f64, NumericError> {
            let ux = (-3.0 * w + 4.0 * u1 - u2) / (2.0 * dy * l1);
            Ok(p.d1.eval(w)? * ux
                - (p.rho1.eval(w)? * p.l_v * p.hhat.eval(t, w)? - p.qhat.eval(t, w)?))
        };
        let g0 = closure(u[0])?;
        // Tolerance tracks the cancellation floor of the divided difference:
        // the residual cannot be driven below roundoff amplified by 1/(dy l1).
        let amplified = p.d1.eval(u[0])?.abs()
            * (3.0 * u[0].abs() + 4.0 * u1.abs() + u2.abs())
            / (2.0 * dy * l1);
        let gtol = 1e-12 * (1.0 + g0.abs() + amplified);
        if g0.abs() > gtol {
            let step = 1e-7 * (1.0 + u[0].abs());
            u[0] = numeric::secant(&mut closure, u[0], u[0] + step, gtol, 60)?;
        }
        let u0 = u[0];
        let s1dot = p.hhat.eval(t, u0)?;

        // Melt-front speed from the flux balance, one-sided on both sides.
        let ux_melt = (3.0 * u[n1] - 4.0 * u[n1 - 1] + u[n1 - 2]) / (2.0 * dy * l1);
        let vx_melt = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dz * l2);
        let s2dot = (d2m * vx_melt - d1m * ux_melt) / rl2;
        if !(s1dot.is_finite() && s2dot.is_finite()) {
            return Err(ValidateError::NonFinite { context: "front speed", t });
        }

        // Interior rates in conserved form plus the grid-motion advection.
        let mut maxd1 = 0.0_f64;
        let mut f_prev = p.d1.eval(0.5 * (u[0] + u[1]))? * (u[1] - u[0]) / dy;
        for i in 1..n1 {
            let dmid = p.d1.eval(0.5 * (u[i] + u[i + 1]))?;
            maxd1 = maxd1.max(dmid);
            let f_next = dmid * (u[i + 1] - u[i]) / dy;
            let w_grid = s1dot * (1.0 - i as f64 * dy) + s2dot * i as f64 * dy;
            du[i] = (f_next - f_prev) / (dy * l1 * l1)
                + w_grid * (u[i + 1] - u[i - 1]) / (2.0 * dy * l1);
            f_prev = f_next;
        }
        let mut maxd2 = 0.0_f64;
        let mut g_prev = p.d2.eval(0.5 * (v[0] + v[1]))? * (v[1] - v[0]) / dz;
        for j in 1..n2 {
            let dmid = p.d2.eval(0.5 * (v[j] + v[j + 1]))?;
            maxd2 = maxd2.max(dmid);
            let g_next = dmid * (v[j + 1] - v[j]) / dz;
            let w_grid = s2dot * (1.0 - j as f64 * dz);
            dv[j] = (g_next - g_prev) / (dz * l2 * l2)
                + w_grid * (v[j + 1] - v[j - 1]) / (2.0 * dz * l2);
            g_prev = g_next;
        }
        if !(maxd1.is_finite() && maxd2.is_finite()) {
            return Err(ValidateError::NonFinite { context: "field", t });
        }

        if next_sample < sample_times.len() && t >= sample_times[next_sample] - t_eps {
            // Monitored front-condition residuals, third-order one-sided.
            let uy4 = (-11.0 * u[0] + 18.0 * u[1] - 9.0 * u[2] + 2.0 * u[3]) / (6.0 * dy * l1);
            let flux_residual = p.d1.eval(u0)? * uy4
                - (p.rho1.eval(u0)? * p.l_v * s1dot - p.qhat.eval(t, u0)?);
            let ux4 = (11.0 * u[n1] - 18.0 * u[n1 - 1] + 9.0 * u[n1 - 2] - 2.0 * u[n1 - 3])
                / (6.0 * dy * l1);
            let vx4 = (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * dz * l2);
            let stefan_residual = d2m * vx4 - d1m * ux4 - rl2 * s2dot;
            out.push(TrackSample { t, s1, s2, u_surface: u0, flux_residual, stefan_residual });
            next_sample += 1;
        }
        if t >= t_end - t_eps {
            break;
        }

        let dx1 = dy * l1;
        let dx2 = dz * l2;
        let speed = s1dot.abs().max(s2dot.abs()).max(1e-300);
        let mut dt = grid.cfl * (dx1 * dx1 / maxd1.max(1e-300)).min(dx2 * dx2 / maxd2.max(1e-300));
        dt = dt.min(0.5 * dx1.min(dx2) / speed);
        if next_sample < sample_times.len() {
            dt = dt.min(sample_times[next_sample] - t);
        }
        dt = dt.min(t_end - t);
        if !(dt > dt_floor) {
            return Err(ValidateError::Stiffness { t, dt });
        }

        for i in 1..n1 {
            u[i] += dt * du[i];
        }
        for j in 1..n2 {
            v[j] += dt * dv[j];
        }
        s1 += dt * s1dot;
        s2 += dt * s2dot;
        t += dt;
        steps += 1;
        if steps > 200_000_000 {
            return Err(ValidateError::Stiffness { t, dt });
        }
    }

    Ok(TrackResult {
        samples: out,
        steps,
        x_far,
        far_field_value: (v[n2 - 1] - p.v_inf).abs(),
    })
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// One configured check with its verdict.  `band` is set for interval
/// criteria such as the convergence-order ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<(f64, f64)>,
}

/// Front trajectory comparison at one output time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontSample {
    pub t: f64,
    pub s1: f64,
    pub s2: f64,
    pub s1_predicted: f64,
    pub s2_predicted: f64,
    /// `|s2 - predicted| / |predicted|`.
    pub s2_rel_error: f64,
    pub flux_residual: f64,
    pub stefan_residual: f64,
}

/// Everything the validation pass measured, with one verdict per configured
/// check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pde_residual_liquid: f64,
    pub pde_residual_solid: f64,
    pub front: Vec<FrontSample>,
    pub max_front_rel_error: f64,
    pub far_field_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_sup_error: Option<f64>,
    pub checks: Vec<CheckVerdict>,
    pub passed: bool,
}

/// Validation drive configuration.  `convergence_band` enables the
/// grid-refinement study (one extra run at doubled resolution);
/// `oracle_tol` enables the closed-form comparison when both diffusivities
/// are constant.
#[derive(Clone, Debug, Serialize)]
pub struct ValidateConfig {
    pub grid: ResidualGrid,
    pub residual_tol: f64,
    pub track: TrackGrid,
    pub t0: f64,
    pub t_end: f64,
    pub front_rel_tol: f64,
    pub convergence_band: Option<(f64, f64)>,
    pub oracle_tol: Option<f64>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            grid: ResidualGrid::default(),
            residual_tol: 1e-6,
            track: TrackGrid::default(),
            t0: 1.0,
            t_end: 4.0,
            front_rel_tol: 0.01,
            convergence_band: None,
            oracle_tol: Some(1e-6),
        }
    }
}

fn front_error(r: &ReducedBVP, params: [f64; 2], run: &TrackResult) -> Result<f64, ValidateError> {
    let mut worst = 0.0_f64;
    for s in &run.samples {
        let (_, s2p) = fronts_of(r.kind, params, s.t)?;
        worst = worst.max((s.s2 - s2p).abs());
    }
    Ok(worst)
}

/// Run every configured check against a reduced solution: residual scan of
/// the reconstruction, front-tracking cross-validation, optionally a
/// grid-refinement ratio and the constant-coefficient closed forms.
pub fn validate_solution(
    p: &CanonicalProblem,
    r: &ReducedBVP,
    sol: &ReducedSolution,
    cfg: &ValidateConfig,
) -> Result<ValidationReport, ValidateError> {
    let field = ReconstructedField::new(r, sol)?;
    let residuals = pde_residual(p, &field, &cfg.grid)?;
    let track = front_track(p, &field, cfg.t0, cfg.t_end, &cfg.track)?;

    let mut front = Vec::with_capacity(track.samples.len());
    let mut max_rel = 0.0_f64;
    for s in &track.samples {
        let (s1p, s2p) = fronts_of(r.kind, sol.params, s.t)?;
        let denom = s2p.abs().max(1e-12);
        let rel = (s.s2 - s2p).abs() / denom;
        max_rel = max_rel.max(rel);
        front.push(FrontSample {
            t: s.t,
            s1: s.s1,
            s2: s.s2,
            s1_predicted: s1p,
            s2_predicted: s2p,
            s2_rel_error: rel,
            flux_residual: s.flux_residual,
            stefan_residual: s.stefan_residual,
        });
    }

    let mut checks = vec![
        CheckVerdict {
            name: "pde_residual_liquid".into(),
            passed: residuals.liquid <= cfg.residual_tol,
            measured: residuals.liquid,
            threshold: cfg.residual_tol,
            band: None,
        },
        CheckVerdict {
            name: "pde_residual_solid".into(),
            passed: residuals.solid <= cfg.residual_tol,
            measured: residuals.solid,
            threshold: cfg.residual_tol,
            band: None,
        },
        CheckVerdict {
            name: "front_tracking".into(),
            passed: max_rel <= cfg.front_rel_tol,
            measured: max_rel,
            threshold: cfg.front_rel_tol,
            band: None,
        },
        CheckVerdict {
            name: "far_field".into(),
            passed: track.far_field_value <= FAR_END_TOL,
            measured: track.far_field_value,
            threshold: FAR_END_TOL,
            band: None,
        },
    ];

    let convergence_ratio = match cfg.convergence_band {
        None => None,
        Some((lo, hi)) => {
            let fine_grid = TrackGrid {
                melt_cells: 2 * cfg.track.melt_cells,
                solid_cells: 2 * cfg.track.solid_cells,
                x_far: Some(track.x_far),
                ..cfg.track.clone()
            };
            let coarse = front_error(r, sol.params, &track)?;
            let fine_run = front_track(p, &field, cfg.t0, cfg.t_end, &fine_grid)?;
            let fine = front_error(r, sol.params, &fine_run)?;
            let ratio = coarse / fine.max(1e-300);
            checks.push(CheckVerdict {
                name: "convergence_order".into(),
                passed: ratio >= lo && ratio <= hi,
                measured: ratio,
                threshold: hi,
                band: Some((lo, hi)),
            });
            Some(ratio)
        }
    };

    let oracle_sup_error = match cfg.oracle_tol {
        Some(tol) if r.d1.as_constant().is_some() && r.d2.as_constant().is_some() => {
            let cf = analytic_constant_case(r, sol.params)?;
            let mut sup = 0.0_f64;
            for row in sol.u.rows(200) {
                sup = sup.max((row[1] - cf.u(row[0])).abs());
            }
            for row in sol.v.rows(200) {
                sup = sup.max((row[1] - cf.v(row[0])).abs());
            }
            checks.push(CheckVerdict {
                name: "constant_coefficient_oracle".into(),
                passed: sup <= tol,
                measured: sup,
                threshold: tol,
                band: None,
            });
            Some(sup)
        }
        _ => None,
    };

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        pde_residual_liquid: residuals.liquid,
        pde_residual_solid: residuals.solid,
        front,
        max_front_rel_error: max_rel,
        far_field_value: track.far_field_value,
        convergence_ratio,
        oracle_sup_error,
        checks,
        passed,
    })
}

// ---------------------------------------------------------------------------
// Reference fixture
// ---------------------------------------------------------------------------

/// Constant-coefficient similarity problem manufactured from an erf/erfc
/// pair, with the exact front coordinates and closed-form profiles attached.
pub struct SimilarityReference {
    pub canonical: CanonicalProblem,
    pub reduced: ReducedBVP,
    pub params: [f64; 2],
    pub profiles: ClosedFormProfiles,
}

/// Companion to [`crate::problem::reference_constant_problem`] for the
/// dilation-invariant branch: unit coefficients, boundary laws proportional
/// to `t^{-1/2}`, and data arranged so the similarity solution is exactly
/// `u = a + b erf(omega/2)`, `v` an erfc tail, with fronts at
/// `omega = (0.4, 1.1)`.
pub fn reference_similarity_problem() -> SimilarityReference {
    use crate::expr::{Expr, Sym};

    let (om1, om2) = (0.4_f64, 1.1_f64);
    let (u_m, v_m, v_inf) = (0.5, 1.0, 0.0);
    let b = -0.8;
    let a = u_m - b * libm::erf(0.5 * om2);
    let u0 = a + b * libm::erf(0.5 * om1);
    let c = (0.5 * om1) / u0;
    let g_u1 = b / std::f64::consts::PI.sqrt() * (-om1 * om1 / 4.0).exp();
    let q = 0.5 * om1 - g_u1;
    let g_u2 = b / std::f64::consts::PI.sqrt() * (-om2 * om2 / 4.0).exp();
    let g_v2 = (v_inf - v_m) * (-om2 * om2 / 4.0).exp()
        / (std::f64::consts::PI.sqrt() * libm::erfc(0.5 * om2));
    let l_m = (g_v2 - g_u2) / (0.5 * om2);

    let inv_sqrt_t = Expr::var(Sym::T).powr(-1, 2);
    let canonical = CanonicalProblem {
        d1: Coef::constant(1.0),
        d2: Coef::constant(1.0),
        rho1: Coef::constant(1.0),
        rho2: Coef::constant(1.0),
        qhat: Coef2::from_expr(Expr::num(q) * inv_sqrt_t.clone()),
        hhat: Coef2::from_expr(Expr::num(c) * Expr::var(Sym::U) * inv_sqrt_t),
        u_m,
        v_m,
        v_inf,
        l_v: 1.0,
        l_m,
        u_range: (0.3, 1.0),
        v_range: (0.0, 1.0),
    };
    let reduced = crate::reduction::reduce(&canonical, &crate::symmetry::AdmittedForm::X2)
        .expect("the similarity reference admits the dilation operator");
    let params = [om1, om2];
    let profiles =
        analytic_constant_case(&reduced, params).expect("constant-coefficient reference");
    SimilarityReference { canonical, reduced, params, profiles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::reference_constant_problem;
    use crate::reduction::reduce;
    use crate::solver::{solve, ShootingConfig};
    use crate::symmetry::AdmittedForm;

    fn reference_wave() -> (CanonicalProblem, ReducedBVP, ReducedSolution) {
        let p = reference_constant_problem();
        let r = reduce(&p, &AdmittedForm::X1Family).unwrap();
        let sol = solve(&r, &ShootingConfig::default()).unwrap();
        (p, r, sol.reduced)
    }

    #[test]
    fn closed_forms_match_the_reference_wave() {
        let (_, r, sol) = reference_wave();
        let cf = analytic_constant_case(&r, sol.params).unwrap();
        let delta = sol.params[1];
        assert!((cf.u(0.0) - 1.0).abs() < 1e-9);
        assert!((cf.u(delta) - 0.5).abs() < 1e-12);
        assert!((cf.v(delta) - 1.0).abs() < 1e-12);
        assert!((cf.v(delta + 1.0) - (-1.0_f64).exp()).abs() < 1e-9);

        // The exponential basis satisfies the reduced equation
        // (d1 u')' + mu u' = 0; verify by a tight finite difference.
        let h = 1e-5;
        let s = 0.5 * delta;
        let upp = (cf.u(s + h) - 2.0 * cf.u(s) + cf.u(s - h)) / (h * h);
        let up = (cf.u(s + h) - cf.u(s - h)) / (2.0 * h);
        assert!((upp + up).abs() < 1e-5, "ode residual {}", upp + up);
    }

    #[test]
    fn closed_forms_require_constant_diffusivities() {
        use crate::expr::{Expr, Sym};
        let (_, r, sol) = reference_wave();
        let mut bad = r.clone();
        bad.d1 = Coef::from_expr(Expr::one() + Expr::var(Sym::U), Sym::U);
        let err = analytic_constant_case(&bad, sol.params).unwrap_err();
        assert!(matches!(err, ValidateError::NonConstantDiffusivity("d1")));
    }

    #[test]
    fn similarity_reference_is_self_consistent() {
        let f = reference_similarity_problem();
        assert_eq!(f.reduced.kind, ReducedKind::SelfSimilar);
        // Closed-form coefficients reproduce the manufactured erf profile.
        let a = f.profiles.u_coef[0];
        let b = f.profiles.u_coef[1];
        assert!((a - (0.5 - b * libm::erf(0.55))).abs() < 1e-10);
        assert!((b - (-0.8)).abs() < 1e-10, "b = {b}");
        // Boundary residuals of the closed forms vanish.
        let g_u1 = b / std::f64::consts::PI.sqrt() * (-0.04_f64).exp();
        let r = &f.reduced;
        let q0 = r.q.eval(f.profiles.u(0.4)).unwrap();
        assert!((g_u1 - (r.rho1.eval(f.profiles.u(0.4)).unwrap() * r.l_v * 0.2 - q0)).abs() < 1e-12);
    }

    #[test]
    fn residual_scan_accepts_exact_fields_and_flags_corruption() {
        let f = reference_similarity_problem();
        let grid = ResidualGrid { nx: 20, nt: 10, ..ResidualGrid::default() };
        let clean = pde_residual(&f.canonical, &f.profiles, &grid).unwrap();
        assert!(clean.liquid < 1e-6, "liquid residual {}", clean.liquid);
        assert!(clean.solid < 1e-6, "solid residual {}", clean.solid);

        // A quadratic bump in the liquid field leaves a residual of twice
        // its amplitude times d1.
        struct Corrupted<'a>(&'a ClosedFormProfiles);
        impl PdeField for Corrupted<'_> {
            fn fronts_at(&self, t: f64) -> Result<(f64, f64), ValidateError> {
                self.0.fronts_at(t)
            }
            fn outer_edge(&self, t: f64) -> Result<f64, ValidateError> {
                self.0.outer_edge(t)
            }
            fn sample_u(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
                let mut vals = self.0.sample_u(pts)?;
                for (v, &(x, _)) in vals.iter_mut().zip(pts) {
                    *v += 0.01 * x * x;
                }
                Ok(vals)
            }
            fn sample_v(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
                self.0.sample_v(pts)
            }
        }
        let dirty = pde_residual(&f.canonical, &Corrupted(&f.profiles), &grid).unwrap();
        assert!(
            dirty.liquid > 0.015 && dirty.liquid < 0.025,
            "corruption residual {}",
            dirty.liquid
        );
        assert!(dirty.solid < 1e-6);
    }

    #[test]
    fn residual_scan_accepts_the_solved_wave_reconstruction() {
        let (p, r, sol) = reference_wave();
        let field = ReconstructedField::new(&r, &sol).unwrap();
        let grid = ResidualGrid { nx: 20, nt: 10, ..ResidualGrid::default() };
        let res = pde_residual(&p, &field, &grid).unwrap();
        assert!(res.liquid < 1e-6, "liquid residual {}", res.liquid);
        assert!(res.solid < 1e-6, "solid residual {}", res.solid);
    }

    #[test]
    fn residual_scan_rejects_a_vanishing_strip() {
        let f = reference_similarity_problem();
        let grid = ResidualGrid { h: 0.2, ..ResidualGrid::default() };
        let err = pde_residual(&f.canonical, &f.profiles, &grid).unwrap_err();
        assert!(matches!(err, ValidateError::GridTouchesFront { .. }));
    }

    struct Equilibrium {
        u: f64,
        v: f64,
        s1: f64,
        s2: f64,
    }
    impl PdeField for Equilibrium {
        fn fronts_at(&self, _t: f64) -> Result<(f64, f64), ValidateError> {
            Ok((self.s1, self.s2))
        }
        fn outer_edge(&self, _t: f64) -> Result<f64, ValidateError> {
            Ok(self.s2 + 50.0)
        }
        fn sample_u(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
            Ok(vec![self.u; pts.len()])
        }
        fn sample_v(&self, pts: &[(f64, f64)]) -> Result<Vec<f64>, ValidateError> {
            Ok(vec![self.v; pts.len()])
        }
    }

    #[test]
    fn equilibrium_fronts_stay_put() {
        use crate::expr::Expr;
        let p = CanonicalProblem {
            d1: Coef::constant(1.0),
            d2: Coef::constant(1.0),
            rho1: Coef::constant(1.0),
            rho2: Coef::constant(1.0),
            qhat: Coef2::from_expr(Expr::zero()),
            hhat: Coef2::from_expr(Expr::zero()),
            u_m: 0.5,
            v_m: 1.0,
            v_inf: 1.0,
            l_v: 1.0,
            l_m: 1.0,
            u_range: (0.0, 1.0),
            v_range: (0.5, 1.5),
        };
        let init = Equilibrium { u: 0.5, v: 1.0, s1: 0.0, s2: 1.0 };
        let grid = TrackGrid {
            melt_cells: 8,
            solid_cells: 16,
            samples: 3,
            x_far: Some(4.0),
            cfl: 0.4,
        };
        let run = front_track(&p, &init, 1.0, 2.0, &grid).unwrap();
        let last = run.samples.last().unwrap();
        assert!((last.s1 - 0.0).abs() < 1e-12, "s1 drifted to {}", last.s1);
        assert!((last.s2 - 1.0).abs() < 1e-12, "s2 drifted to {}", last.s2);
        assert!(last.flux_residual.abs() < 1e-12);
        assert!(last.stefan_residual.abs() < 1e-12);
        assert!(run.steps > 0);
    }

    #[test]
    fn tracker_follows_the_similarity_front() {
        let f = reference_similarity_problem();
        let grid = TrackGrid { melt_cells: 20, solid_cells: 200, samples: 5, ..TrackGrid::default() };
        let run = front_track(&f.canonical, &f.profiles, 1.0, 2.0, &grid).unwrap();
        for s in &run.samples {
            let pred = f.params[1] * s.t.sqrt();
            let rel = (s.s2 - pred).abs() / pred;
            assert!(rel < 0.01, "t = {}: s2 = {}, predicted {pred}", s.t, s.s2);
        }
        assert!(run.far_field_value < 1e-7, "far field {}", run.far_field_value);
    }

    #[test]
    fn tracker_reports_front_crossing() {
        let f = reference_similarity_problem();
        let mut p = f.canonical.clone();
        // A surface racing inward at constant speed 10 overtakes the melt
        // front well before t = 2.
        p.hhat = Coef2::from_fn("10", |_, _| Ok(10.0));
        let grid = TrackGrid { melt_cells: 8, solid_cells: 16, samples: 3, x_far: Some(30.0), cfl: 0.4 };
        let err = front_track(&p, &f.profiles, 1.0, 2.0, &grid).unwrap_err();
        assert!(matches!(err, ValidateError::FrontCrossing { .. }), "got {err}");
    }

    #[test]
    fn validation_report_serializes_round_trip() {
        let report = ValidationReport {
            pde_residual_liquid: 1e-8,
            pde_residual_solid: 2e-8,
            front: vec![FrontSample {
                t: 1.0,
                s1: 0.4,
                s2: 1.1,
                s1_predicted: 0.4,
                s2_predicted: 1.1,
                s2_rel_error: 0.0,
                flux_residual: 1e-4,
                stefan_residual: 2e-4,
            }],
            max_front_rel_error: 0.0,
            far_field_value: 1e-10,
            convergence_ratio: Some(4.0),
            oracle_sup_error: None,
            checks: vec![CheckVerdict {
                name: "front_tracking".into(),
                passed: true,
                measured: 0.0,
                threshold: 0.01,
                band: None,
            }],
            passed: true,
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.checks[0].name, "front_tracking");
        assert_eq!(back.convergence_ratio, Some(4.0));
        assert_eq!(back.front.len(), 1);
        assert!(back.passed);
    }

    #[test]
    fn full_validation_passes_on_the_reference_wave() {
        let (p, r, sol) = reference_wave();
        let cfg = ValidateConfig {
            grid: ResidualGrid { nx: 15, nt: 8, ..ResidualGrid::default() },
            track: TrackGrid {
                melt_cells: 20,
                solid_cells: 160,
                samples: 5,
                x_far: Some(30.0),
                cfl: 0.4,
            },
            t0: 1.0,
            t_end: 2.0,
            ..ValidateConfig::default()
        };
        let report = validate_solution(&p, &r, &sol, &cfg).unwrap();
        assert!(report.passed, "checks: {:?}", report.checks);
        assert!(report.oracle_sup_error.is_some());
        assert_eq!(report.checks.len(), 5);
        // The wave moves one unit per unit time.
        let last = report.front.last().unwrap();
        assert!((last.s2 - last.s2_predicted).abs() / last.s2_predicted < 0.01);
    }
}
