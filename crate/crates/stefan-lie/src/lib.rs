//! Symmetry-based solver toolkit for two-phase Stefan problems with
//! evaporation.
//!
//! The library works on one-dimensional melting/evaporation problems with two
//! moving boundaries: an evaporation front `S1(t)` and a melting front
//! `S2(t)`.  After a Goodman (Kirchhoff-type) substitution the governing
//! system becomes a pair of nonlinear heat equations
//!
//! ```text
//! u_t = (d1(u) u_x)_x          on  S1(t) < x < S2(t)
//! v_t = (d2(v) v_x)_x          on  S2(t) < x < infinity
//! ```
//!
//! coupled through flux and velocity conditions on the free boundaries and a
//! Dirichlet condition at infinity.  The crate provides, in order:
//!
//! * [`expr`]: a small symbolic expression type with parsing, evaluation,
//!   differentiation, simplification, and diffusivity classification;
//! * [`numeric`] and [`ode`]: quadrature, root finding, and an embedded
//!   Runge-Kutta 5(4) integrator with dense output and event location;
//! * [`problem`]: physical and canonical problem descriptions plus the
//!   Goodman substitution connecting them;
//! * [`symmetry`]: Lie operator machinery (first prolongation, induced front
//!   velocity coefficient, invariance checking of the full free-boundary
//!   problem) and the admission decision between plane-wave and scaling
//!   generators;
//! * [`reduction`]: reduction of an admissible problem to an ODE boundary
//!   value problem in a traveling-wave or self-similar variable, and
//!   reconstruction of PDE fields from reduced profiles;
//! * [`solver`]: shooting and first-integral solvers for the reduced
//!   problems;
//! * [`validate`]: independent checks of reconstructed solutions (analytic
//!   constant-coefficient profiles, finite-difference PDE residuals, and a
//!   front-tracking simulation on immobilized coordinates).
//!
//! The `stefan-lie` binary wires these stages into a CLI; see the crate
//! README for the file formats it reads and writes.

pub mod expr;
pub mod numeric;
pub mod ode;
pub mod problem;
pub mod reduction;
pub mod solver;
pub mod symmetry;
pub mod validate;

pub mod cli;
