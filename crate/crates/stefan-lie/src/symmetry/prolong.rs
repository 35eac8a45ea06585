//! First prolongation of a point generator to the jet coordinates
//! `(u_t, u_x, v_t, v_x, S_t, S_x, V)`.
//!
//! The free surface `S(t, x) = 0` is a dependent variable transformed only
//! through `(t, x)`, so its slot coefficients come from the prolongation
//! formula with a vanishing eta.  The front velocity `V = -S_t / S_x` gets
//! its coefficient from the quotient rule, reduced on `S_t = -V S_x` so the
//! surface slots drop out.

use crate::expr::{diff, expand, simplify, subst, Expr, Sym};

use super::LieOperator;

/// Generator together with its first-order slot coefficients.
#[derive(Clone, Debug)]
pub struct Prolongation {
    pub op: LieOperator,
    pub zeta_ut: Expr,
    pub zeta_ux: Expr,
    pub zeta_vt: Expr,
    pub zeta_vx: Expr,
    pub zeta_st: Expr,
    pub zeta_sx: Expr,
    pub zeta_vel: Expr,
}

/// Total derivative on expressions in `(t, x, u, v)`, with `u` and `v`
/// treated as fields over `(t, x)`.
fn total(f: &Expr, base: Sym, du: Sym, dv: Sym) -> Expr {
    diff(f, base) + Expr::var(du) * diff(f, Sym::U) + Expr::var(dv) * diff(f, Sym::V)
}

fn total_t(f: &Expr) -> Expr {
    total(f, Sym::T, Sym::Ut, Sym::Vt)
}

fn total_x(f: &Expr) -> Expr {
    total(f, Sym::X, Sym::Ux, Sym::Vx)
}

/// Coefficient picked up by `V = -S_t / S_x`:
/// `xi1_t + V (xi1_x - xi0_t) - V^2 xi0_x`, obtained here mechanically from
/// the surface slots and then reduced on the surface relation.
pub fn velocity_coefficient(op: &LieOperator) -> Expr {
    let st = Expr::var(Sym::St);
    let sx = Expr::var(Sym::Sx);
    let zeta_st = surface_slot_t(op);
    let zeta_sx = surface_slot_x(op);
    let raw = (-zeta_st * sx.clone() + st * zeta_sx) * Expr::var(Sym::Sx).powi(-2);
    let on_surface = subst(
        &raw,
        Sym::St,
        &(-Expr::var(Sym::Vel) * Expr::var(Sym::Sx)),
    );
    simplify(&expand(&on_surface))
}

fn surface_slot_t(op: &LieOperator) -> Expr {
    -Expr::var(Sym::St) * diff(&op.xi0, Sym::T) - Expr::var(Sym::Sx) * diff(&op.xi1, Sym::T)
}

fn surface_slot_x(op: &LieOperator) -> Expr {
    -Expr::var(Sym::St) * diff(&op.xi0, Sym::X) - Expr::var(Sym::Sx) * diff(&op.xi1, Sym::X)
}

/// First prolongation.  Supported generators carry `xi0`, `xi1` free of the
/// state variables; the state slots still use full total derivatives so the
/// eta terms prolong correctly.
pub fn prolong1(op: &LieOperator) -> Prolongation {
    debug_assert!(
        !op.xi0.free_syms().contains(Sym::U)
            && !op.xi0.free_syms().contains(Sym::V)
            && !op.xi1.free_syms().contains(Sym::U)
            && !op.xi1.free_syms().contains(Sym::V),
        "surface slots assume xi0, xi1 independent of the states"
    );
    let ut = Expr::var(Sym::Ut);
    let ux = Expr::var(Sym::Ux);
    let vt = Expr::var(Sym::Vt);
    let vx = Expr::var(Sym::Vx);

    let dt_xi0 = total_t(&op.xi0);
    let dx_xi0 = total_x(&op.xi0);
    let dt_xi1 = total_t(&op.xi1);
    let dx_xi1 = total_x(&op.xi1);

    let zeta_ut = total_t(&op.eta_u) - ut.clone() * dt_xi0.clone() - ux.clone() * dt_xi1.clone();
    let zeta_ux = total_x(&op.eta_u) - ut.clone() * dx_xi0.clone() - ux.clone() * dx_xi1.clone();
    let zeta_vt = total_t(&op.eta_v) - vt.clone() * dt_xi0 - vx.clone() * dt_xi1;
    let zeta_vx = total_x(&op.eta_v) - vt * dx_xi0 - vx * dx_xi1;

    Prolongation {
        op: op.clone(),
        zeta_ut: simplify(&expand(&zeta_ut)),
        zeta_ux: simplify(&expand(&zeta_ux)),
        zeta_vt: simplify(&expand(&zeta_vt)),
        zeta_vx: simplify(&expand(&zeta_vx)),
        zeta_st: simplify(&expand(&surface_slot_t(op))),
        zeta_sx: simplify(&expand(&surface_slot_x(op))),
        zeta_vel: velocity_coefficient(op),
    }
}
