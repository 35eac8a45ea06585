//! Randomized properties of the symbolic layer, the prolongation, and the
//! admission partition.  These guard structural invariants that single-point
//! unit tests cannot pin down.

use std::collections::BTreeSet;

use proptest::prelude::*;

use stefan_lie::expr::{diff, eval, parse, simplify, Bindings, Expr, Sym};
use stefan_lie::numeric::adaptive_quad;
use stefan_lie::problem::{CanonicalProblem, Coef, Coef2};
use stefan_lie::symmetry::{
    admitted_symmetries, prolong1, velocity_coefficient, LieOperator, RejectionReason,
};

// ---------------------------------------------------------------------------
// Expression trees
// ---------------------------------------------------------------------------

/// Random arithmetic over `u` with exponent arguments damped so values stay
/// representable at the sampled points.
fn tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.3f64..3.0).prop_map(Expr::num),
        Just(Expr::var(Sym::U)),
    ];
    leaf.prop_recursive(3, 20, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            inner.clone().prop_map(|a| (Expr::num(0.2) * a).exp()),
            inner.clone().prop_map(|a| Expr::one() + a.powi(2)),
        ]
    })
}

proptest! {
    #[test]
    fn simplify_preserves_values_and_is_idempotent(e in tree(), x in 0.31f64..2.9) {
        let b = Bindings::new().set(Sym::U, x);
        let s = simplify(&e);
        if let Ok(raw) = eval(&e, &b) {
            prop_assume!(raw.is_finite() && raw.abs() < 1e9);
            let cooked = eval(&s, &b).unwrap();
            prop_assert!(
                (raw - cooked).abs() <= 1e-9 * raw.abs().max(1.0),
                "{e} simplifies to {s}: {raw} vs {cooked}"
            );
        }
        let twice = simplify(&s);
        prop_assert_eq!(&twice, &s, "simplify not idempotent on {}", e);
    }

    #[test]
    fn derivative_rules_hold_pointwise(a in tree(), b in tree(), x in 0.31f64..2.9) {
        let at = |e: &Expr| eval(e, &Bindings::new().set(Sym::U, x));
        let (Ok(va), Ok(vb)) = (at(&a), at(&b)) else { return Ok(()) };
        prop_assume!(va.abs() < 1e6 && vb.abs() < 1e6);
        let (Ok(da), Ok(db)) = (at(&diff(&a, Sym::U)), at(&diff(&b, Sym::U))) else {
            return Ok(());
        };
        prop_assume!(da.abs() < 1e6 && db.abs() < 1e6);

        let sum = at(&diff(&(a.clone() + b.clone()), Sym::U)).unwrap();
        prop_assert!((sum - (da + db)).abs() <= 1e-9 * (da.abs() + db.abs() + 1.0));

        let product = at(&diff(&(a.clone() * b.clone()), Sym::U)).unwrap();
        let scale = da.abs() * vb.abs() + va.abs() * db.abs() + 1.0;
        prop_assert!((product - (da * vb + va * db)).abs() <= 1e-9 * scale);

        // Chain rule through a damped exponential, away from overflow.
        if va.abs() < 50.0 {
            let chained = at(&diff(&(Expr::num(0.2) * a.clone()).exp(), Sym::U)).unwrap();
            let expect = 0.2 * da * (0.2 * va).exp();
            prop_assert!((chained - expect).abs() <= 1e-9 * (expect.abs() + 1.0));
        }
    }

    #[test]
    fn quadrature_integrates_cubics_exactly(
        c0 in -2.0f64..2.0,
        c1 in -2.0f64..2.0,
        c2 in -2.0f64..2.0,
        c3 in -2.0f64..2.0,
        a in -1.5f64..1.5,
        span in 0.2f64..3.0,
    ) {
        let b = a + span;
        let anti = |x: f64| ((c3 / 4.0 * x + c2 / 3.0) * x + c1 / 2.0) * x * x + c0 * x;
        let exact = anti(b) - anti(a);
        let got = adaptive_quad(
            &mut |x| ((c3 * x + c2) * x + c1) * x + c0,
            a,
            b,
            1e-13,
        ).unwrap();
        prop_assert!((got - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
    }
}

// ---------------------------------------------------------------------------
// Prolongation identities
// ---------------------------------------------------------------------------

/// Operators with state-free `xi0`, `xi1` (the supported shape) and affine
/// state components, rich enough to exercise every term of the velocity
/// coefficient.
fn operator() -> impl Strategy<Value = LieOperator> {
    (
        [-2.0f64..2.0, -2.0..2.0, -2.0..2.0, -2.0..2.0],
        [-2.0f64..2.0, -2.0..2.0, -2.0..2.0, -2.0..2.0],
        [-2.0f64..2.0, -2.0..2.0],
    )
        .prop_map(|([a0, a1, a2, a3], [b0, b1, b2, b3], [c0, c1])| {
            let t = Expr::var(Sym::T);
            let x = Expr::var(Sym::X);
            let xi0 = Expr::num(a0)
                + Expr::num(a1) * t.clone()
                + Expr::num(a2) * t.clone() * t.clone()
                + Expr::num(a3) * x.clone();
            let xi1 = Expr::num(b0)
                + Expr::num(b1) * x.clone()
                + Expr::num(b2) * t.clone() * x.clone()
                + Expr::num(b3) * x.clone() * x.clone();
            let eta_u = Expr::num(c0) * Expr::var(Sym::U);
            let eta_v = Expr::num(c1) * Expr::var(Sym::V);
            LieOperator::new(xi0, xi1, eta_u, eta_v)
        })
}

proptest! {
    #[test]
    fn velocity_coefficient_matches_its_closed_form(
        op in operator(),
        t in 0.2f64..3.0,
        x in -2.0f64..2.0,
        vel in -2.0f64..2.0,
        sx in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0],
    ) {
        let closed = diff(&op.xi1, Sym::T)
            + Expr::var(Sym::Vel) * (diff(&op.xi1, Sym::X) - diff(&op.xi0, Sym::T))
            - Expr::var(Sym::Vel).powi(2) * diff(&op.xi0, Sym::X);
        // The quotient-rule route may keep an unreduced S_x^2 / S_x^2 pair,
        // so the slope is bound on the surface manifold; the value must not
        // depend on it.
        let zvel = velocity_coefficient(&op);
        let b = |s: f64| {
            Bindings::new()
                .set(Sym::T, t)
                .set(Sym::X, x)
                .set(Sym::Vel, vel)
                .set(Sym::Sx, s)
                .set(Sym::St, -vel * s)
        };
        let got = eval(&zvel, &b(sx)).unwrap();
        let want = eval(&closed, &b(sx)).unwrap();
        prop_assert!(
            (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
            "{}: {got} vs {want}",
            op.label
        );
        let other = eval(&zvel, &b(0.5 * sx + 1.0e-2)).unwrap();
        prop_assert!((got - other).abs() <= 1e-12 * (1.0 + got.abs()));
    }

    #[test]
    fn velocity_slot_is_consistent_with_the_surface_slots(
        op in operator(),
        t in 0.2f64..3.0,
        x in -2.0f64..2.0,
        vel in -2.0f64..2.0,
        sx in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0],
    ) {
        // On S_t = -V S_x the quotient rule collapses to
        // S_x zeta_vel + zeta_st + V zeta_sx = 0.
        let p = prolong1(&op);
        let b = Bindings::new()
            .set(Sym::T, t)
            .set(Sym::X, x)
            .set(Sym::U, 0.7)
            .set(Sym::V, 1.3)
            .set(Sym::Vel, vel)
            .set(Sym::Sx, sx)
            .set(Sym::St, -vel * sx);
        let zvel = eval(&p.zeta_vel, &b).unwrap();
        let zst = eval(&p.zeta_st, &b).unwrap();
        let zsx = eval(&p.zeta_sx, &b).unwrap();
        let residual = sx * zvel + zst + vel * zsx;
        let scale = 1.0 + zst.abs() + (vel * zsx).abs() + (sx * zvel).abs();
        prop_assert!(residual.abs() <= 1e-12 * scale, "{}: {residual}", op.label);
    }
}

// ---------------------------------------------------------------------------
// Admission partition
// ---------------------------------------------------------------------------

fn admission_problem(class: usize, seeds: [f64; 4], q_form: usize) -> CanonicalProblem {
    let [a, c, b, e] = seeds;
    let (d1, d2) = match class {
        0 => (format!("{a} + u^2"), format!("{c} + v^2")),
        1 => (format!("{a} + u^2"), format!("{c}")),
        2 => (format!("{a}*exp({b}*u)"), format!("{c}*exp({e}*v)")),
        3 => (format!("{a}*exp({b}*u)"), format!("{c}*v^3")),
        4 => (format!("{a}*u^2"), format!("{c}*v^2")),
        _ => (format!("{a}*u^(-4/3)"), format!("{c}*v^(-4/3)")),
    };
    let affine_q = format!("{a} + {b}*u");
    let affine_h = format!("{c} + {e}*u");
    let (q, h) = match q_form {
        0 => (affine_q, affine_h),
        1 => (
            format!("({affine_q}) * t^(-1/2)"),
            format!("({affine_h}) * t^(-1/2)"),
        ),
        _ => (format!("({affine_q}) * t^(-1/2)"), affine_h),
    };
    CanonicalProblem {
        d1: Coef::from_expr(parse(&d1).unwrap(), Sym::U),
        d2: Coef::from_expr(parse(&d2).unwrap(), Sym::V),
        rho1: Coef::constant(1.0),
        rho2: Coef::constant(1.0),
        qhat: Coef2::from_expr(parse(&q).unwrap()),
        hhat: Coef2::from_expr(parse(&h).unwrap()),
        u_m: 0.5,
        v_m: 1.0,
        v_inf: 0.25,
        l_v: 1.0,
        l_m: 1.0,
        u_range: (0.25, 2.0),
        v_range: (0.2, 1.2),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]
    #[test]
    fn admission_partitions_every_candidate_exactly_once(
        class in 0usize..6,
        a in 0.5f64..2.0,
        c in 0.5f64..2.0,
        b in 0.4f64..1.5,
        e in 0.4f64..1.5,
        q_form in 0usize..3,
    ) {
        let p = admission_problem(class, [a, c, b, e], q_form);
        let res = admitted_symmetries(&p).unwrap();

        // Candidate count: table basis plus the superposition family when the
        // classification offers one.
        let dims = [3usize, 4, 4, 4, 4, 5];
        let family = usize::from(class == 1);
        prop_assert_eq!(res.admitted.len() + res.rejected.len(), dims[class] + family);

        // No operator lands on both sides.
        let admitted: BTreeSet<&str> =
            res.admitted.iter().map(|op| op.report.operator.as_str()).collect();
        let rejected: BTreeSet<&str> =
            res.rejected.iter().map(|op| op.operator.as_str()).collect();
        prop_assert!(admitted.is_disjoint(&rejected), "{admitted:?} vs {rejected:?}");

        // Reports agree with the sorting: admitted reports pass every item,
        // rejected ones record exactly their first failing verdict.
        for op in &res.admitted {
            prop_assert!(op.report.admitted);
            prop_assert!(op.report.verdicts.iter().all(|v| v.passed));
        }
        for op in &res.rejected {
            let RejectionReason::DefinitionItem { item, condition, .. } = &op.reason else {
                continue;
            };
            let report = op.report.as_ref().expect("item rejections keep their report");
            let first = report.first_failure().expect("a failing verdict exists");
            prop_assert_eq!(first.item, *item);
            prop_assert_eq!(&first.condition, condition);
        }
    }
}
