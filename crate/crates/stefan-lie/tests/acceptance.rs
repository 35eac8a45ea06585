//! Acceptance suite: one test per shipped guarantee.  Each test prints a
//! single verdict line and enforces its own runtime budget, so a plain
//! `cargo test --test acceptance -- --nocapture` doubles as a report.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use stefan_lie::expr::{
    diff, eval, expand, parse, Bindings, DiffusivityClass, Expr, Sym,
};
use stefan_lie::numeric::adaptive_quad;
use stefan_lie::problem::{
    reference_constant_problem, CanonicalProblem, Coef, Coef2, EquivalenceTransform, PhiMap,
};
use stefan_lie::reduction::reduce;
use stefan_lie::solver::{solve, solve_self_similar, ShootingConfig};
use stefan_lie::symmetry::{
    admitted_symmetries, classify_mai, diffusivity_class, AdmissionResult, AdmittedForm, DefItem,
    InfiniteFamily, MaiCase, RejectionReason, SymmetryError,
};
use stefan_lie::validate::{
    analytic_constant_case, front_track, pde_residual, reference_similarity_problem,
    ReconstructedField, ResidualGrid, TrackGrid,
};

fn verdict(name: &str, detail: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("{name}: PASS ({detail}; {elapsed:.3} s, budget {budget_s} s)");
    assert!(elapsed < budget_s, "{name} took {elapsed:.3} s, budget {budget_s} s");
}

fn same(a: &Expr, b: &Expr) -> bool {
    expand(&(a.clone() - b.clone())).is_zero_const()
}

fn dclass(text: &str, var: Sym) -> DiffusivityClass {
    let c = Coef::from_expr(parse(text).unwrap(), var);
    diffusivity_class(&c, (0.25, 2.0)).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Classification table regression
// ---------------------------------------------------------------------------

#[test]
fn classification_recovers_the_six_invariance_patterns() {
    let t0 = Instant::now();
    let x = Expr::var(Sym::X);
    let u = Expr::var(Sym::U);
    let v = Expr::var(Sym::V);

    // Arbitrary pair: principal algebra only.
    let fam =
        classify_mai(&dclass("1 + u + exp(u)", Sym::U), &dclass("1 + v + exp(v)", Sym::V))
            .unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (1, 3));
    assert!(fam.infinite_family.is_none());
    let labels: Vec<&str> = fam.basis.iter().map(|op| op.label.as_str()).collect();
    assert_eq!(labels, ["d_t", "d_x", "2*t d_t + x d_x"]);

    // One constant side: a state scaling plus the linear superposition family.
    let fam = classify_mai(&dclass("1 + u + exp(u)", Sym::U), &dclass("1", Sym::V)).unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (2, 4));
    assert_eq!(fam.case, MaiCase::OneConstant { constant_on_v: true });
    assert_eq!(fam.infinite_family, Some(InfiniteFamily { on_v: true }));
    assert!(same(&fam.basis[3].eta_v, &v) && fam.basis[3].eta_u.is_zero_const());

    // Exponential pair: gauge scaling with constant state components.
    let fam = classify_mai(&dclass("exp(u)", Sym::U), &dclass("exp(v)", Sym::V)).unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (3, 4));
    let ext = &fam.basis[3];
    assert!(same(&ext.xi1, &x));
    assert!(same(&ext.eta_u, &Expr::num(2.0)) && same(&ext.eta_v, &Expr::num(2.0)));

    // Exponential against a power: mixed gauge 2 and (2/m) v.
    let fam = classify_mai(&dclass("exp(u)", Sym::U), &dclass("v^4", Sym::V)).unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (4, 4));
    assert_eq!(fam.case, MaiCase::ExponentialPower { exp_on_u: true });
    let ext = &fam.basis[3];
    assert!(same(&ext.eta_u, &Expr::num(2.0)));
    assert!(same(&ext.eta_v, &(Expr::num(0.5) * v.clone())));

    // Power pair: gauges (2/n) u and (2/m) v.
    let fam = classify_mai(&dclass("u^2", Sym::U), &dclass("v^3", Sym::V)).unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (5, 4));
    let ext = &fam.basis[3];
    assert!(same(&ext.eta_u, &u));
    assert!(same(&ext.eta_v, &(Expr::num(2.0 / 3.0) * v.clone())));

    // The -4/3 pair gains the projective generator on top of the scaling.
    let fam = classify_mai(&dclass("u^(-4/3)", Sym::U), &dclass("v^(-4/3)", Sym::V)).unwrap();
    assert_eq!((fam.case.table_row(), fam.dim()), (6, 5));
    let ext = &fam.basis[3];
    assert!(same(&ext.eta_u, &(Expr::num(-1.5) * u.clone())));
    assert!(same(&ext.eta_v, &(Expr::num(-1.5) * v.clone())));
    let proj = &fam.basis[4];
    assert!(same(&proj.xi1, &(x.clone() * x.clone())));
    assert!(same(&proj.eta_u, &(Expr::num(-3.0) * x.clone() * u.clone())));
    assert!(same(&proj.eta_v, &(Expr::num(-3.0) * x.clone() * v.clone())));

    // Constant pair is the linear problem; classification declines it.
    let one = DiffusivityClass::Constant { value: 1.0 };
    let two = DiffusivityClass::Constant { value: 2.0 };
    assert!(matches!(classify_mai(&one, &two), Err(SymmetryError::LinearSystem)));

    verdict(
        "acceptance 1 (classification table)",
        "six rows, dims 3 / 3+family / 4 / 4 / 4 / 5",
        t0,
        1.0,
    );
}

// ---------------------------------------------------------------------------
// 2. Admission dichotomy on randomized coefficient forms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Want {
    X1,
    X2,
    Both,
    None,
}

fn admitted_tags(res: &AdmissionResult) -> BTreeSet<&'static str> {
    res.admitted
        .iter()
        .map(|a| match &a.form {
            AdmittedForm::X1Family => "x1",
            AdmittedForm::X2 => "x2",
            AdmittedForm::Unexpected { label } => panic!("unexpected admitted operator {label}"),
        })
        .collect()
}

fn random_problem(d1: &str, d2: &str, q: &str, h: &str) -> CanonicalProblem {
    CanonicalProblem {
        d1: Coef::from_expr(parse(d1).unwrap(), Sym::U),
        d2: Coef::from_expr(parse(d2).unwrap(), Sym::V),
        rho1: Coef::constant(1.0),
        rho2: Coef::constant(1.0),
        qhat: Coef2::from_expr(parse(q).unwrap()),
        hhat: Coef2::from_expr(parse(h).unwrap()),
        u_m: 0.5,
        v_m: 1.0,
        v_inf: 0.25,
        l_v: 1.0,
        l_m: 1.0,
        u_range: (0.25, 2.0),
        v_range: (0.2, 1.2),
    }
}

fn random_diffusivities(class: usize, rng: &mut StdRng) -> (String, String) {
    let a = rng.gen_range(0.5..2.0);
    let c = rng.gen_range(0.5..2.0);
    match class {
        0 => (format!("{a} + u^2"), format!("{c} + v^2")),
        1 => (format!("{a} + u^2"), format!("{c}")),
        2 => {
            let b = rng.gen_range(0.4..1.5);
            let e = rng.gen_range(0.4..1.5);
            (format!("{a}*exp({b}*u)"), format!("{c}*exp({e}*v)"))
        }
        3 => {
            let b = rng.gen_range(0.4..1.5);
            let m = rng.gen_range(2..5);
            (format!("{a}*exp({b}*u)"), format!("{c}*v^{m}"))
        }
        4 => {
            let n = rng.gen_range(2..4);
            let m = rng.gen_range(2..4);
            (format!("{a}*u^{n}"), format!("{c}*v^{m}"))
        }
        _ => (format!("{a}*u^(-4/3)"), format!("{c}*v^(-4/3)")),
    }
}

fn random_affine(rng: &mut StdRng) -> String {
    format!("{} + {}*u", rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0))
}

#[test]
fn admission_decides_exactly_on_randomized_boundary_forms() {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_2026);

    let mut suite: Vec<(CanonicalProblem, Want, usize)> = Vec::new();
    for i in 0..24usize {
        let class = i % 6;
        let (d1, d2) = random_diffusivities(class, &mut rng);
        let (q, h, want) = match i {
            // Degenerate boundary laws conform to both ansatz families.
            0 => ("0".to_string(), "0".to_string(), Want::Both),
            _ if i < 10 => (random_affine(&mut rng), random_affine(&mut rng), Want::X1),
            _ if i < 20 => (
                format!("({}) * t^(-1/2)", random_affine(&mut rng)),
                format!("({}) * t^(-1/2)", random_affine(&mut rng)),
                Want::X2,
            ),
            20 => (
                format!("({}) * t", random_affine(&mut rng)),
                random_affine(&mut rng),
                Want::None,
            ),
            21 => (
                random_affine(&mut rng),
                format!("({}) * t^(-1/2)", random_affine(&mut rng)),
                Want::None,
            ),
            22 => (
                format!("({}) * t^(-1/2)", random_affine(&mut rng)),
                random_affine(&mut rng),
                Want::None,
            ),
            _ => (
                format!("({}) * exp(t)", random_affine(&mut rng)),
                format!("({}) * t^(-1/2)", random_affine(&mut rng)),
                Want::None,
            ),
        };
        suite.push((random_problem(&d1, &d2, &q, &h), want, class));
    }

    for (idx, (p, want, class)) in suite.iter().enumerate() {
        let res = admitted_symmetries(p).unwrap();
        let got = admitted_tags(&res);
        let expect: BTreeSet<&'static str> = match want {
            Want::X1 => ["x1"].into_iter().collect(),
            Want::X2 => ["x2"].into_iter().collect(),
            Want::Both => ["x1", "x2"].into_iter().collect(),
            Want::None => BTreeSet::new(),
        };
        assert_eq!(got, expect, "problem {idx} (diffusivity class {class})");

        // Every finite table extension must be turned away with the failing
        // definition item on record; the superposition family and the bare
        // space translation are rejected for their own reasons.
        for r in &res.rejected {
            let touches_state = r.operator.contains("d_u") || r.operator.contains("d_v");
            if !touches_state
                || matches!(r.reason, RejectionReason::InfiniteFamilyManifolds)
            {
                continue;
            }
            match &r.reason {
                RejectionReason::DefinitionItem { item, condition, .. } => {
                    if *class == 3 {
                        assert_eq!(
                            *item,
                            DefItem::D,
                            "problem {idx}: {} failed {condition}",
                            r.operator
                        );
                        assert!(
                            condition.contains("u = u_m"),
                            "problem {idx}: expected the melt-front pin, got {condition}"
                        );
                    }
                }
                other => panic!(
                    "problem {idx}: extension {} rejected without an item: {other:?}",
                    r.operator
                ),
            }
        }
    }

    verdict(
        "acceptance 2 (admission dichotomy)",
        "24 randomized problems, exact admitted sets, extensions carry items",
        t0,
        10.0,
    );
}

// ---------------------------------------------------------------------------
// 3. Traveling-wave oracle, both routes against hand quadrature
// ---------------------------------------------------------------------------

#[test]
fn traveling_wave_oracle_matches_hand_quadrature_on_both_routes() {
    let t0 = Instant::now();
    let p = reference_constant_problem();
    let res = admitted_symmetries(&p).unwrap();
    assert!(res.admitted.iter().any(|a| matches!(a.form, AdmittedForm::X1Family)));

    let r = reduce(&p, &AdmittedForm::X1Family).unwrap();
    let sol = solve(&r, &ShootingConfig::default()).unwrap();
    let [mu, delta] = sol.params();

    // Hand quadrature for the reference data: the surface closure gives
    // u(0) = 1 and g(0) = mu - q = -2.5, so the first integral reads
    // u' = -1.5 - u and the strip width is the integral below.
    let delta_quad =
        adaptive_quad(&mut |w: f64| 1.0 / (w + 1.5), 0.5, 1.0, 1e-13).unwrap();
    assert!((delta_quad - 1.25f64.ln()).abs() < 1e-12);

    assert!((mu - 1.0).abs() < 5e-9, "mu = {mu}");
    assert!((delta - delta_quad).abs() < 5e-9, "delta = {delta}");

    // The second route must agree with the first to the same budget.
    let gap = sol.diagnostics.cross_method_gap.expect("cross-check ran");
    assert!(gap < 5e-9, "cross-method gap = {gap}");
    assert!(sol.diagnostics.method.contains("first integral"), "{}", sol.diagnostics.method);
    assert!(sol.diagnostics.method.contains("shooting"), "{}", sol.diagnostics.method);

    verdict(
        "acceptance 3 (traveling-wave oracle)",
        &format!("mu = {mu:.12}, delta = {delta:.12}, route gap {gap:.2e}"),
        t0,
        1.0,
    );
}

// ---------------------------------------------------------------------------
// 4. Self-similar manufactured solution
// ---------------------------------------------------------------------------

#[test]
fn self_similar_solver_recovers_the_manufactured_fronts_and_profiles() {
    let t0 = Instant::now();
    let fixture = reference_similarity_problem();
    let sol = solve_self_similar(&fixture.reduced, &ShootingConfig::default()).unwrap();
    let [w1, w2] = sol.params();
    assert!((w1 - fixture.params[0]).abs() < 1e-8, "omega1 = {w1}");
    assert!((w2 - fixture.params[1]).abs() < 1e-8, "omega2 = {w2}");

    // Profiles against the closed constant-coefficient case, sup per strip.
    let closed = analytic_constant_case(&fixture.reduced, sol.params()).unwrap();
    let mut sup = 0.0_f64;
    for row in sol.reduced.u.rows(400) {
        sup = sup.max((row[1] - closed.u(row[0])).abs());
    }
    for row in sol.reduced.v.rows(400) {
        sup = sup.max((row[1] - closed.v(row[0])).abs());
    }
    assert!(sup < 1e-6, "profile sup error = {sup}");

    verdict(
        "acceptance 4 (self-similar oracle)",
        &format!("omega = ({w1:.12}, {w2:.12}), profile sup {sup:.2e}"),
        t0,
        5.0,
    );
}

// ---------------------------------------------------------------------------
// 5. Reconstructed solutions satisfy the governing equations
// ---------------------------------------------------------------------------

#[test]
fn reconstructions_pass_the_finite_difference_residual_scan() {
    let t0 = Instant::now();
    let grid = ResidualGrid::default();
    let cfg = ShootingConfig::default();

    let p = reference_constant_problem();
    let r = reduce(&p, &AdmittedForm::X1Family).unwrap();
    let sol = solve(&r, &cfg).unwrap();
    let field = ReconstructedField::new(&r, &sol.reduced).unwrap();
    let wave = pde_residual(&p, &field, &grid).unwrap();
    assert!(wave.liquid < 1e-6, "wave liquid residual = {}", wave.liquid);
    assert!(wave.solid < 1e-6, "wave solid residual = {}", wave.solid);

    let fixture = reference_similarity_problem();
    let sol = solve_self_similar(&fixture.reduced, &cfg).unwrap();
    let field = ReconstructedField::new(&fixture.reduced, &sol.reduced).unwrap();
    let warm = pde_residual(&fixture.canonical, &field, &grid).unwrap();
    assert!(warm.liquid < 1e-6, "similarity liquid residual = {}", warm.liquid);
    assert!(warm.solid < 1e-6, "similarity solid residual = {}", warm.solid);

    verdict(
        "acceptance 5 (pde residual scan)",
        &format!(
            "wave ({:.2e}, {:.2e}), similarity ({:.2e}, {:.2e}) on the 50x50 grid",
            wave.liquid, wave.solid, warm.liquid, warm.solid
        ),
        t0,
        5.0,
    );
}

// ---------------------------------------------------------------------------
// 6. Front tracking cross-validation and grid convergence
// ---------------------------------------------------------------------------

#[test]
fn front_tracking_follows_the_similarity_front_and_converges() {
    let t0 = Instant::now();
    let fixture = reference_similarity_problem();
    let sol = solve_self_similar(&fixture.reduced, &ShootingConfig::default()).unwrap();
    let om2 = sol.params()[1];
    let field = ReconstructedField::new(&fixture.reduced, &sol.reduced).unwrap();

    let coarse_grid = TrackGrid::default();
    assert_eq!(coarse_grid.solid_cells, 400);
    let coarse = front_track(&fixture.canonical, &field, 1.0, 4.0, &coarse_grid).unwrap();
    let mut coarse_err = 0.0_f64;
    for s in &coarse.samples {
        let rel = (s.s2 / s.t.sqrt() - om2).abs() / om2;
        assert!(rel < 0.01, "t = {}: s2/sqrt(t) off by {rel}", s.t);
        coarse_err = coarse_err.max(rel);
    }

    // Halve both strips' spacing; pin the truncation radius so the far
    // boundary does not move between resolutions.
    let fine_grid = TrackGrid {
        melt_cells: 2 * coarse_grid.melt_cells,
        solid_cells: 2 * coarse_grid.solid_cells,
        x_far: Some(coarse.x_far),
        ..coarse_grid
    };
    let fine = front_track(&fixture.canonical, &field, 1.0, 4.0, &fine_grid).unwrap();
    let mut fine_err = 0.0_f64;
    for s in &fine.samples {
        fine_err = fine_err.max((s.s2 / s.t.sqrt() - om2).abs() / om2);
    }

    let ratio = coarse_err / fine_err;
    assert!(
        (3.5..=4.5).contains(&ratio),
        "error ratio {ratio} outside [3.5, 4.5] (coarse {coarse_err:.3e}, fine {fine_err:.3e})"
    );

    verdict(
        "acceptance 6 (front tracking)",
        &format!("max rel error {coarse_err:.3e}, refinement ratio {ratio:.2}"),
        t0,
        60.0,
    );
}

// ---------------------------------------------------------------------------
// 7. Equivariance, derivative agreement, substitution round trip
// ---------------------------------------------------------------------------

#[test]
fn equivariance_derivatives_and_round_trips_hold() {
    let t0 = Instant::now();

    // (a) Equivalence transforms: admitted set is preserved and the wave
    // parameters map as mu -> (e_x/e_t) mu, delta -> e_x delta.
    let p = reference_constant_problem();
    let base = solve(&reduce(&p, &AdmittedForm::X1Family).unwrap(), &ShootingConfig::default())
        .unwrap();
    let [mu0, delta0] = base.params();

    let mut rng = StdRng::seed_from_u64(0xd1a7_0b5e);
    for k in 0..10 {
        let tr = EquivalenceTransform {
            e_t: rng.gen_range(-0.7..0.7f64).exp(),
            e_x: rng.gen_range(-0.7..0.7f64).exp(),
            e_u: rng.gen_range(-0.7..0.7f64).exp(),
            t_shift: rng.gen_range(-0.4..0.4),
            x_shift: rng.gen_range(-0.4..0.4),
            u_shift: rng.gen_range(-0.4..0.4),
            v_shift: rng.gen_range(-0.4..0.4),
        };
        let q = tr.apply(&p).unwrap();
        let res = admitted_symmetries(&q).unwrap();
        assert_eq!(
            admitted_tags(&res),
            ["x1"].into_iter().collect::<BTreeSet<_>>(),
            "transform {k} changed the admitted set"
        );
        let sol = solve(&reduce(&q, &AdmittedForm::X1Family).unwrap(), &ShootingConfig::default())
            .unwrap();
        let [mu, delta] = sol.params();
        assert!(
            (mu - tr.e_x / tr.e_t * mu0).abs() < 1e-7,
            "transform {k}: mu = {mu}, expected {}",
            tr.e_x / tr.e_t * mu0
        );
        assert!(
            (delta - tr.e_x * delta0).abs() < 1e-7,
            "transform {k}: delta = {delta}, expected {}",
            tr.e_x * delta0
        );
    }

    // (b) Symbolic derivatives against central differences.
    let corpus = [
        "exp(u)",
        "u^2",
        "u^(-4/3)",
        "1/(1 + u)",
        "u^2 * exp(2*u)",
        "(1 + u)^(3/2)",
        "exp(-(u^2))",
        "u^3 + 2*u + 1",
        "erf(u)",
        "ln(1 + u)",
        "sqrt(1 + u^2)",
    ];
    for text in corpus {
        let e = parse(text).unwrap();
        let de = diff(&e, Sym::U);
        for i in 0..7 {
            let x = 0.3 + 0.3 * i as f64;
            let h = 1e-5 * (1.0 + x.abs());
            let at = |z: f64| eval(&e, &Bindings::new().set(Sym::U, z)).unwrap();
            let fd = (at(x + h) - at(x - h)) / (2.0 * h);
            let sym = eval(&de, &Bindings::new().set(Sym::U, x)).unwrap();
            let rel = (sym - fd).abs() / sym.abs().max(1.0);
            assert!(rel < 1e-6, "{text} at u = {x}: symbolic {sym}, fd {fd}");
        }
    }

    // (c) Substitution round trip for a non-constant heat capacity pair.
    let c = parse("1 + T^2").unwrap();
    let rho = parse("2 + T").unwrap();
    let phi = PhiMap::new(&c, &rho, (0.0, 2.0));
    for i in 0..=40 {
        let temp = 0.05 + 1.9 * i as f64 / 40.0;
        let val = phi.forward(temp).unwrap();
        let back = phi.inverse(val).unwrap();
        assert!((back - temp).abs() < 1e-10, "T = {temp}: round trip {back}");
        let fwd = phi.forward(back).unwrap();
        assert!((fwd - val).abs() < 1e-10, "val = {val}: round trip {fwd}");
    }

    verdict(
        "acceptance 7 (equivariance and identities)",
        "10 transforms, 11 derivative pairs, 41 substitution round trips",
        t0,
        10.0,
    );
}
