//! Lie point symmetries of the canonical two-phase system: generator
//! representation, group classification of the decoupled heat equations by
//! diffusivity pattern, first prolongation with free-surface slots, and the
//! boundary-value admission check that decides which generators survive the
//! full problem.
//!
//! The admission logic mirrors the structure of the problem: the PDE pair
//! fixes a candidate algebra (per diffusivity pattern), and each candidate
//! is then tested against every boundary condition, including the two free
//! surfaces and the condition at infinity (checked in inverted coordinates
//! `y = 1/x`).

mod admission;
mod flow_check;
mod prolong;

pub use admission::{
    admitted_symmetries, check_invariance, AdmissionResult, AdmittedForm, ConditionVerdict,
    DefItem, InvarianceReport, RejectionReason, ResidualInfo,
};
pub use flow_check::{pde_flow_check, FlowCheckReport};
pub use prolong::{prolong1, velocity_coefficient, Prolongation};

use std::fmt;

use thiserror::Error;

use crate::expr::classify::{
    classify_diffusivity, classify_samples, ClassifyError, DiffusivityClass,
};
use crate::expr::{diff, eval, expand, simplify, Bindings, Expr, Sym};
use crate::numeric::NumericError;
use crate::problem::Coef;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("both diffusivities are constant: the system is linear and excluded")]
    LinearSystem,
    #[error("diffusivity classification failed: {0}")]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Point-symmetry generator
/// `X = xi0 d/dt + xi1 d/dx + eta_u d/du + eta_v d/dv`.
/// The free surfaces transform only through `(t, x)`, so they carry no eta
/// slot of their own.
#[derive(Clone, Debug)]
pub struct LieOperator {
    pub xi0: Expr,
    pub xi1: Expr,
    pub eta_u: Expr,
    pub eta_v: Expr,
    pub label: String,
}

fn coeff_part(out: &mut Vec<String>, e: &Expr, slot: &str) {
    let e = simplify(e);
    if e.is_zero_const() {
        return;
    }
    let rendered = format!("{e}");
    if rendered == "1" {
        out.push(format!("d_{slot}"));
    } else if rendered == "-1" {
        out.push(format!("-d_{slot}"));
    } else if matches!(e, Expr::Sum(_)) {
        out.push(format!("({rendered}) d_{slot}"));
    } else {
        out.push(format!("{rendered} d_{slot}"));
    }
}

impl LieOperator {
    pub fn new(xi0: Expr, xi1: Expr, eta_u: Expr, eta_v: Expr) -> Self {
        let mut parts = Vec::new();
        coeff_part(&mut parts, &xi0, "t");
        coeff_part(&mut parts, &xi1, "x");
        coeff_part(&mut parts, &eta_u, "u");
        coeff_part(&mut parts, &eta_v, "v");
        let label = if parts.is_empty() { "0".to_string() } else { parts.join(" + ") };
        LieOperator {
            xi0: simplify(&xi0),
            xi1: simplify(&xi1),
            eta_u: simplify(&eta_u),
            eta_v: simplify(&eta_v),
            label,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `d/dt`
    pub fn time_translation() -> Self {
        LieOperator::new(Expr::one(), Expr::zero(), Expr::zero(), Expr::zero())
    }

    /// `d/dx`
    pub fn space_translation() -> Self {
        LieOperator::new(Expr::zero(), Expr::one(), Expr::zero(), Expr::zero())
    }

    /// `2t d/dt + x d/dx`
    pub fn dilation() -> Self {
        LieOperator::new(
            Expr::int(2) * Expr::var(Sym::T),
            Expr::var(Sym::X),
            Expr::zero(),
            Expr::zero(),
        )
    }

    /// `d/dt + mu d/dx` with symbolic family parameter `mu`.
    pub fn wave_family() -> Self {
        LieOperator::new(Expr::one(), Expr::var(Sym::Mu), Expr::zero(), Expr::zero())
            .with_label("d_t + mu d_x")
    }

    /// Member of the case-2 infinite family: `beta(t, x) d/dv` (or `d/du`
    /// when the constant diffusivity sits on the liquid side).
    pub fn state_addition(beta: Expr, on_v: bool) -> Self {
        if on_v {
            LieOperator::new(Expr::zero(), Expr::zero(), Expr::zero(), beta)
        } else {
            LieOperator::new(Expr::zero(), Expr::zero(), beta, Expr::zero())
        }
    }
}

impl fmt::Display for LieOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Principal algebra admitted for every diffusivity pair.
pub fn principal_algebra() -> Vec<LieOperator> {
    vec![
        LieOperator::time_translation(),
        LieOperator::space_translation(),
        LieOperator::dilation(),
    ]
}

// ---------------------------------------------------------------------------
// Group classification of the decoupled system
// ---------------------------------------------------------------------------

/// Classification row for the pair of nonlinear heat equations.  Mirrored
/// variants record which side carries which pattern; the swap `u <-> v` is
/// applied to the generators only (it is a symmetry of the decoupled system
/// but not of the full boundary-value problem).
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub enum MaiCase {
    /// Row 1: both arbitrary, principal algebra only.
    ArbitraryBoth,
    /// Row 2: one side constant (hence linear), state scaling plus an
    /// infinite family of solution additions on that side.
    OneConstant { constant_on_v: bool },
    /// Row 3: both exponential.
    BothExponential,
    /// Row 4: exponential paired with a power law.
    ExponentialPower { exp_on_u: bool },
    /// Row 5: both power laws.
    BothPower,
    /// Row 6: both powers with exponent -4/3, extra projective generator.
    BothMinusFourThirds,
}

impl MaiCase {
    pub fn table_row(&self) -> u8 {
        match self {
            MaiCase::ArbitraryBoth => 1,
            MaiCase::OneConstant { .. } => 2,
            MaiCase::BothExponential => 3,
            MaiCase::ExponentialPower { .. } => 4,
            MaiCase::BothPower => 5,
            MaiCase::BothMinusFourThirds => 6,
        }
    }
}

/// Marker for the `beta(t, x) d/dv` family of the one-constant row; `beta`
/// ranges over solutions of the linear phase equation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfiniteFamily {
    pub on_v: bool,
}

impl InfiniteFamily {
    pub fn description(&self) -> String {
        let s = if self.on_v { "v" } else { "u" };
        format!("beta(t,x) d_{s} for every beta solving the linear phase-{s} equation")
    }
}

#[derive(Clone, Debug)]
pub struct OperatorFamily {
    pub case: MaiCase,
    pub basis: Vec<LieOperator>,
    pub infinite_family: Option<InfiniteFamily>,
}

impl OperatorFamily {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Gauge coefficient of `d/ds` in the extension generator
/// `x d/dx + g_u d/du + g_v d/dv`, per diffusivity class on that side.
fn gauge_term(class: &DiffusivityClass, state: Sym) -> Option<Expr> {
    match class {
        DiffusivityClass::Exponential { rate, .. } => Some(Expr::num(2.0 / rate)),
        DiffusivityClass::Power { shift, exponent, .. } => {
            let n = exponent.value();
            Some(Expr::num(2.0 / n) * (Expr::var(state) - Expr::num(*shift)))
        }
        DiffusivityClass::PowerMinusFourThirds { shift, .. } => {
            Some(Expr::num(-1.5) * (Expr::var(state) - Expr::num(*shift)))
        }
        _ => None,
    }
}

/// Classification of the decoupled pair by diffusivity classes.  The fully
/// linear pair (both constant) is outside the class and rejected.  A
/// constant on either side dominates any pattern on the other side; pairs
/// matching no row fall back to the principal algebra.
pub fn classify_mai(
    d1: &DiffusivityClass,
    d2: &DiffusivityClass,
) -> Result<OperatorFamily, SymmetryError> {
    use DiffusivityClass as C;

    let mut basis = principal_algebra();
    let zero = Expr::zero;
    let x = || Expr::var(Sym::X);

    if matches!(d1, C::Constant { .. }) && matches!(d2, C::Constant { .. }) {
        return Err(SymmetryError::LinearSystem);
    }
    if matches!(d2, C::Constant { .. }) {
        basis.push(LieOperator::new(zero(), zero(), zero(), Expr::var(Sym::V)));
        return Ok(OperatorFamily {
            case: MaiCase::OneConstant { constant_on_v: true },
            basis,
            infinite_family: Some(InfiniteFamily { on_v: true }),
        });
    }
    if matches!(d1, C::Constant { .. }) {
        basis.push(LieOperator::new(zero(), zero(), Expr::var(Sym::U), zero()));
        return Ok(OperatorFamily {
            case: MaiCase::OneConstant { constant_on_v: false },
            basis,
            infinite_family: Some(InfiniteFamily { on_v: false }),
        });
    }

    let case = match (d1, d2) {
        (C::Exponential { .. }, C::Exponential { .. }) => MaiCase::BothExponential,
        (C::Exponential { .. }, C::Power { .. } | C::PowerMinusFourThirds { .. }) => {
            MaiCase::ExponentialPower { exp_on_u: true }
        }
        (C::Power { .. } | C::PowerMinusFourThirds { .. }, C::Exponential { .. }) => {
            MaiCase::ExponentialPower { exp_on_u: false }
        }
        (C::PowerMinusFourThirds { .. }, C::PowerMinusFourThirds { .. }) => {
            MaiCase::BothMinusFourThirds
        }
        (
            C::Power { .. } | C::PowerMinusFourThirds { .. },
            C::Power { .. } | C::PowerMinusFourThirds { .. },
        ) => MaiCase::BothPower,
        _ => MaiCase::ArbitraryBoth,
    };

    match case {
        MaiCase::ArbitraryBoth => {}
        MaiCase::BothMinusFourThirds => {
            let gu = gauge_term(d1, Sym::U).expect("power class has a gauge term");
            let gv = gauge_term(d2, Sym::V).expect("power class has a gauge term");
            basis.push(LieOperator::new(zero(), x(), gu.clone(), gv.clone()));
            // Projective generator: x^2 d/dx + 2x g_u d/du + 2x g_v d/dv.
            basis.push(LieOperator::new(
                zero(),
                x().powi(2),
                Expr::int(2) * x() * gu,
                Expr::int(2) * x() * gv,
            ));
        }
        _ => {
            let gu = gauge_term(d1, Sym::U).expect("classified side has a gauge term");
            let gv = gauge_term(d2, Sym::V).expect("classified side has a gauge term");
            basis.push(LieOperator::new(zero(), x(), gu, gv));
        }
    }

    Ok(OperatorFamily { case, basis, infinite_family: None })
}

/// Diffusivity class of a coefficient, symbolic when possible, fitted from
/// samples otherwise.
pub fn diffusivity_class(
    c: &Coef,
    range: (f64, f64),
) -> Result<DiffusivityClass, SymmetryError> {
    match c {
        Coef::Expr { expr, var } => Ok(classify_diffusivity(expr, *var, range)?),
        Coef::Fn { f, .. } => {
            let g = |x: f64| f(x);
            Ok(classify_samples(&g, range)?)
        }
    }
}

// ---------------------------------------------------------------------------
// Normal forms
// ---------------------------------------------------------------------------

/// Admissible-candidate shape after absorbing the `t` and `x` shifts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormalForm {
    /// `d/dt + mu d/dx`
    X1 { mu: f64 },
    /// `2t d/dt + x d/dx`
    X2,
    /// `d/dx` alone; generates no moving-boundary ansatz.
    PureSpaceTranslation,
    Other,
}

/// Normal form of a concrete generator within the principal span
/// `xi0 = a + 2ct`, `xi1 = b + cx`, vanishing etas.  Shifts in `t` and `x`
/// absorb `a` and `b` whenever the dilation weight `c` is present.
pub fn normalize_operator(op: &LieOperator) -> NormalForm {
    if !expand(&op.eta_u).is_zero_const() || !expand(&op.eta_v).is_zero_const() {
        return NormalForm::Other;
    }
    let origin = Bindings::new().set(Sym::T, 0.0).set(Sym::X, 0.0);
    let const_value = |e: &Expr| -> Option<f64> {
        let e = expand(e);
        if !e.free_syms().is_empty() {
            return None;
        }
        eval(&e, &origin).ok()
    };

    let Some(two_c) = const_value(&diff(&op.xi0, Sym::T)) else {
        return NormalForm::Other;
    };
    let Some(c_from_x) = const_value(&diff(&op.xi1, Sym::X)) else {
        return NormalForm::Other;
    };
    let cross_tx = const_value(&diff(&op.xi0, Sym::X));
    let cross_xt = const_value(&diff(&op.xi1, Sym::T));
    if cross_tx != Some(0.0) || cross_xt != Some(0.0) {
        return NormalForm::Other;
    }
    let Ok(a) = eval(&op.xi0, &origin) else {
        return NormalForm::Other;
    };
    let Ok(b) = eval(&op.xi1, &origin) else {
        return NormalForm::Other;
    };
    let c = two_c / 2.0;
    if (c - c_from_x).abs() > 1e-14 * (1.0 + c.abs()) {
        return NormalForm::Other;
    }

    if c != 0.0 {
        NormalForm::X2
    } else if a != 0.0 {
        NormalForm::X1 { mu: b / a }
    } else if b != 0.0 {
        NormalForm::PureSpaceTranslation
    } else {
        NormalForm::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::parse;
    use crate::expr::Exponent;

    fn class_of(text: &str, var: Sym, range: (f64, f64)) -> DiffusivityClass {
        classify_diffusivity(&parse(text).unwrap(), var, range).unwrap()
    }

    #[test]
    fn principal_algebra_has_three_generators() {
        let a = principal_algebra();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].label, "d_t");
        assert_eq!(a[1].label, "d_x");
        assert_eq!(a[2].label, "2*t d_t + x d_x");
    }

    #[test]
    fn arbitrary_pair_gets_principal_algebra_only() {
        let d1 = class_of("1 + u + exp(u)", Sym::U, (0.5, 2.0));
        let d2 = class_of("1 + v + exp(v)", Sym::V, (0.5, 2.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::ArbitraryBoth);
        assert_eq!(fam.dim(), 3);
        assert!(fam.infinite_family.is_none());
    }

    #[test]
    fn constant_solid_side_adds_scaling_and_family() {
        let d1 = class_of("1 + u", Sym::U, (0.5, 2.0));
        let d2 = class_of("1", Sym::V, (0.0, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::OneConstant { constant_on_v: true });
        assert_eq!(fam.dim(), 4);
        assert_eq!(fam.basis[3].label, "v d_v");
        assert_eq!(fam.infinite_family, Some(InfiniteFamily { on_v: true }));
    }

    #[test]
    fn exponential_pair_gains_gauge_scaling() {
        let d1 = class_of("exp(u)", Sym::U, (0.5, 2.0));
        let d2 = class_of("exp(v)", Sym::V, (0.0, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::BothExponential);
        assert_eq!(fam.dim(), 4);
        let ext = &fam.basis[3];
        assert_eq!(ext.label, "x d_x + 2 d_u + 2 d_v");
    }

    #[test]
    fn exponential_power_pair_scales_v_by_two_over_m() {
        let d1 = class_of("exp(u)", Sym::U, (0.5, 2.0));
        let d2 = class_of("v^4", Sym::V, (0.5, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::ExponentialPower { exp_on_u: true });
        assert_eq!(fam.dim(), 4);
        assert_eq!(fam.basis[3].label, "x d_x + 2 d_u + 0.5*v d_v");
    }

    #[test]
    fn power_pair_and_minus_four_thirds_rows() {
        let d1 = class_of("u^2", Sym::U, (0.5, 2.0));
        let d2 = class_of("v^3", Sym::V, (0.5, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::BothPower);
        assert_eq!(fam.dim(), 4);

        let d1 = class_of("u^(-4/3)", Sym::U, (0.5, 2.0));
        let d2 = class_of("v^(-4/3)", Sym::V, (0.5, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::BothMinusFourThirds);
        assert_eq!(fam.dim(), 5);
        // Scaling extension: x d_x - 3/2 u d_u - 3/2 v d_v.
        assert_eq!(fam.basis[3].label, "x d_x + -1.5*u d_u + -1.5*v d_v");
        // Projective extension has xi1 = x^2.
        let proj = &fam.basis[4];
        assert_eq!(simplify(&proj.xi1), parse("x^2").map(|e| simplify(&e)).unwrap());
    }

    #[test]
    fn mixed_minus_four_thirds_with_other_power_is_row_five() {
        let d1 = class_of("u^(-4/3)", Sym::U, (0.5, 2.0));
        let d2 = class_of("v^2", Sym::V, (0.5, 1.0));
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::BothPower);
        assert_eq!(fam.dim(), 4);
    }

    #[test]
    fn linear_pair_is_rejected() {
        let d1 = DiffusivityClass::Constant { value: 1.0 };
        let d2 = DiffusivityClass::Constant { value: 2.0 };
        assert!(matches!(classify_mai(&d1, &d2), Err(SymmetryError::LinearSystem)));
    }

    #[test]
    fn constant_dominates_special_patterns() {
        let d1 = class_of("exp(u)", Sym::U, (0.5, 2.0));
        let d2 = DiffusivityClass::Constant { value: 3.0 };
        let fam = classify_mai(&d1, &d2).unwrap();
        assert_eq!(fam.case, MaiCase::OneConstant { constant_on_v: true });
    }

    #[test]
    fn shifted_scaled_power_keeps_its_gauge_shift() {
        // d1 = 5 (2u - 3)^2 = 20 (u - 1.5)^2: gauge term (2/2)(u - 1.5).
        let d1 = class_of("5*(2*u - 3)^2", Sym::U, (2.0, 4.0));
        let DiffusivityClass::Power { shift, exponent, .. } = &d1 else {
            panic!("expected power class, got {d1:?}");
        };
        assert!((shift - 1.5).abs() < 1e-9);
        assert_eq!(*exponent, Exponent::int(2));
        let g = gauge_term(&d1, Sym::U).unwrap();
        let b = Bindings::new().set(Sym::U, 2.5);
        assert!((eval(&g, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_recognizes_wave_dilation_and_translation() {
        let x1 = LieOperator::new(
            Expr::one(),
            Expr::num(5.0),
            Expr::zero(),
            Expr::zero(),
        );
        assert_eq!(normalize_operator(&x1), NormalForm::X1 { mu: 5.0 });

        let shifted_dilation = LieOperator::new(
            parse("1 + 2*t").unwrap(),
            parse("3 + x").unwrap(),
            Expr::zero(),
            Expr::zero(),
        );
        assert_eq!(normalize_operator(&shifted_dilation), NormalForm::X2);

        assert_eq!(
            normalize_operator(&LieOperator::space_translation()),
            NormalForm::PureSpaceTranslation
        );

        let projective = LieOperator::new(
            Expr::zero(),
            parse("x^2").unwrap(),
            Expr::zero(),
            Expr::zero(),
        );
        assert_eq!(normalize_operator(&projective), NormalForm::Other);

        let with_eta = LieOperator::new(
            Expr::one(),
            Expr::zero(),
            Expr::var(Sym::U),
            Expr::zero(),
        );
        assert_eq!(normalize_operator(&with_eta), NormalForm::Other);
    }
}
