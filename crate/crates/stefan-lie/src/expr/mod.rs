//! Symbolic expressions over a fixed symbol set.
//!
//! The tree is deliberately small: constants, variables, sums, products,
//! powers with *constant real* exponents, `exp`, `ln`, `erf`, and negation.
//! Everything the rest of the crate needs (differentiation, simplification,
//! substitution) is closed over this node set, so reduced equations and
//! invariance residuals never leave the representable class.
//!
//! Exponents keep exact rational form whenever the input provides one; the
//! `u^(-4/3)` diffusivity family is recognised through that rational path
//! (with a `1e-12` float tolerance as fallback).
//!
//! [`simplify`] is a normal form: it flattens sums/products, folds constants,
//! merges equal-base powers by exponent addition, combines like terms, and
//! orders factors canonically.  It is idempotent, and together with
//! [`expand`] it powers the symbolic zero test used by the invariance
//! checker.

pub mod classify;
pub mod parse;

pub use classify::{classify_diffusivity, classify_samples, ClassifyError, DiffusivityClass};
pub use parse::{parse, ParseError};

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Symbols the expression tree may reference.
///
/// `t, x, u, v, T` are the primary problem variables; `xi` and `omega` are
/// the traveling-wave and self-similar invariant variables; `y` and `tau`
/// serve the change of variables used at the `x = infinity` manifold;
/// `mu` is the free wave-speed parameter of the plane-wave generator.
/// The remaining symbols are first-order jet coordinates (`u_t`, ..., `S_x`)
/// and the front velocity `V`, introduced by prolongation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    T,
    X,
    U,
    V,
    Temp,
    Xi,
    Omega,
    Y,
    Tau,
    Mu,
    Ut,
    Ux,
    Vt,
    Vx,
    St,
    Sx,
    Vel,
}

impl Sym {
    pub const COUNT: usize = 17;

    pub const ALL: [Sym; Self::COUNT] = [
        Sym::T,
        Sym::X,
        Sym::U,
        Sym::V,
        Sym::Temp,
        Sym::Xi,
        Sym::Omega,
        Sym::Y,
        Sym::Tau,
        Sym::Mu,
        Sym::Ut,
        Sym::Ux,
        Sym::Vt,
        Sym::Vx,
        Sym::St,
        Sym::Sx,
        Sym::Vel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sym::T => "t",
            Sym::X => "x",
            Sym::U => "u",
            Sym::V => "v",
            Sym::Temp => "T",
            Sym::Xi => "xi",
            Sym::Omega => "omega",
            Sym::Y => "y",
            Sym::Tau => "tau",
            Sym::Mu => "mu",
            Sym::Ut => "u_t",
            Sym::Ux => "u_x",
            Sym::Vt => "v_t",
            Sym::Vx => "v_x",
            Sym::St => "S_t",
            Sym::Sx => "S_x",
            Sym::Vel => "V",
        }
    }

    pub fn from_name(name: &str) -> Option<Sym> {
        // Unicode aliases accepted on input; canonical names are ASCII.
        match name {
            "ξ" => return Some(Sym::Xi),
            "ω" => return Some(Sym::Omega),
            "τ" => return Some(Sym::Tau),
            "μ" => return Some(Sym::Mu),
            _ => {}
        }
        Sym::ALL.into_iter().find(|s| s.name() == name)
    }

    fn index(self) -> usize {
        Sym::ALL.iter().position(|&s| s == self).expect("member of ALL")
    }
}

/// A set of symbols, packed as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SymSet(u32);

impl SymSet {
    pub fn empty() -> Self {
        SymSet(0)
    }

    pub fn single(s: Sym) -> Self {
        SymSet(1 << s.index())
    }

    pub fn insert(&mut self, s: Sym) {
        self.0 |= 1 << s.index();
    }

    pub fn contains(self, s: Sym) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn union(self, other: SymSet) -> SymSet {
        SymSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: SymSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Sym> {
        Sym::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<Sym> for SymSet {
    fn from_iter<I: IntoIterator<Item = Sym>>(iter: I) -> Self {
        let mut set = SymSet::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

/// Constant real exponent of a [`Expr::Power`] node.
///
/// Rationals are kept exact (normalized, positive denominator) so that
/// exponent arithmetic during simplification does not lose the `-4/3`
/// diffusivity signature.
#[derive(Clone, Copy, Debug)]
pub enum Exponent {
    Rational(i64, i64),
    Float(f64),
}

impl Exponent {
    pub fn int(n: i64) -> Self {
        Exponent::Rational(n, 1)
    }

    pub fn rational(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Exponent::Rational(sign * num / g, sign.abs() * den.abs() / g)
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Rational(n, d) => n as f64 / d as f64,
            Exponent::Float(f) => f,
        }
    }

    pub fn is_integer(self) -> bool {
        match self {
            Exponent::Rational(_, d) => d == 1,
            Exponent::Float(f) => f.fract() == 0.0 && f.abs() < 2f64.powi(53),
        }
    }

    pub fn as_integer(self) -> Option<i64> {
        match self {
            Exponent::Rational(n, 1) => Some(n),
            Exponent::Float(f) if f.fract() == 0.0 && f.abs() < 2f64.powi(53) => Some(f as i64),
            _ => None,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Exponent::Rational(n, _) => n == 0,
            Exponent::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Exponent::Rational(n, d) => n == d,
            Exponent::Float(f) => f == 1.0,
        }
    }

    /// Exact where possible; rational + rational stays rational unless the
    /// intermediate arithmetic would overflow i64.
    pub fn add(self, other: Exponent) -> Exponent {
        match (self, other) {
            (Exponent::Rational(a, b), Exponent::Rational(c, d)) => {
                let num = (a as i128) * (d as i128) + (c as i128) * (b as i128);
                let den = (b as i128) * (d as i128);
                if let (Ok(num), Ok(den)) = (i64::try_from(num), i64::try_from(den)) {
                    Exponent::rational(num, den)
                } else {
                    Exponent::Float(self.value() + other.value())
                }
            }
            _ => Exponent::Float(self.value() + other.value()),
        }
    }

    pub fn mul(self, other: Exponent) -> Exponent {
        match (self, other) {
            (Exponent::Rational(a, b), Exponent::Rational(c, d)) => {
                let num = (a as i128) * (c as i128);
                let den = (b as i128) * (d as i128);
                if let (Ok(num), Ok(den)) = (i64::try_from(num), i64::try_from(den)) {
                    Exponent::rational(num, den)
                } else {
                    Exponent::Float(self.value() * other.value())
                }
            }
            _ => Exponent::Float(self.value() * other.value()),
        }
    }

    pub fn sub_one(self) -> Exponent {
        self.add(Exponent::int(-1))
    }

    /// Exact rational match, or float agreement within `1e-12`.
    pub fn matches_rational(self, num: i64, den: i64) -> bool {
        match self {
            Exponent::Rational(n, d) => {
                (n as i128) * (den as i128) == (num as i128) * (d as i128)
            }
            Exponent::Float(f) => (f - num as f64 / den as f64).abs() < 1e-12,
        }
    }
}

impl PartialEq for Exponent {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Exponent::Rational(a, b), Exponent::Rational(c, d)) => a == c && b == d,
            _ => self.value() == other.value(),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Rational(n, 1) => write!(f, "{n}"),
            Exponent::Rational(n, d) => write!(f, "{n}/{d}"),
            Exponent::Float(x) => write!(f, "{x}"),
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a.max(1)
}

/// Symbolic expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Sym),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Box<Expr>, Exponent),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Erf(Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn num(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Const(n as f64)
    }

    pub fn var(s: Sym) -> Expr {
        Expr::Var(s)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn powi(self, n: i64) -> Expr {
        Expr::Power(Box::new(self), Exponent::int(n))
    }

    pub fn powr(self, num: i64, den: i64) -> Expr {
        Expr::Power(Box::new(self), Exponent::rational(num, den))
    }

    pub fn pow(self, e: Exponent) -> Expr {
        Expr::Power(Box::new(self), e)
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Ln(Box::new(self))
    }

    pub fn erf(self) -> Expr {
        Expr::Erf(Box::new(self))
    }

    pub fn is_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Set of symbols occurring in the tree.
    pub fn free_syms(&self) -> SymSet {
        let mut set = SymSet::empty();
        self.collect_syms(&mut set);
        set
    }

    fn collect_syms(&self, set: &mut SymSet) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(s) => set.insert(*s),
            Expr::Sum(es) | Expr::Product(es) => {
                for e in es {
                    e.collect_syms(set);
                }
            }
            Expr::Power(b, _) => b.collect_syms(set),
            Expr::Exp(a) | Expr::Ln(a) | Expr::Erf(a) | Expr::Neg(a) => a.collect_syms(set),
        }
    }

    pub fn depends_on(&self, s: Sym) -> bool {
        self.free_syms().contains(s)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, Expr::Neg(Box::new(rhs))])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs.powi(-1)])
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// Variable bindings for [`eval`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Bindings {
    vals: [Option<f64>; Sym::COUNT],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, s: Sym, v: f64) -> Self {
        self.vals[s.index()] = Some(v);
        self
    }

    pub fn get(&self, s: Sym) -> Option<f64> {
        self.vals[s.index()]
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol `{}`", .0.name())]
    Unbound(Sym),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Evaluates `e` under `bindings`.
///
/// Errors on unbound symbols and on real-domain violations: `ln` of a
/// non-positive argument, a negative base raised to a non-integer power,
/// `0` raised to a negative power (division by zero), and any non-finite
/// result.
pub fn eval(e: &Expr, bindings: &Bindings) -> Result<f64, EvalError> {
    let v = eval_raw(e, bindings)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("non-finite result {v}")))
    }
}

fn eval_raw(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Var(s) => b.get(*s).ok_or(EvalError::Unbound(*s)),
        Expr::Sum(es) => {
            let mut acc = 0.0;
            for e in es {
                acc += eval_raw(e, b)?;
            }
            Ok(acc)
        }
        Expr::Product(es) => {
            let mut acc = 1.0;
            for e in es {
                acc *= eval_raw(e, b)?;
            }
            Ok(acc)
        }
        Expr::Power(base, n) => {
            let bv = eval_raw(base, b)?;
            if let Some(k) = n.as_integer() {
                if bv == 0.0 && k < 0 {
                    return Err(EvalError::Domain("0 raised to a negative power".into()));
                }
                Ok(bv.powi(k.clamp(i32::MIN as i64, i32::MAX as i64) as i32))
            } else {
                if bv < 0.0 {
                    return Err(EvalError::Domain(format!(
                        "negative base {bv} with non-integer exponent {n}"
                    )));
                }
                if bv == 0.0 && n.value() < 0.0 {
                    return Err(EvalError::Domain("0 raised to a negative power".into()));
                }
                Ok(bv.powf(n.value()))
            }
        }
        Expr::Exp(a) => Ok(eval_raw(a, b)?.exp()),
        Expr::Ln(a) => {
            let av = eval_raw(a, b)?;
            if av <= 0.0 {
                Err(EvalError::Domain(format!("ln of non-positive value {av}")))
            } else {
                Ok(av.ln())
            }
        }
        Expr::Erf(a) => Ok(libm::erf(eval_raw(a, b)?)),
        Expr::Neg(a) => Ok(-eval_raw(a, b)?),
    }
}

/// Exact derivative of `e` with respect to `s`; the result stays within the
/// node set (in particular `d/ds erf(g) = 2/sqrt(pi) * exp(-g^2) * g'`).
pub fn diff(e: &Expr, s: Sym) -> Expr {
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(v) => {
            if *v == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Sum(es) => Expr::Sum(es.iter().map(|e| diff(e, s)).collect()),
        Expr::Product(es) => {
            let mut terms = Vec::with_capacity(es.len());
            for (i, _) in es.iter().enumerate() {
                let mut factors: Vec<Expr> = Vec::with_capacity(es.len());
                for (j, f) in es.iter().enumerate() {
                    factors.push(if i == j { diff(f, s) } else { f.clone() });
                }
                terms.push(Expr::Product(factors));
            }
            Expr::Sum(terms)
        }
        Expr::Power(base, n) => {
            // d/ds b^n = n * b^(n-1) * b'
            Expr::Product(vec![
                Expr::Const(n.value()),
                base.as_ref().clone().pow(n.sub_one()),
                diff(base, s),
            ])
        }
        Expr::Exp(a) => Expr::Product(vec![e.clone(), diff(a, s)]),
        Expr::Ln(a) => Expr::Product(vec![diff(a, s), a.as_ref().clone().powi(-1)]),
        Expr::Erf(a) => Expr::Product(vec![
            Expr::Const(std::f64::consts::FRAC_2_SQRT_PI),
            Expr::Exp(Box::new(Expr::Neg(Box::new(a.as_ref().clone().powi(2))))),
            diff(a, s),
        ]),
        Expr::Neg(a) => Expr::Neg(Box::new(diff(a, s))),
    }
}

/// Replaces every occurrence of `s` by `replacement` (no simplification).
pub fn subst(e: &Expr, s: Sym, replacement: &Expr) -> Expr {
    match e {
        Expr::Const(_) => e.clone(),
        Expr::Var(v) => {
            if *v == s {
                replacement.clone()
            } else {
                e.clone()
            }
        }
        Expr::Sum(es) => Expr::Sum(es.iter().map(|e| subst(e, s, replacement)).collect()),
        Expr::Product(es) => Expr::Product(es.iter().map(|e| subst(e, s, replacement)).collect()),
        Expr::Power(b, n) => Expr::Power(Box::new(subst(b, s, replacement)), *n),
        Expr::Exp(a) => Expr::Exp(Box::new(subst(a, s, replacement))),
        Expr::Ln(a) => Expr::Ln(Box::new(subst(a, s, replacement))),
        Expr::Erf(a) => Expr::Erf(Box::new(subst(a, s, replacement))),
        Expr::Neg(a) => Expr::Neg(Box::new(subst(a, s, replacement))),
    }
}

// ---------------------------------------------------------------------------
// Canonical ordering (used to sort factors and terms deterministically)
// ---------------------------------------------------------------------------

fn kind_rank(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) => 0,
        Expr::Var(_) => 1,
        Expr::Power(_, _) => 2,
        Expr::Exp(_) => 3,
        Expr::Ln(_) => 4,
        Expr::Erf(_) => 5,
        Expr::Sum(_) => 6,
        Expr::Product(_) => 7,
        Expr::Neg(_) => 8,
    }
}

pub(crate) fn canonical_cmp(a: &Expr, b: &Expr) -> Ordering {
    let ra = kind_rank(a);
    let rb = kind_rank(b);
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => x.total_cmp(y),
        (Expr::Var(x), Expr::Var(y)) => x.cmp(y),
        (Expr::Power(ba, na), Expr::Power(bb, nb)) => canonical_cmp(ba, bb)
            .then_with(|| na.value().total_cmp(&nb.value())),
        (Expr::Exp(x), Expr::Exp(y))
        | (Expr::Ln(x), Expr::Ln(y))
        | (Expr::Erf(x), Expr::Erf(y))
        | (Expr::Neg(x), Expr::Neg(y)) => canonical_cmp(x, y),
        (Expr::Sum(xs), Expr::Sum(ys)) | (Expr::Product(xs), Expr::Product(ys)) => {
            for (x, y) in xs.iter().zip(ys.iter()) {
                let c = canonical_cmp(x, y);
                if c != Ordering::Equal {
                    return c;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => unreachable!("matching ranks imply matching variants"),
    }
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

/// Normal form: constant folding, sum/product flattening, like-term and
/// like-base merging, canonical ordering.  Idempotent and value-preserving on
/// the common evaluation domain.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(if *c == 0.0 { 0.0 } else { *c }),
        Expr::Var(_) => e.clone(),
        Expr::Neg(a) => simplify(&Expr::Product(vec![Expr::int(-1), a.as_ref().clone()])),
        Expr::Sum(ts) => simplify_sum(ts),
        Expr::Product(fs) => simplify_product(fs),
        Expr::Power(b, n) => simplify_power(&simplify(b), *n),
        Expr::Exp(a) => {
            let a = simplify(a);
            match a {
                Expr::Const(c) => Expr::Const(c.exp()),
                Expr::Ln(inner) => *inner,
                _ => Expr::Exp(Box::new(a)),
            }
        }
        Expr::Ln(a) => {
            let a = simplify(a);
            match a {
                Expr::Const(c) if c > 0.0 => Expr::Const(c.ln()),
                Expr::Exp(inner) => *inner,
                _ => Expr::Ln(Box::new(a)),
            }
        }
        Expr::Erf(a) => {
            let a = simplify(a);
            match a {
                Expr::Const(c) => Expr::Const(libm::erf(c)),
                _ => Expr::Erf(Box::new(a)),
            }
        }
    }
}

/// Splits a simplified term into (numeric coefficient, sorted factor key).
fn term_parts(t: Expr) -> (f64, Vec<Expr>) {
    match t {
        Expr::Const(c) => (c, Vec::new()),
        Expr::Product(fs) => {
            let mut coeff = 1.0;
            let mut rest = Vec::with_capacity(fs.len());
            for f in fs {
                if let Expr::Const(c) = f {
                    coeff *= c;
                } else {
                    rest.push(f);
                }
            }
            (coeff, rest)
        }
        other => (1.0, vec![other]),
    }
}

fn rebuild_term(coeff: f64, mut factors: Vec<Expr>) -> Expr {
    if coeff == 0.0 {
        return Expr::zero();
    }
    if factors.is_empty() {
        return Expr::Const(coeff);
    }
    if coeff == 1.0 {
        if factors.len() == 1 {
            return factors.pop().expect("non-empty");
        }
        return Expr::Product(factors);
    }
    let mut fs = Vec::with_capacity(factors.len() + 1);
    fs.push(Expr::Const(coeff));
    fs.append(&mut factors);
    Expr::Product(fs)
}

fn simplify_sum(ts: &[Expr]) -> Expr {
    // (factor key, coefficient) pairs; linear scan keeps determinism without
    // requiring Hash on f64-bearing trees.
    let mut merged: Vec<(Vec<Expr>, f64)> = Vec::new();
    let mut stack: Vec<Expr> = ts.iter().map(simplify).collect();
    stack.reverse();
    while let Some(t) = stack.pop() {
        if let Expr::Sum(inner) = t {
            for e in inner.into_iter().rev() {
                stack.push(e);
            }
            continue;
        }
        let (coeff, key) = term_parts(t);
        if let Some(slot) = merged.iter_mut().find(|(k, _)| *k == key) {
            slot.1 += coeff;
        } else {
            merged.push((key, coeff));
        }
    }
    let mut terms: Vec<Expr> = merged
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(k, c)| rebuild_term(c, k))
        .collect();
    terms.sort_by(canonical_cmp);
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.pop().expect("non-empty"),
        _ => Expr::Sum(terms),
    }
}

fn simplify_product(fs: &[Expr]) -> Expr {
    let mut coeff = 1.0;
    // Merged power bases and collected exp() arguments.
    let mut bases: Vec<(Expr, Exponent)> = Vec::new();
    let mut exp_args: Vec<Expr> = Vec::new();
    let mut stack: Vec<Expr> = fs.iter().map(simplify).collect();
    stack.reverse();
    while let Some(f) = stack.pop() {
        match f {
            Expr::Product(inner) => {
                for e in inner.into_iter().rev() {
                    stack.push(e);
                }
            }
            Expr::Const(c) => coeff *= c,
            Expr::Exp(a) => exp_args.push(*a),
            Expr::Power(b, n) => merge_base(&mut bases, *b, n),
            other => merge_base(&mut bases, other, Exponent::int(1)),
        }
    }
    if !exp_args.is_empty() {
        let merged = simplify(&Expr::Sum(exp_args));
        match merged {
            Expr::Const(c) => coeff *= c.exp(),
            other => merge_base(&mut bases, Expr::Exp(Box::new(other)), Exponent::int(1)),
        }
    }
    if coeff == 0.0 {
        return Expr::zero();
    }
    let mut factors: Vec<Expr> = Vec::with_capacity(bases.len());
    for (base, n) in bases {
        let f = simplify_power(&base, n);
        match f {
            Expr::Const(c) => coeff *= c,
            other => factors.push(other),
        }
    }
    if coeff == 0.0 {
        return Expr::zero();
    }
    factors.sort_by(canonical_cmp);
    rebuild_term(coeff, factors)
}

fn merge_base(bases: &mut Vec<(Expr, Exponent)>, base: Expr, n: Exponent) {
    if let Some(slot) = bases.iter_mut().find(|(b, _)| *b == base) {
        slot.1 = slot.1.add(n);
    } else {
        bases.push((base, n));
    }
}

/// `base` must already be simplified.
fn simplify_power(base: &Expr, n: Exponent) -> Expr {
    if n.is_zero() {
        // b^0 -> 1; bases are assumed nonzero on the evaluation domain.
        return Expr::one();
    }
    if n.is_one() {
        return base.clone();
    }
    match base {
        Expr::Const(c) => {
            if let Some(k) = n.as_integer() {
                if !(*c == 0.0 && k < 0) {
                    return Expr::Const(c.powi(k.clamp(i32::MIN as i64, i32::MAX as i64) as i32));
                }
            } else if *c > 0.0 {
                return Expr::Const(c.powf(n.value()));
            }
            Expr::Power(Box::new(base.clone()), n)
        }
        // (b^m)^k = b^(m k) for integer k, regardless of sign of b^m.
        Expr::Power(inner, m) if n.is_integer() => simplify_power(inner, m.mul(n)),
        // (f g)^k distributes for integer k.
        Expr::Product(fs) if n.is_integer() => {
            let factors: Vec<Expr> = fs
                .iter()
                .map(|f| Expr::Power(Box::new(f.clone()), n))
                .collect();
            simplify_product(&factors)
        }
        // exp(a)^n = exp(n a); always valid since exp(a) > 0.
        Expr::Exp(a) => {
            let arg = simplify(&Expr::Product(vec![Expr::Const(n.value()), a.as_ref().clone()]));
            match arg {
                Expr::Const(c) => Expr::Const(c.exp()),
                other => Expr::Exp(Box::new(other)),
            }
        }
        _ => Expr::Power(Box::new(base.clone()), n),
    }
}

// ---------------------------------------------------------------------------
// Expansion
// ---------------------------------------------------------------------------

const MAX_EXPAND_POWER: i64 = 6;

/// Distributes products over sums (and small integer powers of sums), then
/// simplifies.  `simplify(expand(e))` reducing to `0` is the crate's symbolic
/// zero test.
pub fn expand(e: &Expr) -> Expr {
    let s = simplify(e);
    simplify(&expand_inner(&s))
}

fn expand_inner(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Sum(ts) => Expr::Sum(ts.iter().map(expand_inner).collect()),
        Expr::Product(fs) => {
            let expanded: Vec<Expr> = fs.iter().map(expand_inner).collect();
            distribute(expanded)
        }
        Expr::Power(b, n) => {
            let be = expand_inner(b);
            if let (Expr::Sum(_), Some(k)) = (&be, n.as_integer()) {
                if k >= 2 && k <= MAX_EXPAND_POWER {
                    let factors = vec![be.clone(); k as usize];
                    return distribute(factors);
                }
            }
            Expr::Power(Box::new(be), *n)
        }
        Expr::Exp(a) => Expr::Exp(Box::new(expand_inner(a))),
        Expr::Ln(a) => Expr::Ln(Box::new(expand_inner(a))),
        Expr::Erf(a) => Expr::Erf(Box::new(expand_inner(a))),
        Expr::Neg(a) => Expr::Neg(Box::new(expand_inner(a))),
    }
}

fn distribute(factors: Vec<Expr>) -> Expr {
    let mut terms: Vec<Expr> = vec![Expr::one()];
    for f in factors {
        let addends: Vec<Expr> = match f {
            Expr::Sum(ts) => ts,
            other => vec![other],
        };
        let mut next = Vec::with_capacity(terms.len() * addends.len());
        for t in &terms {
            for a in &addends {
                next.push(Expr::Product(vec![t.clone(), a.clone()]));
            }
        }
        terms = next;
    }
    if terms.len() == 1 {
        terms.pop().expect("non-empty")
    } else {
        Expr::Sum(terms)
    }
}

/// True when `e` reduces to the constant zero under expand + simplify.
pub fn is_zero_symbolic(e: &Expr) -> bool {
    expand(e).is_zero_const()
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render(self, 0))
    }
}

// Precedence levels: 0 sum, 1 product, 2 unary minus, 3 power operand.
fn render(e: &Expr, parent_prec: u8) -> String {
    let (s, prec) = match e {
        Expr::Const(c) => {
            let text = format!("{c}");
            let prec = if *c < 0.0 { 2 } else { 4 };
            (text, prec)
        }
        Expr::Var(sym) => (sym.name().to_string(), 4),
        Expr::Sum(ts) => {
            let mut out = String::new();
            for (i, t) in ts.iter().enumerate() {
                let rendered = render(t, 0);
                if i == 0 {
                    out.push_str(&rendered);
                } else if let Some(stripped) = rendered.strip_prefix('-') {
                    out.push_str(" - ");
                    out.push_str(stripped);
                } else {
                    out.push_str(" + ");
                    out.push_str(&rendered);
                }
            }
            (out, 0)
        }
        Expr::Product(fs) => {
            let mut parts = Vec::with_capacity(fs.len());
            let mut iter = fs.iter();
            let mut prefix = String::new();
            if let Some(first) = iter.next() {
                if first.is_const().is_some_and(|c| c == -1.0) {
                    prefix.push('-');
                } else {
                    parts.push(render(first, 1));
                }
            }
            for f in iter {
                parts.push(render(f, 1));
            }
            if parts.is_empty() {
                parts.push("1".to_string());
            }
            (format!("{prefix}{}", parts.join("*")), 1)
        }
        Expr::Power(b, n) => {
            let base = render(b, 3);
            let exp = match n {
                Exponent::Rational(k, 1) if *k >= 0 => format!("{k}"),
                _ => format!("({n})"),
            };
            (format!("{base}^{exp}"), 2)
        }
        Expr::Exp(a) => (format!("exp({})", render(a, 0)), 4),
        Expr::Ln(a) => (format!("ln({})", render(a, 0)), 4),
        Expr::Erf(a) => (format!("erf({})", render(a, 0)), 4),
        Expr::Neg(a) => (format!("-{}", render(a, 2)), 2),
    };
    if prec < parent_prec {
        format!("({s})")
    } else {
        s
    }
}
