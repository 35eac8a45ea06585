//! Recursive-descent parser for coefficient expressions.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr     := term { ("+" | "-") term }
//! term     := unary { ("*" | "/") unary }
//! unary    := "-" unary | power
//! power    := atom [ "^" exponent ]
//! atom     := number | symbol | func "(" expr ")" | "(" expr ")"
//! func     := "exp" | "ln" | "erf" | "sqrt"
//! number   := digits [ "." digits ] [ ("e"|"E") ["+"|"-"] digits ]
//! ```
//!
//! Symbols are the names listed by [`Sym::name`][super::Sym::name]
//! (`t x u v T xi omega y tau mu ...`); the Greek spellings `ξ ω τ μ` are
//! accepted as aliases.  Exponents must be constant; when written from
//! integer literals with `/`, `*`, `+`, `-` and parentheses they are kept as
//! exact rationals, so `u^(-4/3)` retains its classification signature.
//! `sqrt(g)` is sugar for `g^(1/2)`.  There is no implicit multiplication.
//!
//! Errors carry the byte offset of the offending token.

use super::{Expr, Sym};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl ParseError {
    fn new(pos: usize, msg: impl Into<String>) -> Self {
        ParseError { pos, msg: msg.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num { value: f64, int: Option<i64> },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, chars: src.char_indices().peekable() }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        while let Some(&(pos, c)) = self.chars.peek() {
            match c {
                c if c.is_whitespace() => {
                    self.chars.next();
                }
                '+' => {
                    self.chars.next();
                    out.push((pos, Tok::Plus));
                }
                '-' | '−' => {
                    self.chars.next();
                    out.push((pos, Tok::Minus));
                }
                '*' => {
                    self.chars.next();
                    out.push((pos, Tok::Star));
                }
                '/' => {
                    self.chars.next();
                    out.push((pos, Tok::Slash));
                }
                '^' => {
                    self.chars.next();
                    out.push((pos, Tok::Caret));
                }
                '(' => {
                    self.chars.next();
                    out.push((pos, Tok::LParen));
                }
                ')' => {
                    self.chars.next();
                    out.push((pos, Tok::RParen));
                }
                c if c.is_ascii_digit() => out.push((pos, self.lex_number(pos)?)),
                c if c.is_alphabetic() || c == '_' => out.push((pos, self.lex_ident(pos))),
                other => {
                    return Err(ParseError::new(pos, format!("unexpected character `{other}`")))
                }
            }
        }
        out.push((self.src.len(), Tok::Eof));
        Ok(out)
    }

    fn lex_number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let mut end = start;
        let mut saw_fraction = false;
        while let Some(&(pos, c)) = self.chars.peek() {
            match c {
                '0'..='9' => {
                    end = pos + 1;
                    self.chars.next();
                }
                '.' if !saw_fraction => {
                    saw_fraction = true;
                    end = pos + 1;
                    self.chars.next();
                }
                'e' | 'E' => {
                    saw_fraction = true;
                    end = pos + 1;
                    self.chars.next();
                    if let Some(&(p2, sign)) = self.chars.peek() {
                        if sign == '+' || sign == '-' {
                            end = p2 + 1;
                            self.chars.next();
                        }
                    }
                }
                _ => break,
            }
        }
        let text = &self.src[start..end];
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::new(start, format!("invalid number `{text}`")))?;
        let int = if saw_fraction { None } else { text.parse::<i64>().ok() };
        Ok(Tok::Num { value, int })
    }

    fn lex_ident(&mut self, start: usize) -> Tok {
        let mut end = start;
        while let Some(&(pos, c)) = self.chars.peek() {
            if c.is_alphanumeric() || c == '_' {
                end = pos + c.len_utf8();
                self.chars.next();
            } else {
                break;
            }
        }
        Tok::Ident(self.src[start..end].to_string())
    }
}

/// Constant value restricted to exponent position.
#[derive(Clone, Copy, Debug)]
enum ConstVal {
    Rat(i64, i64),
    Float(f64),
}

impl ConstVal {
    fn to_exponent(self) -> super::Exponent {
        match self {
            ConstVal::Rat(n, d) => super::Exponent::rational(n, d),
            ConstVal::Float(f) => super::Exponent::Float(f),
        }
    }

    fn neg(self) -> ConstVal {
        match self {
            ConstVal::Rat(n, d) => ConstVal::Rat(-n, d),
            ConstVal::Float(f) => ConstVal::Float(-f),
        }
    }

    fn combine(self, other: ConstVal, op: Tok) -> ConstVal {
        if let (ConstVal::Rat(a, b), ConstVal::Rat(c, d)) = (self, other) {
            let exact: Option<(i128, i128)> = match op {
                Tok::Plus => Some(((a as i128) * d as i128 + (c as i128) * b as i128, (b as i128) * d as i128)),
                Tok::Minus => Some(((a as i128) * d as i128 - (c as i128) * b as i128, (b as i128) * d as i128)),
                Tok::Star => Some(((a as i128) * c as i128, (b as i128) * d as i128)),
                Tok::Slash if c != 0 => Some(((a as i128) * d as i128, (b as i128) * c as i128)),
                _ => None,
            };
            if let Some((n, d)) = exact {
                if let (Ok(n), Ok(d)) = (i64::try_from(n), i64::try_from(d)) {
                    if d != 0 {
                        return ConstVal::Rat(n, d);
                    }
                }
            }
        }
        let (x, y) = (self.as_f64(), other.as_f64());
        ConstVal::Float(match op {
            Tok::Plus => x + y,
            Tok::Minus => x - y,
            Tok::Star => x * y,
            Tok::Slash => x / y,
            _ => unreachable!(),
        })
    }

    fn as_f64(self) -> f64 {
        match self {
            ConstVal::Rat(n, d) => n as f64 / d as f64,
            ConstVal::Float(f) => f,
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let (pos, got) = self.next();
        if got == want {
            Ok(())
        } else {
            Err(ParseError::new(pos, format!("expected {what}")))
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.parse_term()?];
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    terms.push(self.parse_term()?);
                }
                Tok::Minus => {
                    self.next();
                    terms.push(Expr::Neg(Box::new(self.parse_term()?)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().expect("non-empty") } else { Expr::Sum(terms) })
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.parse_unary()?];
        loop {
            match self.peek() {
                Tok::Star => {
                    self.next();
                    factors.push(self.parse_unary()?);
                }
                Tok::Slash => {
                    self.next();
                    factors.push(self.parse_unary()?.powi(-1));
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().expect("non-empty")
        } else {
            Expr::Product(factors)
        })
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Minus) {
            self.next();
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.next();
            let exp_pos = self.pos();
            let val = self.parse_const_unary(exp_pos)?;
            return Ok(base.pow(val.to_exponent()));
        }
        Ok(base)
    }

    // Exponents: constant arithmetic only, exact over integer literals.
    fn parse_const_unary(&mut self, ctx: usize) -> Result<ConstVal, ParseError> {
        if matches!(self.peek(), Tok::Minus) {
            self.next();
            return Ok(self.parse_const_unary(ctx)?.neg());
        }
        match self.next() {
            (_, Tok::Num { value, int }) => Ok(match int {
                Some(n) => ConstVal::Rat(n, 1),
                None => ConstVal::Float(value),
            }),
            (_, Tok::LParen) => {
                let v = self.parse_const_expr(ctx)?;
                self.expect(Tok::RParen, "`)` closing exponent")?;
                Ok(v)
            }
            (pos, _) => Err(ParseError::new(pos, "exponent must be a constant expression")),
        }
    }

    fn parse_const_expr(&mut self, ctx: usize) -> Result<ConstVal, ParseError> {
        let mut acc = self.parse_const_term(ctx)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Tok::Plus,
                Tok::Minus => Tok::Minus,
                _ => break,
            };
            self.next();
            let rhs = self.parse_const_term(ctx)?;
            acc = acc.combine(rhs, op);
        }
        Ok(acc)
    }

    fn parse_const_term(&mut self, ctx: usize) -> Result<ConstVal, ParseError> {
        let mut acc = self.parse_const_unary(ctx)?;
        loop {
            let op = match self.peek() {
                Tok::Star => Tok::Star,
                Tok::Slash => Tok::Slash,
                _ => break,
            };
            let pos = self.pos();
            self.next();
            let rhs = self.parse_const_unary(ctx)?;
            if matches!(op, Tok::Slash) && rhs.as_f64() == 0.0 {
                return Err(ParseError::new(pos, "division by zero in exponent"));
            }
            acc = acc.combine(rhs, op);
        }
        Ok(acc)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            (_, Tok::Num { value, .. }) => Ok(Expr::Const(value)),
            (pos, Tok::Ident(name)) => {
                if matches!(self.peek(), Tok::LParen) {
                    self.next();
                    let arg = self.parse_expr()?;
                    self.expect(Tok::RParen, "`)` closing function argument")?;
                    match name.as_str() {
                        "exp" => Ok(arg.exp()),
                        "ln" => Ok(arg.ln()),
                        "erf" => Ok(arg.erf()),
                        "sqrt" => Ok(arg.powr(1, 2)),
                        other => Err(ParseError::new(
                            pos,
                            format!("unknown function `{other}` (expected exp, ln, erf, sqrt)"),
                        )),
                    }
                } else if let Some(sym) = Sym::from_name(&name) {
                    Ok(Expr::Var(sym))
                } else {
                    Err(ParseError::new(
                        pos,
                        format!(
                            "unknown symbol `{name}` (expected one of {})",
                            Sym::ALL.map(|s| s.name()).join(", ")
                        ),
                    ))
                }
            }
            (_, Tok::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            (pos, tok) => Err(ParseError::new(pos, format!("unexpected token {tok:?}"))),
        }
    }
}

/// Parses a coefficient expression; see the module docs for the grammar.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    let mut parser = Parser { toks, idx: 0 };
    let e = parser.parse_expr()?;
    let (pos, trailing) = parser.next();
    if trailing != Tok::Eof {
        return Err(ParseError::new(pos, format!("trailing input {trailing:?}")));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::super::{eval, Bindings, Exponent, Sym};
    use super::*;

    #[test]
    fn parses_rational_exponent_exactly() {
        let e = parse("u^(-4/3)").unwrap();
        match e {
            Expr::Power(b, n) => {
                assert_eq!(*b, Expr::Var(Sym::U));
                assert_eq!(n, Exponent::Rational(-4, 3));
            }
            other => panic!("unexpected parse {other:?}"),
        }
    }

    #[test]
    fn parses_numbers_and_precedence() {
        let e = parse("3.5 + 2*x^2 - 1e-3/t").unwrap();
        let bind = Bindings::new().set(Sym::X, 2.0).set(Sym::T, 0.5);
        let v = eval(&e, &bind).unwrap();
        assert!((v - (3.5 + 8.0 - 0.002)).abs() < 1e-15);
    }

    #[test]
    fn sqrt_is_half_power() {
        let e = parse("sqrt(t)").unwrap();
        assert_eq!(e, Expr::Var(Sym::T).powr(1, 2));
    }

    #[test]
    fn unary_minus_binds_tighter_than_sum() {
        let e = parse("-u + v").unwrap();
        let bind = Bindings::new().set(Sym::U, 3.0).set(Sym::V, 1.0);
        assert_eq!(eval(&e, &bind).unwrap(), -2.0);
    }

    #[test]
    fn power_of_negative_exponent_without_parens() {
        // `u^-2` is accepted: exponent grammar starts with unary minus.
        let e = parse("u^-2").unwrap();
        let bind = Bindings::new().set(Sym::U, 2.0);
        assert_eq!(eval(&e, &bind).unwrap(), 0.25);
    }

    #[test]
    fn error_positions_are_reported() {
        let err = parse("2*^3").unwrap_err();
        assert_eq!(err.pos, 2);
        let err = parse("exp(u").unwrap_err();
        assert_eq!(err.pos, 5);
        let err = parse("2 + w").unwrap_err();
        assert_eq!(err.pos, 4);
        assert!(err.msg.contains("unknown symbol"));
    }

    #[test]
    fn nonconstant_exponent_rejected() {
        let err = parse("2^u").unwrap_err();
        assert!(err.msg.contains("constant"), "{err}");
    }

    #[test]
    fn greek_aliases() {
        assert_eq!(parse("ξ").unwrap(), Expr::Var(Sym::Xi));
        assert_eq!(parse("ω^2").unwrap(), Expr::Var(Sym::Omega).powi(2));
    }
}
