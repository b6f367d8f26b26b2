//! STL-U formulas: atoms `f(x) > 0` annotated with a confidence level, boolean
//! connectives, and bounded `always` / `eventually` / `until` over integer time.
//!
//! # Grammar
//!
//! Whitespace-insensitive; keywords are case-insensitive.
//!
//! ```text
//! formula  := until ;
//! until    := or ( ("U" | "until") interval or )? ;
//! or       := and ( ("or" | "|" | "||") and )* ;
//! and      := unary ( ("and" | "&" | "&&") unary )* ;
//! unary    := ("not" | "!") unary
//!           | ("G" | "always") interval unary
//!           | ("F" | "eventually") interval unary
//!           | "(" formula ")" | atom ;
//! interval := "[" nat "," nat "]" ;
//! atom     := expr cmp expr ( "@" (float | "?") )? ;
//! cmp      := "<" | "<=" | ">" | ">=" ;
//! ```
//!
//! Expressions use `+ - * / ^`, the functions `abs sin cos exp log sqrt`, numeric
//! literals, parentheses and exactly one variable per atom. `G`, `F` and `U` are
//! operators only when followed by `[`, so they stay usable as variable names.
//!
//! An atom `a > b` becomes `f = a - b` and `a < b` becomes `f = b - a`; a bare `0`
//! on the smaller side is dropped, so `e > 0` and `0 < e` keep `f = e`. The
//! non-strict forms `<=` / `>=` read as `<` / `>`: the boundary has probability zero
//! under a Gaussian. A missing `@` clause means the level is unspecified, which is
//! only meaningful for confidence-range queries.

mod expr;
mod minimize;
mod parser;

use std::fmt;

pub use expr::{BinOp, Expr, UnaryFn};
pub use minimize::{
    maximize_expr, maximize_expr_with, minimize_expr, minimize_expr_with, minimize_fn, MinimizeOptions,
};
pub use parser::parse;

/// Confidence level attached to an atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Confidence {
    Level(f64),
    Unspecified,
}

impl Confidence {
    pub fn level(self) -> Option<f64> {
        match self {
            Confidence::Level(l) => Some(l),
            Confidence::Unspecified => None,
        }
    }
}

/// Predicate `expr(x) > 0` over the single variable `variable`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub expr: Expr,
    pub variable: String,
    pub conf: Confidence,
}

impl Atom {
    /// Builds an atom, taking the variable name from `expr`.
    pub fn new(expr: Expr, conf: Confidence) -> crate::Result<Self> {
        let vars = expr.variables();
        if vars.len() != 1 {
            return Err(crate::Error::Parameter(format!(
                "atom must reference exactly one variable, found {}",
                vars.len()
            )));
        }
        let variable = vars.into_iter().next().unwrap_or_default().to_string();
        Ok(Self { expr, variable, conf })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.expr {
            Expr::Binary(BinOp::Sub, l, r) if !r.is_positive_zero_literal() => write!(f, "{l} > {r}")?,
            e => write!(f, "{e} > 0")?,
        }
        match self.conf {
            Confidence::Level(l) => write!(f, " @ {l}"),
            Confidence::Unspecified => write!(f, " @ ?"),
        }
    }
}

/// Closed integer offset range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeInterval {
    pub lo: u32,
    pub hi: u32,
}

impl TimeInterval {
    pub fn new(lo: u32, hi: u32) -> crate::Result<Self> {
        if lo > hi {
            return Err(crate::Error::Parameter(format!("empty interval [{lo},{hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always(TimeInterval, Box<Formula>),
    Eventually(TimeInterval, Box<Formula>),
    Until(TimeInterval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(expr: Expr, conf: Confidence) -> crate::Result<Self> {
        Atom::new(expr, conf).map(Formula::Atom)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(phi: Formula) -> Self {
        Formula::Not(Box::new(phi))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn always(i: TimeInterval, phi: Formula) -> Self {
        Formula::Always(i, Box::new(phi))
    }

    pub fn eventually(i: TimeInterval, phi: Formula) -> Self {
        Formula::Eventually(i, Box::new(phi))
    }

    pub fn until(i: TimeInterval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    /// Largest time offset any subformula evaluation can reach.
    pub fn horizon(&self) -> u64 {
        match self {
            Formula::Atom(_) => 0,
            Formula::Not(p) => p.horizon(),
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Always(i, p) | Formula::Eventually(i, p) => i.hi as u64 + p.horizon(),
            Formula::Until(i, a, b) => i.hi as u64 + a.horizon().max(b.horizon()),
        }
    }

    /// Atoms in left-to-right order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::Atom(a) => f(a),
            Formula::Not(p) | Formula::Always(_, p) | Formula::Eventually(_, p) => p.visit_atoms(f),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
        }
    }

    /// Copy with every atom's confidence replaced by `conf`.
    pub fn with_confidence(&self, conf: Confidence) -> Formula {
        match self {
            Formula::Atom(a) => Formula::Atom(Atom { conf, ..a.clone() }),
            Formula::Not(p) => Formula::not(p.with_confidence(conf)),
            Formula::And(a, b) => Formula::and(a.with_confidence(conf), b.with_confidence(conf)),
            Formula::Or(a, b) => Formula::or(a.with_confidence(conf), b.with_confidence(conf)),
            Formula::Always(i, p) => Formula::always(*i, p.with_confidence(conf)),
            Formula::Eventually(i, p) => Formula::eventually(*i, p.with_confidence(conf)),
            Formula::Until(i, a, b) => Formula::until(*i, a.with_confidence(conf), b.with_confidence(conf)),
        }
    }
}

/// Canonical printer; `parse(&phi.to_string())` reproduces `phi`.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(p) => write!(f, "not ({p})"),
            Formula::And(a, b) => write!(f, "({a} and {b})"),
            Formula::Or(a, b) => write!(f, "({a} or {b})"),
            Formula::Always(i, p) => write!(f, "always{i} ({p})"),
            Formula::Eventually(i, p) => write!(f, "eventually{i} ({p})"),
            Formula::Until(i, a, b) => write!(f, "(({a}) until{i} ({b}))"),
        }
    }
}
