use std::collections::BTreeSet;
use std::fmt;

use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Abs,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Abs => "abs",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "abs" => UnaryFn::Abs,
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }
}

/// Arithmetic expression over a single flowpipe variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Func(UnaryFn, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn difference(l: Expr, r: Expr) -> Self {
        Self::binary(BinOp::Sub, l, r)
    }

    pub fn func(f: UnaryFn, e: Expr) -> Self {
        Expr::Func(f, Box::new(e))
    }

    pub fn negated(self) -> Self {
        Expr::Neg(Box::new(self))
    }

    /// Distinct variable names referenced by the expression.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v);
            }
            Expr::Neg(e) | Expr::Func(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Evaluates with every variable bound to `x`.
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(_) => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(x)?;
                let b = r.eval(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError { x, message: "division by zero".into() });
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Func(f, e) => {
                let a = e.eval(x)?;
                match f {
                    UnaryFn::Abs => a.abs(),
                    UnaryFn::Sin => a.sin(),
                    UnaryFn::Cos => a.cos(),
                    UnaryFn::Exp => a.exp(),
                    UnaryFn::Log => {
                        if a <= 0.0 {
                            return Err(EvalError { x, message: format!("log of non-positive value {a}") });
                        }
                        a.ln()
                    }
                    UnaryFn::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError { x, message: format!("sqrt of negative value {a}") });
                        }
                        a.sqrt()
                    }
                }
            }
        };
        if v.is_nan() {
            return Err(EvalError { x, message: "expression is undefined (NaN)".into() });
        }
        Ok(v)
    }

    pub(crate) fn is_positive_zero_literal(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0 && c.is_sign_positive())
    }
}

/// Canonical, fully parenthesized form accepted back by the parser.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "({c})"),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Func(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}
