//! Scalar expressions over state `x0..`, control `u0..` and time `t`.
//!
//! Expressions are parsed once, then evaluated many times from the inner
//! loops of the Hamiltonian maximizer and the integrators. Derivatives are
//! symbolic (see [`Expr::diff`]) with light constant folding.

mod diff;
mod parse;

use std::fmt;

use thiserror::Error;

/// Declared variable dimensions: `n` state components and `m` controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize) -> Self {
        Dims { n, m }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X(usize),
    U(usize),
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{i}"),
            Var::U(i) => write!(f, "u{i}"),
            Var::T => write!(f, "t"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Expression tree.
///
/// `Select` never comes out of the parser; it is produced by [`Expr::diff`]
/// for the one-sided derivatives of `abs`, `min` and `max`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// `if lhs <= rhs { then } else { otherwise }`
    Select(Box<[Expr; 4]>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at byte {offset} is out of range (declared {declared})")]
    IndexOutOfRange {
        name: String,
        offset: usize,
        declared: usize,
    },
    #[error("domain fault in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
}

/// Evaluation point. Slices must be at least as long as the largest index
/// referenced by the expression.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub t: f64,
}

impl<'a> EvalEnv<'a> {
    pub fn new(x: &'a [f64], u: &'a [f64], t: f64) -> Self {
        EvalEnv { x, u, t }
    }
}

fn domain(e: &Expr, reason: &str) -> ExprError {
    ExprError::Domain {
        subexpr: e.to_string(),
        reason: reason.to_string(),
    }
}

impl Expr {
    pub fn parse(text: &str, dims: Dims) -> Result<Expr, ExprError> {
        parse::parse(text, dims)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// Evaluates in IEEE double precision. Any non-finite intermediate is
    /// reported as a domain fault naming the subexpression that produced it.
    pub fn eval(&self, env: &EvalEnv<'_>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => return Ok(*v),
            Expr::Var(Var::X(i)) => return Ok(env.x[*i]),
            Expr::Var(Var::U(i)) => return Ok(env.u[*i]),
            Expr::Var(Var::T) => return Ok(env.t),
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(env)?;
                let b_expr = b;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain(self, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if let Expr::Num(k) = **b_expr {
                            if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 {
                                if a == 0.0 && k < 0.0 {
                                    return Err(domain(self, "zero to a negative power"));
                                }
                                a.powi(k as i32)
                            } else {
                                checked_powf(self, a, b)?
                            }
                        } else {
                            checked_powf(self, a, b)?
                        }
                    }
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(domain(self, "log of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(domain(self, "sqrt of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                }
            }
            Expr::Select(parts) => {
                let [lhs, rhs, then, otherwise] = &**parts;
                if lhs.eval(env)? <= rhs.eval(env)? {
                    then.eval(env)?
                } else {
                    otherwise.eval(env)?
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(self, "non-finite result"))
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    ///
    /// Kinks follow fixed conventions: `d|g| = g'` when `g >= 0`,
    /// `min(a,b)' = a'` when `a <= b`, `max(a,b)' = a'` when `a >= b`.
    pub fn diff(&self, var: Var) -> Expr {
        diff::diff(self, var)
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
            Expr::Select(parts) => parts.iter().any(|a| a.depends_on(var)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Largest referenced state and control index (plus one), i.e. the
    /// smallest dimensions this expression can be evaluated with.
    pub fn required_dims(&self) -> Dims {
        let mut d = Dims::new(0, 0);
        self.visit_vars(&mut |v| match v {
            Var::X(i) => d.n = d.n.max(i + 1),
            Var::U(i) => d.m = d.m.max(i + 1),
            Var::T => {}
        });
        d
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) => a.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
            Expr::Select(parts) => parts.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn checked_powf(e: &Expr, a: f64, b: f64) -> Result<f64, ExprError> {
    if a < 0.0 {
        return Err(domain(e, "negative base with non-integer exponent"));
    }
    if a == 0.0 && b < 0.0 {
        return Err(domain(e, "zero to a negative power"));
    }
    Ok(a.powf(b))
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Prints with the minimum parentheses needed for the parser to rebuild the
/// same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    write_child(f, a, a.precedence() <= p)?;
                    f.write_str(sym)?;
                    write_child(f, b, b.precedence() < 3)
                } else {
                    write_child(f, a, a.precedence() < p)?;
                    write!(f, " {sym} ")?;
                    write_child(f, b, b.precedence() <= p)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Select(parts) => {
                let [l, r, a, b] = &**parts;
                write!(f, "ifle({l}, {r}, {a}, {b})")
            }
        }
    }
}
