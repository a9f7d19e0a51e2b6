//! Expression language for user-supplied right-hand sides, level-set
//! functions, tube boundaries and scalar majorants.
//!
//! Variables are `t`, the state coordinates `x1..xk`, and `s`, the state of a
//! scalar comparison equation (evaluated as the first state coordinate).
//! Evaluation is plain `f64` arithmetic; a domain violation (log of a
//! nonpositive number, division by zero, non-finite result) is an error rather
//! than a silent NaN.

mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{parse_expression, ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    Time,
    /// Zero-based state index; printed as `x{index+1}`.
    State(usize),
    /// Scalar state of a comparison equation; reads the first state slot.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
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
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    /// `min`/`max` take two or more arguments; everything else is unary.
    pub fn is_variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} is undefined at {arg}")]
    Domain { func: &'static str, arg: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("variable x{index} is out of range for a {dimension}-dimensional state")]
    MissingState { index: usize, dimension: usize },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn time() -> Expr {
        Expr::Var(Var::Time)
    }

    /// Zero-based state coordinate.
    pub fn state(index: usize) -> Expr {
        Expr::Var(Var::State(index))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn neg(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::Time) => t,
            Expr::Var(Var::State(i)) => *x.get(*i).ok_or(EvalError::MissingState {
                index: i + 1,
                dimension: x.len(),
            })?,
            Expr::Var(Var::Scalar) => *x.first().ok_or(EvalError::MissingState {
                index: 1,
                dimension: 0,
            })?,
            Expr::Neg(e) => -e.eval(t, x)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(t, x)?;
                let b = b.eval(t, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = pow(a, b);
                        if v.is_nan() {
                            return Err(EvalError::Domain { func: "pow", arg: a });
                        }
                        v
                    }
                }
            }
            Expr::Call(func, args) => {
                let first = args[0].eval(t, x)?;
                match func {
                    Func::Sin => first.sin(),
                    Func::Cos => first.cos(),
                    Func::Exp => first.exp(),
                    Func::Log => {
                        if first <= 0.0 {
                            return Err(EvalError::Domain { func: "log", arg: first });
                        }
                        first.ln()
                    }
                    Func::Sqrt => {
                        if first < 0.0 {
                            return Err(EvalError::Domain { func: "sqrt", arg: first });
                        }
                        first.sqrt()
                    }
                    Func::Abs => first.abs(),
                    Func::Min | Func::Max => {
                        let mut acc = first;
                        for arg in &args[1..] {
                            let v = arg.eval(t, x)?;
                            acc = if *func == Func::Min { acc.min(v) } else { acc.max(v) };
                        }
                        acc
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Largest one-based state index referenced (`x3` gives 3, `s` gives 1).
    pub fn max_state_index(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(Var::Time) => 0,
            Expr::Var(Var::State(i)) => i + 1,
            Expr::Var(Var::Scalar) => 1,
            Expr::Neg(e) => e.max_state_index(),
            Expr::Binary(_, a, b) => a.max_state_index().max(b.max_state_index()),
            Expr::Call(_, args) => args.iter().map(Expr::max_state_index).max().unwrap_or(0),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        self.any_var(&|v| v == Var::Time)
    }

    pub fn depends_on_state(&self) -> bool {
        self.any_var(&|v| v != Var::Time)
    }

    fn any_var(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => pred(*v),
            Expr::Neg(e) => e.any_var(pred),
            Expr::Binary(_, a, b) => a.any_var(pred) || b.any_var(pred),
            Expr::Call(_, args) => args.iter().any(|a| a.any_var(pred)),
        }
    }

    /// Replaces every occurrence of `t` by `replacement`.
    pub fn substitute_time(&self, replacement: &Expr) -> Expr {
        match self {
            Expr::Var(Var::Time) => replacement.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.substitute_time(replacement)),
            Expr::Binary(op, a, b) => {
                Expr::binary(*op, a.substitute_time(replacement), b.substitute_time(replacement))
            }
            Expr::Call(f, args) => {
                Expr::Call(*f, args.iter().map(|a| a.substitute_time(replacement)).collect())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

// `powi` keeps negative bases with integral exponents exact.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

struct Operand<'a>(&'a Expr, u8);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => write!(f, "({v})"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::Time) => f.write_str("t"),
            Expr::Var(Var::State(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Scalar) => f.write_str("s"),
            Expr::Neg(e) => write!(f, "-{}", Operand(e, 4)),
            Expr::Binary(op, a, b) => {
                let (sym, left, right) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                if *op == BinOp::Pow {
                    write!(f, "{}^{}", Operand(a, left), Operand(b, right))
                } else {
                    write!(f, "{} {sym} {}", Operand(a, left), Operand(b, right))
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
        }
    }
}
