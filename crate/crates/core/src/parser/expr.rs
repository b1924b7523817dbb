//! Expression trees over chart coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
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
}

/// Parsed expression. Coordinate references carry the index of the coordinate
/// in the declaring context so evaluation is a slice lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Coord { index: usize, name: String },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at {point:?}")]
    DivisionByZero { point: Vec<f64> },
    #[error("log of non-positive value {value} at {point:?}")]
    LogDomain { value: f64, point: Vec<f64> },
    #[error("sqrt of negative value {value} at {point:?}")]
    SqrtDomain { value: f64, point: Vec<f64> },
    #[error("non-finite result at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("coordinate `{name}` is unbound")]
    Unbound { name: String },
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    /// Evaluate with `bindings[i]` the value of coordinate `i`.
    pub fn eval(&self, bindings: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_inner(bindings)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                point: bindings.to_vec(),
            })
        }
    }

    fn eval_inner(&self, b: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Coord { index, name } => *b.get(*index).ok_or_else(|| EvalError::Unbound {
                name: name.clone(),
            })?,
            Expr::Neg(e) => -e.eval_inner(b)?,
            Expr::Binary(op, l, r) => {
                let l = l.eval_inner(b)?;
                let r = r.eval_inner(b)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(EvalError::DivisionByZero { point: b.to_vec() });
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_inner(b)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::LogDomain {
                                value: a,
                                point: b.to_vec(),
                            });
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::SqrtDomain {
                                value: a,
                                point: b.to_vec(),
                            });
                        }
                        a.sqrt()
                    }
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_inner(b)?),
                    Func::Max => a.max(args[1].eval_inner(b)?),
                }
            }
        })
    }

    /// Multiply by another expression, folding the trivial cases.
    pub fn scaled(self, factor: Expr) -> Expr {
        match (&self, &factor) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
            (_, Expr::Const(b)) if *b == 1.0 => self,
            _ => Expr::Binary(BinOp::Mul, Box::new(factor), Box::new(self)),
        }
    }

    /// Substitute `-c` for coordinate `index`.
    pub fn reflect_coord(&self, index: usize) -> Expr {
        match self {
            Expr::Coord { index: i, .. } if *i == index => Expr::Neg(Box::new(self.clone())),
            Expr::Const(_) | Expr::Coord { .. } => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.reflect_coord(index))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.reflect_coord(index)),
                Box::new(r.reflect_coord(index)),
            ),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.reflect_coord(index)).collect()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Const(_) | Expr::Coord { .. } | Expr::Call(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the minimal parentheses needed to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Coord { name, .. } => write!(f, "{name}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                // `- -x` must not print as `--x`; unary operand binds at unary level
                write_operand(f, e, 4)
            }
            Expr::Binary(op, l, r) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    // right associative: left operand must bind tighter
                    BinOp::Pow => ("^", 5, 3),
                };
                write_operand(f, l, lp)?;
                write!(f, " {sym} ")?;
                // the right operand of ^ is parsed at unary level, so `a ^ -b` is fine
                write_operand(f, r, if *op == BinOp::Pow { 3 } else { rp })
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
