//! Expression trees, evaluation and printing.

use std::fmt;

use thiserror::Error;

/// Free variables of a branch formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// The point being mapped (or, in an inverse rule, its image).
    X,
    /// The branch index.
    I,
}

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
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Unary functions callable as `name(arg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
}

/// Name lookup table for [`Func`]. New functions are added here and in
/// [`Func::apply`]; the grammar does not change.
pub const FUNCTIONS: &[(&str, Func)] = &[("sqrt", Func::Sqrt), ("abs", Func::Abs)];

impl Func {
    pub fn name(self) -> &'static str {
        FUNCTIONS.iter().find(|(_, f)| *f == self).map(|(n, _)| *n).expect("every function is in the table")
    }

    pub fn lookup(name: &str) -> Option<Func> {
        FUNCTIONS.iter().find(|(n, _)| *n == name).map(|(_, f)| *f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Non-negative literal; negation is always an explicit [`Expr::Neg`].
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn x() -> Self {
        Expr::Var(Var::X)
    }

    pub fn i() -> Self {
        Expr::Var(Var::I)
    }

    pub fn neg(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn call(f: Func, arg: Expr) -> Self {
        Expr::Call(f, Box::new(arg))
    }

    /// Whether `v` occurs anywhere in the tree.
    pub fn mentions(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(e) | Expr::Call(_, e) => e.mentions(v),
            Expr::Bin(_, l, r) => l.mentions(v) || r.mentions(v),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Bin(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(_, _) => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_precedence: u8) -> fmt::Result {
    if e.precedence() < min_precedence {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the fewest parentheses that parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::I) => f.write_str("i"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let (left_min, right_min) = match op {
                    BinOp::Add | BinOp::Sub => (1, 2),
                    BinOp::Mul | BinOp::Div => (2, 3),
                    BinOp::Pow => (5, 3),
                };
                write_child(f, l, left_min)?;
                f.write_str(op.symbol())?;
                write_child(f, r, right_min)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    SqrtNegative,
    DivisionByZero,
    /// Overflow or a non-real power.
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::SqrtNegative => "square root of a negative number",
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::NonFinite => "non-finite result",
        })
    }
}

/// Evaluation failure, carrying the subexpression where it occurred.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in `{expr}` at x = {x}, i = {i}")]
pub struct DomainError {
    pub kind: DomainKind,
    pub expr: Expr,
    pub x: f64,
    pub i: usize,
}

/// Negative square-root arguments no larger in size than this multiple of the
/// argument's rounding scale are treated as zero.
const SQRT_ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

/// Evaluates `e` at `(x, i)`.
///
/// Alongside each value a magnitude bound is tracked (the largest intermediate
/// in absolute value), so that a square-root argument which is negative only
/// through cancellation, such as `1 - i^2 + i*(i+1)*(1-x)^2` at a partition
/// point, evaluates as zero instead of failing.
pub fn eval_expr(e: &Expr, x: f64, i: usize) -> Result<f64, DomainError> {
    eval_scaled(e, x, i).map(|(v, _)| v)
}

fn eval_scaled(e: &Expr, x: f64, i: usize) -> Result<(f64, f64), DomainError> {
    let fail = |kind| DomainError { kind, expr: e.clone(), x, i };
    let (v, scale) = match e {
        Expr::Num(v) => (*v, v.abs()),
        Expr::Var(Var::X) => (x, x.abs()),
        Expr::Var(Var::I) => (i as f64, i as f64),
        Expr::Neg(a) => {
            let (v, s) = eval_scaled(a, x, i)?;
            (-v, s)
        }
        Expr::Call(func, a) => {
            let (v, s) = eval_scaled(a, x, i)?;
            match func {
                Func::Sqrt => {
                    if v < 0.0 && v < -SQRT_ROUNDING_SLACK * s {
                        return Err(fail(DomainKind::SqrtNegative));
                    }
                    (v.max(0.0).sqrt(), s.sqrt())
                }
                Func::Abs => (v.abs(), s),
            }
        }
        Expr::Bin(op, l, r) => {
            let (a, sa) = eval_scaled(l, x, i)?;
            let (b, sb) = eval_scaled(r, x, i)?;
            match op {
                BinOp::Add => (a + b, sa.max(sb)),
                BinOp::Sub => (a - b, sa.max(sb)),
                BinOp::Mul => (a * b, sa * sb),
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(fail(DomainKind::DivisionByZero));
                    }
                    (a / b, sa / b.abs())
                }
                BinOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(fail(DomainKind::DivisionByZero));
                    }
                    let v = if b.fract() == 0.0 && b.abs() <= 64.0 { a.powi(b as i32) } else { a.powf(b) };
                    (v, v.abs())
                }
            }
        }
    };
    if !v.is_finite() {
        return Err(fail(DomainKind::NonFinite));
    }
    Ok((v, scale.max(v.abs())))
}
