//! A small formula language for defining branch families in text files.
//!
//! ```
//! use ulam_acim::dsl::{eval_expr, parse_expr};
//!
//! let branch = parse_expr("1/((2*i+1)/(i*(i+1)) - x) - i").unwrap();
//! assert_eq!(eval_expr(&branch, 0.5, 1).unwrap(), 0.0);
//! ```

mod definition;
mod expr;
mod parser;

pub use definition::{compile_map, DslError, MapDefinition, PieceRule, FD_STEP, MAX_CHECKED_BRANCHES};
pub use expr::{eval_expr, BinOp, DomainError, DomainKind, Expr, Func, Var, FUNCTIONS};
pub use parser::{parse_expr, SyntaxError};
