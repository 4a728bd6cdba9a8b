//! Map definition files and their compilation to [`MapSpec`].
//!
//! A definition is a UTF-8 text of `key = value` lines. `#` starts a comment
//! and blank lines are ignored. Keys:
//!
//! | key          | value                                              |
//! |--------------|----------------------------------------------------|
//! | `name`       | map name (required)                                |
//! | `class`      | `countable` or `finite` (required)                 |
//! | `partition`  | `a_i` as an expression in `i`, with `a_0 = 1`      |
//! | `branch`     | branch `i` on `[a_i, a_{i-1})`, in `x` and `i`     |
//! | `derivative` | optional derivative of `branch`                    |
//! | `inverse`    | optional inverse of `branch`; `x` is the image     |
//! | `piece`      | `left, right, forward[, derivative[, inverse]]`    |
//!
//! In a `piece` line the derivative may be left empty (`l, r, f, , inv`).
//!
//! A countable definition uses `partition` and `branch`; a finite one lists
//! one `piece` line per branch (`i` is the 1-based piece number). The two
//! forms cannot be mixed.

use std::sync::Arc;

use thiserror::Error;

use super::expr::{eval_expr, DomainError, Expr, Var};
use super::parser::{parse_expr, SyntaxError};
use crate::map::{Branch, MapClass, MapError, MapSpec, RealFn, Resolution};

/// Relative finite-difference step used when no derivative rule is given.
pub const FD_STEP: f64 = 1e-7;

/// Branches checked for evaluation errors when compiling a countable map.
pub const MAX_CHECKED_BRANCHES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("line {line}: `{key}`: {source}")]
    Syntax {
        line: usize,
        key: String,
        #[source]
        source: SyntaxError,
    },
    #[error("line {line}: expected `key = value`")]
    MalformedLine { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("missing `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: {message}")]
    InvalidValue { line: usize, message: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error("branch {index}: {source}")]
    Branch {
        index: usize,
        #[source]
        source: DomainError,
    },
    #[error("piece {index}: {source}")]
    Piece {
        index: usize,
        #[source]
        source: DomainError,
    },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One explicitly listed branch of a finite map.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceRule {
    pub left: Expr,
    pub right: Expr,
    pub forward: Expr,
    pub derivative: Option<Expr>,
    pub inverse: Option<Expr>,
}

/// Parsed contents of a map definition file.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDefinition {
    pub name: String,
    pub class: MapClass,
    pub partition: Option<Expr>,
    pub branch: Option<Expr>,
    pub derivative: Option<Expr>,
    pub inverse: Option<Expr>,
    pub pieces: Vec<PieceRule>,
}

fn class_name(c: MapClass) -> &'static str {
    match c {
        MapClass::FiniteBranches => "finite",
        MapClass::CountableAccumulatingAtZero => "countable",
    }
}

/// Splits at commas outside parentheses.
fn split_fields(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (p, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..p]);
                start = p + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

impl MapDefinition {
    /// Parses the definition file format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, DslError> {
        let mut name = None;
        let mut class = None;
        let mut partition = None;
        let mut branch = None;
        let mut derivative = None;
        let mut inverse = None;
        let mut pieces = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(DslError::MalformedLine { line });
            };
            let (key, value) = (key.trim(), value.trim());
            let expr = |v: &str| {
                parse_expr(v).map_err(|source| DslError::Syntax { line, key: key.to_string(), source })
            };
            let once = |taken: bool| {
                if taken {
                    Err(DslError::DuplicateKey { line, key: key.to_string() })
                } else {
                    Ok(())
                }
            };
            match key {
                "name" => {
                    once(name.is_some())?;
                    if value.is_empty() {
                        return Err(DslError::InvalidValue { line, message: "empty name".into() });
                    }
                    name = Some(value.to_string());
                }
                "class" => {
                    once(class.is_some())?;
                    class = Some(match value {
                        "countable" => MapClass::CountableAccumulatingAtZero,
                        "finite" => MapClass::FiniteBranches,
                        other => {
                            return Err(DslError::InvalidValue {
                                line,
                                message: format!("class `{other}` (expected countable or finite)"),
                            })
                        }
                    });
                }
                "partition" => {
                    once(partition.is_some())?;
                    partition = Some(expr(value)?);
                }
                "branch" => {
                    once(branch.is_some())?;
                    branch = Some(expr(value)?);
                }
                "derivative" => {
                    once(derivative.is_some())?;
                    derivative = Some(expr(value)?);
                }
                "inverse" => {
                    once(inverse.is_some())?;
                    inverse = Some(expr(value)?);
                }
                "piece" => {
                    let fields = split_fields(value);
                    if !(3..=5).contains(&fields.len()) {
                        return Err(DslError::InvalidValue {
                            line,
                            message: format!("piece needs 3 to 5 fields, found {}", fields.len()),
                        });
                    }
                    // An empty derivative field leaves room for an inverse.
                    let mut parsed = Vec::with_capacity(fields.len());
                    for (n, f) in fields.iter().enumerate() {
                        let f = f.trim();
                        parsed.push(if n == 3 && f.is_empty() && fields.len() == 5 { None } else { Some(expr(f)?) });
                    }
                    let mut it = parsed.into_iter();
                    pieces.push(PieceRule {
                        left: it.next().flatten().expect("3+ fields"),
                        right: it.next().flatten().expect("3+ fields"),
                        forward: it.next().flatten().expect("3+ fields"),
                        derivative: it.next().flatten(),
                        inverse: it.next().flatten(),
                    });
                }
                other => return Err(DslError::UnknownKey { line, key: other.to_string() }),
            }
        }

        let def = MapDefinition {
            name: name.ok_or(DslError::MissingKey("name"))?,
            class: class.ok_or(DslError::MissingKey("class"))?,
            partition,
            branch,
            derivative,
            inverse,
            pieces,
        };
        def.check()?;
        Ok(def)
    }

    /// Checks that exactly one of the two branch forms is present and
    /// matches the class.
    pub fn check(&self) -> Result<(), DslError> {
        let rules = self.partition.is_some() || self.branch.is_some() || self.derivative.is_some() || self.inverse.is_some();
        let listed = !self.pieces.is_empty();
        match (self.class, rules, listed) {
            (_, true, true) => Err(DslError::Inconsistent("both branch rules and pieces given".into())),
            (MapClass::CountableAccumulatingAtZero, _, true) => {
                Err(DslError::Inconsistent("a countable map needs `partition` and `branch`, not pieces".into()))
            }
            (MapClass::FiniteBranches, _, false) => Err(DslError::Inconsistent("a finite map needs `piece` lines".into())),
            (MapClass::CountableAccumulatingAtZero, _, false) => {
                if self.partition.is_none() {
                    return Err(DslError::MissingKey("partition"));
                }
                if self.branch.is_none() {
                    return Err(DslError::MissingKey("branch"));
                }
                if self.partition.as_ref().is_some_and(|p| p.mentions(Var::X)) {
                    return Err(DslError::Inconsistent("`partition` may only depend on `i`".into()));
                }
                Ok(())
            }
            (MapClass::FiniteBranches, false, true) => Ok(()),
        }
    }

    /// Serializes back to the definition file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("name = {}\nclass = {}\n", self.name, class_name(self.class));
        for (key, e) in [
            ("partition", &self.partition),
            ("branch", &self.branch),
            ("derivative", &self.derivative),
            ("inverse", &self.inverse),
        ] {
            if let Some(e) = e {
                out.push_str(&format!("{key} = {e}\n"));
            }
        }
        for p in &self.pieces {
            out.push_str(&format!("piece = {}, {}, {}", p.left, p.right, p.forward));
            match (&p.derivative, &p.inverse) {
                (Some(d), Some(inv)) => out.push_str(&format!(", {d}, {inv}")),
                (Some(d), None) => out.push_str(&format!(", {d}")),
                (None, Some(inv)) => out.push_str(&format!(", , {inv}")),
                (None, None) => {}
            }
            out.push('\n');
        }
        out
    }
}

fn real_fn(e: Expr, i: usize) -> impl Fn(f64) -> Result<f64, DomainError> + Send + Sync + 'static {
    move |x| eval_expr(&e, x, i)
}

/// Central difference with step `FD_STEP · width`, one-sided within a step of
/// either end.
fn finite_difference(f: &(dyn Fn(f64) -> f64 + Send + Sync), left: f64, right: f64, x: f64) -> f64 {
    let h = FD_STEP * (right - left);
    if x - h < left {
        (f(x + h) - f(x)) / h
    } else if x + h > right {
        (f(x) - f(x - h)) / h
    } else {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }
}

/// Builds a branch on `[left, right)` from its rules.
///
/// Evaluation errors inside an already validated branch can only come from
/// points the checks did not visit; the forward map and inverse then yield
/// NaN, which downstream code rejects. A derivative rule that fails at a
/// point (such as `0/0` at an endpoint) falls back to the finite difference.
fn build_branch(
    left: f64,
    right: f64,
    i: usize,
    forward: &Expr,
    derivative: Option<&Expr>,
    inverse: Option<&Expr>,
) -> Result<Branch, MapError> {
    let fwd = real_fn(forward.clone(), i);
    let fwd: RealFn = Arc::new(move |x| fwd(x).unwrap_or(f64::NAN));
    let fd_source = fwd.clone();
    let fd = move |x: f64| finite_difference(&*fd_source, left, right, x);
    let deriv: RealFn = match derivative {
        Some(d) => {
            let d = real_fn(d.clone(), i);
            Arc::new(move |x| d(x).unwrap_or_else(|_| fd(x)))
        }
        None => Arc::new(fd),
    };
    let branch = Branch::new(left, right, fwd, deriv)?;
    Ok(match inverse {
        Some(inv) => {
            let inv = real_fn(inv.clone(), i);
            branch.with_inverse(Arc::new(move |y| inv(y).unwrap_or(f64::NAN)))
        }
        None => branch,
    })
}

/// Evaluates every rule of branch `i` at its endpoints and midpoint (the
/// inverse at the image endpoints and midpoint).
fn check_branch(
    left: f64,
    right: f64,
    i: usize,
    forward: &Expr,
    derivative: Option<&Expr>,
    inverse: Option<&Expr>,
) -> Result<(), DomainError> {
    let mid = 0.5 * (left + right);
    let mut image = [0.0; 3];
    for (slot, x) in image.iter_mut().zip([left, mid, right]) {
        *slot = eval_expr(forward, x, i)?;
    }
    if let Some(d) = derivative {
        eval_expr(d, mid, i)?;
    }
    if let Some(inv) = inverse {
        for y in image {
            eval_expr(inv, y, i)?;
        }
    }
    Ok(())
}

fn constant(e: &Expr, index: usize) -> Result<f64, DslError> {
    eval_expr(e, 0.0, index).map_err(|source| DslError::Piece { index, source })
}

/// Compiles a definition, materializing countable maps to `resolution`.
pub fn compile_map(def: &MapDefinition, resolution: Resolution) -> Result<MapSpec, DslError> {
    def.check()?;
    match def.class {
        MapClass::FiniteBranches => {
            let mut branches = Vec::with_capacity(def.pieces.len());
            for (n, p) in def.pieces.iter().enumerate() {
                let index = n + 1;
                let (left, right) = (constant(&p.left, index)?, constant(&p.right, index)?);
                check_branch(left, right, index, &p.forward, p.derivative.as_ref(), p.inverse.as_ref())
                    .map_err(|source| DslError::Piece { index, source })?;
                branches.push(build_branch(
                    left,
                    right,
                    index,
                    &p.forward,
                    p.derivative.as_ref(),
                    p.inverse.as_ref(),
                )?);
            }
            Ok(MapSpec::finite(def.name.clone(), branches)?)
        }
        MapClass::CountableAccumulatingAtZero => {
            let partition_rule = def.partition.clone().expect("checked");
            let forward = def.branch.clone().expect("checked");
            let (derivative, inverse) = (def.derivative.clone(), def.inverse.clone());

            let rule = partition_rule.clone();
            let partition = move |i: usize| eval_expr(&rule, 0.0, i).unwrap_or(f64::NAN);
            // Surface partition errors with their index before building.
            for i in 0..=8 {
                eval_expr(&partition_rule, 0.0, i).map_err(|source| DslError::Branch { index: i, source })?;
            }
            let family_partition = partition.clone();
            let family = move |i: usize| {
                let (left, right) = (family_partition(i), family_partition(i - 1));
                build_branch(left, right, i, &forward, derivative.as_ref(), inverse.as_ref())
                    .expect("partition points were validated at compile time")
            };
            let spec = MapSpec::countable(def.name.clone(), partition.clone(), family, resolution)?;

            let forward = def.branch.as_ref().expect("checked");
            for i in 1..=spec.materialized().min(MAX_CHECKED_BRANCHES) {
                let (left, right) = (partition(i), partition(i - 1));
                if !(left < right) {
                    return Err(MapError::InvalidBranch { left, right }.into());
                }
                check_branch(left, right, i, forward, def.derivative.as_ref(), def.inverse.as_ref())
                    .map_err(|source| DslError::Branch { index: i, source })?;
            }
            Ok(spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn identity_from_a_single_piece() {
        let def = MapDefinition::parse("name = id\nclass = finite\npiece = 0, 1, x\n").unwrap();
        let map = compile_map(&def, Resolution::default()).unwrap();
        assert_eq!(map.materialized(), 1);
        for x in [0.0, 0.25, 0.999] {
            assert_eq!(map.eval(x).unwrap(), x);
        }
        // Finite-difference derivative of x.
        let b = map.branch(1).unwrap();
        assert!((b.derivative(0.5) - 1.0).abs() < 1e-8);
        assert!((b.derivative(0.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn doubling_from_pieces() {
        let text = "name = doubling\nclass = finite\npiece = 0, 1/2, 2*x\npiece = 1/2, 1, 2*x - 1, 2, (x + 1)/2\n";
        let map = compile_map(&MapDefinition::parse(text).unwrap(), Resolution::default()).unwrap();
        let reference = catalog::doubling();
        for x in [0.1, 0.49, 0.5, 0.75] {
            assert_eq!(map.eval(x).unwrap(), reference.eval(x).unwrap());
        }
    }

    #[test]
    fn shipped_files_compile() {
        let d1 = MapDefinition::parse(catalog::EXAMPLE1_DEFINITION).unwrap();
        let m1 = compile_map(&d1, Resolution::Branches(40)).unwrap();
        assert_eq!(m1.materialized(), 40);
        for i in 0..=40 {
            assert!((m1.partition_point(i) - catalog::example1_partition(i)).abs() <= 1e-15);
        }
        let d2 = MapDefinition::parse(catalog::EXAMPLE2_DEFINITION).unwrap();
        let m2 = compile_map(&d2, Resolution::WidthFloor(1e-6)).unwrap();
        assert_eq!(m2.materialized(), 999);
    }

    #[test]
    fn text_round_trip() {
        for text in [catalog::EXAMPLE1_DEFINITION, catalog::EXAMPLE2_DEFINITION] {
            let def = MapDefinition::parse(text).unwrap();
            assert_eq!(MapDefinition::parse(&def.to_text()).unwrap(), def);
        }
        let def = MapDefinition::parse("name = d\nclass = finite\npiece = 0, 0.5, 2*x, 2\npiece = 0.5, 1, 2*x-1, , (x+1)/2\n").unwrap();
        assert!(def.pieces[1].derivative.is_none() && def.pieces[1].inverse.is_some());
        assert_eq!(MapDefinition::parse(&def.to_text()).unwrap(), def);
    }

    #[test]
    fn structural_errors() {
        let err = |t: &str| MapDefinition::parse(t).unwrap_err();
        assert_eq!(err("class = finite\npiece = 0,1,x"), DslError::MissingKey("name"));
        assert!(matches!(err("name = a\nclass = weird"), DslError::InvalidValue { line: 2, .. }));
        assert!(matches!(err("name = a\nname = b"), DslError::DuplicateKey { line: 2, .. }));
        assert!(matches!(err("name = a\ncolour = red"), DslError::UnknownKey { line: 2, .. }));
        assert!(matches!(err("name = a\njust text"), DslError::MalformedLine { line: 2 }));
        assert!(matches!(
            err("name = a\nclass = countable\npartition = 1/(i+1)\nbranch = x\npiece = 0,1,x"),
            DslError::Inconsistent(_)
        ));
        assert_eq!(err("name = a\nclass = countable\nbranch = x"), DslError::MissingKey("partition"));
        assert!(matches!(err("name = a\nclass = finite\npiece = 0, 1"), DslError::InvalidValue { .. }));
        match err("name = a\nclass = finite\n\n# c\npiece = 0, 1, x +") {
            DslError::Syntax { line, key, source } => {
                assert_eq!((line, key.as_str()), (5, "piece"));
                assert_eq!(source.offset, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn domain_errors_carry_the_branch_index() {
        let text = "name = bad\nclass = countable\npartition = 1/(i+1)\nbranch = sqrt(3 - i) * x\n";
        let def = MapDefinition::parse(text).unwrap();
        match compile_map(&def, Resolution::Branches(10)) {
            Err(DslError::Branch { index, .. }) => assert_eq!(index, 4),
            other => panic!("{other:?}"),
        }
        let text = "name = bad\nclass = finite\npiece = 0, 1, 1/(x - 0.5)\n";
        match compile_map(&MapDefinition::parse(text).unwrap(), Resolution::default()) {
            Err(DslError::Piece { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pieces_must_tile() {
        let text = "name = gap\nclass = finite\npiece = 0, 0.4, x/0.4\npiece = 0.5, 1, 2*x-1\n";
        assert!(matches!(
            compile_map(&MapDefinition::parse(text).unwrap(), Resolution::default()),
            Err(DslError::Map(MapError::InvalidPartition(_)))
        ));
    }
}
