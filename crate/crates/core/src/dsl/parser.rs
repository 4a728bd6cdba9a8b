//! Recursive-descent parser for branch formulas.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' | 'i' | name '(' expr ')' | '(' expr ')'
//! ```

use thiserror::Error;

use super::expr::{BinOp, Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: expected {expected}")]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Num(f64),
    Ident(&'a str),
    Op(u8),
    Open,
    Close,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Token<'a>)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0, peeked: None }
    }

    fn error<T>(&self, offset: usize, expected: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { offset, expected: expected.into() })
    }

    fn lex(&mut self) -> Result<(usize, Token<'a>), SyntaxError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((start, Token::End));
        };
        let token = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(c)
            }
            b'(' => {
                self.pos += 1;
                Token::Open
            }
            b')' => {
                self.pos += 1;
                Token::Close
            }
            b'0'..=b'9' | b'.' => {
                let digits = |p: &mut usize| {
                    let s = *p;
                    while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                        *p += 1;
                    }
                    *p - s
                };
                let mut p = start;
                let mut mantissa = digits(&mut p);
                if p < bytes.len() && bytes[p] == b'.' {
                    p += 1;
                    mantissa += digits(&mut p);
                }
                if mantissa == 0 {
                    return self.error(start, "a digit");
                }
                if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
                    p += 1;
                    if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                        p += 1;
                    }
                    if digits(&mut p) == 0 {
                        return self.error(p, "exponent digits");
                    }
                }
                self.pos = p;
                Token::Num(self.src[start..p].parse().expect("lexed a valid float literal"))
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut p = start;
                while p < bytes.len() && (bytes[p].is_ascii_alphanumeric() || bytes[p] == b'_') {
                    p += 1;
                }
                self.pos = p;
                Token::Ident(&self.src[start..p])
            }
            _ => return self.error(start, "a number, variable, function, operator or parenthesis"),
        };
        Ok((start, token))
    }

    fn peek(&mut self) -> Result<&(usize, Token<'a>), SyntaxError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(self.peeked.as_ref().expect("just filled"))
    }

    fn next(&mut self) -> Result<(usize, Token<'a>), SyntaxError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn peek_op(&mut self, ops: &[u8]) -> Result<Option<u8>, SyntaxError> {
        Ok(match self.peek()? {
            (_, Token::Op(c)) if ops.contains(c) => Some(*c),
            _ => None,
        })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek_op(b"+-")? {
            self.next()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::bin(op, lhs, self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek_op(b"*/")? {
            self.next()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek_op(b"-")?.is_some() {
            self.next()?;
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.atom()?;
        if self.peek_op(b"^")?.is_some() {
            self.next()?;
            return Ok(Expr::bin(BinOp::Pow, base, self.unary()?));
        }
        Ok(base)
    }

    fn close(&mut self) -> Result<(), SyntaxError> {
        match self.next()? {
            (_, Token::Close) => Ok(()),
            (at, _) => self.error(at, "`)`"),
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let (at, token) = self.next()?;
        match token {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Ident("x") => Ok(Expr::Var(Var::X)),
            Token::Ident("i") => Ok(Expr::Var(Var::I)),
            Token::Ident(name) => {
                let Some(func) = Func::lookup(name) else {
                    let known: Vec<&str> = super::expr::FUNCTIONS.iter().map(|(n, _)| *n).collect();
                    return self.error(at, format!("`x`, `i` or a function ({})", known.join(", ")));
                };
                match self.next()? {
                    (_, Token::Open) => {}
                    (at, _) => return self.error(at, format!("`(` after `{name}`")),
                }
                let arg = self.expr()?;
                self.close()?;
                Ok(Expr::call(func, arg))
            }
            Token::Open => {
                let e = self.expr()?;
                self.close()?;
                Ok(e)
            }
            _ => self.error(at, "a number, `x`, `i`, a function call or `(`"),
        }
    }
}

/// Parses a branch formula.
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text);
    if matches!(p.peek()?, (_, Token::End)) {
        return p.error(0, "an expression");
    }
    let e = p.expr()?;
    match p.next()? {
        (_, Token::End) => Ok(e),
        (at, _) => p.error(at, "an operator or end of input"),
    }
}
