//! Recursive-descent parser for factor expressions.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := factor (("*" | "/") factor)*
//! factor  := "-" factor | NUMBER | IDENT | IDENT "(" arglist ")" | "(" expr ")"
//! arglist := expr ("," expr)*
//! ```
//!
//! Infix operators are sugar for `add`, `sub`, `mul` and `safe_div`. A minus
//! directly in front of a number literal folds into a negative constant.

use super::ast::{Arg, Expr};
use super::registry::{OperatorRegistry, ParamKind};
use super::Op;
use crate::error::{SyntaxError, SyntaxErrorKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
    text: String,
}

fn err(kind: SyntaxErrorKind, offset: usize) -> SyntaxError {
    SyntaxError { kind, offset }
}

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        let start = pos;
        let simple = match c {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = simple {
            pos += 1;
            out.push(Token { tok, offset: start, text: src[start..pos].to_string() });
            continue;
        }
        if c.is_ascii_whitespace() {
            pos += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'.' {
                pos += 1;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
            }
            if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                let mut p = pos + 1;
                if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                    p += 1;
                }
                if p < bytes.len() && bytes[p].is_ascii_digit() {
                    while p < bytes.len() && bytes[p].is_ascii_digit() {
                        p += 1;
                    }
                    pos = p;
                }
            }
            let text = &src[start..pos];
            let value: f64 = text.parse().map_err(|_| {
                err(SyntaxErrorKind::Lexical(format!("bad number `{text}`")), start)
            })?;
            if !value.is_finite() {
                return Err(err(SyntaxErrorKind::Lexical(format!("number `{text}` overflows")), start));
            }
            out.push(Token { tok: Tok::Number(value), offset: start, text: text.to_string() });
        } else if c.is_ascii_lowercase() || c == b'_' {
            while pos < bytes.len()
                && (bytes[pos].is_ascii_lowercase() || bytes[pos].is_ascii_digit() || bytes[pos] == b'_')
            {
                pos += 1;
            }
            let text = &src[start..pos];
            out.push(Token { tok: Tok::Ident(text.to_string()), offset: start, text: text.to_string() });
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(err(SyntaxErrorKind::Lexical(format!("unexpected character `{ch}`")), start));
        }
    }
    Ok(out)
}

/// Parsed argument and the byte offset where it started.
struct RawArg {
    expr: Expr,
    offset: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: usize,
    depth: usize,
}

const MAX_NESTING: usize = 256;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => Op::Add,
                Some(Tok::Minus) => Op::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => Op::Mul,
                Some(Tok::Slash) => Op::SafeDiv,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(err(SyntaxErrorKind::BadParameter("nesting too deep".into()), self.here()));
        }
        let out = self.factor_inner();
        self.depth -= 1;
        out
    }

    fn factor_inner(&mut self) -> Result<Expr, SyntaxError> {
        let Some(tok) = self.next() else {
            return Err(err(SyntaxErrorKind::UnexpectedEnd, self.end));
        };
        match tok.tok {
            Tok::Minus => {
                if let Some(Tok::Number(v)) = self.peek().map(|t| t.tok.clone()) {
                    self.pos += 1;
                    return Ok(Expr::Const(-v));
                }
                let inner = self.factor()?;
                Ok(Expr::unary(Op::Neg, inner))
            }
            Tok::Number(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token { tok: Tok::RParen, .. }) => Ok(inner),
                    None => Err(err(SyntaxErrorKind::UnbalancedParen, self.end)),
                    Some(t) => Err(err(SyntaxErrorKind::UnexpectedToken(t.text), t.offset)),
                }
            }
            Tok::Ident(name) => {
                if !matches!(self.peek().map(|t| &t.tok), Some(Tok::LParen)) {
                    return Ok(Expr::Field(name));
                }
                let spec = OperatorRegistry::global()
                    .lookup(&name)
                    .ok_or_else(|| err(SyntaxErrorKind::UnknownOperator(name.clone()), tok.offset))?;
                self.pos += 1;
                let raw = self.arglist()?;
                if raw.len() != spec.arity() {
                    return Err(err(
                        SyntaxErrorKind::ArityMismatch {
                            op: name,
                            expected: spec.arity(),
                            found: raw.len(),
                        },
                        tok.offset,
                    ));
                }
                let mut args = Vec::with_capacity(raw.len());
                for (kind, arg) in spec.params.iter().zip(raw) {
                    args.push(convert_arg(*kind, arg)?);
                }
                Ok(Expr::Call(spec.op, args))
            }
            Tok::RParen => Err(err(SyntaxErrorKind::UnbalancedParen, tok.offset)),
            _ => Err(err(SyntaxErrorKind::UnexpectedToken(tok.text), tok.offset)),
        }
    }

    fn arglist(&mut self) -> Result<Vec<RawArg>, SyntaxError> {
        let mut out = Vec::new();
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::RParen)) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            let offset = self.here();
            let expr = self.expr()?;
            out.push(RawArg { expr, offset });
            match self.next() {
                Some(Token { tok: Tok::Comma, .. }) => continue,
                Some(Token { tok: Tok::RParen, .. }) => return Ok(out),
                None => return Err(err(SyntaxErrorKind::UnbalancedParen, self.end)),
                Some(t) => return Err(err(SyntaxErrorKind::UnexpectedToken(t.text), t.offset)),
            }
        }
    }
}

fn convert_arg(kind: ParamKind, raw: RawArg) -> Result<Arg, SyntaxError> {
    let bad = |msg: &str| err(SyntaxErrorKind::BadParameter(msg.to_string()), raw.offset);
    match kind {
        ParamKind::Series => Ok(Arg::Expr(raw.expr)),
        ParamKind::Window => match raw.expr {
            Expr::Const(v) if v.fract() == 0.0 => {
                if v < 2.0 {
                    Err(err(SyntaxErrorKind::WindowTooSmall(v as i64), raw.offset))
                } else if v > 1e6 {
                    Err(bad("window too large"))
                } else {
                    Ok(Arg::Window(v as usize))
                }
            }
            _ => Err(bad("window must be an integer literal")),
        },
        ParamKind::Group => match raw.expr {
            Expr::Field(name) => Ok(Arg::Group(name)),
            _ => Err(bad("group parameter must name a field")),
        },
        ParamKind::Fraction => match raw.expr {
            Expr::Const(v) if (0.0..0.5).contains(&v) => Ok(Arg::Fraction(v)),
            _ => Err(bad("fraction must be a literal in [0, 0.5)")),
        },
    }
}

/// Parse expression text into a tree, validating operators, arity and parameter kinds.
pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), depth: 0 };
    let e = p.expr()?;
    match p.next() {
        None => Ok(e),
        Some(Token { tok: Tok::RParen, offset, .. }) => Err(err(SyntaxErrorKind::UnbalancedParen, offset)),
        Some(t) => Err(err(SyntaxErrorKind::UnexpectedToken(t.text), t.offset)),
    }
}
