//! Line-based rule files and the expression mini-language.
//!
//! ```text
//! # Example: x00 + x01 + x11 over Z_2
//! m=2
//! d=2
//! kind=linear
//! term (0,0) 1
//! term (0,1) 1
//! term (1,1) 1
//! ```
//!
//! Expression rules use `kind=expr` and a single `expr` line. The grammar is
//!
//! ```text
//! sum     := product ('+' product)*
//! product := power ('*' power)*
//! power   := atom ('^' INT)?
//! atom    := INT | 'x' '[' SINT (',' SINT)* ']' | '(' sum ')' | 'floor' '(' sum ',' INT ')'
//! ```
//!
//! The neighborhood is the set of offsets mentioned by the terms or by the
//! expression's variables.

use std::fmt;

use thiserror::Error;

use crate::expr::{CompileError, Expr};
use crate::point::Point;
use crate::rule::{LocalRule, RuleBody, RuleError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown directive {0:?}")]
    UnknownDirective(String),
    #[error("directive {0} given twice")]
    Duplicate(String),
    #[error("missing directive {0}")]
    Missing(&'static str),
    #[error("offset {offset} has {got} coordinates but d={d}")]
    Arity { offset: Point, d: usize, got: usize },
    #[error("{0} lines are not allowed with kind={1}")]
    WrongKind(&'static str, &'static str),
    #[error("floordiv divisor must be positive")]
    ZeroDivisor,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Non-fatal remark produced while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Linear,
    Expr,
}

fn err(line: usize, col: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, col, kind }
}

/// Parses a rule file, discarding warnings.
pub fn parse_rule(text: &str) -> Result<LocalRule, ParseError> {
    parse_rule_with_warnings(text).map(|(r, _)| r)
}

pub fn parse_rule_with_warnings(text: &str) -> Result<(LocalRule, Vec<ParseWarning>), ParseError> {
    let mut m: Option<(u32, usize)> = None;
    let mut d: Option<(usize, usize)> = None;
    let mut kind: Option<(Kind, usize)> = None;
    let mut terms: Vec<(Point, i64, usize, usize)> = Vec::new();
    let mut expr: Option<(Expr, usize)> = None;
    let mut warnings = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim_start();
        if trimmed.trim().is_empty() {
            continue;
        }
        let col0 = body.len() - trimmed.len() + 1;
        let trimmed = trimmed.trim_end();

        if let Some((key, value)) = trimmed.split_once('=').filter(|(k, _)| {
            let k = k.trim();
            !k.is_empty() && k.chars().all(|c| c.is_ascii_alphabetic())
        }) {
            let key = key.trim();
            let vcol = col0 + trimmed.find('=').unwrap() + 1;
            let value = value.trim();
            match key {
                "m" => {
                    if m.is_some() {
                        return Err(err(line, col0, ParseErrorKind::Duplicate("m".into())));
                    }
                    let v = value.parse::<u32>().map_err(|_| {
                        err(line, vcol, ParseErrorKind::Syntax(format!("bad modulus {value:?}")))
                    })?;
                    m = Some((v, line));
                }
                "d" => {
                    if d.is_some() {
                        return Err(err(line, col0, ParseErrorKind::Duplicate("d".into())));
                    }
                    let v = value.parse::<usize>().map_err(|_| {
                        err(line, vcol, ParseErrorKind::Syntax(format!("bad dimension {value:?}")))
                    })?;
                    if v == 0 {
                        return Err(err(line, vcol, ParseErrorKind::Rule(RuleError::ZeroDimension)));
                    }
                    d = Some((v, line));
                }
                "kind" => {
                    if kind.is_some() {
                        return Err(err(line, col0, ParseErrorKind::Duplicate("kind".into())));
                    }
                    let k = match value {
                        "linear" => Kind::Linear,
                        "expr" => Kind::Expr,
                        _ => {
                            return Err(err(
                                line,
                                vcol,
                                ParseErrorKind::Syntax(format!("kind must be linear or expr, got {value:?}")),
                            ))
                        }
                    };
                    kind = Some((k, line));
                }
                other => {
                    return Err(err(line, col0, ParseErrorKind::UnknownDirective(other.to_string())))
                }
            }
            continue;
        }

        let word_len = trimmed
            .find(|c: char| c.is_whitespace() || c == '(')
            .unwrap_or(trimmed.len());
        let word = &trimmed[..word_len];
        let rest_col = col0 + word_len;
        let rest = &trimmed[word_len..];
        match word {
            "term" => {
                let mut lx = Lexer::new(rest, line, rest_col);
                let offset = lx.tuple()?;
                let (coef, ccol) = lx.signed_int()?;
                lx.expect_end()?;
                terms.push((offset, coef, line, ccol));
            }
            "expr" => {
                if expr.is_some() {
                    return Err(err(line, col0, ParseErrorKind::Duplicate("expr".into())));
                }
                let mut lx = Lexer::new(rest, line, rest_col);
                let e = lx.sum()?;
                lx.expect_end()?;
                expr = Some((e, line));
            }
            other => {
                return Err(err(line, col0, ParseErrorKind::UnknownDirective(other.to_string())))
            }
        }
    }

    let (m, _) = m.ok_or(err(1, 1, ParseErrorKind::Missing("m")))?;
    let (d, _) = d.ok_or(err(1, 1, ParseErrorKind::Missing("d")))?;
    let (kind, _) = kind.ok_or(err(1, 1, ParseErrorKind::Missing("kind")))?;
    if m < 2 {
        return Err(err(1, 1, ParseErrorKind::Rule(RuleError::InvalidAlphabet(m))));
    }

    let rule = match kind {
        Kind::Linear => {
            if let Some((_, line)) = expr {
                return Err(err(line, 1, ParseErrorKind::WrongKind("expr", "linear")));
            }
            if terms.is_empty() {
                return Err(err(1, 1, ParseErrorKind::Missing("term")));
            }
            let mut seen = std::collections::BTreeSet::new();
            for (p, c, line, col) in &terms {
                if p.dim() != d {
                    return Err(err(
                        *line,
                        *col,
                        ParseErrorKind::Arity { offset: p.clone(), d, got: p.dim() },
                    ));
                }
                if !seen.insert(p.clone()) {
                    return Err(err(*line, 1, ParseErrorKind::Rule(RuleError::DuplicateOffset(p.clone()))));
                }
                if *c < 0 || *c >= m as i64 {
                    warnings.push(ParseWarning {
                        line: *line,
                        message: format!(
                            "coefficient {c} at {p} reduced mod {m} to {}",
                            c.rem_euclid(m as i64)
                        ),
                    });
                }
            }
            LocalRule::linear(m, d, terms.into_iter().map(|(p, c, _, _)| (p, c)).collect())
                .map_err(|e| err(1, 1, e.into()))?
        }
        Kind::Expr => {
            if let Some((_, _, line, _)) = terms.first() {
                return Err(err(*line, 1, ParseErrorKind::WrongKind("term", "expr")));
            }
            let (e, line) = expr.ok_or(err(1, 1, ParseErrorKind::Missing("expr")))?;
            for v in e.variables() {
                if v.dim() != d {
                    return Err(err(line, 1, ParseErrorKind::Arity { got: v.dim(), offset: v, d }));
                }
            }
            LocalRule::expr(m, d, e, Vec::new()).map_err(|e| {
                let kind = match e {
                    RuleError::Compile(CompileError::ZeroDivisor) => ParseErrorKind::ZeroDivisor,
                    other => ParseErrorKind::Rule(other),
                };
                err(line, 1, kind)
            })?
        }
    };
    Ok((rule, warnings))
}

/// Canonical text form of a rule; parses back to an extensionally equal rule.
pub fn format_rule(rule: &LocalRule) -> String {
    let mut out = format!("m={}\nd={}\n", rule.m(), rule.dim());
    match rule.body() {
        RuleBody::Linear(coeffs) => {
            out.push_str("kind=linear\n");
            for (o, c) in rule.neighborhood().offsets().iter().zip(coeffs) {
                out.push_str(&format!("term {o} {c}\n"));
            }
        }
        RuleBody::Expr(b) => {
            out.push_str("kind=expr\n");
            let used = b.expr().variables();
            let unused: Vec<Expr> = rule
                .neighborhood()
                .offsets()
                .iter()
                .filter(|o| !used.contains(*o))
                .map(|o| Expr::product(vec![Expr::Lit(0), Expr::Var(o.clone())]))
                .collect();
            let e = if unused.is_empty() {
                b.expr().clone()
            } else {
                let mut terms = vec![b.expr().clone()];
                terms.extend(unused);
                Expr::sum(terms)
            };
            out.push_str(&format!("expr {e}\n"));
        }
    }
    out
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str, line: usize, col0: usize) -> Self {
        Lexer { src: s.as_bytes(), pos: 0, line, col0 }
    }

    fn col(&self) -> usize {
        self.col0 + self.pos
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(err(self.line, self.col(), ParseErrorKind::Syntax(msg.into())))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.fail(format!("expected '{}'", c as char))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(c) => self.fail(format!("unexpected '{}'", c as char)),
        }
    }

    fn unsigned(&mut self) -> Result<u64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return self.fail("expected an integer");
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match s.parse::<u64>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.fail(format!("integer {s} too large"))
            }
        }
    }

    fn signed_int(&mut self) -> Result<(i64, usize), ParseError> {
        self.skip_ws();
        let col = self.col();
        let neg = self.eat(b'-');
        let v = self.unsigned()?;
        if v > i64::MAX as u64 {
            return self.fail("integer too large");
        }
        Ok((if neg { -(v as i64) } else { v as i64 }, col))
    }

    fn tuple(&mut self) -> Result<Point, ParseError> {
        self.tuple_with(b'(', b')')
    }

    fn tuple_with(&mut self, open: u8, close: u8) -> Result<Point, ParseError> {
        self.expect(open)?;
        let mut coords = vec![self.signed_int()?.0];
        while self.eat(b',') {
            coords.push(self.signed_int()?.0);
        }
        self.expect(close)?;
        Ok(Point::new(coords))
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let b = kw.as_bytes();
        if self.src[self.pos..].starts_with(b) {
            let after = self.src.get(self.pos + b.len());
            if after.is_none_or(|c| !c.is_ascii_alphanumeric()) {
                self.pos += b.len();
                return true;
            }
        }
        false
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.product()?];
        while self.eat(b'+') {
            terms.push(self.product()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut fs = vec![self.power()?];
        while self.eat(b'*') {
            fs.push(self.power()?);
        }
        Ok(if fs.len() == 1 { fs.pop().unwrap() } else { Expr::Product(fs) })
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let k = self.unsigned()?;
            if k > u32::MAX as u64 {
                return self.fail("exponent too large");
            }
            if self.peek() == Some(b'^') {
                return self.fail("chained powers need parentheses");
            }
            return Ok(Expr::Pow(Box::new(base), k as u32));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => Ok(Expr::Lit(self.unsigned()?)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'-') => self.fail("subtraction and negative literals are not supported"),
            Some(_) if self.keyword("floor") => {
                self.expect(b'(')?;
                let num = self.sum()?;
                self.expect(b',')?;
                let ccol = {
                    self.skip_ws();
                    self.col()
                };
                let c = self.unsigned()?;
                self.expect(b')')?;
                if c == 0 {
                    return Err(err(self.line, ccol, ParseErrorKind::ZeroDivisor));
                }
                Ok(Expr::FloorDiv(Box::new(num), c))
            }
            Some(_) if self.keyword("x") => Ok(Expr::Var(self.tuple_with(b'[', b']')?)),
            Some(c) => self.fail(format!("unexpected '{}'", c as char)),
            None => self.fail("unexpected end of expression"),
        }
    }
}
