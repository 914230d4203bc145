//! The textual description language: parser, canonical printer, runner and
//! machine-readable reports.
//!
//! Grammar (one declaration or command per statement, `#` comments):
//!
//! ```text
//! space NAME dim N gens [(x) -> (abs(x)), ...]
//! bundle NAME base VAR cells [(-inf, 0), {0}, (0, inf)] fibre N gens [(v) -> (x*abs(v)), ...]
//! glue NAME = B1 ~ B2 on [CELL, ...] via f = EXPR inv EXPR lift [CELL: [[E, ...], ...], ...]
//! metric NAME on BUNDLE [CELL: [[E, ...], ...], ...]        # `all:` applies to every cell
//! section NAME on BUNDLE [CELL: (E, ...), ...]
//! dual NAME | profile NAME | glue NAME | check-metric NAME | exists NAME
//! induce-metric GLUING M1 M2 | dual-metric NAME | commute-tensor G1 G2 | report
//! ```
//!
//! Expressions use variables `[a-z][a-z0-9]*`, integer and `p/q` literals,
//! `+ - * / ^`, `abs(v)` of a single variable, and parentheses. Parsing is
//! exact; printing emits the canonical normal form, so parse-print-parse is
//! the identity on canonical documents.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{Bundle, CellKind, ChartId, Endpoint, FibreGen};
use crate::expr::{AbsPoly, RatExpr, SignContext, Var};
use crate::glue::{
    glue_bundles, BaseGluing, BundleGluing, GluedBundle, RegionTag, SectionData,
};
use crate::linalg::ExprMatrix;
use crate::metric::{
    compat_check, dual_metric, existence_check, glue_metrics, glue_metrics_commutative,
    is_pseudometric, is_pseudometric_glued, metrics_coincide, ChartMetric, Existence,
    MetricVerdict,
};
use crate::rat::{rat_display, rat_parse, Rat};
use crate::space::{GeneratedSpace, GeneratorPlot, PsdStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unresolved reference: {0}")]
    Unresolved(String),
    #[error("duplicate name: {0}")]
    Duplicate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("semantic error: {0}")]
    Semantic(String),
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Sym(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            '#' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
                line += 1;
                column = 1;
            }
            'a'..='z' => {
                let start = column;
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_lowercase() || c.is_ascii_digit() {
                        s.push(c);
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                out.push(Token {
                    tok: Tok::Ident(s),
                    line,
                    column: start,
                });
            }
            '0'..='9' => {
                let start = column;
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                out.push(Token {
                    tok: Tok::Int(s),
                    line,
                    column: start,
                });
            }
            '-' => {
                let start = column;
                chars.next();
                column += 1;
                if chars.peek() == Some(&'>') {
                    chars.next();
                    column += 1;
                    out.push(Token {
                        tok: Tok::Arrow,
                        line,
                        column: start,
                    });
                } else {
                    out.push(Token {
                        tok: Tok::Sym('-'),
                        line,
                        column: start,
                    });
                }
            }
            '(' | ')' | '[' | ']' | '{' | '}' | ',' | ':' | '=' | '~' | '+' | '*' | '/' | '^' => {
                out.push(Token {
                    tok: Tok::Sym(c),
                    line,
                    column,
                });
                chars.next();
                column += 1;
            }
            other => {
                return Err(DslError::Parse {
                    line,
                    column,
                    message: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

// --------------------------------------------------------------- the AST

/// Cell selector in metric and section declarations.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSel {
    All,
    One(CellKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceDecl {
    pub name: String,
    pub dim: usize,
    pub gens: Vec<(Vec<Var>, Vec<AbsPoly>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleDecl {
    pub name: String,
    pub base_var: Var,
    pub cells: Vec<CellKind>,
    pub fibre_dim: usize,
    pub gens: Vec<(Vec<Var>, Vec<RatExpr>)>,
}

/// Lift matrices by domain cell, as parsed rows.
pub type LiftRows = Vec<(CellKind, Vec<Vec<RatExpr>>)>;

/// One parsed generator: domain variables and component expressions.
pub type GenRows = (Vec<Var>, Vec<RatExpr>);

#[derive(Debug, Clone, PartialEq)]
pub struct GluingDecl {
    pub name: String,
    pub first: String,
    pub second: String,
    pub domain: Vec<CellKind>,
    pub map: RatExpr,
    pub inverse: Option<RatExpr>,
    pub lift: Option<LiftRows>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDecl {
    pub name: String,
    pub bundle: String,
    pub pieces: Vec<(CellSel, Vec<Vec<RatExpr>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionDecl {
    pub name: String,
    pub bundle: String,
    pub pieces: Vec<(CellSel, Vec<RatExpr>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Dual(String),
    Profile(String),
    Glue(String),
    CheckMetric(String),
    InduceMetric(String, String, String),
    Exists(String),
    DualMetric(String),
    CommuteTensor(String, String),
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Space(SpaceDecl),
    Bundle(BundleDecl),
    Gluing(GluingDecl),
    Metric(MetricDecl),
    Section(SectionDecl),
    Command(Command),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub items: Vec<Item>,
}

const RESERVED: &[&str] = &[
    "space", "bundle", "glue", "metric", "section", "dim", "gens", "base", "cells", "fibre",
    "on", "via", "inv", "lift", "dual", "profile", "check", "induce", "exists", "commute",
    "report", "all", "inf", "abs",
];

// -------------------------------------------------------------- parsing

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, DslError> {
        let (line, column) = self
            .tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map(|t| (t.line, t.column))
            .unwrap_or((0, 0));
        Err(DslError::Parse {
            line,
            column,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), DslError> {
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            other => {
                self.pos = self.pos.saturating_sub(usize::from(other.is_some()));
                self.err(format!("expected {c:?}"))
            }
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.next() {
            Some(Tok::Ident(s)) if s == kw => Ok(()),
            other => {
                self.pos = self.pos.saturating_sub(usize::from(other.is_some()));
                self.err(format!("expected keyword {kw:?}"))
            }
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected an identifier")
            }
        }
    }

    fn name(&mut self) -> Result<String, DslError> {
        let s = self.ident()?;
        if RESERVED.contains(&s.as_str()) {
            self.pos -= 1;
            return self.err(format!("{s:?} is a reserved word"));
        }
        Ok(s)
    }

    fn natural(&mut self) -> Result<usize, DslError> {
        match self.next() {
            Some(Tok::Int(s)) => s.parse().map_err(|_| DslError::Parse {
                line: 0,
                column: 0,
                message: "number too large".into(),
            }),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected a number")
            }
        }
    }

    /// Signed rational literal: used for cell endpoints.
    fn rational(&mut self) -> Result<Rat, DslError> {
        let mut s = String::new();
        if self.peek() == Some(&Tok::Sym('-')) {
            self.next();
            s.push('-');
        }
        match self.next() {
            Some(Tok::Int(n)) => s.push_str(&n),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected a rational number");
            }
        }
        if self.peek() == Some(&Tok::Sym('/')) {
            self.next();
            match self.next() {
                Some(Tok::Int(d)) => {
                    s.push('/');
                    s.push_str(&d);
                }
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected a denominator");
                }
            }
        }
        rat_parse(&s).ok_or(DslError::Parse {
            line: 0,
            column: 0,
            message: format!("bad rational literal {s}"),
        })
    }

    fn endpoint(&mut self) -> Result<Endpoint, DslError> {
        if self.peek() == Some(&Tok::Sym('-')) {
            // -inf or a negative rational
            if let Some(Tok::Ident(s)) = self.tokens.get(self.pos + 1).map(|t| &t.tok) {
                if s == "inf" {
                    self.next();
                    self.next();
                    return Ok(Endpoint::NegInf);
                }
            }
            return Ok(Endpoint::Finite(self.rational()?));
        }
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == "inf" {
                self.next();
                return Ok(Endpoint::PosInf);
            }
        }
        Ok(Endpoint::Finite(self.rational()?))
    }

    fn cell(&mut self) -> Result<CellKind, DslError> {
        match self.peek() {
            Some(Tok::Sym('{')) => {
                self.next();
                let q = self.rational()?;
                self.expect_sym('}')?;
                Ok(CellKind::Point(q))
            }
            Some(Tok::Sym('(')) => {
                self.next();
                let lo = self.endpoint()?;
                self.expect_sym(',')?;
                let hi = self.endpoint()?;
                self.expect_sym(')')?;
                Ok(CellKind::Interval(lo, hi))
            }
            _ => self.err("expected a cell: {q} or (lo, hi)"),
        }
    }

    fn cell_list(&mut self) -> Result<Vec<CellKind>, DslError> {
        self.expect_sym('[')?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::Sym(']')) {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.cell()?);
            match self.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(']')) => break,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected ',' or ']' in cell list");
                }
            }
        }
        Ok(out)
    }

    // expression grammar: expr := term (('+'|'-') term)*
    //                     term := factor (('*'|'/') factor)*
    //                     factor := atom ('^' nat)?
    //                     atom := int | ident | abs(ident) | (expr) | -atom
    fn expr(&mut self) -> Result<RatExpr, DslError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('+')) => {
                    self.next();
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Sym('-')) => {
                    self.next();
                    acc = acc.sub(&self.term()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<RatExpr, DslError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('*')) => {
                    self.next();
                    acc = acc.mul(&self.factor()?);
                }
                Some(Tok::Sym('/')) => {
                    self.next();
                    let rhs = self.factor()?;
                    acc = acc
                        .div(&rhs, &SignContext::empty())
                        .map_err(|e| DslError::Semantic(e.to_string()))
                        .or_else(|_| {
                            // polynomial denominators are fine; abs factors
                            // and zero denominators are class errors
                            RatExpr::new(
                                acc.num().mul(rhs.den()),
                                acc.den().mul(rhs.num()),
                            )
                            .map_err(|e| DslError::Semantic(e.to_string()))
                        })?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<RatExpr, DslError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Sym('^')) {
            self.next();
            let n = self.natural()?;
            let mut acc = RatExpr::one();
            for _ in 0..n {
                acc = acc.mul(&base);
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<RatExpr, DslError> {
        match self.next() {
            Some(Tok::Int(s)) => {
                let q = rat_parse(&s).ok_or(DslError::Parse {
                    line: 0,
                    column: 0,
                    message: "bad integer".into(),
                })?;
                Ok(RatExpr::constant(q))
            }
            Some(Tok::Ident(s)) if s == "abs" => {
                self.expect_sym('(')?;
                let inner = self.ident()?;
                if RESERVED.contains(&inner.as_str()) {
                    self.pos -= 1;
                    return self.err("abs takes a single variable");
                }
                self.expect_sym(')')?;
                Ok(RatExpr::from_poly(AbsPoly::abs_var(&Var::new(inner))))
            }
            Some(Tok::Ident(s)) => {
                if RESERVED.contains(&s.as_str()) {
                    self.pos -= 1;
                    return self.err(format!("unexpected keyword {s:?} in expression"));
                }
                Ok(RatExpr::var(&Var::new(s)))
            }
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Some(Tok::Sym('-')) => Ok(self.atom()?.neg()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected an expression")
            }
        }
    }

    fn var_tuple(&mut self) -> Result<Vec<Var>, DslError> {
        self.expect_sym('(')?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::Sym(')')) {
            self.next();
            return Ok(out);
        }
        loop {
            let v = self.name()?;
            out.push(Var::new(v));
            match self.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(')')) => break,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected ',' or ')' in variable tuple");
                }
            }
        }
        Ok(out)
    }

    fn expr_tuple(&mut self) -> Result<Vec<RatExpr>, DslError> {
        self.expect_sym('(')?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::Sym(')')) {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            match self.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(')')) => break,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected ',' or ')' in expression tuple");
                }
            }
        }
        Ok(out)
    }

    fn gen_list(&mut self) -> Result<Vec<GenRows>, DslError> {
        self.expect_sym('[')?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::Sym(']')) {
            self.next();
            return Ok(out);
        }
        loop {
            let vars = self.var_tuple()?;
            match self.next() {
                Some(Tok::Arrow) => {}
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected '->' in generator");
                }
            }
            let comps = self.expr_tuple()?;
            out.push((vars, comps));
            match self.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(']')) => break,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected ',' or ']' in generator list");
                }
            }
        }
        Ok(out)
    }

    fn matrix(&mut self) -> Result<Vec<Vec<RatExpr>>, DslError> {
        self.expect_sym('[')?;
        let mut rows = Vec::new();
        if self.peek() == Some(&Tok::Sym(']')) {
            self.next();
            return Ok(rows);
        }
        loop {
            self.expect_sym('[')?;
            let mut row = Vec::new();
            if self.peek() == Some(&Tok::Sym(']')) {
                self.next();
            } else {
                loop {
                    row.push(self.expr()?);
                    match self.next() {
                        Some(Tok::Sym(',')) => continue,
                        Some(Tok::Sym(']')) => break,
                        _ => {
                            self.pos = self.pos.saturating_sub(1);
                            return self.err("expected ',' or ']' in matrix row");
                        }
                    }
                }
            }
            rows.push(row);
            match self.next() {
                Some(Tok::Sym(',')) => continue,
                Some(Tok::Sym(']')) => break,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected ',' or ']' in matrix");
                }
            }
        }
        Ok(rows)
    }

    fn cell_sel(&mut self) -> Result<CellSel, DslError> {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == "all" {
                self.next();
                return Ok(CellSel::All);
            }
        }
        Ok(CellSel::One(self.cell()?))
    }

    fn item(&mut self) -> Result<Item, DslError> {
        let kw = self.ident()?;
        match kw.as_str() {
            "space" => {
                let name = self.name()?;
                self.expect_keyword("dim")?;
                let dim = self.natural()?;
                self.expect_keyword("gens")?;
                let gens = self.gen_list()?;
                let mut poly_gens = Vec::new();
                for (vars, comps) in gens {
                    let mut polys = Vec::new();
                    for c in comps {
                        let p = c.is_polynomial().cloned().ok_or_else(|| {
                            DslError::Semantic(format!(
                                "space generators must be polynomial, got {c}"
                            ))
                        })?;
                        polys.push(p);
                    }
                    poly_gens.push((vars, polys));
                }
                Ok(Item::Space(SpaceDecl {
                    name,
                    dim,
                    gens: poly_gens,
                }))
            }
            "bundle" => {
                let name = self.name()?;
                self.expect_keyword("base")?;
                let base_var = Var::new(self.name()?);
                self.expect_keyword("cells")?;
                let cells = self.cell_list()?;
                self.expect_keyword("fibre")?;
                let fibre_dim = self.natural()?;
                self.expect_keyword("gens")?;
                let gens = self.gen_list()?;
                Ok(Item::Bundle(BundleDecl {
                    name,
                    base_var,
                    cells,
                    fibre_dim,
                    gens,
                }))
            }
            "glue" => {
                let name = self.name()?;
                // declaration continues with '='; otherwise the command form
                if self.peek() != Some(&Tok::Sym('=')) {
                    return Ok(Item::Command(Command::Glue(name)));
                }
                self.expect_sym('=')?;
                let first = self.name()?;
                self.expect_sym('~')?;
                let second = self.name()?;
                self.expect_keyword("on")?;
                let domain = self.cell_list()?;
                self.expect_keyword("via")?;
                // literal "f = EXPR"
                let f = self.ident()?;
                if f != "f" {
                    self.pos -= 1;
                    return self.err("expected 'f =' after 'via'");
                }
                self.expect_sym('=')?;
                let map = self.expr()?;
                let inverse = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "inv") {
                    self.next();
                    Some(self.expr()?)
                } else {
                    None
                };
                let lift = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "lift") {
                    self.next();
                    self.expect_sym('[')?;
                    let mut entries = Vec::new();
                    if self.peek() == Some(&Tok::Sym(']')) {
                        self.next();
                    } else {
                        loop {
                            let cell = self.cell()?;
                            self.expect_sym(':')?;
                            let m = self.matrix()?;
                            entries.push((cell, m));
                            match self.next() {
                                Some(Tok::Sym(',')) => continue,
                                Some(Tok::Sym(']')) => break,
                                _ => {
                                    self.pos = self.pos.saturating_sub(1);
                                    return self.err("expected ',' or ']' in lift list");
                                }
                            }
                        }
                    }
                    Some(entries)
                } else {
                    None
                };
                Ok(Item::Gluing(GluingDecl {
                    name,
                    first,
                    second,
                    domain,
                    map,
                    inverse,
                    lift,
                }))
            }
            "metric" => {
                let name = self.name()?;
                self.expect_keyword("on")?;
                let bundle = self.name()?;
                self.expect_sym('[')?;
                let mut pieces = Vec::new();
                if self.peek() == Some(&Tok::Sym(']')) {
                    self.next();
                } else {
                    loop {
                        let sel = self.cell_sel()?;
                        self.expect_sym(':')?;
                        let m = self.matrix()?;
                        pieces.push((sel, m));
                        match self.next() {
                            Some(Tok::Sym(',')) => continue,
                            Some(Tok::Sym(']')) => break,
                            _ => {
                                self.pos = self.pos.saturating_sub(1);
                                return self.err("expected ',' or ']' in metric pieces");
                            }
                        }
                    }
                }
                Ok(Item::Metric(MetricDecl {
                    name,
                    bundle,
                    pieces,
                }))
            }
            "section" => {
                let name = self.name()?;
                self.expect_keyword("on")?;
                let bundle = self.name()?;
                self.expect_sym('[')?;
                let mut pieces = Vec::new();
                if self.peek() == Some(&Tok::Sym(']')) {
                    self.next();
                } else {
                    loop {
                        let sel = self.cell_sel()?;
                        self.expect_sym(':')?;
                        let comps = self.expr_tuple()?;
                        pieces.push((sel, comps));
                        match self.next() {
                            Some(Tok::Sym(',')) => continue,
                            Some(Tok::Sym(']')) => break,
                            _ => {
                                self.pos = self.pos.saturating_sub(1);
                                return self.err("expected ',' or ']' in section pieces");
                            }
                        }
                    }
                }
                Ok(Item::Section(SectionDecl {
                    name,
                    bundle,
                    pieces,
                }))
            }
            "dual" => {
                // `dual NAME` or `dual-metric NAME`
                if self.peek() == Some(&Tok::Sym('-')) {
                    self.next();
                    self.expect_keyword("metric")?;
                    Ok(Item::Command(Command::DualMetric(self.name()?)))
                } else {
                    Ok(Item::Command(Command::Dual(self.name()?)))
                }
            }
            "profile" => Ok(Item::Command(Command::Profile(self.name()?))),
            "check" => {
                self.expect_sym('-')?;
                self.expect_keyword("metric")?;
                Ok(Item::Command(Command::CheckMetric(self.name()?)))
            }
            "induce" => {
                self.expect_sym('-')?;
                self.expect_keyword("metric")?;
                let g = self.name()?;
                let m1 = self.name()?;
                let m2 = self.name()?;
                Ok(Item::Command(Command::InduceMetric(g, m1, m2)))
            }
            "exists" => Ok(Item::Command(Command::Exists(self.name()?))),
            "commute" => {
                self.expect_sym('-')?;
                self.expect_keyword("tensor")?;
                let a = self.name()?;
                let b = self.name()?;
                Ok(Item::Command(Command::CommuteTensor(a, b)))
            }
            "report" => Ok(Item::Command(Command::Report)),
            other => {
                self.pos -= 1;
                self.err(format!("unknown declaration or command {other:?}"))
            }
        }
    }
}

/// Parses a document.
pub fn parse(text: &str) -> Result<Document, DslError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    while parser.peek().is_some() {
        items.push(parser.item()?);
    }
    let doc = Document { items };
    check_names(&doc)?;
    Ok(doc)
}

fn check_names(doc: &Document) -> Result<(), DslError> {
    let mut seen = Vec::new();
    for item in &doc.items {
        let name = match item {
            Item::Space(d) => Some(&d.name),
            Item::Bundle(d) => Some(&d.name),
            Item::Gluing(d) => Some(&d.name),
            Item::Metric(d) => Some(&d.name),
            Item::Section(d) => Some(&d.name),
            Item::Command(_) => None,
        };
        if let Some(n) = name {
            if seen.contains(&n) {
                return Err(DslError::Duplicate(n.clone()));
            }
            seen.push(n);
        }
    }
    Ok(())
}

// ------------------------------------------------------------- printing

fn print_cell(c: &CellKind) -> String {
    format!("{c}")
}

fn print_gens<E: fmt::Display>(gens: &[(Vec<Var>, Vec<E>)]) -> String {
    let items: Vec<String> = gens
        .iter()
        .map(|(vars, comps)| {
            let vs: Vec<String> = vars.iter().map(|v| v.name().to_string()).collect();
            let cs: Vec<String> = comps.iter().map(|c| format!("{c}")).collect();
            format!("({}) -> ({})", vs.join(", "), cs.join(", "))
        })
        .collect();
    format!("[{}]", items.join(", "))
}

fn print_matrix(m: &[Vec<RatExpr>]) -> String {
    let rows: Vec<String> = m
        .iter()
        .map(|row| {
            let entries: Vec<String> = row.iter().map(|e| format!("{e}")).collect();
            format!("[{}]", entries.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn print_sel(sel: &CellSel) -> String {
    match sel {
        CellSel::All => "all".into(),
        CellSel::One(c) => print_cell(c),
    }
}

/// Canonical printer; `parse(print(doc)) == doc` on parsed documents.
pub fn print(doc: &Document) -> String {
    let mut out = String::new();
    for item in &doc.items {
        let line = match item {
            Item::Space(d) => format!(
                "space {} dim {} gens {}",
                d.name,
                d.dim,
                print_gens(&d.gens)
            ),
            Item::Bundle(d) => {
                let cells: Vec<String> = d.cells.iter().map(print_cell).collect();
                format!(
                    "bundle {} base {} cells [{}] fibre {} gens {}",
                    d.name,
                    d.base_var,
                    cells.join(", "),
                    d.fibre_dim,
                    print_gens(&d.gens)
                )
            }
            Item::Gluing(d) => {
                let cells: Vec<String> = d.domain.iter().map(print_cell).collect();
                let mut s = format!(
                    "glue {} = {} ~ {} on [{}] via f = {}",
                    d.name,
                    d.first,
                    d.second,
                    cells.join(", "),
                    d.map
                );
                if let Some(inv) = &d.inverse {
                    s.push_str(&format!(" inv {inv}"));
                }
                if let Some(lift) = &d.lift {
                    let entries: Vec<String> = lift
                        .iter()
                        .map(|(c, m)| format!("{}: {}", print_cell(c), print_matrix(m)))
                        .collect();
                    s.push_str(&format!(" lift [{}]", entries.join(", ")));
                }
                s
            }
            Item::Metric(d) => {
                let pieces: Vec<String> = d
                    .pieces
                    .iter()
                    .map(|(sel, m)| format!("{}: {}", print_sel(sel), print_matrix(m)))
                    .collect();
                format!("metric {} on {} [{}]", d.name, d.bundle, pieces.join(", "))
            }
            Item::Section(d) => {
                let pieces: Vec<String> = d
                    .pieces
                    .iter()
                    .map(|(sel, comps)| {
                        let cs: Vec<String> = comps.iter().map(|c| format!("{c}")).collect();
                        format!("{}: ({})", print_sel(sel), cs.join(", "))
                    })
                    .collect();
                format!(
                    "section {} on {} [{}]",
                    d.name,
                    d.bundle,
                    pieces.join(", ")
                )
            }
            Item::Command(c) => match c {
                Command::Dual(n) => format!("dual {n}"),
                Command::Profile(n) => format!("profile {n}"),
                Command::Glue(n) => format!("glue {n}"),
                Command::CheckMetric(n) => format!("check-metric {n}"),
                Command::InduceMetric(g, a, b) => format!("induce-metric {g} {a} {b}"),
                Command::Exists(n) => format!("exists {n}"),
                Command::DualMetric(n) => format!("dual-metric {n}"),
                Command::CommuteTensor(a, b) => format!("commute-tensor {a} {b}"),
                Command::Report => "report".into(),
            },
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// `parse(print(doc))`: the identity on canonical documents.
pub fn round_trip(doc: &Document) -> Result<Document, DslError> {
    parse(&print(doc))
}

// -------------------------------------------------------------- running

/// Machine-readable result of running a document.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub commands: Vec<CommandReport>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CommandReport {
    pub command: String,
    pub ok: bool,
    pub details: serde_json::Value,
}

enum Resolved {
    Space(GeneratedSpace),
    Bundle(Bundle),
    Gluing(GluingDecl, Box<GluedBundle>),
    Metric(String, ChartMetric),
    Section(String, SectionData),
}

/// Executes the document's commands in order against the primitive
/// modules. Sampling is driven by the seed; reports are byte-identical
/// across repeated runs.
pub fn run(doc: &Document, seed: u64) -> Result<Report, DslError> {
    let mut env: BTreeMap<String, Resolved> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut commands = Vec::new();
    let psd_samples = 50usize;

    for item in &doc.items {
        match item {
            Item::Space(d) => {
                let gens = d
                    .gens
                    .iter()
                    .map(|(vars, comps)| GeneratorPlot::new(vars.clone(), comps.clone()))
                    .collect();
                for (_, comps) in &d.gens {
                    if comps.len() != d.dim {
                        return Err(DslError::Dimension(format!(
                            "space {}: generator has {} components, dim is {}",
                            d.name,
                            comps.len(),
                            d.dim
                        )));
                    }
                }
                env.insert(
                    d.name.clone(),
                    Resolved::Space(GeneratedSpace::new(d.dim, gens, d.name.clone())),
                );
                order.push(d.name.clone());
            }
            Item::Bundle(d) => {
                for (_, comps) in &d.gens {
                    if comps.len() != d.fibre_dim {
                        return Err(DslError::Dimension(format!(
                            "bundle {}: generator has {} components, fibre is {}",
                            d.name,
                            comps.len(),
                            d.fibre_dim
                        )));
                    }
                }
                let gens = d
                    .gens
                    .iter()
                    .map(|(vars, comps)| FibreGen::new(vars.clone(), comps.clone()))
                    .collect();
                let bundle = Bundle::new(
                    ChartId::new(d.base_var.name()),
                    d.base_var.clone(),
                    d.cells.clone(),
                    d.fibre_dim,
                    gens,
                    d.name.clone(),
                )
                .map_err(|e| DslError::Semantic(e.to_string()))?;
                env.insert(d.name.clone(), Resolved::Bundle(bundle));
                order.push(d.name.clone());
            }
            Item::Gluing(d) => {
                let first = lookup_bundle(&env, &d.first)?.clone();
                let second = lookup_bundle(&env, &d.second)?.clone();
                let base = BaseGluing::new(
                    first.base_var.name(),
                    second.base_var.name(),
                    d.domain.clone(),
                    d.map.clone(),
                    d.inverse.clone(),
                );
                let lift = match &d.lift {
                    Some(entries) => entries
                        .iter()
                        .map(|(c, m)| {
                            let rows = m.len();
                            let cols = m.first().map(|r| r.len()).unwrap_or(0);
                            (
                                c.clone(),
                                ExprMatrix::new(
                                    rows,
                                    cols,
                                    m.iter().flatten().cloned().collect(),
                                ),
                            )
                        })
                        .collect(),
                    None => {
                        if first.fibre_dim * second.fibre_dim != 0 {
                            return Err(DslError::Semantic(format!(
                                "gluing {}: lift required for positive fibre dimensions",
                                d.name
                            )));
                        }
                        d.domain
                            .iter()
                            .map(|c| {
                                (
                                    c.clone(),
                                    ExprMatrix::zeros(second.fibre_dim, first.fibre_dim),
                                )
                            })
                            .collect()
                    }
                };
                let gluing = BundleGluing { base, lift };
                let glued = glue_bundles(&first, &second, &gluing)
                    .map_err(|e| DslError::Semantic(e.to_string()))?;
                env.insert(d.name.clone(), Resolved::Gluing(d.clone(), Box::new(glued)));
                order.push(d.name.clone());
            }
            Item::Metric(d) => {
                let bundle = lookup_bundle(&env, &d.bundle)?;
                let mut pieces = Vec::new();
                let mut covered: Vec<CellKind> = Vec::new();
                for (sel, rows) in &d.pieces {
                    let matrix = matrix_from_rows(rows, bundle.fibre_dim, &d.name)?;
                    // symmetry is an invariant of the declaration, not a verdict
                    if !matrix.is_symmetric_on(&SignContext::empty()) {
                        return Err(DslError::Semantic(format!(
                            "metric {}: matrix is not symmetric",
                            d.name
                        )));
                    }
                    match sel {
                        CellSel::All => {
                            for c in &bundle.cells {
                                if !covered.contains(c) {
                                    pieces.push((c.clone(), matrix.clone()));
                                    covered.push(c.clone());
                                }
                            }
                        }
                        CellSel::One(c) => {
                            pieces.push((c.clone(), matrix.clone()));
                            covered.push(c.clone());
                        }
                    }
                }
                let metric = ChartMetric {
                    var: bundle.base_var.clone(),
                    pieces,
                    sos: None,
                };
                env.insert(d.name.clone(), Resolved::Metric(d.bundle.clone(), metric));
                order.push(d.name.clone());
            }
            Item::Section(d) => {
                let bundle = lookup_bundle(&env, &d.bundle)?;
                let mut pieces = Vec::new();
                for (sel, comps) in &d.pieces {
                    if comps.len() != bundle.fibre_dim {
                        return Err(DslError::Dimension(format!(
                            "section {}: {} components, fibre is {}",
                            d.name,
                            comps.len(),
                            bundle.fibre_dim
                        )));
                    }
                    match sel {
                        CellSel::All => {
                            for c in &bundle.cells {
                                pieces.push((c.clone(), comps.clone()));
                            }
                        }
                        CellSel::One(c) => pieces.push((c.clone(), comps.clone())),
                    }
                }
                let section = SectionData {
                    var: bundle.base_var.clone(),
                    pieces,
                };
                env.insert(d.name.clone(), Resolved::Section(d.bundle.clone(), section));
                order.push(d.name.clone());
            }
            Item::Command(cmd) => {
                let report = run_command(cmd, &env, seed, psd_samples)?;
                commands.push(report);
            }
        }
    }
    let _ = order;
    Ok(Report { seed, commands })
}

fn matrix_from_rows(
    rows: &[Vec<RatExpr>],
    dim: usize,
    name: &str,
) -> Result<ExprMatrix, DslError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(DslError::Dimension(format!(
            "metric {name}: expected a {dim}x{dim} matrix"
        )));
    }
    Ok(ExprMatrix::new(
        dim,
        dim,
        rows.iter().flatten().cloned().collect(),
    ))
}

fn lookup<'a>(env: &'a BTreeMap<String, Resolved>, name: &str) -> Result<&'a Resolved, DslError> {
    env.get(name)
        .ok_or_else(|| DslError::Unresolved(name.to_string()))
}

fn lookup_bundle<'a>(
    env: &'a BTreeMap<String, Resolved>,
    name: &str,
) -> Result<&'a Bundle, DslError> {
    match lookup(env, name)? {
        Resolved::Bundle(b) => Ok(b),
        _ => Err(DslError::Semantic(format!("{name} is not a bundle"))),
    }
}

fn verdict_json(v: &MetricVerdict) -> serde_json::Value {
    let psd = match &v.psd {
        PsdStatus::Exact => serde_json::json!({"kind": "exact"}),
        PsdStatus::Probabilistic(n) => {
            serde_json::json!({"kind": "probabilistic", "samples": n})
        }
        PsdStatus::Fails(w) => serde_json::json!({"kind": "fails", "witness": w}),
    };
    let ranks: Vec<serde_json::Value> = v
        .ranks
        .iter()
        .map(|(cell, want, got)| {
            serde_json::json!({"cell": cell, "required": want, "rank": got})
        })
        .collect();
    serde_json::json!({
        "symmetric": v.symmetric,
        "smooth": v.smooth,
        "smooth_witness": v.smooth_witness,
        "psd": psd,
        "ranks": ranks,
        "pass": v.pass(),
    })
}

fn run_command(
    cmd: &Command,
    env: &BTreeMap<String, Resolved>,
    seed: u64,
    psd_samples: usize,
) -> Result<CommandReport, DslError> {
    let sem = |e: crate::metric::MetricError| DslError::Semantic(e.to_string());
    match cmd {
        Command::Dual(name) => match lookup(env, name)? {
            Resolved::Space(space) => {
                let basis = space.dual_basis();
                let rows: Vec<Vec<String>> = basis
                    .iter()
                    .map(|phi| phi.coeffs.iter().map(|c| format!("{c}")).collect())
                    .collect();
                Ok(CommandReport {
                    command: format!("dual {name}"),
                    ok: true,
                    details: serde_json::json!({
                        "dim": space.dim,
                        "dual_dim": basis.len(),
                        "basis": rows,
                    }),
                })
            }
            Resolved::Bundle(bundle) => {
                let view = bundle
                    .dual_view()
                    .map_err(|e| DslError::Semantic(e.to_string()))?;
                let dims: Vec<serde_json::Value> = view
                    .fibre_dims()
                    .iter()
                    .map(|(c, d)| serde_json::json!({"cell": format!("{c}"), "dual_dim": d}))
                    .collect();
                Ok(CommandReport {
                    command: format!("dual {name}"),
                    ok: true,
                    details: serde_json::json!({"cells": dims}),
                })
            }
            _ => Err(DslError::Semantic(format!(
                "dual expects a space or bundle, got {name}"
            ))),
        },
        Command::Profile(name) => {
            let table: Vec<serde_json::Value> = match lookup(env, name)? {
                Resolved::Bundle(b) => b
                    .dual_dim_profile()
                    .map_err(|e| DslError::Semantic(e.to_string()))?
                    .into_iter()
                    .map(|(c, d)| serde_json::json!({"cell": format!("{c}"), "dual_dim": d}))
                    .collect(),
                Resolved::Gluing(_, g) => g
                    .dual_dim_profile()
                    .map_err(|e| DslError::Semantic(e.to_string()))?
                    .into_iter()
                    .map(|(r, c, d)| {
                        serde_json::json!({
                            "region": format!("{r}"),
                            "cell": format!("{c}"),
                            "dual_dim": d,
                        })
                    })
                    .collect(),
                _ => {
                    return Err(DslError::Semantic(format!(
                        "profile expects a bundle or gluing, got {name}"
                    )))
                }
            };
            Ok(CommandReport {
                command: format!("profile {name}"),
                ok: true,
                details: serde_json::json!({"cells": table}),
            })
        }
        Command::Glue(name) => match lookup(env, name)? {
            Resolved::Gluing(decl, g) => {
                let cells: Vec<serde_json::Value> = g
                    .cells
                    .iter()
                    .map(|c| {
                        serde_json::json!({
                            "region": format!("{}", c.region),
                            "chart": format!("{}", c.chart),
                            "cell": format!("{}", c.cell),
                            "fibre_dim": c.fibre_dim,
                            "seam": c.seam.is_some(),
                        })
                    })
                    .collect();
                // the necessary condition for gluing-dual commutativity,
                // decidable only for invertible base maps
                let dual_necessary = if decl.inverse.is_some() {
                    Some(
                        crate::glue::check_dual_necessary(g)
                            .map_err(|e| DslError::Semantic(e.to_string()))?,
                    )
                } else {
                    None
                };
                Ok(CommandReport {
                    command: format!("glue {name}"),
                    ok: true,
                    details: serde_json::json!({
                        "cells": cells,
                        "cell_count": g.cells.len(),
                        "dual_necessary": dual_necessary,
                    }),
                })
            }
            _ => Err(DslError::Semantic(format!("{name} is not a gluing"))),
        },
        Command::CheckMetric(name) => {
            let (bundle_name, metric) = match lookup(env, name)? {
                Resolved::Metric(b, m) => (b.clone(), m.clone()),
                _ => return Err(DslError::Semantic(format!("{name} is not a metric"))),
            };
            let bundle = lookup_bundle(env, &bundle_name)?;
            let verdict = is_pseudometric(bundle, &metric, seed, psd_samples).map_err(sem)?;
            Ok(CommandReport {
                command: format!("check-metric {name}"),
                ok: true,
                details: verdict_json(&verdict),
            })
        }
        Command::Exists(name) => {
            let bundle = lookup_bundle(env, name)?;
            let outcome = existence_check(bundle, seed, psd_samples).map_err(sem)?;
            let details = match outcome {
                Existence::Exists(g) => {
                    let pieces: Vec<serde_json::Value> = g
                        .pieces
                        .iter()
                        .map(|(c, m)| {
                            let rows: Vec<Vec<String>> = (0..m.rows())
                                .map(|i| {
                                    (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect()
                                })
                                .collect();
                            serde_json::json!({"cell": format!("{c}"), "matrix": rows})
                        })
                        .collect();
                    serde_json::json!({"outcome": "exists", "metric": pieces})
                }
                Existence::NonExistent(cert) => {
                    let vanishing: Vec<serde_json::Value> = cert
                        .vanishing
                        .iter()
                        .map(|(i, j, c)| {
                            serde_json::json!({
                                "coefficient": format!("g{}{}", i + 1, j + 1),
                                "cell": format!("{c}"),
                            })
                        })
                        .collect();
                    serde_json::json!({
                        "outcome": "nonexistent",
                        "at": rat_display(&cert.at),
                        "required_rank": cert.required_rank,
                        "vanishing": vanishing,
                        "probes": cert.probes,
                    })
                }
                Existence::Unknown => serde_json::json!({"outcome": "unknown"}),
            };
            Ok(CommandReport {
                command: format!("exists {name}"),
                ok: true,
                details,
            })
        }
        Command::InduceMetric(gname, m1name, m2name) => {
            let glued = match lookup(env, gname)? {
                Resolved::Gluing(_, g) => g,
                _ => return Err(DslError::Semantic(format!("{gname} is not a gluing"))),
            };
            let g1 = match lookup(env, m1name)? {
                Resolved::Metric(_, m) => m.clone(),
                _ => return Err(DslError::Semantic(format!("{m1name} is not a metric"))),
            };
            let g2 = match lookup(env, m2name)? {
                Resolved::Metric(_, m) => m.clone(),
                _ => return Err(DslError::Semantic(format!("{m2name} is not a metric"))),
            };
            let compatible = compat_check(&g1, &g2, glued).map_err(sem)?;
            if !compatible {
                return Ok(CommandReport {
                    command: format!("induce-metric {gname} {m1name} {m2name}"),
                    ok: true,
                    details: serde_json::json!({"compatible": false}),
                });
            }
            let direct = glue_metrics(&g1, &g2, glued, seed, psd_samples).map_err(sem)?;
            let verdict = is_pseudometric_glued(glued, &direct, seed, psd_samples).map_err(sem)?;
            let (commutative_defined, coincide) =
                match glue_metrics_commutative(&g1, &g2, glued, seed, psd_samples) {
                    Ok(routed) => (
                        true,
                        Some(metrics_coincide(&direct, &routed, glued).map_err(sem)?),
                    ),
                    Err(crate::metric::MetricError::NecessaryConditionFails(_)) => (false, None),
                    Err(e) => return Err(sem(e)),
                };
            let pieces: Vec<serde_json::Value> = direct
                .pieces
                .iter()
                .map(|(r, c, m)| {
                    let rows: Vec<Vec<String>> = (0..m.rows())
                        .map(|i| (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect())
                        .collect();
                    serde_json::json!({
                        "region": format!("{r}"),
                        "cell": format!("{c}"),
                        "matrix": rows,
                    })
                })
                .collect();
            Ok(CommandReport {
                command: format!("induce-metric {gname} {m1name} {m2name}"),
                ok: true,
                details: serde_json::json!({
                    "compatible": true,
                    "verdict": verdict_json(&verdict),
                    "metric": pieces,
                    "commutative_defined": commutative_defined,
                    "coincide": coincide,
                }),
            })
        }
        Command::DualMetric(name) => {
            let (bundle_name, metric) = match lookup(env, name)? {
                Resolved::Metric(b, m) => (b.clone(), m.clone()),
                _ => return Err(DslError::Semantic(format!("{name} is not a metric"))),
            };
            let bundle = lookup_bundle(env, &bundle_name)?;
            let dm = dual_metric(bundle, &metric, seed, psd_samples).map_err(sem)?;
            let pieces: Vec<serde_json::Value> = dm
                .pieces
                .iter()
                .map(|(c, m)| {
                    let rows: Vec<Vec<String>> = (0..m.rows())
                        .map(|i| (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect())
                        .collect();
                    serde_json::json!({"cell": format!("{c}"), "matrix": rows})
                })
                .collect();
            Ok(CommandReport {
                command: format!("dual-metric {name}"),
                ok: true,
                details: serde_json::json!({
                    "dual_fibre_dims": dm
                        .view
                        .fibre_dims()
                        .iter()
                        .map(|(c, d)| serde_json::json!({"cell": format!("{c}"), "dim": d}))
                        .collect::<Vec<_>>(),
                    "metric": pieces,
                }),
            })
        }
        Command::CommuteTensor(a, b) => {
            let (da, ga) = match lookup(env, a)? {
                Resolved::Gluing(d, g) => (d, g),
                _ => return Err(DslError::Semantic(format!("{a} is not a gluing"))),
            };
            let (db, gb) = match lookup(env, b)? {
                Resolved::Gluing(d, g) => (d, g),
                _ => return Err(DslError::Semantic(format!("{b} is not a gluing"))),
            };
            let report = crate::glue::tensor_glue_commutativity_check(
                &ga.first, &gb.first, &ga.second, &gb.second, &ga.gluing, &gb.gluing,
            )
            .map_err(|e| DslError::Semantic(e.to_string()))?;
            let _ = (da, db);
            let cells: Vec<serde_json::Value> = report
                .cells
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "region": format!("{}", c.region),
                        "cell": format!("{}", c.cell),
                        "fibre_dims": [c.fibre_dims.0, c.fibre_dims.1],
                        "dual_dims": [c.dual_dims.0, c.dual_dims.1],
                        "spans_match": c.spans_match,
                        "certified": c.certified(),
                    })
                })
                .collect();
            let lifts: Vec<serde_json::Value> = report
                .composite_lift
                .iter()
                .map(|(c, m)| {
                    let rows: Vec<Vec<String>> = (0..m.rows())
                        .map(|i| (0..m.cols()).map(|j| format!("{}", m.get(i, j))).collect())
                        .collect();
                    serde_json::json!({"cell": format!("{c}"), "lift": rows})
                })
                .collect();
            Ok(CommandReport {
                command: format!("commute-tensor {a} {b}"),
                ok: true,
                details: serde_json::json!({
                    "all_certified": report.all_certified(),
                    "cells": cells,
                    "composite_lift": lifts,
                }),
            })
        }
        Command::Report => {
            let mut spaces = Vec::new();
            let mut bundles = Vec::new();
            let mut gluings = Vec::new();
            let mut metrics = Vec::new();
            let mut sections = Vec::new();
            for (name, resolved) in env {
                match resolved {
                    Resolved::Space(s) => {
                        spaces.push(serde_json::json!({"name": name, "dim": s.dim}))
                    }
                    Resolved::Bundle(b) => bundles.push(serde_json::json!({
                        "name": name,
                        "fibre_dim": b.fibre_dim,
                        "cells": b.cells.len(),
                    })),
                    Resolved::Gluing(_, g) => gluings.push(serde_json::json!({
                        "name": name,
                        "cells": g.cells.len(),
                    })),
                    Resolved::Metric(on, m) => metrics.push(serde_json::json!({
                        "name": name,
                        "on": on,
                        "pieces": m.pieces.len(),
                    })),
                    Resolved::Section(on, s) => sections.push(serde_json::json!({
                        "name": name,
                        "on": on,
                        "pieces": s.pieces.len(),
                    })),
                }
            }
            Ok(CommandReport {
                command: "report".into(),
                ok: true,
                details: serde_json::json!({
                    "spaces": spaces,
                    "bundles": bundles,
                    "gluings": gluings,
                    "metrics": metrics,
                    "sections": sections,
                }),
            })
        }
    }
}

impl Document {
    /// Convenience: parse, run, and return the report.
    pub fn run_text(text: &str, seed: u64) -> Result<Report, DslError> {
        run(&parse(text)?, seed)
    }
}

// region tags serialize through Display
impl Serialize for RegionTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{self}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat_int;

    #[test]
    fn parse_reports_positions() {
        let err = parse("space s dim 2 gens [(x) -> (abs(x+1), 0)]").unwrap_err();
        match err {
            DslError::Parse { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected a parse error, got {other}"),
        }
        // abs of anything but a single variable is rejected at parse time
        let err = parse("bundle b base x cells [(-inf, inf)] fibre 1 gens [(v) -> (abs(v)*2)]");
        assert!(err.is_ok());
        let err = parse("bundle b base x cells [(-inf, inf)] fibre 1 gens [(v) -> (abs(2*v))]");
        assert!(matches!(err, Err(DslError::Parse { .. })));
    }

    #[test]
    fn duplicate_and_unresolved_names() {
        let text = "space a dim 1 gens []\nspace a dim 2 gens []";
        assert!(matches!(parse(text), Err(DslError::Duplicate(_))));
        let text = "dual nothere";
        let doc = parse(text).unwrap();
        assert!(matches!(run(&doc, 1), Err(DslError::Unresolved(_))));
    }

    #[test]
    fn moebius_fixture_shape() {
        let doc = parse(crate::catalog::fixture("moebius").unwrap()).unwrap();
        let bundles = doc
            .items
            .iter()
            .filter(|i| matches!(i, Item::Bundle(_)))
            .count();
        let gluings = doc
            .items
            .iter()
            .filter(|i| matches!(i, Item::Gluing(_)))
            .count();
        let metrics = doc
            .items
            .iter()
            .filter(|i| matches!(i, Item::Metric(_)))
            .count();
        assert_eq!((bundles, gluings, metrics), (2, 1, 2));
    }

    #[test]
    fn nometric_fixture_reports_nonexistence() {
        let report = Document::run_text(
            crate::catalog::fixture("example_5_2_nometric").unwrap(),
            7,
        )
        .unwrap();
        let exists = report
            .commands
            .iter()
            .find(|c| c.command.starts_with("exists"))
            .unwrap();
        assert_eq!(exists.details["outcome"], "nonexistent");
        assert_eq!(exists.details["required_rank"], 1);
    }

    #[test]
    fn asymmetric_metric_is_a_semantic_error() {
        let text = "bundle b base x cells [(-inf, inf)] fibre 2 gens []\n\
                    metric m on b [all: [[1, 1], [0, 1]]]\ncheck-metric m";
        let doc = parse(text).unwrap();
        assert!(matches!(run(&doc, 1), Err(DslError::Semantic(_))));
    }

    #[test]
    fn lift_is_required_for_positive_fibre_dimensions() {
        let text = "bundle p base x cells [(-inf, inf)] fibre 1 gens []\n\
                    bundle q base y cells [(-inf, inf)] fibre 1 gens []\n\
                    glue g = p ~ q on [(-inf, inf)] via f = x inv y";
        let doc = parse(text).unwrap();
        assert!(matches!(run(&doc, 1), Err(DslError::Semantic(_))));
    }

    #[test]
    fn printer_is_canonical_on_a_small_document() {
        let text = "bundle b base u cells [(-inf, 0), {0}, (0, inf)] fibre 1 gens [(v) -> (u*abs(v))]\nprofile b";
        let d1 = parse(text).unwrap();
        let s1 = print(&d1);
        let d2 = round_trip(&d1).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(print(&d2), s1);
    }

    #[test]
    fn expressions_parse_exactly() {
        let doc = parse("section s on b [all: (1/2*x^2 - abs(v), x*(x + 1))]");
        // parse alone succeeds; resolution happens at run time
        let doc = doc.unwrap();
        let Item::Section(d) = &doc.items[0] else {
            panic!()
        };
        let mut point = std::collections::BTreeMap::new();
        point.insert(Var::new("x"), rat_int(4));
        point.insert(Var::new("v"), rat_int(-3));
        let (_, comps) = &d.pieces[0];
        assert_eq!(comps[0].eval(&point).unwrap(), rat_int(5));
        assert_eq!(comps[1].eval(&point).unwrap(), rat_int(20));
    }
}
