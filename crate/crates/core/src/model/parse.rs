//! Parser for the textual model format.
//!
//! ```text
//! # comments run to end of line (`#` or `//`)
//! species S;
//! param theta1 = 0.1;
//! param theta2 = 0.1;
//! init S = 0;
//! reaction birth: -> S @ mass_action(theta1);
//! reaction death: S -> @ theta2 * S;
//! ```
//!
//! Statements end with `;`. Species must be declared before the reactions that
//! mention them; parameters may be declared anywhere. A side of a reaction is
//! empty, `0`, or `n A + m B + ...` with optional integer multiplicities.
//! Propensities use infix arithmetic with precedence `^` > unary `-` > `*`,`/`,
//! then binary `+`,`-`; `^` is right-associative. `mass_action(rate)` expands to
//! `rate * prod C(x_i, nu_i)` over the left-hand side.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::{Expr, ModelError, Params, Reaction, ReactionNetwork, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    Invalid(Box<ModelError>),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "{m}"),
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier `{name}`"),
            ParseErrorKind::Invalid(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64, bool),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, m: String| ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(m),
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let v: f64 = text
                .parse()
                .map_err(|_| err(tl, tc, format!("malformed number `{text}`")))?;
            out.push(Token {
                tok: Tok::Num(v, integral),
                line: tl,
                col: tc,
            });
            continue;
        }
        let sym = match c {
            '-' if chars.get(i + 1) == Some(&'>') => "->",
            ';' => ";",
            ':' => ":",
            '=' => "=",
            '@' => "@",
            '+' => "+",
            '-' => "-",
            '*' => "*",
            '/' => "/",
            '^' => "^",
            '(' => "(",
            ')' => ")",
            ',' => ",",
            _ => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
        };
        i += sym.len();
        col += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            line: tl,
            col: tc,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Parameter references seen while parsing, checked once all declarations
/// are known.
type ParamRefs = Vec<(String, usize, usize)>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    species: Vec<String>,
    param_refs: ParamRefs,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: t.line,
            col: t.col,
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn expect_sym(&mut self, s: &str) -> Result<Token, ParseError> {
        if self.is_sym(s) {
            Ok(self.next())
        } else {
            let t = self.peek().clone();
            Err(self.error_at(&t, format!("expected `{s}`, found {}", describe(&t.tok))))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Token), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(name) => Ok((name.clone(), t.clone())),
            other => Err(self.error_at(&t, format!("expected identifier, found {}", describe(other)))),
        }
    }

    fn expect_number(&mut self) -> Result<(f64, bool), ParseError> {
        let negative = if self.is_sym("-") {
            self.next();
            true
        } else {
            false
        };
        let t = self.next();
        match t.tok {
            Tok::Num(v, integral) => Ok((if negative { -v } else { v }, integral)),
            ref other => Err(self.error_at(&t, format!("expected number, found {}", describe(other)))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self, lhs: &[(usize, u32)]) -> Result<Expr, ParseError> {
        let mut acc = self.term(lhs)?;
        loop {
            if self.is_sym("+") {
                self.next();
                acc = Expr::Add(Box::new(acc), Box::new(self.term(lhs)?));
            } else if self.is_sym("-") {
                self.next();
                acc = Expr::Sub(Box::new(acc), Box::new(self.term(lhs)?));
            } else {
                return Ok(acc);
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self, lhs: &[(usize, u32)]) -> Result<Expr, ParseError> {
        let mut acc = self.unary(lhs)?;
        loop {
            if self.is_sym("*") {
                self.next();
                acc = Expr::Mul(Box::new(acc), Box::new(self.unary(lhs)?));
            } else if self.is_sym("/") {
                self.next();
                acc = Expr::Div(Box::new(acc), Box::new(self.unary(lhs)?));
            } else {
                return Ok(acc);
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self, lhs: &[(usize, u32)]) -> Result<Expr, ParseError> {
        if self.is_sym("-") {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary(lhs)?)));
        }
        self.power(lhs)
    }

    // power := primary ('^' unary)?
    fn power(&mut self, lhs: &[(usize, u32)]) -> Result<Expr, ParseError> {
        let base = self.primary(lhs)?;
        if self.is_sym("^") {
            self.next();
            let exp = self.unary(lhs)?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self, lhs: &[(usize, u32)]) -> Result<Expr, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v, _) => Ok(Expr::Const(*v)),
            Tok::Sym("(") => {
                let e = self.expr(lhs)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) if self.is_sym("(") => {
                self.next();
                match name.as_str() {
                    "mass_action" => {
                        let rate = self.expr(lhs)?;
                        self.expect_sym(")")?;
                        Ok(Expr::mass_action(rate, lhs.to_vec()))
                    }
                    "powlog" => {
                        let base = self.expr(lhs)?;
                        self.expect_sym(",")?;
                        let exp = self.expr(lhs)?;
                        self.expect_sym(",")?;
                        let mt = self.peek().clone();
                        let (m, integral) = self.expect_number()?;
                        if !integral || m < 0.0 {
                            return Err(self.error_at(&mt, "log power must be a non-negative integer"));
                        }
                        self.expect_sym(")")?;
                        Ok(Expr::PowLog(Box::new(base), Box::new(exp), m as u32))
                    }
                    other => Err(self.error_at(&t, format!("unknown function `{other}`"))),
                }
            }
            Tok::Ident(name) => match self.species.iter().position(|s| s == name) {
                Some(i) => Ok(Expr::Species(i)),
                None => {
                    self.param_refs.push((name.clone(), t.line, t.col));
                    Ok(Expr::Param(name.clone()))
                }
            },
            other => Err(self.error_at(&t, format!("expected expression, found {}", describe(other)))),
        }
    }

    // side := '' | '0' | term ('+' term)*   where term := [int] species
    fn side(&mut self) -> Result<Vec<(usize, u32)>, ParseError> {
        let mut terms: Vec<(usize, u32)> = Vec::new();
        if self.is_sym("->") || self.is_sym("@") {
            return Ok(terms);
        }
        if let Tok::Num(v, true) = self.peek().tok {
            if v == 0.0 {
                self.next();
                return Ok(terms);
            }
        }
        loop {
            let mut n = 1u32;
            let t = self.peek().clone();
            if let Tok::Num(v, integral) = t.tok {
                if !integral || v < 1.0 || v > u32::MAX as f64 {
                    return Err(self.error_at(&t, "stoichiometric coefficient must be a positive integer"));
                }
                n = v as u32;
                self.next();
            }
            let (name, tok) = self.expect_ident()?;
            let i = self.species.iter().position(|s| *s == name).ok_or(ParseError {
                line: tok.line,
                col: tok.col,
                kind: ParseErrorKind::UnknownIdentifier(name.clone()),
            })?;
            match terms.iter_mut().find(|(j, _)| *j == i) {
                Some(entry) => entry.1 += n,
                None => terms.push((i, n)),
            }
            if self.is_sym("+") {
                self.next();
            } else {
                return Ok(terms);
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v, _) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parse a model document into a validated network.
pub fn parse_model(src: &str) -> Result<ReactionNetwork, ParseError> {
    let toks = lex(src)?;
    let mut params = Params::new();
    let mut inits: BTreeMap<String, (u64, usize, usize)> = BTreeMap::new();
    // (reaction, line, col)
    let mut reactions: Vec<(Reaction, usize, usize)> = Vec::new();
    let mut declared: BTreeSet<String> = BTreeSet::new();
    let mut p = Parser {
        toks,
        pos: 0,
        species: Vec::new(),
        param_refs: Vec::new(),
    };
    let invalid = |t: &Token, e: ModelError| ParseError {
        line: t.line,
        col: t.col,
        kind: ParseErrorKind::Invalid(Box::new(e)),
    };
    loop {
        let t = p.next();
        let kw = match &t.tok {
            Tok::Eof => break,
            Tok::Ident(kw) => kw.clone(),
            other => return Err(p.error_at(&t, format!("expected a statement, found {}", describe(other)))),
        };
        match kw.as_str() {
            "species" => {
                loop {
                    let (name, tok) = p.expect_ident()?;
                    if !declared.insert(name.clone()) {
                        return Err(invalid(&tok, ModelError::Duplicate(name)));
                    }
                    p.species.push(name);
                    if p.is_sym(",") {
                        p.next();
                    }
                    if p.is_sym(";") {
                        break;
                    }
                }
                p.expect_sym(";")?;
            }
            "param" => {
                let (name, tok) = p.expect_ident()?;
                p.expect_sym("=")?;
                let (v, _) = p.expect_number()?;
                p.expect_sym(";")?;
                if !declared.insert(name.clone()) {
                    return Err(invalid(&tok, ModelError::Duplicate(name)));
                }
                params.insert(name, v);
            }
            "init" => {
                let (name, tok) = p.expect_ident()?;
                p.expect_sym("=")?;
                let nt = p.peek().clone();
                let (v, integral) = p.expect_number()?;
                if !integral || v < 0.0 {
                    return Err(p.error_at(&nt, "initial count must be a non-negative integer"));
                }
                p.expect_sym(";")?;
                inits.insert(name, (v as u64, tok.line, tok.col));
            }
            "reaction" => {
                let (name, _) = p.expect_ident()?;
                if reactions.iter().any(|(r, _, _)| r.name == name) {
                    return Err(invalid(&t, ModelError::Duplicate(name)));
                }
                p.expect_sym(":")?;
                let lhs = p.side()?;
                p.expect_sym("->")?;
                let rhs = p.side()?;
                p.expect_sym("@")?;
                let propensity = p.expr(&lhs)?;
                p.expect_sym(";")?;
                let d = p.species.len();
                reactions.push((Reaction::new(name, d, lhs, rhs, propensity), t.line, t.col));
            }
            other => return Err(p.error_at(&t, format!("unknown statement `{other}`"))),
        }
    }
    let end = p.peek().clone();
    let species = std::mem::take(&mut p.species);

    for (name, line, col) in std::mem::take(&mut p.param_refs) {
        if !params.contains_key(&name) {
            return Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::UnknownIdentifier(name),
            });
        }
    }
    let d = species.len();
    let mut initial = State::zeros(d);
    for (name, (v, line, col)) in &inits {
        match species.iter().position(|s| s == name) {
            Some(i) => initial[i] = *v,
            None => {
                return Err(ParseError {
                    line: *line,
                    col: *col,
                    kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                })
            }
        }
    }
    // Stoichiometry was sized when each reaction was read; later species
    // declarations widen it.
    for (r, _, _) in &mut reactions {
        r.stoich.resize(d, 0);
    }
    let positions: Vec<(String, usize, usize)> =
        reactions.iter().map(|(r, l, c)| (r.name.clone(), *l, *c)).collect();
    let net = ReactionNetwork {
        species,
        reactions: reactions.into_iter().map(|(r, _, _)| r).collect(),
        params,
        initial,
    };
    net.validate().map_err(|e| {
        let at = match &e {
            ModelError::UnguardedConsumption { reaction, .. }
            | ModelError::StoichLength { reaction, .. } => {
                positions.iter().find(|(n, _, _)| n == reaction)
            }
            _ => None,
        };
        let (line, col) = at.map(|(_, l, c)| (*l, *c)).unwrap_or((end.line, end.col));
        ParseError {
            line,
            col,
            kind: ParseErrorKind::Invalid(Box::new(e)),
        }
    })?;
    Ok(net)
}

/// Parse a standalone expression against a list of species names; other
/// identifiers become parameters.
pub fn parse_expr(src: &str, species: &[String]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        species: species.to_vec(),
        param_refs: Vec::new(),
    };
    let e = p.expr(&[])?;
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return Err(p.error_at(&t, format!("unexpected {}", describe(&t.tok))));
    }
    Ok(e)
}
