//! Recursive-descent parser for the formula text syntax.
//!
//! ```text
//! theta := phi ("and" phi)* | chain
//! chain := "F[" NUM "," NUM "](" psi "and" chain ")" | "F[" NUM "," NUM "]" psi
//! phi   := ("G"|"F") "[" NUM "," NUM "]" psi
//! psi   := term ("and" term)*
//! term  := pred | "not" pred | "(" psi ")"
//! pred  := "ball(" IDXLIST ";" NUMLIST ";" NUM ")"
//!        | "join(" IDXLIST ";" IDXLIST ";" NUM ")"
//!        | "band(" IDX ";" NUM ";" NUM ")"
//!        | "aff(" NUMLIST ";" NUM ")"
//! ```

use std::fmt;

use thiserror::Error;

use super::formula::{
    Interval, Literal, NonTemporalFormula, Predicate, SequentialFormula, TemporalFormula,
    TemporalOp,
};
use super::StlError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Permit negation of ball/join predicates (breaks concavity).
    pub allow_nonconcave: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {pos}: {kind}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("empty formula")]
    Empty,
    #[error("unexpected character {0:?}")]
    BadChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("expected a non-negative integer index, found {0}")]
    BadIndex(f64),
    #[error("negation of non-affine predicate `{0}` is not concave")]
    NegatedNonAffine(String),
    #[error("only eventually-operators may be nested")]
    NestedAlways,
    #[error("a nested chain cannot be combined with other temporal atoms")]
    MixedChain,
    #[error(transparent)]
    Formula(#[from] StlError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LBrack,
    RBrack,
    LParen,
    RParen,
    Comma,
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::LBrack => f.write_str("`[`"),
            Tok::RBrack => f.write_str("`]`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            c if c.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            '[' => out.push((start, Tok::LBrack)),
            ']' => out.push((start, Tok::RBrack)),
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            ',' => out.push((start, Tok::Comma)),
            ';' => out.push((start, Tok::Semi)),
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let exp_sign = (d == b'-' || d == b'+')
                        && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| ParseError {
                    pos: start,
                    kind: ParseErrorKind::BadNumber(s.to_string()),
                })?;
                if !v.is_finite() {
                    return Err(ParseError {
                        pos: start,
                        kind: ParseErrorKind::BadNumber(s.to_string()),
                    });
                }
                out.push((start, Tok::Num(v)));
                continue;
            }
            other => {
                // report the full char, not the byte
                let ch = text[start..].chars().next().unwrap_or(other);
                return Err(ParseError {
                    pos: start,
                    kind: ParseErrorKind::BadChar(ch),
                });
            }
        }
        i += 1;
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

/// Parses formula text with default options (concave literals only).
pub fn parse_formula(text: &str) -> Result<SequentialFormula, ParseError> {
    parse_formula_with(text, ParseOptions::default())
}

pub fn parse_formula_with(
    text: &str,
    options: ParseOptions,
) -> Result<SequentialFormula, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            pos: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        options,
    };
    p.theta()
}

enum Body {
    Psi(NonTemporalFormula),
    Chain(Vec<(NonTemporalFormula, Interval)>),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    options: ParseOptions,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let idx = (self.at + k).min(self.toks.len() - 1);
        &self.toks[idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            kind,
        })
    }

    fn err_at<T>(pos: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { pos, kind })
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, ParseError> {
        self.err(ParseErrorKind::Unexpected {
            expected: expected.to_string(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn is_temporal_start(&self, k: usize) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s == "G" || s == "F")
            && *self.peek_at(k + 1) == Tok::LBrack
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek() {
            Tok::Num(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            _ => self.unexpected("a number"),
        }
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        let pos = self.pos();
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Self::err_at(pos, ParseErrorKind::BadIndex(v));
        }
        Ok(v as usize)
    }

    fn list<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut out = vec![item(self)?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(item(self)?);
        }
        Ok(out)
    }

    fn theta(&mut self) -> Result<SequentialFormula, ParseError> {
        let start = self.pos();
        let (op, interval, body) = self.temporal()?;
        let formula = match body {
            Body::Chain(steps) => {
                if self.is_ident("and") {
                    return self.err(ParseErrorKind::MixedChain);
                }
                SequentialFormula::chain(steps).map_err(|e| ParseError {
                    pos: start,
                    kind: e.into(),
                })?
            }
            Body::Psi(psi) => {
                let mut atoms = vec![TemporalFormula {
                    op,
                    interval,
                    body: psi,
                }];
                while self.is_ident("and") {
                    self.bump();
                    let atom_pos = self.pos();
                    match self.temporal()? {
                        (op, interval, Body::Psi(body)) => atoms.push(TemporalFormula {
                            op,
                            interval,
                            body,
                        }),
                        (_, _, Body::Chain(_)) => {
                            return Self::err_at(atom_pos, ParseErrorKind::MixedChain)
                        }
                    }
                }
                SequentialFormula::ordered(atoms).map_err(|e| ParseError {
                    pos: start,
                    kind: e.into(),
                })?
            }
        };
        if *self.peek() != Tok::Eof {
            return self.unexpected("`and` or end of input");
        }
        Ok(formula)
    }

    /// `("G"|"F") "[" NUM "," NUM "]" body`
    fn temporal(&mut self) -> Result<(TemporalOp, Interval, Body), ParseError> {
        let op = match self.peek() {
            Tok::Ident(s) if s == "G" => TemporalOp::Always,
            Tok::Ident(s) if s == "F" => TemporalOp::Eventually,
            _ => return self.unexpected("`G` or `F`"),
        };
        self.bump();
        let ipos = self.pos();
        self.expect(Tok::LBrack)?;
        let lo = self.number()?;
        self.expect(Tok::Comma)?;
        let hi = self.number()?;
        self.expect(Tok::RBrack)?;
        let interval = Interval::new(lo, hi).map_err(|e| ParseError {
            pos: ipos,
            kind: e.into(),
        })?;
        let body = self.body(op, interval)?;
        Ok((op, interval, body))
    }

    fn body(&mut self, op: TemporalOp, interval: Interval) -> Result<Body, ParseError> {
        if *self.peek() == Tok::LParen {
            let open = self.pos();
            self.bump();
            let (literals, nested) = self.group()?;
            self.expect(Tok::RParen)?;
            if let Some(inner) = nested {
                if op != TemporalOp::Eventually {
                    return Self::err_at(open, ParseErrorKind::NestedAlways);
                }
                let psi = NonTemporalFormula::new(literals).map_err(|e| ParseError {
                    pos: open,
                    kind: e.into(),
                })?;
                let mut steps = vec![(psi, interval)];
                steps.extend(inner);
                return Ok(Body::Chain(steps));
            }
            let mut literals = literals;
            self.more_terms(&mut literals)?;
            return Ok(Body::Psi(NonTemporalFormula::new(literals).map_err(
                |e| ParseError {
                    pos: open,
                    kind: e.into(),
                },
            )?));
        }
        let mut literals = self.term()?;
        self.more_terms(&mut literals)?;
        Ok(Body::Psi(
            NonTemporalFormula::new(literals).expect("at least one term parsed"),
        ))
    }

    /// `("and" term)*`, stopping in front of `and G[` / `and F[`.
    fn more_terms(&mut self, literals: &mut Vec<Literal>) -> Result<(), ParseError> {
        while self.is_ident("and") && !self.is_temporal_start(1) {
            self.bump();
            literals.extend(self.term()?);
        }
        Ok(())
    }

    /// Contents of a parenthesized group: terms, optionally ending in a nested
    /// eventually-chain (steps outermost-first).
    #[allow(clippy::type_complexity)]
    fn group(
        &mut self,
    ) -> Result<(Vec<Literal>, Option<Vec<(NonTemporalFormula, Interval)>>), ParseError> {
        let mut literals = Vec::new();
        loop {
            if self.is_temporal_start(0) {
                let pos = self.pos();
                if literals.is_empty() {
                    return self.unexpected("a predicate before the nested operator");
                }
                let (op, interval, body) = self.temporal()?;
                if op != TemporalOp::Eventually {
                    return Self::err_at(pos, ParseErrorKind::NestedAlways);
                }
                let steps = match body {
                    Body::Psi(psi) => vec![(psi, interval)],
                    Body::Chain(steps) => steps,
                };
                return Ok((literals, Some(steps)));
            }
            literals.extend(self.term()?);
            if self.is_ident("and") {
                self.bump();
            } else {
                return Ok((literals, None));
            }
        }
    }

    fn term(&mut self) -> Result<Vec<Literal>, ParseError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let (literals, nested) = self.group()?;
            if nested.is_some() {
                return self.err(ParseErrorKind::NestedAlways);
            }
            self.expect(Tok::RParen)?;
            return Ok(literals);
        }
        if self.is_ident("not") {
            self.bump();
            let pos = self.pos();
            let name = match self.peek() {
                Tok::Ident(s) => s.clone(),
                _ => String::new(),
            };
            let pred = self.predicate()?;
            if !pred.is_affine() && !self.options.allow_nonconcave {
                return Self::err_at(pos, ParseErrorKind::NegatedNonAffine(name));
            }
            return Ok(vec![Literal::neg(pred)]);
        }
        Ok(vec![Literal::pos(self.predicate()?)])
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let pos = self.pos();
        let name = match self.peek() {
            Tok::Ident(s) if matches!(s.as_str(), "ball" | "join" | "band" | "aff") => s.clone(),
            _ => return self.unexpected("a predicate (ball, join, band, aff) or `(`"),
        };
        self.bump();
        self.expect(Tok::LParen)?;
        let pred = match name.as_str() {
            "ball" => {
                let sel = self.list(Self::index)?;
                self.expect(Tok::Semi)?;
                let center = self.list(Self::number)?;
                self.expect(Tok::Semi)?;
                let radius = self.number()?;
                Predicate::ball(sel, center, radius)
            }
            "join" => {
                let a = self.list(Self::index)?;
                self.expect(Tok::Semi)?;
                let b = self.list(Self::index)?;
                self.expect(Tok::Semi)?;
                let radius = self.number()?;
                Predicate::join(a, b, radius)
            }
            "band" => {
                let k = self.index()?;
                self.expect(Tok::Semi)?;
                let center = self.number()?;
                self.expect(Tok::Semi)?;
                let halfwidth = self.number()?;
                Predicate::band(k, center, halfwidth)
            }
            _ => {
                let a = self.list(Self::number)?;
                self.expect(Tok::Semi)?;
                let b = self.number()?;
                Predicate::affine(a, b)
            }
        }
        .map_err(|e| ParseError {
            pos,
            kind: e.into(),
        })?;
        self.expect(Tok::RParen)?;
        Ok(pred)
    }
}
