//! Recursive-descent parser for the expression DSL.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := unary (('*'|'/') unary)*
//! unary  := '-' unary | factor
//! factor := atom ('^' ['-'] int)?
//! atom   := number | ident | ident '(' expr-list ')' | '(' expr ')'
//! ```

use num_bigint::BigInt;
use thiserror::Error;

use super::{det, CoordSymbol, ElemFn, Expr, ExprError, Rational};
use crate::charts::JetChart;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("function `{name}` at byte {offset} expects {expected} arguments, got {found}")]
    Arity {
        offset: usize,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("at byte {offset}: {source}")]
    Expr { offset: usize, source: ExprError },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let b = text.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'0'..=b'9' | b'.' => {
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let int_part = &text[start..i];
                let mut frac = "";
                if i < b.len() && b[i] == b'.' {
                    i += 1;
                    let fs = i;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                    frac = &text[fs..i];
                }
                if int_part.is_empty() && frac.is_empty() {
                    return Err(ParseError::Syntax { offset: start, msg: "malformed number".into() });
                }
                let digits = format!("{int_part}{frac}");
                let n: BigInt = digits.parse().unwrap();
                let d = BigInt::from(10u32).pow(frac.len() as u32);
                out.push((Tok::Num(Rational::new(n, d)), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    msg: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        };
        i += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    chart: &'a JetChart,
}

fn small(s: &str) -> Option<u16> {
    if s.is_empty() || s.len() > 4 || !s.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax { offset: self.offset(), msg: format!("expected {what}") })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = match self.peek() {
            Tok::Minus => {
                self.bump();
                -self.term()?
            }
            Tok::Plus => {
                self.bump();
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc + self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc - self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = acc * self.unary()?;
                }
                Tok::Slash => {
                    let off = self.offset();
                    self.bump();
                    let d = self.unary()?;
                    acc = acc
                        .checked_div(&d)
                        .map_err(|source| ParseError::Expr { offset: off, source })?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(-self.unary()?);
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        let off = self.offset();
        self.bump();
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let eoff = self.offset();
        let e = match self.bump() {
            Tok::Num(r) if r.is_integer() && r.numer().bits() < 16 => {
                let v: i32 = r.numer().to_string().parse().unwrap();
                if neg {
                    -v
                } else {
                    v
                }
            }
            _ => return Err(ParseError::Syntax { offset: eoff, msg: "expected integer exponent".into() }),
        };
        base.pow(e).map_err(|source| ParseError::Expr { offset: off, source })
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(out),
                _ => {
                    return Err(ParseError::Syntax {
                        offset: self.toks[self.pos.saturating_sub(1)].1,
                        msg: "expected `,` or `)`".into(),
                    })
                }
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.bump() {
            Tok::Num(r) => Ok(Expr::constant(r)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.call(&name, off)
                } else {
                    self.symbol(&name, off).map(Expr::sym)
                }
            }
            Tok::End => Err(ParseError::Syntax { offset: off, msg: "unexpected end of input".into() }),
            t => Err(ParseError::Syntax { offset: off, msg: format!("unexpected token {t:?}") }),
        }
    }

    fn call(&mut self, name: &str, off: usize) -> Result<Expr, ParseError> {
        let args = self.args()?;
        let arity = |expected: usize| -> Result<(), ParseError> {
            if args.len() == expected {
                Ok(())
            } else {
                Err(ParseError::Arity { offset: off, name: name.into(), expected, found: args.len() })
            }
        };
        let elem = match name {
            "sqrt" => {
                arity(1)?;
                return Ok(args[0].sqrt());
            }
            "tan" => {
                arity(1)?;
                return args[0].cos().recip().map(|c| args[0].sin() * c).map_err(|source| ParseError::Expr { offset: off, source });
            }
            "exp" => Some(ElemFn::Exp),
            "ln" => Some(ElemFn::Ln),
            "sin" => Some(ElemFn::Sin),
            "cos" => Some(ElemFn::Cos),
            "atan" => Some(ElemFn::Atan),
            _ => None,
        };
        if let Some(f) = elem {
            arity(1)?;
            return Ok(args[0].elem(f));
        }
        if let Some(k) = name.strip_prefix("det").and_then(small) {
            let k = k as usize;
            if k == 0 || k > 4 {
                return Err(ParseError::Expr { offset: off, source: ExprError::DeterminantTooLarge(k) });
            }
            arity(k * k)?;
            let m: Vec<Vec<Expr>> = (0..k).map(|r| args[r * k..(r + 1) * k].to_vec()).collect();
            return det(&m).map_err(|source| ParseError::Expr { offset: off, source });
        }
        let (base, derivs) = match name.split_once("__") {
            Some((b, d)) if !d.is_empty() && d.bytes().all(|c| c.is_ascii_digit() && c != b'0') => {
                (b, d.bytes().map(|c| c - b'0').collect::<Vec<u8>>())
            }
            _ => (name, Vec::new()),
        };
        match self.chart.functions.get(base) {
            Some(&ar) => {
                arity(ar)?;
                if derivs.iter().any(|&d| d as usize > ar) {
                    return Err(ParseError::Syntax { offset: off, msg: format!("derivative index out of range in `{name}`") });
                }
                Ok(Expr::opaque_deriv(base, derivs, args))
            }
            None => Err(ParseError::UnknownIdent { offset: off, name: name.into() }),
        }
    }

    fn symbol(&self, name: &str, off: usize) -> Result<CoordSymbol, ParseError> {
        let unknown = || ParseError::UnknownIdent { offset: off, name: name.into() };
        if self.chart.params.iter().any(|p| p == name) {
            return Ok(CoordSymbol::param(name));
        }
        let c = self.chart;
        let (n, mm) = (c.n, c.n + c.m);
        let head = name.as_bytes()[0];
        let rest = &name[1..];
        let (k, sub) = match rest.split_once('_') {
            Some((a, b)) => (small(a).ok_or_else(unknown)?, Some(b)),
            None => (small(rest).ok_or_else(unknown)?, None),
        };
        let digit = |s: &str, i: usize| -> Option<u16> { s.as_bytes().get(i).map(|b| (*b - b'0') as u16) };
        let in_range = |v: u16, hi: u16| v >= 1 && v <= hi;
        let sym = match (head, sub) {
            (b'x', None) if in_range(k, n) => CoordSymbol::X(k),
            (b'y', None) if in_range(k, mm) => CoordSymbol::Y(k),
            (b'w', None) if in_range(k, mm) => CoordSymbol::W(k),
            (b'y' | b'w', Some(s)) if in_range(k, mm) && s.bytes().all(|b| b.is_ascii_digit()) => {
                match s.len() {
                    1 => {
                        let j = digit(s, 0).unwrap();
                        let hi = if head == b'w' { mm } else { n };
                        if !in_range(j, hi) {
                            return Err(unknown());
                        }
                        if head == b'y' {
                            CoordSymbol::Y1(k, j)
                        } else {
                            CoordSymbol::W1(k, j)
                        }
                    }
                    2 => {
                        let (i, j) = (digit(s, 0).unwrap(), digit(s, 1).unwrap());
                        if head == b'y' {
                            if c.order < 2 || !in_range(i, n) || !in_range(j, n) {
                                return Err(unknown());
                            }
                            CoordSymbol::y2(k, i, j)
                        } else {
                            if !in_range(i, mm) || !in_range(j, mm) {
                                return Err(unknown());
                            }
                            CoordSymbol::w2(k, i, j)
                        }
                    }
                    _ => return Err(unknown()),
                }
            }
            (b'z', Some(s)) if in_range(k, n) => {
                let i = small(s).ok_or_else(unknown)?;
                if !in_range(i, mm) {
                    return Err(unknown());
                }
                CoordSymbol::Z(k, i)
            }
            (b'a', Some(s)) if in_range(k, n) => {
                let j = small(s).ok_or_else(unknown)?;
                if !in_range(j, n) {
                    return Err(unknown());
                }
                CoordSymbol::A(k, j)
            }
            _ => return Err(unknown()),
        };
        Ok(sym)
    }
}

/// Parses a DSL string against the chart's coordinate, parameter and function tables.
pub fn parse(text: &str, chart: &JetChart) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, chart };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ParseError::Syntax { offset: p.offset(), msg: "trailing input".into() });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> JetChart {
        JetChart::new(2, 1, 2).unwrap().with_function("g11", 2).with_function("g", 1)
    }

    #[test]
    fn grammar_instance() {
        let e = parse("y1_1^2 + sqrt(y2_1)", &chart()).unwrap();
        let s = e.to_string();
        assert!(s.contains("^2") && s.contains("sqrt("), "{s}");
    }

    #[test]
    fn det2_expansion() {
        let e = parse("det2(y1_1,y1_2,y2_1,y2_2)", &chart()).unwrap();
        assert_eq!(e, parse("y1_1*y2_2 - y1_2*y2_1", &chart()).unwrap());
    }

    #[test]
    fn opaque_application() {
        let e = parse("g11(y1,y2)", &chart()).unwrap();
        assert_eq!(e, Expr::opaque("g11", vec![Expr::y(1), Expr::y(2)]));
        let d = parse("g11__21(y1,y2)", &chart()).unwrap();
        assert_eq!(d, Expr::opaque_deriv("g11", vec![1, 2], vec![Expr::y(1), Expr::y(2)]));
    }

    #[test]
    fn errors_carry_offsets() {
        match parse("y1_1 + * 2", &chart()) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("q7 + 1", &chart()), Err(ParseError::UnknownIdent { offset: 0, .. })));
        assert!(matches!(parse("g11(y1)", &chart()), Err(ParseError::Arity { expected: 2, found: 1, .. })));
        assert!(matches!(parse("y4", &chart()), Err(ParseError::UnknownIdent { .. })));
        let first_order = JetChart::new(2, 1, 1).unwrap();
        assert!(parse("y1_12", &first_order).is_err());
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse("0.1", &chart()).unwrap(), Expr::rational(1, 10));
    }

    #[test]
    fn printed_canonical_forms_reparse() {
        let src = "(y1_1 + y2_2)^-2*x1 - 3/4*sqrt(y1_1^2 + y3_2)*atan(x2/x1) + g(y1)^-1 + exp(-x1)";
        let e = parse(src, &chart()).unwrap();
        let s = e.to_string();
        let again = parse(&s, &chart()).unwrap();
        assert_eq!(again, e);
        assert_eq!(again.to_string(), s);
    }
}
