//! Lexer and recursive-descent parser for the surface language.
//!
//! ```text
//! expr   ::= let x [: Q] = expr in expr | fun f(x[: Q])[: Q] => expr
//!          | tfun f(X^x <: Q) => expr | if expr then expr else expr | assign
//! assign ::= mul [:= expr]
//! mul    ::= app (* app)*
//! app    ::= unary unary*
//! unary  ::= (ref | ! | succ | pred | iszero) unary | post
//! post   ::= atom ([Q])*
//! atom   ::= unit | true | false | N | x | #N | (expr) | (expr : Q)
//! Q      ::= T^{a, ...}
//! ```

use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

use crate::syntax::{Atom, QType, Qual, Span, Term, Type};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(BigUint),
    Loc(usize),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Nat(n) => write!(f, "`{n}`"),
            Tok::Loc(l) => write!(f, "`#{l}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("expected {expected}, found {found}")]
pub struct ParseError {
    pub span: Span,
    pub expected: String,
    pub found: String,
}

const KEYWORDS: &[&str] = &[
    "let", "in", "fun", "tfun", "if", "then", "else", "ref", "succ", "pred", "iszero", "true", "false", "unit",
    "fresh", "forall", "mu", "Ref", "Unit", "Nat", "Bool", "Top", "Bot",
];

// Longest first so that `:=` wins over `:`.
const SYMBOLS: &[&str] = &[
    ":=", "=>", "->", "<:", "(", ")", "[", "]", "{", "}", ",", ":", "^", ".", "*", "!", "&", "=", "◊",
];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = src.as_bytes();
    while i < src.len() {
        let rest = &src[i..];
        let c = rest.chars().next().expect("non-empty");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if rest.starts_with("//") {
            i += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < src.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i].parse::<BigUint>().expect("digits");
            out.push((Tok::Nat(n), Span::new(start, i)));
            continue;
        }
        if c == '#' {
            i += 1;
            while i < src.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let l = src[start + 1..i].parse::<usize>().map_err(|_| ParseError {
                span: Span::new(start, i.max(start + 1)),
                expected: "a location number after `#`".into(),
                found: "`#`".into(),
            })?;
            out.push((Tok::Loc(l), Span::new(start, i)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < src.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), Span::new(start, i)));
            continue;
        }
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                out.push((Tok::Sym(s), Span::new(start, i)));
            }
            None => {
                return Err(ParseError {
                    span: Span::new(start, start + c.len_utf8()),
                    expected: "a token".into(),
                    found: format!("`{c}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Span::new(src.len(), src.len())));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

pub fn parse_program(src: &str) -> PResult<Term> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let t = p.expr()?;
    p.expect_eof()?;
    Ok(t)
}

pub fn parse_qtype(src: &str) -> PResult<QType> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let q = p.qtype()?;
    p.expect_eof()?;
    Ok(q)
}

fn at(span: Span, t: Term) -> Term {
    Term::At(span, Box::new(t))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].1.end
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError {
            span: self.span(),
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.fail(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if s != "_" && !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail("an identifier"),
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.fail("end of input")
        }
    }

    // ---- qualifiers and types ----

    fn qual(&mut self) -> PResult<Qual> {
        self.sym("{")?;
        let mut q = Qual::empty();
        if self.eat_sym("}") {
            return Ok(q);
        }
        loop {
            let a = match self.peek().clone() {
                Tok::Loc(l) => {
                    self.bump();
                    Atom::Loc(l)
                }
                Tok::Sym("◊") => {
                    self.bump();
                    Atom::Fresh
                }
                Tok::Sym("&") => {
                    self.bump();
                    Atom::Var(self.ident()?)
                }
                Tok::Ident(k) if k == "fresh" => {
                    self.bump();
                    Atom::Fresh
                }
                _ => Atom::Var(self.ident()?),
            };
            q.insert(a);
            if self.eat_sym("}") {
                return Ok(q);
            }
            self.sym(",")?;
        }
    }

    fn qtype(&mut self) -> PResult<QType> {
        let ty = self.ty()?;
        self.sym("^")?;
        let q = self.qual()?;
        Ok(QType::new(ty, q))
    }

    fn ty(&mut self) -> PResult<Type> {
        let base = match self.peek() {
            Tok::Ident(k) => match k.as_str() {
                "Unit" => Some(Type::Unit),
                "Nat" => Some(Type::Nat),
                "Bool" => Some(Type::Bool),
                "Top" => Some(Type::Top),
                "Bot" => Some(Type::Bot),
                _ => None,
            },
            _ => None,
        };
        if let Some(b) = base {
            self.bump();
            return Ok(b);
        }
        if self.is_kw("Ref") {
            return self.ref_body(None);
        }
        if self.eat_kw("mu") {
            let x = self.ident()?;
            self.sym(".")?;
            return self.ref_body(Some(x));
        }
        if self.eat_kw("forall") {
            let f = self.ident()?;
            self.sym("(")?;
            let tv = self.ident()?;
            self.sym("^")?;
            let x = self.ident()?;
            self.sym("<:")?;
            let bound = self.qtype()?;
            self.sym(")")?;
            self.sym(".")?;
            let body = self.qtype()?;
            return Ok(Type::all(&f, &tv, &x, bound, body));
        }
        if self.is_sym("(") {
            let is_fun = matches!(self.peek_at(1), Tok::Ident(_)) && matches!(self.peek_at(2), Tok::Sym("("));
            self.bump();
            if is_fun {
                let f = self.ident()?;
                self.sym("(")?;
                let x = self.ident()?;
                self.sym(":")?;
                let dom = self.qtype()?;
                self.sym(")")?;
                self.sym("->")?;
                let cod = self.qtype()?;
                self.sym(")")?;
                return Ok(Type::fun(&f, &x, dom, cod));
            }
            let t = self.ty()?;
            self.sym(")")?;
            return Ok(t);
        }
        if let Tok::Ident(_) = self.peek() {
            return Ok(Type::TVar(self.ident()?));
        }
        self.fail("a type")
    }

    fn ref_body(&mut self, binder: Option<String>) -> PResult<Type> {
        self.kw("Ref")?;
        self.sym("[")?;
        let write = self.qtype()?;
        let read = if self.eat_sym(",") {
            self.qtype()?
        } else {
            write.clone()
        };
        self.sym("]")?;
        Ok(match binder {
            Some(x) => Type::mu(&x, write, read),
            None if write == read => Type::reference(write),
            None => {
                let mut avoid = write.fv();
                avoid.extend(read.fv());
                let x = crate::syntax::fresh_name("z", &avoid);
                Type::mu(&x, write, read)
            }
        })
    }

    // ---- terms ----

    fn expr(&mut self) -> PResult<Term> {
        let start = self.span().start;
        if self.eat_kw("let") {
            let x = self.ident()?;
            let ann = if self.eat_sym(":") { Some(self.qtype()?) } else { None };
            self.sym("=")?;
            let bound = self.expr()?;
            self.kw("in")?;
            let body = self.expr()?;
            let sp = Span::new(start, self.prev_end());
            return Ok(at(sp, Term::let_in(&x, ann, bound, body)));
        }
        if self.eat_kw("fun") {
            let f = self.ident()?;
            self.sym("(")?;
            let x = self.ident()?;
            let dom = if self.eat_sym(":") { Some(self.qtype()?) } else { None };
            self.sym(")")?;
            let cod = if self.eat_sym(":") { Some(self.qtype()?) } else { None };
            self.sym("=>")?;
            let body = self.expr()?;
            let sp = Span::new(start, self.prev_end());
            return Ok(at(
                sp,
                Term::Abs {
                    f,
                    x,
                    dom,
                    cod,
                    body: Box::new(body),
                },
            ));
        }
        if self.eat_kw("tfun") {
            let f = self.ident()?;
            self.sym("(")?;
            let tv = self.ident()?;
            self.sym("^")?;
            let x = self.ident()?;
            self.sym("<:")?;
            let bound = self.qtype()?;
            self.sym(")")?;
            self.sym("=>")?;
            let body = self.expr()?;
            let sp = Span::new(start, self.prev_end());
            return Ok(at(sp, Term::tabs(&f, &tv, &x, bound, body)));
        }
        if self.eat_kw("if") {
            let c = self.expr()?;
            self.kw("then")?;
            let a = self.expr()?;
            self.kw("else")?;
            let b = self.expr()?;
            let sp = Span::new(start, self.prev_end());
            return Ok(at(sp, Term::ite(c, a, b)));
        }
        self.assign()
    }

    fn assign(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let lhs = self.mul()?;
        if self.eat_sym(":=") {
            let rhs = self.expr()?;
            let sp = Span::new(start, self.prev_end());
            return Ok(at(sp, Term::assign(lhs, rhs)));
        }
        Ok(lhs)
    }

    fn mul(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let mut t = self.app()?;
        while self.eat_sym("*") {
            let r = self.app()?;
            let sp = Span::new(start, self.prev_end());
            t = at(sp, Term::Mul(Box::new(t), Box::new(r)));
        }
        Ok(t)
    }

    fn starts_unary(&self) -> bool {
        match self.peek() {
            Tok::Nat(_) | Tok::Loc(_) => true,
            Tok::Sym(s) => matches!(*s, "(" | "!"),
            Tok::Ident(k) => {
                matches!(
                    k.as_str(),
                    "unit" | "true" | "false" | "ref" | "succ" | "pred" | "iszero"
                ) || (k != "_" && !KEYWORDS.contains(&k.as_str()))
            }
            Tok::Eof => false,
        }
    }

    fn app(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let mut t = self.unary()?;
        while self.starts_unary() {
            let a = self.unary()?;
            let sp = Span::new(start, self.prev_end());
            t = at(sp, Term::app(t, a));
        }
        Ok(t)
    }

    fn unary(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let op: Option<fn(Term) -> Term> = if self.eat_sym("!") {
            Some(Term::deref)
        } else if self.eat_kw("ref") {
            Some(Term::new_ref)
        } else if self.eat_kw("succ") {
            Some(|t| Term::Succ(Box::new(t)))
        } else if self.eat_kw("pred") {
            Some(|t| Term::Pred(Box::new(t)))
        } else if self.eat_kw("iszero") {
            Some(|t| Term::IsZero(Box::new(t)))
        } else {
            None
        };
        match op {
            Some(mk) => {
                let a = self.unary()?;
                Ok(at(Span::new(start, self.prev_end()), mk(a)))
            }
            None => self.postfix(),
        }
    }

    fn postfix(&mut self) -> PResult<Term> {
        let start = self.span().start;
        let mut t = self.atom()?;
        while self.eat_sym("[") {
            let q = self.qtype()?;
            self.sym("]")?;
            t = at(Span::new(start, self.prev_end()), Term::tapp(t, q));
        }
        Ok(t)
    }

    fn atom(&mut self) -> PResult<Term> {
        let sp = self.span();
        let t = match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                Term::Nat(n)
            }
            Tok::Loc(l) => {
                self.bump();
                Term::Loc(l)
            }
            Tok::Sym("(") => {
                self.bump();
                let inner = self.expr()?;
                if self.eat_sym(":") {
                    let q = self.qtype()?;
                    self.sym(")")?;
                    Term::ascribe(inner, q)
                } else {
                    self.sym(")")?;
                    return Ok(inner);
                }
            }
            Tok::Ident(k) if k == "unit" => {
                self.bump();
                Term::Unit
            }
            Tok::Ident(k) if k == "true" || k == "false" => {
                self.bump();
                Term::Bool(k == "true")
            }
            Tok::Ident(k) if k != "_" && !KEYWORDS.contains(&k.as_str()) => Term::Var(self.ident()?),
            _ => return self.fail("an expression"),
        };
        Ok(at(Span::new(sp.start, self.prev_end()), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Term {
        parse_program(s).unwrap().strip_spans()
    }

    #[test]
    fn parses_core_forms() {
        assert_eq!(p("!c x"), Term::app(Term::deref(Term::var("c")), Term::var("x")));
        assert_eq!(
            p("a := b := c"),
            Term::assign(Term::var("a"), Term::assign(Term::var("b"), Term::var("c")))
        );
        assert_eq!(p("#3"), Term::Loc(3));
        assert_eq!(
            p("2 * 3 * 4"),
            Term::Mul(
                Box::new(Term::Mul(Box::new(Term::nat(2)), Box::new(Term::nat(3)))),
                Box::new(Term::nat(4))
            )
        );
        assert_eq!(
            p("let x = unit in x"),
            Term::let_in("x", None, Term::Unit, Term::var("x"))
        );
    }

    #[test]
    fn parses_qualified_types() {
        let q = parse_qtype("(mu z. Ref[Bot^{}, Nat^{z}])^{c, &x, fresh, #1}").unwrap();
        assert_eq!(q.q, Qual::vars(["c", "x"]).with(Atom::Fresh).with(Atom::Loc(1)));
        let Type::Ref { x, write, read } = q.ty else { panic!() };
        assert_eq!(x, "z");
        assert_eq!(write.ty, Type::Bot);
        assert_eq!(read.q, Qual::var("z"));
        let f = parse_qtype("(f(x: Unit^{}) -> Unit^{x})^{}").unwrap();
        assert!(matches!(f.ty, Type::Fun { .. }));
    }

    #[test]
    fn reports_position_of_error() {
        let e = parse_program("let x = in x").unwrap_err();
        assert_eq!(e.span, Span::new(8, 10));
        assert_eq!(e.expected, "an expression");
        assert!(parse_program("let _ = unit in unit").is_err());
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(p("// hello\nunit // trailing"), Term::Unit);
    }
}
