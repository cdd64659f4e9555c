//! Concrete syntax printing. Output reparses to an alpha-equivalent term.

use std::fmt;

use crate::syntax::{Atom, QType, Qual, Term, Type, LET_SELF};

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(x) => write!(f, "{x}"),
            Atom::Loc(l) => write!(f, "#{l}"),
            Atom::Fresh => write!(f, "fresh"),
        }
    }
}

impl fmt::Display for Qual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.ty, self.q)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => write!(f, "Unit"),
            Type::Nat => write!(f, "Nat"),
            Type::Bool => write!(f, "Bool"),
            Type::Top => write!(f, "Top"),
            Type::Bot => write!(f, "Bot"),
            Type::TVar(v) => write!(f, "{v}"),
            Type::Fun { f: s, x, dom, cod } => write!(f, "({s}({x}: {dom}) -> {cod})"),
            Type::All {
                f: s,
                tv,
                x,
                bound,
                body,
            } => write!(f, "(forall {s}({tv}^{x} <: {bound}). {body})"),
            Type::Ref { x, write, read } => {
                if write == read && !write.fv().contains(x) {
                    write!(f, "Ref[{write}]")
                } else if write == read {
                    write!(f, "(mu {x}. Ref[{write}])")
                } else {
                    write!(f, "(mu {x}. Ref[{write}, {read}])")
                }
            }
        }
    }
}

/// Binding strength; a child printed below its required level is
/// parenthesized.
fn prec(t: &Term) -> u8 {
    match t {
        Term::At(_, a) => prec(a),
        Term::Abs { .. } | Term::TAbs { .. } | Term::If(..) => 0,
        Term::App(fun, _) if as_let(fun).is_some() => 0,
        Term::Assign(..) => 1,
        Term::Mul(..) => 2,
        Term::App(..) => 3,
        Term::Ref(_) | Term::Deref(_) | Term::Succ(_) | Term::Pred(_) | Term::IsZero(_) => 4,
        _ => 5,
    }
}

struct LetParts<'a> {
    x: &'a str,
    ann: &'a Option<QType>,
    body: &'a Term,
}

fn as_let(fun: &Term) -> Option<LetParts<'_>> {
    match fun.peel() {
        Term::Abs {
            f,
            x,
            dom,
            cod: None,
            body,
        } if f == LET_SELF => Some(LetParts { x, ann: dom, body }),
        _ => None,
    }
}

struct At<'a>(&'a Term, u8);

impl fmt::Display for At<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if prec(self.0) < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::At(_, a) => write!(f, "{a}"),
            Term::Unit => write!(f, "unit"),
            Term::Nat(n) => write!(f, "{n}"),
            Term::Bool(b) => write!(f, "{b}"),
            Term::Var(x) => write!(f, "{x}"),
            Term::Loc(l) => write!(f, "#{l}"),
            Term::Abs {
                f: s,
                x,
                dom,
                cod,
                body,
            } => {
                write!(f, "fun {s}({x}")?;
                if let Some(d) = dom {
                    write!(f, ": {d}")?;
                }
                write!(f, ")")?;
                if let Some(c) = cod {
                    write!(f, " : {c}")?;
                }
                write!(f, " => {body}")
            }
            Term::App(fun, arg) => match as_let(fun) {
                Some(l) => {
                    write!(f, "let {}", l.x)?;
                    if let Some(a) = l.ann {
                        write!(f, " : {a}")?;
                    }
                    write!(f, " = {} in {}", arg, l.body)
                }
                None => write!(f, "{} {}", At(fun, 3), At(arg, 5)),
            },
            Term::Ref(a) => write!(f, "ref {}", At(a, 4)),
            Term::Deref(a) => write!(f, "!{}", At(a, 4)),
            Term::Assign(a, b) => write!(f, "{} := {}", At(a, 2), b),
            Term::TAbs {
                f: s,
                tv,
                x,
                bound,
                body,
            } => write!(f, "tfun {s}({tv}^{x} <: {bound}) => {body}"),
            Term::TApp(a, q) => write!(f, "{}[{q}]", At(a, 5)),
            Term::Succ(a) => write!(f, "succ {}", At(a, 4)),
            Term::Pred(a) => write!(f, "pred {}", At(a, 4)),
            Term::IsZero(a) => write!(f, "iszero {}", At(a, 4)),
            Term::Mul(a, b) => write!(f, "{} * {}", At(a, 2), At(b, 3)),
            Term::If(c, a, b) => write!(f, "if {c} then {a} else {b}"),
            Term::Ascribe(a, q) => write!(f, "({a} : {q})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qualifiers_print_sorted_with_fresh_last() {
        let q = Qual::vars(["b", "a"]).with(Atom::Fresh).with(Atom::Loc(2));
        assert_eq!(q.to_string(), "{a,b,#2,fresh}");
        assert_eq!(Qual::empty().to_string(), "{}");
    }

    #[test]
    fn types_print_in_source_syntax() {
        let unit = QType::new(Type::Unit, Qual::empty());
        let f = Type::fun("f", "x", unit.clone(), QType::new(Type::Unit, Qual::var("x")));
        assert_eq!(f.to_string(), "(f(x: Unit^{}) -> Unit^{x})");
        let cyc = Type::mu(
            "z",
            QType::new(f.clone(), Qual::var("z")),
            QType::new(f, Qual::var("z")),
        );
        assert!(cyc.to_string().starts_with("(mu z. Ref[(f(x"));
        assert_eq!(Type::reference(unit).to_string(), "Ref[Unit^{}]");
    }

    #[test]
    fn terms_parenthesize_by_precedence() {
        let t = Term::app(Term::deref(Term::var("c")), Term::var("x"));
        assert_eq!(t.to_string(), "!c x");
        let t = Term::deref(Term::app(Term::var("c"), Term::var("x")));
        assert_eq!(t.to_string(), "!(c x)");
        let t = Term::let_in("x", None, Term::Unit, Term::var("x"));
        assert_eq!(t.to_string(), "let x = unit in x");
        let t = Term::app(Term::var("f"), Term::let_in("x", None, Term::Unit, Term::var("x")));
        assert_eq!(t.to_string(), "f (let x = unit in x)");
    }
}
