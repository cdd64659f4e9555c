//! Abstract syntax of qualifiers, types and terms, with capture-avoiding
//! substitution and alpha-equivalence.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;

/// Byte range into the source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Var(String),
    Loc(usize),
    Fresh,
}

/// A finite set of atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qual(BTreeSet<Atom>);

impl Qual {
    pub fn empty() -> Self {
        Qual(BTreeSet::new())
    }

    pub fn fresh() -> Self {
        Qual::from_iter([Atom::Fresh])
    }

    pub fn var(x: &str) -> Self {
        Qual::from_iter([Atom::Var(x.to_string())])
    }

    pub fn loc(l: usize) -> Self {
        Qual::from_iter([Atom::Loc(l)])
    }

    pub fn vars<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Self {
        names.into_iter().map(|n| Atom::Var(n.to_string())).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.0.contains(a)
    }

    pub fn has_var(&self, x: &str) -> bool {
        self.0.contains(&Atom::Var(x.to_string()))
    }

    pub fn has_fresh(&self) -> bool {
        self.0.contains(&Atom::Fresh)
    }

    pub fn insert(&mut self, a: Atom) -> bool {
        self.0.insert(a)
    }

    pub fn remove(&mut self, a: &Atom) -> bool {
        self.0.remove(a)
    }

    pub fn with(&self, a: Atom) -> Qual {
        let mut q = self.clone();
        q.insert(a);
        q
    }

    pub fn union(&self, other: &Qual) -> Qual {
        Qual(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersect(&self, other: &Qual) -> Qual {
        Qual(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &Qual) -> Qual {
        Qual(self.0.difference(&other.0).cloned().collect())
    }

    /// `q ⊖ x`
    pub fn minus_var(&self, x: &str) -> Qual {
        let mut q = self.clone();
        q.remove(&Atom::Var(x.to_string()));
        q
    }

    pub fn without_fresh(&self) -> Qual {
        let mut q = self.clone();
        q.remove(&Atom::Fresh);
        q
    }

    pub fn is_subset(&self, other: &Qual) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(|a| match a {
            Atom::Var(x) => Some(x.as_str()),
            _ => None,
        })
    }

    pub fn locs(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().filter_map(|a| match a {
            Atom::Loc(l) => Some(*l),
            _ => None,
        })
    }

    pub fn only_vars(&self) -> Qual {
        self.0.iter().filter(|a| matches!(a, Atom::Var(_))).cloned().collect()
    }

    pub fn only_locs(&self) -> Qual {
        self.0.iter().filter(|a| matches!(a, Atom::Loc(_))).cloned().collect()
    }

    /// Simultaneous replacement of variable atoms.
    pub fn subst(&self, map: &BTreeMap<String, Qual>) -> Qual {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            match a {
                Atom::Var(x) if map.contains_key(x) => out.extend(map[x].0.iter().cloned()),
                _ => {
                    out.insert(a.clone());
                }
            }
        }
        Qual(out)
    }
}

impl FromIterator<Atom> for Qual {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Qual(iter.into_iter().collect())
    }
}

impl Extend<Atom> for Qual {
    fn extend<I: IntoIterator<Item = Atom>>(&mut self, iter: I) {
        self.0.extend(iter)
    }
}

impl IntoIterator for Qual {
    type Item = Atom;
    type IntoIter = std::collections::btree_set::IntoIter<Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a Qual {
    type Item = &'a Atom;
    type IntoIter = std::collections::btree_set::Iter<'a, Atom>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Unit,
    Nat,
    Bool,
    Top,
    Bot,
    TVar(String),
    /// `f(x: dom) -> cod`; `f` and `x` scope over `cod`.
    Fun {
        f: String,
        x: String,
        dom: Box<QType>,
        cod: Box<QType>,
    },
    /// `forall f(X^x <: bound). body`; `f`, `X`, `x` scope over `body`.
    All {
        f: String,
        tv: String,
        x: String,
        bound: Box<QType>,
        body: Box<QType>,
    },
    /// `mu x. Ref[write, read]`; `x` scopes over both components.
    Ref {
        x: String,
        write: Box<QType>,
        read: Box<QType>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QType {
    pub ty: Type,
    pub q: Qual,
}

impl QType {
    pub fn new(ty: Type, q: Qual) -> Self {
        QType { ty, q }
    }

    pub fn with_ty(&self, ty: Type) -> QType {
        QType::new(ty, self.q.clone())
    }

    pub fn with_q(&self, q: Qual) -> QType {
        QType::new(self.ty.clone(), q)
    }

    pub fn fv(&self) -> BTreeSet<String> {
        let mut out = self.ty.fv();
        out.extend(self.q.var_names().map(str::to_string));
        out
    }

    pub fn ftv(&self) -> BTreeSet<String> {
        self.ty.ftv()
    }

    pub fn subst(&self, s: &Subst) -> QType {
        QType::new(self.ty.subst(s), self.q.subst(&s.quals))
    }

    pub fn subst_qual(&self, x: &str, p: &Qual) -> QType {
        self.subst(&Subst::qual(x, p.clone()))
    }

    fn names(&self, out: &mut BTreeSet<String>) {
        self.ty.names(out);
        out.extend(self.q.var_names().map(str::to_string));
    }
}

impl Type {
    pub fn fun(f: &str, x: &str, dom: QType, cod: QType) -> Type {
        Type::Fun {
            f: f.into(),
            x: x.into(),
            dom: Box::new(dom),
            cod: Box::new(cod),
        }
    }

    pub fn all(f: &str, tv: &str, x: &str, bound: QType, body: QType) -> Type {
        Type::All {
            f: f.into(),
            tv: tv.into(),
            x: x.into(),
            bound: Box::new(bound),
            body: Box::new(body),
        }
    }

    pub fn mu(x: &str, write: QType, read: QType) -> Type {
        Type::Ref {
            x: x.into(),
            write: Box::new(write),
            read: Box::new(read),
        }
    }

    /// Non-cyclic plain reference `Ref[Q]`.
    pub fn reference(referent: QType) -> Type {
        let x = fresh_name("z", &referent.fv());
        Type::mu(&x, referent.clone(), referent)
    }

    /// Cyclic plain reference: binder appears in the referent qualifier.
    pub fn is_cyclic(&self) -> bool {
        match self {
            Type::Ref { x, write, read } => write.q.has_var(x) || read.q.has_var(x),
            _ => false,
        }
    }

    /// Free term/qualifier variables, including those in qualifiers.
    pub fn fv(&self) -> BTreeSet<String> {
        match self {
            Type::Unit | Type::Nat | Type::Bool | Type::Top | Type::Bot | Type::TVar(_) => BTreeSet::new(),
            Type::Fun { f, x, dom, cod } => {
                let mut c = cod.fv();
                c.remove(f);
                c.remove(x);
                c.extend(dom.fv());
                c
            }
            Type::All { f, x, bound, body, .. } => {
                let mut b = body.fv();
                b.remove(f);
                b.remove(x);
                b.extend(bound.fv());
                b
            }
            Type::Ref { x, write, read } => {
                let mut s = write.fv();
                s.extend(read.fv());
                s.remove(x);
                s
            }
        }
    }

    pub fn ftv(&self) -> BTreeSet<String> {
        match self {
            Type::TVar(v) => BTreeSet::from([v.clone()]),
            Type::Unit | Type::Nat | Type::Bool | Type::Top | Type::Bot => BTreeSet::new(),
            Type::Fun { dom, cod, .. } => {
                let mut s = dom.ftv();
                s.extend(cod.ftv());
                s
            }
            Type::All { tv, bound, body, .. } => {
                let mut b = body.ftv();
                b.remove(tv);
                b.extend(bound.ftv());
                b
            }
            Type::Ref { write, read, .. } => {
                let mut s = write.ftv();
                s.extend(read.ftv());
                s
            }
        }
    }

    /// Location atoms anywhere inside the type.
    pub fn locs(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_locs(&mut out);
        out
    }

    fn collect_locs(&self, out: &mut BTreeSet<usize>) {
        let q = |qt: &QType, out: &mut BTreeSet<usize>| {
            out.extend(qt.q.locs());
            qt.ty.collect_locs(out);
        };
        match self {
            Type::Fun { dom, cod, .. } => {
                q(dom, out);
                q(cod, out);
            }
            Type::All { bound, body, .. } => {
                q(bound, out);
                q(body, out);
            }
            Type::Ref { write, read, .. } => {
                q(write, out);
                q(read, out);
            }
            _ => {}
        }
    }

    /// Every identifier occurring anywhere, bound or free.
    fn names(&self, out: &mut BTreeSet<String>) {
        match self {
            Type::TVar(v) => {
                out.insert(v.clone());
            }
            Type::Fun { f, x, dom, cod } => {
                out.insert(f.clone());
                out.insert(x.clone());
                dom.names(out);
                cod.names(out);
            }
            Type::All { f, tv, x, bound, body } => {
                out.insert(f.clone());
                out.insert(tv.clone());
                out.insert(x.clone());
                bound.names(out);
                body.names(out);
            }
            Type::Ref { x, write, read } => {
                out.insert(x.clone());
                write.names(out);
                read.names(out);
            }
            _ => {}
        }
    }

    pub fn subst(&self, s: &Subst) -> Type {
        if s.is_empty() {
            return self.clone();
        }
        match self {
            Type::Unit | Type::Nat | Type::Bool | Type::Top | Type::Bot => self.clone(),
            Type::TVar(v) => s.types.get(v).cloned().unwrap_or_else(|| self.clone()),
            Type::Fun { f, x, dom, cod } => {
                let dom = dom.subst(s);
                let mut avoid = BTreeSet::new();
                cod.names(&mut avoid);
                let (inner, names) = s.enter(&[(f, false), (x, false)], &avoid);
                Type::Fun {
                    f: names[0].clone(),
                    x: names[1].clone(),
                    dom: Box::new(dom),
                    cod: Box::new(cod.subst(&inner)),
                }
            }
            Type::All { f, tv, x, bound, body } => {
                let bound = bound.subst(s);
                let mut avoid = BTreeSet::new();
                body.names(&mut avoid);
                let (inner, names) = s.enter(&[(f, false), (tv, true), (x, false)], &avoid);
                Type::All {
                    f: names[0].clone(),
                    tv: names[1].clone(),
                    x: names[2].clone(),
                    bound: Box::new(bound),
                    body: Box::new(body.subst(&inner)),
                }
            }
            Type::Ref { x, write, read } => {
                let mut avoid = BTreeSet::new();
                write.names(&mut avoid);
                read.names(&mut avoid);
                let (inner, names) = s.enter(&[(x, false)], &avoid);
                Type::Ref {
                    x: names[0].clone(),
                    write: Box::new(write.subst(&inner)),
                    read: Box::new(read.subst(&inner)),
                }
            }
        }
    }

    pub fn subst_qual(&self, x: &str, p: &Qual) -> Type {
        self.subst(&Subst::qual(x, p.clone()))
    }
}

/// Simultaneous substitution of qualifier variables (by qualifiers) and type
/// variables (by types).
#[derive(Clone, Debug, Default)]
pub struct Subst {
    pub quals: BTreeMap<String, Qual>,
    pub types: BTreeMap<String, Type>,
}

impl Subst {
    pub fn qual(x: &str, p: Qual) -> Subst {
        let mut s = Subst::default();
        s.quals.insert(x.to_string(), p);
        s
    }

    pub fn is_empty(&self) -> bool {
        self.quals.is_empty() && self.types.is_empty()
    }

    /// Names free in the range; binders with these names must be renamed.
    pub fn range_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for q in self.quals.values() {
            out.extend(q.var_names().map(str::to_string));
        }
        for t in self.types.values() {
            out.extend(t.fv());
            out.extend(t.ftv());
        }
        out
    }

    fn without(&self, name: &str, is_type: bool) -> Subst {
        let mut s = self.clone();
        if is_type {
            s.types.remove(name);
        } else {
            s.quals.remove(name);
        }
        s
    }

    /// Push the substitution under a list of binders `(name, is_type)`,
    /// shielding their scope and renaming any that would capture.
    fn enter(&self, binders: &[(&String, bool)], body_names: &BTreeSet<String>) -> (Subst, Vec<String>) {
        let mut s = self.clone();
        for (b, is_type) in binders {
            s = s.without(b, *is_type);
        }
        let mut names = Vec::new();
        if s.is_empty() {
            return (s, binders.iter().map(|(b, _)| (*b).clone()).collect());
        }
        let range = s.range_names();
        let mut avoid: BTreeSet<String> = range.union(body_names).cloned().collect();
        avoid.extend(binders.iter().map(|(b, _)| (*b).clone()));
        avoid.extend(s.quals.keys().cloned());
        avoid.extend(s.types.keys().cloned());
        for (b, is_type) in binders {
            if range.contains(*b) {
                let nb = fresh_name(b, &avoid);
                avoid.insert(nb.clone());
                if *is_type {
                    s.types.insert((*b).clone(), Type::TVar(nb.clone()));
                } else {
                    s.quals.insert((*b).clone(), Qual::var(&nb));
                }
                names.push(nb);
            } else {
                names.push((*b).clone());
            }
        }
        (s, names)
    }
}

/// A name based on `base` that is not in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) && base != "_" {
        return base.to_string();
    }
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..)
        .map(|n| format!("{stem}{n}"))
        .find(|c| !avoid.contains(c))
        .expect("unbounded search")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Unit,
    Nat(BigUint),
    Bool(bool),
    Var(String),
    Loc(usize),
    /// `fun f(x: dom) : cod => body`; annotations are optional only in the
    /// let-desugared form.
    Abs {
        f: String,
        x: String,
        dom: Option<QType>,
        cod: Option<QType>,
        body: Box<Term>,
    },
    App(Box<Term>, Box<Term>),
    Ref(Box<Term>),
    Deref(Box<Term>),
    Assign(Box<Term>, Box<Term>),
    TAbs {
        f: String,
        tv: String,
        x: String,
        bound: QType,
        body: Box<Term>,
    },
    TApp(Box<Term>, QType),
    Succ(Box<Term>),
    Pred(Box<Term>),
    Mul(Box<Term>, Box<Term>),
    IsZero(Box<Term>),
    If(Box<Term>, Box<Term>, Box<Term>),
    Ascribe(Box<Term>, QType),
    /// Source position marker; transparent to typing and evaluation.
    At(Span, Box<Term>),
}

/// Self name used by the let desugaring.
pub const LET_SELF: &str = "_";

impl Term {
    pub fn nat(n: u64) -> Term {
        Term::Nat(BigUint::from(n))
    }

    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string())
    }

    pub fn abs(f: &str, x: &str, dom: QType, cod: QType, body: Term) -> Term {
        Term::Abs {
            f: f.into(),
            x: x.into(),
            dom: Some(dom),
            cod: Some(cod),
            body: Box::new(body),
        }
    }

    pub fn tabs(f: &str, tv: &str, x: &str, bound: QType, body: Term) -> Term {
        Term::TAbs {
            f: f.into(),
            tv: tv.into(),
            x: x.into(),
            bound,
            body: Box::new(body),
        }
    }

    pub fn app(a: Term, b: Term) -> Term {
        Term::App(Box::new(a), Box::new(b))
    }

    pub fn tapp(a: Term, q: QType) -> Term {
        Term::TApp(Box::new(a), q)
    }

    pub fn new_ref(t: Term) -> Term {
        Term::Ref(Box::new(t))
    }

    pub fn deref(t: Term) -> Term {
        Term::Deref(Box::new(t))
    }

    pub fn assign(a: Term, b: Term) -> Term {
        Term::Assign(Box::new(a), Box::new(b))
    }

    pub fn ascribe(t: Term, q: QType) -> Term {
        Term::Ascribe(Box::new(t), q)
    }

    pub fn ite(c: Term, t: Term, e: Term) -> Term {
        Term::If(Box::new(c), Box::new(t), Box::new(e))
    }

    /// `let x [: ann] = bound in body`
    pub fn let_in(x: &str, ann: Option<QType>, bound: Term, body: Term) -> Term {
        Term::app(
            Term::Abs {
                f: LET_SELF.into(),
                x: x.into(),
                dom: ann,
                cod: None,
                body: Box::new(body),
            },
            bound,
        )
    }

    /// Strip leading position markers.
    pub fn peel(&self) -> &Term {
        let mut t = self;
        while let Term::At(_, inner) = t {
            t = inner;
        }
        t
    }

    pub fn strip_spans(&self) -> Term {
        self.map_children(&|t| t.strip_spans(), true)
    }

    pub fn is_value(&self) -> bool {
        matches!(
            self.peel(),
            Term::Unit | Term::Nat(_) | Term::Bool(_) | Term::Loc(_) | Term::Abs { .. } | Term::TAbs { .. }
        )
    }

    /// Rebuild with `g` applied to each immediate child term; `At` nodes are
    /// dropped when `drop_at` is set.
    fn map_children(&self, g: &dyn Fn(&Term) -> Term, drop_at: bool) -> Term {
        let b = |t: &Term| Box::new(g(t));
        match self {
            Term::Unit | Term::Nat(_) | Term::Bool(_) | Term::Var(_) | Term::Loc(_) => self.clone(),
            Term::Abs { f, x, dom, cod, body } => Term::Abs {
                f: f.clone(),
                x: x.clone(),
                dom: dom.clone(),
                cod: cod.clone(),
                body: b(body),
            },
            Term::App(a, c) => Term::App(b(a), b(c)),
            Term::Ref(a) => Term::Ref(b(a)),
            Term::Deref(a) => Term::Deref(b(a)),
            Term::Assign(a, c) => Term::Assign(b(a), b(c)),
            Term::TAbs { f, tv, x, bound, body } => Term::TAbs {
                f: f.clone(),
                tv: tv.clone(),
                x: x.clone(),
                bound: bound.clone(),
                body: b(body),
            },
            Term::TApp(a, q) => Term::TApp(b(a), q.clone()),
            Term::Succ(a) => Term::Succ(b(a)),
            Term::Pred(a) => Term::Pred(b(a)),
            Term::Mul(a, c) => Term::Mul(b(a), b(c)),
            Term::IsZero(a) => Term::IsZero(b(a)),
            Term::If(a, c, d) => Term::If(b(a), b(c), b(d)),
            Term::Ascribe(a, q) => Term::Ascribe(b(a), q.clone()),
            Term::At(s, a) => {
                if drop_at {
                    g(a)
                } else {
                    Term::At(*s, b(a))
                }
            }
        }
    }

    fn children(&self) -> Vec<&Term> {
        match self {
            Term::Unit | Term::Nat(_) | Term::Bool(_) | Term::Var(_) | Term::Loc(_) => vec![],
            Term::Abs { body, .. } | Term::TAbs { body, .. } => vec![body],
            Term::Ref(a)
            | Term::Deref(a)
            | Term::TApp(a, _)
            | Term::Succ(a)
            | Term::Pred(a)
            | Term::IsZero(a)
            | Term::Ascribe(a, _)
            | Term::At(_, a) => vec![a],
            Term::App(a, c) | Term::Assign(a, c) | Term::Mul(a, c) => vec![a, c],
            Term::If(a, c, d) => vec![a, c, d],
        }
    }

    /// Free variable and location atoms, including those mentioned by
    /// annotations.
    pub fn free_atoms(&self) -> Qual {
        match self {
            Term::Var(x) => Qual::var(x),
            Term::Loc(l) => Qual::loc(*l),
            Term::Abs { f, x, dom, cod, body } => {
                let mut inner = body.free_atoms();
                if let Some(c) = cod {
                    inner.extend(qtype_atoms(c));
                }
                let mut q = inner.minus_var(f).minus_var(x);
                if let Some(d) = dom {
                    q.extend(qtype_atoms(d));
                }
                q
            }
            Term::TAbs { f, x, bound, body, .. } => {
                let mut q = body.free_atoms().minus_var(f).minus_var(x);
                q.extend(qtype_atoms(bound));
                q
            }
            Term::TApp(a, qt) | Term::Ascribe(a, qt) => {
                let mut q = a.free_atoms();
                q.extend(qtype_atoms(qt));
                q
            }
            _ => {
                let mut q = Qual::empty();
                for c in self.children() {
                    q.extend(c.free_atoms().iter().cloned());
                }
                q
            }
        }
    }

    pub fn fv(&self) -> BTreeSet<String> {
        self.free_atoms().var_names().map(str::to_string).collect()
    }

    pub fn ftv(&self) -> BTreeSet<String> {
        let of = |q: &QType| q.ftv();
        match self {
            Term::Abs { dom, cod, body, .. } => {
                let mut s = body.ftv();
                s.extend(dom.iter().flat_map(of));
                s.extend(cod.iter().flat_map(of));
                s
            }
            Term::TAbs { tv, bound, body, .. } => {
                let mut s = body.ftv();
                s.remove(tv);
                s.extend(of(bound));
                s
            }
            Term::TApp(a, q) | Term::Ascribe(a, q) => {
                let mut s = a.ftv();
                s.extend(of(q));
                s
            }
            _ => self.children().into_iter().flat_map(|c| c.ftv()).collect(),
        }
    }

    fn names(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Abs { f, x, dom, cod, body } => {
                out.insert(f.clone());
                out.insert(x.clone());
                dom.iter().for_each(|d| d.names(out));
                cod.iter().for_each(|c| c.names(out));
                body.names(out);
            }
            Term::TAbs { f, tv, x, bound, body } => {
                out.insert(f.clone());
                out.insert(tv.clone());
                out.insert(x.clone());
                bound.names(out);
                body.names(out);
            }
            Term::TApp(a, q) | Term::Ascribe(a, q) => {
                a.names(out);
                q.names(out);
            }
            _ => self.children().into_iter().for_each(|c| c.names(out)),
        }
    }

    pub fn subst(&self, s: &TermSubst) -> Term {
        if s.is_empty() {
            return self.clone();
        }
        match self {
            Term::Var(x) => s.terms.get(x).cloned().unwrap_or_else(|| self.clone()),
            Term::Abs { f, x, dom, cod, body } => {
                let dom = dom.as_ref().map(|d| d.subst(&s.sub));
                let mut avoid = BTreeSet::new();
                body.names(&mut avoid);
                cod.iter().for_each(|c| c.names(&mut avoid));
                let (inner, names) = s.enter(&[(f, false), (x, false)], &avoid);
                Term::Abs {
                    f: names[0].clone(),
                    x: names[1].clone(),
                    dom,
                    cod: cod.as_ref().map(|c| c.subst(&inner.sub)),
                    body: Box::new(body.subst(&inner)),
                }
            }
            Term::TAbs { f, tv, x, bound, body } => {
                let bound = bound.subst(&s.sub);
                let mut avoid = BTreeSet::new();
                body.names(&mut avoid);
                let (inner, names) = s.enter(&[(f, false), (tv, true), (x, false)], &avoid);
                Term::TAbs {
                    f: names[0].clone(),
                    tv: names[1].clone(),
                    x: names[2].clone(),
                    bound,
                    body: Box::new(body.subst(&inner)),
                }
            }
            Term::TApp(a, q) => Term::TApp(Box::new(a.subst(s)), q.subst(&s.sub)),
            Term::Ascribe(a, q) => Term::Ascribe(Box::new(a.subst(s)), q.subst(&s.sub)),
            _ => self.map_children(&|c| c.subst(s), false),
        }
    }

    /// `t[v/x]`, replacing the qualifier atom `x` by `qual`.
    pub fn subst_var(&self, x: &str, v: &Term, qual: &Qual) -> Term {
        let mut s = TermSubst::default();
        s.terms.insert(x.to_string(), v.clone());
        s.sub.quals.insert(x.to_string(), qual.clone());
        self.subst(&s)
    }

    /// Rename a free variable everywhere, including in qualifiers.
    pub fn rename(&self, from: &str, to: &str) -> Term {
        self.subst_var(from, &Term::var(to), &Qual::var(to))
    }

    pub fn alpha_eq(&self, other: &Term) -> bool {
        canon_term(&self.strip_spans(), &mut Canon::default())
            == canon_term(&other.strip_spans(), &mut Canon::default())
    }

    /// Count of nodes, used for generator budgets and shrinking.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

fn qtype_atoms(q: &QType) -> Qual {
    let mut out: Qual = q.fv().into_iter().map(Atom::Var).collect();
    out.extend(q.q.locs().map(Atom::Loc));
    out.extend(q.ty.locs().into_iter().map(Atom::Loc));
    out
}

/// Substitution of values for term variables, together with the matching
/// qualifier and type substitution.
#[derive(Clone, Debug, Default)]
pub struct TermSubst {
    pub terms: BTreeMap<String, Term>,
    pub sub: Subst,
}

impl TermSubst {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.sub.is_empty()
    }

    fn range_names(&self) -> BTreeSet<String> {
        let mut out = self.sub.range_names();
        for t in self.terms.values() {
            out.extend(t.fv());
            out.extend(t.ftv());
        }
        out
    }

    fn enter(&self, binders: &[(&String, bool)], body_names: &BTreeSet<String>) -> (TermSubst, Vec<String>) {
        let mut s = self.clone();
        for (b, is_type) in binders {
            if *is_type {
                s.sub.types.remove(*b);
            } else {
                s.terms.remove(*b);
                s.sub.quals.remove(*b);
            }
        }
        if s.is_empty() {
            return (s, binders.iter().map(|(b, _)| (*b).clone()).collect());
        }
        let range = s.range_names();
        let mut avoid: BTreeSet<String> = range.union(body_names).cloned().collect();
        avoid.extend(binders.iter().map(|(b, _)| (*b).clone()));
        avoid.extend(s.terms.keys().cloned());
        avoid.extend(s.sub.quals.keys().cloned());
        avoid.extend(s.sub.types.keys().cloned());
        let mut names = Vec::new();
        for (b, is_type) in binders {
            if range.contains(*b) {
                let nb = fresh_name(b, &avoid);
                avoid.insert(nb.clone());
                if *is_type {
                    s.sub.types.insert((*b).clone(), Type::TVar(nb.clone()));
                } else {
                    s.terms.insert((*b).clone(), Term::Var(nb.clone()));
                    s.sub.quals.insert((*b).clone(), Qual::var(&nb));
                }
                names.push(nb);
            } else {
                names.push((*b).clone());
            }
        }
        (s, names)
    }
}

/// Binder-renaming state for canonical forms: bound names map to `%n`,
/// which never collides with a source identifier.
#[derive(Default)]
struct Canon {
    env: Vec<(String, String)>,
    next: usize,
}

impl Canon {
    fn bind(&mut self, name: &str) -> String {
        let c = format!("%{}", self.next);
        self.next += 1;
        self.env.push((name.to_string(), c.clone()));
        c
    }

    fn lookup(&self, name: &str) -> String {
        self.env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| name.to_string())
    }

    fn qual(&self, q: &Qual) -> Qual {
        q.iter()
            .map(|a| match a {
                Atom::Var(x) => Atom::Var(self.lookup(x)),
                other => other.clone(),
            })
            .collect()
    }

    fn scoped<R>(&mut self, names: &[&str], k: impl FnOnce(&mut Canon, Vec<String>) -> R) -> R {
        let depth = self.env.len();
        let fresh = names.iter().map(|n| self.bind(n)).collect();
        let r = k(self, fresh);
        self.env.truncate(depth);
        r
    }
}

fn canon_qtype(q: &QType, c: &mut Canon) -> QType {
    QType::new(canon_type(&q.ty, c), c.qual(&q.q))
}

fn canon_type(t: &Type, c: &mut Canon) -> Type {
    match t {
        Type::TVar(v) => Type::TVar(c.lookup(v)),
        Type::Fun { f, x, dom, cod } => {
            let dom = canon_qtype(dom, c);
            c.scoped(&[f, x], |c, n| Type::fun(&n[0], &n[1], dom, canon_qtype(cod, c)))
        }
        Type::All { f, tv, x, bound, body } => {
            let bound = canon_qtype(bound, c);
            c.scoped(&[f, tv, x], |c, n| {
                Type::all(&n[0], &n[1], &n[2], bound, canon_qtype(body, c))
            })
        }
        Type::Ref { x, write, read } => c.scoped(&[x], |c, n| {
            let w = canon_qtype(write, c);
            Type::mu(&n[0], w, canon_qtype(read, c))
        }),
        _ => t.clone(),
    }
}

fn canon_term(t: &Term, c: &mut Canon) -> Term {
    match t {
        Term::Var(x) => Term::Var(c.lookup(x)),
        Term::Abs { f, x, dom, cod, body } => {
            let dom = dom.as_ref().map(|d| canon_qtype(d, c));
            c.scoped(&[f, x], |c, n| Term::Abs {
                f: n[0].clone(),
                x: n[1].clone(),
                dom,
                cod: cod.as_ref().map(|q| canon_qtype(q, c)),
                body: Box::new(canon_term(body, c)),
            })
        }
        Term::TAbs { f, tv, x, bound, body } => {
            let bound = canon_qtype(bound, c);
            c.scoped(&[f, tv, x], |c, n| {
                Term::tabs(&n[0], &n[1], &n[2], bound, canon_term(body, c))
            })
        }
        Term::TApp(a, q) => Term::TApp(Box::new(canon_term(a, c)), canon_qtype(q, c)),
        Term::Ascribe(a, q) => Term::Ascribe(Box::new(canon_term(a, c)), canon_qtype(q, c)),
        Term::Unit | Term::Nat(_) | Term::Bool(_) | Term::Loc(_) => t.clone(),
        Term::App(a, b) => Term::app(canon_term(a, c), canon_term(b, c)),
        Term::Ref(a) => Term::new_ref(canon_term(a, c)),
        Term::Deref(a) => Term::deref(canon_term(a, c)),
        Term::Assign(a, b) => Term::assign(canon_term(a, c), canon_term(b, c)),
        Term::Succ(a) => Term::Succ(Box::new(canon_term(a, c))),
        Term::Pred(a) => Term::Pred(Box::new(canon_term(a, c))),
        Term::Mul(a, b) => Term::Mul(Box::new(canon_term(a, c)), Box::new(canon_term(b, c))),
        Term::IsZero(a) => Term::IsZero(Box::new(canon_term(a, c))),
        Term::If(a, b, d) => Term::ite(canon_term(a, c), canon_term(b, c), canon_term(d, c)),
        Term::At(_, a) => canon_term(a, c),
    }
}

pub fn type_alpha_eq(a: &Type, b: &Type) -> bool {
    canon_type(a, &mut Canon::default()) == canon_type(b, &mut Canon::default())
}

pub fn qtype_alpha_eq(a: &QType, b: &QType) -> bool {
    canon_qtype(a, &mut Canon::default()) == canon_qtype(b, &mut Canon::default())
}
