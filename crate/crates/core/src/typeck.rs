//! Bidirectional typechecker.
//!
//! `synth` returns the minimal qualifier for a term; `check` applies
//! subsumption (with the escape step) against an expected qualified type.
//! Binders that clash with names already in `Γ` are renamed on entry, so the
//! context never holds duplicates.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::env::{lookup_var, Ctx, Env, EnvError, Store, StoreEntry, StoreTyping};
use crate::qual::{is_singleton_or_empty, qtrans};
use crate::subtype::{escape, sub_qtype, sub_qtype_esc, sub_ty, SubFail};
use crate::syntax::{fresh_name, qtype_alpha_eq, Atom, QType, Qual, Span, Subst, Term, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ErrorKind {
    UnboundVariable,
    Unobservable,
    FreshReferent,
    ReferentMismatch,
    CyclicAssigneeNotVariable,
    CyclicQualifierNotSingleton,
    SeparationViolation,
    DependentReturnEscape,
    NotAFunction,
    NotAReference,
    SubtypeFailure,
    WriteForbidden,
    ObservationEscape,
    AnnotationRequired,
    BoundViolation,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::UnboundVariable => "UnboundVariable",
            ErrorKind::Unobservable => "Unobservable",
            ErrorKind::FreshReferent => "FreshReferent",
            ErrorKind::ReferentMismatch => "ReferentMismatch",
            ErrorKind::CyclicAssigneeNotVariable => "CyclicAssigneeNotVariable",
            ErrorKind::CyclicQualifierNotSingleton => "CyclicQualifierNotSingleton",
            ErrorKind::SeparationViolation => "SeparationViolation",
            ErrorKind::DependentReturnEscape => "DependentReturnEscape",
            ErrorKind::NotAFunction => "NotAFunction",
            ErrorKind::NotAReference => "NotAReference",
            ErrorKind::SubtypeFailure => "SubtypeFailure",
            ErrorKind::WriteForbidden => "WriteForbidden",
            ErrorKind::ObservationEscape => "ObservationEscape",
            ErrorKind::AnnotationRequired => "AnnotationRequired",
            ErrorKind::BoundViolation => "BoundViolation",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{kind}: {message}")]
pub struct TypeError {
    pub kind: ErrorKind,
    pub span: Option<Span>,
    pub message: String,
    pub expected: Option<Box<QType>>,
    pub actual: Option<Box<QType>>,
    /// Which half of a subsumption failed, when that is the cause.
    pub stage: Option<SubFail>,
}

impl TypeError {
    fn new(kind: ErrorKind, span: Option<Span>, message: impl Into<String>) -> Self {
        TypeError {
            kind,
            span,
            message: message.into(),
            expected: None,
            actual: None,
            stage: None,
        }
    }

    fn retag(mut self, kind: ErrorKind, message: impl Into<String>) -> Self {
        self.kind = kind;
        self.message = message.into();
        self
    }
}

type Res<T> = Result<T, TypeError>;

/// Identity of a `ref` node, its address inside the term being checked.
pub type NodeId = usize;

pub fn node_id(t: &Term) -> NodeId {
    t as *const Term as usize
}

pub struct Checker<'s> {
    sigma: &'s StoreTyping,
    /// Store-typing entries chosen for each checked `ref` node.
    refs: RefCell<BTreeMap<NodeId, StoreEntry>>,
    bindings: RefCell<Vec<Binding>>,
}

/// A term variable introduced while checking, with the span of the term
/// whose body it scopes over.
#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub name: String,
    pub ty: QType,
    pub scope: Option<Span>,
}

/// Type a closed program with empty `Γ`, `Σ` and `φ`.
pub fn typecheck_program(t: &Term) -> Res<QType> {
    let sigma = StoreTyping::new();
    Checker::new(&sigma).synth(&Ctx::new(), &Qual::empty(), t)
}

/// Type a runtime term: empty `Γ`, observing every location of `Σ`.
pub fn typecheck_runtime(t: &Term, sigma: &StoreTyping) -> Res<QType> {
    Checker::new(sigma).synth(&Ctx::new(), &sigma.dom(), t)
}

/// `[Γ | Σ]^φ ⊢ σ`: every observable cell holds a value of its declared
/// referent type, and `φ ⊆ dom(σ) ⊆ dom(Σ)`.
pub fn wf_store(ctx: &Ctx, sigma: &StoreTyping, phi: &Qual, store: &Store) -> Result<(), String> {
    let chk = Checker::new(sigma);
    for l in phi.locs() {
        let Some(v) = store.get(l) else {
            return Err(format!("#{l} observable but not allocated"));
        };
        let Some(e) = sigma.get(l) else {
            return Err(format!("#{l} has no store typing"));
        };
        if !v.is_value() {
            return Err(format!("#{l} holds a non-value"));
        }
        chk.check(ctx, phi, v, &e.at(l)).map_err(|err| format!("#{l}: {err}"))?;
    }
    if let Some(l) = store.cells().map(|(l, _)| l).find(|l| *l >= sigma.len()) {
        return Err(format!("#{l} allocated but untyped"));
    }
    Ok(())
}

fn env_err(e: EnvError, sp: Option<Span>) -> TypeError {
    match e {
        EnvError::Unbound(x) => TypeError::new(ErrorKind::UnboundVariable, sp, format!("unbound variable {x}")),
        EnvError::Unobservable(x) => TypeError::new(ErrorKind::Unobservable, sp, format!("{x} is not observable here")),
        EnvError::IllScoped(who, what) => TypeError::new(
            ErrorKind::UnboundVariable,
            sp,
            format!("{what} is not in scope in the type of {who}"),
        ),
    }
}

fn fv_mentions(t: &QType, x: &str) -> bool {
    t.ty.fv().contains(x)
}

impl<'s> Checker<'s> {
    pub fn new(sigma: &'s StoreTyping) -> Self {
        Checker {
            sigma,
            refs: RefCell::new(BTreeMap::new()),
            bindings: RefCell::new(Vec::new()),
        }
    }

    /// Bindings in the order they were first checked.
    pub fn bindings(&self) -> Vec<Binding> {
        self.bindings.borrow().clone()
    }

    fn bind(&self, name: &str, ty: &QType, scope: Option<Span>) {
        let mut bs = self.bindings.borrow_mut();
        if !bs.iter().any(|b| b.name == name && b.scope == scope) {
            bs.push(Binding {
                name: name.to_string(),
                ty: ty.clone(),
                scope,
            });
        }
    }

    /// Store-typing entry recorded for the `ref` node `id` during the last
    /// successful check of it.
    pub fn ref_entry(&self, id: NodeId) -> Option<StoreEntry> {
        self.refs.borrow().get(&id).cloned()
    }

    fn env<'a>(&'a self, ctx: &'a Ctx) -> Env<'a> {
        Env::new(ctx, self.sigma)
    }

    pub fn synth(&self, ctx: &Ctx, phi: &Qual, t: &Term) -> Res<QType> {
        self.synth_at(ctx, phi, t, None)
    }

    pub fn check(&self, ctx: &Ctx, phi: &Qual, t: &Term, q: &QType) -> Res<()> {
        self.check_at(ctx, phi, t, q, None)
    }

    fn wf(&self, ctx: &Ctx, q: &QType, who: &str, sp: Option<Span>) -> Res<()> {
        ctx.check_scoped(who, q, self.sigma).map_err(|e| env_err(e, sp))
    }

    /// Free variables and locations of a closure must be observable.
    fn observable(&self, ctx: &Ctx, phi: &Qual, q: &Qual, sp: Option<Span>) -> Res<()> {
        for a in q {
            match a {
                Atom::Var(v) if !ctx.has_qual_var(v) => {
                    return Err(TypeError::new(
                        ErrorKind::UnboundVariable,
                        sp,
                        format!("unbound variable {v}"),
                    ))
                }
                Atom::Loc(l) if *l >= self.sigma.len() => {
                    return Err(TypeError::new(
                        ErrorKind::UnboundVariable,
                        sp,
                        format!("unknown location #{l}"),
                    ))
                }
                Atom::Fresh => {}
                _ if !phi.contains(a) => {
                    return Err(TypeError::new(
                        ErrorKind::Unobservable,
                        sp,
                        format!("{a} is not observable here"),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn subsume(&self, ctx: &Ctx, phi: &Qual, actual: &QType, expected: &QType, sp: Option<Span>) -> Res<()> {
        sub_qtype_esc(&self.env(ctx), phi, actual, expected).map_err(|why| {
            let msg = match &why {
                SubFail::Type => format!("type {} is not a subtype of {}", actual.ty, expected.ty),
                SubFail::Qual(a) => format!("qualifier {} does not fit in {} ({a} escapes)", actual.q, expected.q),
                SubFail::Escape => format!("{} cannot be viewed at {}", actual, expected),
            };
            let mut e = TypeError::new(ErrorKind::SubtypeFailure, sp, msg);
            e.expected = Some(Box::new(expected.clone()));
            e.actual = Some(Box::new(actual.clone()));
            e.stage = Some(why);
            e
        })
    }

    fn check_at(&self, ctx: &Ctx, phi: &Qual, t: &Term, q: &QType, sp: Option<Span>) -> Res<()> {
        if let Term::At(s, inner) = t {
            return self.check_at(ctx, phi, inner, q, Some(*s));
        }
        let outside = q.q.without_fresh().difference(phi);
        if let Some(a) = outside.iter().next() {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("expected qualifier {} mentions {a}, which is not observable", q.q),
            ));
        }
        match t {
            Term::Ref(init) if matches!(q.ty, Type::Ref { .. }) => {
                let cand = self.synth_ref_against(ctx, phi, t, init, &q.ty, sp)?;
                self.subsume(ctx, phi, &cand, q, sp)
            }
            Term::If(c, a, b) => {
                self.cond(ctx, phi, c, sp)?;
                self.check_at(ctx, phi, a, q, sp)?;
                self.check_at(ctx, phi, b, q, sp)
            }
            _ => {
                let actual = self.synth_at(ctx, phi, t, sp)?;
                self.subsume(ctx, phi, &actual, q, sp)
            }
        }
    }

    fn synth_at(&self, ctx: &Ctx, phi: &Qual, t: &Term, sp: Option<Span>) -> Res<QType> {
        let empty = |ty| Ok(QType::new(ty, Qual::empty()));
        match t {
            Term::At(s, inner) => self.synth_at(ctx, phi, inner, Some(*s)),
            Term::Unit => empty(Type::Unit),
            Term::Nat(_) => empty(Type::Nat),
            Term::Bool(_) => empty(Type::Bool),
            Term::Var(y) => {
                let ty = lookup_var(ctx, phi, y).map_err(|e| env_err(e, sp))?;
                Ok(QType::new(ty.ty, Qual::var(y)))
            }
            Term::Loc(l) => self.synth_loc(phi, *l, sp),
            Term::Abs {
                f,
                x,
                dom: Some(dom),
                cod: Some(cod),
                body,
            } => self.synth_abs(ctx, phi, t, f, x, dom, cod, body, sp),
            Term::Abs { .. } => Err(TypeError::new(
                ErrorKind::AnnotationRequired,
                sp,
                "function needs parameter and result annotations",
            )),
            Term::App(fun, arg) => {
                if let Term::Abs { f, x, dom, cod, body } = fun.peel() {
                    if dom.is_none() || cod.is_none() {
                        return self.synth_let(ctx, phi, fun, f, x, dom, cod, body, arg, sp);
                    }
                }
                let ft = self.synth_at(ctx, phi, fun, sp)?;
                self.apply(ctx, phi, ft, arg, None, sp)
            }
            Term::Ref(init) => {
                let p = self.synth_at(ctx, phi, init, sp)?;
                if p.q.has_fresh() {
                    return Err(TypeError::new(
                        ErrorKind::FreshReferent,
                        sp,
                        format!("referent of type {p} may reach a fresh resource"),
                    ));
                }
                self.refs.borrow_mut().insert(node_id(t), StoreEntry::plain(p.clone()));
                Ok(QType::new(Type::reference(p), Qual::fresh()))
            }
            Term::Deref(r) => self.synth_deref(ctx, phi, r, sp),
            Term::Assign(lhs, rhs) => self.synth_assign(ctx, phi, lhs, rhs, sp),
            Term::TAbs { f, tv, x, bound, body } => self.synth_tabs(ctx, phi, t, f, tv, x, bound, body, sp),
            Term::TApp(fun, arg) => self.synth_tapp(ctx, phi, fun, arg, sp),
            Term::Succ(a) | Term::Pred(a) => {
                let p = self.nat(ctx, phi, a, sp)?;
                Ok(QType::new(Type::Nat, p))
            }
            Term::Mul(a, b) => {
                let p = self.nat(ctx, phi, a, sp)?;
                let q = self.nat(ctx, phi, b, sp)?;
                Ok(QType::new(Type::Nat, p.union(&q)))
            }
            Term::IsZero(a) => {
                self.nat(ctx, phi, a, sp)?;
                empty(Type::Bool)
            }
            Term::If(c, a, b) => {
                self.cond(ctx, phi, c, sp)?;
                let ta = self.synth_at(ctx, phi, a, sp)?;
                let tb = self.synth_at(ctx, phi, b, sp)?;
                let q = ta.q.union(&tb.q);
                let env = self.env(ctx);
                if sub_ty(&env, &tb.ty, &ta.ty, &tb.q) {
                    Ok(QType::new(ta.ty, q))
                } else if sub_ty(&env, &ta.ty, &tb.ty, &ta.q) {
                    Ok(QType::new(tb.ty, q))
                } else {
                    Err(TypeError::new(
                        ErrorKind::SubtypeFailure,
                        sp,
                        format!("branches have unrelated types {} and {}", ta.ty, tb.ty),
                    ))
                }
            }
            Term::Ascribe(a, q) => {
                self.wf(ctx, q, "ascription", sp)?;
                self.check_at(ctx, phi, a, q, sp)?;
                Ok(q.clone())
            }
        }
    }

    fn cond(&self, ctx: &Ctx, phi: &Qual, c: &Term, sp: Option<Span>) -> Res<()> {
        let p = self.synth_at(ctx, phi, c, sp)?;
        if !sub_ty(&self.env(ctx), &p.ty, &Type::Bool, &p.q) {
            let mut e = TypeError::new(ErrorKind::SubtypeFailure, sp, format!("expected Bool, found {}", p.ty));
            e.actual = Some(Box::new(p));
            e.stage = Some(SubFail::Type);
            return Err(e);
        }
        Ok(())
    }

    fn nat(&self, ctx: &Ctx, phi: &Qual, a: &Term, sp: Option<Span>) -> Res<Qual> {
        let p = self.synth_at(ctx, phi, a, sp)?;
        if !sub_ty(&self.env(ctx), &p.ty, &Type::Nat, &p.q) {
            let mut e = TypeError::new(ErrorKind::SubtypeFailure, sp, format!("expected Nat, found {}", p.ty));
            e.actual = Some(Box::new(p));
            e.stage = Some(SubFail::Type);
            return Err(e);
        }
        Ok(p.q)
    }

    fn synth_loc(&self, phi: &Qual, l: usize, sp: Option<Span>) -> Res<QType> {
        let Some(e) = self.sigma.get(l) else {
            return Err(TypeError::new(
                ErrorKind::UnboundVariable,
                sp,
                format!("unknown location #{l}"),
            ));
        };
        let need = e.outer_qual().with(Atom::Loc(l));
        if let Some(a) = need.without_fresh().difference(phi).iter().next() {
            return Err(TypeError::new(
                ErrorKind::Unobservable,
                sp,
                format!("{a} is not observable here"),
            ));
        }
        let ty = match &e.binder {
            Some(x) => Type::mu(x, e.ty.clone(), e.ty.clone()),
            None => Type::reference(e.ty.clone()),
        };
        Ok(QType::new(ty, Qual::loc(l)))
    }

    fn synth_deref(&self, ctx: &Ctx, phi: &Qual, r: &Term, sp: Option<Span>) -> Res<QType> {
        let rt = self.synth_at(ctx, phi, r, sp)?;
        let Type::Ref { x, read, .. } = &rt.ty else {
            return Err(TypeError::new(
                ErrorKind::NotAReference,
                sp,
                format!("cannot dereference {}", rt.ty),
            ));
        };
        if fv_mentions(read, x) {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("read type {} depends on the self reference", read.ty),
            ));
        }
        if let Some(a) = read.q.minus_var(x).without_fresh().difference(phi).iter().next() {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("read qualifier {} mentions unobservable {a}", read.q),
            ));
        }
        Ok(read.subst_qual(x, &rt.q))
    }

    fn synth_assign(&self, ctx: &Ctx, phi: &Qual, lhs: &Term, rhs: &Term, sp: Option<Span>) -> Res<QType> {
        let unit = Ok(QType::new(Type::Unit, Qual::empty()));
        let rt = self.synth_at(ctx, phi, lhs, sp)?;
        let Type::Ref { x, write, read } = &rt.ty else {
            return Err(TypeError::new(
                ErrorKind::NotAReference,
                sp,
                format!("cannot assign through {}", rt.ty),
            ));
        };
        let mismatch = |e: TypeError, cyclic_kind: ErrorKind| -> TypeError {
            match (&e.kind, &e.stage) {
                (ErrorKind::SubtypeFailure, Some(SubFail::Type)) if write.ty == Type::Bot => {
                    e.retag(ErrorKind::WriteForbidden, "reference is read-only")
                }
                (ErrorKind::SubtypeFailure, Some(SubFail::Qual(a))) => {
                    let m = format!(
                        "assigned value reaches {a}, which the referent qualifier {} does not allow",
                        write.q
                    );
                    e.retag(cyclic_kind, m)
                }
                _ => e,
            }
        };
        if let Term::Loc(l) = lhs.peel() {
            let entry = self.sigma.get(*l).expect("typed location");
            let target = write.subst_qual(x, &entry.outer_qual().with(Atom::Loc(*l)));
            return self
                .check_at(ctx, phi, rhs, &target, sp)
                .map_err(|e| mismatch(e, ErrorKind::ReferentMismatch))
                .and(unit);
        }
        if write.q.has_var(x) {
            let base = write.with_q(write.q.minus_var(x));
            if let Term::Var(y) = lhs.peel() {
                if rt.q.has_var(y) && qtype_alpha_eq(write, read) {
                    let via_self = base.with_q(base.q.with(Atom::Var(y.clone())));
                    let first = self.check_at(ctx, phi, rhs, &via_self, sp);
                    if first.is_ok() || self.check_at(ctx, phi, rhs, &base, sp).is_ok() {
                        return unit;
                    }
                    let e = first.unwrap_err();
                    return Err(match (&e.kind, &e.stage) {
                        (ErrorKind::SubtypeFailure, Some(SubFail::Qual(a))) => {
                            let m = format!("value reaches {a}; a cyclic referent only admits {y} itself");
                            e.retag(ErrorKind::CyclicQualifierNotSingleton, m)
                        }
                        _ => e,
                    });
                }
            }
            return self
                .check_at(ctx, phi, rhs, &base, sp)
                .map_err(|e| mismatch(e, ErrorKind::CyclicAssigneeNotVariable))
                .and(unit);
        }
        self.check_at(ctx, phi, rhs, write, sp)
            .map_err(|e| mismatch(e, ErrorKind::ReferentMismatch))
            .and(unit)
    }

    /// Candidate type for `ref init` when the context expects a reference
    /// of type `want`: the expected referent first, then the synthesized
    /// referent, non-cyclic and cyclic.
    fn synth_ref_against(
        &self,
        ctx: &Ctx,
        phi: &Qual,
        node: &Term,
        init: &Term,
        want: &Type,
        sp: Option<Span>,
    ) -> Res<QType> {
        let Type::Ref { x, write, .. } = want else {
            unreachable!("caller matched a reference type")
        };
        let env = self.env(ctx);
        let fits = |cand: &Type| sub_ty(&env, cand, want, &Qual::fresh());
        let record = |e: StoreEntry, ty: Type| {
            self.refs.borrow_mut().insert(node_id(node), e);
            Ok(QType::new(ty, Qual::fresh()))
        };
        if !write.q.has_fresh() && write.ty != Type::Bot {
            let base = write.with_q(write.q.minus_var(x));
            if self.check_at(ctx, phi, init, &base, sp).is_ok() {
                let cand = Type::mu(x, (**write).clone(), (**write).clone());
                if fits(&cand) {
                    let entry = if write.q.has_var(x) {
                        StoreEntry::cyclic(x, write.ty.clone(), base.q.clone())
                    } else {
                        StoreEntry::plain((**write).clone())
                    };
                    return record(entry, cand);
                }
            }
        }
        let p = self.synth_at(ctx, phi, init, sp)?;
        if p.q.has_fresh() {
            return Err(TypeError::new(
                ErrorKind::FreshReferent,
                sp,
                format!("referent of type {p} may reach a fresh resource"),
            ));
        }
        let plain = Type::reference(p.clone());
        if fits(&plain) {
            return record(StoreEntry::plain(p), plain);
        }
        let mut avoid = ctx.names();
        avoid.extend(p.fv());
        avoid.extend(want.fv());
        let z = fresh_name(x, &avoid);
        let cyc = p.with_q(p.q.with(Atom::Var(z.clone())));
        let cyclic = Type::mu(&z, cyc.clone(), cyc);
        if fits(&cyclic) {
            return record(StoreEntry::cyclic(&z, p.ty.clone(), p.q.clone()), cyclic);
        }
        record(StoreEntry::plain(p), plain)
    }

    /// Synthesize an argument, steering a `ref` literal toward `want`.
    fn synth_against(&self, ctx: &Ctx, phi: &Qual, arg: &Term, want: &Type, sp: Option<Span>) -> Res<QType> {
        let sp = match arg {
            Term::At(s, _) => Some(*s),
            _ => sp,
        };
        match (arg.peel(), want) {
            (node @ Term::Ref(init), Type::Ref { .. }) => self.synth_ref_against(ctx, phi, node, init, want, sp),
            _ => self.synth_at(ctx, phi, arg, sp),
        }
    }

    /// Rename function binders that clash with the context; `f == x` leaves
    /// `f` inaccessible in the body.
    fn open_binders(
        &self,
        ctx: &Ctx,
        f: &str,
        x: &str,
        cod: Option<&QType>,
        body: &Term,
    ) -> (String, String, Option<QType>, Term) {
        let taken = ctx.names();
        let mut avoid = taken.clone();
        avoid.extend(body.fv());
        avoid.extend(cod.map(|c| c.fv()).unwrap_or_default());
        avoid.insert(f.to_string());
        avoid.insert(x.to_string());
        let mut body = body.clone();
        let mut cod = cod.cloned();
        let mut x2 = x.to_string();
        if taken.contains(x) {
            x2 = fresh_name(x, &avoid);
            avoid.insert(x2.clone());
            body = body.rename(x, &x2);
            cod = cod.map(|c| c.subst_qual(x, &Qual::var(&x2)));
        }
        let mut f2 = f.to_string();
        if f == x {
            f2 = fresh_name(f, &avoid);
        } else if taken.contains(f) {
            f2 = fresh_name(f, &avoid);
            body = body.rename(f, &f2);
            cod = cod.map(|c| c.subst_qual(f, &Qual::var(&f2)));
        }
        (f2, x2, cod, body)
    }

    #[allow(clippy::too_many_arguments)]
    fn synth_abs(
        &self,
        ctx: &Ctx,
        phi: &Qual,
        node: &Term,
        f: &str,
        x: &str,
        dom: &QType,
        cod: &QType,
        body: &Term,
        sp: Option<Span>,
    ) -> Res<QType> {
        self.wf(ctx, dom, x, sp)?;
        let q = node.free_atoms();
        self.observable(ctx, phi, &q, sp)?;
        let (f, x, cod, body) = self.open_binders(ctx, f, x, Some(cod), body);
        let cod = cod.expect("annotated");
        let fty = Type::fun(&f, &x, dom.clone(), cod.clone());
        let mut inner = ctx.clone();
        inner.push_term(&f, QType::new(fty.clone(), q.clone()));
        inner.push_term(&x, dom.clone());
        self.bind(&f, &QType::new(fty.clone(), q.clone()), sp);
        self.bind(&x, dom, sp);
        self.wf(&inner, &cod, &f, sp)?;
        let phi2 = q.union(&Qual::vars([f.as_str(), x.as_str()]));
        self.check_at(&inner, &phi2, &body, &cod, sp)?;
        Ok(QType::new(fty, q))
    }

    /// `let`-shaped application: a function literal missing annotations,
    /// applied directly. Missing parts are synthesized.
    #[allow(clippy::too_many_arguments)]
    fn synth_let(
        &self,
        ctx: &Ctx,
        phi: &Qual,
        fun: &Term,
        f: &str,
        x: &str,
        dom: &Option<QType>,
        cod: &Option<QType>,
        body: &Term,
        arg: &Term,
        sp: Option<Span>,
    ) -> Res<QType> {
        let fun_sp = match fun {
            Term::At(s, _) => Some(*s),
            _ => sp,
        };
        let (dom_q, arg_syn) = match dom {
            Some(d) if d.q.has_fresh() => {
                self.wf(ctx, d, x, fun_sp)?;
                (d.clone(), Some(self.synth_against(ctx, phi, arg, &d.ty, sp)?))
            }
            Some(d) => {
                self.wf(ctx, d, x, fun_sp)?;
                (d.clone(), None)
            }
            None => {
                let a = self.synth_at(ctx, phi, arg, sp)?;
                (a.clone(), Some(a))
            }
        };
        // Applied on the spot, so the body may observe everything the
        // enclosing term does that the argument is not required to be
        // separate from.
        let free = fun.peel().free_atoms();
        self.observable(ctx, phi, &free, fun_sp)?;
        // A fresh annotation also admits whatever the bound value already
        // shares with the body, as the overlapping application would.
        let dom_q = match (&arg_syn, dom.is_some() && dom_q.q.has_fresh()) {
            (Some(a), true) => {
                let env = self.env(ctx);
                let shared = qtrans(&env, &a.q).intersect(&qtrans(&env, &free)).without_fresh();
                dom_q.with_q(dom_q.q.union(&shared))
            }
            _ => dom_q,
        };
        let q = match (&arg_syn, dom_q.q.has_fresh()) {
            (Some(a), true) => {
                let env = self.env(ctx);
                let reach = qtrans(&env, &a.q);
                let allowed = qtrans(&env, &dom_q.q.without_fresh()).with(Atom::Fresh);
                let keep = phi.iter().filter(|b| {
                    qtrans(&env, &Qual::from_iter([(*b).clone()]))
                        .intersect(&reach)
                        .is_subset(&allowed)
                });
                free.union(&keep.cloned().collect())
            }
            _ => phi.clone(),
        };
        let (f, x, cod, body) = self.open_binders(ctx, f, x, cod.as_ref(), body);
        let mut inner = ctx.clone();
        let mut phi2 = q.with(Atom::Var(x.clone()));
        if let Some(c) = &cod {
            let fty = Type::fun(&f, &x, dom_q.clone(), c.clone());
            inner.push_term(&f, QType::new(fty.clone(), q.clone()));
            self.bind(&f, &QType::new(fty, q.clone()), fun_sp);
            phi2.insert(Atom::Var(f.clone()));
        }
        inner.push_term(&x, dom_q.clone());
        self.bind(&x, &dom_q, fun_sp);
        let cod_q = match &cod {
            Some(c) => {
                self.wf(&inner, c, &f, fun_sp)?;
                self.check_at(&inner, &phi2, &body, c, fun_sp)?;
                c.clone()
            }
            None => self.synth_at(&inner, &phi2, &body, fun_sp)?,
        };
        let fty = QType::new(Type::fun(&f, &x, dom_q, cod_q), q);
        self.apply(ctx, phi, fty, arg, arg_syn, sp)
    }

    fn apply(
        &self,
        ctx: &Ctx,
        phi: &Qual,
        fun: QType,
        arg: &Term,
        arg_syn: Option<QType>,
        sp: Option<Span>,
    ) -> Res<QType> {
        let Type::Fun { f, x, dom, cod } = &fun.ty else {
            return Err(TypeError::new(
                ErrorKind::NotAFunction,
                sp,
                format!("cannot apply {}", fun.ty),
            ));
        };
        let q = &fun.q;
        let env = self.env(ctx);
        let a = arg.peel();
        let is_loc = matches!(a, Term::Loc(_));
        let plain_value = a.is_value() && !is_loc;
        let arg_sp = match arg {
            Term::At(s, _) => Some(*s),
            _ => sp,
        };
        let p = if !dom.q.has_fresh() {
            match &arg_syn {
                Some(s) => self.subsume(ctx, phi, s, dom, arg_sp)?,
                None => self.check_at(ctx, phi, arg, dom, arg_sp)?,
            }
            if is_loc && !is_singleton_or_empty(&dom.q) {
                return Err(TypeError::new(
                    ErrorKind::DependentReturnEscape,
                    sp,
                    format!(
                        "a location argument must be typed at a singleton qualifier, not {}",
                        dom.q
                    ),
                ));
            }
            dom.q.clone()
        } else {
            let s = match arg_syn {
                Some(s) => s,
                None => self.synth_against(ctx, phi, arg, &dom.ty, arg_sp)?,
            };
            let mut p = s.q.clone();
            if !sub_ty(&env, &s.ty, &dom.ty, &s.q) {
                match escape(&env, phi, &s, &dom.ty) {
                    Some(r) => p = r,
                    None => {
                        let mut e = TypeError::new(
                            ErrorKind::SubtypeFailure,
                            arg_sp,
                            format!("argument type {} is not a subtype of {}", s.ty, dom.ty),
                        );
                        e.expected = Some(Box::new((**dom).clone()));
                        e.actual = Some(Box::new(s));
                        e.stage = Some(SubFail::Type);
                        return Err(e);
                    }
                }
            }
            let shared = qtrans(&env, &p).intersect(&qtrans(&env, q));
            let allowed = qtrans(&env, &dom.q.without_fresh()).with(Atom::Fresh);
            if let Some(a) = shared.difference(&allowed).iter().next() {
                return Err(TypeError::new(
                    ErrorKind::SeparationViolation,
                    arg_sp,
                    format!("argument and function both reach {a}, which the parameter does not permit"),
                ));
            }
            if p.has_fresh() && fv_mentions(cod, x) {
                return Err(TypeError::new(
                    ErrorKind::DependentReturnEscape,
                    sp,
                    format!("result type depends on {x}, but the argument is fresh"),
                ));
            }
            if q.has_fresh() && fv_mentions(cod, f) {
                return Err(TypeError::new(
                    ErrorKind::DependentReturnEscape,
                    sp,
                    format!("result type depends on {f}, but the function is fresh"),
                ));
            }
            p
        };
        let allowed = phi.union(&Qual::vars([f.as_str(), x.as_str()])).with(Atom::Fresh);
        if let Some(a) = cod.q.difference(&allowed).iter().next() {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("result qualifier {} mentions {a}, which is not observable here", cod.q),
            ));
        }
        if !is_singleton_or_empty(&p) && !plain_value && fv_mentions(cod, x) {
            return Err(TypeError::new(
                ErrorKind::DependentReturnEscape,
                sp,
                format!("result type depends on {x}, but the argument qualifier {p} is not a single name"),
            ));
        }
        let mut s = Subst::default();
        s.quals.insert(x.clone(), p);
        s.quals.insert(f.clone(), q.clone());
        Ok(cod.subst(&s))
    }

    #[allow(clippy::too_many_arguments)]
    fn synth_tabs(
        &self,
        ctx: &Ctx,
        phi: &Qual,
        node: &Term,
        f: &str,
        tv: &str,
        x: &str,
        bound: &QType,
        body: &Term,
        sp: Option<Span>,
    ) -> Res<QType> {
        self.wf(ctx, bound, tv, sp)?;
        if body.fv().contains(f) && f != x {
            return Err(TypeError::new(
                ErrorKind::AnnotationRequired,
                sp,
                format!("recursive use of {f} needs a result annotation"),
            ));
        }
        let q = node.free_atoms();
        self.observable(ctx, phi, &q, sp)?;
        let taken = ctx.names();
        let mut avoid = taken.clone();
        avoid.extend(body.fv());
        avoid.extend(body.ftv());
        avoid.extend([tv.to_string(), x.to_string(), f.to_string()]);
        let mut body = body.clone();
        let mut x2 = x.to_string();
        if taken.contains(x) {
            x2 = fresh_name(x, &avoid);
            avoid.insert(x2.clone());
            body = body.rename(x, &x2);
        }
        let mut tv2 = tv.to_string();
        if taken.contains(tv) || tv == x2 {
            tv2 = fresh_name(tv, &avoid);
            avoid.insert(tv2.clone());
            let mut s = crate::syntax::TermSubst::default();
            s.sub.types.insert(tv.to_string(), Type::TVar(tv2.clone()));
            body = body.subst(&s);
        }
        let f2 = if taken.contains(f) || f == x2 || f == tv2 {
            fresh_name(f, &avoid)
        } else {
            f.to_string()
        };
        let mut inner = ctx.clone();
        inner.push_type(&tv2, &x2, bound.clone());
        let phi2 = q.with(Atom::Var(x2.clone()));
        let u = self.synth_at(&inner, &phi2, &body, sp)?;
        Ok(QType::new(Type::all(&f2, &tv2, &x2, bound.clone(), u), q))
    }

    fn synth_tapp(&self, ctx: &Ctx, phi: &Qual, fun: &Term, arg: &QType, sp: Option<Span>) -> Res<QType> {
        let ft = self.synth_at(ctx, phi, fun, sp)?;
        let Type::All { f, tv, x, bound, body } = &ft.ty else {
            return Err(TypeError::new(
                ErrorKind::NotAFunction,
                sp,
                format!("cannot instantiate {}", ft.ty),
            ));
        };
        self.wf(ctx, arg, "type argument", sp)?;
        if let Some(a) = arg.q.without_fresh().difference(phi).iter().next() {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("type argument qualifier mentions unobservable {a}"),
            ));
        }
        let env = self.env(ctx);
        let bad_bound = || {
            let mut e = TypeError::new(
                ErrorKind::BoundViolation,
                sp,
                format!("{arg} does not satisfy bound {bound}"),
            );
            e.expected = Some(Box::new((**bound).clone()));
            e.actual = Some(Box::new(arg.clone()));
            e
        };
        if !bound.q.has_fresh() {
            if arg.q.has_fresh() || !sub_qtype(&env, arg, bound) {
                return Err(bad_bound());
            }
        } else {
            if !sub_ty(&env, &arg.ty, &bound.ty, &arg.q) {
                return Err(bad_bound());
            }
            let shared = qtrans(&env, &arg.q).intersect(&qtrans(&env, &ft.q));
            let allowed = qtrans(&env, &bound.q.without_fresh()).with(Atom::Fresh);
            if let Some(a) = shared.difference(&allowed).iter().next() {
                return Err(TypeError::new(
                    ErrorKind::SeparationViolation,
                    sp,
                    format!("type argument and function both reach {a}"),
                ));
            }
            if arg.q.has_fresh() && fv_mentions(body, x) {
                return Err(TypeError::new(
                    ErrorKind::DependentReturnEscape,
                    sp,
                    format!("result type depends on {x}, but the argument is fresh"),
                ));
            }
        }
        if fv_mentions(body, f) {
            return Err(TypeError::new(
                ErrorKind::DependentReturnEscape,
                sp,
                format!("result type depends on {f}"),
            ));
        }
        let allowed = phi.union(&Qual::vars([f.as_str(), x.as_str()])).with(Atom::Fresh);
        if let Some(a) = body.q.difference(&allowed).iter().next() {
            return Err(TypeError::new(
                ErrorKind::ObservationEscape,
                sp,
                format!("result qualifier mentions unobservable {a}"),
            ));
        }
        let mut s = Subst::default();
        s.types.insert(tv.clone(), arg.ty.clone());
        s.quals.insert(x.clone(), arg.q.clone());
        s.quals.insert(f.clone(), ft.q.clone());
        Ok(body.subst(&s))
    }
}
