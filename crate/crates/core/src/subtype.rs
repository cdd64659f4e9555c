//! Algorithmic qualifier, type and qualified-type subtyping, including the
//! escape step for dual-component references.

use std::collections::{BTreeMap, BTreeSet};

use crate::env::{Binding, Ctx, Env};
use crate::syntax::{fresh_name, type_alpha_eq, Atom, QType, Qual, Subst, Type};

/// Why a subtyping query failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubFail {
    /// The underlying types are unrelated.
    Type,
    /// A qualifier atom could not be discharged.
    Qual(Atom),
    /// An escape was needed but its premises do not hold.
    Escape,
}

/// `Γ ⊢ p <: q`.
pub fn sub_qual(env: &Env, p: &Qual, q: &Qual) -> bool {
    sub_qual_why(env, p, q).is_ok()
}

/// Like [`sub_qual`], naming the first atom that could not be discharged.
pub fn sub_qual_why(env: &Env, p: &Qual, q: &Qual) -> Result<(), Atom> {
    if let Some(a) = env.scoped(q) {
        return Err(a);
    }
    if let Some(a) = env.scoped(p) {
        return Err(a);
    }
    let target = expand(env.ctx, q);
    let mut memo = BTreeMap::new();
    for a in p {
        if !discharge(env.ctx, a, &target, &mut memo) {
            return Err(a.clone());
        }
    }
    Ok(())
}

/// Right closure under self-absorption: whenever `f` is in the target and
/// `f : T^r` with `◊ ∉ r`, atoms of `r` are covered too.
fn expand(ctx: &Ctx, q: &Qual) -> Qual {
    let mut cur = q.clone();
    for _ in 0..=ctx.len() {
        let mut next = cur.clone();
        for f in cur.var_names() {
            if let Some(Binding::Term { ty, .. }) = ctx.lookup_qual_var(f) {
                if !ty.q.has_fresh() {
                    next.extend(ty.q.iter().cloned());
                }
            }
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Cover `a` by the target, or replace a variable by its declared
/// non-fresh qualifier and retry.
fn discharge(ctx: &Ctx, a: &Atom, target: &Qual, memo: &mut BTreeMap<String, Option<bool>>) -> bool {
    if target.contains(a) {
        return true;
    }
    let Atom::Var(x) = a else { return false };
    match memo.get(x) {
        Some(Some(r)) => return *r,
        Some(None) => return false,
        None => {}
    }
    let Some(b) = ctx.lookup_qual_var(x) else {
        return false;
    };
    let declared = b.declared().clone();
    if declared.has_fresh() {
        memo.insert(x.clone(), Some(false));
        return false;
    }
    memo.insert(x.clone(), None);
    let ok = declared.iter().all(|d| discharge(ctx, d, target, memo));
    memo.insert(x.clone(), Some(ok));
    ok
}

/// `Γ ⊢ S <: T` without knowledge of the outer qualifier; a reference's
/// self binder is then assumed fresh, which disables discharging it.
pub fn sub_type(env: &Env, s: &Type, t: &Type) -> bool {
    sub_ty(env, s, t, &Qual::fresh())
}

/// `Γ ⊢ P <: Q` (sq-sub).
pub fn sub_qtype(env: &Env, p: &QType, q: &QType) -> bool {
    sub_qtype_why(env, p, q).is_ok()
}

pub fn sub_qtype_why(env: &Env, p: &QType, q: &QType) -> Result<(), SubFail> {
    if !sub_ty(env, &p.ty, &q.ty, &p.q) {
        return Err(SubFail::Type);
    }
    sub_qual_why(env, &p.q, &q.q).map_err(SubFail::Qual)
}

/// Subsumption with the escape step: plain `P <: Q` first, then, for
/// references, escaping read qualifiers into the outer qualifier. The
/// escaped outer qualifier must be observable in `phi`.
pub fn sub_qtype_esc(env: &Env, phi: &Qual, p: &QType, q: &QType) -> Result<(), SubFail> {
    let plain = sub_qtype_why(env, p, q);
    if plain.is_ok() {
        return plain;
    }
    match escape(env, phi, p, &q.ty) {
        Some(r) => sub_qual_why(env, &r, &q.q).map_err(SubFail::Qual),
        None => {
            if matches!((&p.ty, &q.ty), (Type::Ref { .. }, Type::Ref { .. })) && plain == Err(SubFail::Type) {
                Err(SubFail::Escape)
            } else {
                plain
            }
        }
    }
}

/// The outer qualifier `r` such that `src` escapes to `target^r`, if any.
pub fn escape(env: &Env, phi: &Qual, src: &QType, target: &Type) -> Option<Qual> {
    if src.q.has_fresh() {
        return None;
    }
    let r = escape_need(env, src, target)?;
    if r.has_fresh() || !r.is_subset(phi) {
        return None;
    }
    Some(r)
}

/// Minimal outer qualifier needed to view `src` at type `target`, escaping
/// nested read components as required.
pub fn escape_need(env: &Env, src: &QType, target: &Type) -> Option<Qual> {
    let (
        Type::Ref {
            x: x1,
            write: w1,
            read: r1,
        },
        Type::Ref {
            x: x2,
            write: w2,
            read: r2,
        },
    ) = (&src.ty, target)
    else {
        return None;
    };
    let z = binder_for(env, &[&src.ty, target]);
    let (w1, r1) = (w1.subst_qual(x1, &Qual::var(&z)), r1.subst_qual(x1, &Qual::var(&z)));
    let (w2, r2) = (w2.subst_qual(x2, &Qual::var(&z)), r2.subst_qual(x2, &Qual::var(&z)));
    let self_ty = QType::new(Type::mu(&z, w1.clone(), r1.clone()), src.q.clone());
    let ctx = env.ctx.extended(&z, self_ty);
    let inner = Env::new(&ctx, env.sigma);
    if !sub_qual(&inner, &w2.q, &w1.q) || !sub_ty(&inner, &w2.ty, &w1.ty, &w2.q) {
        return None;
    }
    let s = if sub_ty(&inner, &r1.ty, &r2.ty, &r1.q) {
        r1.q.clone()
    } else {
        escape_need(&inner, &r1, &r2.ty)?
    };
    if r2.q.has_var(&z) {
        let mut r = src.q.clone();
        for a in &s {
            if *a != Atom::Var(z.clone()) && !sub_qual(&inner, &Qual::from_iter([a.clone()]), &r2.q) {
                r.insert(a.clone());
            }
        }
        if r.has_var(&z) {
            return None;
        }
        Some(r)
    } else if sub_qual(&inner, &s, &r2.q) {
        Some(src.q.clone())
    } else {
        None
    }
}

fn binder_for(env: &Env, tys: &[&Type]) -> String {
    let mut avoid: BTreeSet<String> = env.ctx.names();
    for t in tys {
        avoid.extend(t.fv());
        avoid.extend(t.ftv());
    }
    fresh_name("z", &avoid)
}

/// `Γ ⊢ S <: T`, where `outer` is the qualifier of the value of type `S`
/// (the `p` bound to a reference's self binder in s-sref).
pub fn sub_ty(env: &Env, s: &Type, t: &Type, outer: &Qual) -> bool {
    match (s, t) {
        (_, Type::Top) => true,
        (Type::Bot, _) => true,
        (Type::Unit, Type::Unit) | (Type::Nat, Type::Nat) | (Type::Bool, Type::Bool) => true,
        (Type::TVar(a), Type::TVar(b)) if a == b => true,
        (Type::TVar(a), _) => match env.ctx.lookup_tvar(a) {
            Some((_, bound)) => {
                let bound = bound.clone();
                sub_ty(env, &bound.ty, t, &bound.q)
            }
            None => false,
        },
        (
            Type::Fun {
                f: f1,
                x: x1,
                dom: o,
                cod: q,
            },
            Type::Fun {
                f: f2,
                x: x2,
                dom: p,
                cod: r,
            },
        ) => {
            if !sub_qtype(env, p, o) {
                return false;
            }
            let avoid_tys = [s, t];
            let f = binder_for(env, &avoid_tys);
            let mut avoid = env.ctx.names();
            avoid.insert(f.clone());
            avoid.extend(s.fv());
            avoid.extend(t.fv());
            let x = fresh_name("x", &avoid);
            let rn = |qt: &QType, fo: &str, xo: &str| {
                let mut sub = Subst::default();
                sub.quals.insert(fo.to_string(), Qual::var(&f));
                sub.quals.insert(xo.to_string(), Qual::var(&x));
                qt.subst(&sub)
            };
            let q = rn(q, f1, x1);
            let r = rn(r, f2, x2);
            let self_ty = QType::new(Type::fun(&f, &x, (**o).clone(), q.clone()), Qual::fresh());
            let mut ctx = env.ctx.extended(&f, self_ty);
            ctx.push_term(&x, (**p).clone());
            sub_qtype(&Env::new(&ctx, env.sigma), &q, &r)
        }
        (
            Type::All {
                f: f1,
                tv: a1,
                x: x1,
                bound: b1,
                body: u1,
            },
            Type::All {
                f: f2,
                tv: a2,
                x: x2,
                bound: b2,
                body: u2,
            },
        ) => {
            if !(sub_qtype(env, b1, b2) && sub_qtype(env, b2, b1)) {
                return false;
            }
            let mut avoid = env.ctx.names();
            avoid.extend(s.fv());
            avoid.extend(t.fv());
            avoid.extend(s.ftv());
            avoid.extend(t.ftv());
            let f = fresh_name("f", &avoid);
            avoid.insert(f.clone());
            let x = fresh_name("x", &avoid);
            avoid.insert(x.clone());
            let tv = fresh_name("X", &avoid);
            let rn = |qt: &QType, fo: &str, ao: &str, xo: &str| {
                let mut sub = Subst::default();
                sub.quals.insert(fo.to_string(), Qual::var(&f));
                sub.quals.insert(xo.to_string(), Qual::var(&x));
                sub.types.insert(ao.to_string(), Type::TVar(tv.clone()));
                qt.subst(&sub)
            };
            let u1 = rn(u1, f1, a1, x1);
            let u2 = rn(u2, f2, a2, x2);
            let self_ty = QType::new(Type::all(&f, &tv, &x, (**b2).clone(), u1.clone()), Qual::fresh());
            let mut ctx = env.ctx.extended(&f, self_ty);
            ctx.push_type(&tv, &x, (**b2).clone());
            sub_qtype(&Env::new(&ctx, env.sigma), &u1, &u2)
        }
        (
            Type::Ref {
                x: x1,
                write: w1,
                read: r1,
            },
            Type::Ref {
                x: x2,
                write: w2,
                read: r2,
            },
        ) => {
            let z = binder_for(env, &[s, t]);
            let (w1, r1) = (w1.subst_qual(x1, &Qual::var(&z)), r1.subst_qual(x1, &Qual::var(&z)));
            let (w2, r2) = (w2.subst_qual(x2, &Qual::var(&z)), r2.subst_qual(x2, &Qual::var(&z)));
            let self_ty = QType::new(Type::mu(&z, w1.clone(), r1.clone()), outer.clone());
            let ctx = env.ctx.extended(&z, self_ty);
            let inner = Env::new(&ctx, env.sigma);
            sub_qual(&inner, &w2.q, &w1.q)
                && sub_qual(&inner, &r1.q, &r2.q)
                && sub_ty(&inner, &w2.ty, &w1.ty, &w2.q)
                && sub_ty(&inner, &r1.ty, &r2.ty, &r1.q)
        }
        _ => false,
    }
}

/// Syntactic type equality up to renaming, used for the collapsed
/// same-component reference shape.
pub fn same_type(a: &Type, b: &Type) -> bool {
    type_alpha_eq(a, b)
}
