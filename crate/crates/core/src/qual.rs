//! Qualifier algebra: one-step reachability, fuel-bounded transitive lookup,
//! saturation, overlap and cardinality.

use std::collections::BTreeSet;

use crate::syntax::{Atom, Qual};

/// An ordered environment viewed as a reachability graph over atoms.
pub trait ReachEnv {
    /// Atoms one step away from `a`; unbound atoms reach nothing.
    fn reach(&self, a: &Atom) -> Qual;
    /// Number of bindings, `‖Γ‖`.
    fn size(&self) -> usize;
    /// Number of bindings whose name is in `q`, counted per binding.
    fn cardinality(&self, q: &Qual) -> usize;
}

/// One step of lookup: `q ∪ ⋃_{a∈q} reach(a)`.
pub fn step(env: &dyn ReachEnv, q: &Qual) -> Qual {
    let mut out = q.clone();
    for a in q {
        out.extend(env.reach(a).iter().cloned());
    }
    out
}

pub fn qtrans_n(env: &dyn ReachEnv, q: &Qual, n: usize) -> Qual {
    let mut cur = q.clone();
    for _ in 0..n {
        let next = step(env, &cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

pub fn qtrans(env: &dyn ReachEnv, q: &Qual) -> Qual {
    qtrans_n(env, q, env.size())
}

/// `{ y | a ↝⁺ y }`, by unbounded graph search.
pub fn reachable_from(env: &dyn ReachEnv, a: &Atom) -> Qual {
    let mut seen: BTreeSet<Atom> = BTreeSet::new();
    let mut work: Vec<Atom> = env.reach(a).iter().cloned().collect();
    while let Some(b) = work.pop() {
        if seen.insert(b.clone()) {
            work.extend(env.reach(&b).iter().cloned());
        }
    }
    seen.into_iter().collect()
}

pub fn saturated_prop(env: &dyn ReachEnv, q: &Qual) -> bool {
    q.iter().all(|a| reachable_from(env, a).is_subset(q))
}

pub fn saturated_det(env: &dyn ReachEnv, q: &Qual) -> bool {
    qtrans(env, q) == *q
}

/// `p ⋒ q = ◊, (p↟ ∩ q↟)`
pub fn overlap(env: &dyn ReachEnv, p: &Qual, q: &Qual) -> Qual {
    qtrans(env, p).intersect(&qtrans(env, q)).with(Atom::Fresh)
}

pub fn cardinality(env: &dyn ReachEnv, q: &Qual) -> usize {
    env.cardinality(q)
}

/// Membership in `𝒫₁ ⊎ {∅}`: empty, or exactly one variable or location.
pub fn is_singleton_or_empty(q: &Qual) -> bool {
    match q.len() {
        0 => true,
        1 => !q.has_fresh(),
        _ => false,
    }
}

pub fn contains_fresh(q: &Qual) -> bool {
    q.has_fresh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Ctx;
    use crate::syntax::{QType, Type};

    fn unit(q: Qual) -> QType {
        QType::new(Type::Unit, q)
    }

    fn ctx(bs: &[(&str, &[&str])]) -> Ctx {
        let mut c = Ctx::new();
        for (x, q) in bs {
            c.push_term(x, unit(Qual::vars(q.iter().copied())));
        }
        c
    }

    /// Independent closure: iterate until no change, no fuel.
    fn closure(c: &Ctx, q: &Qual) -> Qual {
        let mut cur = q.clone();
        loop {
            let mut next = cur.clone();
            for x in cur.var_names() {
                if let Some(d) = c.lookup_term(x) {
                    next.extend(d.q.only_vars().iter().cloned());
                }
            }
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    #[test]
    fn var_reach_examples() {
        assert!(Ctx::new().var_reach("x").is_empty());
        let c = ctx(&[("a", &[]), ("c2", &["a"])]);
        assert_eq!(c.var_reach("c2"), Qual::var("a"));
        let c = ctx(&[("x", &["y"]), ("y", &["x"])]);
        assert_eq!(c.var_reach("x"), Qual::var("y"));
    }

    #[test]
    fn var_reach_drops_fresh_and_locations() {
        let mut c = Ctx::new();
        c.push_term("a", unit(Qual::fresh().with(Atom::Loc(2))));
        assert!(c.var_reach("a").is_empty());
    }

    #[test]
    fn qtrans_n_examples() {
        let c = ctx(&[("a", &[]), ("c2", &["a"])]);
        let q = Qual::var("c2");
        assert_eq!(qtrans_n(&c, &q, 0), q);
        assert_eq!(qtrans_n(&c, &q, 1), closure(&c, &q));
        assert_eq!(qtrans_n(&c, &q, 1), Qual::vars(["a", "c2"]));
        let c = ctx(&[("x", &["y"]), ("y", &["x"])]);
        assert_eq!(qtrans_n(&c, &Qual::var("x"), 5), closure(&c, &Qual::var("x")));
        assert_eq!(qtrans_n(&c, &Qual::var("x"), 5), Qual::vars(["x", "y"]));
    }

    #[test]
    fn qtrans_examples() {
        let q = Qual::vars(["p", "q"]).with(Atom::Fresh);
        assert_eq!(qtrans(&Ctx::new(), &q), q);
        let c = ctx(&[("a", &[]), ("b", &["a"]), ("c", &["b"])]);
        assert_eq!(qtrans(&c, &Qual::var("c")), closure(&c, &Qual::var("c")));
        assert_eq!(qtrans(&c, &Qual::var("c")), Qual::vars(["a", "b", "c"]));
        let c = ctx(&[("x", &["x"])]);
        assert_eq!(qtrans(&c, &Qual::var("x")), Qual::var("x"));
    }

    #[test]
    fn saturation_examples() {
        let q = Qual::vars(["u", "v"]);
        assert!(saturated_prop(&Ctx::new(), &q) && saturated_det(&Ctx::new(), &q));
        let c = ctx(&[("a", &[]), ("c2", &["a"])]);
        let q = Qual::var("c2");
        assert!(!saturated_prop(&c, &q) && !saturated_det(&c, &q));
        let q = Qual::vars(["c2", "a"]);
        assert!(saturated_prop(&c, &q) && saturated_det(&c, &q));
    }

    #[test]
    fn overlap_examples() {
        let c = ctx(&[("a", &[]), ("b", &[])]);
        assert_eq!(overlap(&c, &Qual::var("a"), &Qual::var("b")), Qual::fresh());
        let c = ctx(&[("i", &[]), ("c1", &["i"]), ("c2", &["i"])]);
        let o = overlap(&c, &Qual::var("c1"), &Qual::var("c2"));
        let expect = closure(&c, &Qual::var("c1"))
            .intersect(&closure(&c, &Qual::var("c2")))
            .with(Atom::Fresh);
        assert_eq!(o, expect);
        assert_eq!(o, Qual::var("i").with(Atom::Fresh));
        assert_eq!(o, overlap(&c, &Qual::var("c2"), &Qual::var("c1")));
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(cardinality(&Ctx::new(), &Qual::var("a")), 0);
        let c = ctx(&[("a", &[]), ("b", &[])]);
        assert_eq!(cardinality(&c, &Qual::var("a")), 1);
        let c = ctx(&[("a", &[]), ("b", &[]), ("c", &[])]);
        assert_eq!(cardinality(&c, &Qual::vars(["a", "c", "zunbound"])), 2);
    }

    #[test]
    fn singleton_examples() {
        assert!(is_singleton_or_empty(&Qual::var("x")));
        assert!(is_singleton_or_empty(&Qual::loc(3)));
        assert!(is_singleton_or_empty(&Qual::empty()));
        assert!(!is_singleton_or_empty(&Qual::vars(["x", "y"])));
        assert!(!is_singleton_or_empty(&Qual::fresh()));
        assert!(contains_fresh(&Qual::fresh()) && !contains_fresh(&Qual::var("x")));
    }
}
