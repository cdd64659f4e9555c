//! Qualifier-algebra lemmas as properties over random environments, shared
//! by the lemma suite and the acceptance report.

use proptest::prelude::*;
use proptest::test_runner::{TestCaseError, TestRunner};

use reachck_core::env::{Ctx, Env, StoreEntry, StoreTyping};
use reachck_core::qual::{
    cardinality, overlap, qtrans, qtrans_n, reachable_from, saturated_det, saturated_prop, ReachEnv,
};
use reachck_core::syntax::{Atom, QType, Qual, Type};

pub const CASES: u32 = 1024;
const MAX_VARS: usize = 8;

fn name(i: usize) -> String {
    format!("v{i}")
}

/// Declared qualifiers by binding position; any binding may mention any
/// other, so the graphs include cycles.
#[derive(Clone, Debug)]
struct Shape {
    decls: Vec<(Vec<usize>, bool)>,
    locs: Vec<Vec<usize>>,
}

fn shape() -> impl Strategy<Value = Shape> {
    (0..=MAX_VARS, 0..4usize).prop_flat_map(|(n, m)| {
        let decl = (proptest::collection::vec(0..n.max(1), 0..4), any::<bool>());
        let loc = proptest::collection::vec(0..m.max(1), 0..3);
        (proptest::collection::vec(decl, n), proptest::collection::vec(loc, m)).prop_map(
            move |(mut decls, mut locs)| {
                if n == 0 {
                    decls.clear();
                }
                if m == 0 {
                    locs.clear();
                }
                Shape { decls, locs }
            },
        )
    })
}

fn unit(q: Qual) -> QType {
    QType::new(Type::Unit, q)
}

fn qual_of(vars: &[usize], fresh: bool) -> Qual {
    let mut q: Qual = vars.iter().map(|i| Atom::Var(name(*i))).collect();
    if fresh {
        q.insert(Atom::Fresh);
    }
    q
}

impl Shape {
    fn ctx(&self) -> Ctx {
        let mut c = Ctx::new();
        for (i, (vs, fresh)) in self.decls.iter().enumerate() {
            c.push_term(&name(i), unit(qual_of(vs, *fresh)));
        }
        c
    }

    fn sigma(&self) -> StoreTyping {
        let mut s = StoreTyping::new();
        for ls in &self.locs {
            s.push(StoreEntry::plain(unit(ls.iter().map(|l| Atom::Loc(*l)).collect())));
        }
        s
    }
}

/// Qualifiers over the bound names, an unbound name, locations and `◊`.
fn query() -> impl Strategy<Value = Qual> {
    (
        proptest::collection::vec(0..MAX_VARS + 1, 0..4),
        proptest::collection::vec(0..4usize, 0..2),
        any::<bool>(),
    )
        .prop_map(|(vs, ls, fresh)| {
            let mut q = qual_of(&vs, fresh);
            q.extend(ls.into_iter().map(Atom::Loc));
            q
        })
}

/// Transitive closure by graph search, independent of the fuel loop.
fn closure(env: &dyn ReachEnv, q: &Qual) -> Qual {
    let mut out = q.clone();
    for a in q.iter() {
        out = out.union(&reachable_from(env, a));
    }
    out
}

fn run<S: Strategy>(cases: u32, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(ProptestConfig::with_cases(cases));
    runner.run(&s, f).map_err(|e| e.to_string())
}

pub fn qtrans_agrees_with_graph_search(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query()), |(s, q)| {
        let c = s.ctx();
        prop_assert_eq!(qtrans(&c, &q), closure(&c, &q));
        let sigma = s.sigma();
        let env = Env::new(&c, &sigma);
        prop_assert_eq!(qtrans(&env, &q), closure(&env, &q));
        Ok(())
    })
}

pub fn saturation_predicates_agree(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query()), |(s, q)| {
        let c = s.ctx();
        prop_assert_eq!(saturated_det(&c, &q), saturated_prop(&c, &q));
        let sigma = s.sigma();
        let env = Env::new(&c, &sigma);
        prop_assert_eq!(saturated_det(&env, &q), saturated_prop(&env, &q));
        let t = qtrans(&env, &q);
        prop_assert!(saturated_det(&env, &t) && saturated_prop(&env, &t));
        Ok(())
    })
}

pub fn qtrans_is_stable_beyond_environment_size(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query(), 0..20usize), |(s, q, extra)| {
        let sigma = s.sigma();
        let c = s.ctx();
        let env = Env::new(&c, &sigma);
        let n = env.size() + extra;
        prop_assert_eq!(qtrans_n(&env, &q, n), qtrans(&env, &q));
        prop_assert_eq!(qtrans_n(&env, &q, n + 1), qtrans_n(&env, &q, n));
        Ok(())
    })
}

pub fn qtrans_is_extensive_monotone_and_idempotent(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query(), query()), |(s, p, q)| {
        let sigma = s.sigma();
        let c = s.ctx();
        let env = Env::new(&c, &sigma);
        let tp = qtrans(&env, &p);
        prop_assert!(p.is_subset(&tp));
        prop_assert_eq!(qtrans(&env, &tp), tp.clone());
        prop_assert!(tp.is_subset(&qtrans(&env, &p.union(&q))));
        Ok(())
    })
}

pub fn overlap_is_symmetric_and_tracks_fresh(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query(), query()), |(s, p, q)| {
        let c = s.ctx();
        let o = overlap(&c, &p, &q);
        prop_assert_eq!(o.clone(), overlap(&c, &q, &p));
        prop_assert!(o.has_fresh());
        prop_assert!(o.without_fresh().is_subset(&qtrans(&c, &p)));
        Ok(())
    })
}

pub fn cardinality_is_monotone_and_bounded(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query(), query()), |(s, p, q)| {
        let sigma = s.sigma();
        let c = s.ctx();
        let env = Env::new(&c, &sigma);
        prop_assert!(cardinality(&env, &p) <= cardinality(&env, &p.union(&q)));
        prop_assert!(cardinality(&env, &p) <= env.size());
        prop_assert!(cardinality(&c, &p) <= c.size());
        prop_assert_eq!(cardinality(&Ctx::new(), &p), 0);
        Ok(())
    })
}

pub fn zero_cardinality_is_saturated(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query()), |(s, q)| {
        let sigma = s.sigma();
        let c = s.ctx();
        let env = Env::new(&c, &sigma);
        if cardinality(&env, &q) == 0 {
            prop_assert!(saturated_det(&env, &q));
        }
        if cardinality(&c, &q) == 0 {
            prop_assert!(saturated_det(&c, &q));
        }
        Ok(())
    })
}

/// Replacing the binding `x` by a qualifier `p` closed under lookup in the
/// prefix before `x`: the lookup of `rθ` in `Γθ` stays within the
/// substituted lookup of `r` in `Γ`.
pub fn substitution_preserves_transitive_lookup(cases: u32) -> Result<(), String> {
    run(cases, (shape(), query(), 0..MAX_VARS, query()), |(s, r, pick, seed)| {
        if s.decls.is_empty() {
            return Ok(());
        }
        let x = pick % s.decls.len();
        // Ordered as in a well-formed context: bindings mention only
        // earlier ones.
        let decls: Vec<(Vec<usize>, bool)> = s
            .decls
            .iter()
            .enumerate()
            .map(|(i, (vs, f))| (vs.iter().copied().filter(|v| *v < i).collect(), *f))
            .collect();
        let build = |upto: usize, f: &dyn Fn(&Qual) -> Qual, skip: Option<usize>| {
            let mut c = Ctx::new();
            for (i, (vs, fresh)) in decls.iter().enumerate().take(upto) {
                if Some(i) != skip {
                    c.push_term(&name(i), unit(f(&qual_of(vs, *fresh))));
                }
            }
            c
        };
        let id = |q: &Qual| q.clone();
        let gamma = build(decls.len(), &id, None);
        let prefix = build(x, &id, None);
        let earlier: Qual = seed
            .iter()
            .filter(|a| match a {
                Atom::Var(v) => v[1..].parse::<usize>().is_ok_and(|i| i < x),
                _ => true,
            })
            .cloned()
            .collect();
        let p = qtrans(&prefix, &earlier);
        let theta = |q: &Qual| -> Qual {
            if q.has_var(&name(x)) {
                q.minus_var(&name(x)).union(&p)
            } else {
                q.clone()
            }
        };
        let gamma_theta = build(decls.len(), &theta, Some(x));
        let lhs = qtrans(&gamma_theta, &theta(&r));
        let rhs = theta(&qtrans(&gamma, &r));
        prop_assert!(lhs.is_subset(&rhs), "{} not within {}", lhs, rhs);
        Ok(())
    })
}

pub type Property = fn(u32) -> Result<(), String>;

/// Every property with its name.
pub const ALL: &[(&str, Property)] = &[
    ("qtrans agrees with graph search", qtrans_agrees_with_graph_search),
    ("saturation predicates agree", saturation_predicates_agree),
    (
        "qtrans stable beyond environment size",
        qtrans_is_stable_beyond_environment_size,
    ),
    (
        "qtrans extensive, monotone, idempotent",
        qtrans_is_extensive_monotone_and_idempotent,
    ),
    (
        "overlap symmetric and tracks fresh",
        overlap_is_symmetric_and_tracks_fresh,
    ),
    ("cardinality monotone and bounded", cardinality_is_monotone_and_bounded),
    ("zero cardinality is saturated", zero_cardinality_is_saturated),
    (
        "substitution preserves transitive lookup",
        substitution_preserves_transitive_lookup,
    ),
];
