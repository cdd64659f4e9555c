//! Executable checks of the soundness properties: progress, preservation,
//! separation of observations, and agreement of parallel evaluation.

use std::fmt;

use crate::env::{Ctx, Env, Store, StoreEntry, StoreTyping};
use crate::eval::{Machine, StepInfo, StepResult};
use crate::qual::overlap;
use crate::subtype::sub_qtype_esc;
use crate::syntax::{Atom, QType, Qual, Term};
use crate::typeck::{wf_store, Checker, TypeError};

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// The starting term is not well-typed; nothing to check.
    IllTyped(TypeError),
    Progress {
        step: usize,
        term: String,
        reason: String,
    },
    Preservation {
        step: usize,
        term: String,
        reason: String,
    },
    Store {
        step: usize,
        reason: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IllTyped(e) => write!(f, "ill-typed: {e}"),
            Violation::Progress { step, term, reason } => {
                write!(f, "progress fails at step {step} on {term}: {reason}")
            }
            Violation::Preservation { step, term, reason } => {
                write!(f, "preservation fails at step {step} on {term}: {reason}")
            }
            Violation::Store { step, reason } => write!(f, "store ill-formed after step {step}: {reason}"),
        }
    }
}

/// Result of running the progress and preservation oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaReport {
    pub steps: usize,
    pub reached_value: bool,
    pub initial: QType,
    pub fin: QType,
    /// Atoms added to the qualifier by each step.
    pub growth: Vec<Qual>,
    pub sigma: StoreTyping,
}

/// A machine that keeps a store typing alongside the store, extending it
/// with the checker's choice of referent type whenever a cell is allocated,
/// and checks preservation on every step.
pub struct TypedMachine {
    pub sigma: StoreTyping,
    pub machine: Machine,
    /// Observable locations; grows with each allocation.
    pub phi: Qual,
    pub steps: usize,
    pub growth: Vec<Qual>,
}

/// One checked step.
#[allow(clippy::large_enum_variant)]
pub enum Checked {
    Value(QType),
    Stepped(Term, QType, StepInfo),
}

impl TypedMachine {
    pub fn new(sigma: StoreTyping, store: Store, phi: Qual, base: usize) -> Self {
        TypedMachine {
            sigma,
            machine: Machine::with_base(store, base),
            phi,
            steps: 0,
            growth: Vec::new(),
        }
    }

    pub fn type_of(&self, t: &Term) -> Result<QType, TypeError> {
        Checker::new(&self.sigma).synth(&Ctx::new(), &self.phi, t)
    }

    /// Type `cur`, step it, and check the contractum against the growth
    /// bound and the store against its typing.
    pub fn step(&mut self, cur: &Term) -> Result<Checked, Violation> {
        let empty = Ctx::new();
        let step = self.steps;
        let chk = Checker::new(&self.sigma);
        let now = chk.synth(&empty, &self.phi, cur).map_err(|e| Violation::Preservation {
            step,
            term: cur.to_string(),
            reason: e.to_string(),
        })?;
        let mut new_locs = Qual::empty();
        let (next, info) = match self.machine.step(cur) {
            StepResult::Value => return Ok(Checked::Value(now)),
            StepResult::Stuck(reason) => {
                return Err(Violation::Progress {
                    step,
                    term: cur.to_string(),
                    reason,
                })
            }
            StepResult::Stepped(next, info) => {
                if let Some(l) = info.alloc {
                    let entry = match chk.ref_entry(info.redex) {
                        Some(e) => e,
                        None => {
                            let v = self.machine.store.get(l).expect("allocated");
                            let ty = chk.synth(&empty, &self.phi, v).map_err(|e| Violation::Preservation {
                                step,
                                term: cur.to_string(),
                                reason: format!("stored value ill-typed: {e}"),
                            })?;
                            StoreEntry::plain(ty)
                        }
                    };
                    self.sigma.set(l, entry);
                    self.phi.insert(Atom::Loc(l));
                    new_locs.insert(Atom::Loc(l));
                }
                (next, info)
            }
        };
        self.steps += 1;
        let step = self.steps;
        let after = self.type_of(&next).map_err(|e| Violation::Preservation {
            step,
            term: next.to_string(),
            reason: e.to_string(),
        })?;
        let target_q = if now.q.has_fresh() {
            now.q.union(&new_locs)
        } else {
            now.q.clone()
        };
        let target = now.with_q(target_q);
        let env = Env::new(&empty, &self.sigma);
        if let Err(why) = sub_qtype_esc(&env, &self.phi, &after, &target) {
            return Err(Violation::Preservation {
                step,
                term: next.to_string(),
                reason: format!("{after} is not a subtype of {target} ({why:?})"),
            });
        }
        let grew = after.q.difference(&now.q).without_fresh();
        if !grew.is_subset(&new_locs) {
            return Err(Violation::Preservation {
                step,
                term: next.to_string(),
                reason: format!("qualifier grew by {grew}, beyond the new locations {new_locs}"),
            });
        }
        self.growth.push(grew);
        wf_store(&empty, &self.sigma, &self.phi, &self.machine.store)
            .map_err(|reason| Violation::Store { step, reason })?;
        Ok(Checked::Stepped(next, after, info))
    }

    /// Step until a value or until `fuel` steps have been taken. Returns the
    /// final term and its type.
    pub fn run(&mut self, t: &Term, fuel: usize) -> Result<(Term, QType, bool), Violation> {
        let mut cur = t.strip_spans();
        let start = self.steps;
        while self.steps - start < fuel {
            match self.step(&cur)? {
                Checked::Value(q) => return Ok((cur, q, true)),
                Checked::Stepped(next, _, _) => cur = next,
            }
        }
        let q = self.type_of(&cur).map_err(|e| Violation::Preservation {
            step: self.steps,
            term: cur.to_string(),
            reason: e.to_string(),
        })?;
        let done = cur.is_value();
        Ok((cur, q, done))
    }
}

/// Evaluate `t` from the empty store for at most `fuel` steps, re-typing
/// after every step. Each step must keep the term typable at a subtype of
/// the previous type, with `◊` replaced by at most the new locations, and
/// keep the store well-formed.
pub fn progress_preservation(t: &Term, fuel: usize) -> Result<MetaReport, Violation> {
    let mut tm = TypedMachine::new(StoreTyping::new(), Store::new(), Qual::empty(), 0);
    let initial = tm.type_of(&t.strip_spans()).map_err(Violation::IllTyped)?;
    let (_, fin, reached_value) = tm.run(t, fuel)?;
    Ok(MetaReport {
        steps: tm.steps,
        reached_value,
        initial,
        fin,
        growth: tm.growth,
        sigma: tm.sigma,
    })
}

/// Overlap `p ⋒ q` of two qualifiers relative to a store typing.
pub fn store_overlap(sigma: &StoreTyping, p: &Qual, q: &Qual) -> Qual {
    let ctx = Ctx::new();
    overlap(&Env::new(&ctx, sigma), p, q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairReport {
    pub before: (QType, QType),
    pub after: (QType, QType),
    pub overlap: Qual,
}

/// Both terms are typed under `dom(Σ)` with separate qualifiers; evaluate
/// `t1` and then `t2` on the shared store, re-typing each step, and check
/// that the final qualifiers are still separate.
pub fn separation_check(
    t1: &Term,
    t2: &Term,
    sigma: &StoreTyping,
    store: &Store,
    fuel: usize,
) -> Result<PairReport, String> {
    let dom = sigma.dom();
    let mut tm = TypedMachine::new(sigma.clone(), store.clone(), dom, 0);
    let q1 = tm.type_of(t1).map_err(|e| format!("left term: {e}"))?;
    let q2 = tm.type_of(t2).map_err(|e| format!("right term: {e}"))?;
    let o = store_overlap(sigma, &q1.q, &q2.q);
    if !o.is_subset(&Qual::fresh()) {
        return Err(format!("precondition: qualifiers overlap at {o}"));
    }
    let (_, p1, _) = tm.run(t1, fuel).map_err(|v| v.to_string())?;
    let (_, p2, _) = tm.run(t2, fuel).map_err(|v| v.to_string())?;
    let o = store_overlap(&tm.sigma, &p1.q, &p2.q);
    if !o.is_subset(&Qual::fresh()) {
        return Err(format!("results overlap at {o}"));
    }
    Ok(PairReport {
        before: (q1, q2),
        after: (p1, p2),
        overlap: o,
    })
}

/// Evaluate `t1` on `σ|φ1` and `t2` on `σ|φ2`, each allocating from its own
/// location range, re-typing every step under its own filter. The final
/// qualifiers must be separate, and running the two terms sequentially in
/// either order on the full store must agree with the isolated runs.
pub fn parallel_check(
    t1: &Term,
    t2: &Term,
    sigma: &StoreTyping,
    store: &Store,
    phi1: &Qual,
    phi2: &Qual,
    fuel: usize,
) -> Result<PairReport, String> {
    if !phi1.intersect(phi2).is_empty() {
        return Err("precondition: observation filters intersect".into());
    }
    let empty = Ctx::new();
    for (phi, name) in [(phi1, "left"), (phi2, "right")] {
        wf_store(&empty, sigma, phi, store).map_err(|e| format!("precondition ({name} store): {e}"))?;
    }
    let base1 = store.len().max(sigma.len());
    let base2 = base1 + fuel + 1;
    let mut m1 = TypedMachine::new(sigma.clone(), store.restrict(phi1), phi1.clone(), base1);
    let mut m2 = TypedMachine::new(sigma.clone(), store.restrict(phi2), phi2.clone(), base2);
    let q1 = m1.type_of(t1).map_err(|e| format!("left term: {e}"))?;
    let q2 = m2.type_of(t2).map_err(|e| format!("right term: {e}"))?;
    let (v1, p1, done1) = m1.run(t1, fuel).map_err(|v| format!("left: {v}"))?;
    let (v2, p2, done2) = m2.run(t2, fuel).map_err(|v| format!("right: {v}"))?;
    let mut merged = m1.sigma.clone();
    for l in m2.phi.locs().filter(|l| *l >= base2) {
        merged.set(l, m2.sigma.get(l).expect("typed").clone());
    }
    let o = store_overlap(&merged, &p1.q, &p2.q);
    if !o.is_subset(&Qual::fresh()) {
        return Err(format!("results overlap at {o}"));
    }
    if done1 && done2 {
        let run = |t: &Term, s: Store, base: usize| {
            let mut m = Machine::with_base(s, base);
            let (v, _, _) = m.run(t, fuel, &mut |_, _, _| {});
            (v, m.store)
        };
        let (a, s) = run(t1, store.clone(), base1);
        let (b, s12) = run(t2, s, base2);
        let (b2, s) = run(t2, store.clone(), base2);
        let (a2, s21) = run(t1, s, base1);
        if a != v1 || b != v2 || a2 != v1 || b2 != v2 {
            return Err(format!(
                "sequential results differ from isolated ones: ({a}, {b}) vs ({v1}, {v2})"
            ));
        }
        if s12 != s21 {
            return Err("final store depends on evaluation order".into());
        }
        for (l, v) in m1.machine.store.cells().chain(m2.machine.store.cells()) {
            if s12.get(l) != Some(v) {
                return Err(format!("isolated store disagrees with sequential store at #{l}"));
            }
        }
    }
    Ok(PairReport {
        before: (q1, q2),
        after: (p1, p2),
        overlap: o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;
    use crate::syntax::Type;

    fn nat() -> QType {
        QType::new(Type::Nat, Qual::empty())
    }

    fn p(s: &str) -> Term {
        parse_program(s).unwrap()
    }

    #[test]
    fn preservation_holds_on_small_program() {
        let rep = progress_preservation(&p("let r = ref 1 in let _u = r := succ (!r) in !r"), 200).unwrap();
        assert!(rep.reached_value);
        assert_eq!(rep.fin.ty, Type::Nat);
        assert_eq!(rep.sigma.len(), 1);
    }

    #[test]
    fn fresh_result_grows_by_new_location() {
        let rep = progress_preservation(&p("ref unit"), 10).unwrap();
        assert_eq!(rep.growth, vec![Qual::loc(0)]);
        assert_eq!(rep.fin.q, Qual::loc(0));
    }

    #[test]
    fn values_are_vacuous() {
        let rep = progress_preservation(&p("unit"), 10).unwrap();
        assert_eq!(rep.steps, 0);
        assert!(rep.reached_value);
    }

    #[test]
    fn independent_allocations_stay_separate() {
        let r = separation_check(&p("ref unit"), &p("ref unit"), &StoreTyping::new(), &Store::new(), 10).unwrap();
        assert_eq!(r.after.0.q, Qual::loc(0));
        assert_eq!(r.after.1.q, Qual::loc(1));
        assert_eq!(r.overlap, Qual::fresh());
    }

    #[test]
    fn parallel_counters() {
        let mut sigma = StoreTyping::new();
        sigma.push(StoreEntry::plain(nat()));
        sigma.push(StoreEntry::plain(nat()));
        let mut store = Store::new();
        store.put(0, Term::nat(1));
        store.put(1, Term::nat(2));
        let t1 = p("let _u = #0 := succ (!#0) in ref (!#0)");
        let t2 = p("#1 := !#1 * 3");
        parallel_check(&t1, &t2, &sigma, &store, &Qual::loc(0), &Qual::loc(1), 100).unwrap();
        assert!(parallel_check(&t1, &t2, &sigma, &store, &Qual::loc(0), &Qual::loc(0), 100).is_err());
    }

    /// inner1, inner2 hold numbers, outer2 holds inner2, outer1 holds outer2.
    fn two_level() -> (StoreTyping, Store) {
        let mut sigma = StoreTyping::new();
        sigma.push(StoreEntry::plain(nat()));
        sigma.push(StoreEntry::plain(nat()));
        sigma.push(StoreEntry::plain(QType::new(Type::reference(nat()), Qual::loc(1))));
        let outer2 = QType::new(
            Type::reference(QType::new(Type::reference(nat()), Qual::loc(1))),
            Qual::loc(2),
        );
        sigma.push(StoreEntry::plain(outer2));
        let mut store = Store::new();
        store.put(0, Term::nat(1));
        store.put(1, Term::nat(2));
        store.put(2, Term::Loc(1));
        store.put(3, Term::Loc(2));
        (sigma, store)
    }

    #[test]
    fn two_level_references_update_in_parallel() {
        let (sigma, store) = two_level();
        let t1 = p("#0 := succ (!#0)");
        let t2 = p("let _w = #3 := !#3 in !(!#3) := 7");
        let phi2 = Qual::loc(1).with(Atom::Loc(2)).with(Atom::Loc(3));
        let r = parallel_check(&t1, &t2, &sigma, &store, &Qual::loc(0), &phi2, 100).unwrap();
        assert!(r.overlap.is_subset(&Qual::fresh()));
        let r = separation_check(&t1, &t2, &sigma, &store, 100).unwrap();
        assert!(r.overlap.is_subset(&Qual::fresh()));
    }
}
