//! Call-by-value small-step reduction over a store.
//!
//! Evaluation contexts are left to right: the function before its argument,
//! the reference before the assigned value, the left factor before the right.

use num_traits::Zero;

use crate::env::Store;
use crate::syntax::{Qual, Term, TermSubst};
use crate::typeck::{node_id, NodeId};

/// What a single step did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepInfo {
    /// Name of the reduction rule that fired.
    pub rule: &'static str,
    /// Identity of the contracted redex inside the input term.
    pub redex: NodeId,
    pub alloc: Option<usize>,
    pub write: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum StepResult {
    Stepped(Term, StepInfo),
    Value,
    Stuck(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Value,
    OutOfFuel,
    Stuck(String),
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub term: Term,
    pub store: Store,
    pub steps: usize,
    pub status: Status,
}

/// A store plus the allocation policy: fresh cells go to the smallest free
/// location at or above `base`.
#[derive(Clone, Debug, Default)]
pub struct Machine {
    pub store: Store,
    pub base: usize,
}

/// Qualifier of a value, used when substituting it for a variable.
pub fn value_qual(v: &Term) -> Qual {
    match v.peel() {
        Term::Loc(l) => Qual::loc(*l),
        Term::Abs { .. } | Term::TAbs { .. } => v.free_atoms(),
        _ => Qual::empty(),
    }
}

fn stuck(msg: impl Into<String>) -> Result<(Term, StepInfo), String> {
    Err(msg.into())
}

fn info(rule: &'static str, t: &Term) -> StepInfo {
    StepInfo {
        rule,
        redex: node_id(t),
        alloc: None,
        write: None,
    }
}

impl Machine {
    pub fn new(store: Store) -> Self {
        Machine { store, base: 0 }
    }

    pub fn with_base(store: Store, base: usize) -> Self {
        Machine { store, base }
    }

    fn alloc(&mut self, v: Term) -> usize {
        let mut l = self.base;
        while self.store.contains(l) {
            l += 1;
        }
        self.store.put(l, v);
        l
    }

    pub fn step(&mut self, t: &Term) -> StepResult {
        if t.is_value() {
            return StepResult::Value;
        }
        match self.reduce(t) {
            Ok((t2, i)) => StepResult::Stepped(t2, i),
            Err(m) => StepResult::Stuck(m),
        }
    }

    /// Step the first non-value among `parts`, rebuilding with `mk`.
    fn congruence(
        &mut self,
        parts: &[&Term],
        mk: &dyn Fn(Vec<Term>) -> Term,
    ) -> Option<Result<(Term, StepInfo), String>> {
        let k = parts.iter().position(|p| !p.is_value())?;
        Some(self.reduce(parts[k]).map(|(t2, i)| {
            let mut v: Vec<Term> = parts.iter().map(|p| (*p).clone()).collect();
            v[k] = t2;
            (mk(v), i)
        }))
    }

    fn reduce(&mut self, t: &Term) -> Result<(Term, StepInfo), String> {
        macro_rules! under {
            ($parts:expr, $mk:expr) => {
                if let Some(r) = self.congruence($parts, &$mk) {
                    return r;
                }
            };
        }
        match t {
            Term::At(_, a) => self.reduce(a),
            Term::Var(x) => stuck(format!("free variable {x}")),
            Term::App(f, a) => {
                under!(&[f, a], |v: Vec<Term>| {
                    let mut v = v.into_iter();
                    Term::app(v.next().unwrap(), v.next().unwrap())
                });
                match f.peel() {
                    Term::Abs { f: fname, x, body, .. } => {
                        let mut s = TermSubst::default();
                        s.terms.insert(x.clone(), (**a).clone());
                        s.sub.quals.insert(x.clone(), value_qual(a));
                        if fname != x {
                            s.terms.insert(fname.clone(), (**f).clone());
                            s.sub.quals.insert(fname.clone(), value_qual(f));
                        }
                        Ok((body.subst(&s), info("beta", t)))
                    }
                    other => stuck(format!("cannot apply {other}")),
                }
            }
            Term::TApp(f, q) => {
                under!(&[f], |v: Vec<Term>| Term::tapp(
                    v.into_iter().next().unwrap(),
                    q.clone()
                ));
                match f.peel() {
                    Term::TAbs {
                        f: fname, tv, x, body, ..
                    } => {
                        let mut s = TermSubst::default();
                        s.sub.types.insert(tv.clone(), q.ty.clone());
                        s.sub.quals.insert(x.clone(), q.q.clone());
                        if fname != x {
                            s.terms.insert(fname.clone(), (**f).clone());
                            s.sub.quals.insert(fname.clone(), value_qual(f));
                        }
                        Ok((body.subst(&s), info("tbeta", t)))
                    }
                    other => stuck(format!("cannot instantiate {other}")),
                }
            }
            Term::Ref(a) => {
                under!(&[a], |v: Vec<Term>| Term::new_ref(v.into_iter().next().unwrap()));
                let l = self.alloc(a.peel().clone());
                let mut i = info("ref", t);
                i.alloc = Some(l);
                Ok((Term::Loc(l), i))
            }
            Term::Deref(a) => {
                under!(&[a], |v: Vec<Term>| Term::deref(v.into_iter().next().unwrap()));
                match a.peel() {
                    Term::Loc(l) => match self.store.get(*l) {
                        Some(v) => Ok((v.clone(), info("deref", t))),
                        None => stuck(format!("dangling location #{l}")),
                    },
                    other => stuck(format!("cannot dereference {other}")),
                }
            }
            Term::Assign(a, b) => {
                under!(&[a, b], |v: Vec<Term>| {
                    let mut v = v.into_iter();
                    Term::assign(v.next().unwrap(), v.next().unwrap())
                });
                match a.peel() {
                    Term::Loc(l) if self.store.contains(*l) => {
                        self.store.put(*l, b.peel().clone());
                        let mut i = info("assign", t);
                        i.write = Some(*l);
                        Ok((Term::Unit, i))
                    }
                    other => stuck(format!("cannot assign to {other}")),
                }
            }
            Term::Succ(a) => {
                under!(&[a], |v: Vec<Term>| Term::Succ(Box::new(v.into_iter().next().unwrap())));
                match a.peel() {
                    Term::Nat(n) => Ok((Term::Nat(n + 1u32), info("succ", t))),
                    other => stuck(format!("succ of {other}")),
                }
            }
            Term::Pred(a) => {
                under!(&[a], |v: Vec<Term>| Term::Pred(Box::new(v.into_iter().next().unwrap())));
                match a.peel() {
                    Term::Nat(n) if n.is_zero() => Ok((Term::Nat(n.clone()), info("pred", t))),
                    Term::Nat(n) => Ok((Term::Nat(n - 1u32), info("pred", t))),
                    other => stuck(format!("pred of {other}")),
                }
            }
            Term::IsZero(a) => {
                under!(&[a], |v: Vec<Term>| Term::IsZero(Box::new(
                    v.into_iter().next().unwrap()
                )));
                match a.peel() {
                    Term::Nat(n) => Ok((Term::Bool(n.is_zero()), info("iszero", t))),
                    other => stuck(format!("iszero of {other}")),
                }
            }
            Term::Mul(a, b) => {
                under!(&[a, b], |v: Vec<Term>| {
                    let mut v = v.into_iter();
                    Term::Mul(Box::new(v.next().unwrap()), Box::new(v.next().unwrap()))
                });
                match (a.peel(), b.peel()) {
                    (Term::Nat(m), Term::Nat(n)) => Ok((Term::Nat(m * n), info("mul", t))),
                    _ => stuck("multiplication of non-numbers"),
                }
            }
            Term::If(c, a, b) => {
                under!(&[c], |v: Vec<Term>| Term::ite(
                    v.into_iter().next().unwrap(),
                    (**a).clone(),
                    (**b).clone()
                ));
                match c.peel() {
                    Term::Bool(true) => Ok(((**a).clone(), info("if-true", t))),
                    Term::Bool(false) => Ok(((**b).clone(), info("if-false", t))),
                    other => stuck(format!("if on {other}")),
                }
            }
            Term::Ascribe(a, q) => {
                under!(&[a], |v: Vec<Term>| Term::ascribe(
                    v.into_iter().next().unwrap(),
                    q.clone()
                ));
                Ok(((**a).clone(), info("ascribe", t)))
            }
            Term::Unit | Term::Nat(_) | Term::Bool(_) | Term::Loc(_) | Term::Abs { .. } | Term::TAbs { .. } => {
                stuck("value does not step")
            }
        }
    }

    /// Run up to `fuel` steps, calling `on_step` after each one.
    pub fn run(
        &mut self,
        t: &Term,
        fuel: usize,
        on_step: &mut dyn FnMut(usize, &StepInfo, &Term),
    ) -> (Term, usize, Status) {
        let mut cur = t.strip_spans();
        for n in 0..fuel {
            match self.step(&cur) {
                StepResult::Value => return (cur, n, Status::Value),
                StepResult::Stuck(m) => return (cur, n, Status::Stuck(m)),
                StepResult::Stepped(next, i) => {
                    on_step(n + 1, &i, &next);
                    cur = next;
                }
            }
        }
        let status = if cur.is_value() {
            Status::Value
        } else {
            Status::OutOfFuel
        };
        (cur, fuel, status)
    }
}

/// Evaluate from `store` for at most `fuel` steps.
pub fn eval_fuel(t: &Term, store: Store, fuel: usize) -> Outcome {
    let mut m = Machine::new(store);
    let (term, steps, status) = m.run(t, fuel, &mut |_, _, _| {});
    Outcome {
        term,
        store: m.store,
        steps,
        status,
    }
}

/// Evaluate a closed program from the empty store.
pub fn eval_program(t: &Term, fuel: usize) -> Outcome {
    eval_fuel(t, Store::new(), fuel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn run(src: &str, fuel: usize) -> Outcome {
        eval_program(&parse_program(src).unwrap(), fuel)
    }

    #[test]
    fn arithmetic_and_conditionals() {
        let o = run("if iszero (pred 1) then succ 2 * 3 else 0", 100);
        assert_eq!(o.status, Status::Value);
        assert_eq!(o.term, Term::nat(9));
        assert_eq!(run("pred 0", 10).term, Term::nat(0));
    }

    #[test]
    fn references_allocate_and_update() {
        let o = run("let r = ref 1 in let _u = r := succ (!r) in !r", 100);
        assert_eq!(o.term, Term::nat(2));
        assert_eq!(o.store.get(0), Some(&Term::nat(2)));
    }

    #[test]
    fn allocation_respects_base() {
        let mut m = Machine::with_base(Store::new(), 5);
        let t = parse_program("ref unit").unwrap().strip_spans();
        let StepResult::Stepped(l, i) = m.step(&t) else {
            panic!()
        };
        assert_eq!(l, Term::Loc(5));
        assert_eq!(i.alloc, Some(5));
    }

    #[test]
    fn free_variables_are_stuck() {
        assert!(matches!(run("x unit", 10).status, Status::Stuck(_)));
    }

    #[test]
    fn fuel_bounds_steps() {
        let o = run("succ succ succ 0", 2);
        assert_eq!(o.status, Status::OutOfFuel);
        assert_eq!(o.steps, 2);
    }
}
