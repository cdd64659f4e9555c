//! Seeded generation of well-typed programs.
//!
//! Terms are built top-down from a target type over a scope of typed
//! variables, preferring references, assignments and self-referential cells.
//! Every candidate is re-checked; on repeated failure the generator retries
//! with a smaller budget and finally falls back to a constant.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Ctx, Store, StoreEntry, StoreTyping};
use crate::parse::parse_program;
use crate::syntax::{Atom, QType, Qual, Term, Type};
use crate::typeck::{typecheck_program, Checker};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum G {
    Nat,
    Bool,
    Unit,
    RefNat,
    FunNat,
}

const ALL: [G; 5] = [G::Nat, G::Bool, G::Unit, G::RefNat, G::FunNat];
const ATTEMPTS: usize = 8;

/// Marker present in the source of every generated knot.
pub const KNOT_CELL: &str = "knot";

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    next: usize,
}

impl Builder<'_> {
    fn name(&mut self, base: &str) -> String {
        self.next += 1;
        format!("{base}{}", self.next)
    }

    fn var_of(&mut self, scope: &[(String, G)], ty: G) -> Option<String> {
        let vs: Vec<&String> = scope.iter().filter(|(_, g)| *g == ty).map(|(x, _)| x).collect();
        vs.choose(self.rng).map(|x| (*x).clone())
    }

    fn leaf(&mut self, ty: G, scope: &[(String, G)]) -> String {
        if self.rng.gen_bool(0.5) {
            if let Some(x) = self.var_of(scope, ty) {
                return x;
            }
        }
        match ty {
            G::Nat => self.rng.gen_range(0..6u32).to_string(),
            G::Bool => if self.rng.gen() { "true" } else { "false" }.into(),
            G::Unit => "unit".into(),
            G::RefNat => format!("ref {}", self.rng.gen_range(0..6u32)),
            G::FunNat => {
                let (f, x) = (self.name("f"), self.name("x"));
                format!("fun {f}({x}: Nat^{{}}) : Nat^{{}} => succ {x}")
            }
        }
    }

    fn gen(&mut self, ty: G, size: usize, scope: &[(String, G)]) -> String {
        if size == 0 {
            return self.leaf(ty, scope);
        }
        let s = size - 1;
        let half = s / 2;
        // Shared forms: binding and branching.
        match self.rng.gen_range(0..10) {
            0 | 1 => {
                let bty = if self.rng.gen_bool(0.5) {
                    G::RefNat
                } else {
                    *ALL.choose(self.rng).unwrap()
                };
                let x = self.name("v");
                let e = self.gen(bty, half, scope);
                let mut inner = scope.to_vec();
                inner.push((x.clone(), bty));
                let b = self.gen(ty, s - half, &inner);
                return format!("let {x} = ({e}) in ({b})");
            }
            2 => {
                let x = self.name("_s");
                let e = self.gen(G::Unit, half, scope);
                let b = self.gen(ty, s - half, scope);
                return format!("let {x} = ({e}) in ({b})");
            }
            3 if ty != G::RefNat && ty != G::FunNat => {
                let c = self.gen(G::Bool, s / 3, scope);
                let a = self.gen(ty, s / 3, scope);
                let b = self.gen(ty, s / 3, scope);
                return format!("if ({c}) then ({a}) else ({b})");
            }
            _ => {}
        }
        match ty {
            G::Nat => match self.rng.gen_range(0..9) {
                0 => format!("succ ({})", self.gen(G::Nat, s, scope)),
                1 => format!("pred ({})", self.gen(G::Nat, s, scope)),
                2 => format!(
                    "({}) * ({})",
                    self.gen(G::Nat, half, scope),
                    self.gen(G::Nat, s - half, scope)
                ),
                3 | 4 => format!("!({})", self.gen(G::RefNat, s, scope)),
                5 => format!(
                    "({}) ({})",
                    self.gen(G::FunNat, half, scope),
                    self.gen(G::Nat, s - half, scope)
                ),
                6 if size >= 3 => self.knot(s, scope),
                7 => {
                    let (p, g, y) = (self.name("p"), self.name("g"), self.name("y"));
                    let a = self.gen(G::Nat, s, scope);
                    format!("(tfun {p}(X^x <: Top^{{}}) => fun {g}({y}: X^{{}}) : X^{{}} => {y})[Nat^{{}}] ({a})")
                }
                _ => self.leaf(G::Nat, scope),
            },
            G::Bool => match self.rng.gen_range(0..3) {
                0 | 1 => format!("iszero ({})", self.gen(G::Nat, s, scope)),
                _ => self.leaf(G::Bool, scope),
            },
            G::Unit => match self.rng.gen_range(0..4) {
                0..=2 => match self.var_of(scope, G::RefNat) {
                    Some(r) => format!("{r} := ({})", self.gen(G::Nat, s, scope)),
                    None => format!(
                        "({}) := ({})",
                        self.gen(G::RefNat, half, scope),
                        self.gen(G::Nat, s - half, scope)
                    ),
                },
                _ => "unit".into(),
            },
            G::RefNat => match self.rng.gen_range(0..3) {
                0 | 1 => format!("ref ({})", self.gen(G::Nat, s, scope)),
                _ => self.leaf(G::RefNat, scope),
            },
            G::FunNat => {
                let (f, x) = (self.name("f"), self.name("x"));
                let mut inner = scope.to_vec();
                inner.push((x.clone(), G::Nat));
                let b = self.gen(G::Nat, s, &inner);
                format!("fun {f}({x}: Nat^{{}}) : Nat^{{}} => {b}")
            }
        }
    }

    /// A cell holding a function that calls itself through the cell, with a
    /// counter that bounds the recursion.
    fn knot(&mut self, s: usize, scope: &[(String, G)]) -> String {
        let c = self.name(KNOT_CELL);
        let (g, n, i, k) = (self.name("g"), self.name("n"), self.name("i"), self.name("_k"));
        let base = self.gen(G::Nat, s / 3, scope);
        let arg = self.rng.gen_range(0..5u32);
        let step = if self.rng.gen() {
            format!("succ ((!{c}) (pred {n}))")
        } else {
            format!("(!{c}) (pred {n})")
        };
        format!(
            "let {c} : (mu z. Ref[(h({n}: Nat^{{}}) -> Nat^{{}})^{{z}}])^{{fresh}} = \
             ref (fun {i}({n}: Nat^{{}}) : Nat^{{}} => {n}) in \
             let {k} = {c} := (fun {g}({n}: Nat^{{}}) : Nat^{{}} => if iszero {n} then ({base}) else {step}) in \
             (!{c}) {arg}"
        )
    }
}

fn random_type(rng: &mut ChaCha8Rng) -> G {
    *[G::Nat, G::Nat, G::Nat, G::Unit, G::Bool, G::RefNat, G::FunNat]
        .choose(rng)
        .unwrap()
}

/// A closed, well-typed program. Size 0 yields a constant.
pub fn gen_well_typed(seed: u64, size: usize) -> Term {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = size;
    loop {
        for _ in 0..ATTEMPTS {
            let ty = if budget == 0 {
                *[G::Nat, G::Bool, G::Unit].choose(&mut rng).unwrap()
            } else {
                random_type(&mut rng)
            };
            let src = Builder { rng: &mut rng, next: 0 }.gen(ty, budget, &[]);
            let t = parse_program(&src).unwrap_or_else(|e| panic!("generated unparsable source {src}: {e}"));
            if typecheck_program(&t).is_ok() {
                return t;
            }
        }
        if budget == 0 {
            return Term::nat(0);
        }
        budget /= 2;
    }
}

/// Two terms over separate parts of a shared store.
#[derive(Clone, Debug)]
pub struct DisjointPair {
    pub sigma: StoreTyping,
    pub store: Store,
    pub phi1: Qual,
    pub phi2: Qual,
    pub t1: Term,
    pub t2: Term,
}

struct Side {
    nats: Vec<usize>,
    /// Reference cells with the number cell each one holds.
    refs: Vec<(usize, usize)>,
}

impl Side {
    fn phi(&self) -> Qual {
        self.nats
            .iter()
            .chain(self.refs.iter().map(|(r, _)| r))
            .map(|l| Atom::Loc(*l))
            .collect()
    }

    fn nat(&self, rng: &mut ChaCha8Rng, size: usize) -> String {
        if size == 0 {
            return match rng.gen_range(0..3) {
                0 => rng.gen_range(0..6u32).to_string(),
                _ => format!("!#{}", self.nats.choose(rng).unwrap()),
            };
        }
        let s = size - 1;
        match rng.gen_range(0..5) {
            0 => format!("succ ({})", self.nat(rng, s)),
            1 => format!("({}) * ({})", self.nat(rng, s / 2), self.nat(rng, s - s / 2)),
            2 if !self.refs.is_empty() => format!("!(!#{})", self.refs.choose(rng).unwrap().0),
            3 => format!("let _e = ({}) in ({})", self.unit(rng, s / 2), self.nat(rng, s - s / 2)),
            _ => format!("!(ref ({}))", self.nat(rng, s)),
        }
    }

    fn unit(&self, rng: &mut ChaCha8Rng, size: usize) -> String {
        let s = size.saturating_sub(1);
        match rng.gen_range(0..3) {
            0 if !self.refs.is_empty() => {
                let (r, target) = self.refs.choose(rng).unwrap();
                format!("#{r} := #{target}")
            }
            _ => format!("#{} := ({})", self.nats.choose(rng).unwrap(), self.nat(rng, s)),
        }
    }

    fn term(&self, rng: &mut ChaCha8Rng, size: usize) -> String {
        match rng.gen_range(0..4) {
            0 => self.nat(rng, size),
            1 => self.unit(rng, size),
            2 => format!("#{}", self.nats.choose(rng).unwrap()),
            _ => format!(
                "let _e = ({}) in ref ({})",
                self.unit(rng, size / 2),
                self.nat(rng, size / 2)
            ),
        }
    }
}

/// A store of number cells and reference cells partitioned into two closed
/// halves, with a term over each half typed under that half alone.
pub fn gen_disjoint_pair(seed: u64, size: usize) -> DisjointPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nat = QType::new(Type::Nat, Qual::empty());
    let mut sigma = StoreTyping::new();
    let mut store = Store::new();
    let mut sides = [
        Side {
            nats: vec![],
            refs: vec![],
        },
        Side {
            nats: vec![],
            refs: vec![],
        },
    ];
    let n_nats = rng.gen_range(2..6);
    for i in 0..n_nats {
        let l = sigma.len();
        sigma.push(StoreEntry::plain(nat.clone()));
        store.put(l, Term::nat(rng.gen_range(0..10u64)));
        let side = if i < 2 { i } else { rng.gen_range(0..2) };
        sides[side].nats.push(l);
    }
    for _ in 0..rng.gen_range(0..4) {
        let side = rng.gen_range(0..2);
        let target = *sides[side].nats.choose(&mut rng).unwrap();
        let l = sigma.len();
        sigma.push(StoreEntry::plain(QType::new(
            Type::reference(nat.clone()),
            Qual::loc(target),
        )));
        store.put(l, Term::Loc(target));
        sides[side].refs.push((l, target));
    }
    let empty = Ctx::new();
    let chk = Checker::new(&sigma);
    let mut pick = |side: &Side| {
        let phi = side.phi();
        for _ in 0..ATTEMPTS {
            let src = side.term(&mut rng, size);
            let t = parse_program(&src).unwrap_or_else(|e| panic!("generated unparsable source {src}: {e}"));
            if chk.synth(&empty, &phi, &t).is_ok() {
                return t;
            }
        }
        Term::nat(0)
    };
    let t1 = pick(&sides[0]);
    let t2 = pick(&sides[1]);
    DisjointPair {
        phi1: sides[0].phi(),
        phi2: sides[1].phi(),
        sigma,
        store,
        t1,
        t2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_zero_is_a_constant() {
        for seed in 0..50 {
            let t = gen_well_typed(seed, 0);
            assert!(matches!(t.peel(), Term::Nat(_) | Term::Bool(_) | Term::Unit), "{t}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_well_typed(7, 6).to_string(), gen_well_typed(7, 6).to_string());
    }

    #[test]
    fn generated_terms_typecheck() {
        for seed in 0..300 {
            let t = gen_well_typed(seed, 8);
            assert!(typecheck_program(&t).is_ok(), "{t}");
        }
    }

    #[test]
    fn pairs_are_typed_under_their_halves() {
        for seed in 0..200 {
            let p = gen_disjoint_pair(seed, 4);
            assert!(p.phi1.intersect(&p.phi2).is_empty());
            let chk = Checker::new(&p.sigma);
            chk.synth(&Ctx::new(), &p.phi1, &p.t1).unwrap();
            chk.synth(&Ctx::new(), &p.phi2, &p.t2).unwrap();
        }
    }
}
