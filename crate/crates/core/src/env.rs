//! Typing contexts, observations, store typings and runtime stores.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::qual::ReachEnv;
use crate::syntax::{Atom, QType, Qual, Term, Type};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Binding {
    /// `x : Q`
    Term { name: String, ty: QType },
    /// `X^x <: Q`
    Type { tv: String, x: String, bound: QType },
}

impl Binding {
    /// The qualifier variable this binding introduces.
    pub fn qual_name(&self) -> &str {
        match self {
            Binding::Term { name, .. } => name,
            Binding::Type { x, .. } => x,
        }
    }

    /// Declared qualifier of the bound qualifier variable.
    pub fn declared(&self) -> &Qual {
        match self {
            Binding::Term { ty, .. } => &ty.q,
            Binding::Type { bound, .. } => &bound.q,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` is not observable here")]
    Unobservable(String),
    #[error("`{0}` mentions `{1}`, which is not in scope")]
    IllScoped(String, String),
}

/// Ordered environment `Γ`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ctx {
    binds: Vec<Binding>,
}

impl Ctx {
    pub fn new() -> Self {
        Ctx::default()
    }

    pub fn len(&self) -> usize {
        self.binds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.binds.is_empty()
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.binds
    }

    pub fn push_term(&mut self, name: &str, ty: QType) {
        self.binds.push(Binding::Term { name: name.into(), ty });
    }

    pub fn push_type(&mut self, tv: &str, x: &str, bound: QType) {
        self.binds.push(Binding::Type {
            tv: tv.into(),
            x: x.into(),
            bound,
        });
    }

    pub fn extended(&self, name: &str, ty: QType) -> Ctx {
        let mut c = self.clone();
        c.push_term(name, ty);
        c
    }

    /// Bind `name : ty` after checking that `ty` only mentions names already
    /// in scope (plus locations in `sigma`).
    pub fn bind_term(&mut self, name: &str, ty: QType, sigma: &StoreTyping) -> Result<(), EnvError> {
        self.check_scoped(name, &ty, sigma)?;
        self.push_term(name, ty);
        Ok(())
    }

    pub fn bind_type(&mut self, tv: &str, x: &str, bound: QType, sigma: &StoreTyping) -> Result<(), EnvError> {
        self.check_scoped(tv, &bound, sigma)?;
        self.push_type(tv, x, bound);
        Ok(())
    }

    pub fn check_scoped(&self, who: &str, ty: &QType, sigma: &StoreTyping) -> Result<(), EnvError> {
        for v in ty.fv() {
            if !self.has_qual_var(&v) {
                return Err(EnvError::IllScoped(who.into(), v));
            }
        }
        for v in ty.ftv() {
            if self.lookup_tvar(&v).is_none() {
                return Err(EnvError::IllScoped(who.into(), v));
            }
        }
        let mut locs: BTreeSet<usize> = ty.q.locs().collect();
        locs.extend(ty.ty.locs());
        if let Some(l) = locs.into_iter().find(|l| *l >= sigma.len()) {
            return Err(EnvError::IllScoped(who.into(), format!("#{l}")));
        }
        Ok(())
    }

    pub fn lookup_term(&self, x: &str) -> Option<&QType> {
        self.binds.iter().rev().find_map(|b| match b {
            Binding::Term { name, ty } if name == x => Some(ty),
            _ => None,
        })
    }

    /// Bound and qualifier variable of a type variable.
    pub fn lookup_tvar(&self, tv: &str) -> Option<(&str, &QType)> {
        self.binds.iter().rev().find_map(|b| match b {
            Binding::Type { tv: t, x, bound } if t == tv => Some((x.as_str(), bound)),
            _ => None,
        })
    }

    /// Rightmost binding introducing qualifier variable `x`.
    pub fn lookup_qual_var(&self, x: &str) -> Option<&Binding> {
        self.binds.iter().rev().find(|b| b.qual_name() == x)
    }

    pub fn has_qual_var(&self, x: &str) -> bool {
        self.lookup_qual_var(x).is_some()
    }

    /// Any name bound here, term, qualifier or type.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for b in &self.binds {
            match b {
                Binding::Term { name, .. } => {
                    out.insert(name.clone());
                }
                Binding::Type { tv, x, .. } => {
                    out.insert(tv.clone());
                    out.insert(x.clone());
                }
            }
        }
        out
    }

    /// One-step variable reachability: the variable atoms of `x`'s
    /// declared qualifier.
    pub fn var_reach(&self, x: &str) -> Qual {
        self.lookup_qual_var(x)
            .map(|b| b.declared().only_vars())
            .unwrap_or_default()
    }

    fn card(&self, q: &Qual) -> usize {
        self.binds.iter().filter(|b| q.has_var(b.qual_name())).count()
    }
}

impl ReachEnv for Ctx {
    fn reach(&self, a: &Atom) -> Qual {
        match a {
            Atom::Var(x) => self.var_reach(x),
            _ => Qual::empty(),
        }
    }

    fn size(&self) -> usize {
        self.len()
    }

    fn cardinality(&self, q: &Qual) -> usize {
        self.card(q)
    }
}

/// `lookupVar`: the declared type of `x`, provided `x ∈ φ`.
pub fn lookup_var(ctx: &Ctx, phi: &Qual, x: &str) -> Result<QType, EnvError> {
    let ty = ctx.lookup_term(x).ok_or_else(|| EnvError::Unbound(x.to_string()))?;
    if !phi.has_var(x) {
        return Err(EnvError::Unobservable(x.to_string()));
    }
    Ok(ty.clone())
}

/// A store typing entry `ℓ : μx.(T^q)`; when `binder` is set, it occurs in
/// `ty.q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreEntry {
    pub binder: Option<String>,
    pub ty: QType,
}

impl StoreEntry {
    pub fn plain(ty: QType) -> Self {
        StoreEntry { binder: None, ty }
    }

    pub fn cyclic(x: &str, ty: Type, q: Qual) -> Self {
        StoreEntry {
            binder: Some(x.to_string()),
            ty: QType::new(ty, q.with(Atom::Var(x.to_string()))),
        }
    }

    /// Referent qualifier without the self binder, `q ⊖ x`.
    pub fn outer_qual(&self) -> Qual {
        match &self.binder {
            Some(x) => self.ty.q.minus_var(x),
            None => self.ty.q.clone(),
        }
    }

    /// The referent at location `l`, the binder replaced by `{l}`.
    pub fn at(&self, l: usize) -> QType {
        match &self.binder {
            Some(x) => self.ty.subst_qual(x, &Qual::loc(l)),
            None => self.ty.clone(),
        }
    }
}

/// Store typing `Σ`, indexed densely by location.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StoreTyping {
    entries: Vec<StoreEntry>,
}

impl StoreTyping {
    pub fn new() -> Self {
        StoreTyping::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, l: usize) -> Option<&StoreEntry> {
        self.entries.get(l)
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn push(&mut self, e: StoreEntry) -> usize {
        self.entries.push(e);
        self.entries.len() - 1
    }

    /// Extend with placeholder entries until `l` is in the domain, then
    /// set it. Used by disjoint-offset allocation.
    pub fn set(&mut self, l: usize, e: StoreEntry) {
        while self.entries.len() <= l {
            self.entries
                .push(StoreEntry::plain(QType::new(Type::Unit, Qual::empty())));
        }
        self.entries[l] = e;
    }

    pub fn dom(&self) -> Qual {
        (0..self.len()).map(Atom::Loc).collect()
    }

    pub fn prefix(&self, n: usize) -> StoreTyping {
        StoreTyping {
            entries: self.entries[..n.min(self.len())].to_vec(),
        }
    }

    /// `⊢ Σ` by st-emp/st-con/st-scon.
    pub fn well_formed(&self) -> bool {
        self.entries.iter().enumerate().all(|(l, e)| {
            let closed = e.ty.ty.fv().is_empty() && e.ty.ty.ftv().is_empty();
            let own = e.outer_qual();
            let prior = own.iter().all(|a| matches!(a, Atom::Loc(k) if *k < l));
            let binder_ok = match &e.binder {
                Some(x) => e.ty.q.has_var(x),
                None => true,
            };
            let inner_locs = e.ty.ty.locs().iter().all(|k| *k < l);
            closed && prior && binder_ok && inner_locs
        })
    }
}

/// Runtime store `σ`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Store {
    cells: Vec<Option<Term>>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, l: usize) -> Option<&Term> {
        self.cells.get(l).and_then(|c| c.as_ref())
    }

    pub fn contains(&self, l: usize) -> bool {
        self.get(l).is_some()
    }

    /// Smallest unused location.
    pub fn next_free(&self) -> usize {
        self.cells.iter().position(|c| c.is_none()).unwrap_or(self.cells.len())
    }

    pub fn alloc(&mut self, v: Term) -> usize {
        let l = self.next_free();
        self.put(l, v);
        l
    }

    pub fn put(&mut self, l: usize, v: Term) {
        while self.cells.len() <= l {
            self.cells.push(None);
        }
        self.cells[l] = Some(v);
    }

    pub fn dom(&self) -> Qual {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some())
            .map(|(l, _)| Atom::Loc(l))
            .collect()
    }

    /// `σ|φ`: only the observed locations.
    pub fn restrict(&self, phi: &Qual) -> Store {
        let mut s = Store::new();
        for l in phi.locs() {
            if let Some(v) = self.get(l) {
                s.put(l, v.clone());
            }
        }
        s
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, &Term)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(l, c)| c.as_ref().map(|v| (l, v)))
    }
}

/// Combined view of `Γ` and `Σ` for reachability: variables step through
/// their declared qualifiers, locations through their referent qualifiers.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub ctx: &'a Ctx,
    pub sigma: &'a StoreTyping,
}

impl<'a> Env<'a> {
    pub fn new(ctx: &'a Ctx, sigma: &'a StoreTyping) -> Self {
        Env { ctx, sigma }
    }

    /// Whether every atom of `q` is bound (or is ◊).
    pub fn scoped(&self, q: &Qual) -> Option<Atom> {
        q.iter()
            .find(|a| match a {
                Atom::Var(x) => !self.ctx.has_qual_var(x),
                Atom::Loc(l) => *l >= self.sigma.len(),
                Atom::Fresh => false,
            })
            .cloned()
    }
}

impl ReachEnv for Env<'_> {
    fn reach(&self, a: &Atom) -> Qual {
        match a {
            Atom::Var(x) => self.ctx.var_reach(x),
            Atom::Loc(l) => self
                .sigma
                .get(*l)
                .map(|e| e.outer_qual().only_locs())
                .unwrap_or_default(),
            Atom::Fresh => Qual::empty(),
        }
    }

    fn size(&self) -> usize {
        self.ctx.len() + self.sigma.len()
    }

    fn cardinality(&self, q: &Qual) -> usize {
        self.ctx.card(q) + q.locs().filter(|l| *l < self.sigma.len()).count()
    }
}

/// Σ alone as a reachability environment.
impl ReachEnv for StoreTyping {
    fn reach(&self, a: &Atom) -> Qual {
        match a {
            Atom::Loc(l) => self.get(*l).map(|e| e.outer_qual().only_locs()).unwrap_or_default(),
            _ => Qual::empty(),
        }
    }

    fn size(&self) -> usize {
        self.len()
    }

    fn cardinality(&self, q: &Qual) -> usize {
        q.locs().filter(|l| *l < self.len()).count()
    }
}
