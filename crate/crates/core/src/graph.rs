//! Reachability graphs in graphviz DOT form.
//!
//! Program graphs have one node per binding in source order; store graphs
//! have one node per typed location, labelled with its referent. Solid edges follow a qualifier one
//! step, dashed edges follow a reference to its referent's qualifier. Nodes
//! that reach `fresh` are filled.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::env::StoreTyping;
use crate::syntax::{QType, Qual, Span, Term, Type};
use crate::typeck::{Binding, Checker, TypeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    Qualifier,
    Referent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub ty: QType,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub nodes: Vec<Node>,
    pub edges: BTreeSet<(usize, usize, EdgeKind)>,
}

/// Referent qualifier of a reference type without its self binder, and
/// whether the referent mentions the reference itself.
fn referent(ty: &Type) -> Option<(Qual, bool)> {
    match ty {
        Type::Ref { x, read, .. } => {
            let cyclic = read.q.has_var(x);
            Some((read.q.minus_var(x), cyclic))
        }
        _ => None,
    }
}

fn contains(outer: Option<Span>, inner: Option<Span>) -> bool {
    match (outer, inner) {
        (Some(o), Some(i)) => o.start <= i.start && i.end <= o.end,
        _ => true,
    }
}

impl Graph {
    /// Bindings of a closed program, in source order.
    pub fn of_program(t: &Term) -> Result<Graph, TypeError> {
        let sigma = StoreTyping::new();
        let chk = Checker::new(&sigma);
        chk.synth(&Default::default(), &Qual::empty(), t)?;
        let mut bs = chk.bindings();
        bs.sort_by_key(|b| b.scope.map(|s| s.start).unwrap_or(0));
        Ok(Graph::of_bindings(&bs))
    }

    fn of_bindings(bs: &[Binding]) -> Graph {
        // A name resolves to the innermost earlier binding whose scope
        // encloses the referring one.
        let resolve = |from: usize, y: &str| {
            (0..bs.len())
                .filter(|&j| j != from && bs[j].name == y && contains(bs[j].scope, bs[from].scope))
                .filter(|&j| j < from || bs[j].scope != bs[from].scope)
                .max_by_key(|&j| (bs[j].scope.map(|s| s.start).unwrap_or(0), j))
        };
        let mut g = Graph {
            nodes: bs
                .iter()
                .map(|b| Node {
                    name: b.name.clone(),
                    ty: b.ty.clone(),
                })
                .collect(),
            edges: BTreeSet::new(),
        };
        for (i, b) in bs.iter().enumerate() {
            for y in b.ty.q.var_names() {
                if let Some(j) = resolve(i, y) {
                    g.edges.insert((i, j, EdgeKind::Qualifier));
                }
            }
            if let Some((r, cyclic)) = referent(&b.ty.ty) {
                for y in r.var_names() {
                    if let Some(j) = resolve(i, y) {
                        g.edges.insert((i, j, EdgeKind::Referent));
                    }
                }
                if cyclic {
                    g.edges.insert((i, i, EdgeKind::Referent));
                }
            }
        }
        g
    }

    /// Typed locations of a store, each labelled with its referent type.
    pub fn of_store(sigma: &StoreTyping) -> Graph {
        let mut g = Graph::default();
        for l in 0..sigma.len() {
            let ty = sigma.get(l).expect("in range").at(l);
            for k in ty.q.locs() {
                g.edges.insert((l, k, EdgeKind::Referent));
            }
            g.nodes.push(Node {
                name: format!("#{l}"),
                ty,
            });
        }
        g
    }

    /// Nodes whose qualifier holds `fresh`, or that reach such a node.
    pub fn fresh_reaching(&self) -> Vec<bool> {
        let mut mark: Vec<bool> = self.nodes.iter().map(|n| n.ty.q.has_fresh()).collect();
        loop {
            let mut changed = false;
            for (a, b, _) in &self.edges {
                if mark[*b] && !mark[*a] {
                    mark[*a] = true;
                    changed = true;
                }
            }
            if !changed {
                return mark;
            }
        }
    }

    pub fn to_dot(&self) -> String {
        let fresh = self.fresh_reaching();
        let mut out = String::from("digraph reach {\n  node [shape=box, fontname=\"monospace\"];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = format!("{} : {}", n.name, n.ty)
                .replace('\\', "\\\\")
                .replace('"', "\\\"");
            let style = if fresh[i] {
                ", style=filled, fillcolor=lightblue"
            } else {
                ""
            };
            writeln!(out, "  n{i} [label=\"{label}\"{style}];").unwrap();
        }
        for (a, b, k) in &self.edges {
            match k {
                EdgeKind::Qualifier => writeln!(out, "  n{a} -> n{b};").unwrap(),
                EdgeKind::Referent => writeln!(out, "  n{a} -> n{b} [style=dashed];").unwrap(),
            }
        }
        out.push_str("}\n");
        out
    }
}
