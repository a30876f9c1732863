//! Induced maps on collapses and restrictions to invariant subgraphs.
//!
//! Both work with the combinatorial map (vertex to tether base, edge to tethered word).
//! A component `K` of `A` is invariant up to homotopy when the image of every generator
//! of its fundamental group, based at `b_K`, reads `w . m . w^-1` with `m` inside one
//! component `K'` of `A` and a conjugator `w` common to all generators.

use super::StraightMap;
use crate::error::{Error, Result};
use crate::graph_core::{collapse, CollapseRecord, MarkedGraph, OEdge, Subgraph};
use crate::loops::{inverse_word, reduce, Letter, Marker};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

struct Comp {
    base: usize,
    vertices: BTreeSet<usize>,
    edges: BTreeSet<usize>,
}

/// Components of `A` with spanning-tree tethers `tau[u]` from the base to `u`.
struct Spanning {
    comps: Vec<Comp>,
    comp_of: Vec<Option<usize>>,
    tau: Vec<Vec<Letter>>,
    tree: BTreeSet<usize>,
}

fn spanning(g: &MarkedGraph, a: &Subgraph) -> Spanning {
    let mut comp_of = vec![None; g.vertices.len()];
    let mut tau = vec![vec![]; g.vertices.len()];
    let mut tree = BTreeSet::new();
    let mut comps = vec![];
    for (vs, es) in a.components(g) {
        let base = vs.iter().copied().find(|&v| g.is_nonfree(v)).unwrap_or(*vs.iter().next().unwrap());
        let ci = comps.len();
        let mut seen = BTreeSet::from([base]);
        let mut q = VecDeque::from([base]);
        while let Some(u) = q.pop_front() {
            comp_of[u] = Some(ci);
            for x in g.germs(u) {
                let t = g.terminus(x);
                if es.contains(&x.e) && seen.insert(t) {
                    tree.insert(x.e);
                    let mut p = tau[u].clone();
                    p.push(Letter::E(x));
                    tau[t] = p;
                    q.push_back(t);
                }
            }
        }
        comps.push(Comp { base, vertices: vs, edges: es });
    }
    Spanning { comps, comp_of, tau, tree }
}

fn in_a(sp: &Spanning, g: &MarkedGraph, l: Letter) -> bool {
    match l {
        Letter::E(o) => sp.comp_of[g.origin(o)].is_some_and(|c| sp.comps[c].edges.contains(&o.e)),
        Letter::M(m) => sp.comp_of[m.v].is_some(),
    }
}

fn word_end(g: &MarkedGraph, start: usize, w: &[Letter]) -> usize {
    match w.iter().rev().find_map(|l| l.edge()) {
        Some(o) => g.terminus(o),
        None => w.last().map(|l| if let Letter::M(m) = l { m.v } else { start }).unwrap_or(start),
    }
}

/// Per-component conjugator data.
struct Invariance {
    /// Reduced conjugator from `base(f(b_K))` to `p_K`.
    w: Vec<Letter>,
    /// Component of `A` that `K` maps into; `None` when `K` has trivial group.
    target: Option<usize>,
    p: usize,
}

struct Ctx<'a> {
    f: &'a StraightMap,
    table: Vec<Vec<Letter>>,
    sp: Spanning,
    inv: Vec<Invariance>,
}

impl Ctx<'_> {
    fn image(&self, w: &[Letter]) -> Vec<Letter> {
        let mut out = vec![];
        for &l in w {
            match l {
                Letter::E(o) if o.rev => out.extend(inverse_word(&self.table[o.e])),
                Letter::E(o) => out.extend(self.table[o.e].iter().copied()),
                Letter::M(m) => out.push(Letter::M(self.f.transport_marker(m))),
            }
        }
        reduce(out)
    }

    fn fbase(&self, v: usize) -> usize {
        self.f.vimg[v].base(&self.f.g)
    }

    /// Path from `p_K` to `base(f(u))` for `u` in `K`.
    fn pi(&self, u: usize) -> Vec<Letter> {
        let k = self.sp.comp_of[u].expect("vertex of A");
        let mut w = inverse_word(&self.inv[k].w);
        w.extend(self.image(&self.sp.tau[u]));
        reduce(w)
    }
}

fn generators(g: &MarkedGraph, sp: &Spanning, k: usize) -> Vec<Vec<Letter>> {
    let c = &sp.comps[k];
    let mut gens = vec![];
    for &e in &c.edges {
        if !sp.tree.contains(&e) {
            let [o, t] = g.edges[e].ends;
            let mut w = sp.tau[o].clone();
            w.push(Letter::E(OEdge::fwd(e)));
            w.extend(inverse_word(&sp.tau[t]));
            gens.push(w);
        }
    }
    for &u in &c.vertices {
        if g.is_nonfree(u) {
            let mut w = sp.tau[u].clone();
            w.push(Letter::M(Marker { v: u, idx: 0, inv: false }));
            w.extend(inverse_word(&sp.tau[u]));
            gens.push(w);
        }
    }
    gens
}

fn invariance<'a>(f: &'a StraightMap, a: &Subgraph) -> std::result::Result<Ctx<'a>, String> {
    let g = &f.g;
    let sp = spanning(g, a);
    let mut ctx = Ctx { f, table: f.comb_table(), sp, inv: vec![] };
    for k in 0..ctx.sp.comps.len() {
        let b = ctx.sp.comps[k].base;
        let start = ctx.fbase(b);
        let mut common: Option<(Vec<Letter>, usize)> = None;
        for gen in generators(g, &ctx.sp, k) {
            let r = ctx.image(&gen);
            if r.is_empty() {
                continue;
            }
            let n = r.len();
            let mut c = 0;
            while 2 * c + 1 < n && r[c] == r[n - 1 - c].inverse() {
                c += 1;
            }
            let mut w = r[..c].to_vec();
            while w.last().is_some_and(|&l| in_a(&ctx.sp, g, l)) {
                w.pop();
            }
            let middle = &r[w.len()..n - w.len()];
            if !middle.iter().all(|&l| in_a(&ctx.sp, g, l)) {
                return Err(format!("a loop of the component at {} leaves A", g.vertices[b].id));
            }
            let p = word_end(g, start, &w);
            let target = ctx.sp.comp_of[p].ok_or_else(|| "image component not in A".to_string())?;
            match &common {
                None => common = Some((w, target)),
                Some((w0, t0)) if *w0 == w && *t0 == target => {}
                Some(_) => return Err(format!("component at {} is not carried into one component", g.vertices[b].id)),
            }
        }
        ctx.inv.push(match common {
            Some((w, t)) => Invariance { p: word_end(g, start, &w), w, target: Some(t) },
            None => Invariance { w: vec![], target: ctx.sp.comp_of[start], p: start },
        });
    }
    Ok(ctx)
}

/// Outcome of collapsing an invariant subgraph.
#[derive(Clone, Debug)]
pub enum QuotientResult {
    Finite { map: StraightMap, record: CollapseRecord },
    Infinity(String),
}

struct Interner {
    /// Per quotient vertex: element word (based at b_K) to marker index.
    words: BTreeMap<usize, BTreeMap<Vec<Letter>, u32>>,
    next: BTreeMap<usize, u32>,
}

impl Interner {
    fn intern(&mut self, qv: usize, base: usize, w: Vec<Letter>) -> Option<Marker> {
        if w.is_empty() {
            return None;
        }
        if let [Letter::M(m)] = w[..] {
            if m.v == base {
                return Some(Marker { v: qv, idx: m.idx, inv: m.inv });
            }
        }
        let tab = self.words.entry(qv).or_default();
        if let Some(&i) = tab.get(&w) {
            return Some(Marker { v: qv, idx: i, inv: false });
        }
        if let Some(&i) = tab.get(&inverse_word(&w)) {
            return Some(Marker { v: qv, idx: i, inv: true });
        }
        let n = self.next.entry(qv).or_insert(1);
        let i = *n;
        *n += 1;
        tab.insert(w, i);
        Some(Marker { v: qv, idx: i, inv: false })
    }
}

/// The map induced on the collapse of `a`, or the reason `a` is not invariant.
pub fn quotient_map(f: &StraightMap, a: &Subgraph) -> QuotientResult {
    let ctx = match invariance(f, a) {
        Ok(c) => c,
        Err(why) => return QuotientResult::Infinity(why),
    };
    let g = &f.g;
    for (k, inv) in ctx.inv.iter().enumerate() {
        let comp = &ctx.sp.comps[k];
        let nontrivial = crate::graph_core::component_is_nontrivial(g, &comp.vertices, &comp.edges);
        if nontrivial && inv.target.is_none() {
            return QuotientResult::Infinity("a collapsed component maps outside A".into());
        }
    }
    let rec = collapse(g, a);
    let q = &rec.quotient;
    let mut interner = Interner { words: BTreeMap::new(), next: BTreeMap::new() };
    for (u, kind_nonfree) in (0..g.vertices.len()).map(|u| (u, g.is_nonfree(u))) {
        if kind_nonfree {
            let qv = rec.vertex_image[u];
            let max_idx = f.transport.keys().filter(|k| k.0 == u).map(|k| k.1).max().unwrap_or(0);
            let e = interner.next.entry(qv).or_insert(1);
            *e = (*e).max(max_idx + 1);
        }
    }
    for p in &f.eimg {
        for s in &p.segs {
            if let super::Seg::M(m) = s {
                let e = interner.next.entry(rec.vertex_image[m.v]).or_insert(1);
                *e = (*e).max(m.idx + 1);
            }
        }
    }
    let to_q = |interner: &mut Interner, start: usize, w: &[Letter]| -> Vec<Letter> {
        let mut out = vec![];
        let mut at = start;
        let mut run: Vec<Letter> = vec![];
        let mut run_start = start;
        let flush = |interner: &mut Interner, run: &mut Vec<Letter>, x: usize, y: usize, out: &mut Vec<Letter>| {
            let Some(k) = ctx.sp.comp_of[x] else { return };
            let mut el = ctx.sp.tau[x].clone();
            el.append(run);
            el.extend(inverse_word(&ctx.sp.tau[y]));
            let el = reduce(el);
            let qv = rec.vertex_image[ctx.sp.comps[k].base];
            if let Some(m) = interner.intern(qv, ctx.sp.comps[k].base, el) {
                out.push(Letter::M(m));
            }
        };
        for &l in w {
            if in_a(&ctx.sp, g, l) {
                if run.is_empty() {
                    run_start = at;
                }
                run.push(l);
            } else {
                if ctx.sp.comp_of[at].is_some() {
                    let x = if run.is_empty() { at } else { run_start };
                    flush(interner, &mut run, x, at, &mut out);
                }
                match l {
                    Letter::E(o) => out.push(Letter::E(OEdge { e: rec.projection[o.e].expect("kept edge"), rev: o.rev })),
                    Letter::M(m) => out.push(Letter::M(Marker { v: rec.vertex_image[m.v], ..m })),
                }
            }
            at = match l {
                Letter::E(o) => g.terminus(o),
                Letter::M(m) => m.v,
            };
        }
        if ctx.sp.comp_of[at].is_some() {
            let x = if run.is_empty() { at } else { run_start };
            flush(interner, &mut run, x, at, &mut out);
        }
        reduce(out)
    };
    let mut vmap = vec![0; q.vertices.len()];
    for u in 0..g.vertices.len() {
        let qv = rec.vertex_image[u];
        vmap[qv] = match ctx.sp.comp_of[u] {
            Some(k) => rec.vertex_image[ctx.inv[k].p],
            None => rec.vertex_image[ctx.fbase(u)],
        };
    }
    let mut words = vec![vec![]; q.edges.len()];
    for e in 0..g.edges.len() {
        let Some(qe) = rec.projection[e] else { continue };
        let [u, v] = g.edges[e].ends;
        let mut w = vec![];
        let mut start = ctx.fbase(u);
        if ctx.sp.comp_of[u].is_some() {
            w.extend(ctx.pi(u));
            start = ctx.inv[ctx.sp.comp_of[u].unwrap()].p;
        }
        w.extend(ctx.table[e].iter().copied());
        if ctx.sp.comp_of[v].is_some() {
            w.extend(inverse_word(&ctx.pi(v)));
        }
        words[qe] = to_q(&mut interner, start, &reduce(w));
    }
    // transport of interned and kept markers
    let mut transport = BTreeMap::new();
    let mut done = BTreeSet::new();
    for _round in 0..3 {
        let mut todo: Vec<(usize, u32, Vec<Letter>, usize)> = vec![];
        for (&qv, tab) in &interner.words {
            for (w, &i) in tab {
                if !done.contains(&(qv, i)) {
                    let k = (0..ctx.sp.comps.len()).find(|&k| rec.vertex_image[ctx.sp.comps[k].base] == qv).expect("component");
                    todo.push((qv, i, w.clone(), ctx.sp.comps[k].base));
                }
            }
        }
        for u in 0..g.vertices.len() {
            if g.is_nonfree(u) {
                let qv = rec.vertex_image[u];
                let mut idxs: BTreeSet<u32> = f.transport.keys().filter(|k| k.0 == u).map(|k| k.1).collect();
                idxs.insert(0);
                for i in idxs {
                    if !done.contains(&(qv, i)) && !interner.words.get(&qv).is_some_and(|t| t.values().any(|&j| j == i)) {
                        let base = match ctx.sp.comp_of[u] {
                            Some(k) => ctx.sp.comps[k].base,
                            None => u,
                        };
                        if base == u {
                            todo.push((qv, i, vec![Letter::M(Marker { v: u, idx: i, inv: false })], u));
                        }
                    }
                }
            }
        }
        if todo.is_empty() {
            break;
        }
        for (qv, i, w, base) in todo {
            done.insert((qv, i));
            let (start, img) = match ctx.sp.comp_of[base] {
                Some(k) => {
                    let mut x = inverse_word(&ctx.inv[k].w);
                    x.extend(ctx.image(&w));
                    x.extend(ctx.inv[k].w.iter().copied());
                    (ctx.inv[k].p, reduce(x))
                }
                None => (ctx.fbase(base), ctx.image(&w)),
            };
            if let [Letter::M(m)] = to_q(&mut interner, start, &img)[..] {
                if !m.inv {
                    transport.insert((qv, i), (m.v, m.idx));
                }
            }
        }
    }
    let name = format!("{}/{}", f.name, a.names(g).join(","));
    match StraightMap::from_words(&name, q.clone(), vmap, words) {
        Ok(mut map) => {
            map.transport = transport;
            QuotientResult::Finite { map, record: rec }
        }
        Err(e) => QuotientResult::Infinity(format!("induced map inconsistent: {e}")),
    }
}

/// Self-map of an invariant subgraph obtained by projecting images onto it.
#[derive(Clone, Debug)]
pub struct Restriction {
    pub map: StraightMap,
    /// Source vertex to restricted vertex.
    pub vertex_map: BTreeMap<usize, usize>,
    /// Source edge to restricted edge.
    pub edge_map: BTreeMap<usize, usize>,
    /// For each source vertex of `A`: path from its restricted image to `base(f(u))`.
    pub delta: BTreeMap<usize, Vec<Letter>>,
}

pub fn restriction(f: &StraightMap, a: &Subgraph) -> Result<Restriction> {
    let ctx = invariance(f, a).map_err(Error::NotInvariant)?;
    let g = &f.g;
    for (k, inv) in ctx.inv.iter().enumerate() {
        if inv.target.is_none() && !ctx.sp.comps[k].edges.is_empty() {
            return Err(Error::NotInvariant("a component maps outside A".into()));
        }
    }
    let mut sub = MarkedGraph::new(&format!("{}|A", g.name));
    let mut vertex_map = BTreeMap::new();
    for v in a.vertices(g) {
        vertex_map.insert(v, sub.add_vertex(&g.vertices[v].id, g.vertices[v].kind.clone()));
    }
    let mut edge_map = BTreeMap::new();
    for &e in &a.edges {
        let [o, t] = g.edges[e].ends;
        let ne = sub.add_edge(&g.edges[e].id, vertex_map[&o], vertex_map[&t], g.edges[e].len.clone());
        sub.edges[ne].len_src = g.edges[e].len_src.clone();
        edge_map.insert(e, ne);
    }
    let mut delta = BTreeMap::new();
    let mut vimg = vec![0; sub.vertices.len()];
    for (&u, &nu) in &vertex_map {
        let k = ctx.sp.comp_of[u].expect("vertex of A");
        let pi = ctx.pi(u);
        let split = pi.iter().position(|&l| !in_a(&ctx.sp, g, l)).unwrap_or(pi.len());
        let x = word_end(g, ctx.inv[k].p, &pi[..split]);
        vimg[nu] = vertex_map[&x];
        delta.insert(u, pi[split..].to_vec());
    }
    let mut words = vec![vec![]; sub.edges.len()];
    for (&e, &ne) in &edge_map {
        let [o, t] = g.edges[e].ends;
        let mut w = delta[&o].clone();
        w.extend(ctx.table[e].iter().copied());
        w.extend(inverse_word(&delta[&t]));
        let w = reduce(w);
        if !w.iter().all(|&l| in_a(&ctx.sp, g, l)) {
            return Err(Error::NotInvariant(format!("image of {} does not retract into A", g.edges[e].id)));
        }
        words[ne] = w
            .into_iter()
            .map(|l| match l {
                Letter::E(o) => Letter::E(OEdge { e: edge_map[&o.e], rev: o.rev }),
                Letter::M(m) => Letter::M(Marker { v: vertex_map[&m.v], ..m }),
            })
            .collect();
    }
    let name = format!("{}|{}", f.name, a.names(g).join(","));
    let mut map = StraightMap::from_words(&name, sub, vimg, words)?;
    for (&(v, i), &(w, j)) in &f.transport {
        if let (Some(&nv), Some(&nw)) = (vertex_map.get(&v), vertex_map.get(&w)) {
            map.transport.insert((nv, i), (nw, j));
        }
    }
    Ok(Restriction { map, vertex_map, edge_map, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_core::VertexKind;
    use crate::loops::parse_word;
    use crate::scalar::Scalar;
    use crate::straight_maps::tests::{phifib, rose2};

    pub(crate) fn psi() -> StraightMap {
        let mut g = MarkedGraph::new("rose4");
        let v = g.add_vertex("v", VertexKind::Free);
        for n in ["a0", "b0", "a1", "b1"] {
            g.add_edge(n, v, v, Scalar::one());
        }
        let words = ["a0 b0", "a0", "a1 b1 a0", "a1 a0"].iter().map(|w| parse_word(&g, w).unwrap()).collect();
        StraightMap::from_words("psi", g, vec![0], words).unwrap()
    }

    #[test]
    fn psi_quotient_carries_markers() {
        let f = psi();
        let QuotientResult::Finite { map, record } = quotient_map(&f, &Subgraph::from_edges([0, 1])) else {
            panic!("invariant")
        };
        assert!(record.at_infinity);
        let q = &map.g;
        assert_eq!(map.eimg[0].print(q), "a1 b1 @v.1");
        assert_eq!(map.eimg[1].print(q), "a1 @v.1");
    }

    #[test]
    fn psi_restriction_is_phifib() {
        let f = psi();
        let r = restriction(&f, &Subgraph::from_edges([0, 1])).unwrap();
        let g = &r.map.g;
        assert_eq!(r.map.eimg[0].print(g), "a0 b0");
        assert_eq!(r.map.eimg[1].print(g), "a0");
        assert!(r.map.lip() <= f.lip());
    }

    #[test]
    fn non_invariant_is_flagged() {
        let f = phifib(rose2(Scalar::one(), Scalar::one()));
        assert!(matches!(quotient_map(&f, &Subgraph::from_edges([0])), QuotientResult::Infinity(_)));
        assert!(matches!(restriction(&f, &Subgraph::from_edges([0])), Err(Error::NotInvariant(_))));
    }

    #[test]
    fn identity_quotient_is_identity() {
        let g = rose2(Scalar::one(), Scalar::one());
        let f = StraightMap::identity(&g);
        let QuotientResult::Finite { map, .. } = quotient_map(&f, &Subgraph::from_edges([0])) else { panic!() };
        assert_eq!(map.eimg[0].print(&map.g), "b");
        let r = restriction(&f, &Subgraph::from_edges([1])).unwrap();
        assert_eq!(r.map.eimg[0].print(&r.map.g), "b");
    }

    #[test]
    fn conjugated_invariance_is_detected() {
        // a -> b a b', b -> b: the petal a is invariant up to conjugation by b
        let g = rose2(Scalar::one(), Scalar::one());
        let words = vec![parse_word(&g, "b a b'").unwrap(), parse_word(&g, "b").unwrap()];
        let f = StraightMap::from_words("conj", g, vec![0], words).unwrap();
        let r = restriction(&f, &Subgraph::from_edges([0])).unwrap();
        assert_eq!(r.map.eimg[0].print(&r.map.g), "a");
        let QuotientResult::Finite { map, .. } = quotient_map(&f, &Subgraph::from_edges([0])) else { panic!() };
        assert_eq!(map.eimg[0].print(&map.g), "b");
    }
}
