//! Metric graphs of groups with trivial edge groups.

use crate::loops::{self, Loop};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKind {
    Free,
    NonFree(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub kind: VertexKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub ends: [usize; 2],
    pub len: Scalar,
    /// Source text of the length, kept so printing round-trips.
    pub len_src: Option<String>,
}

/// An edge traversed forward (`rev == false`) or backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OEdge {
    pub e: usize,
    pub rev: bool,
}

impl OEdge {
    pub fn fwd(e: usize) -> OEdge {
        OEdge { e, rev: false }
    }

    pub fn bwd(e: usize) -> OEdge {
        OEdge { e, rev: true }
    }

    pub fn inv(self) -> OEdge {
        OEdge { e: self.e, rev: !self.rev }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkedGraph {
    pub name: String,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    /// Edges of the designated collapsed subgraph (zero lengths allowed there).
    pub collapsed: BTreeSet<usize>,
}

pub(crate) struct Dsu(Vec<usize>);

impl Dsu {
    pub(crate) fn new(n: usize) -> Dsu {
        Dsu((0..n).collect())
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

impl MarkedGraph {
    pub fn new(name: &str) -> MarkedGraph {
        MarkedGraph { name: name.to_string(), vertices: vec![], edges: vec![], collapsed: BTreeSet::new() }
    }

    pub fn add_vertex(&mut self, id: &str, kind: VertexKind) -> usize {
        self.vertices.push(Vertex { id: id.to_string(), kind });
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, id: &str, a: usize, b: usize, len: Scalar) -> usize {
        self.edges.push(Edge { id: id.to_string(), ends: [a, b], len, len_src: None });
        self.edges.len() - 1
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn origin(&self, oe: OEdge) -> usize {
        self.edges[oe.e].ends[oe.rev as usize]
    }

    pub fn terminus(&self, oe: OEdge) -> usize {
        self.edges[oe.e].ends[1 - oe.rev as usize]
    }

    pub fn len(&self, e: usize) -> &Scalar {
        &self.edges[e].len
    }

    pub fn lengths(&self) -> Vec<Scalar> {
        self.edges.iter().map(|e| e.len.clone()).collect()
    }

    pub fn with_lengths(&self, ls: &[Scalar]) -> MarkedGraph {
        let mut g = self.clone();
        for (e, l) in g.edges.iter_mut().zip(ls) {
            e.len = l.clone();
            e.len_src = None;
        }
        g
    }

    pub fn is_nonfree(&self, v: usize) -> bool {
        matches!(self.vertices[v].kind, VertexKind::NonFree(_))
    }

    pub fn oedge_name(&self, oe: OEdge) -> String {
        if oe.rev {
            format!("{}'", self.edges[oe.e].id)
        } else {
            self.edges[oe.e].id.clone()
        }
    }

    /// Oriented edges leaving `v`, in a fixed order; a loop contributes both orientations.
    pub fn germs(&self, v: usize) -> Vec<OEdge> {
        let mut out = vec![];
        for (i, e) in self.edges.iter().enumerate() {
            if e.ends[0] == v {
                out.push(OEdge::fwd(i));
            }
            if e.ends[1] == v {
                out.push(OEdge::bwd(i));
            }
        }
        out
    }

    pub fn all_germs(&self) -> Vec<OEdge> {
        (0..self.edges.len()).flat_map(|e| [OEdge::fwd(e), OEdge::bwd(e)]).collect()
    }

    pub fn valence_in(&self, v: usize, edges: &BTreeSet<usize>) -> usize {
        edges
            .iter()
            .map(|&e| self.edges[e].ends.iter().filter(|&&x| x == v).count())
            .sum()
    }

    pub fn valence(&self, v: usize) -> usize {
        self.edges.iter().map(|e| e.ends.iter().filter(|&&x| x == v).count()).sum()
    }

    pub fn all_edges(&self) -> BTreeSet<usize> {
        (0..self.edges.len()).collect()
    }

    /// Connected components as (vertices, edges), ordered by smallest vertex.
    pub fn components(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut d = Dsu::new(self.vertices.len());
        for e in &self.edges {
            d.union(e.ends[0], e.ends[1]);
        }
        let mut by_root: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for v in 0..self.vertices.len() {
            by_root.entry(d.find(v)).or_default().0.push(v);
        }
        for (i, e) in self.edges.iter().enumerate() {
            let r = d.find(e.ends[0]);
            by_root.entry(r).or_default().1.push(i);
        }
        by_root.into_values().collect()
    }

    pub fn component_of_vertex(&self) -> Vec<usize> {
        let comps = self.components();
        let mut out = vec![0; self.vertices.len()];
        for (i, (vs, _)) in comps.iter().enumerate() {
            for &v in vs {
                out[v] = i;
            }
        }
        out
    }

    pub fn volume(&self) -> Scalar {
        self.edges.iter().map(|e| e.len.clone()).sum()
    }

    pub fn validate(&self) -> ValidityReport {
        let all = self.all_edges();
        let mut r = ValidityReport::default();
        for v in 0..self.vertices.len() {
            if self.is_nonfree(v) {
                continue;
            }
            match self.valence_in(v, &all) {
                1 => r.free_leaves.push(self.vertices[v].id.clone()),
                2 => r.redundant_vertices.push(self.vertices[v].id.clone()),
                _ => {}
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.len.is_negative() {
                r.negative_lengths.push(e.id.clone());
            } else if e.len.is_zero() {
                if self.collapsed.contains(&i) {
                    r.zero_inside_collapse.push(e.id.clone());
                } else {
                    r.zero_outside_collapse.push(e.id.clone());
                }
            }
        }
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for v in &self.vertices {
            if let VertexKind::NonFree(l) = &v.kind {
                if let Some(prev) = seen.insert(l, &v.id) {
                    r.label_conflicts.push(format!("{l} on {prev} and {}", v.id));
                }
            }
        }
        r.is_valid_point = r.free_leaves.is_empty()
            && r.redundant_vertices.is_empty()
            && r.negative_lengths.is_empty()
            && r.zero_outside_collapse.is_empty()
            && r.zero_inside_collapse.is_empty()
            && r.label_conflicts.is_empty();
        r
    }

    pub fn kurosh_rank(&self) -> usize {
        let comps = self.components();
        let betti: usize = comps.iter().map(|(vs, es)| es.len() + 1 - vs.len()).sum();
        betti + (0..self.vertices.len()).filter(|&v| self.is_nonfree(v)).count()
    }

    /// Positive length on every edge outside the designated collapse.
    pub fn check_lengths(&self) -> crate::Result<()> {
        for (i, e) in self.edges.iter().enumerate() {
            if !e.len.is_positive() && !self.collapsed.contains(&i) {
                return Err(crate::Error::ZeroLengthEdge(e.id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidityReport {
    pub free_leaves: Vec<String>,
    pub redundant_vertices: Vec<String>,
    pub negative_lengths: Vec<String>,
    pub zero_outside_collapse: Vec<String>,
    pub zero_inside_collapse: Vec<String>,
    pub label_conflicts: Vec<String>,
    pub is_valid_point: bool,
}

impl ValidityReport {
    pub fn flags(&self) -> Vec<String> {
        let mut out = vec![];
        for v in &self.free_leaves {
            out.push(format!("free leaf {v}"));
        }
        for v in &self.redundant_vertices {
            out.push(format!("redundant vertex {v}"));
        }
        for e in &self.negative_lengths {
            out.push(format!("negative length {e}"));
        }
        for e in &self.zero_outside_collapse {
            out.push(format!("zero length outside collapse {e}"));
        }
        for e in &self.zero_inside_collapse {
            out.push(format!("zero length inside collapse {e}"));
        }
        for l in &self.label_conflicts {
            out.push(format!("label conflict {l}"));
        }
        out
    }
}

/// Edge set plus explicitly included isolated vertices of an owning graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subgraph {
    pub edges: BTreeSet<usize>,
    pub isolated: BTreeSet<usize>,
}

impl Subgraph {
    pub fn from_edges(edges: impl IntoIterator<Item = usize>) -> Subgraph {
        Subgraph { edges: edges.into_iter().collect(), isolated: BTreeSet::new() }
    }

    pub fn whole(g: &MarkedGraph) -> Subgraph {
        Subgraph::from_edges(0..g.edges.len())
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.isolated.is_empty()
    }

    pub fn vertices(&self, g: &MarkedGraph) -> BTreeSet<usize> {
        let mut vs = self.isolated.clone();
        for &e in &self.edges {
            vs.extend(g.edges[e].ends);
        }
        vs
    }

    pub fn volume(&self, g: &MarkedGraph) -> Scalar {
        self.edges.iter().map(|&e| g.edges[e].len.clone()).sum()
    }

    /// Components as (vertices, edges).
    pub fn components(&self, g: &MarkedGraph) -> Vec<(BTreeSet<usize>, BTreeSet<usize>)> {
        let mut d = Dsu::new(g.vertices.len());
        for &e in &self.edges {
            d.union(g.edges[e].ends[0], g.edges[e].ends[1]);
        }
        let mut by_root: BTreeMap<usize, (BTreeSet<usize>, BTreeSet<usize>)> = BTreeMap::new();
        for v in self.vertices(g) {
            by_root.entry(d.find(v)).or_default().0.insert(v);
        }
        for &e in &self.edges {
            by_root.entry(d.find(g.edges[e].ends[0])).or_default().1.insert(e);
        }
        by_root.into_values().collect()
    }

    /// Some component is not a tree carrying at most one non-free vertex.
    pub fn is_nontrivial(&self, g: &MarkedGraph) -> bool {
        self.components(g).iter().any(|(vs, es)| component_is_nontrivial(g, vs, es))
    }

    pub fn names(&self, g: &MarkedGraph) -> Vec<String> {
        self.edges.iter().map(|&e| g.edges[e].id.clone()).collect()
    }
}

pub(crate) fn component_is_nontrivial(g: &MarkedGraph, vs: &BTreeSet<usize>, es: &BTreeSet<usize>) -> bool {
    let betti = es.len() + 1 - vs.len();
    betti > 0 || vs.iter().filter(|&&v| g.is_nonfree(v)).count() >= 2
}

/// Largest subgraph without free leaves.
pub fn core(g: &MarkedGraph, s: &Subgraph) -> Subgraph {
    let mut edges = s.edges.clone();
    loop {
        let leaf_edge = edges.iter().copied().find(|&e| {
            g.edges[e].ends.iter().any(|&v| !g.is_nonfree(v) && g.valence_in(v, &edges) == 1)
        });
        match leaf_edge {
            Some(e) => {
                edges.remove(&e);
            }
            None => break,
        }
    }
    let isolated = s.isolated.iter().copied().filter(|&v| g.is_nonfree(v)).collect();
    Subgraph { edges, isolated }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseRecord {
    pub source: MarkedGraph,
    pub collapsed: Subgraph,
    pub quotient: MarkedGraph,
    /// Source edge to kept quotient edge, `None` when collapsed.
    pub projection: Vec<Option<usize>>,
    pub vertex_image: Vec<usize>,
    /// Quotient vertices created from nontrivial collapsed components.
    pub new_nonfree: Vec<usize>,
    pub at_infinity: bool,
    pub validity: ValidityReport,
}

pub fn collapse(g: &MarkedGraph, s: &Subgraph) -> CollapseRecord {
    let mut d = Dsu::new(g.vertices.len());
    for &e in &s.edges {
        d.union(g.edges[e].ends[0], g.edges[e].ends[1]);
    }
    let comps = s.components(g);
    let mut q = MarkedGraph::new(&g.name);
    let mut root_to_q: BTreeMap<usize, usize> = BTreeMap::new();
    let mut new_nonfree = vec![];
    let mut at_infinity = false;
    let mut vertex_image = vec![0; g.vertices.len()];
    let comp_of_root: BTreeMap<usize, usize> = comps
        .iter()
        .enumerate()
        .filter_map(|(i, (vs, _))| vs.iter().next().map(|&v| (d.find(v), i)))
        .collect();
    for v in 0..g.vertices.len() {
        let r = d.find(v);
        if let Some(&qv) = root_to_q.get(&r) {
            vertex_image[v] = qv;
            continue;
        }
        let qv = match comp_of_root.get(&r) {
            Some(&ci) if !comps[ci].1.is_empty() => {
                let (vs, es) = &comps[ci];
                let name: Vec<&str> = vs.iter().map(|&x| g.vertices[x].id.as_str()).collect();
                let name = name.join("+");
                if component_is_nontrivial(g, vs, es) {
                    at_infinity = true;
                    let label: Vec<&str> = es.iter().map(|&e| g.edges[e].id.as_str()).collect();
                    let id = q.add_vertex(&name, VertexKind::NonFree(format!("<{}>", label.join(","))));
                    new_nonfree.push(id);
                    id
                } else {
                    let kind = vs
                        .iter()
                        .find_map(|&x| match &g.vertices[x].kind {
                            VertexKind::NonFree(l) => Some(VertexKind::NonFree(l.clone())),
                            VertexKind::Free => None,
                        })
                        .unwrap_or(VertexKind::Free);
                    q.add_vertex(&name, kind)
                }
            }
            _ => q.add_vertex(&g.vertices[v].id, g.vertices[v].kind.clone()),
        };
        root_to_q.insert(r, qv);
        vertex_image[v] = qv;
    }
    let mut projection = vec![None; g.edges.len()];
    for (i, e) in g.edges.iter().enumerate() {
        if s.edges.contains(&i) {
            continue;
        }
        let ne = q.add_edge(&e.id, vertex_image[e.ends[0]], vertex_image[e.ends[1]], e.len.clone());
        q.edges[ne].len_src = e.len_src.clone();
        if g.collapsed.contains(&i) {
            q.collapsed.insert(ne);
        }
        projection[i] = Some(ne);
    }
    let validity = q.validate();
    CollapseRecord {
        source: g.clone(),
        collapsed: s.clone(),
        quotient: q,
        projection,
        vertex_image,
        new_nonfree,
        at_infinity,
        validity,
    }
}

/// Union of supports of loops shorter than `eps * vol`, cored.
pub fn thin_part(g: &MarkedGraph, eps: &Scalar, loops: &[Loop]) -> Subgraph {
    let thr = eps * &g.volume();
    let mut edges = BTreeSet::new();
    for l in loops {
        if l.length(g) < thr {
            edges.extend(l.support());
        }
    }
    core(g, &Subgraph::from_edges(edges))
}

pub fn thin_part_default(g: &MarkedGraph, eps: &Scalar) -> crate::Result<Subgraph> {
    let loops = loops::brute_force_loops(g, 2)?;
    Ok(thin_part(g, eps, &loops))
}

pub fn is_m_eps_collapsed(g: &MarkedGraph, m: &Scalar, eps: &Scalar, loops: &[Loop]) -> bool {
    let vol = g.volume();
    let short = &vol * eps;
    let long = &vol * m;
    let mut has_short = false;
    for l in loops {
        let len = l.length(g);
        if len < short {
            has_short = true;
        } else if len <= long {
            return false;
        }
    }
    has_short
}
