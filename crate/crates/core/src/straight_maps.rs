//! Straight self-maps of marked metric graphs.

mod gates;
mod paths;
mod quotient;

pub use gates::{
    gate_closure, gates, invariant_subgraph, is_legal_loop, is_legal_path, is_legal_turn, is_minimal_optimal,
    is_optimal, is_partial_train_track, is_weakly_optimal, legal_max_candidates, GateStructure, PttReport,
};
pub use paths::{push_seg, tethered_letters, tighten_segs, Dir, FracPath, Point, Seg};
pub use quotient::{quotient_map, restriction, QuotientResult, Restriction};

use crate::error::{Error, Result};
use crate::graph_core::{MarkedGraph, OEdge, Subgraph};
use crate::loops::{self, Candidate, Letter, Loop, Marker};
use crate::scalar::Scalar;
use std::collections::BTreeMap;

/// DSL text the map was parsed from, per vertex and edge.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MapSource {
    pub sigma: Option<String>,
    pub vimg: Vec<Option<String>>,
    pub eimg: Vec<Option<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StraightMap {
    pub name: String,
    pub g: MarkedGraph,
    /// Component permutation, indexed like `g.components()`.
    pub sigma: Vec<usize>,
    pub vimg: Vec<Point>,
    /// Image of each edge in its forward orientation.
    pub eimg: Vec<FracPath>,
    /// Explicit marker transport `(v, idx) -> (w, idx')`; absent entries keep the index.
    pub transport: BTreeMap<(usize, u32), (usize, u32)>,
    pub src: Option<MapSource>,
}

impl StraightMap {
    pub fn new(name: &str, g: MarkedGraph, vimg: Vec<Point>, eimg: Vec<FracPath>) -> Result<StraightMap> {
        let mut f = StraightMap {
            name: name.to_string(),
            g,
            sigma: vec![],
            vimg,
            eimg,
            transport: BTreeMap::new(),
            src: None,
        };
        f.sigma = f.derive_sigma();
        f.check()?;
        Ok(f)
    }

    /// Map on `g` given by combinatorial edge images, every vertex to a vertex.
    pub fn from_words(name: &str, g: MarkedGraph, vmap: Vec<usize>, words: Vec<Vec<Letter>>) -> Result<StraightMap> {
        let vimg: Vec<Point> = vmap.into_iter().map(Point::At).collect();
        let eimg = words
            .into_iter()
            .enumerate()
            .map(|(e, w)| {
                let o = g.edges[e].ends[0];
                FracPath::tightened(vimg[o].clone(), w.into_iter().map(Seg::from_letter))
            })
            .collect();
        StraightMap::new(name, g, vimg, eimg)
    }

    pub fn identity(g: &MarkedGraph) -> StraightMap {
        let vmap = (0..g.vertices.len()).collect();
        let words = (0..g.edges.len()).map(|e| vec![Letter::E(OEdge::fwd(e))]).collect();
        StraightMap::from_words("id", g.clone(), vmap, words).expect("identity is consistent")
    }

    fn derive_sigma(&self) -> Vec<usize> {
        let comp = self.g.component_of_vertex();
        let n = self.g.components().len();
        let mut sigma = vec![0; n];
        for (v, p) in self.vimg.iter().enumerate() {
            sigma[comp[v]] = comp[p.base(&self.g)];
        }
        sigma
    }

    pub fn check(&self) -> Result<()> {
        let g = &self.g;
        if self.vimg.len() != g.vertices.len() || self.eimg.len() != g.edges.len() {
            return Err(Error::Invalid("map does not cover every vertex and edge".into()));
        }
        for (v, p) in self.vimg.iter().enumerate() {
            if g.is_nonfree(v) {
                match p {
                    Point::At(w) if g.is_nonfree(*w) => {}
                    _ => {
                        return Err(Error::Invalid(format!(
                            "non-free vertex {} must map to a non-free vertex",
                            g.vertices[v].id
                        )))
                    }
                }
            }
        }
        for (e, p) in self.eimg.iter().enumerate() {
            let [o, t] = g.edges[e].ends;
            p.check(g)?;
            if p.start != self.vimg[o] || p.end(g) != self.vimg[t] {
                return Err(Error::IncompatibleLetters(format!(
                    "image of {} must run from the image of {} to the image of {}",
                    g.edges[e].id, g.vertices[o].id, g.vertices[t].id
                )));
            }
        }
        let mut seen = BTreeMap::new();
        for (c, &d) in self.sigma.iter().enumerate() {
            if let Some(prev) = seen.insert(d, c) {
                return Err(Error::Invalid(format!("components {prev} and {c} map to the same component")));
            }
        }
        Ok(())
    }

    pub fn image(&self, oe: OEdge) -> FracPath {
        if oe.rev {
            self.eimg[oe.e].reverse(&self.g)
        } else {
            self.eimg[oe.e].clone()
        }
    }

    pub fn with_lengths(&self, ls: &[Scalar]) -> StraightMap {
        StraightMap { g: self.g.with_lengths(ls), src: None, ..self.clone() }
    }

    pub fn with_graph(&self, g: MarkedGraph) -> StraightMap {
        StraightMap { g, src: None, ..self.clone() }
    }

    pub fn transport_marker(&self, m: Marker) -> Marker {
        let (v, idx) = match self.transport.get(&(m.v, m.idx)) {
            Some(&(w, i)) => (w, i),
            None => (self.vimg[m.v].vertex().expect("non-free vertices map to vertices"), m.idx),
        };
        Marker { v, idx, inv: m.inv }
    }

    pub fn image_length(&self, e: usize) -> Scalar {
        self.eimg[e].length(&self.g)
    }

    pub fn stretch(&self, e: usize) -> Result<Scalar> {
        let l = self.g.len(e);
        if !l.is_positive() {
            return Err(Error::ZeroLengthEdge(self.g.edges[e].id.clone()));
        }
        Ok(self.image_length(e) / l)
    }

    /// Stretch of every edge of positive length; collapsed edges read as `None`.
    pub fn stretches(&self) -> Vec<Option<Scalar>> {
        (0..self.g.edges.len()).map(|e| self.stretch(e).ok()).collect()
    }

    pub fn lip(&self) -> Scalar {
        self.stretches().into_iter().flatten().fold(Scalar::zero(), Scalar::max)
    }

    pub fn tension_graph(&self) -> Subgraph {
        let st = self.stretches();
        let max = self.lip();
        Subgraph::from_edges((0..st.len()).filter(|&e| st[e].as_ref() == Some(&max)))
    }

    /// Combinatorial image of an oriented edge with tethers to base vertices.
    pub fn comb(&self, oe: OEdge) -> Vec<Letter> {
        tethered_letters(&self.g, &self.image(oe))
    }

    pub fn comb_table(&self) -> Vec<Vec<Letter>> {
        (0..self.g.edges.len()).map(|e| self.comb(OEdge::fwd(e))).collect()
    }

    fn word_image_with(&self, table: &[Vec<Letter>], w: &[Letter]) -> Vec<Letter> {
        let mut out = vec![];
        for &l in w {
            match l {
                Letter::E(oe) if oe.rev => out.extend(loops::inverse_word(&table[oe.e])),
                Letter::E(oe) => out.extend(table[oe.e].iter().copied()),
                Letter::M(m) => out.push(Letter::M(self.transport_marker(m))),
            }
        }
        out
    }

    /// Cyclically reduced image of a loop; may be a bare marker (elliptic).
    pub fn image_loop_with(&self, table: &[Vec<Letter>], gamma: &Loop) -> Loop {
        let w = loops::cyclic_reduce(self.word_image_with(table, &gamma.letters));
        Loop { letters: loops::canonical_rotation(&w) }
    }

    pub fn image_loop(&self, gamma: &Loop) -> Result<Loop> {
        let l = self.image_loop_with(&self.comb_table(), gamma);
        if l.letters.is_empty() {
            return Err(Error::EmptyLoop);
        }
        Ok(l)
    }

    /// Image of a combinatorial path from vertex to vertex.
    pub fn image_path(&self, p: &loops::EdgePath) -> FracPath {
        let mut segs = vec![];
        for &l in &p.letters {
            match l {
                Letter::E(oe) => segs.extend(self.image(oe).segs),
                Letter::M(m) => segs.push(Seg::M(self.transport_marker(m))),
            }
        }
        FracPath::tightened(self.vimg[p.start].clone(), segs)
    }

    /// Image of a fractional path under this map, tightened.
    pub fn image_frac(&self, p: &FracPath) -> FracPath {
        let g = &self.g;
        let start = self.image_point(&p.start);
        let mut segs = vec![];
        for s in &p.segs {
            match s {
                Seg::M(m) => segs.push(Seg::M(self.transport_marker(*m))),
                Seg::E { oe, a, b } => segs.extend(self.image(*oe).sub(g, a, b).segs),
            }
        }
        FracPath::tightened(start, segs)
    }

    pub fn image_point(&self, p: &Point) -> Point {
        match p {
            Point::At(v) => self.vimg[*v].clone(),
            Point::In(e, t) => self.eimg[*e].sub(&self.g, t, t).start,
        }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &StraightMap) -> StraightMap {
        let vimg = other.vimg.iter().map(|p| self.image_point(p)).collect();
        let eimg = other.eimg.iter().map(|p| self.image_frac(p)).collect();
        let mut transport = BTreeMap::new();
        for v in 0..self.g.vertices.len() {
            if self.g.is_nonfree(v) {
                let idxs: std::collections::BTreeSet<u32> = self
                    .transport
                    .keys()
                    .chain(other.transport.keys())
                    .filter(|k| k.0 == v)
                    .map(|k| k.1)
                    .collect();
                for i in idxs {
                    let m = other.transport_marker(Marker { v, idx: i, inv: false });
                    let m2 = self.transport_marker(m);
                    transport.insert((v, i), (m2.v, m2.idx));
                }
            }
        }
        let name = format!("{}.{}", self.name, other.name);
        let mut f = StraightMap { name, g: self.g.clone(), sigma: vec![], vimg, eimg, transport, src: None };
        f.sigma = f.derive_sigma();
        f
    }

    pub fn iterate(&self, k: u32) -> StraightMap {
        assert!(k >= 1, "iterate needs k >= 1");
        let mut f = self.clone();
        for _ in 1..k {
            f = self.compose(&f);
        }
        if k > 1 {
            f.name = format!("{}^{}", self.name, k);
        }
        f
    }

    /// Ratio `L(f#g)/L(g)` of a hyperbolic loop.
    pub fn loop_ratio(&self, table: &[Vec<Letter>], gamma: &Loop) -> Scalar {
        let img = self.image_loop_with(table, gamma);
        img.length(&self.g) / gamma.length(&self.g)
    }

    /// Max ratio over `cands` (or the given loops) and the first loop attaining it.
    pub fn max_ratio<'a>(&self, cands: impl IntoIterator<Item = &'a Loop>) -> Option<(Scalar, Loop)> {
        let table = self.comb_table();
        let mut best: Option<(Scalar, Loop)> = None;
        for c in cands {
            let l = c.length(&self.g);
            if !l.is_positive() {
                continue;
            }
            let r = self.loop_ratio(&table, c);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, c.clone()));
            }
        }
        best
    }

    pub fn candidate_lambda(&self, cands: &[Candidate]) -> Option<(Scalar, Loop)> {
        self.max_ratio(cands.iter().map(|c| &c.loop_))
    }

    pub fn print(&self) -> String {
        let g = &self.g;
        let mut out = format!("map {} on {}\n", self.name, g.name);
        if self.sigma.len() > 1 {
            out += &format!("sigma {}\n", self.sigma.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
        }
        for (v, p) in self.vimg.iter().enumerate() {
            let rhs = self
                .src
                .as_ref()
                .and_then(|s| s.vimg.get(v).cloned().flatten())
                .unwrap_or_else(|| p.print(g));
            out += &format!("v {} -> {}\n", g.vertices[v].id, rhs);
        }
        for (e, p) in self.eimg.iter().enumerate() {
            let rhs = self
                .src
                .as_ref()
                .and_then(|s| s.eimg.get(e).cloned().flatten())
                .unwrap_or_else(|| p.print(g));
            out += &format!("e {} -> {}\n", g.edges[e].id, rhs);
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph_core::VertexKind;
    use crate::loops::parse_word;

    pub(crate) fn rose2(la: Scalar, lb: Scalar) -> MarkedGraph {
        let mut g = MarkedGraph::new("rose2");
        let v = g.add_vertex("v", VertexKind::Free);
        g.add_edge("a", v, v, la);
        g.add_edge("b", v, v, lb);
        g
    }

    pub(crate) fn phifib(g: MarkedGraph) -> StraightMap {
        let words = vec![parse_word(&g, "a b").unwrap(), parse_word(&g, "a").unwrap()];
        StraightMap::from_words("phifib", g, vec![0], words).unwrap()
    }

    #[test]
    fn phifib_images_and_ratios() {
        let f = phifib(rose2(Scalar::one(), Scalar::one()));
        let g = &f.g;
        let ab_ = loops::parse_loop(g, "a b'").unwrap();
        assert_eq!(f.image_loop(&ab_).unwrap().print(g), "b");
        let a = loops::parse_loop(g, "a").unwrap();
        assert_eq!(f.image_loop(&a).unwrap().print(g), "a b");
        assert_eq!(f.lip(), Scalar::int(2));
        assert_eq!(f.tension_graph().edges.into_iter().collect::<Vec<_>>(), vec![0]);
        let f2 = f.iterate(2);
        assert_eq!(f2.eimg[0].print(g), "a b a");
        assert_eq!(f.iterate(1), f);
    }

    #[test]
    fn iteration_commutes_with_loop_images() {
        let f = phifib(rose2(Scalar::ratio(3, 2), Scalar::one()));
        let g = &f.g;
        for w in ["a", "a b'", "a a b", "a b a' b'"] {
            let l = loops::parse_loop(g, w).unwrap();
            let twice = f.image_loop(&f.image_loop(&l).unwrap()).unwrap();
            assert_eq!(f.iterate(2).image_loop(&l).unwrap(), twice);
        }
    }

    #[test]
    fn interior_vertex_images_compose() {
        let mut g = MarkedGraph::new("c");
        let v = g.add_vertex("v", VertexKind::Free);
        g.add_edge("c", v, v, Scalar::int(1));
        let p = Point::In(0, Scalar::ratio(1, 4));
        let img = FracPath::tightened(
            p.clone(),
            [
                Seg::E { oe: OEdge::fwd(0), a: Scalar::ratio(1, 4), b: Scalar::one() },
                Seg::E { oe: OEdge::fwd(0), a: Scalar::zero(), b: Scalar::ratio(1, 4) },
            ],
        );
        let f = StraightMap::new("rot", g, vec![p], vec![img]).unwrap();
        assert_eq!(f.lip(), Scalar::one());
        let f2 = f.iterate(2);
        assert_eq!(f2.vimg[0], Point::In(0, Scalar::ratio(1, 2)));
        assert_eq!(f2.lip(), Scalar::one());
        assert_eq!(f.comb(OEdge::fwd(0)), vec![Letter::E(OEdge::fwd(0))]);
    }
}
