//! Points and fractional paths in the geometric realization.

use crate::error::{Error, Result};
use crate::graph_core::{MarkedGraph, OEdge};
use crate::loops::{Letter, Marker};
use crate::scalar::Scalar;

/// A vertex, or an interior point of an edge in forward coordinates, `0 < t < 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    At(usize),
    In(usize, Scalar),
}

impl Point {
    /// The point at fraction `pos` along the oriented edge `oe`.
    pub fn on(g: &MarkedGraph, oe: OEdge, pos: Scalar) -> Point {
        let t = if oe.rev { Scalar::one() - pos } else { pos };
        if t.is_zero() {
            Point::At(g.edges[oe.e].ends[0])
        } else if t == Scalar::one() {
            Point::At(g.edges[oe.e].ends[1])
        } else {
            Point::In(oe.e, t)
        }
    }

    /// Vertex the combinatorial tether starts from.
    pub fn base(&self, g: &MarkedGraph) -> usize {
        match self {
            Point::At(v) => *v,
            Point::In(e, _) => g.edges[*e].ends[0],
        }
    }

    /// Segment from `base` to the point, if the point is interior.
    pub fn tether(&self) -> Option<Seg> {
        match self {
            Point::At(_) => None,
            Point::In(e, t) => Some(Seg::E { oe: OEdge::fwd(*e), a: Scalar::zero(), b: t.clone() }),
        }
    }

    pub fn vertex(&self) -> Option<usize> {
        match self {
            Point::At(v) => Some(*v),
            Point::In(..) => None,
        }
    }

    /// Position of the point along `oe`, if it lies on that edge.
    pub fn pos_on(&self, g: &MarkedGraph, oe: OEdge) -> Option<Scalar> {
        match self {
            Point::In(e, t) if *e == oe.e => Some(if oe.rev { Scalar::one() - t } else { t.clone() }),
            Point::At(v) if g.origin(oe) == *v => Some(Scalar::zero()),
            Point::At(v) if g.terminus(oe) == *v => Some(Scalar::one()),
            _ => None,
        }
    }

    pub fn print(&self, g: &MarkedGraph) -> String {
        match self {
            Point::At(v) => format!("vertex {}", g.vertices[*v].id),
            Point::In(e, t) => format!("point {} {}", g.edges[*e].id, t.exact_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Seg {
    /// Traverse `oe` from fraction `a` to fraction `b`, `a < b`.
    E { oe: OEdge, a: Scalar, b: Scalar },
    M(Marker),
}

impl Seg {
    pub fn full(oe: OEdge) -> Seg {
        Seg::E { oe, a: Scalar::zero(), b: Scalar::one() }
    }

    pub fn inverse(&self) -> Seg {
        match self {
            Seg::E { oe, a, b } => Seg::E { oe: oe.inv(), a: Scalar::one() - b, b: Scalar::one() - a },
            Seg::M(m) => Seg::M(m.inverse()),
        }
    }

    pub fn length(&self, g: &MarkedGraph) -> Scalar {
        match self {
            Seg::E { oe, a, b } => (b - a) * g.len(oe.e),
            Seg::M(_) => Scalar::zero(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Seg::E { a, b, .. } if a.is_zero() && *b == Scalar::one())
    }

    pub fn from_letter(l: Letter) -> Seg {
        match l {
            Letter::E(oe) => Seg::full(oe),
            Letter::M(m) => Seg::M(m),
        }
    }
}

/// Push `s` onto a tight stack of segments, cancelling backtracks.
pub fn push_seg(st: &mut Vec<Seg>, s: Seg) {
    match s {
        Seg::M(m) => {
            if st.last() == Some(&Seg::M(m.inverse())) {
                st.pop();
            } else {
                st.push(Seg::M(m));
            }
        }
        Seg::E { oe, a, b } => {
            if a >= b {
                return;
            }
            let (mut a, b) = (a, b);
            loop {
                let Some(Seg::E { oe: o1, a: a1, b: b1 }) = st.last_mut() else {
                    st.push(Seg::E { oe, a, b });
                    return;
                };
                if o1.e != oe.e {
                    st.push(Seg::E { oe, a, b });
                    return;
                }
                if *o1 == oe {
                    if *b1 == a {
                        *b1 = b;
                    } else {
                        st.push(Seg::E { oe, a, b });
                    }
                    return;
                }
                if *b1 != Scalar::one() - &a {
                    st.push(Seg::E { oe, a, b });
                    return;
                }
                let back_to = Scalar::one() - &b;
                if back_to > *a1 {
                    *b1 = back_to;
                    return;
                }
                let a1v = a1.clone();
                st.pop();
                if back_to == a1v {
                    return;
                }
                a = Scalar::one() - a1v;
            }
        }
    }
}

pub fn tighten_segs(segs: impl IntoIterator<Item = Seg>) -> Vec<Seg> {
    let mut st = vec![];
    for s in segs {
        push_seg(&mut st, s);
    }
    st
}

/// A path from `start` through `segs`; tight after `tightened`.
#[derive(Clone, Debug, PartialEq)]
pub struct FracPath {
    pub start: Point,
    pub segs: Vec<Seg>,
}

impl FracPath {
    pub fn point(p: Point) -> FracPath {
        FracPath { start: p, segs: vec![] }
    }

    pub fn tightened(start: Point, segs: impl IntoIterator<Item = Seg>) -> FracPath {
        FracPath { start, segs: tighten_segs(segs) }
    }

    pub fn end(&self, g: &MarkedGraph) -> Point {
        match self.segs.last() {
            Some(Seg::E { oe, b, .. }) => Point::on(g, *oe, b.clone()),
            Some(Seg::M(m)) => Point::At(m.v),
            None => self.start.clone(),
        }
    }

    pub fn length(&self, g: &MarkedGraph) -> Scalar {
        self.segs.iter().map(|s| s.length(g)).sum()
    }

    pub fn reverse(&self, g: &MarkedGraph) -> FracPath {
        FracPath { start: self.end(g), segs: self.segs.iter().rev().map(Seg::inverse).collect() }
    }

    pub fn then(&self, other: &FracPath) -> FracPath {
        FracPath::tightened(self.start.clone(), self.segs.iter().chain(&other.segs).cloned())
    }

    pub fn is_degenerate(&self) -> bool {
        !self.segs.iter().any(|s| matches!(s, Seg::E { .. }))
    }

    /// Check the segments chain up geometrically.
    pub fn check(&self, g: &MarkedGraph) -> Result<()> {
        let mut at = self.start.clone();
        for s in &self.segs {
            match s {
                Seg::M(m) => {
                    if at != Point::At(m.v) || !g.is_nonfree(m.v) {
                        return Err(Error::IncompatibleLetters(format!(
                            "marker at {} does not sit at {}",
                            g.vertices[m.v].id,
                            at.print(g)
                        )));
                    }
                }
                Seg::E { oe, a, b } => {
                    let here = Point::on(g, *oe, a.clone());
                    if here != at || a >= b || a.is_negative() || *b > Scalar::one() {
                        return Err(Error::IncompatibleLetters(format!(
                            "segment on {} does not continue from {}",
                            g.oedge_name(*oe),
                            at.print(g)
                        )));
                    }
                    at = Point::on(g, *oe, b.clone());
                }
            }
        }
        Ok(())
    }

    /// Leading markers and first oriented edge; `None` for degenerate paths.
    pub fn direction(&self) -> Option<Dir> {
        let mut markers = vec![];
        for s in &self.segs {
            match s {
                Seg::M(m) => markers.push(*m),
                Seg::E { oe, .. } => return Some(Dir { markers, oe: *oe }),
            }
        }
        None
    }

    /// Subpath between length fractions `from <= to` of this path. Markers sitting at
    /// a cut belong to the later piece; those at the very end belong to a piece ending there.
    pub fn sub(&self, g: &MarkedGraph, from: &Scalar, to: &Scalar) -> FracPath {
        let total = self.length(g);
        let one = Scalar::one();
        let (lo, hi) = (from * &total, to * &total);
        let mut acc = Scalar::zero();
        let mut segs = vec![];
        let mut start = None;
        let full_end = *to == one;
        for s in &self.segs {
            match s {
                Seg::M(m) => {
                    if acc >= lo && (acc < hi || full_end) {
                        if start.is_none() {
                            start = Some(Point::At(m.v));
                        }
                        segs.push(Seg::M(*m));
                    }
                }
                Seg::E { oe, a, b } => {
                    let len = g.len(oe.e);
                    let sl = s.length(g);
                    let (s0, s1) = (acc.clone(), &acc + &sl);
                    if s1 > lo && s0 < hi && sl.is_positive() {
                        let cut_a = if lo > s0 { a + &((&lo - &s0) / len) } else { a.clone() };
                        let cut_b = if hi < s1 { a + &((&hi - &s0) / len) } else { b.clone() };
                        if start.is_none() {
                            start = Some(Point::on(g, *oe, cut_a.clone()));
                        }
                        segs.push(Seg::E { oe: *oe, a: cut_a, b: cut_b });
                    } else if start.is_none() && s0 <= lo && lo <= s1 && lo == hi {
                        let pos = if sl.is_positive() { a + &((&lo - &s0) / len) } else { a.clone() };
                        start = Some(Point::on(g, *oe, pos));
                    }
                    acc = s1;
                }
            }
        }
        let start = start.unwrap_or_else(|| if lo.is_zero() || total.is_zero() { self.start.clone() } else { self.end(g) });
        FracPath { start, segs }
    }

    /// Point at length fraction `t` and the direction leaving it along the path.
    pub fn at_fraction(&self, g: &MarkedGraph, t: &Scalar) -> (Point, Option<Dir>) {
        let rest = self.sub(g, t, &Scalar::one());
        let dir = if *t == Scalar::one() { None } else { rest.direction() };
        (rest.start.clone(), dir)
    }

    /// Combinatorial letters, valid when every segment is a full edge.
    pub fn letters(&self) -> Option<Vec<Letter>> {
        self.segs
            .iter()
            .map(|s| match s {
                Seg::M(m) => Some(Letter::M(*m)),
                Seg::E { oe, .. } if s.is_full() => Some(Letter::E(*oe)),
                Seg::E { .. } => None,
            })
            .collect()
    }

    pub fn edges_touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.segs.iter().filter_map(|s| match s {
            Seg::E { oe, .. } => Some(oe.e),
            Seg::M(_) => None,
        })
    }

    pub fn print(&self, g: &MarkedGraph) -> String {
        if self.segs.is_empty() {
            return ".".into();
        }
        let mut toks = vec![];
        for s in &self.segs {
            toks.push(match s {
                Seg::M(m) => crate::loops::letter_name(g, Letter::M(*m)),
                Seg::E { oe, a, b } => {
                    let name = g.oedge_name(*oe);
                    match (a.is_zero(), *b == Scalar::one()) {
                        (true, true) => name,
                        (false, true) => format!("{name}[{}..]", a.exact_string()),
                        (true, false) => format!("{name}[..{}]", b.exact_string()),
                        (false, false) => format!("{name}[{}..{}]", a.exact_string(), b.exact_string()),
                    }
                }
            });
        }
        toks.join(" ")
    }
}

/// Germ of a path: markers passed at the start point, then the oriented edge entered.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dir {
    pub markers: Vec<Marker>,
    pub oe: OEdge,
}

/// Tight path from `base_of(start)` to `base_of(end)` as combinatorial letters.
pub fn tethered_letters(g: &MarkedGraph, p: &FracPath) -> Vec<Letter> {
    let end = p.end(g);
    let mut segs: Vec<Seg> = p.start.tether().into_iter().collect();
    segs.extend(p.segs.iter().cloned());
    if let Some(t) = end.tether() {
        segs.push(t.inverse());
    }
    let tight = tighten_segs(segs);
    tight
        .iter()
        .map(|s| match s {
            Seg::M(m) => Letter::M(*m),
            Seg::E { oe, .. } => Letter::E(*oe),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_core::VertexKind;

    fn circle_and_arc() -> MarkedGraph {
        let mut g = MarkedGraph::new("g");
        let v = g.add_vertex("v", VertexKind::Free);
        let w = g.add_vertex("w", VertexKind::Free);
        g.add_edge("c", v, v, Scalar::int(2));
        g.add_edge("p", v, w, Scalar::int(1));
        g
    }

    fn e(oe: OEdge, a: (i64, i64), b: (i64, i64)) -> Seg {
        Seg::E { oe, a: Scalar::ratio(a.0, a.1), b: Scalar::ratio(b.0, b.1) }
    }

    #[test]
    fn backtracks_cancel_partially_and_fully() {
        let p = OEdge::fwd(1);
        let st = tighten_segs([e(p, (0, 1), (1, 1)), e(p.inv(), (0, 1), (1, 4))]);
        assert_eq!(st, vec![e(p, (0, 1), (3, 4))]);
        let st = tighten_segs([e(p, (1, 2), (1, 1)), e(p.inv(), (0, 1), (1, 2))]);
        assert!(st.is_empty());
        // overshoot past the start of a partial first segment
        let st = tighten_segs([e(p, (1, 2), (1, 1)), e(p.inv(), (0, 1), (3, 4))]);
        assert_eq!(st, vec![e(p.inv(), (1, 2), (3, 4))]);
    }

    #[test]
    fn loop_edge_twice_does_not_merge() {
        let c = OEdge::fwd(0);
        let st = tighten_segs([Seg::full(c), Seg::full(c)]);
        assert_eq!(st.len(), 2);
        let st = tighten_segs([e(c, (0, 1), (1, 2)), e(c, (1, 2), (1, 1))]);
        assert_eq!(st, vec![Seg::full(c)]);
        let st = tighten_segs([Seg::full(c), Seg::full(c.inv())]);
        assert!(st.is_empty());
    }

    #[test]
    fn subpaths_and_tethers() {
        let g = circle_and_arc();
        let path = FracPath { start: Point::At(0), segs: vec![Seg::full(OEdge::fwd(0)), Seg::full(OEdge::fwd(1))] };
        assert_eq!(path.length(&g), Scalar::int(3));
        let s = path.sub(&g, &Scalar::ratio(1, 3), &Scalar::ratio(5, 6));
        assert_eq!(s.print(&g), "c[1/2..] p[..1/2]");
        assert_eq!(s.start, Point::In(0, Scalar::ratio(1, 2)));
        assert_eq!(s.end(&g), Point::In(1, Scalar::ratio(1, 2)));
        assert_eq!(tethered_letters(&g, &s), vec![Letter::E(OEdge::fwd(0))]);
        let (pt, dir) = path.at_fraction(&g, &Scalar::ratio(2, 3));
        assert_eq!(pt, Point::At(0));
        assert_eq!(dir.unwrap().oe, OEdge::fwd(1));
        let r = s.reverse(&g);
        assert_eq!(r.print(&g), "p'[1/2..] c'[..1/2]");
        r.check(&g).unwrap();
    }
}
