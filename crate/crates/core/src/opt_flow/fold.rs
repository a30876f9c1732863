//! Simple folds and removal of redundant vertices.

use crate::displacement::lambda;
use crate::error::{Error, Result};
use crate::graph_core::{MarkedGraph, OEdge, VertexKind};
use crate::loops::Marker;
use crate::scalar::Scalar;
use crate::straight_maps::{gates, FracPath, Point, Seg, StraightMap};

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub v: usize,
    pub a: OEdge,
    pub b: OEdge,
    pub through_marker: bool,
}

#[derive(Clone, Debug)]
pub struct FoldRecord {
    pub turn: Turn,
    /// Length of the identified segment in the new graph.
    pub delta: Scalar,
    /// Length of the shared image of the identified segments.
    pub image_prefix: Scalar,
    pub source: StraightMap,
    pub target: StraightMap,
    pub new_edge: Option<usize>,
    pub new_vertex: Option<usize>,
}

/// Old edge fraction `[x0, x1]` goes linearly onto fraction `[y0, y1]` of the new `oe`.
#[derive(Clone, Debug)]
struct Piece {
    x0: Scalar,
    x1: Scalar,
    oe: OEdge,
    y0: Scalar,
    y1: Scalar,
}

/// A map from `src` to `dst` that is linear on pieces of old edges.
struct Reglue {
    dst: MarkedGraph,
    pieces: Vec<Vec<Piece>>,
    vpt: Vec<Point>,
}

impl Reglue {
    fn point(&self, p: &Point) -> Point {
        match p {
            Point::At(v) => self.vpt[*v].clone(),
            Point::In(e, t) => {
                let pc = self.pieces[*e].iter().find(|pc| pc.x0 <= *t && *t <= pc.x1).expect("pieces cover the edge");
                let y = &pc.y0 + &((t - &pc.x0) / (&pc.x1 - &pc.x0) * (&pc.y1 - &pc.y0));
                Point::on(&self.dst, pc.oe, y)
            }
        }
    }

    fn seg(&self, s: &Seg, out: &mut Vec<Seg>) {
        match s {
            Seg::M(m) => {
                let v = self.vpt[m.v].vertex().expect("non-free vertices survive");
                out.push(Seg::M(Marker { v, ..*m }));
            }
            Seg::E { oe, a, b } => {
                let one = Scalar::one();
                let (lo, hi) = if oe.rev { (&one - b, &one - a) } else { (a.clone(), b.clone()) };
                let mut part = vec![];
                for pc in &self.pieces[oe.e] {
                    let u0 = lo.clone().max(pc.x0.clone());
                    let u1 = hi.clone().min(pc.x1.clone());
                    if u0 < u1 {
                        let w = &pc.x1 - &pc.x0;
                        let dy = &pc.y1 - &pc.y0;
                        let ya = &pc.y0 + &((&u0 - &pc.x0) / &w * &dy);
                        let yb = &pc.y0 + &((&u1 - &pc.x0) / &w * &dy);
                        part.push(Seg::E { oe: pc.oe, a: ya, b: yb });
                    }
                }
                if oe.rev {
                    out.extend(part.iter().rev().map(Seg::inverse));
                } else {
                    out.extend(part);
                }
            }
        }
    }

    fn path(&self, p: &FracPath) -> FracPath {
        let mut segs = vec![];
        for s in &p.segs {
            self.seg(s, &mut segs);
        }
        FracPath::tightened(self.point(&p.start), segs)
    }

    fn whole(oe: OEdge) -> Vec<Piece> {
        vec![Piece { x0: Scalar::zero(), x1: Scalar::one(), oe, y0: Scalar::zero(), y1: Scalar::one() }]
    }
}

/// Common prefix length of two paths leaving the same point.
fn common_prefix(g: &MarkedGraph, p: &FracPath, q: &FracPath) -> Scalar {
    let mut c = Scalar::zero();
    for (s, t) in p.segs.iter().zip(&q.segs) {
        match (s, t) {
            (Seg::M(m), Seg::M(n)) if m == n => {}
            (Seg::E { oe, a, b }, Seg::E { oe: oe2, a: a2, b: b2 }) if oe == oe2 && a == a2 => {
                let hi = b.clone().min(b2.clone());
                c = c + (&hi - a) * g.len(oe.e);
                if b != b2 {
                    break;
                }
            }
            _ => break,
        }
    }
    c
}

/// Identifies initial segments of the two germs of an illegal turn. `delta` is the length of
/// the identified segment in the new graph; `None` picks half the largest unchanged amount.
pub fn simple_fold(f: &StraightMap, turn: &Turn, delta: Option<Scalar>) -> Result<FoldRecord> {
    let g = &f.g;
    let v = turn.v;
    if g.is_nonfree(v) || turn.through_marker {
        return Err(Error::IllegalFoldAtNonFree(g.vertices[v].id.clone()));
    }
    let (mut a, mut b) = (turn.a, turn.b);
    if a == b || g.origin(a) != v || g.origin(b) != v {
        return Err(Error::Invalid("a turn needs two distinct germs at its vertex".into()));
    }
    let gs = gates(f);
    if gs.of(a) != gs.of(b) {
        return Err(Error::Invalid(format!("turn ({}, {}) is legal", g.oedge_name(a), g.oedge_name(b))));
    }
    if a.e == b.e && a.rev {
        std::mem::swap(&mut a, &mut b);
    }
    let (pa, pb) = (f.image(a), f.image(b));
    let (la, lb) = (g.len(a.e).clone(), g.len(b.e).clone());
    let (sa, sb) = (pa.length(g) / &la, pb.length(g) / &lb);
    let smax = sa.clone().max(sb.clone());
    let c = common_prefix(g, &pa, &pb);
    let room = if a.e == b.e { la.clone() / Scalar::int(4) } else { la.clone().min(lb.clone()).half() };
    let delta = match delta {
        Some(d) => d,
        None => (c.clone() / (&smax * &Scalar::int(2))).min(room.clone()),
    };
    let t = &smax * &delta;
    let (da, db) = (&t / &sa, &t / &sb);
    let fits = if a.e == b.e { &da + &db < la } else { da < la && db < lb };
    if delta.is_negative() || t > c || !fits {
        return Err(Error::DeltaTooLarge(format!("{} exceeds the foldable amount", delta.decimal())));
    }
    if delta.is_zero() {
        return Ok(FoldRecord {
            turn: turn.clone(),
            delta,
            image_prefix: t,
            source: f.clone(),
            target: f.clone(),
            new_edge: None,
            new_vertex: None,
        });
    }
    let mut dst = MarkedGraph::new(&g.name);
    for x in &g.vertices {
        dst.add_vertex(&x.id, x.kind.clone());
    }
    let mut pid = format!("{}_{}", g.vertices[v].id, g.edges.len());
    while dst.vertex_index(&pid).is_some() {
        pid.push('_');
    }
    let p = dst.add_vertex(&pid, VertexKind::Free);
    let mut sid = format!("{}_{}", g.edges[a.e].id, g.edges[b.e].id);
    while g.edge_index(&sid).is_some() {
        sid.push('_');
    }
    let one = Scalar::one();
    let mut pieces: Vec<Vec<Piece>> = vec![];
    let s = g.edges.len();
    for (e, x) in g.edges.iter().enumerate() {
        let [o, w] = x.ends;
        if a.e == b.e && e == a.e {
            // loop at v: both ends fold onto s, the middle becomes a loop at p
            let rest = &la - &da - &db;
            dst.add_edge(&x.id, p, p, rest);
            pieces.push(vec![
                Piece { x0: Scalar::zero(), x1: &da / &la, oe: OEdge::fwd(s), y0: Scalar::zero(), y1: one.clone() },
                Piece { x0: &da / &la, x1: &one - &(&db / &la), oe: OEdge::fwd(e), y0: Scalar::zero(), y1: one.clone() },
                Piece { x0: &one - &(&db / &la), x1: one.clone(), oe: OEdge::bwd(s), y0: Scalar::zero(), y1: one.clone() },
            ]);
        } else if e == a.e || e == b.e {
            let (germ, d, len) = if e == a.e { (a, &da, &la) } else { (b, &db, &lb) };
            let far = g.terminus(germ);
            dst.add_edge(&x.id, p, far, len - d);
            let cut = d / len;
            pieces.push(if germ.rev {
                vec![
                    Piece { x0: Scalar::zero(), x1: &one - &cut, oe: OEdge::bwd(e), y0: Scalar::zero(), y1: one.clone() },
                    Piece { x0: &one - &cut, x1: one.clone(), oe: OEdge::bwd(s), y0: Scalar::zero(), y1: one.clone() },
                ]
            } else {
                vec![
                    Piece { x0: Scalar::zero(), x1: cut.clone(), oe: OEdge::fwd(s), y0: Scalar::zero(), y1: one.clone() },
                    Piece { x0: cut, x1: one.clone(), oe: OEdge::fwd(e), y0: Scalar::zero(), y1: one.clone() },
                ]
            });
        } else {
            dst.add_edge(&x.id, o, w, x.len.clone());
            pieces.push(Reglue::whole(OEdge::fwd(e)));
        }
        dst.edges[e].len_src = None;
    }
    dst.add_edge(&sid, v, p, delta.clone());
    let vpt = (0..g.vertices.len()).map(Point::At).collect();
    let rg = Reglue { dst, pieces, vpt };
    let ta = &t / &pa.length(g);
    let mut vimg: Vec<Point> = f.vimg.iter().map(|q| rg.point(q)).collect();
    let head = pa.sub(g, &Scalar::zero(), &ta);
    vimg.push(rg.point(&head.end(g)));
    let mut eimg: Vec<FracPath> = vec![];
    for e in 0..g.edges.len() {
        let img = if a.e == b.e && e == a.e {
            pa.sub(g, &ta, &(&one - &ta))
        } else if e == a.e {
            pa.sub(g, &ta, &one)
        } else if e == b.e {
            let tb = &t / &pb.length(g);
            pb.sub(g, &tb, &one)
        } else {
            f.eimg[e].clone()
        };
        eimg.push(rg.path(&img));
    }
    eimg.push(rg.path(&head));
    // tightening at the new vertex can leave images starting elsewhere; re-anchor them
    for (e, img) in eimg.iter_mut().enumerate() {
        let o = rg.dst.edges[e].ends[0];
        if img.start != vimg[o] {
            img.start = vimg[o].clone();
        }
    }
    let mut target = StraightMap::new(&f.name, rg.dst, vimg, eimg)?;
    target.transport = f.transport.clone();
    Ok(FoldRecord {
        turn: turn.clone(),
        delta,
        image_prefix: t,
        source: f.clone(),
        target,
        new_edge: Some(s),
        new_vertex: Some(p),
    })
}

/// Merges the two edges at each free vertex of valence two.
pub fn normalize(f: &StraightMap) -> StraightMap {
    let mut cur = f.clone();
    while let Some(v) = redundant_vertex(&cur.g) {
        cur = merge_at(&cur, v);
    }
    cur
}

fn redundant_vertex(g: &MarkedGraph) -> Option<usize> {
    (0..g.vertices.len()).find(|&v| {
        let germs = g.germs(v);
        !g.is_nonfree(v) && germs.len() == 2 && germs[0].e != germs[1].e
    })
}

fn merge_at(f: &StraightMap, v: usize) -> StraightMap {
    let g = &f.g;
    let germs = g.germs(v);
    let (g1, g2) = (germs[0], germs[1]);
    let (l1, l2) = (g.len(g1.e).clone(), g.len(g2.e).clone());
    let total = &l1 + &l2;
    let far1 = g.terminus(g1);
    let far2 = g.terminus(g2);
    let mut dst = MarkedGraph::new(&g.name);
    let mut vmap = vec![None; g.vertices.len()];
    for (i, x) in g.vertices.iter().enumerate() {
        if i != v {
            vmap[i] = Some(dst.add_vertex(&x.id, x.kind.clone()));
        }
    }
    let mut emap = vec![None; g.edges.len()];
    for (i, x) in g.edges.iter().enumerate() {
        if i != g1.e && i != g2.e {
            let e = dst.add_edge(&x.id, vmap[x.ends[0]].unwrap(), vmap[x.ends[1]].unwrap(), x.len.clone());
            emap[i] = Some(e);
        }
    }
    for &c in &g.collapsed {
        if let Some(e) = emap[c] {
            dst.collapsed.insert(e);
        }
    }
    let id = format!("{}{}", g.edges[g1.e].id, g.edges[g2.e].id);
    let n = dst.add_edge(&id, vmap[far1].unwrap(), vmap[far2].unwrap(), total.clone());
    let one = Scalar::one();
    let split = &l1 / &total;
    let mut pieces: Vec<Vec<Piece>> = vec![];
    for i in 0..g.edges.len() {
        pieces.push(if i == g1.e {
            // forward g1 runs v -> far1, i.e. backwards along the new edge
            if g1.rev {
                vec![Piece { x0: Scalar::zero(), x1: one.clone(), oe: OEdge::fwd(n), y0: Scalar::zero(), y1: split.clone() }]
            } else {
                vec![Piece { x0: Scalar::zero(), x1: one.clone(), oe: OEdge::bwd(n), y0: &one - &split, y1: one.clone() }]
            }
        } else if i == g2.e {
            if g2.rev {
                vec![Piece { x0: Scalar::zero(), x1: one.clone(), oe: OEdge::bwd(n), y0: Scalar::zero(), y1: &one - &split }]
            } else {
                vec![Piece { x0: Scalar::zero(), x1: one.clone(), oe: OEdge::fwd(n), y0: split.clone(), y1: one.clone() }]
            }
        } else {
            Reglue::whole(OEdge::fwd(emap[i].unwrap()))
        });
    }
    let vpt: Vec<Point> = (0..g.vertices.len())
        .map(|i| match vmap[i] {
            Some(w) => Point::At(w),
            None => Point::In(n, split.clone()),
        })
        .collect();
    let rg = Reglue { dst, pieces, vpt };
    let mut vimg = vec![Point::At(0); rg.dst.vertices.len()];
    for i in 0..g.vertices.len() {
        if let Some(w) = vmap[i] {
            vimg[w] = rg.point(&f.vimg[i]);
        }
    }
    let mut eimg = vec![FracPath::point(Point::At(0)); rg.dst.edges.len()];
    for i in 0..g.edges.len() {
        if let Some(e) = emap[i] {
            eimg[e] = rg.path(&f.eimg[i]);
        }
    }
    let joined = f.image(g1).reverse(g).then(&f.image(g2));
    eimg[n] = rg.path(&joined);
    let mut out = StraightMap::new(&f.name, rg.dst, vimg, eimg).expect("merging keeps the map consistent");
    out.transport = f.transport.clone();
    out
}

/// Displacement before and after a fold, for reporting.
pub fn fold_lambdas(rec: &FoldRecord) -> (f64, f64) {
    (lambda(&rec.source).to_f64(), lambda(&rec.target).to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn turn_ab(f: &StraightMap) -> Turn {
        let v = f.g.vertex_index("v").unwrap();
        Turn { v, a: OEdge::fwd(0), b: OEdge::fwd(1), through_marker: false }
    }

    #[test]
    fn fold_phifib_turn() {
        let f = fixtures::phifib();
        let rec = simple_fold(&f, &turn_ab(&f), Some(Scalar::ratio(1, 10))).unwrap();
        let h = &rec.target;
        let p = rec.new_vertex.unwrap();
        assert_eq!(h.g.valence(p), 3);
        assert_eq!(h.g.edges.len(), 3);
        let (before, after) = fold_lambdas(&rec);
        assert!(after <= before + 1e-12, "{before} -> {after}");
    }

    #[test]
    fn zero_fold_is_identity() {
        let f = fixtures::phifib();
        let rec = simple_fold(&f, &turn_ab(&f), Some(Scalar::zero())).unwrap();
        assert_eq!(rec.target, f);
    }

    #[test]
    fn fold_errors() {
        let f = fixtures::phifib();
        let legal = Turn { v: 0, a: OEdge::bwd(0), b: OEdge::bwd(1), through_marker: false };
        assert!(matches!(simple_fold(&f, &legal, None), Err(Error::Invalid(_))));
        assert!(matches!(simple_fold(&f, &turn_ab(&f), Some(Scalar::int(5))), Err(Error::DeltaTooLarge(_))));
        let marked = Turn { through_marker: true, ..turn_ab(&f) };
        assert!(matches!(simple_fold(&f, &marked, None), Err(Error::IllegalFoldAtNonFree(_))));
    }

    #[test]
    fn normalize_merges_subdivisions() {
        let f = fixtures::phifib();
        let rec = simple_fold(&f, &turn_ab(&f), None).unwrap();
        let n = normalize(&rec.target);
        assert!(n.g.vertices.iter().enumerate().all(|(v, _)| n.g.valence(v) != 2));
        assert!((lambda(&n).to_f64() - lambda(&rec.target).to_f64()).abs() < 1e-12);
    }
}
