//! Gate structures, legality and the optimality predicates.

use super::{Dir, FracPath, Point, Seg, StraightMap};
use crate::error::{Error, Result};
use crate::graph_core::{core, Dsu, MarkedGraph, OEdge, Subgraph};
use crate::loops::{Candidate, Letter, Marker};
use crate::scalar::Scalar;
use std::collections::{BTreeMap, BTreeSet};

/// Partition of the germs at every vertex; gate ids are global.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateStructure {
    pub gate: BTreeMap<OEdge, usize>,
}

impl GateStructure {
    fn from_dsu(g: &MarkedGraph, dsu: &mut Dsu) -> GateStructure {
        let germs = g.all_germs();
        let mut ids = BTreeMap::new();
        let mut gate = BTreeMap::new();
        for (i, &x) in germs.iter().enumerate() {
            let r = dsu.find(i);
            let n = ids.len();
            let id = *ids.entry(r).or_insert(n);
            gate.insert(x, id);
        }
        GateStructure { gate }
    }

    pub fn of(&self, x: OEdge) -> usize {
        self.gate[&x]
    }

    /// Gates at `v` as lists of germs, restricted to germs whose edge lies in `within`.
    pub fn at(&self, g: &MarkedGraph, v: usize, within: Option<&BTreeSet<usize>>) -> Vec<Vec<OEdge>> {
        let mut by: BTreeMap<usize, Vec<OEdge>> = BTreeMap::new();
        for x in g.germs(v) {
            if within.is_none_or(|w| w.contains(&x.e)) {
                by.entry(self.of(x)).or_default().push(x);
            }
        }
        by.into_values().collect()
    }

    pub fn refines(&self, coarser: &GateStructure) -> bool {
        let mut img = BTreeMap::new();
        self.gate.iter().all(|(x, &i)| *img.entry(i).or_insert(coarser.gate[x]) == coarser.gate[x])
    }

    pub fn print(&self, g: &MarkedGraph) -> String {
        let mut parts = vec![];
        for v in 0..g.vertices.len() {
            let gs: Vec<String> = self
                .at(g, v, None)
                .iter()
                .map(|gate| format!("{{{}}}", gate.iter().map(|&x| g.oedge_name(x)).collect::<Vec<_>>().join(",")))
                .collect();
            parts.push(format!("{}: {}", g.vertices[v].id, gs.join(" ")));
        }
        parts.join("; ")
    }
}

fn partition_by_key<K: PartialEq>(g: &MarkedGraph, keys: &[Option<K>]) -> Dsu {
    let germs = g.all_germs();
    let mut dsu = Dsu::new(germs.len());
    union_by_key(g, keys, &mut dsu);
    dsu
}

fn union_by_key<K: PartialEq>(g: &MarkedGraph, keys: &[Option<K>], dsu: &mut Dsu) -> bool {
    let germs = g.all_germs();
    let mut changed = false;
    for i in 0..germs.len() {
        for j in i + 1..germs.len() {
            if g.origin(germs[i]) != g.origin(germs[j]) {
                continue;
            }
            if let (Some(a), Some(b)) = (&keys[i], &keys[j]) {
                if a == b && dsu.find(i) != dsu.find(j) {
                    dsu.union(i, j);
                    changed = true;
                }
            }
        }
    }
    changed
}

/// Gates of `f`: germs sharing the initial direction of their nondegenerate images.
pub fn gates(f: &StraightMap) -> GateStructure {
    let keys: Vec<Option<Dir>> = f.g.all_germs().into_iter().map(|x| f.image(x).direction()).collect();
    GateStructure::from_dsu(&f.g, &mut partition_by_key(&f.g, &keys))
}

fn reduce_markers(ms: impl IntoIterator<Item = Marker>) -> Vec<Marker> {
    let mut st: Vec<Marker> = vec![];
    for m in ms {
        if st.last() == Some(&m.inverse()) {
            st.pop();
        } else {
            st.push(m);
        }
    }
    st
}

/// Image of a direction `d` leaving the point `p`.
pub(crate) fn push_direction(f: &StraightMap, p: &Point, d: &Dir) -> Option<(Point, Dir)> {
    let g = &f.g;
    let img = f.image(d.oe);
    if img.is_degenerate() {
        return None;
    }
    let pos = p.pos_on(g, d.oe).expect("direction leaves its point");
    let (pt, dir) = img.at_fraction(g, &pos);
    let dir = dir?;
    let markers = reduce_markers(d.markers.iter().map(|&m| f.transport_marker(m)).chain(dir.markers));
    Some((pt, Dir { markers, oe: dir.oe }))
}

/// Join of the gate structures of `f, f^2, ..., f^kmax`.
pub fn gate_closure(f: &StraightMap, kmax: Option<usize>) -> Result<GateStructure> {
    let g = &f.g;
    let germs = g.all_germs();
    let kmax = kmax.unwrap_or(germs.len()).max(1);
    let mut states: Vec<Option<(Point, Dir)>> =
        germs.iter().map(|&x| Some((Point::At(g.origin(x)), Dir { markers: vec![], oe: x }))).collect();
    let mut dsu = Dsu::new(germs.len());
    let mut changed_last = false;
    for _ in 0..kmax {
        states = states
            .iter()
            .map(|s| s.as_ref().and_then(|(p, d)| push_direction(f, p, d)))
            .collect();
        changed_last = union_by_key(g, &states, &mut dsu);
    }
    if changed_last && kmax > 1 {
        return Err(Error::NotStabilized(kmax));
    }
    Ok(GateStructure::from_dsu(g, &mut dsu))
}

pub fn is_legal_turn(gs: &GateStructure, a: OEdge, b: OEdge, through_marker: bool) -> bool {
    through_marker || gs.of(a) != gs.of(b)
}

fn legal_sequence(gs: &GateStructure, letters: &[Letter], cyclic: bool) -> bool {
    let n = letters.len();
    let edges: Vec<usize> = (0..n).filter(|&i| matches!(letters[i], Letter::E(_))).collect();
    if edges.is_empty() {
        return true;
    }
    let pairs = if cyclic { edges.len() } else { edges.len() - 1 };
    for k in 0..pairs {
        let i = edges[k];
        let j = edges[(k + 1) % edges.len()];
        let through = if j > i { (i + 1..j).any(|t| matches!(letters[t], Letter::M(_))) } else { (i + 1..n).chain(0..j).any(|t| matches!(letters[t], Letter::M(_))) };
        let (Letter::E(x), Letter::E(y)) = (letters[i], letters[j]) else { unreachable!() };
        if !is_legal_turn(gs, x.inv(), y, through) {
            return false;
        }
    }
    true
}

pub fn is_legal_loop(gs: &GateStructure, letters: &[Letter]) -> bool {
    legal_sequence(gs, letters, true)
}

/// Every turn at a vertex between consecutive segments is legal.
pub fn is_legal_path(gs: &GateStructure, p: &FracPath) -> bool {
    let mut prev: Option<OEdge> = None;
    let mut through = false;
    for s in &p.segs {
        match s {
            Seg::M(_) => through = true,
            Seg::E { oe, .. } => {
                if let Some(x) = prev {
                    if !is_legal_turn(gs, x.inv(), *oe, through) {
                        return false;
                    }
                }
                prev = Some(*oe);
                through = false;
            }
        }
    }
    true
}

pub fn is_optimal(f: &StraightMap) -> bool {
    let t = f.tension_graph();
    let gs = gates(f);
    t.vertices(&f.g)
        .into_iter()
        .all(|v| f.g.is_nonfree(v) || gs.at(&f.g, v, Some(&t.edges)).len() >= 2)
}

/// Candidates inside the tension graph that are legal for the gates of `f`.
pub fn legal_max_candidates<'a>(f: &StraightMap, cands: &'a [Candidate]) -> Vec<&'a Candidate> {
    let t = f.tension_graph();
    let gs = gates(f);
    cands
        .iter()
        .filter(|c| c.loop_.support().is_subset(&t.edges) && is_legal_loop(&gs, &c.loop_.letters))
        .collect()
}

pub fn is_weakly_optimal(f: &StraightMap, cands: &[Candidate]) -> bool {
    !legal_max_candidates(f, cands).is_empty()
}

pub fn is_minimal_optimal(f: &StraightMap, cands: &[Candidate]) -> bool {
    if !is_optimal(f) {
        return false;
    }
    let lip = f.lip();
    let table = f.comb_table();
    let mut covered = BTreeSet::new();
    for c in legal_max_candidates(f, cands) {
        if f.loop_ratio(&table, &c.loop_) == lip {
            covered.extend(c.loop_.support());
        }
    }
    f.tension_graph().edges.is_subset(&covered)
}

/// Largest subgraph of `within` whose edges map into it, cored.
pub fn invariant_subgraph(f: &StraightMap, within: &Subgraph) -> Subgraph {
    let g = &f.g;
    let mut a = within.clone();
    loop {
        let vs = a.vertices(g);
        let inside = |p: &Point| match p {
            Point::At(w) => vs.contains(w),
            Point::In(e, _) => a.edges.contains(e),
        };
        let keep: BTreeSet<usize> = a
            .edges
            .iter()
            .copied()
            .filter(|&e| {
                let [o, t] = g.edges[e].ends;
                f.eimg[e].edges_touched().all(|x| a.edges.contains(&x)) && inside(&f.vimg[o]) && inside(&f.vimg[t])
            })
            .collect();
        let mut next = Subgraph { edges: keep, isolated: a.isolated.clone() };
        next.isolated.retain(|&v| inside(&f.vimg[v]));
        let next = core(g, &next);
        if next == a {
            return a;
        }
        a = next;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PttReport {
    pub a: Subgraph,
    pub gates: GateStructure,
    pub one_step: bool,
    pub lambda: Scalar,
}

#[derive(PartialEq)]
enum Target {
    Gate(usize),
    Dir(OEdge),
}

fn train_track_on(f: &StraightMap, a: &Subgraph, gs: &GateStructure) -> bool {
    let g = &f.g;
    for v in a.vertices(g) {
        let vg = gs.at(g, v, Some(&a.edges));
        if !g.is_nonfree(v) && vg.len() < 2 {
            return false;
        }
        let mut seen: Vec<(Vec<Marker>, Target)> = vec![];
        for gate in &vg {
            let Some(d) = f.image(gate[0]).direction() else { return false };
            let key = match f.vimg[v] {
                Point::At(_) => Target::Gate(gs.of(d.oe)),
                Point::In(..) => Target::Dir(d.oe),
            };
            let key = (d.markers, key);
            if seen.contains(&key) {
                return false;
            }
            seen.push(key);
        }
    }
    a.edges.iter().all(|&e| {
        let p = &f.eimg[e];
        !p.is_degenerate() && is_legal_path(gs, p)
    })
}

/// A nontrivial invariant subgraph of the tension graph on which `f` is a train track
/// for the closure gates, if there is one.
pub fn is_partial_train_track(f: &StraightMap) -> Result<Option<PttReport>> {
    let t = f.tension_graph();
    let a = invariant_subgraph(f, &t);
    if !a.is_nontrivial(&f.g) {
        return Ok(None);
    }
    let closure = gate_closure(f, None)?;
    if !train_track_on(f, &a, &closure) {
        return Ok(None);
    }
    let one_step = train_track_on(f, &a, &gates(f));
    Ok(Some(PttReport { a, gates: closure, one_step, lambda: f.lip() }))
}
