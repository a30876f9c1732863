//! Tight paths and loops under the opaque-marker model, candidates and the brute-force oracle.

use crate::error::{Error, Result};
use crate::graph_core::{MarkedGraph, OEdge};
use crate::scalar::Scalar;
use std::collections::BTreeSet;

/// Opaque nontrivial vertex-group element at a non-free vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marker {
    pub v: usize,
    pub idx: u32,
    pub inv: bool,
}

impl Marker {
    pub fn inverse(self) -> Marker {
        Marker { inv: !self.inv, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    E(OEdge),
    M(Marker),
}

impl Letter {
    pub fn inverse(self) -> Letter {
        match self {
            Letter::E(o) => Letter::E(o.inv()),
            Letter::M(m) => Letter::M(m.inverse()),
        }
    }

    pub fn edge(self) -> Option<OEdge> {
        match self {
            Letter::E(o) => Some(o),
            Letter::M(_) => None,
        }
    }

    fn ends(self, g: &MarkedGraph) -> (usize, usize) {
        match self {
            Letter::E(o) => (g.origin(o), g.terminus(o)),
            Letter::M(m) => (m.v, m.v),
        }
    }
}

/// Marker of the generic element used by loop enumeration.
pub fn generic_marker(v: usize) -> Letter {
    Letter::M(Marker { v, idx: 0, inv: false })
}

pub fn inverse_word(w: &[Letter]) -> Vec<Letter> {
    w.iter().rev().map(|l| l.inverse()).collect()
}

fn check_chain(g: &MarkedGraph, w: &[Letter]) -> Result<()> {
    for pair in w.windows(2) {
        let (_, t) = pair[0].ends(g);
        let (o, _) = pair[1].ends(g);
        if t != o {
            return Err(Error::IncompatibleLetters(format!(
                "{} then {}",
                letter_name(g, pair[0]),
                letter_name(g, pair[1])
            )));
        }
    }
    for l in w {
        if let Letter::M(m) = l {
            if m.v >= g.vertices.len() || !g.is_nonfree(m.v) {
                return Err(Error::IncompatibleLetters(format!("marker at free vertex {}", m.v)));
            }
        }
    }
    Ok(())
}

/// Free reduction without endpoint checks.
pub fn reduce(w: impl IntoIterator<Item = Letter>) -> Vec<Letter> {
    let mut st: Vec<Letter> = vec![];
    for l in w {
        if st.last() == Some(&l.inverse()) {
            st.pop();
        } else {
            st.push(l);
        }
    }
    st
}

/// Free reduction followed by stripping inverse pairs across the wrap.
pub fn cyclic_reduce(w: impl IntoIterator<Item = Letter>) -> Vec<Letter> {
    let mut w = reduce(w);
    let mut a = 0;
    let mut b = w.len();
    while b - a >= 2 && w[a] == w[b - 1].inverse() {
        a += 1;
        b -= 1;
    }
    w.truncate(b);
    w.drain(..a);
    w
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgePath {
    pub start: usize,
    pub letters: Vec<Letter>,
}

impl EdgePath {
    pub fn end(&self, g: &MarkedGraph) -> usize {
        self.letters.last().map(|l| l.ends(g).1).unwrap_or(self.start)
    }

    pub fn length(&self, g: &MarkedGraph) -> Scalar {
        word_length(g, &self.letters)
    }

    pub fn occurrence(&self, g: &MarkedGraph) -> Vec<u32> {
        occurrence(g, &self.letters)
    }
}

pub fn tighten(g: &MarkedGraph, start: usize, w: &[Letter]) -> Result<EdgePath> {
    if let Some(first) = w.first() {
        if first.ends(g).0 != start {
            return Err(Error::IncompatibleLetters("path does not leave its start vertex".into()));
        }
    }
    check_chain(g, w)?;
    Ok(EdgePath { start, letters: reduce(w.iter().copied()) })
}

pub fn word_length(g: &MarkedGraph, w: &[Letter]) -> Scalar {
    w.iter().filter_map(|l| l.edge()).map(|o| g.len(o.e).clone()).sum()
}

pub fn occurrence(g: &MarkedGraph, w: &[Letter]) -> Vec<u32> {
    let mut occ = vec![0u32; g.edges.len()];
    for l in w {
        if let Letter::E(o) = l {
            occ[o.e] += 1;
        }
    }
    occ
}

pub fn pair(lengths: &[Scalar], occ: &[u32]) -> Scalar {
    let mut acc = Scalar::zero();
    for (l, &c) in lengths.iter().zip(occ) {
        if c != 0 {
            acc = acc + l * &Scalar::int(c as i64);
        }
    }
    acc
}

/// Cyclic word in canonical rotation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Loop {
    pub letters: Vec<Letter>,
}

pub fn canonical_rotation(w: &[Letter]) -> Vec<Letter> {
    let inv = inverse_word(w);
    let mut best: Option<Vec<Letter>> = None;
    for word in [w, &inv[..]] {
        for r in 0..word.len() {
            if best.as_deref().is_some_and(|b| !rotation_less(word, r, b)) {
                continue;
            }
            let mut cand = word[r..].to_vec();
            cand.extend_from_slice(&word[..r]);
            best = Some(cand);
        }
    }
    best.unwrap_or_default()
}

fn rotation_less(w: &[Letter], r: usize, b: &[Letter]) -> bool {
    let n = w.len();
    for i in 0..n {
        let x = &w[(r + i) % n];
        match x.cmp(&b[i]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

pub fn cyclic_tighten(g: &MarkedGraph, w: &[Letter]) -> Result<Loop> {
    check_chain(g, w)?;
    if let (Some(f), Some(l)) = (w.first(), w.last()) {
        if l.ends(g).1 != f.ends(g).0 {
            return Err(Error::IncompatibleLetters("word is not closed".into()));
        }
    }
    let red = cyclic_reduce(w.iter().copied());
    if red.is_empty() {
        return Err(Error::EmptyLoop);
    }
    Ok(Loop { letters: canonical_rotation(&red) })
}

impl Loop {
    pub fn length(&self, g: &MarkedGraph) -> Scalar {
        word_length(g, &self.letters)
    }

    pub fn occurrence(&self, g: &MarkedGraph) -> Vec<u32> {
        occurrence(g, &self.letters)
    }

    pub fn support(&self) -> BTreeSet<usize> {
        self.letters.iter().filter_map(|l| l.edge()).map(|o| o.e).collect()
    }

    pub fn marker_count(&self) -> usize {
        self.letters.iter().filter(|l| matches!(l, Letter::M(_))).count()
    }

    pub fn print(&self, g: &MarkedGraph) -> String {
        print_word(g, &self.letters)
    }
}

pub fn letter_name(g: &MarkedGraph, l: Letter) -> String {
    match l {
        Letter::E(o) => g.oedge_name(o),
        Letter::M(m) => format!("@{}.{}{}", g.vertices[m.v].id, m.idx, if m.inv { "'" } else { "" }),
    }
}

pub fn print_word(g: &MarkedGraph, w: &[Letter]) -> String {
    if w.is_empty() {
        return ".".to_string();
    }
    w.iter().map(|&l| letter_name(g, l)).collect::<Vec<_>>().join(" ")
}

pub fn parse_letter(g: &MarkedGraph, tok: &str) -> Option<Letter> {
    let (body, inv) = match tok.strip_suffix('\'') {
        Some(b) => (b, true),
        None => (tok, false),
    };
    if let Some(m) = body.strip_prefix('@') {
        let (vname, idx) = m.rsplit_once('.')?;
        let v = g.vertex_index(vname)?;
        let idx: u32 = idx.parse().ok()?;
        return Some(Letter::M(Marker { v, idx, inv }));
    }
    let e = g.edge_index(body)?;
    Some(Letter::E(OEdge { e, rev: inv }))
}

pub fn parse_word(g: &MarkedGraph, s: &str) -> Result<Vec<Letter>> {
    let s = s.trim();
    if s == "." {
        return Ok(vec![]);
    }
    s.split_whitespace()
        .map(|t| parse_letter(g, t).ok_or_else(|| Error::Invalid(format!("unknown letter '{t}'"))))
        .collect()
}

pub fn parse_loop(g: &MarkedGraph, s: &str) -> Result<Loop> {
    cyclic_tighten(g, &parse_word(g, s)?)
}

pub const DEFAULT_LOOP_CAP: usize = 1_000_000;

/// Every cyclically tight loop with per-edge multiplicity `<= bound` and at most one
/// generic marker per non-free vertex visit.
pub fn brute_force_loops(g: &MarkedGraph, bound: u32) -> Result<Vec<Loop>> {
    brute_force_loops_capped(g, bound, DEFAULT_LOOP_CAP)
}

pub fn brute_force_loops_capped(g: &MarkedGraph, bound: u32, cap: usize) -> Result<Vec<Loop>> {
    let mut seen = BTreeSet::new();
    let mut word = vec![];
    let mut occ = vec![0u32; g.edges.len()];
    for start in g.all_germs() {
        let v0 = g.origin(start);
        word.push(Letter::E(start));
        occ[start.e] += 1;
        if occ[start.e] <= bound {
            grow_all(g, bound, cap, v0, &mut word, &mut occ, &mut seen)?;
        }
        occ[start.e] -= 1;
        word.pop();
    }
    Ok(seen.into_iter().map(|letters| Loop { letters }).collect())
}

fn grow_all(
    g: &MarkedGraph,
    bound: u32,
    cap: usize,
    v0: usize,
    word: &mut Vec<Letter>,
    occ: &mut [u32],
    seen: &mut BTreeSet<Vec<Letter>>,
) -> Result<()> {
    let last = word.iter().rev().find_map(|l| l.edge()).expect("word starts with an edge");
    let u = g.terminus(last);
    let marked = matches!(word.last(), Some(Letter::M(_)));
    if u == v0 {
        let first = word[0].edge().expect("edge first");
        if marked || first != last.inv() {
            let c = canonical_rotation(word);
            seen.insert(c);
            if seen.len() > cap {
                return Err(Error::ResourceLimit(format!("more than {cap} loops")));
            }
        }
    }
    if g.is_nonfree(u) && !marked {
        word.push(generic_marker(u));
        grow_all(g, bound, cap, v0, word, occ, seen)?;
        word.pop();
    }
    for x in g.germs(u) {
        if !marked && x == last.inv() {
            continue;
        }
        if occ[x.e] >= bound {
            continue;
        }
        occ[x.e] += 1;
        word.push(Letter::E(x));
        grow_all(g, bound, cap, v0, word, occ, seen)?;
        word.pop();
        occ[x.e] -= 1;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    SimpleLoop,
    InfinityLoop,
    Barbell,
    SinglyDegenerateBarbell,
    DoublyDegenerateBarbell,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candidate {
    pub loop_: Loop,
    pub shape: Shape,
}

/// Candidate loops: filtered enumeration (multiplicity and vertex visits at most 2,
/// at most two markers), classified by shape.
pub fn enumerate_candidates(g: &MarkedGraph) -> Vec<Candidate> {
    let mut found = BTreeSet::new();
    let mut word = vec![];
    let mut occ = vec![0u32; g.edges.len()];
    let mut visits = vec![0u32; g.vertices.len()];
    for start in g.all_germs() {
        let v0 = g.origin(start);
        word.push(Letter::E(start));
        occ[start.e] += 1;
        visits[g.terminus(start)] += 1;
        grow_filtered(g, v0, &mut word, &mut occ, &mut visits, &mut found);
        visits[g.terminus(start)] -= 1;
        occ[start.e] -= 1;
        word.pop();
    }
    let mut out: Vec<Candidate> = found
        .into_iter()
        .filter_map(|letters: Vec<Letter>| {
            let shape = classify(g, &letters)?;
            Some(Candidate { loop_: Loop { letters }, shape })
        })
        .collect();
    out.sort();
    out
}

fn grow_filtered(
    g: &MarkedGraph,
    v0: usize,
    word: &mut Vec<Letter>,
    occ: &mut [u32],
    visits: &mut [u32],
    found: &mut BTreeSet<Vec<Letter>>,
) {
    let last = word.iter().rev().find_map(|l| l.edge()).expect("edge first");
    let u = g.terminus(last);
    let marked = matches!(word.last(), Some(Letter::M(_)));
    let markers = word.iter().filter(|l| matches!(l, Letter::M(_))).count();
    if u == v0 {
        let first = word[0].edge().expect("edge first");
        if marked || first != last.inv() {
            let c = canonical_rotation(word);
            if c == *word {
                found.insert(c);
            }
        }
    }
    if g.is_nonfree(u) && !marked && markers < 2 {
        word.push(generic_marker(u));
        grow_filtered(g, v0, word, occ, visits, found);
        word.pop();
    }
    for x in g.germs(u) {
        if (!marked && x == last.inv()) || occ[x.e] >= 2 {
            continue;
        }
        let t = g.terminus(x);
        if visits[t] >= 2 {
            continue;
        }
        occ[x.e] += 1;
        visits[t] += 1;
        word.push(Letter::E(x));
        grow_filtered(g, v0, word, occ, visits, found);
        word.pop();
        visits[t] -= 1;
        occ[x.e] -= 1;
    }
}

/// Vertex-disjoint-from-the-rest check: `es` forms one embedded circle.
fn is_circle(g: &MarkedGraph, es: &BTreeSet<usize>) -> bool {
    if es.is_empty() {
        return false;
    }
    let vs: BTreeSet<usize> = es.iter().flat_map(|&e| g.edges[e].ends).collect();
    if vs.len() != es.len() {
        return false;
    }
    vs.iter().all(|&v| g.valence_in(v, es) == 2) && connected(g, es)
}

fn connected(g: &MarkedGraph, es: &BTreeSet<usize>) -> bool {
    crate::graph_core::Subgraph::from_edges(es.iter().copied()).components(g).len() == 1
}

/// Endpoints of an embedded arc formed by `es`, if it is one.
fn arc_ends(g: &MarkedGraph, es: &BTreeSet<usize>) -> Option<(usize, usize)> {
    if es.is_empty() || !connected(g, es) {
        return None;
    }
    let vs: BTreeSet<usize> = es.iter().flat_map(|&e| g.edges[e].ends).collect();
    if vs.len() != es.len() + 1 {
        return None;
    }
    let ends: Vec<usize> = vs.iter().copied().filter(|&v| g.valence_in(v, es) == 1).collect();
    if ends.len() != 2 || vs.iter().any(|&v| g.valence_in(v, es) > 2) {
        return None;
    }
    Some((ends[0], ends[1]))
}

fn vertices_of(g: &MarkedGraph, es: &BTreeSet<usize>) -> BTreeSet<usize> {
    es.iter().flat_map(|&e| g.edges[e].ends).collect()
}

fn classify(g: &MarkedGraph, w: &[Letter]) -> Option<Shape> {
    let occ = occurrence(g, w);
    let once: BTreeSet<usize> = (0..occ.len()).filter(|&e| occ[e] == 1).collect();
    let twice: BTreeSet<usize> = (0..occ.len()).filter(|&e| occ[e] == 2).collect();
    let markers: Vec<usize> = w
        .iter()
        .filter_map(|l| match l {
            Letter::M(m) => Some(m.v),
            _ => None,
        })
        .collect();
    let circles = |es: &BTreeSet<usize>| -> Option<Vec<BTreeSet<usize>>> {
        let comps = crate::graph_core::Subgraph::from_edges(es.iter().copied()).components(g);
        let mut out = vec![];
        for (_, ces) in comps {
            if !is_circle(g, &ces) {
                return None;
            }
            out.push(ces);
        }
        Some(out)
    };
    match markers.len() {
        0 if twice.is_empty() => {
            if is_circle(g, &once) {
                return Some(Shape::SimpleLoop);
            }
            // two circles meeting in exactly one vertex
            let vs = vertices_of(g, &once);
            if vs.len() + 1 == once.len() {
                let pinch: Vec<usize> = vs.iter().copied().filter(|&v| g.valence_in(v, &once) == 4).collect();
                let rest_ok = vs.iter().all(|&v| g.valence_in(v, &once) == 2 || pinch.contains(&v));
                if pinch.len() == 1 && rest_ok && connected(g, &once) {
                    return Some(Shape::InfinityLoop);
                }
            }
            None
        }
        0 => {
            let (p, q) = arc_ends(g, &twice)?;
            let cs = circles(&once)?;
            if cs.len() != 2 {
                return None;
            }
            let (v1, v2) = (vertices_of(g, &cs[0]), vertices_of(g, &cs[1]));
            if !v1.is_disjoint(&v2) {
                return None;
            }
            let arc_vs = vertices_of(g, &twice);
            let meets1: Vec<usize> = arc_vs.intersection(&v1).copied().collect();
            let meets2: Vec<usize> = arc_vs.intersection(&v2).copied().collect();
            let ok = meets1.len() == 1
                && meets2.len() == 1
                && ((meets1[0] == p && meets2[0] == q) || (meets1[0] == q && meets2[0] == p));
            ok.then_some(Shape::Barbell)
        }
        1 => {
            let v = markers[0];
            let cs = circles(&once)?;
            if cs.len() != 1 {
                return None;
            }
            let cv = vertices_of(g, &cs[0]);
            if twice.is_empty() {
                return cv.contains(&v).then_some(Shape::SinglyDegenerateBarbell);
            }
            let (p, q) = arc_ends(g, &twice)?;
            let other = if p == v {
                q
            } else if q == v {
                p
            } else {
                return None;
            };
            let arc_vs = vertices_of(g, &twice);
            let meets: Vec<usize> = arc_vs.intersection(&cv).copied().collect();
            (meets == vec![other]).then_some(Shape::SinglyDegenerateBarbell)
        }
        2 => {
            if !once.is_empty() {
                return None;
            }
            let (a, b) = (markers[0], markers[1]);
            if a != b {
                let (p, q) = arc_ends(g, &twice)?;
                let ok = (p == a && q == b) || (p == b && q == a);
                return ok.then_some(Shape::DoublyDegenerateBarbell);
            }
            (is_circle(g, &twice) && vertices_of(g, &twice).contains(&a))
                .then_some(Shape::DoublyDegenerateBarbell)
        }
        _ => None,
    }
}
