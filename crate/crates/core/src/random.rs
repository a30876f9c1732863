//! Seeded random instances: graphs, straight maps, length vectors and perturbations.

use crate::graph_core::{MarkedGraph, OEdge, Subgraph, VertexKind};
use crate::loops::{reduce, Letter};
use crate::scalar::Scalar;
use crate::straight_maps::{FracPath, StraightMap};
use crate::opt_flow::apply_shifts;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::VecDeque;

/// A connected graph of the given rank with every vertex of valence at least three.
pub fn random_graph(rng: &mut impl Rng, rank: usize, max_edges: usize) -> MarkedGraph {
    assert!(rank >= 2, "valence three needs rank at least two");
    loop {
        let max_v = (2 * rank - 2).min(max_edges + 1 - rank);
        let nv = rng.gen_range(1..=max_v);
        let ne = nv + rank - 1;
        let mut g = MarkedGraph::new(&format!("rg{rank}"));
        for i in 0..nv {
            g.add_vertex(&format!("v{i}"), VertexKind::Free);
        }
        for i in 1..nv {
            let j = rng.gen_range(0..i);
            g.add_edge(&format!("e{}", g.edges.len()), j, i, Scalar::one());
        }
        while g.edges.len() < ne {
            let (a, b) = (rng.gen_range(0..nv), rng.gen_range(0..nv));
            g.add_edge(&format!("e{}", g.edges.len()), a, b, Scalar::one());
        }
        if g.validate().is_valid_point {
            let ls = random_lengths(rng, ne);
            return g.with_lengths(&ls);
        }
    }
}

/// Positive rational lengths `k/12` with `k` in `1..=24`.
pub fn random_lengths(rng: &mut impl Rng, n: usize) -> Vec<Scalar> {
    (0..n).map(|_| Scalar::ratio(rng.gen_range(1..=24), 12)).collect()
}

/// Normalized to total length one.
pub fn random_simplex_point(rng: &mut impl Rng, n: usize) -> Vec<Scalar> {
    let ls = random_lengths(rng, n);
    let vol: Scalar = ls.iter().cloned().sum();
    ls.into_iter().map(|l| l / &vol).collect()
}

fn tree_path(g: &MarkedGraph, from: usize, to: usize) -> Vec<Letter> {
    let mut prev: Vec<Option<OEdge>> = vec![None; g.vertices.len()];
    let mut seen = vec![false; g.vertices.len()];
    seen[from] = true;
    let mut q = VecDeque::from([from]);
    while let Some(v) = q.pop_front() {
        for h in g.germs(v) {
            let w = g.terminus(h);
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some(h);
                q.push_back(w);
            }
        }
    }
    let mut path = vec![];
    let mut v = to;
    while v != from {
        let h = prev[v].expect("connected graph");
        path.push(Letter::E(h));
        v = g.origin(h);
    }
    path.reverse();
    path
}

/// A nonempty reduced edge path from `p` to `q` of roughly `len` random steps.
pub fn random_path(rng: &mut impl Rng, g: &MarkedGraph, p: usize, q: usize, len: usize, allowed: &[usize]) -> Vec<Letter> {
    loop {
        let mut w = vec![];
        let mut v = p;
        let mut last: Option<OEdge> = None;
        for _ in 0..rng.gen_range(1..=len.max(1)) {
            let opts: Vec<OEdge> =
                g.germs(v).into_iter().filter(|h| allowed.contains(&h.e) && Some(h.inv()) != last).collect();
            let Some(&h) = opts.choose(rng) else { break };
            w.push(Letter::E(h));
            last = Some(h);
            v = g.terminus(h);
        }
        w.extend(tree_path(g, v, q));
        let w = reduce(w);
        if !w.is_empty() {
            return w;
        }
    }
}

/// A straight map sending vertices to random vertices and edges along random paths.
pub fn random_map(rng: &mut impl Rng, g: &MarkedGraph, max_word: usize) -> StraightMap {
    let nv = g.vertices.len();
    let all: Vec<usize> = (0..g.edges.len()).collect();
    let vmap: Vec<usize> = (0..nv).map(|_| rng.gen_range(0..nv)).collect();
    let words = g
        .edges
        .iter()
        .map(|e| random_path(rng, g, vmap[e.ends[0]], vmap[e.ends[1]], max_word, &all))
        .collect();
    StraightMap::from_words("rand", g.clone(), vmap, words).expect("random words are consistent")
}

/// A map on a rose of `inner + outer` petals whose first `inner` petals span an invariant rose.
pub fn random_block_map(rng: &mut impl Rng, inner: usize, outer: usize, max_word: usize) -> (StraightMap, Subgraph) {
    let mut g = MarkedGraph::new("rose");
    let v = g.add_vertex("v", VertexKind::Free);
    for i in 0..inner + outer {
        let id = if i < inner { format!("a{i}") } else { format!("b{}", i - inner) };
        g.add_edge(&id, v, v, Scalar::one());
    }
    let ls = random_lengths(rng, inner + outer);
    let g = g.with_lengths(&ls);
    let a: Vec<usize> = (0..inner).collect();
    let all: Vec<usize> = (0..inner + outer).collect();
    let words = (0..inner + outer)
        .map(|e| random_path(rng, &g, v, v, max_word, if e < inner { &a } else { &all }))
        .collect();
    let f = StraightMap::from_words("block", g, vec![v; 1], words).expect("rose words are consistent");
    (f, Subgraph::from_edges(a))
}

/// Slides each vertex image a random fraction into a random edge at its image vertex.
pub fn perturb(rng: &mut impl Rng, f: &StraightMap) -> StraightMap {
    let g = &f.g;
    let shifts: Vec<Option<FracPath>> = (0..g.vertices.len())
        .map(|v| {
            let w = f.vimg[v].vertex()?;
            if g.is_nonfree(v) || rng.gen_bool(0.3) {
                return None;
            }
            let h = *g.germs(w).choose(rng)?;
            let b = Scalar::ratio(rng.gen_range(1..=7), 8);
            Some(FracPath { start: f.vimg[v].clone(), segs: vec![crate::straight_maps::Seg::E { oe: h, a: Scalar::zero(), b }] })
        })
        .collect();
    apply_shifts(f, &shifts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rank = rng.gen_range(2..=3);
            let g = random_graph(&mut rng, rank, 8);
            assert!(g.edges.len() <= 8 && g.validate().is_valid_point);
            assert_eq!(g.kurosh_rank(), rank);
            let f = random_map(&mut rng, &g, 4);
            let p = perturb(&mut rng, &f);
            assert!(p.lip() >= Scalar::zero());
        }
        let (f, a) = random_block_map(&mut rng, 2, 2, 3);
        assert_eq!(crate::straight_maps::invariant_subgraph(&f, &a), a);
    }
}
