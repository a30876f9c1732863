//! Graphviz export.

use crate::displacement::SearchStep;
use crate::graph_core::{MarkedGraph, VertexKind};
use crate::straight_maps::StraightMap;
use std::fmt::Write;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n"))
}

fn body(g: &MarkedGraph, labels: &[String], out: &mut String) {
    for v in &g.vertices {
        let shape = match &v.kind {
            VertexKind::Free => "circle".to_string(),
            VertexKind::NonFree(l) => format!("doublecircle, xlabel={}", quote(l)),
        };
        let _ = writeln!(out, "  {} [shape={shape}];", quote(&v.id));
    }
    for (i, e) in g.edges.iter().enumerate() {
        let [o, t] = e.ends;
        let style = if g.collapsed.contains(&i) { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  {} -> {} [label={}{style}];",
            quote(&g.vertices[o].id),
            quote(&g.vertices[t].id),
            quote(&labels[i])
        );
    }
}

pub fn graph_dot(g: &MarkedGraph) -> String {
    let labels: Vec<String> = g.edges.iter().map(|e| format!("{} ({})", e.id, e.len.decimal())).collect();
    let mut out = format!("digraph {} {{\n", quote(&g.name));
    body(g, &labels, &mut out);
    out.push_str("}\n");
    out
}

/// The graph with each edge labelled by its image; tension edges drawn bold.
pub fn map_dot(f: &StraightMap) -> String {
    let g = &f.g;
    let t = f.tension_graph();
    let labels: Vec<String> = (0..g.edges.len())
        .map(|e| format!("{} -> {}", g.edges[e].id, f.eimg[e].print(g)))
        .collect();
    let mut out = format!("digraph {} {{\n", quote(&f.name));
    body(g, &labels, &mut out);
    for &e in &t.edges {
        let [o, w] = g.edges[e].ends;
        let _ = writeln!(
            out,
            "  {} -> {} [penwidth=3, color=red, arrowhead=none];",
            quote(&g.vertices[o].id),
            quote(&g.vertices[w].id)
        );
    }
    out.push_str("}\n");
    out
}

/// One node per search step, in order; the steps after each collapse or restriction sit in
/// a nested cluster.
pub fn trajectory_dot(steps: &[SearchStep]) -> String {
    let mut out = String::from("digraph trajectory {\n  rankdir=LR;\n");
    let mut depth = 0;
    for (i, s) in steps.iter().enumerate() {
        let pad = "  ".repeat(depth + 1);
        let _ = writeln!(out, "{pad}s{i} [shape=box, label={}];", quote(&format!("{} {}\n{} {}", s.kind, s.graph, s.lambda, s.note)));
        if matches!(s.kind.as_str(), "collapse" | "collapse-forest" | "restrict") {
            let _ = writeln!(out, "{pad}subgraph cluster_{i} {{\n{pad}  label={};", quote(&format!("{} {}", s.kind, s.note)));
            depth += 1;
        }
    }
    for d in (1..=depth).rev() {
        let _ = writeln!(out, "{}}}", "  ".repeat(d));
    }
    for i in 1..steps.len() {
        let _ = writeln!(out, "  s{} -> s{i};", i - 1);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn exports_mention_every_edge() {
        let f = fixtures::fig322();
        let d = map_dot(&f);
        for e in &f.g.edges {
            assert!(d.contains(&format!("\"{} -> ", e.id)), "{}", e.id);
        }
        assert_eq!(d.matches("penwidth").count(), 4);
        assert!(graph_dot(&f.g).starts_with("digraph \"fig322\""));
    }

    #[test]
    fn collapses_open_clusters() {
        let step = |kind: &str| SearchStep { kind: kind.into(), graph: "g".into(), lambda: "1".into(), note: String::new() };
        let d = trajectory_dot(&[step("minimize"), step("collapse"), step("minimize"), step("train-track")]);
        assert_eq!(d.matches("subgraph cluster_").count(), 1);
        assert_eq!(d.matches('{').count(), d.matches('}').count());
        assert_eq!(d.matches(" -> ").count(), 3);
    }
}
