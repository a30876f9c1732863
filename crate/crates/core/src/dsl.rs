//! Line-oriented text format for graphs and maps.
//!
//! ```text
//! graph rose2
//! vertex v free
//! edge a v v len 1
//! ```
//!
//! ```text
//! map phifib on rose2
//! v v -> vertex v
//! e a -> a b
//! ```

use crate::error::{Error, Result};
use crate::graph_core::{MarkedGraph, OEdge, VertexKind};
use crate::loops::{Letter, Marker};
use crate::scalar::{parse_expr, Scalar};
use crate::straight_maps::{FracPath, MapSource, Point, Seg, StraightMap};
use serde_json::{json, Value};
use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct GraphDoc {
    pub comments: Vec<String>,
    pub lets: Vec<(String, String)>,
    pub graph: MarkedGraph,
}

#[derive(Clone, Debug)]
pub struct MapDoc {
    pub comments: Vec<String>,
    pub lets: Vec<(String, String)>,
    pub map: StraightMap,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    comments: Vec<String>,
}

fn lines(text: &str) -> Lines<'_> {
    let mut items = vec![];
    let mut comments = vec![];
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if items.is_empty() {
                comments.push(t.to_string());
            }
            continue;
        }
        let t = match t.find(" #") {
            Some(k) => t[..k].trim_end(),
            None => t,
        };
        items.push((i + 1, t));
    }
    Lines { items, comments }
}

/// Column (1-based) of the `k`-th whitespace token of `line`.
fn col_of(line: &str, k: usize) -> usize {
    let mut n = 0;
    let mut in_tok = false;
    for (i, c) in line.char_indices() {
        if !c.is_whitespace() && !in_tok {
            if n == k {
                return i + 1;
            }
            n += 1;
        }
        in_tok = !c.is_whitespace();
    }
    line.len() + 1
}

struct Env {
    vals: HashMap<String, Scalar>,
    lets: Vec<(String, String)>,
}

impl Env {
    fn new(base: &HashMap<String, Scalar>) -> Env {
        Env { vals: base.clone(), lets: vec![] }
    }

    fn eval(&self, src: &str, line: usize, col: usize) -> Result<Scalar> {
        parse_expr(src, &self.vals).map_err(|e| perr(line, col + e.col - 1, e.msg))
    }

    fn bind(&mut self, rest: &str, line: usize, text: &str, overrides: &[(String, String)]) -> Result<()> {
        let Some((name, expr)) = rest.split_once('=') else {
            return Err(perr(line, col_of(text, 1), "expected `let <name> = <expr>`"));
        };
        let name = name.trim().to_string();
        let src = overrides.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| v.clone()).unwrap_or_else(|| expr.trim().to_string());
        let col = text.find('=').map(|i| i + 2).unwrap_or(1);
        let v = self.eval(&src, line, col)?;
        self.vals.insert(name.clone(), v);
        self.lets.push((name, src));
        Ok(())
    }
}

fn overrides_env(overrides: &[(String, String)]) -> Result<HashMap<String, Scalar>> {
    let mut env = HashMap::new();
    for (n, v) in overrides {
        let val = parse_expr(v, &env).map_err(|e| perr(0, e.col, format!("--set {n}: {}", e.msg)))?;
        env.insert(n.clone(), val);
    }
    Ok(env)
}

/// Parse a graph file; `overrides` replace `let` bindings of the same name.
pub fn parse_graph(text: &str, overrides: &[(String, String)]) -> Result<GraphDoc> {
    let ls = lines(text);
    let mut env = Env::new(&overrides_env(overrides)?);
    let mut g: Option<MarkedGraph> = None;
    for &(ln, t) in &ls.items {
        let toks: Vec<&str> = t.split_whitespace().collect();
        match toks[0] {
            "graph" => {
                if toks.len() != 2 {
                    return Err(perr(ln, 1, "expected `graph <name>`"));
                }
                g = Some(MarkedGraph::new(toks[1]));
            }
            "let" => env.bind(t[3..].trim(), ln, t, overrides)?,
            kw @ ("vertex" | "edge" | "collapsed") => {
                let g = g.as_mut().ok_or_else(|| perr(ln, 1, format!("`{kw}` before `graph`")))?;
                match kw {
                    "vertex" => {
                        if toks.len() != 3 {
                            return Err(perr(ln, 1, "expected `vertex <id> free|nonfree(<label>)`"));
                        }
                        if g.vertex_index(toks[1]).is_some() {
                            return Err(perr(ln, col_of(t, 1), format!("duplicate vertex {}", toks[1])));
                        }
                        let kind = if toks[2] == "free" {
                            VertexKind::Free
                        } else if let Some(l) = toks[2].strip_prefix("nonfree(").and_then(|r| r.strip_suffix(')')) {
                            VertexKind::NonFree(l.to_string())
                        } else {
                            return Err(perr(ln, col_of(t, 2), "expected `free` or `nonfree(<label>)`"));
                        };
                        g.add_vertex(toks[1], kind);
                    }
                    "edge" => {
                        if toks.len() < 6 || toks[4] != "len" {
                            return Err(perr(ln, 1, "expected `edge <id> <v> <v> len <expr>`"));
                        }
                        if g.edge_index(toks[1]).is_some() {
                            return Err(perr(ln, col_of(t, 1), format!("duplicate edge {}", toks[1])));
                        }
                        let mut ends = [0; 2];
                        for k in 0..2 {
                            ends[k] = g
                                .vertex_index(toks[2 + k])
                                .ok_or_else(|| perr(ln, col_of(t, 2 + k), format!("unknown vertex {}", toks[2 + k])))?;
                        }
                        let col = col_of(t, 5);
                        let src = t[col - 1..].trim().to_string();
                        let len = env.eval(&src, ln, col)?;
                        let e = g.add_edge(toks[1], ends[0], ends[1], len);
                        g.edges[e].len_src = Some(src);
                    }
                    _ => {
                        for (k, name) in toks.iter().enumerate().skip(1) {
                            let e = g
                                .edge_index(name)
                                .ok_or_else(|| perr(ln, col_of(t, k), format!("unknown edge {name}")))?;
                            g.collapsed.insert(e);
                        }
                    }
                }
            }
            other => return Err(perr(ln, 1, format!("unknown statement `{other}`"))),
        }
    }
    let graph = g.ok_or_else(|| perr(1, 1, "missing `graph <name>`"))?;
    Ok(GraphDoc { comments: ls.comments, lets: env.lets, graph })
}

pub fn print_graph(doc: &GraphDoc) -> String {
    let g = &doc.graph;
    let mut out = String::new();
    for c in &doc.comments {
        out += c;
        out.push('\n');
    }
    out += &format!("graph {}\n", g.name);
    for (n, v) in &doc.lets {
        out += &format!("let {n} = {v}\n");
    }
    for v in &g.vertices {
        let kind = match &v.kind {
            VertexKind::Free => "free".to_string(),
            VertexKind::NonFree(l) => format!("nonfree({l})"),
        };
        out += &format!("vertex {} {}\n", v.id, kind);
    }
    for e in &g.edges {
        let len = e.len_src.clone().unwrap_or_else(|| e.len.exact_string());
        out += &format!("edge {} {} {} len {}\n", e.id, g.vertices[e.ends[0]].id, g.vertices[e.ends[1]].id, len);
    }
    if !g.collapsed.is_empty() {
        let names: Vec<&str> = g.collapsed.iter().map(|&e| g.edges[e].id.as_str()).collect();
        out += &format!("collapsed {}\n", names.join(" "));
    }
    out
}

/// Split a path expression at whitespace outside brackets.
fn path_tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = vec![];
    let mut depth = 0i32;
    let mut start = None;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            _ => {}
        }
        if c.is_whitespace() && depth == 0 {
            if let Some(st) = start.take() {
                out.push((st, &s[st..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st, &s[st..]));
    }
    out
}

fn parse_path_token(g: &MarkedGraph, env: &Env, tok: &str, line: usize, col: usize) -> Result<Option<Seg>> {
    if let Some(m) = tok.strip_prefix('@') {
        let (body, inv) = match m.strip_suffix('\'') {
            Some(b) => (b, true),
            None => (m, false),
        };
        let (vname, idx) = body.rsplit_once('.').ok_or_else(|| perr(line, col, "expected `@<vertex>.<index>`"))?;
        let v = g.vertex_index(vname).ok_or_else(|| perr(line, col + 1, format!("unknown vertex {vname}")))?;
        let idx = idx.parse().map_err(|_| perr(line, col, "marker index must be a natural number"))?;
        if !g.is_nonfree(v) {
            return Err(perr(line, col, format!("marker at free vertex {vname}")));
        }
        return Ok(Some(Seg::M(Marker { v, idx, inv })));
    }
    let (head, range) = match tok.find('[') {
        Some(k) => {
            let r = tok[k + 1..].strip_suffix(']').ok_or_else(|| perr(line, col + k, "unclosed `[`"))?;
            (&tok[..k], Some((k + 1, r)))
        }
        None => (tok, None),
    };
    let (name, rev) = match head.strip_suffix('\'') {
        Some(n) => (n, true),
        None => (head, false),
    };
    let e = g.edge_index(name).ok_or_else(|| perr(line, col, format!("unknown edge {name}")))?;
    let oe = OEdge { e, rev };
    let (a, b) = match range {
        None => (Scalar::zero(), Scalar::one()),
        Some((off, r)) => {
            let k = r.find("..").ok_or_else(|| perr(line, col + off, "expected `[s..u]`"))?;
            let (s, u) = (&r[..k], &r[k + 2..]);
            let a = if s.trim().is_empty() { Scalar::zero() } else { env.eval(s, line, col + off)? };
            let b = if u.trim().is_empty() { Scalar::one() } else { env.eval(u, line, col + off + k + 2)? };
            (a, b)
        }
    };
    if a.is_negative() || b > Scalar::one() || a > b {
        return Err(perr(line, col, format!("fractions of {tok} must satisfy 0 <= s <= u <= 1")));
    }
    // an empty piece is allowed so that parameter families can degenerate
    Ok((a < b).then_some(Seg::E { oe, a, b }))
}

/// Parse a map file against its graph.
pub fn parse_map(text: &str, graph: &GraphDoc, overrides: &[(String, String)]) -> Result<MapDoc> {
    let g = &graph.graph;
    let ls = lines(text);
    let mut base = overrides_env(overrides)?;
    let mut genv = Env::new(&HashMap::new());
    for (n, v) in &graph.lets {
        genv.vals.insert(n.clone(), parse_expr(v, &genv.vals).map_err(|e| perr(0, e.col, e.msg))?);
    }
    for (k, v) in genv.vals {
        base.entry(k).or_insert(v);
    }
    let mut env = Env::new(&base);
    let mut name = None;
    let mut vimg: Vec<Option<(Point, String, usize)>> = vec![None; g.vertices.len()];
    let mut eimg: Vec<Option<(Vec<Seg>, String, usize)>> = vec![None; g.edges.len()];
    let mut sigma_src = None;
    for &(ln, t) in &ls.items {
        let toks: Vec<&str> = t.split_whitespace().collect();
        match toks[0] {
            "map" => {
                if toks.len() != 4 || toks[2] != "on" {
                    return Err(perr(ln, 1, "expected `map <name> on <graph>`"));
                }
                if toks[3] != g.name {
                    return Err(perr(ln, col_of(t, 3), format!("map is on {}, graph is {}", toks[3], g.name)));
                }
                name = Some(toks[1].to_string());
            }
            "let" => env.bind(t[3..].trim(), ln, t, overrides)?,
            "sigma" => sigma_src = Some((toks[1..].join(" "), ln)),
            "v" => {
                if toks.len() < 4 || toks[2] != "->" {
                    return Err(perr(ln, 1, "expected `v <id> -> vertex <id> | point <edge> <t>`"));
                }
                let v = g.vertex_index(toks[1]).ok_or_else(|| perr(ln, col_of(t, 1), format!("unknown vertex {}", toks[1])))?;
                let rhs_col = col_of(t, 3);
                let rhs = t[rhs_col - 1..].to_string();
                let p = match toks[3] {
                    "vertex" if toks.len() == 5 => Point::At(
                        g.vertex_index(toks[4]).ok_or_else(|| perr(ln, col_of(t, 4), format!("unknown vertex {}", toks[4])))?,
                    ),
                    "point" if toks.len() >= 6 => {
                        let e = g.edge_index(toks[4]).ok_or_else(|| perr(ln, col_of(t, 4), format!("unknown edge {}", toks[4])))?;
                        let c = col_of(t, 5);
                        let tv = env.eval(t[c - 1..].trim(), ln, c)?;
                        if tv.is_negative() || tv > Scalar::one() {
                            return Err(perr(ln, c, "point parameter must lie in [0, 1]"));
                        }
                        Point::on(g, OEdge::fwd(e), tv)
                    }
                    _ => return Err(perr(ln, rhs_col, "expected `vertex <id>` or `point <edge> <t>`")),
                };
                vimg[v] = Some((p, rhs, ln));
            }
            "e" => {
                if toks.len() < 4 || toks[2] != "->" {
                    return Err(perr(ln, 1, "expected `e <id> -> <path>`"));
                }
                let e = g.edge_index(toks[1]).ok_or_else(|| perr(ln, col_of(t, 1), format!("unknown edge {}", toks[1])))?;
                let rhs_col = col_of(t, 3);
                let rhs = &t[rhs_col - 1..];
                let mut segs = vec![];
                if rhs.trim() != "." {
                    for (off, tok) in path_tokens(rhs) {
                        segs.extend(parse_path_token(g, &env, tok, ln, rhs_col + off)?);
                    }
                }
                eimg[e] = Some((segs, rhs.to_string(), ln));
            }
            other => return Err(perr(ln, 1, format!("unknown statement `{other}`"))),
        }
    }
    let name = name.ok_or_else(|| perr(1, 1, "missing `map <name> on <graph>`"))?;
    let mut src = MapSource::default();
    let mut points = vec![];
    for (v, p) in vimg.into_iter().enumerate() {
        let (p, s, _) = p.ok_or_else(|| perr(0, 0, format!("no image given for vertex {}", g.vertices[v].id)))?;
        points.push(p);
        src.vimg.push(Some(s));
    }
    let mut paths = vec![];
    for (e, p) in eimg.into_iter().enumerate() {
        let (segs, s, ln) = p.ok_or_else(|| perr(0, 0, format!("no image given for edge {}", g.edges[e].id)))?;
        let [o, t] = g.edges[e].ends;
        let path = FracPath { start: points[o].clone(), segs };
        path.check(g).map_err(|err| perr(ln, 1, err.to_string()))?;
        if path.end(g) != points[t] {
            return Err(perr(ln, 1, format!("image of {} does not end at the image of {}", g.edges[e].id, g.vertices[t].id)));
        }
        let tight = FracPath::tightened(path.start.clone(), path.segs.clone());
        if tight.segs.len() != path.segs.len() {
            return Err(perr(ln, 1, format!("image of {} is not tight", g.edges[e].id)));
        }
        paths.push(path);
        src.eimg.push(Some(s));
    }
    let mut map = StraightMap::new(&name, g.clone(), points, paths).map_err(|e| perr(0, 0, e.to_string()))?;
    if let Some((s, ln)) = sigma_src {
        let given: std::result::Result<Vec<usize>, _> = s.split_whitespace().map(|x| x.parse::<usize>()).collect();
        match given {
            Ok(p) if p == map.sigma => {}
            Ok(_) => return Err(perr(ln, 1, format!("sigma does not match the vertex images ({:?})", map.sigma))),
            Err(_) => return Err(perr(ln, 1, "sigma must list component indices")),
        }
        src.sigma = Some(s);
    }
    map.src = Some(src);
    Ok(MapDoc { comments: ls.comments, lets: env.lets, map })
}

pub fn print_map(doc: &MapDoc) -> String {
    let mut out = String::new();
    for c in &doc.comments {
        out += c;
        out.push('\n');
    }
    let body = doc.map.print();
    let mut lines = body.lines();
    out += lines.next().unwrap_or_default();
    out.push('\n');
    for (n, v) in &doc.lets {
        out += &format!("let {n} = {v}\n");
    }
    if let Some(s) = doc.map.src.as_ref().and_then(|s| s.sigma.clone()) {
        out += &format!("sigma {s}\n");
    }
    for l in lines {
        if !l.starts_with("sigma ") {
            out += l;
            out.push('\n');
        }
    }
    out
}

/// Structured mirror of a graph file.
pub fn graph_json(g: &MarkedGraph) -> Value {
    json!({
        "graph": g.name,
        "vertices": g.vertices.iter().map(|v| match &v.kind {
            VertexKind::Free => json!({"id": v.id, "kind": "free"}),
            VertexKind::NonFree(l) => json!({"id": v.id, "kind": "nonfree", "label": l}),
        }).collect::<Vec<_>>(),
        "edges": g.edges.iter().map(|e| json!({
            "id": e.id,
            "from": g.vertices[e.ends[0]].id,
            "to": g.vertices[e.ends[1]].id,
            "len": e.len.exact_string(),
            "len_decimal": e.len.decimal(),
        })).collect::<Vec<_>>(),
        "collapsed": g.collapsed.iter().map(|&e| g.edges[e].id.clone()).collect::<Vec<_>>(),
    })
}

pub fn map_json(f: &StraightMap) -> Value {
    let g = &f.g;
    json!({
        "map": f.name,
        "on": g.name,
        "sigma": f.sigma,
        "v": g.vertices.iter().enumerate().map(|(v, x)| json!({"id": x.id, "image": f.vimg[v].print(g)})).collect::<Vec<_>>(),
        "e": g.edges.iter().enumerate().map(|(e, x)| json!({"id": x.id, "image": f.eimg[e].print(g)})).collect::<Vec<_>>(),
    })
}

/// Parse a whitespace-separated word of letters (no fractions).
pub fn parse_letters(g: &MarkedGraph, s: &str) -> Result<Vec<Letter>> {
    crate::loops::parse_word(g, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROSE: &str = "graph rose2\nvertex v free\nedge a v v len 1\nedge b v v len 1\n";
    const FIB: &str = "map phifib on rose2\nv v -> vertex v\ne a -> a b\ne b -> a\n";

    #[test]
    fn round_trip() {
        let g = parse_graph(ROSE, &[]).unwrap();
        assert_eq!(print_graph(&g), ROSE);
        let m = parse_map(FIB, &g, &[]).unwrap();
        assert_eq!(print_map(&m), FIB);
    }

    #[test]
    fn errors_carry_positions() {
        let bad = "graph g\nvertex v free\nedge a v w len 1\n";
        match parse_graph(bad, &[]) {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (3, 10)),
            other => panic!("{other:?}"),
        }
        let bad = "graph g\nvertex v free\nedge a v v len 1/0\n";
        assert!(matches!(parse_graph(bad, &[]), Err(Error::Parse { line: 3, .. })));
        let g = parse_graph(ROSE, &[]).unwrap();
        let bad = "map m on rose2\nv v -> vertex v\ne a -> a c\ne b -> a\n";
        match parse_map(bad, &g, &[]) {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (3, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fractional_paths_and_lets() {
        let g = "graph c\nvertex v free\nedge c v v len 2\n";
        let m = "map rot on c\nlet t = 1/4\nv v -> point c t\ne c -> c[t..] c[..t]\n";
        let gd = parse_graph(g, &[]).unwrap();
        let md = parse_map(m, &gd, &[]).unwrap();
        assert_eq!(md.map.vimg[0], Point::In(0, Scalar::ratio(1, 4)));
        assert_eq!(print_map(&md), m);
        let md = parse_map(m, &gd, &[("t".into(), "1/2".into())]).unwrap();
        assert_eq!(md.map.vimg[0], Point::In(0, Scalar::ratio(1, 2)));
    }
}
