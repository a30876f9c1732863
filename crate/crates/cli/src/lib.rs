//! Command-line front end for the `ttkit` library.
//!
//! `run` parses an argument vector, dispatches one subcommand and returns the exit code with
//! the text destined for stdout and stderr, so tests can drive it without a process.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use ttkit::displacement::{
    global_min_search, jump_analysis, lambda, min_in_simplex, open_floor, power_check, segment_profile,
    spectrum_sample, LambdaValue, SearchOptions, SimplexSpec,
};
use ttkit::dsl::{graph_json, map_json, parse_graph, parse_map, GraphDoc, MapDoc};
use ttkit::graph_core::{MarkedGraph, Subgraph};
use ttkit::loops::enumerate_candidates;
use ttkit::opt_flow::{normalize, simple_fold, weakopt_with, Turn};
use ttkit::scalar::{parse_expr, set_policy, NumericPolicy, Scalar, DEFAULT_TOL};
use ttkit::straight_maps::{gates, StraightMap};
use ttkit::{dot, fixtures};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] ttkit::Error),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(ttkit::Error::Parse { .. }) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn record(&self) -> Value {
        match self {
            CliError::Domain(e @ ttkit::Error::Parse { line, col, msg }) => {
                json!({"error": e.kind(), "line": line, "col": col, "message": msg})
            }
            CliError::Domain(e) => json!({"error": e.kind(), "message": e.to_string()}),
            CliError::Io { .. } => json!({"error": "Io", "message": self.to_string()}),
            CliError::Usage(m) => json!({"error": "Usage", "message": m}),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Structured,
}

#[derive(Parser, Debug)]
#[command(name = "ttkit", version, about = "Displacement, optimal maps and train tracks for marked metric graphs")]
struct Cli {
    #[arg(long, value_enum, default_value = "human", global = true)]
    format: Format,
    /// `exact` or `float:<tol>`
    #[arg(long, default_value = "exact", global = true)]
    policy: String,
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Override a `let` binding, as `name=expr`; repeatable.
    #[arg(long = "set", value_name = "NAME=EXPR", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct MapArgs {
    graph: String,
    map: String,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validity report of a graph
    Validate { graph: String },
    /// Displacement and a realizing candidate
    Lambda(MapArgs),
    /// Candidate loops of a graph, with stretch ratios when a map is given
    Candidates { graph: String, map: Option<String> },
    /// Minimum of the displacement over the simplex of the map's graph
    Minimize {
        #[command(flatten)]
        m: MapArgs,
        #[arg(long)]
        floor: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Displacement along the segment between two length vectors
    Segment {
        #[command(flatten)]
        m: MapArgs,
        a: String,
        b: String,
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Compares the face reached by collapsing an invariant subgraph with its core
    Jump {
        #[command(flatten)]
        m: MapArgs,
        /// Edge names, comma separated
        #[arg(long)]
        collapse: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Global search for a partial train track
    Traintrack {
        #[command(flatten)]
        m: MapArgs,
        #[arg(long, default_value_t = 64)]
        budget: usize,
    },
    /// Simplex minima along a seeded random walk of folds
    Spectrum {
        #[command(flatten)]
        m: MapArgs,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Displacement of the powers of a map against powers of its displacement
    Power {
        #[command(flatten)]
        m: MapArgs,
        #[arg(long, default_value_t = 4)]
        k: u32,
    },
    /// Optimization flow down to a weakly optimal map
    Weakopt {
        #[command(flatten)]
        m: MapArgs,
        #[arg(long)]
        target: Option<String>,
        /// Write one event record per line to this file
        #[arg(long)]
        trace: Option<String>,
        #[arg(long, default_value_t = ttkit::opt_flow::EVENT_CAP)]
        cap: usize,
    },
    /// Graphviz export of a graph, a map, or a search trajectory
    Dot {
        graph: String,
        map: Option<String>,
        #[arg(long)]
        trajectory: bool,
    },
    /// Lists the embedded fixtures, prints one, or writes them all to a directory
    Fixtures {
        #[arg(long)]
        show: Option<String>,
        #[arg(long)]
        write: Option<String>,
    },
}

/// Result of one invocation.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Report {
    human: String,
    data: Value,
}

/// Graphs and maps loaded by one invocation, plus its fixed settings.
pub struct Session {
    pub policy: NumericPolicy,
    pub format: Format,
    pub seed: u64,
    overrides: Vec<(String, String)>,
    graphs: BTreeMap<String, GraphDoc>,
    maps: BTreeMap<String, MapDoc>,
}

fn parse_policy(s: &str) -> CliResult<NumericPolicy> {
    match s {
        "exact" => Ok(NumericPolicy::Exact),
        "float" => Ok(NumericPolicy::Float(DEFAULT_TOL)),
        _ => {
            let tol = s
                .strip_prefix("float:")
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|t| *t > 0.0)
                .ok_or_else(|| CliError::Usage(format!("bad policy `{s}`, expected exact or float:<tol>")))?;
            Ok(NumericPolicy::Float(tol))
        }
    }
}

/// A file on disk, or else an embedded fixture with the same file name.
fn read_input(path: &str) -> CliResult<String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) => {
            let base = Path::new(path).file_name().and_then(|b| b.to_str()).unwrap_or(path);
            fixtures::text(base)
                .map(str::to_string)
                .map_err(|_| CliError::Io { path: path.to_string(), msg: e.to_string() })
        }
    }
}

fn expr(src: &str) -> CliResult<Scalar> {
    parse_expr(src, &HashMap::new())
        .map_err(|e| CliError::Domain(ttkit::Error::Parse { line: 1, col: e.col, msg: format!("{}: {src}", e.msg) }))
}

fn num(x: &Scalar) -> Value {
    json!({"exact": x.exact_string(), "decimal": x.decimal()})
}

fn lambda_json(l: &LambdaValue, g: &MarkedGraph) -> Value {
    match l {
        LambdaValue::Finite(x, c) => json!({"lambda": num(x), "candidate": c.as_ref().map(|c| c.print(g))}),
        LambdaValue::Infinite(c) => json!({"lambda": "infinity", "candidate": c.print(g)}),
    }
}

fn lengths_json(g: &MarkedGraph, ls: &[Scalar]) -> Value {
    Value::Object(g.edges.iter().zip(ls).map(|(e, l)| (e.id.clone(), num(l))).collect())
}

fn lengths_line(g: &MarkedGraph, ls: &[Scalar]) -> String {
    g.edges.iter().zip(ls).map(|(e, l)| format!("{}={}", e.id, l.decimal())).collect::<Vec<_>>().join(" ")
}

/// Lengths divided by the shortest positive one.
fn ratios(g: &MarkedGraph) -> Vec<(String, f64)> {
    let ls: Vec<f64> = g.lengths().iter().map(Scalar::to_f64).collect();
    let min = ls.iter().cloned().filter(|l| *l > 0.0).fold(f64::INFINITY, f64::min);
    let Some(k) = ls.iter().position(|l| *l == min) else { return vec![] };
    g.edges
        .iter()
        .zip(&ls)
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, (e, l))| (format!("{}/{}", e.id, g.edges[k].id), l / min))
        .collect()
}

/// Pairs of germs in one gate at a free vertex, anywhere in the graph.
fn illegal_turns(f: &StraightMap) -> Vec<Turn> {
    let g = &f.g;
    let gs = gates(f);
    let mut out = vec![];
    for v in (0..g.vertices.len()).filter(|&v| !g.is_nonfree(v)) {
        let germs = g.germs(v);
        for (i, &a) in germs.iter().enumerate() {
            for &b in &germs[i + 1..] {
                if a != b && gs.of(a) == gs.of(b) {
                    out.push(Turn { v, a, b, through_marker: false });
                }
            }
        }
    }
    out
}

fn parse_lens(text: &str, g: &MarkedGraph) -> CliResult<Vec<Scalar>> {
    let perr = |line, col, msg: String| CliError::Domain(ttkit::Error::Parse { line, col, msg });
    let mut ls: Vec<Option<Scalar>> = vec![None; g.edges.len()];
    for (i, raw) in text.lines().enumerate() {
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let (id, val) = t.split_once(char::is_whitespace).ok_or_else(|| perr(i + 1, 1, "expected `<edge> <expr>`".into()))?;
        let e = g.edge_index(id).ok_or_else(|| perr(i + 1, 1, format!("unknown edge {id}")))?;
        let col = raw.find(val.trim()).map_or(1, |c| c + 1);
        let x = parse_expr(val.trim(), &HashMap::new()).map_err(|er| perr(i + 1, col + er.col - 1, er.msg))?;
        ls[e] = Some(x);
    }
    ls.into_iter()
        .enumerate()
        .map(|(e, l)| l.ok_or_else(|| perr(1, 1, format!("missing length for edge {}", g.edges[e].id))))
        .collect()
}

impl Session {
    fn new(cli: &Cli) -> CliResult<Session> {
        let overrides = cli
            .set
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| CliError::Usage(format!("--set expects NAME=EXPR, got `{kv}`")))
            })
            .collect::<CliResult<_>>()?;
        Ok(Session {
            policy: parse_policy(&cli.policy)?,
            format: cli.format,
            seed: cli.seed,
            overrides,
            graphs: BTreeMap::new(),
            maps: BTreeMap::new(),
        })
    }

    fn graph(&mut self, path: &str) -> CliResult<GraphDoc> {
        let doc = parse_graph(&read_input(path)?, &self.overrides)?;
        let name = doc.graph.name.clone();
        if self.graphs.contains_key(&name) {
            return Err(CliError::Usage(format!("graph {name} loaded twice")));
        }
        self.graphs.insert(name, doc.clone());
        Ok(doc)
    }

    fn map(&mut self, m: &MapArgs) -> CliResult<StraightMap> {
        let gd = self.graph(&m.graph)?;
        let doc = parse_map(&read_input(&m.map)?, &gd, &self.overrides)?;
        let f = doc.map.clone();
        self.maps.insert(f.name.clone(), doc);
        Ok(f)
    }

    fn dispatch(&mut self, cmd: &Cmd) -> CliResult<Report> {
        match cmd {
            Cmd::Validate { graph } => {
                let g = self.graph(graph)?.graph;
                let r = g.validate();
                let mut human = format!("isValidPoint {}", r.is_valid_point);
                for f in r.flags() {
                    human.push_str(&format!("\n  {f}"));
                }
                human.push_str(&format!("\nrank {}", g.kurosh_rank()));
                let mut data = serde_json::to_value(&r).unwrap_or(Value::Null);
                data["rank"] = json!(g.kurosh_rank());
                Ok(Report { human, data })
            }
            Cmd::Lambda(m) => {
                let f = self.map(m)?;
                let l = lambda(&f);
                let human = match &l {
                    LambdaValue::Finite(x, c) => format!(
                        "lambda {}\ncandidate {}",
                        x.decimal(),
                        c.as_ref().map_or("none".to_string(), |c| c.print(&f.g))
                    ),
                    LambdaValue::Infinite(c) => format!("lambda infinity\ncandidate {}", c.print(&f.g)),
                };
                Ok(Report { human, data: lambda_json(&l, &f.g) })
            }
            Cmd::Candidates { graph, map } => {
                let (g, f) = match map {
                    Some(mp) => {
                        let f = self.map(&MapArgs { graph: graph.clone(), map: mp.clone() })?;
                        (f.g.clone(), Some(f))
                    }
                    None => (self.graph(graph)?.graph, None),
                };
                let cands = enumerate_candidates(&g);
                let table = f.as_ref().map(|f| f.comb_table());
                let mut lines = vec![];
                let mut rows = vec![];
                for c in &cands {
                    let ratio = match (&f, &table) {
                        (Some(f), Some(t)) if c.loop_.length(&g).is_positive() => Some(f.loop_ratio(t, &c.loop_)),
                        _ => None,
                    };
                    let shape = format!("{:?}", c.shape);
                    lines.push(match &ratio {
                        Some(r) => format!("{shape:<24} {:<28} {}", c.loop_.print(&g), r.decimal()),
                        None => format!("{shape:<24} {}", c.loop_.print(&g)),
                    });
                    rows.push(json!({"shape": shape, "loop": c.loop_.print(&g), "ratio": ratio.as_ref().map(num)}));
                }
                lines.push(format!("{} candidates", cands.len()));
                Ok(Report { human: lines.join("\n"), data: json!({"candidates": rows}) })
            }
            Cmd::Minimize { m, floor, tol } => {
                let f = self.map(m)?;
                let fl = floor.as_deref().map(expr).transpose()?.unwrap_or_else(Scalar::zero);
                let spec = SimplexSpec::new(&f, fl.clone());
                let r = min_in_simplex(&spec, *tol)?;
                let mut human = format!(
                    "lambda {} in [{}, {}]\nlengths {}\nboundary {}",
                    r.lambda.decimal(),
                    r.lower.decimal(),
                    r.upper.decimal(),
                    lengths_line(&f.g, &r.lengths),
                    r.on_boundary()
                );
                let mut data = json!({
                    "lambda": num(&r.lambda),
                    "lower": num(&r.lower),
                    "upper": num(&r.upper),
                    "lengths": lengths_json(&f.g, &r.lengths),
                    "on_boundary": r.on_boundary(),
                    "iterations": r.iterations,
                    "floor": num(&fl),
                });
                if floor.is_none() {
                    let of = open_floor(spec.dim());
                    let o = min_in_simplex(&SimplexSpec::new(&f, of.clone()), *tol)?;
                    human.push_str(&format!(
                        "\nopen simplex lambda {} (floor {} per edge, approximates the open infimum)",
                        o.lambda.decimal(),
                        of.decimal()
                    ));
                    data["open"] = json!({"lambda": num(&o.lambda), "floor": num(&of), "lengths": lengths_json(&f.g, &o.lengths)});
                }
                Ok(Report { human, data })
            }
            Cmd::Segment { m, a, b, samples } => {
                let f = self.map(m)?;
                let la = parse_lens(&read_input(a)?, &f.g)?;
                let lb = parse_lens(&read_input(b)?, &f.g)?;
                let spec = SimplexSpec::new(&f, Scalar::zero());
                let p = segment_profile(&spec, &la, &lb, *samples, 1e-6);
                let mut lines: Vec<String> = p
                    .ts
                    .iter()
                    .zip(&p.lambdas)
                    .map(|(t, l)| format!("t={} lambda {}", t.exact_string(), l.finite().map_or("infinity".into(), |x| x.decimal())))
                    .collect();
                lines.push(format!("quasi-convex {}", p.quasi_convex));
                lines.push(format!("derivative bound {} (excess {:.3e})", p.derivative_ok, p.derivative_excess));
                let data = json!({
                    "samples": p.ts.iter().zip(&p.lambdas).map(|(t, l)| json!({"t": num(t), "lambda": l.finite().map(num)})).collect::<Vec<_>>(),
                    "quasi_convex": p.quasi_convex,
                    "derivative_ok": p.derivative_ok,
                    "derivative_excess": p.derivative_excess,
                    "degenerate": p.degenerate.iter().map(|c| c.print(&f.g)).collect::<Vec<_>>(),
                });
                Ok(Report { human: lines.join("\n"), data })
            }
            Cmd::Jump { m, collapse, tol } => {
                let f = self.map(m)?;
                let edges = collapse
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|id| f.g.edge_index(id).ok_or_else(|| ttkit::Error::Invalid(format!("unknown edge {id}"))))
                    .collect::<ttkit::Result<Vec<usize>>>()?;
                let r = jump_analysis(&f, &Subgraph::from_edges(edges), *tol)?;
                let human = format!(
                    "collapsed {}\ncore {}\nlambda face {}\nlambda core {}\nlambda ambient {}\nverdict {:?}\nforbidden interval ok {}",
                    r.collapsed.join(","),
                    if r.core.is_empty() { "-".to_string() } else { r.core.join(",") },
                    r.lambda_face.decimal(),
                    r.lambda_core.decimal(),
                    r.lambda_ambient.decimal(),
                    r.verdict,
                    r.forbidden_ok
                );
                let data = json!({
                    "collapsed": r.collapsed,
                    "core": r.core,
                    "lambda_face": num(&r.lambda_face),
                    "lambda_core": num(&r.lambda_core),
                    "lambda_ambient": num(&r.lambda_ambient),
                    "verdict": r.verdict,
                    "forbidden_ok": r.forbidden_ok,
                });
                Ok(Report { human, data })
            }
            Cmd::Traintrack { m, budget } => {
                let f = self.map(m)?;
                let r = global_min_search(&f, &SearchOptions { budget: *budget, ..SearchOptions::default() })?;
                let g = &r.map.g;
                let rs = ratios(g);
                let mut lines = vec![
                    format!("classification {:?}", r.classification),
                    format!("lambda {}", r.lambda.decimal()),
                    format!("stack {}", r.stack.iter().map(|s| format!("{{{}}}", s.join(","))).collect::<Vec<_>>().join(" ")),
                    format!("graph {}: {}", g.name, lengths_line(g, &g.lengths())),
                    format!("ratios {}", rs.iter().map(|(n, x)| format!("{n}={x:.9}")).collect::<Vec<_>>().join(" ")),
                ];
                if let Some(j) = &r.jump {
                    lines.push(format!("jump {:?} forbidden interval ok {}", j.verdict, j.forbidden_ok));
                }
                for s in &r.trajectory {
                    lines.push(format!("  {} {} {} {}", s.kind, s.graph, s.lambda, s.note));
                }
                let data = json!({
                    "classification": r.classification,
                    "lambda": num(&r.lambda),
                    "stack": r.stack,
                    "graph": graph_json(g),
                    "map": map_json(&r.map),
                    "ratios": rs.iter().map(|(n, x)| json!({"pair": n, "ratio": x})).collect::<Vec<_>>(),
                    "certificate": r.certificate.as_ref().map(|c| json!({
                        "subgraph": c.a.names(g),
                        "gates": c.gates.print(g),
                        "one_step": c.one_step,
                        "lambda": num(&c.lambda),
                    })),
                    "jump": r.jump.as_ref().map(|j| json!({"verdict": j.verdict, "forbidden_ok": j.forbidden_ok})),
                    "trajectory": r.trajectory,
                });
                Ok(Report { human: lines.join("\n"), data })
            }
            Cmd::Spectrum { m, samples, tol } => {
                let f = self.map(m)?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                // open floor: the closed simplex reaches non-invariant faces where ratios are meaningless
                let open = |h: &StraightMap| SimplexSpec::new(h, open_floor(h.g.edges.len()));
                let mut specs = vec![open(&f)];
                let mut cur = f.clone();
                while specs.len() < *samples {
                    let turns = illegal_turns(&cur);
                    let Some(turn) = turns.choose(&mut rng) else { break };
                    cur = normalize(&simple_fold(&cur, turn, None)?.target);
                    specs.push(open(&cur));
                }
                let vals = spectrum_sample(&specs, *tol)?;
                let human = format!(
                    "{} simplices, distinct minima: {}",
                    specs.len(),
                    vals.iter().map(Scalar::decimal).collect::<Vec<_>>().join(" ")
                );
                Ok(Report { human, data: json!({"simplices": specs.len(), "minima": vals.iter().map(num).collect::<Vec<_>>()}) })
            }
            Cmd::Power { m, k } => {
                let f = self.map(m)?;
                let r = power_check(&f, *k, 1e-6)?;
                let mut lines = vec![format!("lambda {}", r.base.decimal())];
                for (k, lk, pk, rel) in &r.rows {
                    lines.push(format!("k={k} lambda(f^k) {} lambda^k {} rel {rel:.3e}", lk.decimal(), pk.decimal()));
                }
                lines.push(format!("multiplicative {}", r.ok));
                let data = json!({
                    "lambda": num(&r.base),
                    "rows": r.rows.iter().map(|(k, lk, pk, rel)| json!({"k": k, "lambda_fk": num(lk), "lambda_k": num(pk), "rel": rel})).collect::<Vec<_>>(),
                    "ok": r.ok,
                });
                Ok(Report { human: lines.join("\n"), data })
            }
            Cmd::Weakopt { m, target, trace, cap } => {
                let f = self.map(m)?;
                let target = target.as_deref().map(expr).transpose()?;
                let mut sink = match trace {
                    Some(p) => Some(std::fs::File::create(p).map_err(|e| CliError::Io { path: p.clone(), msg: e.to_string() })?),
                    None => None,
                };
                let mut io_err = None;
                let res = weakopt_with(&f, target, *cap, &mut |ev| {
                    if let Some(w) = sink.as_mut() {
                        let line = serde_json::to_string(ev).unwrap_or_default();
                        if let Err(e) = writeln!(w, "{line}") {
                            io_err.get_or_insert(e.to_string());
                        }
                    }
                });
                if let (Some(p), Some(msg)) = (trace, io_err) {
                    return Err(CliError::Io { path: p.clone(), msg });
                }
                let (h, c) = res?;
                let human = format!(
                    "lip {} -> {}\ntarget {}\nt_final {}\nd_inf {}\nbound {} (holds {})\nevents {}\n{}",
                    c.lip_start.decimal(),
                    c.lip_final.decimal(),
                    c.target.decimal(),
                    c.t_final.decimal(),
                    c.d_inf.decimal(),
                    c.bound.decimal(),
                    c.bound_holds(),
                    c.events.len(),
                    h.print().trim_end()
                );
                let data = json!({
                    "lip_start": num(&c.lip_start),
                    "lip_final": num(&c.lip_final),
                    "target": num(&c.target),
                    "t_final": num(&c.t_final),
                    "d_inf": num(&c.d_inf),
                    "bound": num(&c.bound),
                    "bound_holds": c.bound_holds(),
                    "events": c.events.len(),
                    "map": map_json(&h),
                });
                Ok(Report { human, data })
            }
            Cmd::Dot { graph, map, trajectory } => {
                let text = match (map, trajectory) {
                    (Some(mp), true) => {
                        let f = self.map(&MapArgs { graph: graph.clone(), map: mp.clone() })?;
                        dot::trajectory_dot(&global_min_search(&f, &SearchOptions::default())?.trajectory)
                    }
                    (Some(mp), false) => dot::map_dot(&self.map(&MapArgs { graph: graph.clone(), map: mp.clone() })?),
                    (None, true) => return Err(CliError::Usage("--trajectory needs a map".into())),
                    (None, false) => dot::graph_dot(&self.graph(graph)?.graph),
                };
                Ok(Report { human: text.trim_end().to_string(), data: json!({"dot": text}) })
            }
            Cmd::Fixtures { show, write } => {
                if let Some(name) = show {
                    let t = fixtures::text(name)?;
                    return Ok(Report { human: t.trim_end().to_string(), data: json!({"name": name, "text": t}) });
                }
                if let Some(dir) = write {
                    let io = |e: std::io::Error| CliError::Io { path: dir.clone(), msg: e.to_string() };
                    std::fs::create_dir_all(dir).map_err(io)?;
                    for (n, t) in fixtures::FILES {
                        std::fs::write(Path::new(dir).join(n), t).map_err(io)?;
                    }
                }
                let names: Vec<&str> = fixtures::FILES.iter().map(|(n, _)| *n).collect();
                let pairs: Vec<Value> = fixtures::PAIRS.iter().map(|(m, g)| json!({"map": m, "graph": g})).collect();
                let human = fixtures::PAIRS.iter().map(|(m, g)| format!("{g} {m}")).collect::<Vec<_>>().join("\n");
                Ok(Report { human, data: json!({"files": names, "pairs": pairs}) })
            }
        }
    }
}

fn emit_error(format: Format, e: &CliError) -> Outcome {
    let code = e.exit_code();
    match format {
        Format::Structured => Outcome { code, stdout: format!("{}\n", e.record()), stderr: String::new() },
        Format::Human => Outcome { code, stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}

pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let mut session = match Session::new(&cli) {
        Ok(s) => s,
        Err(e) => return emit_error(cli.format, &e),
    };
    let old = set_policy(session.policy);
    let res = catch_unwind(AssertUnwindSafe(|| session.dispatch(&cli.cmd)));
    set_policy(old);
    match res {
        Ok(Ok(r)) => {
            let stdout = match cli.format {
                Format::Human => format!("{}\n", r.human),
                Format::Structured => format!("{}\n", r.data),
            };
            Outcome { code: 0, stdout, stderr: String::new() }
        }
        Ok(Err(e)) => emit_error(cli.format, &e),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "internal error".into());
            emit_error(cli.format, &CliError::Domain(ttkit::Error::Invalid(format!("internal: {msg}"))))
        }
    }
}
