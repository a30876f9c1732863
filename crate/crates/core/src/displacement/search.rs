//! Boundary jumps, regeneration and the global search for a train track point.

use super::{lambda, min_in_simplex, open_floor, LambdaValue, MinResult, SimplexSpec};
use crate::error::{Error, Result};
use crate::graph_core::{core, MarkedGraph, Subgraph};
use crate::opt_flow::{exit_search, opt, ptt_within, weakopt};
use crate::scalar::Scalar;
use crate::straight_maps::{quotient_map, restriction, PttReport, QuotientResult, StraightMap};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JumpVerdict {
    Jumped,
    NotJumped,
}

#[derive(Clone, Debug)]
pub struct JumpReport {
    pub collapsed: Vec<String>,
    pub core: Vec<String>,
    /// Displacement of the quotient point.
    pub lambda_face: Scalar,
    /// Minimum of the restriction over the core's open simplex (1 for a forest).
    pub lambda_core: Scalar,
    /// Minimum over the open ambient simplex, approximated from inside.
    pub lambda_ambient: Scalar,
    pub verdict: JumpVerdict,
    /// The face value avoids the open interval between the core and ambient minima.
    pub forbidden_ok: bool,
}

fn finite(v: LambdaValue, what: &str) -> Result<Scalar> {
    v.finite().cloned().ok_or_else(|| Error::Invalid(format!("{what} has infinite displacement")))
}

fn core_minimum(f: &StraightMap, c: &Subgraph, tol: f64) -> Result<(Scalar, Option<StraightMap>)> {
    if !c.is_nontrivial(&f.g) {
        return Ok((Scalar::one(), None));
    }
    let r = restriction(f, c)?;
    let n = r.map.g.edges.len();
    let m = min_in_simplex(&SimplexSpec::new(&r.map, open_floor(n)), tol)?;
    Ok((m.lambda, Some(r.map)))
}

/// Compares the quotient point of `f` with the restriction to the core of `a`.
pub fn jump_analysis(f: &StraightMap, a: &Subgraph, tol: f64) -> Result<JumpReport> {
    let q = match quotient_map(f, a) {
        QuotientResult::Finite { map, .. } => map,
        QuotientResult::Infinity(why) => return Err(Error::NotInvariant(why)),
    };
    let lambda_face = finite(lambda(&q), "the face point")?;
    let c = core(&f.g, a);
    let (lambda_core, _) = core_minimum(f, &c, tol)?;
    let n = f.g.edges.len();
    let amb = min_in_simplex(&SimplexSpec::new(f, open_floor(n)), tol)?;
    let lambda_ambient = amb.lambda;
    let t = Scalar::literal_f64(tol);
    let verdict =
        if lambda_face >= &lambda_core - &t { JumpVerdict::NotJumped } else { JumpVerdict::Jumped };
    // Both minima come from inside the open simplex, so they sit above the infimum by about the floor.
    let slack = Scalar::literal_f64(tol.max(1e-5 * lambda_ambient.to_f64()));
    let inside = &lambda_core + &slack < lambda_face && lambda_face < &lambda_ambient - &slack;
    Ok(JumpReport {
        collapsed: a.names(&f.g),
        core: c.names(&f.g),
        lambda_face,
        lambda_core,
        lambda_ambient,
        verdict,
        forbidden_ok: !inside,
    })
}

#[derive(Clone, Debug)]
pub struct ConstancyReport {
    /// A jump happens at the collapsed end of the segment.
    pub applicable: bool,
    pub lambda_face: Scalar,
    /// Restriction displacement at the core lengths of the far endpoint.
    pub lambda_core: Scalar,
    /// `(t, lambda(X_t))` for the grid.
    pub values: Vec<(Scalar, Scalar)>,
    /// Largest grid `t` up to which the profile equals `lambda_core` within tolerance.
    pub radius: Option<Scalar>,
}

/// Profile of `X_t = (1-t) X_inf + t X` where `X` carries the lengths of `f` and `X_inf`
/// zeroes the edges of `a`.
pub fn constancy_before_jump(f: &StraightMap, a: &Subgraph, ts: &[Scalar], tol: f64) -> Result<ConstancyReport> {
    let q = match quotient_map(f, a) {
        QuotientResult::Finite { map, .. } => map,
        QuotientResult::Infinity(why) => return Err(Error::NotInvariant(why)),
    };
    let lambda_face = finite(lambda(&q), "the face point")?;
    let c = core(&f.g, a);
    let lambda_core = if c.is_nontrivial(&f.g) {
        finite(lambda(&restriction(f, &c)?.map), "the core")?
    } else {
        Scalar::one()
    };
    let t = Scalar::literal_f64(tol);
    let applicable = lambda_core > &lambda_face + &t;
    let mut grid: Vec<Scalar> = ts.iter().filter(|x| x.is_positive()).cloned().collect();
    grid.sort_by(|x, y| x.partial_cmp(y).expect("ordered grid"));
    let ls = f.g.lengths();
    let mut values = vec![];
    for s in &grid {
        let xt: Vec<Scalar> =
            ls.iter().enumerate().map(|(e, l)| if a.edges.contains(&e) { l * s } else { l.clone() }).collect();
        values.push((s.clone(), finite(lambda(&f.with_lengths(&xt)), "the segment point")?));
    }
    let radius = if applicable {
        values.iter().take_while(|(_, l)| (l - &lambda_core).abs() <= t).last().map(|(s, _)| s.clone())
    } else {
        None
    };
    Ok(ConstancyReport { applicable, lambda_face, lambda_core, values, radius })
}

#[derive(Clone, Debug)]
pub struct Regenerated {
    pub map: StraightMap,
    pub lip: Scalar,
    pub lambda_face: Scalar,
    pub lip_insert: Scalar,
    pub delta: Scalar,
}

/// Re-inflates the collapsed part `a` of `f` with the lengths of `insert` scaled to volume `delta`
/// (relative to the kept part) and relaxes the result with the flow.
pub fn regenerate(f: &StraightMap, a: &Subgraph, insert: &MarkedGraph, delta: &Scalar) -> Result<Regenerated> {
    let g = &f.g;
    let mut ins = vec![];
    for &e in &a.edges {
        let id = &g.edges[e].id;
        let k = insert.edge_index(id).ok_or_else(|| Error::AttachmentMismatch(format!("insert lacks edge {id}")))?;
        let [o, t] = insert.edges[k].ends;
        let [go, gt] = g.edges[e].ends;
        if insert.vertices[o].id != g.vertices[go].id || insert.vertices[t].id != g.vertices[gt].id {
            return Err(Error::AttachmentMismatch(format!("edge {id} is attached differently")));
        }
        ins.push((e, insert.len(k).clone()));
    }
    if ins.len() != insert.edges.len() {
        return Err(Error::AttachmentMismatch("insert has edges outside the collapsed part".into()));
    }
    let q = match quotient_map(f, a) {
        QuotientResult::Finite { map, .. } => map,
        QuotientResult::Infinity(why) => return Err(Error::NotInvariant(why)),
    };
    let lambda_face = finite(lambda(&q), "the face point")?;
    let kept: Scalar = (0..g.edges.len()).filter(|e| !a.edges.contains(e)).map(|e| g.len(e).clone()).sum();
    let vol_ins: Scalar = ins.iter().map(|(_, l)| l.clone()).sum();
    let mut ls = g.lengths();
    for (e, l) in &ins {
        ls[*e] = l / &vol_ins * delta * &kept;
    }
    let z = f.with_lengths(&ls);
    let lip_insert = restriction(&z, &core(g, a)).map(|r| r.map.lip()).unwrap_or_else(|_| Scalar::one());
    let (map, _) = weakopt(&z, None)?;
    Ok(Regenerated { lip: map.lip(), map, lambda_face, lip_insert, delta: delta.clone() })
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Bound on simplex changes and on folds per exit search.
    pub budget: usize,
    pub tol: f64,
    /// Relative tolerance for stretch comparisons in the train track test.
    pub ptt_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 64, tol: 1e-9, ptt_tol: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    InteriorTrainTrack,
    TrainTrackAtInfinity,
    BudgetExhausted,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchStep {
    pub kind: String,
    pub graph: String,
    pub lambda: String,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Map at the final point, on the quotient of every collapse in `stack`.
    pub map: StraightMap,
    /// Edge names of each collapse (or restriction) taken, outermost first.
    pub stack: Vec<Vec<String>>,
    pub lambda: Scalar,
    pub classification: Classification,
    pub certificate: Option<PttReport>,
    pub jump: Option<JumpReport>,
    pub trajectory: Vec<SearchStep>,
}

fn log(traj: &mut Vec<SearchStep>, kind: &str, f: &StraightMap, lam: &Scalar, note: String) {
    traj.push(SearchStep { kind: kind.into(), graph: f.g.name.clone(), lambda: lam.decimal(), note });
}

/// Replaces zero lengths by a tiny positive value so stretches stay defined.
fn lift(m: &MinResult) -> Vec<Scalar> {
    let tiny = Scalar::ratio(1, 1_000_000_000_000);
    m.lengths.iter().map(|l| if l.is_positive() { l.clone() } else { tiny.clone() }).collect()
}

/// Minimizes, collapses and folds until a partial train track point is found.
pub fn global_min_search(f0: &StraightMap, opts: &SearchOptions) -> Result<SearchResult> {
    let mut cur = f0.clone();
    let mut stack: Vec<Vec<String>> = vec![];
    let mut traj = vec![];
    let mut jump = None;
    let mut last = Scalar::zero();
    let eps = Scalar::ratio(1, 1000);
    for _ in 0..opts.budget {
        let n = cur.g.edges.len();
        let mut m = min_in_simplex(&SimplexSpec::new(&cur, Scalar::zero()), opts.tol)?;
        last = m.lambda.clone();
        log(&mut traj, "minimize", &cur, &m.lambda, format!("boundary {}", m.on_boundary()));
        let floor = Subgraph::from_edges((0..n).filter(|&e| m.at_floor[e]));
        if !floor.is_empty() && floor.edges.len() < n {
            let at = cur.with_lengths(&lift(&m));
            match quotient_map(&at, &floor) {
                QuotientResult::Finite { map, .. } => {
                    let c = core(&cur.g, &floor);
                    if !c.is_nontrivial(&cur.g) {
                        log(&mut traj, "collapse-forest", &map, &m.lambda, floor.names(&cur.g).join(","));
                        cur = map;
                        continue;
                    }
                    let jr = jump_analysis(&at, &floor, opts.tol)?;
                    if jr.verdict == JumpVerdict::Jumped {
                        let r = restriction(&at, &c)?;
                        log(&mut traj, "restrict", &r.map, &jr.lambda_core, c.names(&cur.g).join(","));
                        stack.push(c.names(&cur.g));
                        cur = r.map;
                    } else {
                        log(&mut traj, "collapse", &map, &jr.lambda_face, floor.names(&cur.g).join(","));
                        stack.push(floor.names(&cur.g));
                        cur = map;
                    }
                    jump = Some(jr);
                    continue;
                }
                QuotientResult::Infinity(why) => {
                    m = min_in_simplex(&SimplexSpec::new(&cur, open_floor(n)), opts.tol)?;
                    log(&mut traj, "open-floor", &cur, &m.lambda, why);
                }
            }
        }
        let w = cur.with_lengths(&m.lengths);
        let (w, _) = weakopt(&w, None)?;
        let w = if crate::straight_maps::is_optimal(&w) { w } else { opt(&w, &eps)? };
        if let Some(rep) = ptt_within(&w, opts.ptt_tol)? {
            let classification =
                if stack.is_empty() { Classification::InteriorTrainTrack } else { Classification::TrainTrackAtInfinity };
            log(&mut traj, "train-track", &w, &m.lambda, String::new());
            return Ok(SearchResult {
                map: w,
                stack,
                lambda: m.lambda,
                classification,
                certificate: Some(rep),
                jump,
                trajectory: traj,
            });
        }
        match exit_search(&w, opts.budget, opts.tol) {
            Ok(Some(cert)) => {
                log(&mut traj, "exit", &cert.map, &cert.lambda_after, format!("{} folds", cert.folds.len()));
                cur = cert.map;
            }
            Ok(None) | Err(Error::BudgetExhausted(_)) => {
                log(&mut traj, "stuck", &w, &m.lambda, "no exit found".into());
                cur = w;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SearchResult {
        map: cur,
        stack,
        lambda: last,
        classification: Classification::BudgetExhausted,
        certificate: None,
        jump,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scalar::golden_approx;

    fn phi() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    fn sub(f: &StraightMap, names: &[&str]) -> Subgraph {
        Subgraph::from_edges(names.iter().map(|e| f.g.edge_index(e).unwrap()))
    }

    #[test]
    fn golden_rose_is_interior() {
        let r = global_min_search(&fixtures::phifib(), &SearchOptions::default()).unwrap();
        assert_eq!(r.classification, Classification::InteriorTrainTrack);
        assert!((r.lambda.to_f64() - phi()).abs() < 1e-9);
        assert!(r.stack.is_empty());
    }

    #[test]
    fn twisted_rose_collapses_the_golden_part() {
        let f = fixtures::exjumpseg();
        let r = global_min_search(&f, &SearchOptions::default()).unwrap();
        assert_eq!(r.classification, Classification::TrainTrackAtInfinity, "{:?}", r.trajectory);
        assert!((r.lambda.to_f64() - phi()).abs() < 1e-9);
        assert_eq!(r.stack, vec![vec!["a0".to_string(), "b0".to_string()]]);
        let j = r.jump.unwrap();
        assert_eq!(j.verdict, JumpVerdict::NotJumped);
        assert!(j.forbidden_ok);
    }

    #[test]
    fn jump_reports() {
        let f = fixtures::exjumpseg();
        let a = sub(&f, &["a0", "b0"]);
        let j = jump_analysis(&f, &a, 1e-9).unwrap();
        assert!((j.lambda_face.to_f64() - 2.0).abs() < 1e-12);
        assert!((j.lambda_core.to_f64() - phi()).abs() < 1e-9);
        assert_eq!(j.verdict, JumpVerdict::NotJumped);
        assert!(j.forbidden_ok);
        let g = Scalar::from_rational(golden_approx());
        let lens: Vec<Scalar> = f.g.lengths().iter().enumerate().map(|(e, l)| if e == 2 { g.clone() } else { l.clone() }).collect();
        let j = jump_analysis(&f.with_lengths(&lens), &a, 1e-9).unwrap();
        assert!((j.lambda_face.to_f64() - phi()).abs() < 1e-9);
        assert_eq!(j.verdict, JumpVerdict::NotJumped);
        let p = fixtures::phifib();
        assert!(matches!(jump_analysis(&p, &sub(&p, &["a"]), 1e-9), Err(Error::NotInvariant(_))));
    }

    #[test]
    fn constancy_needs_a_jump() {
        let f = fixtures::exjumpseg();
        let ts: Vec<Scalar> = (1..=5).map(|k| Scalar::ratio(1, 10i64.pow(k))).collect();
        let r = constancy_before_jump(&f, &sub(&f, &["a0", "b0"]), &ts, 1e-9).unwrap();
        assert!(!r.applicable && r.radius.is_none());
    }

    #[test]
    fn regeneration_approaches_the_face() {
        let f = fixtures::exjumpseg();
        let a = sub(&f, &["a0", "b0"]);
        let g = Scalar::from_rational(golden_approx());
        let mut lens = f.g.lengths();
        lens[2] = g.clone();
        lens[0] = g;
        let x = f.with_lengths(&lens);
        let mut insert = MarkedGraph::new("ins");
        let v = insert.add_vertex("v", crate::graph_core::VertexKind::Free);
        insert.add_edge("a0", v, v, Scalar::from_rational(golden_approx()));
        insert.add_edge("b0", v, v, Scalar::one());
        let coarse = regenerate(&x, &a, &insert, &Scalar::ratio(1, 100)).unwrap();
        let fine = regenerate(&x, &a, &insert, &Scalar::ratio(1, 10_000)).unwrap();
        assert!(fine.lip <= coarse.lip);
        let r = regenerate(&x, &a, &insert, &Scalar::ratio(1, 1000)).unwrap();
        assert!(r.lip.to_f64() <= phi() + 1e-2, "{}", r.lip.decimal());
        let mut bad = insert.clone();
        bad.edges[1].id = "c".into();
        assert!(matches!(regenerate(&x, &a, &bad, &Scalar::ratio(1, 100)), Err(Error::AttachmentMismatch(_))));
    }
}
