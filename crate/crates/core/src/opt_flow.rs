//! The optimization flow on vertex images, perturbations toward optimal and minimal maps,
//! simple folds and exit search.

mod fold;

pub use fold::{fold_lambdas, normalize, simple_fold, FoldRecord, Turn};

use crate::displacement::{lambda_with, min_in_simplex, LambdaValue, SimplexSpec};
use crate::error::{Error, Result};
use crate::graph_core::OEdge;
use crate::loops::{enumerate_candidates, Candidate};
use crate::lp::{feasible, Row, Q};
use crate::scalar::{with_policy, NumericPolicy, Scalar};
use crate::straight_maps::{
    gates, is_minimal_optimal, is_optimal, is_partial_train_track, legal_max_candidates, Dir, FracPath, Point, PttReport, Seg,
    StraightMap,
};
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

pub const EVENT_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// A non-maximal edge reached the decreasing maximum.
    JoinTension,
    /// A moving image point reached a vertex.
    ReachVertex,
    /// The target Lipschitz constant was reached.
    Target,
    /// An edge image shrank to a point.
    ImageCollapsed,
    /// A run of ever shorter tension changes, resolved in one linear step.
    Accumulation,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowEvent {
    pub index: usize,
    pub kind: EventKind,
    /// Elapsed flow time.
    pub t: String,
    pub lip: String,
    pub what: String,
}

#[derive(Clone, Debug)]
pub struct FlowCertificate {
    pub lip_start: Scalar,
    pub target: Scalar,
    pub lip_final: Scalar,
    pub t_final: Scalar,
    pub d_inf: Scalar,
    pub bound: Scalar,
    pub events: Vec<FlowEvent>,
}

impl FlowCertificate {
    pub fn bound_holds(&self) -> bool {
        self.d_inf <= self.bound
    }
}

/// Direction and speed of each moving vertex image, and the resulting length rates.
#[derive(Clone, Debug)]
pub struct Plan {
    pub moves: Vec<Option<(Dir, Scalar)>>,
    /// `d length(f(e)) / dt` per edge.
    pub rates: Vec<Scalar>,
    pub strata: Vec<Option<usize>>,
}

fn end_dirs(f: &StraightMap, e: usize) -> [(usize, Option<Dir>); 2] {
    let [o, t] = f.g.edges[e].ends;
    [(o, f.image(OEdge::fwd(e)).direction()), (t, f.image(OEdge::bwd(e)).direction())]
}

fn contribution(moves: &[Option<(Dir, Scalar)>], w: usize, d: &Option<Dir>) -> Scalar {
    match &moves[w] {
        None => Scalar::zero(),
        Some((dir, s)) if d.as_ref() == Some(dir) => -s.clone(),
        Some((_, s)) => s.clone(),
    }
}

/// Strata of one-gated vertices of `tension`, speeds in the stratum order and edge rates.
pub fn plan(f: &StraightMap, tension: &BTreeSet<usize>) -> Plan {
    let g = &f.g;
    let nv = g.vertices.len();
    let mut resid = tension.clone();
    let mut strata: Vec<Option<usize>> = vec![None; nv];
    let mut dir: Vec<Option<Dir>> = vec![None; nv];
    let mut stage: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0.. {
        let mut found = vec![];
        for v in 0..nv {
            if strata[v].is_some() || g.is_nonfree(v) {
                continue;
            }
            let ds: Vec<Option<Dir>> =
                g.germs(v).into_iter().filter(|oe| resid.contains(&oe.e)).map(|oe| f.image(oe).direction()).collect();
            if let Some(Some(d)) = ds.first() {
                if ds.iter().all(|x| x.as_ref() == Some(d)) {
                    found.push((v, d.clone()));
                }
            }
        }
        if found.is_empty() {
            break;
        }
        for (v, d) in found {
            strata[v] = Some(i);
            dir[v] = Some(d);
        }
        let used: Vec<usize> =
            resid.iter().copied().filter(|&e| g.edges[e].ends.iter().any(|&x| strata[x] == Some(i))).collect();
        for e in used {
            resid.remove(&e);
            stage.insert(e, i);
        }
    }
    // highest stratum first, ties by index descending
    let mut order: Vec<usize> = (0..nv).filter(|&v| strata[v].is_some()).collect();
    order.sort_by(|&a, &b| strata[b].cmp(&strata[a]).then(b.cmp(&a)));
    let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut responsible: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&e, &i) in &stage {
        let v = g.edges[e]
            .ends
            .iter()
            .copied()
            .filter(|&x| strata[x] == Some(i))
            .max_by_key(|x| rank[x])
            .expect("consumed edge touches its stratum");
        responsible.entry(v).or_default().push(e);
    }
    let mut moves: Vec<Option<(Dir, Scalar)>> = vec![None; nv];
    for &v in &order {
        let d = dir[v].clone().expect("stratified vertex has a direction");
        let mut s = Scalar::zero();
        for &e in responsible.get(&v).into_iter().flatten() {
            let mut k = 0i64;
            let mut other = Scalar::zero();
            for (w, wd) in end_dirs(f, e) {
                if w == v && wd.as_ref() == Some(&d) {
                    k += 1;
                } else {
                    other = other + contribution(&moves, w, &wd);
                }
            }
            let req = (g.len(e) + &other) / Scalar::int(k.max(1));
            s = s.max(req);
        }
        moves[v] = Some((d, s));
    }
    for m in moves.iter_mut() {
        if m.as_ref().is_some_and(|(_, s)| !s.is_positive()) {
            *m = None;
        }
    }
    let rates = (0..g.edges.len())
        .map(|e| {
            let p = &f.eimg[e];
            end_dirs(f, e).iter().fold(Scalar::zero(), |acc, (w, wd)| {
                let c = if p.is_degenerate() {
                    moves[*w].as_ref().map_or(Scalar::zero(), |(_, s)| s.clone())
                } else {
                    contribution(&moves, *w, wd)
                };
                acc + c
            })
        })
        .collect();
    Plan { moves, rates, strata }
}

/// Length left before the image of `v` reaches a vertex moving along `d`.
fn room(f: &StraightMap, v: usize, d: &Dir) -> Scalar {
    let g = &f.g;
    let pos = f.vimg[v].pos_on(g, d.oe).unwrap_or_else(Scalar::zero);
    (Scalar::one() - pos) * g.len(d.oe.e)
}

fn shift_path(f: &StraightMap, v: usize, d: &Dir, dist: &Scalar) -> FracPath {
    let g = &f.g;
    let a = f.vimg[v].pos_on(g, d.oe).unwrap_or_else(Scalar::zero);
    let b = &a + &(dist / g.len(d.oe.e));
    let mut segs: Vec<Seg> = d.markers.iter().map(|m| Seg::M(*m)).collect();
    segs.push(Seg::E { oe: d.oe, a, b });
    FracPath { start: f.vimg[v].clone(), segs }
}

/// Slides vertex images along the given paths and re-tightens every edge image.
pub fn apply_shifts(f: &StraightMap, shifts: &[Option<FracPath>]) -> StraightMap {
    let g = &f.g;
    let vimg: Vec<_> =
        (0..g.vertices.len()).map(|v| shifts[v].as_ref().map_or_else(|| f.vimg[v].clone(), |d| d.end(g))).collect();
    let eimg = (0..g.edges.len())
        .map(|e| {
            let [o, t] = g.edges[e].ends;
            let mut segs = vec![];
            if let Some(d) = &shifts[o] {
                segs.extend(d.reverse(g).segs);
            }
            segs.extend(f.eimg[e].segs.iter().cloned());
            if let Some(d) = &shifts[t] {
                segs.extend(d.segs.iter().cloned());
            }
            FracPath::tightened(vimg[o].clone(), segs)
        })
        .collect();
    StraightMap { vimg, eimg, src: None, ..f.clone() }
}

fn step(f: &StraightMap, moves: &[Option<(Dir, Scalar)>], tau: &Scalar) -> (StraightMap, Vec<Option<FracPath>>) {
    let shifts: Vec<Option<FracPath>> = moves
        .iter()
        .enumerate()
        .map(|(v, m)| m.as_ref().map(|(d, s)| shift_path(f, v, d, &(s * tau))))
        .collect();
    (apply_shifts(f, &shifts), shifts)
}

struct Next {
    tau: Scalar,
    kind: EventKind,
    what: String,
}

fn consider(best: &mut Option<Next>, tau: Scalar, kind: EventKind, what: impl FnOnce() -> String) {
    if tau.is_positive() && best.as_ref().is_none_or(|b| tau < b.tau) {
        *best = Some(Next { tau, kind, what: what() });
    }
}

/// Earliest event for the planned motion; `target` adds the stopping event.
fn next_event(f: &StraightMap, p: &Plan, tension: &BTreeSet<usize>, lip: &Scalar, target: Option<&Scalar>) -> (Option<Next>, Scalar) {
    let g = &f.g;
    let slope = |e: usize| &p.rates[e] / g.len(e);
    let rmax = tension.iter().map(|&e| slope(e)).reduce(Scalar::max).unwrap_or_else(Scalar::zero);
    let mut best = None;
    for e in 0..g.edges.len() {
        if !g.len(e).is_positive() {
            continue;
        }
        let r = slope(e);
        if !tension.contains(&e) && r > rmax {
            let lam = f.image_length(e) / g.len(e);
            consider(&mut best, (lip - &lam) / (&r - &rmax), EventKind::JoinTension, || g.edges[e].id.clone());
        }
        if p.rates[e].is_negative() {
            consider(&mut best, f.image_length(e) / (-p.rates[e].clone()), EventKind::ImageCollapsed, || g.edges[e].id.clone());
        }
    }
    for (v, m) in p.moves.iter().enumerate() {
        if let Some((d, s)) = m {
            consider(&mut best, room(f, v, d) / s, EventKind::ReachVertex, || g.vertices[v].id.clone());
        }
    }
    if let Some(t) = target {
        if rmax.is_negative() {
            consider(&mut best, (lip - t) / (-rmax.clone()), EventKind::Target, String::new);
        }
    }
    (best, rmax)
}

/// Runs the flow until `lip = target` (default: the displacement).
pub fn weakopt(f: &StraightMap, target: Option<Scalar>) -> Result<(StraightMap, FlowCertificate)> {
    weakopt_with(f, target, EVENT_CAP, &mut |_| {})
}

pub fn weakopt_with(
    f: &StraightMap,
    target: Option<Scalar>,
    cap: usize,
    trace: &mut dyn FnMut(&FlowEvent),
) -> Result<(StraightMap, FlowCertificate)> {
    weakopt_cands(f, &enumerate_candidates(&f.g), target, cap, trace)
}

pub fn weakopt_cands(
    f: &StraightMap,
    cands: &[Candidate],
    target: Option<Scalar>,
    cap: usize,
    trace: &mut dyn FnMut(&FlowEvent),
) -> Result<(StraightMap, FlowCertificate)> {
    let lam = match lambda_with(f, cands) {
        LambdaValue::Finite(x, _) => x,
        LambdaValue::Infinite(l) => return Err(Error::Invalid(format!("infinite displacement ({})", l.print(&f.g)))),
    };
    let target = target.unwrap_or_else(|| lam.clone());
    if target < lam {
        return Err(Error::TargetUnreachable { target: target.decimal(), lambda: lam.decimal() });
    }
    let g = &f.g;
    let lip_start = f.lip();
    let mut cur = f.clone();
    let mut tracks: Vec<FracPath> = cur.vimg.iter().map(|p| FracPath::point(p.clone())).collect();
    let mut t_total = Scalar::zero();
    let mut events: Vec<FlowEvent> = vec![];
    let mut drops: Vec<Scalar> = vec![];
    let mut recent: BTreeMap<usize, Dir> = BTreeMap::new();
    let mut retry_at = 0;
    while cur.lip() > target {
        if events.len() >= cap {
            return Err(Error::ResourceLimit(format!("{cap} flow events, lip {}", cur.lip().decimal())));
        }
        let lip = cur.lip();
        if events.len() >= retry_at && accumulating(&events, &drops) {
            let jump = jump_to_accumulation(&cur, &recent, &target, &g.volume());
            if jump.is_none() {
                retry_at = events.len() + 4;
            }
            if let Some((nf, shifts, reached)) = jump {
                for (v, s) in shifts.iter().enumerate() {
                    if let Some(s) = s {
                        tracks[v] = tracks[v].then(s);
                    }
                }
                cur = nf;
                drops.push(&lip - &cur.lip());
                recent.clear();
                let ev = FlowEvent {
                    index: events.len(),
                    kind: EventKind::Accumulation,
                    t: t_total.decimal(),
                    lip: cur.lip().decimal(),
                    what: reached.decimal(),
                };
                trace(&ev);
                events.push(ev);
                continue;
            }
        }
        let tension = cur.tension_graph().edges;
        let p = plan(&cur, &tension);
        let (next, rmax) = next_event(&cur, &p, &tension, &lip, Some(&target));
        for (v, m) in p.moves.iter().enumerate() {
            if let Some((d, _)) = m {
                recent.insert(v, d.clone());
            }
        }
        if !rmax.is_negative() {
            return Err(Error::NoProgress(format!("maximum does not decrease at lip {}", lip.decimal())));
        }
        let next = next.ok_or_else(|| Error::NoProgress("no event ahead".into()))?;
        let (nf, shifts) = step(&cur, &p.moves, &next.tau);
        for (v, s) in shifts.iter().enumerate() {
            if let Some(s) = s {
                tracks[v] = tracks[v].then(s);
            }
        }
        cur = nf;
        drops.push(&lip - &cur.lip());
        t_total = t_total + next.tau.clone();
        let ev = FlowEvent {
            index: events.len(),
            kind: next.kind,
            t: t_total.decimal(),
            lip: cur.lip().decimal(),
            what: next.what,
        };
        trace(&ev);
        events.push(ev);
    }
    let d_inf = tracks.iter().map(|p| p.length(g)).fold(Scalar::zero(), Scalar::max);
    let lip_final = cur.lip();
    let bound = g.volume() * (lip_start.clone() - lip_final.clone()).max(Scalar::zero());
    cur.name = f.name.clone();
    Ok((cur, FlowCertificate { lip_start, target, lip_final, t_final: t_total, d_inf, bound, events }))
}

/// Four flow events in a row, each dropping lip by less than the one two steps before.
fn accumulating(events: &[FlowEvent], drops: &[Scalar]) -> bool {
    let n = events.len();
    n >= 4
        && events[n - 4..]
            .iter()
            .all(|e| matches!(e.kind, EventKind::JoinTension | EventKind::ReachVertex | EventKind::ImageCollapsed))
        && (n - 2..n).all(|i| drops[i] < drops[i - 2])
}

/// Linear constraints on slides `u_v` (along `dirs`) keeping every stretch at most `mu`.
fn jump_rows(f: &StraightMap, vars: &[(usize, Dir)], mu: &Q, cap: &Q) -> Vec<Row> {
    let g = &f.g;
    let q = |x: &Scalar| x.rational().cloned().expect("exact scalar");
    let n = vars.len();
    let mut rows = vec![];
    for e in 0..g.edges.len() {
        let len = q(g.len(e));
        if !len.is_positive() {
            continue;
        }
        let img = &f.eimg[e];
        let mut coeffs = vec![Q::zero(); n];
        for (w, wd) in end_dirs(f, e) {
            for i in (0..n).filter(|&i| vars[i].0 == w) {
                let agree = !img.is_degenerate() && wd.as_ref() == Some(&vars[i].1);
                coeffs[i] += if agree { -Q::one() } else { Q::one() };
            }
        }
        let l = q(&f.image_length(e));
        rows.push(Row { coeffs: coeffs.clone(), rhs: mu * &len - &l });
        rows.push(Row { coeffs: coeffs.iter().map(|c| -c).collect(), rhs: l });
    }
    for (i, (v, d)) in vars.iter().enumerate() {
        let mut coeffs = vec![Q::zero(); n];
        coeffs[i] = Q::one();
        let r = q(&room(f, *v, d));
        rows.push(Row { coeffs, rhs: if r < *cap { r } else { cap.clone() } });
    }
    rows
}

/// The rational with the smallest denominator in `[a, b]`, for `0 <= a < b`.
fn simplest_between(a: &Q, b: &Q) -> Q {
    let fl = a.floor();
    if fl == *a || fl.clone() + Q::one() <= *b {
        return if fl == *a { fl } else { fl + Q::one() };
    }
    let (x, y) = ((b - &fl).recip(), (a - &fl).recip());
    fl + simplest_between(&x, &y).recip()
}

/// Slides the vertices of `dirs` at once to the lowest reachable maximal stretch, when the
/// linearized constraints admit a drop. Exact policy only.
fn jump_to_accumulation(
    f: &StraightMap,
    dirs: &BTreeMap<usize, Dir>,
    target: &Scalar,
    vol: &Scalar,
) -> Option<(StraightMap, Vec<Option<FracPath>>, Scalar)> {
    if dirs.is_empty() || f.lip().rational().is_none() || target.rational().is_none() {
        return None;
    }
    // an image inside an edge may slide either way; its net slide is the difference
    let mut vars: Vec<(usize, Dir)> = vec![];
    for (v, d) in dirs {
        vars.push((*v, d.clone()));
        if matches!(f.vimg[*v], Point::In(..)) {
            vars.push((*v, Dir { markers: vec![], oe: d.oe.inv() }));
        }
    }
    let lip = f.lip().rational()?.clone();
    let volq = vol.rational()?.clone();
    let solve = |mu: &Q| feasible(vars.len(), &jump_rows(f, &vars, mu, &(&volq * (&lip - mu))), &[]);
    let mut lo = target.rational()?.clone();
    let mut best = solve(&lo).map(|u| (lo.clone(), u));
    if best.is_none() {
        let mut hi = lip.clone();
        let two = Q::from_integer(2.into());
        for _ in 0..40 {
            let mid = (&lo + &hi) / &two;
            match solve(&mid) {
                Some(u) => {
                    hi = mid.clone();
                    best = Some((mid, u));
                }
                None => lo = mid,
            }
        }
        // limits of the flow tend to have small denominators; bisection alone stops just above
        if best.is_some() {
            let mu = simplest_between(&lo, &hi);
            if let Some(u) = solve(&mu) {
                best = Some((mu, u));
            }
        }
    }
    let (mu, u) = best?;
    let shifts: Vec<Option<FracPath>> = (0..f.g.vertices.len())
        .map(|v| {
            let mine: Vec<usize> = (0..vars.len()).filter(|&i| vars[i].0 == v).collect();
            let i = *mine.first()?;
            let net = mine[1..].iter().fold(u[i].clone(), |acc, &j| acc - &u[j]);
            let (d, x) = if net.is_negative() { (&vars[mine[1]].1, -net) } else { (&vars[i].1, net) };
            let x = Scalar::from_rational(x);
            x.is_positive().then(|| shift_path(f, v, d, &x))
        })
        .collect();
    let nf = apply_shifts(f, &shifts);
    let mu = Scalar::from_rational(mu);
    (nf.lip() <= mu && nf.lip() < f.lip()).then_some((nf, shifts, mu))
}

/// Perturbs one-gated tension vertices of a weakly optimal map by at most `eps` in
/// total until the map is optimal.
pub fn opt(f: &StraightMap, eps: &Scalar) -> Result<StraightMap> {
    let lip = f.lip();
    let mut cur = f.clone();
    let mut left = eps.clone();
    for _ in 0..64 {
        if is_optimal(&cur) {
            return Ok(cur);
        }
        let tension = cur.tension_graph().edges;
        let p = plan(&cur, &tension);
        let (next, rmax) = next_event(&cur, &p, &tension, &lip, None);
        if rmax.is_negative() {
            return Err(Error::Invalid("opt needs a weakly optimal map".into()));
        }
        let vmax = p.moves.iter().flatten().map(|(_, s)| s.clone()).fold(Scalar::zero(), Scalar::max);
        if !vmax.is_positive() {
            return Err(Error::NoProgress("one-gated vertices cannot move".into()));
        }
        let mut tau = left.half() / (vmax.clone() + Scalar::one());
        if let Some(n) = next {
            tau = tau.min(n.tau.half());
        }
        let (nf, _) = step(&cur, &p.moves, &tau);
        left = left - &(&vmax * &tau);
        cur = nf;
        if cur.lip() != lip {
            return Err(Error::NoProgress(format!("lip moved from {} to {}", lip.decimal(), cur.lip().decimal())));
        }
    }
    Err(Error::NoProgress(format!("map not optimal after 64 perturbations: {}", cur.print())))
}

/// Moves images of the vertices α-legally seen from an endpoint of a tension edge that lies on
/// no legal maximal candidate, shrinking the tension graph. Minimal inputs come back unchanged.
pub fn reduce_tension_graph(f: &StraightMap, cands: &[Candidate], eps: &Scalar) -> Result<StraightMap> {
    if is_minimal_optimal(f, cands) {
        return Ok(f.clone());
    }
    if !is_optimal(f) {
        return Err(Error::Invalid("reduce_tension_graph needs an optimal map".into()));
    }
    let lip = f.lip();
    let tension = f.tension_graph().edges;
    let table = f.comb_table();
    let mut covered = BTreeSet::new();
    for c in legal_max_candidates(f, cands) {
        if f.loop_ratio(&table, &c.loop_) == lip {
            covered.extend(c.loop_.support());
        }
    }
    for &e in tension.difference(&covered) {
        for alpha in [OEdge::fwd(e), OEdge::bwd(e)] {
            let Some(moves) = alpha_moves(f, &tension, alpha) else { continue };
            let mut dist = eps.clone();
            for (v, d) in &moves {
                dist = dist.min(room(f, *v, d).half());
            }
            for _ in 0..40 {
                let shifts: Vec<Option<FracPath>> = (0..f.g.vertices.len())
                    .map(|v| moves.iter().find(|(w, _)| *w == v).map(|(_, d)| shift_path(f, v, d, &dist)))
                    .collect();
                let nf = apply_shifts(f, &shifts);
                let nt = nf.tension_graph().edges;
                if nf.lip() == lip && nt.is_subset(&tension) && nt.len() < tension.len() {
                    return if is_optimal(&nf) { Ok(nf) } else { opt(&nf, &dist) };
                }
                dist = dist.half();
            }
        }
    }
    Err(Error::NoProgress("no α-legal move shrinks the tension graph".into()))
}

/// Directions for the endpoint `x` of `alpha` and every vertex α-legally seen from it, or
/// `None` when `x` admits an α-legal loop or a non-free vertex is reached.
fn alpha_moves(f: &StraightMap, tension: &BTreeSet<usize>, alpha: OEdge) -> Option<Vec<(usize, Dir)>> {
    let g = &f.g;
    let gs = gates(f);
    let x = g.terminus(alpha);
    let back = alpha.inv();
    if g.is_nonfree(x) {
        return None;
    }
    let mut dirs: BTreeMap<usize, Dir> = BTreeMap::new();
    dirs.insert(x, f.image(back).direction()?);
    let mut seen: BTreeSet<(usize, OEdge)> = BTreeSet::new();
    let mut queue: Vec<OEdge> =
        g.germs(x).into_iter().filter(|h| tension.contains(&h.e) && gs.of(*h) != gs.of(back)).collect();
    while let Some(h) = queue.pop() {
        let y = g.terminus(h);
        let arr = h.inv();
        if !seen.insert((y, arr)) {
            continue;
        }
        if y == g.origin(alpha) && y != x || g.is_nonfree(y) {
            return None;
        }
        if y == x && gs.of(arr) != gs.of(back) {
            return None;
        }
        let d = f.image(arr).direction()?;
        if let Some(old) = dirs.get(&y) {
            if *old != d {
                return None;
            }
        } else {
            dirs.insert(y, d);
        }
        for k in g.germs(y) {
            if tension.contains(&k.e) && k != arr && gs.of(k) != gs.of(arr) {
                queue.push(k);
            }
        }
    }
    Some(dirs.into_iter().collect())
}

/// Partial train track test with stretches compared at relative tolerance `tol`.
pub fn ptt_within(f: &StraightMap, tol: f64) -> Result<Option<PttReport>> {
    with_policy(NumericPolicy::Float(tol), || {
        let ls: Vec<Scalar> = f.g.lengths().iter().map(Scalar::under_policy).collect();
        is_partial_train_track(&f.with_lengths(&ls))
    })
}

#[derive(Clone, Debug)]
pub struct ExitCertificate {
    pub folds: Vec<FoldRecord>,
    pub lambda_before: Scalar,
    pub lambda_after: Scalar,
    /// Map on the larger simplex at its minimizing witness.
    pub map: StraightMap,
}

/// Folds directed by optimal maps until one enters a simplex with strictly smaller minimum.
pub fn exit_search(f: &StraightMap, budget: usize, tol: f64) -> Result<Option<ExitCertificate>> {
    if ptt_within(f, 1e-6)?.is_some() {
        return Ok(None);
    }
    let cands = enumerate_candidates(&f.g);
    let lam0 = lambda_with(f, &cands).finite().cloned().ok_or_else(|| Error::Invalid("infinite displacement".into()))?;
    let eps = Scalar::ratio(1, 1000);
    let mut cur = f.clone();
    let mut folds = vec![];
    let mut tried: BTreeSet<String> = BTreeSet::new();
    while folds.len() < budget {
        let cands = enumerate_candidates(&cur.g);
        if !is_optimal(&cur) {
            let (w, _) = weakopt_cands(&cur, &cands, None, EVENT_CAP, &mut |_| {})?;
            cur = opt(&w, &eps)?;
        }
        let turns = foldable_turns(&cur);
        let key = cur.print();
        let fresh: Vec<&Turn> = turns.iter().filter(|t| !tried.contains(&format!("{key}{t:?}"))).collect();
        let Some(turn) = fresh
            .iter()
            .find(|t| cur.g.valence(t.v) >= 4)
            .or_else(|| fresh.first())
            .map(|t| (*t).clone())
        else {
            return Ok(None);
        };
        tried.insert(format!("{key}{turn:?}"));
        let wide = cur.g.valence(turn.v) >= 4;
        let rec = simple_fold(&cur, &turn, None)?;
        let next = rec.target.clone();
        folds.push(rec);
        if wide {
            let spec = SimplexSpec::new(&next, Scalar::zero());
            let m = min_in_simplex(&spec, tol)?;
            if m.upper.to_f64() < lam0.to_f64() - tol {
                let map = next.with_lengths(&m.lengths);
                return Ok(Some(ExitCertificate { folds, lambda_before: lam0, lambda_after: m.lambda, map }));
            }
        }
        cur = normalize(&next);
    }
    Err(Error::BudgetExhausted(budget))
}

/// Illegal turns between tension germs at free vertices.
pub fn foldable_turns(f: &StraightMap) -> Vec<Turn> {
    let g = &f.g;
    let t = f.tension_graph();
    let gs = gates(f);
    let mut out = vec![];
    for v in t.vertices(g) {
        if g.is_nonfree(v) {
            continue;
        }
        let germs: Vec<OEdge> = g.germs(v).into_iter().filter(|h| t.edges.contains(&h.e)).collect();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph_core::Subgraph;
    use crate::straight_maps::{is_weakly_optimal, Point};

    #[test]
    fn simplest_rationals() {
        let q = |p: i64, r: i64| Q::new(p.into(), r.into());
        assert_eq!(simplest_between(&q(1, 3), &q(1, 2)), q(1, 2));
        assert_eq!(simplest_between(&(q(47, 23) - q(1, 1 << 40)), &(q(47, 23) + q(1, 1 << 40))), q(47, 23));
        assert_eq!(simplest_between(&q(2, 1), &q(5, 2)), q(2, 1));
        assert_eq!(simplest_between(&q(13, 10), &q(14, 10)), q(4, 3));
    }

    #[test]
    fn weakly_optimal_input_is_fixed() {
        let f = fixtures::phifib();
        let (g, cert) = weakopt(&f, None).unwrap();
        assert_eq!(g, f);
        assert!(cert.events.is_empty());
        assert_eq!(cert.d_inf, Scalar::zero());
    }

    #[test]
    fn flow_reaches_the_displacement() {
        // circle with two vertices, rotation sending u halfway along e
        let mut g = crate::graph_core::MarkedGraph::new("c2");
        let u = g.add_vertex("u", crate::graph_core::VertexKind::Free);
        let w = g.add_vertex("w", crate::graph_core::VertexKind::Free);
        let e = g.add_edge("e", u, w, Scalar::one());
        let h = g.add_edge("h", w, u, Scalar::one());
        let vimg = vec![Point::In(e, Scalar::ratio(1, 2)), Point::At(u)];
        let eimg = vec![
            FracPath { start: vimg[0].clone(), segs: vec![Seg::E { oe: OEdge::fwd(e), a: Scalar::ratio(1, 2), b: Scalar::one() }, Seg::full(OEdge::fwd(h))] },
            FracPath { start: Point::At(u), segs: vec![Seg::E { oe: OEdge::fwd(e), a: Scalar::zero(), b: Scalar::ratio(1, 2) }] },
        ];
        let f = StraightMap::new("rot", g, vimg, eimg).unwrap();
        assert_eq!(f.lip(), Scalar::ratio(3, 2));
        let (r, cert) = weakopt(&f, None).unwrap();
        assert_eq!(r.lip(), Scalar::one());
        assert!(cert.bound_holds(), "{} > {}", cert.d_inf, cert.bound);
        assert!(!cert.events.is_empty());
    }

    #[test]
    fn target_below_displacement_is_refused() {
        let f = fixtures::phifib();
        assert!(matches!(weakopt(&f, Some(Scalar::one())), Err(Error::TargetUnreachable { .. })));
    }

    #[test]
    fn theta_perturbed_flows_back() {
        with_policy(NumericPolicy::Float(1e-9), || {
            let f = fixtures::theta314("0");
            let cands = enumerate_candidates(&f.g);
            // drag f(P) a further 1/10 along e2
            let d = f.image(OEdge::fwd(1)).direction().unwrap();
            let shifts: Vec<Option<FracPath>> = vec![Some(shift_path(&f, 0, &d, &Scalar::literal_f64(0.1))), None];
            let g = apply_shifts(&f, &shifts);
            let (r, cert) = weakopt_cands(&g, &cands, None, EVENT_CAP, &mut |_| {}).unwrap();
            assert!((r.lip().to_f64() - (1.0 + 2f64.sqrt())).abs() < 1e-9);
            assert!(cert.d_inf.to_f64() <= cert.bound.to_f64() + 1e-9);
            assert!(!cert.events.is_empty() && cert.d_inf.is_positive());
        });
    }

    #[test]
    fn fig322_reduces_to_the_lateral_loops() {
        let f = fixtures::fig322();
        let cands = enumerate_candidates(&f.g);
        let r = reduce_tension_graph(&f, &cands, &Scalar::ratio(1, 10)).unwrap();
        let before = f.tension_graph().edges;
        let after = r.tension_graph().edges;
        assert!(after.is_subset(&before) && after.len() < before.len());
        assert_eq!(r.lip(), f.lip());
        assert!(is_optimal(&r) && is_weakly_optimal(&r, &cands));
        let lateral = Subgraph::from_edges(["Lt", "Rt"].iter().map(|e| f.g.edge_index(e).unwrap()));
        let fixed = reduce_tension_graph(&r, &cands, &Scalar::ratio(1, 10)).unwrap();
        assert_eq!(fixed.tension_graph(), lateral);
        assert!(is_minimal_optimal(&fixed, &cands));
    }

    #[test]
    fn minimal_input_is_unchanged() {
        let f = fixtures::phifib();
        let cands = enumerate_candidates(&f.g);
        assert_eq!(reduce_tension_graph(&f, &cands, &Scalar::ratio(1, 10)).unwrap(), f);
    }
}
