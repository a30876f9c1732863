//! Displacement over simplices: candidate maxima, exact minimization, segments, boundary jumps
//! and the global search.

mod search;

pub use search::{
    constancy_before_jump, global_min_search, jump_analysis, regenerate, Classification, ConstancyReport, JumpReport,
    JumpVerdict, Regenerated, SearchOptions, SearchResult, SearchStep,
};

use crate::error::{Error, Result};
use crate::graph_core::MarkedGraph;
use crate::loops::{enumerate_candidates, pair, Candidate, Loop};
use crate::lp::{feasible, Row, Q};
use crate::scalar::{policy, NumericPolicy, Scalar};
use crate::straight_maps::StraightMap;
use num_traits::{Signed, Zero};

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaValue {
    /// Maximal ratio and a realizing candidate (`None` when no loop has positive length).
    Finite(Scalar, Option<Loop>),
    /// A collapsed loop whose image is not collapsed.
    Infinite(Loop),
}

impl LambdaValue {
    pub fn finite(&self) -> Option<&Scalar> {
        match self {
            LambdaValue::Finite(x, _) => Some(x),
            LambdaValue::Infinite(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.finite().map_or(f64::INFINITY, Scalar::to_f64)
    }

    /// `self <= o` with infinity on top.
    pub fn le(&self, o: &LambdaValue) -> bool {
        match (self.finite(), o.finite()) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a <= b,
        }
    }
}

/// Occurrence vectors of a candidate and its image.
#[derive(Clone, Debug)]
pub struct CandidateData {
    pub loop_: Loop,
    pub occ: Vec<u32>,
    pub img_occ: Vec<u32>,
}

fn ratio_max<'a>(ls: &[Scalar], data: impl IntoIterator<Item = &'a CandidateData>) -> LambdaValue {
    let mut best: Option<(Scalar, Loop)> = None;
    for c in data {
        let l = pair(ls, &c.occ);
        let n = pair(ls, &c.img_occ);
        if !l.is_positive() {
            if n.is_positive() {
                return LambdaValue::Infinite(c.loop_.clone());
            }
            continue;
        }
        let r = n / l;
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, c.loop_.clone()));
        }
    }
    match best {
        Some((r, l)) => LambdaValue::Finite(r, Some(l)),
        None => LambdaValue::Finite(Scalar::one(), None),
    }
}

pub fn candidate_data(f: &StraightMap, cands: &[Candidate]) -> Vec<CandidateData> {
    let table = f.comb_table();
    cands
        .iter()
        .map(|c| {
            let img = f.image_loop_with(&table, &c.loop_);
            CandidateData { loop_: c.loop_.clone(), occ: c.loop_.occurrence(&f.g), img_occ: img.occurrence(&f.g) }
        })
        .collect()
}

/// Displacement of the point carried by `f.g`.
pub fn lambda(f: &StraightMap) -> LambdaValue {
    lambda_with(f, &enumerate_candidates(&f.g))
}

pub fn lambda_with(f: &StraightMap, cands: &[Candidate]) -> LambdaValue {
    ratio_max(&f.g.lengths(), &candidate_data(f, cands))
}

/// A simplex: the topological graph of `f` with cached candidate data.
#[derive(Clone, Debug)]
pub struct SimplexSpec {
    pub f: StraightMap,
    pub cands: Vec<Candidate>,
    pub data: Vec<CandidateData>,
    pub floor: Scalar,
}

impl SimplexSpec {
    pub fn new(f: &StraightMap, floor: Scalar) -> SimplexSpec {
        let cands = enumerate_candidates(&f.g);
        let data = candidate_data(f, &cands);
        SimplexSpec { f: f.clone(), cands, data, floor }
    }

    pub fn graph(&self) -> &MarkedGraph {
        &self.f.g
    }

    pub fn dim(&self) -> usize {
        self.f.g.edges.len()
    }

    pub fn lambda_at(&self, ls: &[Scalar]) -> LambdaValue {
        ratio_max(ls, &self.data)
    }

    /// Barycenter of the volume-one slice.
    pub fn center(&self) -> Vec<Scalar> {
        let n = self.dim() as i64;
        vec![Scalar::ratio(1, n); n as usize]
    }

    /// A volume-one length vector above the floor with `lambda <= lam`, if one exists.
    pub fn feasible_at(&self, lam: &Q) -> Option<Vec<Q>> {
        let n = self.dim();
        let floor = rat(&self.floor);
        let mut le = vec![];
        for c in &self.data {
            let coeffs: Vec<Q> = (0..n).map(|e| Q::from_integer(c.img_occ[e].into()) - lam * Q::from_integer(c.occ[e].into())).collect();
            if coeffs.iter().all(|x| !x.is_positive()) {
                continue;
            }
            let s: Q = coeffs.iter().sum();
            le.push(Row { rhs: -(&floor * s), coeffs });
        }
        let total = Q::from_integer(1.into()) - &floor * Q::from_integer((n as i64).into());
        let eq = [Row { coeffs: vec![Q::from_integer(1.into()); n], rhs: total }];
        feasible(n, &le, &eq).map(|y| y.into_iter().map(|v| v + &floor).collect())
    }
}

fn rat(x: &Scalar) -> Q {
    match x.rational() {
        Some(r) => r.clone(),
        None => Q::from_float(x.to_f64()).unwrap_or_else(Q::zero),
    }
}

#[derive(Clone, Debug)]
pub struct MinResult {
    /// Displacement at the witness; lies in `[lower, upper]`.
    pub lambda: Scalar,
    pub lower: Scalar,
    pub upper: Scalar,
    pub lengths: Vec<Scalar>,
    /// Edges whose witness length sits at the floor (up to `SNAP` of the largest length).
    pub at_floor: Vec<bool>,
    pub iterations: usize,
}

impl MinResult {
    pub fn on_boundary(&self) -> bool {
        self.at_floor.iter().any(|&b| b)
    }

    /// Witness with floor edges snapped to the floor exactly, renormalized to volume one.
    pub fn snapped(&self, floor: &Scalar) -> Vec<Scalar> {
        let ls: Vec<Scalar> = self
            .lengths
            .iter()
            .zip(&self.at_floor)
            .map(|(l, &b)| if b { floor.clone() } else { l.clone() })
            .collect();
        let vol: Scalar = ls.iter().cloned().sum();
        ls.into_iter().map(|l| l / &vol).collect()
    }
}

pub const SNAP: f64 = 1e-3;

/// Bisection on lambda with exact feasibility; `tol` bounds `upper - lower`.
pub fn min_in_simplex(spec: &SimplexSpec, tol: f64) -> Result<MinResult> {
    if policy() != NumericPolicy::Exact {
        return Err(Error::NumericalPolicyViolation("min_in_simplex needs the exact policy".into()));
    }
    let n = spec.dim();
    if n == 0 {
        return Ok(MinResult {
            lambda: Scalar::one(),
            lower: Scalar::one(),
            upper: Scalar::one(),
            lengths: vec![],
            at_floor: vec![],
            iterations: 0,
        });
    }
    let start = spec.center();
    let start_lam = match spec.lambda_at(&start) {
        LambdaValue::Finite(x, _) => x,
        LambdaValue::Infinite(l) => {
            return Err(Error::Invalid(format!("infinite displacement at the barycenter ({})", l.print(spec.graph()))))
        }
    };
    let mut hi = rat(&start_lam.dyadic_ceil(30));
    let mut witness = spec.feasible_at(&hi).ok_or_else(|| Error::Invalid("start point infeasible".into()))?;
    let one = Q::from_integer(1.into());
    let mut lo = Q::zero();
    let mut iterations = 1;
    if hi > one {
        match spec.feasible_at(&one) {
            Some(w) => {
                hi = one;
                witness = w;
            }
            None => lo = one,
        }
        iterations += 1;
    }
    let tolq = Q::from_float(tol).unwrap_or_else(|| Q::new(1.into(), 1_000_000_000.into()));
    let two = Q::from_integer(2.into());
    while &hi - &lo > tolq {
        let mid = (&hi + &lo) / &two;
        iterations += 1;
        match spec.feasible_at(&mid) {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid,
        }
    }
    let lengths: Vec<Scalar> = witness.into_iter().map(Scalar::from_rational).collect();
    let maxl = lengths.iter().map(Scalar::to_f64).fold(0.0, f64::max);
    let fl = spec.floor.to_f64();
    let at_floor = lengths.iter().map(|l| l.to_f64() - fl <= SNAP * maxl).collect();
    let lambda = spec.lambda_at(&lengths).finite().cloned().unwrap_or_else(|| Scalar::from_rational(hi.clone()));
    Ok(MinResult { lambda, lower: Scalar::from_rational(lo), upper: Scalar::from_rational(hi), lengths, at_floor, iterations })
}

/// Floor used for the open-simplex infimum.
pub fn open_floor(n: usize) -> Scalar {
    Scalar::from_rational(Q::new(1.into(), 1_000_000.into())) / Scalar::int(n.max(1) as i64)
}

#[derive(Clone, Debug)]
pub struct SegmentProfile {
    pub ts: Vec<Scalar>,
    pub lambdas: Vec<LambdaValue>,
    /// Per candidate: `<A,g>`, `<B,g>`, `<A,fg>`, `<B,fg>`.
    pub pairings: Vec<[Scalar; 4]>,
    pub quasi_convex: bool,
    pub derivative_ok: bool,
    /// Largest excess of a finite difference over its bound (negative when all hold).
    pub derivative_excess: f64,
    pub degenerate: Vec<Loop>,
}

/// Samples `A_t = (1-t)A + tB` at `t = k/samples`.
pub fn segment_profile(spec: &SimplexSpec, a: &[Scalar], b: &[Scalar], samples: usize, tol: f64) -> SegmentProfile {
    let samples = samples.max(1);
    let ts: Vec<Scalar> = (0..=samples).map(|k| Scalar::ratio(k as i64, samples as i64)).collect();
    let at = |t: &Scalar| -> Vec<Scalar> {
        a.iter().zip(b).map(|(x, y)| x + &(t * &(y - x))).collect()
    };
    let points: Vec<Vec<Scalar>> = ts.iter().map(at).collect();
    let lambdas: Vec<LambdaValue> = points.iter().map(|p| spec.lambda_at(p)).collect();
    let (la, lb) = (&lambdas[0], &lambdas[samples]);
    let top = if la.le(lb) { lb } else { la };
    let quasi_convex = lambdas.iter().all(|l| l.le(top));
    let mut pairings = vec![];
    let mut degenerate = vec![];
    let mut excess = f64::NEG_INFINITY;
    for c in &spec.data {
        let (da, db) = (pair(a, &c.occ), pair(b, &c.occ));
        let (na, nb) = (pair(a, &c.img_occ), pair(b, &c.img_occ));
        pairings.push([da.clone(), db.clone(), na.clone(), nb.clone()]);
        if da.is_zero() && db.is_zero() {
            degenerate.push(c.loop_.clone());
            continue;
        }
        if da.is_zero() || db.is_zero() {
            continue;
        }
        let (fa, fb) = ((&na / &da).to_f64(), (&nb / &db).to_f64());
        let cc = (&da / &db).to_f64().max((&db / &da).to_f64());
        let sign = if fb >= fa { 1.0 } else { -1.0 };
        let bound = cc * fa.max(fb);
        let f_at = |p: &[Scalar]| (pair(p, &c.img_occ) / pair(p, &c.occ)).to_f64();
        let dt = 1.0 / samples as f64;
        for k in 0..samples {
            let fd = sign * (f_at(&points[k + 1]) - f_at(&points[k])) / dt;
            excess = excess.max(-fd - tol).max(fd - bound - tol);
        }
    }
    SegmentProfile {
        ts,
        lambdas,
        pairings,
        quasi_convex,
        derivative_ok: excess <= 0.0,
        derivative_excess: excess,
        degenerate,
    }
}

#[derive(Clone, Debug)]
pub struct PowerReport {
    pub base: Scalar,
    /// `(k, lambda(f^k), lambda^k, relative error)`.
    pub rows: Vec<(u32, Scalar, Scalar, f64)>,
    pub ok: bool,
}

pub fn power_check(f: &StraightMap, kmax: u32, rel_tol: f64) -> Result<PowerReport> {
    let cands = enumerate_candidates(&f.g);
    let base = lambda_with(f, &cands).finite().cloned().ok_or_else(|| Error::Invalid("infinite displacement".into()))?;
    let mut rows = vec![];
    let mut ok = true;
    let mut fk = f.clone();
    for k in 1..=kmax {
        if k > 1 {
            fk = f.compose(&fk);
        }
        let lk = lambda_with(&fk, &cands).finite().cloned().ok_or_else(|| Error::Invalid("infinite displacement".into()))?;
        let pk = base.powi(k);
        let rel = ((lk.to_f64() - pk.to_f64()) / pk.to_f64()).abs();
        ok &= rel <= rel_tol;
        rows.push((k, lk, pk, rel));
    }
    Ok(PowerReport { base, rows, ok })
}

/// Sorted minima with values closer than `tol` merged.
pub fn spectrum_sample(specs: &[SimplexSpec], tol: f64) -> Result<Vec<Scalar>> {
    let mut vals = vec![];
    for s in specs {
        vals.push(min_in_simplex(s, tol)?.lambda);
    }
    vals.sort_by(|a, b| a.to_f64().total_cmp(&b.to_f64()));
    let mut out: Vec<Scalar> = vec![];
    for v in vals {
        if out.last().is_none_or(|l| (v.to_f64() - l.to_f64()).abs() > 10.0 * tol) {
            out.push(v);
        }
    }
    Ok(out)
}
