use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttkit::displacement::{jump_analysis, lambda, min_in_simplex, segment_profile, SimplexSpec};
use ttkit::dsl::{parse_graph, parse_map, print_graph, print_map, GraphDoc, MapDoc};
use ttkit::graph_core::{collapse, core, thin_part, MarkedGraph, OEdge, Subgraph};
use ttkit::loops::{brute_force_loops, cyclic_tighten, enumerate_candidates, inverse_word, tighten, Letter, Loop};
use ttkit::opt_flow::{fold_lambdas, foldable_turns, opt, simple_fold, weakopt_with};
use ttkit::random::{perturb, random_block_map, random_graph, random_lengths, random_map, random_path};
use ttkit::scalar::Scalar;
use ttkit::straight_maps::{gate_closure, gates, is_partial_train_track, restriction, Point, StraightMap};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph(r: &mut ChaCha8Rng) -> MarkedGraph {
    let rank = r.gen_range(2..=3);
    random_graph(r, rank, 7)
}

fn subgraph(r: &mut ChaCha8Rng, g: &MarkedGraph) -> Subgraph {
    Subgraph::from_edges((0..g.edges.len()).filter(|_| r.gen_bool(0.5)))
}

/// A random edge walk from `v`, backtracks allowed.
fn walk(r: &mut ChaCha8Rng, g: &MarkedGraph, v: usize, n: usize) -> Vec<Letter> {
    let mut w = vec![];
    let mut at = v;
    for _ in 0..n {
        let gs = g.germs(at);
        let h = gs[r.gen_range(0..gs.len())];
        w.push(Letter::E(h));
        at = g.terminus(h);
    }
    w
}

fn random_loop(r: &mut ChaCha8Rng, g: &MarkedGraph) -> Option<Loop> {
    let v = r.gen_range(0..g.vertices.len());
    let all: Vec<usize> = (0..g.edges.len()).collect();
    cyclic_tighten(g, &random_path(r, g, v, v, 5, &all)).ok()
}

fn instance(seed: u64) -> StraightMap {
    let mut r = rng(seed);
    let g = graph(&mut r);
    let f = random_map(&mut r, &g, 3);
    perturb(&mut r, &f)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn core_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let s = subgraph(&mut r, &g);
        let c = core(&g, &s);
        prop_assert!(c.edges.is_subset(&s.edges));
        prop_assert_eq!(core(&g, &c), c);
    }

    #[test]
    fn collapse_removes_the_collapsed_volume(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let s = subgraph(&mut r, &g);
        let rec = collapse(&g, &s);
        prop_assert_eq!(rec.quotient.volume(), g.volume() - s.volume(&g));
    }

    #[test]
    fn thin_part_is_cored_and_monotone(seed in any::<u64>(), a in 1i64..20, b in 1i64..20) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let loops = brute_force_loops(&g, 2).unwrap();
        let (lo, hi) = (Scalar::ratio(a.min(b), 20), Scalar::ratio(a.max(b), 20));
        let (t1, t2) = (thin_part(&g, &lo, &loops), thin_part(&g, &hi, &loops));
        prop_assert_eq!(core(&g, &t1), t1.clone());
        prop_assert!(t1.edges.is_subset(&t2.edges));
    }

    #[test]
    fn points_on_reversed_edges_agree(seed in any::<u64>(), k in 0i64..=8) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let e = r.gen_range(0..g.edges.len());
        let t = Scalar::ratio(k, 8);
        prop_assert_eq!(
            Point::on(&g, OEdge::fwd(e), t.clone()),
            Point::on(&g, OEdge::bwd(e), Scalar::one() - t)
        );
    }

    #[test]
    fn tighten_is_idempotent_and_shortens(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let v = r.gen_range(0..g.vertices.len());
        let w = walk(&mut r, &g, v, n);
        let p = tighten(&g, v, &w).unwrap();
        prop_assert!(p.length(&g) <= ttkit::loops::word_length(&g, &w));
        prop_assert_eq!(tighten(&g, v, &p.letters).unwrap(), p);
    }

    #[test]
    fn length_is_bilinear(seed in any::<u64>(), k in 0i64..=10) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let Some(l) = random_loop(&mut r, &g) else { return Ok(()) };
        let (a, b) = (random_lengths(&mut r, g.edges.len()), random_lengths(&mut r, g.edges.len()));
        let t = Scalar::ratio(k, 10);
        let mix: Vec<Scalar> = a.iter().zip(&b).map(|(x, y)| &t * x + (Scalar::one() - &t) * y).collect();
        let len = |ls: &[Scalar]| l.length(&g.with_lengths(ls));
        prop_assert_eq!(len(&mix), &t * &len(&a) + (Scalar::one() - &t) * len(&b));
    }

    #[test]
    fn loops_have_one_canonical_form(seed in any::<u64>(), rot in 0usize..16) {
        let mut r = rng(seed);
        let g = graph(&mut r);
        let Some(l) = random_loop(&mut r, &g) else { return Ok(()) };
        let n = l.letters.len();
        let mut w = l.letters[rot % n..].to_vec();
        w.extend_from_slice(&l.letters[..rot % n]);
        prop_assert_eq!(cyclic_tighten(&g, &w).unwrap(), l.clone());
        prop_assert_eq!(cyclic_tighten(&g, &inverse_word(&w)).unwrap(), l);
    }

    #[test]
    fn image_lengths_are_stretch_times_length(seed in any::<u64>()) {
        let f = instance(seed);
        for e in 0..f.g.edges.len() {
            prop_assert_eq!(f.image_length(e), f.stretch(e).unwrap() * f.g.len(e).clone());
        }
    }

    #[test]
    fn gates_refine_their_closure(seed in any::<u64>()) {
        let f = instance(seed);
        let closure = gate_closure(&f, None).unwrap();
        prop_assert!(gates(&f).refines(&closure));
    }

    #[test]
    fn images_commute_with_iteration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = instance(seed);
        let Some(l) = random_loop(&mut r, &f.g) else { return Ok(()) };
        let once = f.image_loop(&l);
        let twice = once.and_then(|i| f.image_loop(&i));
        prop_assert_eq!(twice.ok(), f.iterate(2).image_loop(&l).ok());
    }

    #[test]
    fn train_tracks_have_multiplicative_powers(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, _) = random_block_map(&mut r, 1, 1, 3);
        if let Some(rep) = is_partial_train_track(&f).unwrap() {
            let lip = f.lip();
            for k in 2..=3 {
                let rest = restriction(&f.iterate(k), &rep.a);
                let lk = rest.map(|x| x.map.lip()).unwrap_or_else(|_| f.iterate(k).lip());
                prop_assert!(lk <= lip.powi(k));
            }
            prop_assert!(ttkit::straight_maps::is_weakly_optimal(&f, &enumerate_candidates(&f.g)));
        }
    }

    #[test]
    fn restriction_does_not_stretch_more(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, a) = random_block_map(&mut r, 2, 1, 3);
        let rest = restriction(&f, &a).unwrap();
        prop_assert!(rest.map.lip() <= f.lip());
    }

    #[test]
    fn flow_is_monotone_and_bounded(seed in any::<u64>()) {
        let f = instance(seed);
        let lam = lambda(&f).finite().cloned().unwrap();
        let (h, c) = weakopt_with(&f, None, 2000, &mut |_| {}).unwrap();
        prop_assert_eq!(h.lip(), lam);
        prop_assert!(c.bound_holds());
        let lips: Vec<f64> = c.events.iter().map(|e| e.lip.parse().unwrap()).collect();
        prop_assert!(lips.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        if let Ok(o) = opt(&h, &Scalar::ratio(1, 100)) {
            prop_assert_eq!(o.lip(), h.lip());
        }
    }

    #[test]
    fn folds_never_increase_lambda(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (h, _) = weakopt_with(&instance(seed), None, 2000, &mut |_| {}).unwrap();
        let mut turns = foldable_turns(&h);
        if turns.is_empty() { return Ok(()) }
        let turn = turns.swap_remove(r.gen_range(0..turns.len()));
        let rec = simple_fold(&h, &turn, None).unwrap();
        let (before, after) = fold_lambdas(&rec);
        prop_assert!(after <= before + 1e-9, "{} -> {}", before, after);
    }

    #[test]
    fn segments_are_quasi_convex(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = instance(seed);
        let n = f.g.edges.len();
        let spec = SimplexSpec::new(&f, Scalar::zero());
        let p = segment_profile(&spec, &random_lengths(&mut r, n), &random_lengths(&mut r, n), 8, 1e-6);
        prop_assert!(p.quasi_convex);
        prop_assert!(p.derivative_ok, "{}", p.derivative_excess);
    }

    #[test]
    fn minimum_witness_is_consistent(seed in any::<u64>()) {
        let f = instance(seed);
        let spec = SimplexSpec::new(&f, Scalar::ratio(1, 1000));
        let m = min_in_simplex(&spec, 1e-9).unwrap();
        let at = spec.lambda_at(&m.lengths).to_f64();
        prop_assert!((at - m.lambda.to_f64()).abs() <= 2e-9, "{} vs {}", at, m.lambda);
    }

    #[test]
    fn jump_reports_avoid_the_forbidden_interval(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, a) = random_block_map(&mut r, 2, 2, 3);
        let rep = jump_analysis(&f, &a, 1e-9).unwrap();
        prop_assert!(rep.forbidden_ok, "{:?}", rep);
    }

    #[test]
    fn dsl_round_trips(seed in any::<u64>()) {
        let f = instance(seed);
        let gd = GraphDoc { comments: vec![], lets: vec![], graph: f.g.clone() };
        let gtext = print_graph(&gd);
        let gd2 = parse_graph(&gtext, &[]).unwrap();
        prop_assert_eq!(print_graph(&gd2), gtext);
        let md = MapDoc { comments: vec![], lets: vec![], map: f.clone() };
        let mtext = print_map(&md);
        let md2 = parse_map(&mtext, &gd2, &[]).unwrap();
        prop_assert_eq!(print_map(&md2), mtext);
        prop_assert_eq!(md2.map.eimg, f.eimg);
    }
}
