//! The exact decoders must reach the oracle's weight, and the primal weight
//! must equal the dual objective.

use std::sync::Arc;

use qecmatch::framework::Solver;
use qecmatch::graph::{build_surface_code_graph, sample_syndrome, CodeSpec, Edge, ModelGraph, Syndrome, VertexKind};
use qecmatch::oracle::{build_syndrome_graph, exact_mwpm, DEFAULT_CAP};
use qecmatch::primal::{StandardPrimal, UnionFindPrimal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle(g: &ModelGraph, s: &Syndrome) -> i64 {
    exact_mwpm(&build_syndrome_graph(g, s, DEFAULT_CAP).unwrap()).unwrap().0
}

/// Connected graph with a few virtual vertices and even weights, some zero.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> ModelGraph {
    let mut kinds = vec![VertexKind::Ordinary; n];
    for k in kinds.iter_mut().take(1 + n / 6) {
        *k = VertexKind::Virtual;
    }
    let mut edges = Vec::new();
    let weight = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.1) { 0 } else { 2 * rng.gen_range(1..10) };
    for v in 1..n as u32 {
        let u = rng.gen_range(0..v);
        edges.push(Edge { u, v, weight: weight(rng), p: 0.1 });
    }
    for _ in 0..n {
        let (u, v) = (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32));
        if u != v {
            edges.push(Edge { u, v, weight: weight(rng), p: 0.1 });
        }
    }
    ModelGraph::new(kinds, edges).unwrap()
}

fn random_syndrome(rng: &mut ChaCha8Rng, g: &ModelGraph, max: usize) -> Syndrome {
    let ordinary: Vec<u32> = (0..g.vertex_count() as u32).filter(|&v| !g.is_virtual(v)).collect();
    let k = rng.gen_range(0..=max.min(ordinary.len()));
    let mut picked: Vec<u32> = rand::seq::index::sample(rng, ordinary.len(), k).into_iter().map(|i| ordinary[i]).collect();
    picked.sort_unstable();
    g.check_syndrome(&picked).unwrap()
}

#[test]
fn standard_matches_oracle_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..400 {
        let n = rng.gen_range(4..18);
        let g = Arc::new(random_graph(&mut rng, n));
        let s = random_syndrome(&mut rng, &g, 10);
        let mut solver = Solver::new(Arc::clone(&g), StandardPrimal::new());
        solver.set_instrument(true);
        let r = solver.solve(&s).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let want = oracle(&g, &s);
        assert_eq!(r.primal_weight, want, "case {case}: {s:?}");
        assert_eq!(r.dual_objective, want, "case {case}");
        assert!(r.matching().covers_exactly(&s.defects), "case {case}");
        let stats = solver.instrumentation();
        assert!(stats.tight_violations.is_empty(), "case {case}: {:?}", stats.tight_violations);
        assert!(stats.coverage_violations.is_empty(), "case {case}: {:?}", stats.coverage_violations);
    }
}

#[test]
fn standard_matches_oracle_on_surface_codes() {
    for (d, rounds, p) in [(3, 0, 0.05), (3, 2, 0.04), (5, 4, 0.01), (5, 0, 0.08)] {
        let g = Arc::new(build_surface_code_graph(&CodeSpec::new(d, rounds, p)).unwrap());
        let mut solver = Solver::new(Arc::clone(&g), StandardPrimal::new());
        solver.set_instrument(true);
        let mut checked = 0;
        for seed in 0..300 {
            let s = sample_syndrome(&g, seed);
            if s.len() > DEFAULT_CAP {
                continue;
            }
            let r = solver.solve(&s).unwrap();
            let want = oracle(&g, &s);
            assert_eq!(r.primal_weight, want, "d={d} N={rounds} seed={seed}");
            assert_eq!(r.dual_objective, want, "d={d} N={rounds} seed={seed}");
            checked += 1;
        }
        assert!(checked > 100);
        assert!(solver.instrumentation().tight_violations.is_empty(), "{:?}", solver.instrumentation().tight_violations);
    }
}

#[test]
fn union_find_never_beats_oracle_and_bounds_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let n = rng.gen_range(4..18);
        let g = Arc::new(random_graph(&mut rng, n));
        let s = random_syndrome(&mut rng, &g, 10);
        let mut solver = Solver::new(Arc::clone(&g), UnionFindPrimal::new());
        solver.set_instrument(true);
        let r = solver.solve(&s).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let want = oracle(&g, &s);
        assert!(r.matching().covers_exactly(&s.defects), "case {case}");
        assert!(r.primal_weight >= want, "case {case}");
        assert!(r.dual_objective <= want, "case {case}");
        assert!(solver.instrumentation().coverage_violations.is_empty(), "case {case}: {:?}", solver.instrumentation().coverage_violations);
    }
}

#[test]
fn size_limit_continuum_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let n = rng.gen_range(4..16);
        let g = Arc::new(random_graph(&mut rng, n));
        let s = random_syndrome(&mut rng, &g, 8);
        let uf = Solver::new(Arc::clone(&g), UnionFindPrimal::new()).solve(&s).unwrap();
        let zero = Solver::new(Arc::clone(&g), StandardPrimal::with_tree_size_limit(Some(0))).solve(&s).unwrap();
        assert_eq!(zero, uf, "case {case}: limit 0 must equal union-find");
        let unlimited = Solver::new(Arc::clone(&g), StandardPrimal::with_tree_size_limit(None)).solve(&s).unwrap();
        let huge = Solver::new(Arc::clone(&g), StandardPrimal::with_tree_size_limit(Some(usize::MAX))).solve(&s).unwrap();
        assert_eq!(unlimited, huge, "case {case}");
        assert_eq!(unlimited.primal_weight, oracle(&g, &s), "case {case}");
        for limit in [1, 2, 4] {
            let r = Solver::new(Arc::clone(&g), StandardPrimal::with_tree_size_limit(Some(limit))).solve(&s).unwrap();
            assert!(r.matching().covers_exactly(&s.defects), "case {case} limit {limit}");
            assert!(r.primal_weight >= unlimited.primal_weight, "case {case} limit {limit}");
        }
    }
}
