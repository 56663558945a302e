//! Graph, sampling and solver-reuse properties.

use std::sync::Arc;

use proptest::prelude::*;
use qecmatch::api::{Decoder, DecoderKind};
use qecmatch::error::DecoderError;
use qecmatch::framework::Solver;
use qecmatch::graph::{build_surface_code_graph, sample_error, sample_syndrome, syndrome_of, CodeSpec, ErrorPattern, ModelGraph};
use qecmatch::oracle::{build_syndrome_graph, exact_mwpm, DEFAULT_CAP};
use qecmatch::primal::{StandardPrimal, UnionFindPrimal};

fn surface(d: u32, rounds: u32, p: f64) -> Arc<ModelGraph> {
    Arc::new(build_surface_code_graph(&CodeSpec::new(d, rounds, p)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dist_obeys_triangle_inequality(d in prop::sample::select(vec![3u32, 5]), rounds in 0u32..4, a: u32, b: u32, c: u32) {
        let g = surface(d, rounds, 0.01);
        let n = g.vertex_count() as u32;
        let (a, b, c) = (a % n, b % n, c % n);
        let ab = g.dist(a, b).unwrap();
        prop_assert_eq!(ab, g.dist(b, a).unwrap());
        prop_assert_eq!(g.dist(a, a).unwrap(), 0);
        prop_assert!(ab <= g.dist(a, c).unwrap() + g.dist(c, b).unwrap());
    }

    #[test]
    fn syndrome_is_linear_in_the_error(rounds in 0u32..4, s1: u64, s2: u64) {
        let g = surface(5, rounds, 0.05);
        let (e1, e2) = (sample_error(&g, s1), sample_error(&g, s2));
        let mut both: Vec<u32> = e1.edges.iter().chain(&e2.edges).copied().collect();
        both.sort_unstable();
        let mut xor = Vec::new();
        for e in both {
            if xor.last() == Some(&e) { xor.pop(); } else { xor.push(e); }
        }
        let combined = syndrome_of(&g, &ErrorPattern { edges: xor });
        let (y1, y2) = (syndrome_of(&g, &e1), syndrome_of(&g, &e2));
        let mut want: Vec<u32> = y1.defects.iter().filter(|v| !y2.defects.contains(v)).copied().collect();
        want.extend(y2.defects.iter().filter(|v| !y1.defects.contains(v)));
        want.sort_unstable();
        prop_assert_eq!(combined.defects, want);
    }

    #[test]
    fn sampled_syndromes_are_sorted_and_ordinary(seed: u64) {
        let g = surface(5, 3, 0.1);
        let s = sample_syndrome(&g, seed);
        prop_assert!(s.defects.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.defects.iter().all(|&v| !g.is_virtual(v)));
        prop_assert_eq!(sample_syndrome(&g, seed), s);
    }
}

#[test]
fn half_probability_flips_about_half_the_edges() {
    let g = surface(5, 4, 0.5);
    assert!(g.edges().iter().all(|e| e.weight == 0));
    let (shots, edges) = (400u64, g.edge_count() as f64);
    let flipped: usize = (0..shots).map(|s| sample_error(&g, s).edges.len()).sum();
    let freq = flipped as f64 / (shots as f64 * edges);
    // four standard deviations of a binomial with n = shots * edges
    let tol = 4.0 * (0.25 / (shots as f64 * edges)).sqrt();
    assert!((freq - 0.5).abs() < tol, "{freq}");
}

#[test]
fn reused_solver_matches_fresh_solver() {
    let g = surface(5, 5, 0.02);
    let mut reused = Solver::new(Arc::clone(&g), StandardPrimal::new());
    let mut reused_uf = Solver::new(Arc::clone(&g), UnionFindPrimal::new());
    for seed in 0..150 {
        let s = sample_syndrome(&g, seed);
        let fresh = Solver::new(Arc::clone(&g), StandardPrimal::new()).solve(&s).unwrap();
        assert_eq!(reused.solve(&s).unwrap(), fresh, "seed {seed}");
        let fresh_uf = Solver::new(Arc::clone(&g), UnionFindPrimal::new()).solve(&s).unwrap();
        assert_eq!(reused_uf.solve(&s).unwrap(), fresh_uf, "seed {seed}");
    }
}

#[test]
fn union_find_is_strictly_worse_on_some_syndromes() {
    let g = surface(5, 5, 0.02);
    let mut uf = Solver::new(Arc::clone(&g), UnionFindPrimal::new());
    let mut gaps = 0;
    for seed in 0..300 {
        let s = sample_syndrome(&g, seed);
        if s.len() > DEFAULT_CAP {
            continue;
        }
        let exact = exact_mwpm(&build_syndrome_graph(&g, &s, DEFAULT_CAP).unwrap()).unwrap().0;
        let w = uf.solve(&s).unwrap().primal_weight;
        assert!(w >= exact);
        gaps += usize::from(w > exact);
    }
    assert!(gaps > 0);
}

#[test]
fn closed_decoder_rejects_every_call() {
    let mut d = Decoder::build(&CodeSpec::new(3, 6, 0.05), DecoderKind::Fusion { plan: qecmatch::fusion::PlanKind::Linear, m: 2, workers: 2 }).unwrap();
    let s = sample_syndrome(d.graph(), 3);
    assert!(d.verify(&s.defects).unwrap());
    d.close();
    assert!(d.is_closed());
    assert_eq!(d.decode(&s.defects), Err(DecoderError::Closed));
    assert_eq!(d.verify(&s.defects), Err(DecoderError::Closed));
}
