//! The five-defect walk-through: action sequence, final matching and duals.

mod common;

use std::sync::Arc;

use common::{check_trace, fixture, A, B, BOUNDARY, C, D, E};
use qecmatch::dual::NodeKind;
use qecmatch::framework::Solver;
use qecmatch::oracle::{build_syndrome_graph, exact_mwpm};
use qecmatch::primal::StandardPrimal;

#[test]
fn action_sequence() {
    let g = fixture();
    let s = g.check_syndrome(&[A, B, C, D, E]).unwrap();
    let mut solver = Solver::new(Arc::clone(&g), StandardPrimal::new());
    solver.set_trace(true);
    let r = solver.solve(&s).unwrap();
    check_trace(solver.trace()).unwrap();
    assert_eq!(r.pairs, vec![(A, C, 24), (B, D, 28)]);
    assert_eq!(r.boundary, vec![(E, BOUNDARY, 8)]);
    assert_eq!(r.primal_weight, 60);
    assert_eq!(r.dual_objective, 60);
    let oracle = exact_mwpm(&build_syndrome_graph(&g, &s, 20).unwrap()).unwrap().0;
    assert_eq!(oracle, 60);
}

#[test]
fn final_dual_variables() {
    let g = fixture();
    let s = g.check_syndrome(&[A, B, C, D, E]).unwrap();
    let mut solver = Solver::new(Arc::clone(&g), StandardPrimal::new());
    solver.solve_state(&s).unwrap();
    let dual = solver.dual();
    let y = |v| dual.node(dual.leaf_of(v).unwrap()).y;
    assert_eq!([y(A), y(B), y(C), y(D), y(E)], [12, 8, 12, 16, 8]);
    let top = dual.top_of(A).unwrap();
    assert_eq!(dual.node(top).kind, NodeKind::Blossom);
    assert_eq!(dual.node(top).y, 4);
    assert_eq!(dual.top_of(B), Some(top));
    assert_eq!(dual.top_of(C), Some(top));
    assert_eq!(dual.dual_objective(), 60);
}
