//! Five-defect walk-through shared by the conformance tests: `e` next to the
//! boundary, `a, b, c` forming an odd cycle, `d` hanging off `b`. Weights are
//! four times the picture's units so every step is an even integer.

use std::sync::Arc;

use qecmatch::framework::{Trace, TraceEvent};
use qecmatch::graph::{Edge, ModelGraph, VertexKind};
use qecmatch::partition::NodeId;

pub const A: u32 = 0;
pub const B: u32 = 1;
pub const C: u32 = 2;
pub const D: u32 = 3;
pub const E: u32 = 4;
pub const BOUNDARY: u32 = 5;

pub fn fixture() -> Arc<ModelGraph> {
    let mut kinds = vec![VertexKind::Ordinary; 5];
    kinds.push(VertexKind::Virtual);
    let e = |u, v, weight| Edge { u, v, weight, p: 0.01 };
    Arc::new(ModelGraph::new(kinds, vec![e(E, BOUNDARY, 8), e(A, B, 20), e(B, C, 20), e(A, C, 24), e(B, D, 28)]).unwrap())
}

pub fn node(i: u32) -> NodeId {
    NodeId { region: 0, index: i }
}

pub fn expected_events() -> Vec<TraceEvent> {
    let blossom = node(5);
    vec![
        TraceEvent::Grow { delta: 8, obstacles: 1 },
        TraceEvent::MatchVirtual { node: node(E), vertex: BOUNDARY },
        TraceEvent::Grow { delta: 2, obstacles: 2 },
        TraceEvent::Augment { node1: node(A), node2: node(B) },
        TraceEvent::GrowTree { plus: node(C), minus: node(B), child: node(A) },
        TraceEvent::Grow { delta: 2, obstacles: 1 },
        TraceEvent::CreateBlossom { blossom, cycle: vec![node(C), node(B), node(A)] },
        TraceEvent::Grow { delta: 4, obstacles: 1 },
        TraceEvent::Augment { node1: blossom, node2: node(D) },
        TraceEvent::ExtractExpand { blossom },
    ]
}

/// Blossom cycles compare as sets (the starting point is a convention) and
/// augment endpoints as unordered pairs.
fn same_event(got: &TraceEvent, want: &TraceEvent) -> bool {
    let sorted = |v: &[NodeId]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    match (got, want) {
        (TraceEvent::CreateBlossom { blossom: b1, cycle: c1 }, TraceEvent::CreateBlossom { blossom: b2, cycle: c2 }) => {
            b1 == b2 && sorted(c1) == sorted(c2)
        }
        (TraceEvent::Augment { node1, node2 }, TraceEvent::Augment { node1: w1, node2: w2 }) => {
            sorted(&[*node1, *node2]) == sorted(&[*w1, *w2])
        }
        _ => got == want,
    }
}

/// Checks the recorded actions against [`expected_events`] and the grow and
/// shrink directions inside the alternating tree.
pub fn check_trace(trace: &Trace) -> Result<(), String> {
    let events: Vec<&TraceEvent> = trace.lines().iter().map(|l| &l.event).collect();
    let expected = expected_events();
    if events.len() != expected.len() {
        return Err(format!("{} actions, expected {}:\n{}", events.len(), expected.len(), trace.to_json_lines()));
    }
    if let Some(i) = (0..events.len()).find(|&i| !same_event(events[i], &expected[i])) {
        return Err(format!("action {i} is {:?}, expected {:?}", events[i], expected[i]));
    }
    let mut dirs = trace.lines()[4].directions.clone();
    dirs.sort();
    if dirs != vec![(node(A), 1), (node(B), -1), (node(C), 1)] {
        return Err(format!("tree directions {dirs:?}"));
    }
    Ok(())
}
