//! The primal/dual solve loop and its results.
//!
//! The dual module grows covers until obstacles appear; the primal module
//! resolves every reported obstacle and sets new directions; repeat until no
//! node is active. The primal module then extracts a perfect matching, which
//! is turned into a correction by XOR-ing shortest paths.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::{DualModule, NodeKind, Obstacle};
use crate::error::SolverError;
use crate::graph::{EdgeIndex, ModelGraph, Syndrome, VertexIndex, Weight};
use crate::partition::NodeId;
use crate::paths::ShortestPaths;

/// Defects paired with each other or with a virtual vertex. Weights are
/// shortest-path weights on the full graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfectMatching {
    pub pairs: Vec<(VertexIndex, VertexIndex, Weight)>,
    pub boundary: Vec<(VertexIndex, VertexIndex, Weight)>,
}

impl PerfectMatching {
    pub fn weight(&self) -> Weight {
        self.pairs.iter().chain(&self.boundary).map(|m| m.2).sum()
    }

    /// Every defect exactly once, nothing else.
    pub fn covers_exactly(&self, defects: &[VertexIndex]) -> bool {
        let mut seen: Vec<VertexIndex> =
            self.pairs.iter().flat_map(|p| [p.0, p.1]).chain(self.boundary.iter().map(|b| b.0)).collect();
        seen.sort_unstable();
        let mut expected = defects.to_vec();
        expected.sort_unstable();
        seen == expected
    }
}

/// A matching before weights are attached.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawMatching {
    pub pairs: Vec<(VertexIndex, VertexIndex)>,
    pub boundary: Vec<(VertexIndex, VertexIndex)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub pairs: Vec<(VertexIndex, VertexIndex, Weight)>,
    pub boundary: Vec<(VertexIndex, VertexIndex, Weight)>,
    pub correction: Vec<EdgeIndex>,
    pub primal_weight: Weight,
    pub dual_objective: Weight,
}

impl DecodeResult {
    pub fn empty() -> Self {
        Self { pairs: vec![], boundary: vec![], correction: vec![], primal_weight: 0, dual_objective: 0 }
    }

    pub fn matching(&self) -> PerfectMatching {
        PerfectMatching { pairs: self.pairs.clone(), boundary: self.boundary.clone() }
    }
}

/// One primal action, for conformance tests and debugging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum TraceEvent {
    Grow { delta: Weight, obstacles: usize },
    MatchVirtual { node: NodeId, vertex: VertexIndex },
    Augment { node1: NodeId, node2: NodeId },
    GrowTree { plus: NodeId, minus: NodeId, child: NodeId },
    CreateBlossom { blossom: NodeId, cycle: Vec<NodeId> },
    ExpandBlossom { blossom: NodeId, children: Vec<NodeId> },
    MergeClusters { node: NodeId, members: Vec<NodeId> },
    ClusterTouchVirtual { node: NodeId, vertex: VertexIndex },
    ExtractExpand { blossom: NodeId },
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Grow { .. } => "Grow",
            TraceEvent::MatchVirtual { .. } => "MatchVirtual",
            TraceEvent::Augment { .. } => "Augment",
            TraceEvent::GrowTree { .. } => "GrowTree",
            TraceEvent::CreateBlossom { .. } => "CreateBlossom",
            TraceEvent::ExpandBlossom { .. } => "ExpandBlossom",
            TraceEvent::MergeClusters { .. } => "MergeClusters",
            TraceEvent::ClusterTouchVirtual { .. } => "ClusterTouchVirtual",
            TraceEvent::ExtractExpand { .. } => "ExtractExpand",
        }
    }

    fn nodes(&self) -> Vec<NodeId> {
        match self {
            TraceEvent::Grow { .. } => vec![],
            TraceEvent::MatchVirtual { node, .. } | TraceEvent::ClusterTouchVirtual { node, .. } => vec![*node],
            TraceEvent::Augment { node1, node2 } => vec![*node1, *node2],
            TraceEvent::GrowTree { plus, minus, child } => vec![*plus, *minus, *child],
            TraceEvent::CreateBlossom { blossom, .. } => vec![*blossom],
            TraceEvent::ExpandBlossom { children, .. } => children.clone(),
            TraceEvent::MergeClusters { node, .. } => vec![*node],
            TraceEvent::ExtractExpand { .. } => vec![],
        }
    }
}

/// A trace event plus the directions of the nodes it names right after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceLine {
    #[serde(flatten)]
    pub event: TraceEvent,
    pub directions: Vec<(NodeId, Weight)>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    enabled: bool,
    lines: Vec<TraceLine>,
}

impl Trace {
    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, dual: &DualModule, event: TraceEvent) {
        if !self.enabled {
            return;
        }
        let directions = event
            .nodes()
            .into_iter()
            .filter(|&n| dual.contains_node(n))
            .map(|n| (n, dual.node(n).direction.rate()))
            .collect();
        self.lines.push(TraceLine { event, directions });
    }

    pub fn lines(&self) -> &[TraceLine] {
        &self.lines
    }

    pub fn clear(&mut self) {
        self.lines.clear();
    }

    pub fn extend(&mut self, lines: Vec<TraceLine>) {
        self.lines.extend(lines);
    }

    pub fn to_json_lines(&self) -> String {
        self.lines.iter().map(|l| serde_json::to_string(l).expect("trace serializes") + "\n").collect()
    }
}

/// Decides growth directions from the obstacles the dual module reports.
pub trait PrimalModule {
    fn reset(&mut self);

    /// Registers a freshly loaded defect leaf.
    fn add_defect_node(&mut self, dual: &mut DualModule, node: NodeId) -> Result<(), SolverError>;

    /// Handles a batch of obstacles in order; returns how many changed state.
    fn resolve(&mut self, dual: &mut DualModule, obstacles: &[Obstacle]) -> Result<usize, SolverError>;

    /// Reads off the matching once no node is active.
    fn extract(&mut self, dual: &DualModule, paths: &mut ShortestPaths) -> Result<RawMatching, SolverError>;

    fn trace(&self) -> &Trace;

    fn trace_mut(&mut self) -> &mut Trace;
}

/// Counters from instrumented runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Instrumentation {
    pub conflicts_checked: u64,
    pub tight_violations: Vec<String>,
    pub coverage_violations: Vec<String>,
}

/// Runs the grow/resolve loop until no node is active.
pub fn run_loop<P: PrimalModule>(
    dual: &mut DualModule,
    primal: &mut P,
    mut instrument: Option<(&mut Instrumentation, &mut ShortestPaths)>,
) -> Result<(), SolverError> {
    while dual.has_active() {
        let grown = dual.grow_until_obstacles()?;
        primal.trace_mut().push(dual, TraceEvent::Grow { delta: grown.delta, obstacles: grown.obstacles.len() });
        if grown.obstacles.is_empty() {
            if dual.has_active() {
                return Err(SolverError::Invariant("grow returned no obstacle while nodes are active".into()));
            }
            break;
        }
        if let Some((stats, paths)) = instrument.as_mut() {
            check_obstacles(dual, &grown.obstacles, stats, paths);
            stats.coverage_violations.extend(dual.coverage_violations());
        }
        let acted = primal.resolve(dual, &grown.obstacles)?;
        if acted == 0 {
            return Err(SolverError::Contract(format!(
                "primal module resolved none of {:?}; state: {}",
                grown.obstacles,
                dual.dump()
            )));
        }
    }
    Ok(())
}

/// Tight-edge check: the shortest path between the touch defects of a
/// conflict weighs exactly the sum of both cover radii; a virtual touch sits
/// exactly at the cover radius.
pub fn check_obstacles(dual: &DualModule, obstacles: &[Obstacle], stats: &mut Instrumentation, paths: &mut ShortestPaths) {
    let graph = Arc::clone(dual.graph());
    for o in obstacles {
        let (a, b, radius) = match *o {
            Obstacle::Conflict { touch1, touch2, .. } => {
                let r = dual.ancestry_sum(touch1).zip(dual.ancestry_sum(touch2)).map(|(x, y)| x + y);
                (touch1, touch2, r)
            }
            Obstacle::TouchVirtual { touch, vertex, .. } => (touch, vertex, dual.ancestry_sum(touch)),
            Obstacle::BlossomMustExpand { .. } => continue,
        };
        stats.conflicts_checked += 1;
        let d = paths.distance(&graph, a, b);
        if d.is_none() || d != radius {
            stats.tight_violations.push(format!("{o:?}: distance {d:?} but radius sum {radius:?}"));
        }
    }
}

/// Exhaustive dual feasibility on the syndrome graph of the loaded defects:
/// for every defect pair, `Σ y` over nodes holding exactly one of them is at
/// most their distance, and every cover radius is at most the distance to the
/// instance boundary. Adds the per-edge cover checks. Quadratic; tests only.
pub fn feasibility_violations(dual: &DualModule, paths: &mut ShortestPaths) -> Vec<String> {
    let graph = Arc::clone(dual.graph());
    let mut out = dual.coverage_violations();
    let defects: Vec<VertexIndex> =
        dual.nodes().filter_map(|(_, n)| if let NodeKind::Leaf(v) = n.kind { Some(v) } else { None }).collect();
    let ancestry: Vec<Vec<NodeId>> = defects.iter().map(|&d| dual.ancestry(d)).collect();
    for (i, &u) in defects.iter().enumerate() {
        let radius: Weight = ancestry[i].iter().map(|&n| dual.node(n).y).sum();
        let mut boundary = None;
        paths.run(&graph, u, |x, d| {
            if boundary.is_none() && dual.is_virtual(x) {
                boundary = Some(d);
            }
            false
        });
        if boundary.is_some_and(|b| radius > b) {
            out.push(format!("defect {u}: radius {radius} exceeds boundary distance {boundary:?}"));
        }
        for (j, &v) in defects.iter().enumerate().skip(i + 1) {
            let separating: Weight = ancestry[i]
                .iter()
                .filter(|n| !ancestry[j].contains(n))
                .chain(ancestry[j].iter().filter(|n| !ancestry[i].contains(n)))
                .map(|&n| dual.node(n).y)
                .sum();
            match paths.settled_distance(v) {
                Some(d) if separating > d => out.push(format!("defects {u}, {v}: Σy {separating} > distance {d}")),
                None if separating > 0 => out.push(format!("defects {u}, {v} are disconnected but Σy = {separating}")),
                _ => {}
            }
        }
    }
    out
}

/// Attaches weights and paths to a raw matching.
pub fn finish_result(
    graph: &ModelGraph,
    raw: &RawMatching,
    dual_objective: Weight,
    paths: &mut ShortestPaths,
) -> Result<DecodeResult, SolverError> {
    let mut pairs = Vec::with_capacity(raw.pairs.len());
    let mut boundary = Vec::with_capacity(raw.boundary.len());
    let mut parity = vec![false; graph.edge_count()];
    let mut weight = 0;
    let mut add = |u: VertexIndex, v: VertexIndex| -> Result<Weight, SolverError> {
        let d = paths
            .distance(graph, u, v)
            .ok_or_else(|| SolverError::Invariant(format!("matched vertices {u} and {v} are disconnected")))?;
        for e in paths.path_to(graph, v).expect("settled target has a path") {
            parity[e as usize] ^= true;
        }
        weight += d;
        Ok(d)
    };
    for &(u, v) in &raw.pairs {
        let d = add(u, v)?;
        pairs.push((u.min(v), u.max(v), d));
    }
    for &(u, b) in &raw.boundary {
        let d = add(u, b)?;
        boundary.push((u, b, d));
    }
    pairs.sort_unstable();
    boundary.sort_unstable();
    let correction = parity.iter().enumerate().filter(|(_, p)| **p).map(|(e, _)| e as EdgeIndex).collect();
    Ok(DecodeResult { pairs, boundary, correction, primal_weight: weight, dual_objective })
}

/// Correction edges for a weighted matching: XOR of one shortest path per
/// matched pair.
pub fn matching_to_correction(graph: &ModelGraph, matching: &PerfectMatching) -> Vec<EdgeIndex> {
    let raw = RawMatching {
        pairs: matching.pairs.iter().map(|p| (p.0, p.1)).collect(),
        boundary: matching.boundary.iter().map(|b| (b.0, b.1)).collect(),
    };
    let mut paths = ShortestPaths::new(graph.vertex_count());
    finish_result(graph, &raw, 0, &mut paths).map(|r| r.correction).unwrap_or_default()
}

/// A dual module and a primal module over one graph, reusable across shots.
pub struct Solver<P: PrimalModule> {
    dual: DualModule,
    primal: P,
    paths: ShortestPaths,
    instrument: bool,
    stats: Instrumentation,
}

impl<P: PrimalModule> Solver<P> {
    pub fn new(graph: Arc<ModelGraph>, primal: P) -> Self {
        let n = graph.vertex_count();
        Self { dual: DualModule::whole(graph), primal, paths: ShortestPaths::new(n), instrument: false, stats: Default::default() }
    }

    pub fn graph(&self) -> &Arc<ModelGraph> {
        self.dual.graph()
    }

    pub fn dual(&self) -> &DualModule {
        &self.dual
    }

    pub fn primal(&self) -> &P {
        &self.primal
    }

    pub fn primal_mut(&mut self) -> &mut P {
        &mut self.primal
    }

    /// Turns on per-obstacle tight-edge checks and per-grow coverage checks.
    pub fn set_instrument(&mut self, on: bool) {
        self.instrument = on;
    }

    pub fn instrumentation(&self) -> &Instrumentation {
        &self.stats
    }

    pub fn set_trace(&mut self, on: bool) {
        self.primal.trace_mut().set_enabled(on);
    }

    pub fn trace(&self) -> &Trace {
        self.primal.trace()
    }

    /// O(1) invalidation of all per-shot state.
    pub fn reset(&mut self) {
        self.dual.reset();
        self.primal.reset();
    }

    /// Loads the syndrome and runs the loop, leaving the final dual state in
    /// place for inspection.
    pub fn solve_state(&mut self, syndrome: &Syndrome) -> Result<(), SolverError> {
        self.reset();
        let checked = self.dual.graph().check_syndrome(&syndrome.defects)?;
        for &v in &checked.defects {
            let id = self.dual.add_defect(v)?;
            self.primal.add_defect_node(&mut self.dual, id)?;
        }
        let instrument = if self.instrument { Some((&mut self.stats, &mut self.paths)) } else { None };
        run_loop(&mut self.dual, &mut self.primal, instrument)
    }

    pub fn solve(&mut self, syndrome: &Syndrome) -> Result<DecodeResult, SolverError> {
        self.solve_state(syndrome)?;
        let raw = self.primal.extract(&self.dual, &mut self.paths)?;
        let graph = Arc::clone(self.dual.graph());
        finish_result(&graph, &raw, self.dual.dual_objective(), &mut self.paths)
    }
}
