//! Union-Find primal module: every defect starts as its own cluster and
//! touching clusters merge. Fast, but only approximately minimum weight.

use crate::dual::{DualModule, Obstacle};
use crate::error::SolverError;
use crate::framework::{PrimalModule, RawMatching, Trace};
use crate::partition::NodeId;
use crate::paths::ShortestPaths;
use crate::primal::cluster::{nested_blossoms, ClusterSet};

#[derive(Debug, Clone)]
pub struct UnionFindPrimal {
    clusters: ClusterSet,
    trace: Trace,
}

impl Default for UnionFindPrimal {
    fn default() -> Self {
        Self::new()
    }
}

impl UnionFindPrimal {
    pub fn new() -> Self {
        Self { clusters: ClusterSet::new(0), trace: Trace::default() }
    }
}

impl PrimalModule for UnionFindPrimal {
    fn reset(&mut self) {
        self.clusters.reset();
        self.trace.clear();
    }

    fn add_defect_node(&mut self, dual: &mut DualModule, node: NodeId) -> Result<(), SolverError> {
        self.clusters.init_node(node);
        self.clusters.make_cluster(dual, node, Vec::new(), None)?;
        Ok(())
    }

    fn resolve(&mut self, dual: &mut DualModule, obstacles: &[Obstacle]) -> Result<usize, SolverError> {
        let mut acted = 0;
        for o in obstacles {
            match *o {
                Obstacle::Conflict { touch1, touch2, .. } => {
                    let (a, b) = (top(dual, touch1)?, top(dual, touch2)?);
                    if a == b {
                        continue;
                    }
                    self.clusters.merge(dual, &mut self.trace, &[a, b], vec![(touch1, touch2)], None)?;
                    acted += 1;
                }
                Obstacle::TouchVirtual { touch, vertex, .. } => {
                    let a = top(dual, touch)?;
                    if self.clusters.touch_virtual(dual, &mut self.trace, a, touch, vertex)? {
                        acted += 1;
                    }
                }
                Obstacle::BlossomMustExpand { node } => {
                    return Err(SolverError::Contract(format!("union-find module never builds blossom {node}")));
                }
            }
        }
        Ok(acted)
    }

    fn extract(&mut self, dual: &DualModule, paths: &mut ShortestPaths) -> Result<RawMatching, SolverError> {
        let mut out = RawMatching::default();
        for t in dual.top_nodes() {
            debug_assert!(nested_blossoms(dual, t).is_empty());
            self.clusters.extract(dual, t, &[], paths, &mut out)?;
        }
        Ok(out)
    }

    fn trace(&self) -> &Trace {
        &self.trace
    }

    fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }
}

pub(crate) fn top(dual: &DualModule, defect: crate::graph::VertexIndex) -> Result<NodeId, SolverError> {
    dual.top_of(defect).ok_or_else(|| SolverError::Contract(format!("touch vertex {defect} is not a loaded defect")))
}
