//! Union-find clusters over dual nodes.
//!
//! A cluster is a set of nodes whose covers touch. Merging two clusters
//! groups their dual nodes under one cluster node so the merged cover grows
//! as a unit and per-edge feasibility is kept. A cluster grows while it holds
//! an odd number of defects and has not reached a virtual vertex.

use std::collections::{HashMap, VecDeque};

use crate::dual::{Direction, DualModule, NodeKind};
use crate::error::SolverError;
use crate::framework::{RawMatching, Trace, TraceEvent};
use crate::graph::VertexIndex;
use crate::partition::{NodeId, NodeMap, RegionId};
use crate::paths::ShortestPaths;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct ClusterData {
    node: NodeId,
    odd: bool,
    virtual_touch: Option<(VertexIndex, VertexIndex)>,
    /// Tight syndrome-graph edges between member defects.
    edges: Vec<(VertexIndex, VertexIndex)>,
}

/// Disjoint clusters with union by size; ties go to the lower cluster id.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    of_node: NodeMap<ClusterRef>,
    parent: Vec<u32>,
    size: Vec<u32>,
    data: Vec<ClusterData>,
}

#[derive(Debug, Clone, Copy)]
struct ClusterRef(u32);

impl Default for ClusterRef {
    fn default() -> Self {
        ClusterRef(NONE)
    }
}

impl ClusterSet {
    pub fn new(region: RegionId) -> Self {
        Self { of_node: NodeMap::new(region), parent: Vec::new(), size: Vec::new(), data: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.of_node.reset();
        self.parent.clear();
        self.size.clear();
        self.data.clear();
    }

    pub fn fuse(self, right: Self) -> Self {
        assert!(self.data.is_empty() && right.data.is_empty(), "clusters do not take part in fusion");
        let of_node = self.of_node.fuse(right.of_node, Default::default());
        Self { of_node, parent: Vec::new(), size: Vec::new(), data: Vec::new() }
    }

    /// Must be called for every node the dual module allocates.
    pub fn init_node(&mut self, node: NodeId) {
        self.of_node.init(node);
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn find(&mut self, mut c: u32) -> u32 {
        let mut root = c;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[c as usize] != root {
            let next = self.parent[c as usize];
            self.parent[c as usize] = root;
            c = next;
        }
        root
    }

    /// Cluster containing the parentless node `top`, if any.
    pub fn cluster_of(&mut self, top: NodeId) -> Option<u32> {
        let c = self.of_node.get(top).0;
        (c != NONE).then(|| self.find(c))
    }

    pub fn is_cluster(&self, top: NodeId) -> bool {
        self.of_node.get(top).0 != NONE
    }

    fn direction(&self, c: u32) -> Direction {
        let d = &self.data[c as usize];
        if d.odd && d.virtual_touch.is_none() {
            Direction::Grow
        } else {
            Direction::Stay
        }
    }

    fn apply_direction(&self, dual: &mut DualModule, c: u32) -> Result<(), SolverError> {
        dual.set_direction(self.data[c as usize].node, self.direction(c))
    }

    /// Turns a single parentless node into a cluster of its own.
    pub fn make_cluster(
        &mut self,
        dual: &mut DualModule,
        node: NodeId,
        edges: Vec<(VertexIndex, VertexIndex)>,
        virtual_touch: Option<(VertexIndex, VertexIndex)>,
    ) -> Result<u32, SolverError> {
        let c = self.data.len() as u32;
        let odd = dual.defects_of(node).len() % 2 == 1;
        self.parent.push(c);
        self.size.push(1);
        self.data.push(ClusterData { node, odd, virtual_touch, edges });
        self.of_node.get_mut(node).0 = c;
        self.apply_direction(dual, c)?;
        Ok(c)
    }

    /// Merges the clusters (or plain nodes) at the given parentless nodes into
    /// one cluster, recording `edges` as tight. Returns the new dual node, or
    /// `None` when everything already formed one cluster.
    pub fn merge(
        &mut self,
        dual: &mut DualModule,
        trace: &mut Trace,
        tops: &[NodeId],
        edges: Vec<(VertexIndex, VertexIndex)>,
        virtual_touch: Option<(VertexIndex, VertexIndex)>,
    ) -> Result<Option<NodeId>, SolverError> {
        let mut roots = Vec::new();
        for &t in tops {
            let c = match self.cluster_of(t) {
                Some(c) => c,
                None => self.make_cluster(dual, t, Vec::new(), None)?,
            };
            if !roots.contains(&c) {
                roots.push(c);
            }
        }
        if roots.len() == 1 {
            let c = roots[0];
            self.data[c as usize].edges.extend(edges);
            if self.data[c as usize].virtual_touch.is_none() {
                self.data[c as usize].virtual_touch = virtual_touch;
            }
            self.apply_direction(dual, c)?;
            return Ok(None);
        }
        // union by size, lower id on ties
        let mut root = roots[0];
        for &c in &roots[1..] {
            if (self.size[c as usize], std::cmp::Reverse(c)) > (self.size[root as usize], std::cmp::Reverse(root)) {
                root = c;
            }
        }
        let members: Vec<NodeId> = roots.iter().map(|&c| self.data[c as usize].node).collect();
        let node = dual.create_cluster(&members)?;
        self.of_node.init(node);
        self.of_node.get_mut(node).0 = root;
        for &c in &roots {
            if c == root {
                continue;
            }
            self.parent[c as usize] = root;
            self.size[root as usize] += self.size[c as usize];
            let taken = std::mem::take(&mut self.data[c as usize].edges);
            let (odd, vt) = (self.data[c as usize].odd, self.data[c as usize].virtual_touch);
            let d = &mut self.data[root as usize];
            d.edges.extend(taken);
            d.odd ^= odd;
            if d.virtual_touch.is_none() {
                d.virtual_touch = vt;
            }
        }
        let d = &mut self.data[root as usize];
        d.node = node;
        d.edges.extend(edges);
        if d.virtual_touch.is_none() {
            d.virtual_touch = virtual_touch;
        }
        self.apply_direction(dual, root)?;
        trace.push(dual, TraceEvent::MergeClusters { node, members });
        Ok(Some(node))
    }

    /// Records that a growing cluster reached a virtual vertex.
    pub fn touch_virtual(
        &mut self,
        dual: &mut DualModule,
        trace: &mut Trace,
        top: NodeId,
        touch: VertexIndex,
        vertex: VertexIndex,
    ) -> Result<bool, SolverError> {
        let Some(c) = self.cluster_of(top) else { return Ok(false) };
        if self.direction(c) != Direction::Grow {
            return Ok(false);
        }
        self.data[c as usize].virtual_touch = Some((touch, vertex));
        self.apply_direction(dual, c)?;
        trace.push(dual, TraceEvent::ClusterTouchVirtual { node: top, vertex });
        Ok(true)
    }

    /// Pairs the defects of the cluster at `top` along a spanning forest of
    /// its tight edges: leaf-first, each subtree pairs what it can and hands
    /// at most one defect up; a leftover at the root goes to the boundary.
    pub fn extract(
        &mut self,
        dual: &DualModule,
        top: NodeId,
        inner_edges: &[(VertexIndex, VertexIndex)],
        paths: &mut ShortestPaths,
        out: &mut RawMatching,
    ) -> Result<(), SolverError> {
        let c = self.cluster_of(top).ok_or_else(|| SolverError::Invariant(format!("node {top} is not a cluster")))?;
        let data = &self.data[c as usize];
        let defects = dual.defects_of(top);
        let mut adjacency: HashMap<VertexIndex, Vec<VertexIndex>> = defects.iter().map(|&d| (d, Vec::new())).collect();
        for &(a, b) in data.edges.iter().chain(inner_edges) {
            if adjacency.contains_key(&a) && adjacency.contains_key(&b) && a != b {
                adjacency.get_mut(&a).unwrap().push(b);
                adjacency.get_mut(&b).unwrap().push(a);
            }
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let mut starts: Vec<VertexIndex> = Vec::new();
        if let Some((touch, _)) = data.virtual_touch {
            if adjacency.contains_key(&touch) {
                starts.push(touch);
            }
        }
        let mut sorted = defects.clone();
        sorted.sort_unstable();
        starts.extend(sorted);
        let mut parent: HashMap<VertexIndex, Option<VertexIndex>> = HashMap::new();
        let mut order = Vec::with_capacity(defects.len());
        for s in starts {
            if parent.contains_key(&s) {
                continue;
            }
            parent.insert(s, None);
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                order.push(x);
                for &z in &adjacency[&x] {
                    if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(z) {
                        e.insert(Some(x));
                        queue.push_back(z);
                    }
                }
            }
        }
        let mut carried: HashMap<VertexIndex, Vec<VertexIndex>> = HashMap::new();
        for &x in order.iter().rev() {
            let mut pending = carried.remove(&x).unwrap_or_default();
            pending.push(x);
            let mut it = pending.chunks_exact(2);
            for pair in &mut it {
                out.pairs.push((pair[0], pair[1]));
            }
            if let [left] = it.remainder() {
                match parent[&x] {
                    Some(p) => carried.entry(p).or_default().push(*left),
                    None => {
                        if data.virtual_touch.is_none() {
                            return Err(SolverError::Invariant(format!(
                                "cluster {top} has an unpaired defect {left} and no boundary"
                            )));
                        }
                        let (b, _) = paths.nearest_virtual(dual.graph(), *left).ok_or_else(|| {
                            SolverError::Invariant(format!("defect {left} cannot reach a virtual vertex"))
                        })?;
                        out.boundary.push((*left, b));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Every blossom nested anywhere inside `top`, including `top` itself.
pub fn nested_blossoms(dual: &DualModule, top: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![top];
    while let Some(n) = stack.pop() {
        let node = dual.node(n);
        if node.kind == NodeKind::Blossom {
            out.push(n);
        }
        stack.extend(node.children.iter().copied());
    }
    out
}
