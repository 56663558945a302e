//! Parity dual module: grows and shrinks node covers directly on the decoding
//! graph and reports the obstacles that stop growth.
//!
//! Every vertex has at most one owner, always a parentless node. An owned
//! vertex `x` remembers the defect whose growth reached it first and a
//! `base` value such that the owner's cover extends `reach(x) = y_owner -
//! base(x)` beyond `x`. Growing a node by `Δ` therefore raises the reach of
//! all its vertices without touching them; only claims and drops at the
//! frontier write vertex state. Per-edge coverage is derived: the owner of
//! `x` covers `max(0, reach(x))` of every edge incident to `x`, and dual
//! feasibility is `cover(x) + cover(z) <= w` whenever `x` and `z` have
//! different owners.
//!
//! Vertex and node storage lives in [`Region`]s so fusion can hand whole
//! instances over without copying. Stale vertex entries are recognised by a
//! per-region `u64` stamp, which makes reset O(regions).

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::error::SolverError;
use crate::graph::{EdgeIndex, ModelGraph, VertexIndex, Weight};
use crate::partition::{NodeId, Partition, RegionId};

const NO_VERTEX: VertexIndex = VertexIndex::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Grow,
    Stay,
    Shrink,
}

impl Direction {
    #[inline]
    pub fn rate(self) -> Weight {
        match self {
            Direction::Grow => 1,
            Direction::Stay => 0,
            Direction::Shrink => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    /// A single defect vertex.
    Leaf(VertexIndex),
    /// An odd cycle of tight children.
    Blossom,
    /// A union-find cluster: children merged without cycle structure.
    Cluster,
}

#[derive(Debug, Clone)]
pub struct DualNode {
    pub kind: NodeKind,
    pub y: Weight,
    pub direction: Direction,
    pub parent: Option<NodeId>,
    /// Blossom cycle order, or cluster members.
    pub children: Vec<NodeId>,
    /// False once a blossom has been expanded.
    pub alive: bool,
    owned: Vec<VertexIndex>,
    epoch: u64,
}

impl DualNode {
    fn new(kind: NodeKind) -> Self {
        Self {
            kind,
            y: 0,
            direction: Direction::Stay,
            parent: None,
            children: Vec::new(),
            alive: true,
            owned: Vec::new(),
            epoch: 0,
        }
    }

    pub fn is_top(&self) -> bool {
        self.alive && self.parent.is_none()
    }

    pub fn owned(&self) -> &[VertexIndex] {
        &self.owned
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct VertexState {
    stamp: u64,
    owner: Option<NodeId>,
    source: VertexIndex,
    parent_vertex: VertexIndex,
    base: Weight,
    leaf: Option<NodeId>,
}

/// Storage owned by one job: state of the region's vertices and the nodes
/// the job created.
#[derive(Debug, Clone)]
pub struct Region {
    id: RegionId,
    stamp: u64,
    vertices: Vec<VertexState>,
    nodes: Vec<DualNode>,
    live: usize,
}

impl Region {
    pub fn new(partition: &Partition, id: RegionId) -> Self {
        Self {
            id,
            stamp: 1,
            vertices: vec![VertexState::default(); partition.members(id).len()],
            nodes: Vec::new(),
            live: 0,
        }
    }

    pub fn id(&self) -> RegionId {
        self.id
    }

    /// Invalidates every vertex entry and node slot in O(1).
    pub fn reset(&mut self) {
        self.stamp += 1;
        self.live = 0;
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum Obstacle {
    /// Two nodes' covers meet on `edge`; the syndrome-graph edge between the
    /// two touch defects is tight.
    Conflict { node1: NodeId, node2: NodeId, edge: EdgeIndex, touch1: VertexIndex, touch2: VertexIndex },
    /// A growing node reached a virtual (or temporarily virtual) vertex.
    TouchVirtual { node: NodeId, vertex: VertexIndex, touch: VertexIndex },
    /// A shrinking blossom reached `y = 0`.
    BlossomMustExpand { node: NodeId },
}

impl Obstacle {
    fn sort_key(&self) -> (NodeId, NodeId, u8, u32) {
        match *self {
            Obstacle::Conflict { node1, node2, edge, .. } => (node1, node2, 0, edge),
            Obstacle::TouchVirtual { node, vertex, .. } => (node, node, 1, vertex),
            Obstacle::BlossomMustExpand { node } => (node, node, 2, 0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrowResult {
    pub delta: Weight,
    pub obstacles: Vec<Obstacle>,
}

/// A dual module instance over a contiguous range of regions. Vertices
/// outside that range behave as virtual.
#[derive(Debug, Clone)]
pub struct DualModule {
    graph: Arc<ModelGraph>,
    partition: Arc<Partition>,
    lo: RegionId,
    regions: Vec<Region>,
    active: BTreeSet<NodeId>,
    work: u64,
    touch_epoch: u64,
    touched: u64,
    scratch: Vec<NodeId>,
}

impl DualModule {
    /// Instance over the whole graph in a single region.
    pub fn whole(graph: Arc<ModelGraph>) -> Self {
        let partition = Arc::new(Partition::whole(graph.vertex_count()));
        let region = Region::new(&partition, 0);
        Self::from_region(graph, partition, region)
    }

    pub fn from_region(graph: Arc<ModelGraph>, partition: Arc<Partition>, region: Region) -> Self {
        Self {
            graph,
            partition,
            lo: region.id,
            regions: vec![region],
            active: BTreeSet::new(),
            work: 0,
            touch_epoch: 1,
            touched: 0,
            scratch: Vec::new(),
        }
    }

    /// Joins two adjacent instances and the region separating them. The
    /// separator region must come right after `right`.
    pub fn fuse(mut left: Self, right: Self, mut separator: Region) -> Result<Self, SolverError> {
        let left_hi = left.lo + left.regions.len() as RegionId;
        let right_hi = right.lo + right.regions.len() as RegionId;
        if left_hi != right.lo || right_hi != separator.id {
            return Err(SolverError::Contract(format!(
                "cannot fuse regions {}..{} and {}..{} with separator {}",
                left.lo, left_hi, right.lo, right_hi, separator.id
            )));
        }
        separator.reset();
        left.regions.extend(right.regions);
        left.regions.push(separator);
        left.active.extend(right.active);
        left.work += right.work;
        left.touch_epoch = left.touch_epoch.max(right.touch_epoch) + 1;
        left.touched = 0;
        Ok(left)
    }

    /// Gives back the region storage for reuse.
    pub fn into_regions(self) -> Vec<Region> {
        self.regions
    }

    pub fn reset(&mut self) {
        self.regions.iter_mut().for_each(Region::reset);
        self.active.clear();
    }

    pub fn graph(&self) -> &Arc<ModelGraph> {
        &self.graph
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn has_active(&self) -> bool {
        !self.active.is_empty()
    }

    pub fn region_range(&self) -> (RegionId, RegionId) {
        (self.lo, self.lo + self.regions.len() as RegionId - 1)
    }

    /// Edge scans plus vertex claims since construction.
    pub fn work(&self) -> u64 {
        self.work
    }

    /// Starts a new window for [`DualModule::touched_nodes`].
    pub fn begin_touch_window(&mut self) {
        self.touch_epoch += 1;
        self.touched = 0;
    }

    /// Distinct nodes read or written since the last window start.
    pub fn touched_nodes(&self) -> u64 {
        self.touched
    }

    // ---- vertex access ----

    #[inline]
    fn region_slot(&self, v: VertexIndex) -> Option<usize> {
        let r = self.partition.region_of(v);
        if r < self.lo {
            return None;
        }
        let slot = (r - self.lo) as usize;
        (slot < self.regions.len()).then_some(slot)
    }

    #[inline]
    pub fn in_range(&self, v: VertexIndex) -> bool {
        self.region_slot(v).is_some()
    }

    /// Virtual in the graph, or outside this instance's regions.
    #[inline]
    pub fn is_virtual(&self, v: VertexIndex) -> bool {
        self.graph.is_virtual(v) || !self.in_range(v)
    }

    #[inline]
    fn state(&self, v: VertexIndex) -> Option<&VertexState> {
        let slot = self.region_slot(v)?;
        let region = &self.regions[slot];
        let s = &region.vertices[self.partition.offset_of(v)];
        (s.stamp == region.stamp).then_some(s)
    }

    /// Panics when `v` is out of range; callers check first.
    fn state_mut(&mut self, v: VertexIndex) -> &mut VertexState {
        let slot = self.region_slot(v).expect("vertex outside instance");
        let offset = self.partition.offset_of(v);
        let region = &mut self.regions[slot];
        let stamp = region.stamp;
        let s = &mut region.vertices[offset];
        if s.stamp != stamp {
            *s = VertexState { stamp, source: NO_VERTEX, parent_vertex: NO_VERTEX, ..VertexState::default() };
        }
        s
    }

    #[inline]
    pub fn owner(&self, v: VertexIndex) -> Option<NodeId> {
        self.state(v).and_then(|s| s.owner)
    }

    pub fn is_defect(&self, v: VertexIndex) -> bool {
        self.state(v).is_some_and(|s| s.leaf.is_some())
    }

    pub fn leaf_of(&self, defect: VertexIndex) -> Option<NodeId> {
        self.state(defect).and_then(|s| s.leaf)
    }

    /// Defect whose growth first reached `v`, and the predecessor vertex on
    /// that path (none at the defect itself).
    pub fn source_of(&self, v: VertexIndex) -> Option<(VertexIndex, Option<VertexIndex>)> {
        let s = self.state(v)?;
        s.owner?;
        Some((s.source, (s.parent_vertex != NO_VERTEX).then_some(s.parent_vertex)))
    }

    /// How far the owner's cover extends beyond `v`; negative when the
    /// vertex is still owned but no longer covered.
    #[inline]
    pub fn reach(&self, v: VertexIndex) -> Option<Weight> {
        let s = self.state(v)?;
        let owner = s.owner?;
        Some(self.node(owner).y - s.base)
    }

    // ---- node access ----

    #[inline]
    pub fn node(&self, id: NodeId) -> &DualNode {
        &self.regions[(id.region - self.lo) as usize].nodes[id.index as usize]
    }

    #[inline]
    fn node_mut(&mut self, id: NodeId) -> &mut DualNode {
        &mut self.regions[(id.region - self.lo) as usize].nodes[id.index as usize]
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        id.region >= self.lo
            && ((id.region - self.lo) as usize) < self.regions.len()
            && (id.index as usize) < self.regions[(id.region - self.lo) as usize].live
    }

    /// All allocated nodes, including expanded blossoms and nested children.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &DualNode)> + '_ {
        self.regions.iter().flat_map(|r| {
            r.nodes[..r.live]
                .iter()
                .enumerate()
                .map(move |(i, n)| (NodeId { region: r.id, index: i as u32 }, n))
        })
    }

    pub fn top_nodes(&self) -> Vec<NodeId> {
        self.nodes().filter(|(_, n)| n.is_top()).map(|(id, _)| id).collect()
    }

    /// Outermost node containing `id`.
    pub fn top_of_node(&self, mut id: NodeId) -> NodeId {
        while let Some(p) = self.node(id).parent {
            id = p;
        }
        id
    }

    pub fn top_of(&self, defect: VertexIndex) -> Option<NodeId> {
        self.leaf_of(defect).map(|leaf| self.top_of_node(leaf))
    }

    /// `Σ y` over the ancestry of `defect`, i.e. the cover radius around it.
    pub fn ancestry_sum(&self, defect: VertexIndex) -> Option<Weight> {
        let mut id = self.leaf_of(defect)?;
        let mut sum = self.node(id).y;
        while let Some(p) = self.node(id).parent {
            id = p;
            sum += self.node(id).y;
        }
        Some(sum)
    }

    /// Ancestors of `defect`'s leaf, innermost first.
    pub fn ancestry(&self, defect: VertexIndex) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.leaf_of(defect);
        while let Some(id) = cur {
            out.push(id);
            cur = self.node(id).parent;
        }
        out
    }

    /// Defect vertices contained in node `id`.
    pub fn defects_of(&self, id: NodeId) -> Vec<VertexIndex> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.node(n).kind {
                NodeKind::Leaf(v) => out.push(v),
                _ => stack.extend(self.node(n).children.iter().rev()),
            }
        }
        out
    }

    /// `Σ y` over all nodes, the dual objective.
    pub fn dual_objective(&self) -> Weight {
        self.nodes().map(|(_, n)| n.y).sum()
    }

    fn touch(&mut self, id: NodeId) {
        let epoch = self.touch_epoch;
        let n = self.node_mut(id);
        if n.epoch != epoch {
            n.epoch = epoch;
            self.touched += 1;
        }
    }

    fn alloc(&mut self, kind: NodeKind) -> NodeId {
        let region = self.regions.last_mut().expect("instance has a region");
        let index = region.live;
        if index < region.nodes.len() {
            let slot = &mut region.nodes[index];
            let mut owned = std::mem::take(&mut slot.owned);
            let mut children = std::mem::take(&mut slot.children);
            owned.clear();
            children.clear();
            *slot = DualNode { owned, children, ..DualNode::new(kind) };
        } else {
            region.nodes.push(DualNode::new(kind));
        }
        region.live += 1;
        let id = NodeId { region: region.id, index: index as u32 };
        self.touch(id);
        id
    }

    // ---- operations ----

    /// Creates a growing leaf node for a defect vertex.
    pub fn add_defect(&mut self, v: VertexIndex) -> Result<NodeId, SolverError> {
        if v as usize >= self.graph.vertex_count() || !self.in_range(v) {
            return Err(SolverError::Contract(format!("defect {v} is outside this instance")));
        }
        if self.graph.is_virtual(v) {
            return Err(SolverError::Contract(format!("defect {v} is a virtual vertex")));
        }
        if let Some(s) = self.state(v) {
            if s.leaf.is_some() {
                return Err(SolverError::Contract(format!("defect {v} loaded twice")));
            }
            if let Some(owner) = s.owner {
                return Err(SolverError::Contract(format!("defect {v} is already covered by {owner}")));
            }
        }
        let id = self.alloc(NodeKind::Leaf(v));
        let s = self.state_mut(v);
        s.owner = Some(id);
        s.leaf = Some(id);
        s.source = v;
        s.parent_vertex = NO_VERTEX;
        s.base = 0;
        let n = self.node_mut(id);
        n.owned.push(v);
        n.direction = Direction::Grow;
        self.active.insert(id);
        Ok(id)
    }

    pub fn set_direction(&mut self, id: NodeId, direction: Direction) -> Result<(), SolverError> {
        if !self.contains_node(id) || !self.node(id).is_top() {
            return Err(SolverError::Contract(format!("direction set on non-top node {id}")));
        }
        self.touch(id);
        self.node_mut(id).direction = direction;
        if direction == Direction::Stay {
            self.active.remove(&id);
        } else {
            self.active.insert(id);
        }
        Ok(())
    }

    pub fn create_blossom(&mut self, cycle: &[NodeId]) -> Result<NodeId, SolverError> {
        if cycle.len() < 3 || cycle.len().is_multiple_of(2) {
            return Err(SolverError::Contract(format!("blossom cycle of length {} is not odd", cycle.len())));
        }
        self.create_group(cycle, NodeKind::Blossom)
    }

    /// Groups nodes into one cluster node whose cover grows as a unit.
    pub fn create_cluster(&mut self, members: &[NodeId]) -> Result<NodeId, SolverError> {
        if members.len() < 2 {
            return Err(SolverError::Contract("a cluster node needs at least two members".into()));
        }
        self.create_group(members, NodeKind::Cluster)
    }

    fn create_group(&mut self, children: &[NodeId], kind: NodeKind) -> Result<NodeId, SolverError> {
        let mut seen = HashSet::new();
        for &c in children {
            if !self.contains_node(c) || !self.node(c).is_top() || !seen.insert(c) {
                return Err(SolverError::Contract(format!("cannot group node {c}: not a distinct parentless node")));
            }
        }
        let id = self.alloc(kind);
        let mut owned = std::mem::take(&mut self.node_mut(id).owned);
        for &c in children {
            self.touch(c);
            self.active.remove(&c);
            let child = self.node_mut(c);
            child.parent = Some(id);
            child.direction = Direction::Stay;
            let y = child.y;
            let list = std::mem::take(&mut child.owned);
            for &x in &list {
                let s = self.state_mut(x);
                s.owner = Some(id);
                s.base -= y;
            }
            owned.extend_from_slice(&list);
        }
        let node = self.node_mut(id);
        node.owned = owned;
        node.children = children.to_vec();
        Ok(id)
    }

    /// Dissolves a parentless blossom with `y = 0`; returns its children in
    /// cycle order, all left with direction `Stay`.
    pub fn expand_blossom(&mut self, id: NodeId) -> Result<Vec<NodeId>, SolverError> {
        if !self.contains_node(id) || !self.node(id).is_top() {
            return Err(SolverError::Contract(format!("expand of non-top node {id}")));
        }
        let node = self.node(id);
        if node.kind != NodeKind::Blossom {
            return Err(SolverError::Contract(format!("expand of non-blossom node {id}")));
        }
        if node.y != 0 {
            return Err(SolverError::Contract(format!("expand of blossom {id} with y = {}", node.y)));
        }
        self.touch(id);
        self.active.remove(&id);
        let children = self.node(id).children.clone();
        for &c in &children {
            self.touch(c);
            let child = self.node_mut(c);
            child.parent = None;
            child.direction = Direction::Stay;
        }
        let owned = std::mem::take(&mut self.node_mut(id).owned);
        for &x in &owned {
            let source = self.state(x).map(|s| s.source).unwrap_or(NO_VERTEX);
            let leaf = self
                .leaf_of(source)
                .ok_or_else(|| SolverError::Invariant(format!("vertex {x} of blossom {id} has no source leaf")))?;
            let mut child = leaf;
            while let Some(p) = self.node(child).parent {
                if p == id {
                    break;
                }
                child = p;
            }
            let y = self.node(child).y;
            let s = self.state_mut(x);
            s.owner = Some(child);
            s.base += y;
            self.node_mut(child).owned.push(x);
        }
        let node = self.node_mut(id);
        node.alive = false;
        node.direction = Direction::Stay;
        Ok(children)
    }

    /// Advances all covers by the largest feasible amount and reports the
    /// obstacles at the new frontier. Returns `Δ = 0` with obstacles when the
    /// frontier is already blocked, and `Δ = 0` without obstacles when no node
    /// is active.
    pub fn grow_until_obstacles(&mut self) -> Result<GrowResult, SolverError> {
        let mut total = 0;
        loop {
            self.scratch.clear();
            self.scratch.extend(self.active.iter().copied());
            if self.scratch.is_empty() {
                return Ok(GrowResult { delta: total, obstacles: Vec::new() });
            }
            let active = std::mem::take(&mut self.scratch);
            self.prepare(&active);
            let scan = self.scan(&active);
            self.scratch = active;
            let (obstacles, limit) = scan?;
            if !obstacles.is_empty() {
                return Ok(GrowResult { delta: total, obstacles });
            }
            let delta = match limit {
                None => return Err(SolverError::NoPerfectMatching),
                Some(0) => {
                    return Err(SolverError::Invariant(format!(
                        "growth blocked without an obstacle; state: {}",
                        self.dump()
                    )))
                }
                Some(d) => d,
            };
            for i in 0..self.scratch.len() {
                let id = self.scratch[i];
                let node = self.node_mut(id);
                node.y += node.direction.rate() * delta;
                debug_assert!(node.y >= 0);
            }
            total += delta;
        }
    }

    /// Drops uncovered vertices of shrinking nodes, then lets growing nodes
    /// claim every unowned vertex their cover has fully reached, following
    /// zero-weight edges through whole islands.
    fn prepare(&mut self, active: &[NodeId]) {
        for &id in active {
            self.touch(id);
            if self.node(id).direction != Direction::Shrink {
                continue;
            }
            let y = self.node(id).y;
            let owned = std::mem::take(&mut self.node_mut(id).owned);
            let mut kept = Vec::with_capacity(owned.len());
            for x in owned {
                let s = self.state(x).expect("owned vertex has state");
                if s.leaf.is_some() || y - s.base > 0 {
                    kept.push(x);
                } else {
                    self.work += 1;
                    self.state_mut(x).owner = None;
                }
            }
            self.node_mut(id).owned = kept;
        }
        for &id in active {
            if self.node(id).direction != Direction::Grow {
                continue;
            }
            let y = self.node(id).y;
            let graph = Arc::clone(&self.graph);
            let mut owned = std::mem::take(&mut self.node_mut(id).owned);
            let mut i = 0;
            while i < owned.len() {
                let x = owned[i];
                i += 1;
                let (base, source) = {
                    let s = self.state(x).expect("owned vertex has state");
                    (s.base, s.source)
                };
                let reach = y - base;
                for nb in graph.neighbors(x) {
                    if reach < nb.weight || self.is_virtual(nb.vertex) || self.owner(nb.vertex).is_some() {
                        continue;
                    }
                    self.work += 1;
                    let s = self.state_mut(nb.vertex);
                    s.owner = Some(id);
                    s.source = source;
                    s.parent_vertex = x;
                    s.base = base + nb.weight;
                    owned.push(nb.vertex);
                }
            }
            self.node_mut(id).owned = owned;
        }
    }

    /// Collects obstacles and the maximal growth step from the frontier.
    fn scan(&mut self, active: &[NodeId]) -> Result<(Vec<Obstacle>, Option<Weight>), SolverError> {
        let mut limit: Option<Weight> = None;
        let mut bound = |d: Weight| limit = Some(limit.map_or(d, |l: Weight| l.min(d)));
        let mut conflicts = Vec::new();
        let mut others = Vec::new();
        let mut stalled_leaves = Vec::new();
        let mut work = 0u64;
        let mut touched = Vec::new();
        for &id in active {
            let node = self.node(id);
            let y = node.y;
            let dir = node.direction;
            if dir == Direction::Shrink {
                if y == 0 {
                    match node.kind {
                        NodeKind::Leaf(v) => stalled_leaves.push((id, v)),
                        NodeKind::Blossom => others.push(Obstacle::BlossomMustExpand { node: id }),
                        NodeKind::Cluster => {
                            return Err(SolverError::Contract(format!("cluster node {id} set to shrink")));
                        }
                    }
                    continue;
                }
                bound(y);
                for &x in &node.owned {
                    let s = self.state(x).expect("owned vertex has state");
                    if s.leaf.is_none() {
                        bound(y - s.base);
                    }
                }
                continue;
            }
            // growing
            for &x in &node.owned {
                let s = self.state(x).expect("owned vertex has state");
                let rx = y - s.base;
                let cx = rx.max(0);
                for nb in self.graph.neighbors(x) {
                    work += 1;
                    let (z, w) = (nb.vertex, nb.weight);
                    if self.is_virtual(z) {
                        if rx >= w {
                            others.push(Obstacle::TouchVirtual { node: id, vertex: z, touch: s.source });
                        } else {
                            bound(w - cx);
                        }
                        continue;
                    }
                    let Some(zs) = self.state(z).filter(|zs| zs.owner.is_some()) else {
                        if rx >= w {
                            return Err(SolverError::Invariant(format!(
                                "vertex {z} is reached by node {id} but unclaimed"
                            )));
                        }
                        bound(w - cx);
                        continue;
                    };
                    let other = zs.owner.unwrap();
                    if other == id {
                        continue;
                    }
                    let other_node = self.node(other);
                    let rate = 1 + other_node.direction.rate();
                    if rate <= 0 {
                        continue;
                    }
                    let cz = (other_node.y - zs.base).max(0);
                    let slack = w - cx - cz;
                    if slack < 0 {
                        return Err(SolverError::Invariant(format!(
                            "edge {} over-covered by {id} and {other}: {cx} + {cz} > {w}",
                            nb.edge
                        )));
                    }
                    if slack == 0 {
                        touched.push(other);
                        let (node1, touch1, node2, touch2) =
                            if id < other { (id, s.source, other, zs.source) } else { (other, zs.source, id, s.source) };
                        conflicts.push(Obstacle::Conflict { node1, node2, edge: nb.edge, touch1, touch2 });
                    } else if rate == 2 {
                        if slack % 2 != 0 {
                            return Err(SolverError::Invariant(format!(
                                "odd slack {slack} between growing nodes {id} and {other} on edge {}",
                                nb.edge
                            )));
                        }
                        bound(slack / 2);
                    } else {
                        bound(slack);
                    }
                }
            }
        }
        let mut unresolved = Vec::new();
        for (id, v) in stalled_leaves {
            match self.shrink_stop_conflict(id, v) {
                Some(c) => conflicts.push(c),
                None => unresolved.push(id),
            }
        }
        self.work += work;
        for t in touched {
            self.touch(t);
        }
        conflicts.sort_by_key(Obstacle::sort_key);
        let mut seen_edges = HashSet::new();
        conflicts.retain(|c| match c {
            Obstacle::Conflict { edge, .. } => seen_edges.insert(*edge),
            _ => true,
        });
        others.sort_by_key(Obstacle::sort_key);
        others.dedup();
        let mut obstacles = conflicts;
        obstacles.extend(others);
        obstacles.sort_by_key(Obstacle::sort_key);
        if obstacles.is_empty() && !unresolved.is_empty() {
            return Err(SolverError::Invariant(format!(
                "shrinking leaf {} reached y = 0 with no conflict around it; state: {}",
                unresolved[0],
                self.dump()
            )));
        }
        Ok((obstacles, limit))
    }

    /// A shrinking leaf at `y = 0` sits between nodes whose covers reach its
    /// vertex; report a conflict between two of them that are not both
    /// stationary. This is the obstacle the leaf itself hides.
    fn shrink_stop_conflict(&self, id: NodeId, v: VertexIndex) -> Option<Obstacle> {
        let mut around: Vec<(NodeId, EdgeIndex, VertexIndex)> = Vec::new();
        for nb in self.graph.neighbors(v) {
            if self.is_virtual(nb.vertex) {
                continue;
            }
            let Some(s) = self.state(nb.vertex) else { continue };
            let Some(owner) = s.owner else { continue };
            if owner != id && self.node(owner).y - s.base >= nb.weight {
                around.push((owner, nb.edge, s.source));
            }
        }
        around.sort();
        around.dedup_by_key(|a| a.0);
        for i in 0..around.len() {
            for j in (i + 1)..around.len() {
                let (a, b) = (around[i], around[j]);
                if self.node(a.0).direction.rate() + self.node(b.0).direction.rate() > 0 {
                    return Some(Obstacle::Conflict { node1: a.0, node2: b.0, edge: a.1, touch1: a.2, touch2: b.2 });
                }
            }
        }
        None
    }

    // ---- checks and dumps ----

    /// Per-edge dual feasibility over every edge with an owned endpoint:
    /// covers of different owners never overlap, and no cover passes a
    /// virtual vertex. Returns one message per violation.
    pub fn coverage_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for region in &self.regions {
            for &x in self.partition.members(region.id) {
                let Some(owner) = self.owner(x) else { continue };
                let rx = self.reach(x).unwrap();
                for nb in self.graph.neighbors(x) {
                    let z = nb.vertex;
                    if self.is_virtual(z) {
                        if rx > nb.weight {
                            out.push(format!("node {owner} passes virtual vertex {z} on edge {}", nb.edge));
                        }
                        continue;
                    }
                    match self.owner(z) {
                        Some(o) if o == owner => {}
                        Some(_) => {
                            let rz = self.reach(z).unwrap();
                            if x < z && rx.max(0) + rz.max(0) > nb.weight {
                                out.push(format!("edge {} over-covered: {} + {} > {}", nb.edge, rx, rz, nb.weight));
                            }
                        }
                        None => {
                            if rx > nb.weight {
                                out.push(format!("node {owner} passes unclaimed vertex {z}"));
                            }
                        }
                    }
                }
            }
        }
        for (id, n) in self.nodes() {
            if n.y < 0 {
                out.push(format!("node {id} has negative y = {}", n.y));
            }
        }
        out
    }

    /// Owner table and per-edge growth as JSON, for debugging and tests.
    pub fn dump(&self) -> serde_json::Value {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for region in &self.regions {
            for &x in self.partition.members(region.id) {
                let Some(s) = self.state(x) else { continue };
                let Some(owner) = s.owner else { continue };
                vertices.push(json!({
                    "vertex": x,
                    "owner": owner.to_string(),
                    "source": s.source,
                    "parent": (s.parent_vertex != NO_VERTEX).then_some(s.parent_vertex),
                    "reach": self.node(owner).y - s.base,
                }));
            }
        }
        for (index, e) in self.graph.edges().iter().enumerate() {
            if !self.in_range(e.u) && !self.in_range(e.v) {
                continue;
            }
            let grow = |a: VertexIndex, b: VertexIndex| -> Weight {
                match (self.owner(a), self.owner(b)) {
                    (Some(oa), ob) if Some(oa) != ob => self.reach(a).unwrap().clamp(0, e.weight),
                    _ => 0,
                }
            };
            let (gu, gv) = (grow(e.u, e.v), grow(e.v, e.u));
            if gu > 0 || gv > 0 {
                edges.push(json!({ "edge": index, "growth_from_u": gu, "growth_from_v": gv, "weight": e.weight }));
            }
        }
        let nodes: Vec<_> = self
            .nodes()
            .map(|(id, n)| {
                json!({
                    "id": id.to_string(),
                    "kind": n.kind,
                    "y": n.y,
                    "direction": n.direction,
                    "parent": n.parent.map(|p| p.to_string()),
                    "alive": n.alive,
                })
            })
            .collect();
        json!({ "nodes": nodes, "vertices": vertices, "edges": edges })
    }
}
