//! Standard primal module: alternating trees, augmentation, blossoms, and
//! matching to virtual vertices, with all trees growing simultaneously.
//!
//! Matches and tree links are stored as pairs of touch defects (one inside
//! each node) rather than node ids. The current parentless node behind a
//! touch is always `dual.top_of(touch)`, so links stay valid when nodes are
//! wrapped into or released from blossoms.
//!
//! An optional tree-size limit turns any alternating tree that grows past it
//! into a union-find cluster; limit 0 is the Union-Find decoder and no limit
//! is exact matching.

use std::collections::{BTreeMap, HashSet};

use crate::dual::{Direction, DualModule, NodeKind, Obstacle};
use crate::error::SolverError;
use crate::framework::{PrimalModule, RawMatching, Trace, TraceEvent};
use crate::graph::VertexIndex;
use crate::partition::{NodeId, NodeMap, RegionId, Segment};
use crate::paths::ShortestPaths;
use crate::primal::cluster::{nested_blossoms, ClusterSet};
use crate::primal::union_find::top;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Match {
    /// `mine` is a defect inside this node, `peer` one inside the partner.
    Peer { mine: VertexIndex, peer: VertexIndex },
    Virtual { mine: VertexIndex, vertex: VertexIndex },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Link {
    mine: VertexIndex,
    theirs: VertexIndex,
}

#[derive(Debug, Clone)]
struct TreeNode {
    plus: bool,
    parent: Option<Link>,
    children: Vec<Link>,
}

#[derive(Debug, Clone, Default)]
pub struct PrimalNode {
    matched: Option<Match>,
    tree: Option<TreeNode>,
    /// Blossoms only: edge `i` joins cycle child `i` to child `i + 1`.
    cycle: Vec<(VertexIndex, VertexIndex)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Plus,
    Minus,
    MatchedPeer,
    MatchedVirtual,
    Free,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Defect(VertexIndex),
    Virtual(VertexIndex),
}

#[derive(Debug, Clone)]
pub struct StandardPrimal {
    nodes: NodeMap<PrimalNode>,
    clusters: ClusterSet,
    limit: Option<usize>,
    trace: Trace,
    /// Nodes matched to a temporarily virtual vertex, keyed by the region
    /// (fusion job) that vertex belongs to.
    pending: BTreeMap<RegionId, Vec<NodeId>>,
    dirty_roots: Vec<NodeId>,
}

impl Default for StandardPrimal {
    fn default() -> Self {
        Self::new()
    }
}

impl StandardPrimal {
    pub fn new() -> Self {
        Self::in_region(0)
    }

    /// Exact module whose nodes live in `region` (fusion leaves).
    pub fn in_region(region: RegionId) -> Self {
        Self::build(region, None)
    }

    /// Trees with more than `limit` nodes become union-find clusters.
    pub fn with_tree_size_limit(limit: Option<usize>) -> Self {
        Self::build(0, limit)
    }

    fn build(region: RegionId, limit: Option<usize>) -> Self {
        Self {
            nodes: NodeMap::new(region),
            clusters: ClusterSet::new(region),
            limit,
            trace: Trace::default(),
            pending: BTreeMap::new(),
            dirty_roots: Vec::new(),
        }
    }

    pub fn limit(&self) -> Option<usize> {
        self.limit
    }

    // ---- fusion ----

    /// Joins two modules of adjacent fusion subtrees.
    pub fn fuse(mut left: Self, right: Self, segment: Segment<PrimalNode>) -> Self {
        assert!(left.limit.is_none() && right.limit.is_none(), "only exact modules take part in fusion");
        left.nodes = left.nodes.fuse(right.nodes, segment);
        left.clusters = left.clusters.fuse(right.clusters);
        for (k, mut v) in right.pending {
            left.pending.entry(k).or_default().append(&mut v);
        }
        if left.trace.enabled() {
            let lines = right.trace.lines().to_vec();
            left.trace.extend(lines);
        }
        left
    }

    pub fn into_segments(self) -> (RegionId, Vec<Segment<PrimalNode>>) {
        self.nodes.into_segments()
    }

    pub fn from_segment(region: RegionId, segment: Segment<PrimalNode>) -> Self {
        let mut s = Self::in_region(region);
        s.nodes = NodeMap::from_segment(region, segment);
        s
    }

    /// Breaks every match into the boundary region `region`, which is about
    /// to become ordinary, and makes those nodes fresh plus roots. Returns the
    /// number of nodes released.
    pub fn release_boundary(&mut self, dual: &mut DualModule, region: RegionId) -> Result<usize, SolverError> {
        let Some(list) = self.pending.remove(&region) else { return Ok(0) };
        let partition = std::sync::Arc::clone(dual.partition());
        let mut released = 0;
        for node in list {
            if !dual.contains_node(node) || !dual.node(node).is_top() {
                continue;
            }
            match self.nodes.get(node).matched {
                Some(Match::Virtual { vertex, .. }) if partition.region_of(vertex) == region => {}
                _ => continue,
            }
            let p = self.nodes.get_mut(node);
            p.matched = None;
            p.tree = Some(TreeNode { plus: true, parent: None, children: Vec::new() });
            dual.set_direction(node, Direction::Grow)?;
            released += 1;
        }
        Ok(released)
    }

    // ---- helpers ----

    fn init(&mut self, node: NodeId) {
        self.nodes.init(node);
        self.clusters.init_node(node);
    }

    fn state(&self, node: NodeId) -> State {
        if self.clusters.is_cluster(node) {
            return State::Cluster;
        }
        let p = self.nodes.get(node);
        match (&p.tree, p.matched) {
            (Some(t), _) if t.plus => State::Plus,
            (Some(_), _) => State::Minus,
            (None, Some(Match::Peer { .. })) => State::MatchedPeer,
            (None, Some(Match::Virtual { .. })) => State::MatchedVirtual,
            (None, None) => State::Free,
        }
    }

    fn tree(&self, node: NodeId) -> Result<&TreeNode, SolverError> {
        self.nodes.get(node).tree.as_ref().ok_or_else(|| SolverError::Invariant(format!("node {node} is not in a tree")))
    }

    fn tree_parent(&self, dual: &DualModule, node: NodeId) -> Result<Option<NodeId>, SolverError> {
        match self.tree(node)?.parent {
            Some(l) => Ok(Some(top(dual, l.theirs)?)),
            None => Ok(None),
        }
    }

    /// Path from `node` up to its tree root, inclusive.
    fn path_to_root(&self, dual: &DualModule, node: NodeId) -> Result<Vec<NodeId>, SolverError> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.tree_parent(dual, cur)? {
            if path.len() > 1 << 24 {
                return Err(SolverError::Invariant("cycle in alternating tree".into()));
            }
            path.push(p);
            cur = p;
        }
        Ok(path)
    }

    fn root_of(&self, dual: &DualModule, node: NodeId) -> Result<NodeId, SolverError> {
        Ok(*self.path_to_root(dual, node)?.last().unwrap())
    }

    fn tree_nodes(&self, dual: &DualModule, root: NodeId) -> Result<Vec<NodeId>, SolverError> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            let n = out[i];
            i += 1;
            for l in &self.tree(n)?.children {
                out.push(top(dual, l.theirs)?);
            }
        }
        Ok(out)
    }

    fn dissolve(&mut self, dual: &mut DualModule, nodes: &[NodeId]) -> Result<(), SolverError> {
        for &n in nodes {
            self.nodes.get_mut(n).tree = None;
            dual.set_direction(n, Direction::Stay)?;
        }
        Ok(())
    }

    /// Gives `node` the match `new` and flips the alternating path above it.
    fn augment_path(&mut self, dual: &DualModule, node: NodeId, new: Match) -> Result<(), SolverError> {
        let mut cur = node;
        let mut m = new;
        loop {
            let parent = self.tree(cur)?.parent;
            self.nodes.get_mut(cur).matched = Some(m);
            let Some(pl) = parent else { break };
            let minus = top(dual, pl.theirs)?;
            let gl = self.tree(minus)?.parent.ok_or_else(|| {
                SolverError::Invariant(format!("minus node {minus} has no parent in its tree"))
            })?;
            self.nodes.get_mut(minus).matched = Some(Match::Peer { mine: gl.mine, peer: gl.theirs });
            m = Match::Peer { mine: gl.theirs, peer: gl.mine };
            cur = top(dual, gl.theirs)?;
        }
        Ok(())
    }

    fn note_virtual_match(&mut self, dual: &DualModule, node: NodeId, vertex: VertexIndex) {
        if !dual.graph().is_virtual(vertex) {
            let region = dual.partition().region_of(vertex);
            self.pending.entry(region).or_default().push(node);
        }
    }

    fn mark_dirty(&mut self, node: NodeId) {
        if self.limit.is_some() {
            self.dirty_roots.push(node);
        }
    }

    // ---- actions ----

    fn match_virtual(&mut self, dual: &mut DualModule, node: NodeId, touch: VertexIndex, vertex: VertexIndex) -> Result<(), SolverError> {
        let root = self.root_of(dual, node)?;
        let members = self.tree_nodes(dual, root)?;
        self.augment_path(dual, node, Match::Virtual { mine: touch, vertex })?;
        self.dissolve(dual, &members)?;
        self.note_virtual_match(dual, node, vertex);
        self.trace.push(dual, TraceEvent::MatchVirtual { node, vertex });
        Ok(())
    }

    /// `a` is plus; `b` is plus in another tree or matched to a virtual vertex.
    fn augment(&mut self, dual: &mut DualModule, a: NodeId, ta: VertexIndex, b: NodeId, tb: VertexIndex) -> Result<(), SolverError> {
        let mut members = self.tree_nodes(dual, self.root_of(dual, a)?)?;
        let b_in_tree = self.nodes.get(b).tree.is_some();
        if b_in_tree {
            members.extend(self.tree_nodes(dual, self.root_of(dual, b)?)?);
        }
        self.augment_path(dual, a, Match::Peer { mine: ta, peer: tb })?;
        if b_in_tree {
            self.augment_path(dual, b, Match::Peer { mine: tb, peer: ta })?;
        } else {
            self.nodes.get_mut(b).matched = Some(Match::Peer { mine: tb, peer: ta });
        }
        self.dissolve(dual, &members)?;
        self.trace.push(dual, TraceEvent::Augment { node1: a, node2: b });
        Ok(())
    }

    /// Attaches the matched pair containing `b` below plus node `a`.
    fn grow_tree(&mut self, dual: &mut DualModule, a: NodeId, ta: VertexIndex, b: NodeId, tb: VertexIndex) -> Result<(), SolverError> {
        let Some(Match::Peer { mine: bm, peer: cp }) = self.nodes.get(b).matched else {
            return Err(SolverError::Invariant(format!("node {b} is not matched to a peer")));
        };
        let c = top(dual, cp)?;
        if self.nodes.get(c).tree.is_some() {
            return Err(SolverError::Invariant(format!("partner {c} of free node {b} is in a tree")));
        }
        self.nodes.get_mut(a).tree.as_mut().unwrap().children.push(Link { mine: ta, theirs: tb });
        self.nodes.get_mut(b).tree =
            Some(TreeNode { plus: false, parent: Some(Link { mine: tb, theirs: ta }), children: vec![Link { mine: bm, theirs: cp }] });
        self.nodes.get_mut(c).tree = Some(TreeNode { plus: true, parent: Some(Link { mine: cp, theirs: bm }), children: vec![] });
        dual.set_direction(b, Direction::Shrink)?;
        dual.set_direction(c, Direction::Grow)?;
        self.trace.push(dual, TraceEvent::GrowTree { plus: a, minus: b, child: c });
        let root = self.root_of(dual, a)?;
        self.mark_dirty(root);
        Ok(())
    }

    /// Two plus nodes of the same tree touch: contract the odd cycle through
    /// their lowest common ancestor.
    fn form_blossom(&mut self, dual: &mut DualModule, a: NodeId, ta: VertexIndex, b: NodeId, tb: VertexIndex) -> Result<(), SolverError> {
        let path_a = self.path_to_root(dual, a)?;
        let path_b = self.path_to_root(dual, b)?;
        let on_b: HashSet<NodeId> = path_b.iter().copied().collect();
        let ia = path_a.iter().position(|n| on_b.contains(n)).ok_or_else(|| SolverError::Invariant("no common ancestor".into()))?;
        let lca = path_a[ia];
        let ib = path_b.iter().position(|&n| n == lca).unwrap();
        let mut cycle: Vec<NodeId> = path_a[..=ia].iter().rev().copied().collect();
        cycle.extend_from_slice(&path_b[..ib]);
        let mut edges = Vec::with_capacity(cycle.len());
        for k in (1..=ia).rev() {
            let l = self.tree(path_a[k - 1])?.parent.unwrap();
            edges.push((l.theirs, l.mine));
        }
        edges.push((ta, tb));
        for &child in &path_b[..ib] {
            let l = self.tree(child)?.parent.unwrap();
            edges.push((l.mine, l.theirs));
        }
        let in_cycle: HashSet<NodeId> = cycle.iter().copied().collect();
        let mut outside = Vec::new();
        for &n in &cycle {
            for l in self.tree(n)?.children.clone() {
                if !in_cycle.contains(&top(dual, l.theirs)?) {
                    outside.push(l);
                }
            }
        }
        let parent = self.tree(lca)?.parent;
        let matched = self.nodes.get(lca).matched;
        let blossom = dual.create_blossom(&cycle)?;
        self.init(blossom);
        for &n in &cycle {
            self.nodes.get_mut(n).tree = None;
        }
        *self.nodes.get_mut(blossom) =
            PrimalNode { matched, tree: Some(TreeNode { plus: true, parent, children: outside }), cycle: edges };
        dual.set_direction(blossom, Direction::Grow)?;
        self.trace.push(dual, TraceEvent::CreateBlossom { blossom, cycle });
        let root = self.root_of(dual, blossom)?;
        self.mark_dirty(root);
        Ok(())
    }

    /// Expands a minus blossom at `y = 0` and re-threads the tree through the
    /// even-length arc of its cycle joining the parent and child attachments.
    /// Returns a touch inside the child now attached to the tree parent.
    fn expand_minus(&mut self, dual: &mut DualModule, blossom: NodeId) -> Result<VertexIndex, SolverError> {
        let tree = self.tree(blossom)?.clone();
        let parent = tree.parent.ok_or_else(|| SolverError::Invariant(format!("minus blossom {blossom} has no parent")))?;
        let Some(Match::Peer { mine: m_in, .. }) = self.nodes.get(blossom).matched else {
            return Err(SolverError::Invariant(format!("minus blossom {blossom} is not matched to a peer")));
        };
        let edges = self.nodes.get(blossom).cycle.clone();
        let children = dual.expand_blossom(blossom)?;
        let n = children.len();
        for &c in &children {
            let p = self.nodes.get_mut(c);
            p.tree = None;
            p.matched = None;
        }
        let index = |dual: &DualModule, v: VertexIndex| -> Result<usize, SolverError> {
            let t = top(dual, v)?;
            children.iter().position(|&c| c == t).ok_or_else(|| SolverError::Invariant(format!("touch {v} not in expanded blossom")))
        };
        let ip = index(dual, parent.mine)?;
        let im = index(dual, m_in)?;
        let forward = (im + n - ip) % n;
        let (steps, step): (usize, isize) = if forward % 2 == 0 { (forward, 1) } else { (n - forward, -1) };
        // edge leaving child i in direction `step`, as (touch in i, touch in next)
        let edge_from = |i: usize| -> (VertexIndex, VertexIndex) {
            if step == 1 {
                edges[i]
            } else {
                let e = edges[(i + n - 1) % n];
                (e.1, e.0)
            }
        };
        let at = |k: usize| -> usize { ((ip as isize + step * k as isize).rem_euclid(n as isize)) as usize };
        for k in 0..=steps {
            let c = children[at(k)];
            let minus = k % 2 == 0;
            let parent_link = if k == 0 {
                parent
            } else {
                let e = edge_from(at(k - 1));
                Link { mine: e.1, theirs: e.0 }
            };
            let child_links = if k == steps {
                tree.children.clone()
            } else {
                let e = edge_from(at(k));
                vec![Link { mine: e.0, theirs: e.1 }]
            };
            let matched = if k == steps {
                self.nodes.get(blossom).matched
            } else if minus {
                let e = edge_from(at(k));
                Some(Match::Peer { mine: e.0, peer: e.1 })
            } else {
                Some(Match::Peer { mine: parent_link.mine, peer: parent_link.theirs })
            };
            let p = self.nodes.get_mut(c);
            p.tree = Some(TreeNode { plus: !minus, parent: Some(parent_link), children: child_links });
            p.matched = matched;
            dual.set_direction(c, if minus { Direction::Shrink } else { Direction::Grow })?;
        }
        // the rest of the cycle pairs up along cycle edges and leaves the tree
        let mut k = steps + 1;
        while k < n {
            let (x, y) = (at(k), at(k + 1));
            let e = edge_from(x);
            self.nodes.get_mut(children[x]).matched = Some(Match::Peer { mine: e.0, peer: e.1 });
            self.nodes.get_mut(children[y]).matched = Some(Match::Peer { mine: e.1, peer: e.0 });
            k += 2;
        }
        let node = self.nodes.get_mut(blossom);
        node.tree = None;
        node.matched = None;
        self.trace.push(dual, TraceEvent::ExpandBlossom { blossom, children });
        Ok(parent.mine)
    }

    /// Conflict where at least one side is a cluster: the other side's whole
    /// structure (tree or matched pair) joins the cluster.
    fn absorb(&mut self, dual: &mut DualModule, a: NodeId, ta: VertexIndex, b: NodeId, tb: VertexIndex) -> Result<(), SolverError> {
        let mut tops = vec![a, b];
        let mut edges = vec![(ta, tb)];
        let mut virtual_touch = None;
        for x in [a, b] {
            if self.clusters.is_cluster(x) {
                continue;
            }
            let (group, e, v) = self.component(dual, x)?;
            tops.extend(group);
            edges.extend(e);
            virtual_touch = virtual_touch.or(v);
        }
        tops.sort();
        tops.dedup();
        self.merge_into_cluster(dual, &tops, edges, virtual_touch)
    }

    /// The tree or matched pair around `x`, with its tight edges; primal
    /// state of those nodes is cleared.
    #[allow(clippy::type_complexity)]
    fn component(
        &mut self,
        dual: &mut DualModule,
        x: NodeId,
    ) -> Result<(Vec<NodeId>, Vec<(VertexIndex, VertexIndex)>, Option<(VertexIndex, VertexIndex)>), SolverError> {
        let group = match (self.nodes.get(x).tree.is_some(), self.nodes.get(x).matched) {
            (true, _) => self.tree_nodes(dual, self.root_of(dual, x)?)?,
            (false, Some(Match::Peer { peer, .. })) => vec![x, top(dual, peer)?],
            _ => vec![x],
        };
        let mut edges = Vec::new();
        let mut virtual_touch = None;
        for &n in &group {
            let p = self.nodes.get(n);
            if let Some(l) = p.tree.as_ref().and_then(|t| t.parent) {
                edges.push((l.mine, l.theirs));
            }
            match p.matched {
                Some(Match::Peer { mine, peer }) => edges.push((mine, peer)),
                Some(Match::Virtual { mine, vertex }) => virtual_touch = Some((mine, vertex)),
                None => {}
            }
        }
        for &n in &group {
            let p = self.nodes.get_mut(n);
            p.tree = None;
            p.matched = None;
        }
        Ok((group, edges, virtual_touch))
    }

    fn merge_into_cluster(
        &mut self,
        dual: &mut DualModule,
        tops: &[NodeId],
        edges: Vec<(VertexIndex, VertexIndex)>,
        virtual_touch: Option<(VertexIndex, VertexIndex)>,
    ) -> Result<(), SolverError> {
        for &t in tops {
            if !self.clusters.is_cluster(t) {
                self.nodes.get_mut(t).tree = None;
            }
        }
        if let Some(node) = self.clusters.merge(dual, &mut self.trace, tops, edges, virtual_touch)? {
            self.nodes.init(node);
        }
        Ok(())
    }

    /// Converts trees that outgrew the size limit into clusters.
    fn enforce_limit(&mut self, dual: &mut DualModule) -> Result<(), SolverError> {
        let Some(limit) = self.limit else { return Ok(()) };
        let dirty = std::mem::take(&mut self.dirty_roots);
        let mut seen = HashSet::new();
        for n in dirty {
            if !dual.contains_node(n) || !dual.node(n).is_top() || self.nodes.get(n).tree.is_none() {
                continue;
            }
            let root = self.root_of(dual, n)?;
            if !seen.insert(root) {
                continue;
            }
            let members = self.tree_nodes(dual, root)?;
            if members.len() > limit {
                let (group, edges, virtual_touch) = self.component(dual, root)?;
                if group.len() == 1 {
                    self.clusters.make_cluster(dual, group[0], edges, virtual_touch)?;
                } else {
                    self.merge_into_cluster(dual, &group, edges, virtual_touch)?;
                }
            }
        }
        Ok(())
    }

    fn on_conflict(&mut self, dual: &mut DualModule, t1: VertexIndex, t2: VertexIndex) -> Result<bool, SolverError> {
        let (a, b) = (top(dual, t1)?, top(dual, t2)?);
        if a == b {
            return Ok(false);
        }
        let (sa, sb) = (self.state(a), self.state(b));
        use State::*;
        match (sa, sb) {
            (Cluster, _) | (_, Cluster) => self.absorb(dual, a, t1, b, t2)?,
            (Plus, Plus) => {
                if self.root_of(dual, a)? != self.root_of(dual, b)? {
                    self.augment(dual, a, t1, b, t2)?;
                } else {
                    self.form_blossom(dual, a, t1, b, t2)?;
                }
            }
            (Plus, MatchedPeer) => self.grow_tree(dual, a, t1, b, t2)?,
            (MatchedPeer, Plus) => self.grow_tree(dual, b, t2, a, t1)?,
            (Plus, MatchedVirtual) => self.augment(dual, a, t1, b, t2)?,
            (MatchedVirtual, Plus) => self.augment(dual, b, t2, a, t1)?,
            (Free, _) | (_, Free) => {
                return Err(SolverError::Invariant(format!("node {a} or {b} is neither matched nor in a tree")));
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Assigns final partners inside `node`, entered through `touch`.
    fn settle(
        &self,
        dual: &DualModule,
        node: NodeId,
        touch: VertexIndex,
        target: Target,
        mate: &mut BTreeMap<VertexIndex, Target>,
        trace: &mut Trace,
    ) -> Result<(), SolverError> {
        let n = dual.node(node);
        match n.kind {
            NodeKind::Leaf(v) => {
                if v != touch {
                    return Err(SolverError::Invariant(format!("leaf {node} entered through foreign touch {touch}")));
                }
                mate.insert(v, target);
                Ok(())
            }
            NodeKind::Cluster => Err(SolverError::Invariant(format!("cluster {node} inside matched structure"))),
            NodeKind::Blossom => {
                trace.push(dual, TraceEvent::ExtractExpand { blossom: node });
                let children = &n.children;
                let len = children.len();
                let inner = child_containing(dual, node, touch)?;
                let j = children.iter().position(|&c| c == inner).unwrap();
                self.settle(dual, inner, touch, target, mate, trace)?;
                let edges = &self.nodes.get(node).cycle;
                let mut k = 1;
                while k < len {
                    let x = (j + k) % len;
                    let (ex, ey) = edges[x];
                    self.settle(dual, children[x], ex, Target::Defect(ey), mate, trace)?;
                    self.settle(dual, children[(x + 1) % len], ey, Target::Defect(ex), mate, trace)?;
                    k += 2;
                }
                Ok(())
            }
        }
    }
}

/// Child of `blossom` whose subtree holds defect `touch`.
fn child_containing(dual: &DualModule, blossom: NodeId, touch: VertexIndex) -> Result<NodeId, SolverError> {
    let mut cur = dual.leaf_of(touch).ok_or_else(|| SolverError::Invariant(format!("{touch} is not a defect")))?;
    while let Some(p) = dual.node(cur).parent {
        if p == blossom {
            return Ok(cur);
        }
        cur = p;
    }
    Err(SolverError::Invariant(format!("defect {touch} is not inside blossom {blossom}")))
}

impl PrimalModule for StandardPrimal {
    fn reset(&mut self) {
        self.nodes.reset();
        self.clusters.reset();
        self.trace.clear();
        self.pending.clear();
        self.dirty_roots.clear();
    }

    fn add_defect_node(&mut self, dual: &mut DualModule, node: NodeId) -> Result<(), SolverError> {
        self.init(node);
        self.nodes.get_mut(node).tree = Some(TreeNode { plus: true, parent: None, children: Vec::new() });
        dual.set_direction(node, Direction::Grow)?;
        self.mark_dirty(node);
        self.enforce_limit(dual)
    }

    fn resolve(&mut self, dual: &mut DualModule, obstacles: &[Obstacle]) -> Result<usize, SolverError> {
        let mut acted = 0;
        for o in obstacles {
            let done = match *o {
                Obstacle::Conflict { touch1, touch2, .. } => self.on_conflict(dual, touch1, touch2)?,
                Obstacle::TouchVirtual { touch, vertex, .. } => {
                    let a = top(dual, touch)?;
                    match self.state(a) {
                        State::Plus => {
                            self.match_virtual(dual, a, touch, vertex)?;
                            true
                        }
                        State::Cluster => self.clusters.touch_virtual(dual, &mut self.trace, a, touch, vertex)?,
                        _ => false,
                    }
                }
                Obstacle::BlossomMustExpand { node } => {
                    let ok = dual.contains_node(node)
                        && dual.node(node).is_top()
                        && dual.node(node).y == 0
                        && self.state(node) == State::Minus;
                    if ok {
                        let anchor = self.expand_minus(dual, node)?;
                        let root = self.root_of(dual, top(dual, anchor)?)?;
                        self.mark_dirty(root);
                    }
                    ok
                }
            };
            acted += done as usize;
        }
        self.enforce_limit(dual)?;
        Ok(acted)
    }

    fn extract(&mut self, dual: &DualModule, paths: &mut ShortestPaths) -> Result<RawMatching, SolverError> {
        let mut out = RawMatching::default();
        let mut mate = BTreeMap::new();
        let mut trace = std::mem::take(&mut self.trace);
        for t in dual.top_nodes() {
            if self.clusters.is_cluster(t) {
                let inner: Vec<_> =
                    nested_blossoms(dual, t).into_iter().flat_map(|b| self.nodes.get(b).cycle.clone()).collect();
                self.clusters.extract(dual, t, &inner, paths, &mut out)?;
                continue;
            }
            match self.nodes.get(t).matched {
                Some(Match::Peer { mine, peer }) => self.settle(dual, t, mine, Target::Defect(peer), &mut mate, &mut trace)?,
                Some(Match::Virtual { mine, vertex }) => {
                    self.settle(dual, t, mine, Target::Virtual(vertex), &mut mate, &mut trace)?
                }
                None => {
                    self.trace = trace;
                    return Err(SolverError::Invariant(format!("node {t} is unmatched at the end")));
                }
            }
        }
        self.trace = trace;
        for (&v, &target) in &mate {
            match target {
                Target::Virtual(b) => out.boundary.push((v, b)),
                Target::Defect(u) => {
                    if mate.get(&u) != Some(&Target::Defect(v)) {
                        return Err(SolverError::Invariant(format!("match {v} -> {u} is not mutual")));
                    }
                    if v < u {
                        out.pairs.push((v, u));
                    }
                }
            }
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
