//! Time-slice partition of a layered graph and the fusion tree over it.
//!
//! Each leaf owns a block of `M` consecutive layers whose last layer is the
//! separator to the next leaf; the separator belongs to the fuse job that
//! joins the two sides. Jobs are numbered in
//! post-order and each job's id doubles as its region id, so a subtree always
//! covers a contiguous range of regions.

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::graph::{ModelGraph, VertexIndex};
use crate::partition::{Partition, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Balanced,
    Linear,
    /// Balanced subtrees of `2^h` leaves chained linearly.
    Mixed(u32),
}

impl std::fmt::Display for PlanKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanKind::Balanced => write!(f, "balanced"),
            PlanKind::Linear => write!(f, "linear"),
            PlanKind::Mixed(h) => write!(f, "mixed{h}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum JobKind {
    Leaf { leaf: usize },
    Fuse { left: usize, right: usize, boundary_layer: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    #[serde(flatten)]
    pub kind: JobKind,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    /// Inclusive layer range of each leaf.
    pub leaves: Vec<(u32, u32)>,
    /// Post-order; the root is last.
    pub tree: Vec<Job>,
    pub kind: PlanKind,
    #[serde(rename = "M")]
    pub m: u32,
    /// Virtual time units between consecutive layers; only used by stream
    /// scheduling.
    pub cycle_time: f64,
}

#[derive(Debug)]
enum Shape {
    Leaf(usize),
    Node(Box<Shape>, Box<Shape>),
}

fn balanced(lo: usize, hi: usize) -> Shape {
    if hi - lo == 1 {
        return Shape::Leaf(lo);
    }
    let mid = lo + (hi - lo).div_ceil(2);
    Shape::Node(Box::new(balanced(lo, mid)), Box::new(balanced(mid, hi)))
}

fn chain(parts: Vec<Shape>) -> Shape {
    let mut it = parts.into_iter();
    let first = it.next().expect("at least one part");
    it.fold(first, |acc, s| Shape::Node(Box::new(acc), Box::new(s)))
}

/// Layer ranges of the leaves for `layers` layers and leaf size `m`. Each
/// leaf owns a block of `m` layers whose last layer is the separator to the
/// next leaf. The last leaf runs to the final layer, so it may be shorter than
/// `m`, or one longer when a separator would otherwise have nothing after it.
pub fn leaf_ranges(layers: u32, m: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < layers {
        if start + m + 1 >= layers {
            out.push((start, layers - 1));
            break;
        }
        out.push((start, start + m - 2));
        start += m;
    }
    out
}

impl FusionPlan {
    /// Plan for a graph of `layers` layers (measurement rounds + 1).
    pub fn new(layers: u32, m: u32, kind: PlanKind, cycle_time: f64) -> Result<Self, PlanError> {
        if m < 2 {
            return Err(PlanError::Invalid("leaf size M must be at least 2".into()));
        }
        if layers == 0 {
            return Err(PlanError::Invalid("graph has no layers".into()));
        }
        if !(cycle_time >= 0.0 && cycle_time.is_finite()) {
            return Err(PlanError::Invalid(format!("cycle time {cycle_time} is not a finite non-negative number")));
        }
        let leaves = leaf_ranges(layers, m);
        let k = leaves.len();
        let shape = match kind {
            PlanKind::Balanced => balanced(0, k),
            PlanKind::Linear => chain((0..k).map(Shape::Leaf).collect()),
            PlanKind::Mixed(h) => {
                let group = 1usize.checked_shl(h).filter(|&g| g > 0).unwrap_or(usize::MAX);
                let parts = (0..k).step_by(group.min(k)).map(|lo| balanced(lo, (lo.saturating_add(group)).min(k))).collect();
                chain(parts)
            }
        };
        let mut tree = Vec::with_capacity(2 * k - 1);
        fn emit(s: &Shape, leaves: &[(u32, u32)], tree: &mut Vec<Job>) -> (usize, usize) {
            // returns (job id, last leaf index)
            match s {
                Shape::Leaf(i) => {
                    tree.push(Job { kind: JobKind::Leaf { leaf: *i }, parent: None });
                    (tree.len() - 1, *i)
                }
                Shape::Node(l, r) => {
                    let (left, last) = emit(l, leaves, tree);
                    let (right, last_r) = emit(r, leaves, tree);
                    let id = tree.len();
                    tree.push(Job { kind: JobKind::Fuse { left, right, boundary_layer: leaves[last].1 + 1 }, parent: None });
                    tree[left].parent = Some(id);
                    tree[right].parent = Some(id);
                    (id, last_r)
                }
            }
        }
        emit(&shape, &leaves, &mut tree);
        Ok(Self { leaves, tree, kind, m, cycle_time })
    }

    /// Plan sized for `g`, which must carry a round layout.
    pub fn for_graph(g: &ModelGraph, m: u32, kind: PlanKind, cycle_time: f64) -> Result<Self, PlanError> {
        let layout = g.layout().ok_or(PlanError::NoLayout)?;
        Self::new(layout.layers, m, kind, cycle_time)
    }

    pub fn root(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn layers(&self) -> u32 {
        self.leaves.last().map_or(0, |l| l.1 + 1)
    }

    pub fn fuse_count(&self) -> usize {
        self.tree.len() - self.leaves.len()
    }

    /// Longest leaf-to-root path, in fuse jobs.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.tree.len()];
        for (i, job) in self.tree.iter().enumerate() {
            if let JobKind::Fuse { left, right, .. } = job.kind {
                depth[i] = 1 + depth[left].max(depth[right]);
            }
        }
        depth[self.root()]
    }

    /// Region (job id) owning each layer.
    pub fn region_of_layer(&self) -> Vec<RegionId> {
        let mut out = vec![RegionId::MAX; self.layers() as usize];
        for (id, job) in self.tree.iter().enumerate() {
            match job.kind {
                JobKind::Leaf { leaf } => {
                    let (lo, hi) = self.leaves[leaf];
                    out[lo as usize..=hi as usize].fill(id as RegionId);
                }
                JobKind::Fuse { boundary_layer, .. } => out[boundary_layer as usize] = id as RegionId,
            }
        }
        out
    }

    /// Vertex-to-region assignment for `g`.
    pub fn partition(&self, g: &ModelGraph) -> Result<Partition, PlanError> {
        let layout = g.layout().ok_or(PlanError::NoLayout)?;
        if layout.layers != self.layers() {
            return Err(PlanError::Invalid(format!("plan covers {} layers, graph has {}", self.layers(), layout.layers)));
        }
        let by_layer = self.region_of_layer();
        let region_of = (0..g.vertex_count() as VertexIndex).map(|v| by_layer[layout.layer_of(v) as usize]).collect();
        Ok(Partition::from_assignment(region_of, self.tree.len()))
    }

    /// Jobs in the subtree of `job`, as the contiguous id range it spans.
    pub fn subtree(&self, job: usize) -> std::ops::RangeInclusive<usize> {
        let mut lo = job;
        while let JobKind::Fuse { left, .. } = self.tree[lo].kind {
            lo = left;
        }
        lo..=job
    }

    fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.tree[b].parent {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    /// Every edge of `g` whose endpoints lie in regions of which neither is an
    /// ancestor of the other, i.e. an edge crossing some fuse separator.
    pub fn separator_violations(&self, g: &ModelGraph) -> Result<Vec<usize>, PlanError> {
        let partition = self.partition(g)?;
        let mut out = Vec::new();
        for (i, e) in g.edges().iter().enumerate() {
            let (a, b) = (partition.region_of(e.u) as usize, partition.region_of(e.v) as usize);
            if !self.is_ancestor(a, b) && !self.is_ancestor(b, a) {
                out.push(i);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let plan: Self = serde_json::from_str(text).map_err(|e| PlanError::Invalid(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Full binary tree, post-order, leaves in order and covering every layer
    /// exactly once with single-layer separators.
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::Invalid(m));
        if self.leaves.is_empty() || self.tree.len() != 2 * self.leaves.len() - 1 {
            return bad("tree must be full binary over the leaves".into());
        }
        let mut expected = 0;
        for (i, &(lo, hi)) in self.leaves.iter().enumerate() {
            if lo != expected || hi < lo {
                return bad(format!("leaf {i} covers {lo}..={hi}, expected to start at {expected}"));
            }
            expected = hi + 2;
        }
        let mut seen_leaf = 0;
        for (id, job) in self.tree.iter().enumerate() {
            match job.kind {
                JobKind::Leaf { leaf } => {
                    if leaf != seen_leaf {
                        return bad(format!("job {id} holds leaf {leaf} out of order"));
                    }
                    seen_leaf += 1;
                }
                JobKind::Fuse { left, right, boundary_layer } => {
                    if left >= id || right >= id || self.tree[left].parent != Some(id) || self.tree[right].parent != Some(id) {
                        return bad(format!("job {id} is not in post-order"));
                    }
                    if *self.subtree(right).start() != left + 1 || right + 1 != id {
                        return bad(format!("children of job {id} do not span contiguous regions"));
                    }
                    let last_left = self.last_leaf(left);
                    if boundary_layer != self.leaves[last_left].1 + 1 {
                        return bad(format!("job {id} has separator layer {boundary_layer}"));
                    }
                }
            }
        }
        if self.tree[self.root()].parent.is_some() {
            return bad("root has a parent".into());
        }
        Ok(())
    }

    fn last_leaf(&self, mut job: usize) -> usize {
        loop {
            match self.tree[job].kind {
                JobKind::Leaf { leaf } => return leaf,
                JobKind::Fuse { right, .. } => job = right,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaves_tile_blocks_of_m_layers() {
        assert_eq!(leaf_ranges(17, 4), vec![(0, 2), (4, 6), (8, 10), (12, 16)]);
        assert_eq!(leaf_ranges(10, 4), vec![(0, 2), (4, 6), (8, 9)]);
        assert_eq!(leaf_ranges(5, 8), vec![(0, 4)]);
        assert_eq!(leaf_ranges(11, 4), vec![(0, 2), (4, 6), (8, 10)]);
        assert_eq!(leaf_ranges(14, 4), vec![(0, 2), (4, 6), (8, 10), (12, 13)]);
        assert_eq!(leaf_ranges(5, 2), vec![(0, 0), (2, 4)]);
        // same remainder for N and N + kM
        assert_eq!(leaf_ranges(1001, 20).last(), Some(&(980, 1000)));
        assert_eq!(leaf_ranges(10001, 20).last(), Some(&(9980, 10000)));
    }

    #[test]
    fn depths_of_four_leaf_trees() {
        let b = FusionPlan::new(16, 4, PlanKind::Balanced, 1.0).unwrap();
        let l = FusionPlan::new(16, 4, PlanKind::Linear, 1.0).unwrap();
        assert_eq!(b.leaves.len(), 4);
        assert_eq!(b.depth(), 2);
        assert_eq!(l.depth(), 3);
    }

    #[test]
    fn mixed_height_one_chains_balanced_pairs() {
        let p = FusionPlan::new(16, 4, PlanKind::Mixed(1), 1.0).unwrap();
        // (L0 L1 F) (L2 L3 F) F
        let kinds: Vec<_> = p.tree.iter().map(|j| matches!(j.kind, JobKind::Leaf { .. })).collect();
        assert_eq!(kinds, vec![true, true, false, true, true, false, false]);
        assert_eq!(p.depth(), 2);
        let big = FusionPlan::new(8 * 4, 4, PlanKind::Mixed(1), 1.0).unwrap();
        assert_eq!(big.leaves.len(), 8);
        assert_eq!(big.depth(), 4);
        assert_eq!(FusionPlan::new(40, 4, PlanKind::Mixed(0), 1.0).unwrap().tree, FusionPlan::new(40, 4, PlanKind::Linear, 1.0).unwrap().tree);
        assert_eq!(FusionPlan::new(40, 4, PlanKind::Mixed(9), 1.0).unwrap().tree, FusionPlan::new(40, 4, PlanKind::Balanced, 1.0).unwrap().tree);
    }

    #[test]
    fn large_m_degenerates_to_one_leaf() {
        let p = FusionPlan::new(9, 8, PlanKind::Balanced, 1.0).unwrap();
        assert_eq!(p.leaves, vec![(0, 8)]);
        assert_eq!(p.tree.len(), 1);
        assert_eq!(p.depth(), 0);
    }

    #[test]
    fn plans_validate_and_round_trip() {
        for kind in [PlanKind::Balanced, PlanKind::Linear, PlanKind::Mixed(1), PlanKind::Mixed(2)] {
            for layers in 1..60 {
                for m in 2..7 {
                    let p = FusionPlan::new(layers, m, kind, 0.5).unwrap();
                    p.validate().unwrap_or_else(|e| panic!("{kind} {layers} {m}: {e}"));
                    assert_eq!(FusionPlan::from_json(&p.to_json()).unwrap(), p);
                    assert!(p.region_of_layer().iter().all(|&r| (r as usize) < p.tree.len()));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FusionPlan::new(10, 0, PlanKind::Linear, 1.0).is_err());
        assert!(FusionPlan::new(10, 1, PlanKind::Linear, 1.0).is_err());
        assert!(FusionPlan::new(10, 2, PlanKind::Linear, f64::NAN).is_err());
        let mut p = FusionPlan::new(20, 3, PlanKind::Balanced, 1.0).unwrap();
        p.tree.swap(0, 1);
        assert!(p.validate().is_err());
    }
}
