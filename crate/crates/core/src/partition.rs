//! Vertex-to-region assignment shared by every solver instance of a decode.
//!
//! A region is the unit of storage ownership: each job of a fusion tree owns
//! one region (a leaf's interior rounds, or the boundary round an internal
//! node restores). Jobs are numbered in post-order so every subtree covers a
//! contiguous range of region ids, and fusing two instances only concatenates
//! their region lists. A monolithic solve uses a single region.

use serde::Serialize;

use crate::graph::VertexIndex;

pub type RegionId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    region_of: Vec<RegionId>,
    offset_of: Vec<u32>,
    members: Vec<Vec<VertexIndex>>,
}

impl Partition {
    /// Every vertex in region 0.
    pub fn whole(vertex_count: usize) -> Self {
        Self::from_assignment(vec![0; vertex_count], 1)
    }

    /// `region_of[v]` must be below `region_count`; empty regions are allowed.
    pub fn from_assignment(region_of: Vec<RegionId>, region_count: usize) -> Self {
        let mut members = vec![Vec::new(); region_count];
        let mut offset_of = vec![0u32; region_of.len()];
        for (v, &r) in region_of.iter().enumerate() {
            let list: &mut Vec<VertexIndex> = &mut members[r as usize];
            offset_of[v] = list.len() as u32;
            list.push(v as VertexIndex);
        }
        Self { region_of, offset_of, members }
    }

    #[inline]
    pub fn region_of(&self, v: VertexIndex) -> RegionId {
        self.region_of[v as usize]
    }

    #[inline]
    pub fn offset_of(&self, v: VertexIndex) -> usize {
        self.offset_of[v as usize] as usize
    }

    pub fn region_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, region: RegionId) -> &[VertexIndex] {
        &self.members[region as usize]
    }

    pub fn vertex_count(&self) -> usize {
        self.region_of.len()
    }
}

/// Identifies a dual node: the region whose job created it plus a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId {
    pub region: RegionId,
    pub index: u32,
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.region, self.index)
    }
}

/// Per-node side table segmented like the regions of an instance, so it can
/// be fused and reset the same way. Slots are overwritten on reuse.
#[derive(Debug, Clone)]
pub struct NodeMap<T> {
    lo: RegionId,
    segments: Vec<Segment<T>>,
}

#[derive(Debug, Clone)]
pub struct Segment<T> {
    values: Vec<T>,
    live: usize,
}

impl<T> Default for Segment<T> {
    fn default() -> Self {
        Self { values: Vec::new(), live: 0 }
    }
}

impl<T> Segment<T> {
    pub fn reset(&mut self) {
        self.live = 0;
    }
}

impl<T: Default> NodeMap<T> {
    pub fn new(region: RegionId) -> Self {
        Self { lo: region, segments: vec![Segment::default()] }
    }

    pub fn from_segment(region: RegionId, mut segment: Segment<T>) -> Self {
        segment.reset();
        Self { lo: region, segments: vec![segment] }
    }

    /// Appends `right` (which must start right after `self`) and a fresh
    /// segment for the parent job.
    pub fn fuse(mut self, right: NodeMap<T>, parent: Segment<T>) -> Self {
        assert_eq!(self.lo + self.segments.len() as RegionId, right.lo, "node maps are not adjacent");
        self.segments.extend(right.segments);
        let mut parent = parent;
        parent.reset();
        self.segments.push(parent);
        self
    }

    pub fn into_segments(self) -> (RegionId, Vec<Segment<T>>) {
        (self.lo, self.segments)
    }

    pub fn reset(&mut self) {
        self.segments.iter_mut().for_each(Segment::reset);
    }

    /// Makes `id` addressable, resetting it to the default value.
    pub fn init(&mut self, id: NodeId) {
        let seg = &mut self.segments[(id.region - self.lo) as usize];
        let index = id.index as usize;
        while seg.live <= index {
            if seg.live < seg.values.len() {
                seg.values[seg.live] = T::default();
            } else {
                seg.values.push(T::default());
            }
            seg.live += 1;
        }
        seg.values[index] = T::default();
    }

    #[inline]
    pub fn get(&self, id: NodeId) -> &T {
        &self.segments[(id.region - self.lo) as usize].values[id.index as usize]
    }

    #[inline]
    pub fn get_mut(&mut self, id: NodeId) -> &mut T {
        &mut self.segments[(id.region - self.lo) as usize].values[id.index as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_offsets_are_dense_per_region() {
        let p = Partition::from_assignment(vec![1, 0, 1, 2, 0], 3);
        assert_eq!(p.members(0), &[1, 4]);
        assert_eq!(p.members(1), &[0, 2]);
        assert_eq!(p.offset_of(4), 1);
        assert_eq!(p.offset_of(3), 0);
    }

    #[test]
    fn node_map_fuse_keeps_addresses() {
        let mut a: NodeMap<u32> = NodeMap::new(0);
        a.init(NodeId { region: 0, index: 0 });
        *a.get_mut(NodeId { region: 0, index: 0 }) = 7;
        let mut b: NodeMap<u32> = NodeMap::new(1);
        b.init(NodeId { region: 1, index: 0 });
        *b.get_mut(NodeId { region: 1, index: 0 }) = 9;
        let mut f = a.fuse(b, Segment::default());
        f.init(NodeId { region: 2, index: 0 });
        assert_eq!(*f.get(NodeId { region: 0, index: 0 }), 7);
        assert_eq!(*f.get(NodeId { region: 1, index: 0 }), 9);
        assert_eq!(*f.get(NodeId { region: 2, index: 0 }), 0);
    }
}
