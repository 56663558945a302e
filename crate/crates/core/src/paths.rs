//! Reusable Dijkstra workspace. Entries are invalidated by bumping a stamp,
//! so repeated queries on the same graph allocate nothing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::graph::{EdgeIndex, ModelGraph, VertexIndex, Weight};

const NO_EDGE: EdgeIndex = EdgeIndex::MAX;

#[derive(Debug, Clone)]
pub struct ShortestPaths {
    stamp: u32,
    seen: Vec<u32>,
    settled: Vec<u32>,
    dist: Vec<Weight>,
    via: Vec<EdgeIndex>,
    heap: BinaryHeap<Reverse<(Weight, VertexIndex)>>,
    source: VertexIndex,
}

impl ShortestPaths {
    pub fn new(vertex_count: usize) -> Self {
        Self {
            stamp: 0,
            seen: vec![0; vertex_count],
            settled: vec![0; vertex_count],
            dist: vec![0; vertex_count],
            via: vec![NO_EDGE; vertex_count],
            heap: BinaryHeap::new(),
            source: 0,
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.seen.len() < n {
            self.seen.resize(n, 0);
            self.settled.resize(n, 0);
            self.dist.resize(n, 0);
            self.via.resize(n, NO_EDGE);
        }
    }

    /// Runs Dijkstra from `source`, settling vertices in distance order until
    /// `stop` returns true for a settled vertex (which is returned) or the
    /// component is exhausted.
    pub fn run(
        &mut self,
        g: &ModelGraph,
        source: VertexIndex,
        mut stop: impl FnMut(VertexIndex, Weight) -> bool,
    ) -> Option<VertexIndex> {
        self.ensure(g.vertex_count());
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.settled.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        self.source = source;
        self.heap.clear();
        self.seen[source as usize] = stamp;
        self.dist[source as usize] = 0;
        self.via[source as usize] = NO_EDGE;
        self.heap.push(Reverse((0, source)));
        while let Some(Reverse((d, x))) = self.heap.pop() {
            let xi = x as usize;
            if self.settled[xi] == stamp || d > self.dist[xi] {
                continue;
            }
            self.settled[xi] = stamp;
            if stop(x, d) {
                return Some(x);
            }
            for nb in g.neighbors(x) {
                let zi = nb.vertex as usize;
                let nd = d + nb.weight;
                if self.seen[zi] != stamp || nd < self.dist[zi] {
                    self.seen[zi] = stamp;
                    self.dist[zi] = nd;
                    self.via[zi] = nb.edge;
                    self.heap.push(Reverse((nd, nb.vertex)));
                }
            }
        }
        None
    }

    pub fn distance(&mut self, g: &ModelGraph, u: VertexIndex, v: VertexIndex) -> Option<Weight> {
        self.run(g, u, |x, _| x == v).map(|_| self.dist[v as usize])
    }

    /// Closest virtual vertex to `u`, ties broken by heap order (lowest index
    /// among equal distances).
    pub fn nearest_virtual(&mut self, g: &ModelGraph, u: VertexIndex) -> Option<(VertexIndex, Weight)> {
        self.run(g, u, |x, _| g.is_virtual(x)).map(|x| (x, self.dist[x as usize]))
    }

    /// Distance of `v` from the last source, if it was settled.
    pub fn settled_distance(&self, v: VertexIndex) -> Option<Weight> {
        (self.settled[v as usize] == self.stamp).then(|| self.dist[v as usize])
    }

    /// Edges of the shortest path from the last source to a settled `v`.
    pub fn path_to(&self, g: &ModelGraph, v: VertexIndex) -> Option<Vec<EdgeIndex>> {
        self.settled_distance(v)?;
        let mut edges = Vec::new();
        let mut x = v;
        while x != self.source {
            let e = self.via[x as usize];
            edges.push(e);
            x = g.edge(e).other(x);
        }
        edges.reverse();
        Some(edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, VertexKind};

    fn bellman_ford(g: &ModelGraph, s: VertexIndex) -> Vec<Option<Weight>> {
        let mut dist = vec![None; g.vertex_count()];
        dist[s as usize] = Some(0);
        for _ in 0..g.vertex_count() {
            for e in g.edges() {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    if let Some(da) = dist[a as usize] {
                        let nd = da + e.weight;
                        if dist[b as usize].is_none_or(|db| nd < db) {
                            dist[b as usize] = Some(nd);
                        }
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn matches_bellman_ford_on_small_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..12u32);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen_bool(0.35) {
                        edges.push(Edge { u, v, weight: 2 * rng.gen_range(0..6), p: 0.1 });
                    }
                }
            }
            let g = ModelGraph::new(vec![VertexKind::Ordinary; n as usize], edges).unwrap();
            let mut sp = ShortestPaths::new(n as usize);
            for s in 0..n {
                let expected = bellman_ford(&g, s);
                for t in 0..n {
                    assert_eq!(sp.distance(&g, s, t), expected[t as usize]);
                    if let Some(d) = expected[t as usize] {
                        let path = sp.path_to(&g, t).unwrap();
                        assert_eq!(path.iter().map(|&e| g.edge(e).weight).sum::<Weight>(), d);
                    }
                }
            }
        }
    }
}
