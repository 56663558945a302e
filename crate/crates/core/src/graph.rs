//! Model graph of a QEC code: stabilizer outcomes are vertices, independent
//! error sources are weighted edges.
//!
//! The generator builds the Z decoding graph of a rotated surface code over
//! `N` noisy measurement rounds. Vertices are numbered round-major and then
//! row-major inside a round, so every measurement round occupies one
//! contiguous index range; the fusion engine partitions on that.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraphError, SyndromeError};
use crate::paths::ShortestPaths;

pub type VertexIndex = u32;
pub type EdgeIndex = u32;
/// Edge weights and dual variables. Generated weights are even so that every
/// dual update step stays integral.
pub type Weight = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Ordinary,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: VertexIndex,
    pub v: VertexIndex,
    pub weight: Weight,
    pub p: f64,
}

impl Edge {
    #[inline]
    pub fn other(&self, vertex: VertexIndex) -> VertexIndex {
        if self.u == vertex {
            self.v
        } else {
            self.u
        }
    }
}

/// One entry of the compressed adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub vertex: VertexIndex,
    pub weight: Weight,
    pub edge: EdgeIndex,
}

/// Round structure of a time-sliced graph: layer `k` holds vertices
/// `k * per_round .. (k + 1) * per_round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLayout {
    pub per_round: u32,
    pub layers: u32,
}

impl RoundLayout {
    #[inline]
    pub fn layer_of(&self, vertex: VertexIndex) -> u32 {
        vertex / self.per_round
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    kinds: Vec<VertexKind>,
    edges: Vec<Edge>,
    adjacency_offsets: Vec<u32>,
    adjacency: Vec<Neighbor>,
    layout: Option<RoundLayout>,
}

impl ModelGraph {
    pub fn new(kinds: Vec<VertexKind>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let n = kinds.len();
        if n > u32::MAX as usize - 1 {
            return Err(GraphError::InvalidGraph("too many vertices".into()));
        }
        for (index, edge) in edges.iter().enumerate() {
            if edge.u as usize >= n || edge.v as usize >= n {
                return Err(GraphError::InvalidGraph(format!(
                    "edge {index} references a vertex outside 0..{n}"
                )));
            }
            if edge.u == edge.v {
                return Err(GraphError::InvalidGraph(format!("edge {index} is a self loop")));
            }
            if edge.weight < 0 || edge.weight % 2 != 0 {
                return Err(GraphError::InvalidGraph(format!(
                    "edge {index} has weight {}; weights must be even and non-negative",
                    edge.weight
                )));
            }
            if !(0.0..=0.5).contains(&edge.p) || edge.p.is_nan() {
                return Err(GraphError::InvalidGraph(format!(
                    "edge {index} has probability {} outside [0, 0.5]",
                    edge.p
                )));
            }
        }
        let mut degree = vec![0u32; n + 1];
        for edge in &edges {
            degree[edge.u as usize] += 1;
            degree[edge.v as usize] += 1;
        }
        let mut adjacency_offsets = vec![0u32; n + 1];
        for i in 0..n {
            adjacency_offsets[i + 1] = adjacency_offsets[i] + degree[i];
        }
        let mut fill = adjacency_offsets.clone();
        let placeholder = Neighbor { vertex: 0, weight: 0, edge: 0 };
        let mut adjacency = vec![placeholder; adjacency_offsets[n] as usize];
        for (index, edge) in edges.iter().enumerate() {
            let index = index as EdgeIndex;
            for (a, b) in [(edge.u, edge.v), (edge.v, edge.u)] {
                let slot = &mut fill[a as usize];
                adjacency[*slot as usize] = Neighbor { vertex: b, weight: edge.weight, edge: index };
                *slot += 1;
            }
        }
        Ok(Self { kinds, edges, adjacency_offsets, adjacency, layout: None })
    }

    pub fn with_layout(mut self, layout: RoundLayout) -> Result<Self, GraphError> {
        if layout.per_round == 0 || layout.per_round as usize * layout.layers as usize != self.vertex_count() {
            return Err(GraphError::InvalidGraph("round layout does not tile the vertex set".into()));
        }
        for edge in &self.edges {
            let (a, b) = (layout.layer_of(edge.u), layout.layer_of(edge.v));
            if a.abs_diff(b) > 1 {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({}, {}) skips a round; time slicing needs nearest-round edges",
                    edge.u, edge.v
                )));
            }
        }
        self.layout = Some(layout);
        Ok(self)
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.kinds.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn kind(&self, vertex: VertexIndex) -> VertexKind {
        self.kinds[vertex as usize]
    }

    #[inline]
    pub fn is_virtual(&self, vertex: VertexIndex) -> bool {
        self.kinds[vertex as usize] == VertexKind::Virtual
    }

    pub fn kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, edge: EdgeIndex) -> &Edge {
        &self.edges[edge as usize]
    }

    #[inline]
    pub fn neighbors(&self, vertex: VertexIndex) -> &[Neighbor] {
        let lo = self.adjacency_offsets[vertex as usize] as usize;
        let hi = self.adjacency_offsets[vertex as usize + 1] as usize;
        &self.adjacency[lo..hi]
    }

    pub fn layout(&self) -> Option<RoundLayout> {
        self.layout
    }

    pub fn virtual_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == VertexKind::Virtual).count()
    }

    pub fn ordinary_count(&self) -> usize {
        self.vertex_count() - self.virtual_count()
    }

    /// Shortest-path weight between two vertices.
    pub fn dist(&self, u: VertexIndex, v: VertexIndex) -> Result<Weight, GraphError> {
        for x in [u, v] {
            if x as usize >= self.vertex_count() {
                return Err(GraphError::VertexOutOfRange(x));
            }
        }
        ShortestPaths::new(self.vertex_count())
            .distance(self, u, v)
            .ok_or(GraphError::Unreachable(u, v))
    }

    /// Validates a defect list against this graph and returns it sorted.
    pub fn check_syndrome(&self, defects: &[VertexIndex]) -> Result<Syndrome, SyndromeError> {
        let mut sorted = defects.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(SyndromeError::DuplicateDefect(w[0]));
            }
        }
        for &v in &sorted {
            if v as usize >= self.vertex_count() {
                return Err(SyndromeError::OutOfRange(v));
            }
            if self.is_virtual(v) {
                return Err(SyndromeError::VirtualDefect(v));
            }
        }
        Ok(Syndrome { defects: sorted })
    }
}

/// Parameters of a generated rotated surface code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub d: u32,
    /// Noisy measurement rounds; the graph has `rounds + 1` layers.
    pub rounds: u32,
    pub p: f64,
    pub weight_resolution: Weight,
}

impl CodeSpec {
    pub const DEFAULT_RESOLUTION: Weight = 100;

    pub fn new(d: u32, rounds: u32, p: f64) -> Self {
        Self { d, rounds, p, weight_resolution: Self::DEFAULT_RESOLUTION }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.d < 3 || self.d.is_multiple_of(2) {
            return Err(GraphError::InvalidSpec(format!("code distance must be odd and at least 3, got {}", self.d)));
        }
        if !(self.p > 0.0 && self.p <= 0.5) {
            return Err(GraphError::InvalidProbability(self.p));
        }
        if self.weight_resolution <= 0 || self.weight_resolution % 2 != 0 {
            return Err(GraphError::InvalidSpec(format!(
                "weight resolution must be a positive even integer, got {}",
                self.weight_resolution
            )));
        }
        Ok(())
    }

    pub fn vertices_per_round(&self) -> u32 {
        (self.d + 1) * (self.d + 1) / 2
    }
}

/// `resolution * ln((1 - p) / p)` rounded to the nearest even integer.
pub fn compute_weight(p: f64, resolution: Weight) -> Result<Weight, GraphError> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(GraphError::InvalidProbability(p));
    }
    if resolution <= 0 || resolution % 2 != 0 {
        return Err(GraphError::InvalidSpec(format!("weight resolution must be a positive even integer, got {resolution}")));
    }
    let raw = resolution as f64 * ((1.0 - p) / p).ln();
    Ok(2 * (raw / 2.0).round() as Weight)
}

/// Builds the Z decoding graph of a distance-`d` rotated surface code.
///
/// Z stabilizers sit on the plaquette corners `(r, c)`, `0 <= r, c <= d`, with
/// `r + c` even. Those with `c` in `1..d` are ordinary; the ones on the left
/// and right columns become the `d + 1` virtual vertices of a round. Data qubit
/// `(i, j)` is a space-like edge between its two diagonal Z corners, and each
/// ordinary stabilizer has a time-like edge to its copy in the next round.
pub fn build_surface_code_graph(spec: &CodeSpec) -> Result<ModelGraph, GraphError> {
    spec.validate()?;
    let d = spec.d;
    let row_len = d.div_ceil(2);
    let per_round = spec.vertices_per_round();
    let layers = spec.rounds + 1;
    let total = per_round as usize * layers as usize;
    if total >= u32::MAX as usize {
        return Err(GraphError::InvalidSpec("graph too large".into()));
    }
    let weight = compute_weight(spec.p, spec.weight_resolution)?;

    // corner (r, c) with r + c even -> index inside a round
    let local = |r: u32, c: u32| -> u32 {
        debug_assert!((r + c).is_multiple_of(2));
        r * row_len + c / 2
    };
    let is_virtual_corner = |c: u32| c == 0 || c == d;

    let mut kinds = Vec::with_capacity(total);
    for _ in 0..layers {
        for r in 0..=d {
            for k in 0..row_len {
                let c = 2 * k + (r % 2);
                kinds.push(if is_virtual_corner(c) { VertexKind::Virtual } else { VertexKind::Ordinary });
            }
        }
    }

    let mut edges = Vec::new();
    for t in 0..layers {
        let offset = t * per_round;
        for i in 0..d {
            for j in 0..d {
                let (a, b) = if (i + j) % 2 == 0 { ((i, j), (i + 1, j + 1)) } else { ((i, j + 1), (i + 1, j)) };
                edges.push(Edge {
                    u: offset + local(a.0, a.1),
                    v: offset + local(b.0, b.1),
                    weight,
                    p: spec.p,
                });
            }
        }
        if t + 1 < layers {
            for (index, kind) in kinds[(offset as usize)..(offset + per_round) as usize].iter().enumerate() {
                if *kind == VertexKind::Ordinary {
                    let u = offset + index as u32;
                    edges.push(Edge { u, v: u + per_round, weight, p: spec.p });
                }
            }
        }
    }
    ModelGraph::new(kinds, edges)?.with_layout(RoundLayout { per_round, layers })
}

/// A subset of the graph's edges that experienced an error.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorPattern {
    pub edges: Vec<EdgeIndex>,
}

/// Sorted defect vertices. Never contains a virtual vertex.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Syndrome {
    pub defects: Vec<VertexIndex>,
}

impl Syndrome {
    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }
}

/// Samples every edge independently with its own probability, using
/// ChaCha8 seeded from `seed` and one `f64` draw per edge in index order.
pub fn sample_error(g: &ModelGraph, seed: u64) -> ErrorPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .filter_map(|(index, edge)| {
            let draw: f64 = rng.gen();
            (draw < edge.p).then_some(index as EdgeIndex)
        })
        .collect();
    ErrorPattern { edges }
}

pub fn syndrome_of(g: &ModelGraph, err: &ErrorPattern) -> Syndrome {
    let mut parity = vec![false; g.vertex_count()];
    for &e in &err.edges {
        let edge = g.edge(e);
        parity[edge.u as usize] ^= true;
        parity[edge.v as usize] ^= true;
    }
    let defects = parity
        .iter()
        .enumerate()
        .filter(|(v, odd)| **odd && !g.is_virtual(*v as VertexIndex))
        .map(|(v, _)| v as VertexIndex)
        .collect();
    Syndrome { defects }
}

/// Convenience: sample an error with `seed` and return its syndrome.
pub fn sample_syndrome(g: &ModelGraph, seed: u64) -> Syndrome {
    syndrome_of(g, &sample_error(g, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub kind: VertexKind,
}

/// On-disk graph schema: `{vertices: [{kind}], edges: [{u, v, weight, p}]}`
/// with an optional `layout` and free-form `meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<RoundLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl GraphFile {
    pub fn from_graph(g: &ModelGraph) -> Self {
        Self {
            vertices: g.kinds().iter().map(|&kind| VertexRecord { kind }).collect(),
            edges: g.edges().to_vec(),
            layout: g.layout(),
            meta: None,
        }
    }

    pub fn to_graph(&self) -> Result<ModelGraph, GraphError> {
        let g = ModelGraph::new(self.vertices.iter().map(|v| v.kind).collect(), self.edges.clone())?;
        match self.layout {
            Some(layout) => g.with_layout(layout),
            None => Ok(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(weights: &[Weight]) -> ModelGraph {
        let kinds = vec![VertexKind::Ordinary; weights.len() + 1];
        let edges = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Edge { u: i as u32, v: i as u32 + 1, weight: w, p: 0.1 })
            .collect();
        ModelGraph::new(kinds, edges).unwrap()
    }

    #[test]
    fn vertex_counts_follow_round_formula() {
        for d in [3u32, 5, 7, 9] {
            for n in [0u32, 1, 2, 5] {
                let g = build_surface_code_graph(&CodeSpec::new(d, n, 0.01)).unwrap();
                assert_eq!(g.ordinary_count(), ((n + 1) * (d * d - 1) / 2) as usize);
                assert_eq!(g.virtual_count(), ((n + 1) * (d + 1)) as usize);
            }
        }
        let g = build_surface_code_graph(&CodeSpec::new(3, 0, 0.01)).unwrap();
        assert_eq!(g.vertex_count(), 8);
        let g = build_surface_code_graph(&CodeSpec::new(3, 2, 0.01)).unwrap();
        assert_eq!(g.vertex_count(), 24);
    }

    #[test]
    fn single_round_has_no_timelike_edges() {
        let g = build_surface_code_graph(&CodeSpec::new(5, 0, 0.01)).unwrap();
        let layout = g.layout().unwrap();
        assert!(g.edges().iter().all(|e| layout.layer_of(e.u) == layout.layer_of(e.v)));
        assert_eq!(g.edge_count(), 25);
    }

    #[test]
    fn every_data_qubit_touches_at_most_one_virtual() {
        let g = build_surface_code_graph(&CodeSpec::new(7, 3, 0.01)).unwrap();
        for e in g.edges() {
            assert!(!(g.is_virtual(e.u) && g.is_virtual(e.v)));
        }
        // no parallel edges
        let mut pairs: Vec<_> = g.edges().iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), g.edge_count());
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(build_surface_code_graph(&CodeSpec::new(4, 1, 0.01)).is_err());
        assert!(build_surface_code_graph(&CodeSpec::new(1, 1, 0.01)).is_err());
        assert!(build_surface_code_graph(&CodeSpec::new(3, 1, 0.0)).is_err());
        assert!(build_surface_code_graph(&CodeSpec::new(3, 1, 0.6)).is_err());
    }

    #[test]
    fn weight_of_half_is_zero_and_weights_are_monotone() {
        assert_eq!(compute_weight(0.5, 100).unwrap(), 0);
        assert_eq!(compute_weight(0.5, 2).unwrap(), 0);
        for r in [2, 10, 100, 1000] {
            assert!(compute_weight(0.01, r).unwrap() > compute_weight(0.1, r).unwrap());
        }
        assert!(compute_weight(0.0, 100).is_err());
        assert!(compute_weight(0.51, 100).is_err());
        assert!(compute_weight(0.1, 3).is_err());
    }

    #[test]
    fn weight_at_one_in_a_thousand_matches_high_precision_value() {
        // 100 * ln(999) = 690.675477... (50-digit mpmath evaluation); nearest even is 690
        assert_eq!(compute_weight(0.001, 100).unwrap(), 690);
        // 1000 * ln(999) = 6906.754778... -> 6906
        assert_eq!(compute_weight(0.001, 1000).unwrap(), 6906);
    }

    #[test]
    fn syndrome_parity_cases() {
        let g = path_graph(&[2, 2]);
        assert!(syndrome_of(&g, &ErrorPattern::default()).is_empty());
        assert_eq!(syndrome_of(&g, &ErrorPattern { edges: vec![0] }).defects, vec![0, 1]);
        assert_eq!(syndrome_of(&g, &ErrorPattern { edges: vec![0, 1] }).defects, vec![0, 2]);
    }

    #[test]
    fn sampling_is_deterministic_and_respects_zero_probability() {
        let g = build_surface_code_graph(&CodeSpec::new(5, 3, 0.05)).unwrap();
        assert_eq!(sample_error(&g, 42), sample_error(&g, 42));
        let kinds = vec![VertexKind::Ordinary; 3];
        let edges = vec![Edge { u: 0, v: 1, weight: 2, p: 0.0 }, Edge { u: 1, v: 2, weight: 2, p: 0.0 }];
        let g = ModelGraph::new(kinds, edges).unwrap();
        for seed in 0..100 {
            assert!(sample_error(&g, seed).edges.is_empty());
        }
    }

    #[test]
    fn dist_basics() {
        let g = path_graph(&[4, 6, 2]);
        assert_eq!(g.dist(1, 1).unwrap(), 0);
        assert_eq!(g.dist(0, 1).unwrap(), 4);
        assert_eq!(g.dist(0, 3).unwrap(), 12);
        let kinds = vec![VertexKind::Ordinary; 2];
        let g = ModelGraph::new(kinds, vec![]).unwrap();
        assert_eq!(g.dist(0, 1), Err(GraphError::Unreachable(0, 1)));
    }

    #[test]
    fn graph_validation() {
        let kinds = vec![VertexKind::Ordinary; 2];
        assert!(ModelGraph::new(kinds.clone(), vec![Edge { u: 0, v: 1, weight: 3, p: 0.1 }]).is_err());
        assert!(ModelGraph::new(kinds.clone(), vec![Edge { u: 0, v: 0, weight: 2, p: 0.1 }]).is_err());
        assert!(ModelGraph::new(kinds.clone(), vec![Edge { u: 0, v: 2, weight: 2, p: 0.1 }]).is_err());
        assert!(ModelGraph::new(kinds, vec![Edge { u: 0, v: 1, weight: 2, p: 0.7 }]).is_err());
    }

    #[test]
    fn check_syndrome_rejects_duplicates_and_virtuals() {
        let g = build_surface_code_graph(&CodeSpec::new(3, 0, 0.01)).unwrap();
        assert_eq!(g.check_syndrome(&[1, 1]), Err(SyndromeError::DuplicateDefect(1)));
        assert_eq!(g.check_syndrome(&[0]), Err(SyndromeError::VirtualDefect(0)));
        assert_eq!(g.check_syndrome(&[100]), Err(SyndromeError::OutOfRange(100)));
        assert_eq!(g.check_syndrome(&[2, 1]).unwrap().defects, vec![1, 2]);
    }

    #[test]
    fn graph_json_round_trips_byte_for_byte() {
        let g = build_surface_code_graph(&CodeSpec::new(3, 1, 0.013)).unwrap();
        let text = serde_json::to_string(&GraphFile::from_graph(&g)).unwrap();
        let parsed: GraphFile = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_graph().unwrap(), g);
        assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
    }
}
