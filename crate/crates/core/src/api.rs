//! Handle-style entry points: build a decoder for a code, decode defect lists,
//! verify against the oracle. This is the whole surface a scripting binding
//! needs; results carry integer weights only.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DecoderError;
use crate::framework::{DecodeResult, Solver};
use crate::fusion::{FusionDecoder, FusionPlan, PlanKind, Schedule, TimingReport};
use crate::graph::{build_surface_code_graph, syndrome_of, CodeSpec, EdgeIndex, ErrorPattern, ModelGraph, VertexIndex, Weight};
use crate::oracle::{build_syndrome_graph, exact_mwpm, DEFAULT_CAP};
use crate::primal::{StandardPrimal, UnionFindPrimal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DecoderKind {
    /// Exact matching, serial.
    Parity,
    /// Union-Find.
    Uf,
    /// Exact matching with alternating trees capped at `k` nodes.
    Limited { k: usize },
    /// Exact matching split into time slices and fused.
    Fusion { plan: PlanKind, m: u32, workers: usize },
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecoderKind::Parity => write!(f, "parity"),
            DecoderKind::Uf => write!(f, "uf"),
            DecoderKind::Limited { k } => write!(f, "limited:{k}"),
            DecoderKind::Fusion { plan, m, workers } => write!(f, "fusion:{plan}:{m}:{workers}"),
        }
    }
}

/// Parses `parity`, `uf`, `limited:K` (or `limited:inf`) and
/// `fusion:KIND:M:WORKERS` where KIND is `balanced`, `linear` or `mixedH`.
impl FromStr for DecoderKind {
    type Err = DecoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DecoderError::Config(format!("unknown decoder '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["parity"] => Ok(DecoderKind::Parity),
            ["uf"] => Ok(DecoderKind::Uf),
            ["limited", "inf"] => Ok(DecoderKind::Limited { k: usize::MAX }),
            ["limited", k] => Ok(DecoderKind::Limited { k: k.parse().map_err(|_| bad())? }),
            ["fusion", kind, m, workers] => Ok(DecoderKind::Fusion {
                plan: kind.parse()?,
                m: m.parse().map_err(|_| bad())?,
                workers: workers.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl FromStr for PlanKind {
    type Err = DecoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balanced" => Ok(PlanKind::Balanced),
            "linear" => Ok(PlanKind::Linear),
            _ => s
                .strip_prefix("mixed")
                .and_then(|h| h.parse().ok())
                .map(PlanKind::Mixed)
                .ok_or_else(|| DecoderError::Config(format!("unknown plan kind '{s}'"))),
        }
    }
}

/// Output of one decode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub pairs: Vec<(VertexIndex, VertexIndex)>,
    pub boundary: Vec<(VertexIndex, VertexIndex)>,
    pub correction: Vec<EdgeIndex>,
    pub weight: Weight,
}

impl From<&DecodeResult> for Decoded {
    fn from(r: &DecodeResult) -> Self {
        Self {
            pairs: r.pairs.iter().map(|p| (p.0, p.1)).collect(),
            boundary: r.boundary.iter().map(|b| (b.0, b.1)).collect(),
            correction: r.correction.clone(),
            weight: r.primal_weight,
        }
    }
}

enum Engine {
    Parity(Solver<StandardPrimal>),
    Uf(Solver<UnionFindPrimal>),
    Fusion(FusionDecoder),
}

/// A loaded graph plus a reusable solver.
pub struct Decoder {
    graph: Arc<ModelGraph>,
    kind: DecoderKind,
    engine: Option<Engine>,
    last_timing: Option<TimingReport>,
}

impl Decoder {
    pub fn build(spec: &CodeSpec, kind: DecoderKind) -> Result<Self, DecoderError> {
        Self::for_graph(Arc::new(build_surface_code_graph(spec)?), kind)
    }

    pub fn for_graph(graph: Arc<ModelGraph>, kind: DecoderKind) -> Result<Self, DecoderError> {
        Self::with_schedule(graph, kind, Schedule::Batch, 1.0)
    }

    /// `schedule` and `cycle_time` only matter for fusion decoders.
    pub fn with_schedule(
        graph: Arc<ModelGraph>,
        kind: DecoderKind,
        schedule: Schedule,
        cycle_time: f64,
    ) -> Result<Self, DecoderError> {
        let engine = match kind {
            DecoderKind::Parity => Engine::Parity(Solver::new(Arc::clone(&graph), StandardPrimal::new())),
            DecoderKind::Uf => Engine::Uf(Solver::new(Arc::clone(&graph), UnionFindPrimal::new())),
            DecoderKind::Limited { k } => {
                let limit = (k != usize::MAX).then_some(k);
                Engine::Parity(Solver::new(Arc::clone(&graph), StandardPrimal::with_tree_size_limit(limit)))
            }
            DecoderKind::Fusion { plan, m, workers } => {
                let plan = FusionPlan::for_graph(&graph, m, plan, cycle_time)?;
                Engine::Fusion(FusionDecoder::new(Arc::clone(&graph), plan, workers, schedule)?)
            }
        };
        Ok(Self { graph, kind, engine: Some(engine), last_timing: None })
    }

    pub fn graph(&self) -> &Arc<ModelGraph> {
        &self.graph
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    /// Full result including the dual objective.
    pub fn decode_result(&mut self, defects: &[VertexIndex]) -> Result<DecodeResult, DecoderError> {
        let syndrome = self.graph.check_syndrome(defects)?;
        Ok(match self.engine.as_mut().ok_or(DecoderError::Closed)? {
            Engine::Parity(s) => s.solve(&syndrome)?,
            Engine::Uf(s) => s.solve(&syndrome)?,
            Engine::Fusion(f) => {
                let out = f.decode(&syndrome)?;
                self.last_timing = Some(out.timing);
                out.result
            }
        })
    }

    /// Virtual-clock timing of the last fusion decode.
    pub fn last_timing(&self) -> Option<&TimingReport> {
        self.last_timing.as_ref()
    }

    /// Leaf size of a fusion decoder.
    pub fn leaf_size(&self) -> Option<u32> {
        match self.kind {
            DecoderKind::Fusion { m, .. } => Some(m),
            _ => None,
        }
    }

    pub fn workers(&self) -> usize {
        match self.kind {
            DecoderKind::Fusion { workers, .. } => workers,
            _ => 1,
        }
    }

    pub fn decode(&mut self, defects: &[VertexIndex]) -> Result<Decoded, DecoderError> {
        self.decode_result(defects).map(|r| Decoded::from(&r))
    }

    /// True when the decoder reaches the oracle's weight and its correction
    /// reproduces the syndrome.
    pub fn verify(&mut self, defects: &[VertexIndex]) -> Result<bool, DecoderError> {
        let syndrome = self.graph.check_syndrome(defects)?;
        let (oracle, _) = exact_mwpm(&build_syndrome_graph(&self.graph, &syndrome, DEFAULT_CAP)?)?;
        let r = self.decode_result(defects)?;
        let flipped = syndrome_of(&self.graph, &ErrorPattern { edges: r.correction.clone() });
        Ok(r.primal_weight == oracle && flipped == syndrome && r.matching().covers_exactly(&syndrome.defects))
    }

    /// Releases the solver; later calls fail with [`DecoderError::Closed`].
    /// Closing twice is harmless.
    pub fn close(&mut self) {
        self.engine = None;
    }

    pub fn is_closed(&self) -> bool {
        self.engine.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_print() {
        for s in ["parity", "uf", "limited:3", "fusion:balanced:4:2", "fusion:mixed1:5:1", "fusion:linear:2:8"] {
            assert_eq!(s.parse::<DecoderKind>().unwrap().to_string(), s);
        }
        assert_eq!("limited:inf".parse::<DecoderKind>().unwrap(), DecoderKind::Limited { k: usize::MAX });
        for s in ["", "blossom", "limited", "limited:x", "fusion:tall:4:1", "fusion:balanced:4"] {
            assert!(s.parse::<DecoderKind>().is_err(), "{s}");
        }
    }

    #[test]
    fn empty_decode_and_close() {
        let mut d = Decoder::build(&CodeSpec::new(3, 2, 0.01), DecoderKind::Parity).unwrap();
        assert_eq!(d.decode(&[]).unwrap().weight, 0);
        assert!(d.verify(&[]).unwrap());
        d.close();
        d.close();
        assert_eq!(d.decode(&[]), Err(DecoderError::Closed));
    }

    #[test]
    fn bad_defects_are_reported() {
        let mut d = Decoder::build(&CodeSpec::new(3, 0, 0.01), DecoderKind::Uf).unwrap();
        assert!(matches!(d.decode(&[0]), Err(DecoderError::Syndrome(_))));
        assert!(matches!(d.decode(&[1, 1]), Err(DecoderError::Syndrome(_))));
    }
}
