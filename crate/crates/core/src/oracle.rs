//! Exact reference decoder: syndrome graph from repeated Dijkstra, then a
//! dynamic program over defect subsets. Exponential, so capped.

use crate::error::OracleError;
use crate::framework::PerfectMatching;
use crate::graph::{ModelGraph, Syndrome, VertexIndex, Weight};
use crate::paths::ShortestPaths;

pub const DEFAULT_CAP: usize = 20;

const INF: Weight = Weight::MAX / 4;

/// Complete graph over the defects plus each defect's boundary distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeGraph {
    pub defects: Vec<VertexIndex>,
    /// `pairwise[i][j]`: shortest-path weight between defects `i` and `j`.
    pub pairwise: Vec<Vec<Option<Weight>>>,
    /// Closest virtual vertex and its distance, per defect.
    pub to_boundary: Vec<Option<(VertexIndex, Weight)>>,
}

pub fn build_syndrome_graph(g: &ModelGraph, s: &Syndrome, cap: usize) -> Result<SyndromeGraph, OracleError> {
    if s.len() > cap {
        return Err(OracleError::TooManyDefects { count: s.len(), cap });
    }
    let mut paths = ShortestPaths::new(g.vertex_count());
    let n = s.len();
    let mut pairwise = vec![vec![None; n]; n];
    let mut to_boundary = vec![None; n];
    for (i, &u) in s.defects.iter().enumerate() {
        let mut nearest = None;
        paths.run(g, u, |x, d| {
            if nearest.is_none() && g.is_virtual(x) {
                nearest = Some((x, d));
            }
            false
        });
        to_boundary[i] = nearest;
        for (j, &v) in s.defects.iter().enumerate() {
            pairwise[i][j] = paths.settled_distance(v);
        }
    }
    Ok(SyndromeGraph { defects: s.defects.clone(), pairwise, to_boundary })
}

/// Minimum-weight perfect matching where any defect may instead go to the
/// boundary. `O(2^n · n)`.
pub fn exact_mwpm(sg: &SyndromeGraph) -> Result<(Weight, PerfectMatching), OracleError> {
    let n = sg.defects.len();
    if n > 30 {
        return Err(OracleError::TooManyDefects { count: n, cap: 30 });
    }
    let full = (1usize << n) - 1;
    // best[mask]: cheapest way to match every defect outside `mask`
    let mut best = vec![INF; full + 1];
    let mut choice = vec![u8::MAX; full + 1];
    best[full] = 0;
    for mask in (0..full).rev() {
        let i = (!mask).trailing_zeros() as usize;
        let with_i = mask | (1 << i);
        if let Some((_, b)) = sg.to_boundary[i] {
            if best[with_i] < INF && b + best[with_i] < best[mask] {
                best[mask] = b + best[with_i];
                choice[mask] = i as u8;
            }
        }
        for j in (i + 1)..n {
            if mask & (1 << j) != 0 {
                continue;
            }
            let Some(w) = sg.pairwise[i][j] else { continue };
            let rest = best[with_i | (1 << j)];
            if rest < INF && w + rest < best[mask] {
                best[mask] = w + rest;
                choice[mask] = j as u8;
            }
        }
    }
    if best[0] >= INF {
        return Err(OracleError::Infeasible);
    }
    let mut matching = PerfectMatching::default();
    let mut mask = 0usize;
    while mask != full {
        let i = (!mask).trailing_zeros() as usize;
        let j = choice[mask] as usize;
        let u = sg.defects[i];
        if j == i {
            let (b, w) = sg.to_boundary[i].unwrap();
            matching.boundary.push((u, b, w));
            mask |= 1 << i;
        } else {
            let v = sg.defects[j];
            matching.pairs.push((u.min(v), u.max(v), sg.pairwise[i][j].unwrap()));
            mask |= (1 << i) | (1 << j);
        }
    }
    Ok((best[0], matching))
}

/// Oracle weight for a syndrome, with the default cap.
pub fn oracle_weight(g: &ModelGraph, s: &Syndrome) -> Result<Weight, OracleError> {
    exact_mwpm(&build_syndrome_graph(g, s, DEFAULT_CAP)?).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg(pair: Weight, b0: Weight, b1: Weight) -> SyndromeGraph {
        SyndromeGraph {
            defects: vec![1, 2],
            pairwise: vec![vec![Some(0), Some(pair)], vec![Some(pair), Some(0)]],
            to_boundary: vec![Some((0, b0)), Some((3, b1))],
        }
    }

    #[test]
    fn empty_is_zero() {
        let empty = SyndromeGraph { defects: vec![], pairwise: vec![], to_boundary: vec![] };
        assert_eq!(exact_mwpm(&empty).unwrap().0, 0);
    }

    #[test]
    fn two_defects_prefer_the_cheaper_option() {
        let (w, m) = exact_mwpm(&sg(4, 5, 5)).unwrap();
        assert_eq!(w, 4);
        assert_eq!(m.pairs, vec![(1, 2, 4)]);
        let (w, m) = exact_mwpm(&sg(12, 5, 5)).unwrap();
        assert_eq!(w, 10);
        assert_eq!(m.boundary.len(), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let g = crate::graph::build_surface_code_graph(&crate::graph::CodeSpec::new(7, 3, 0.1)).unwrap();
        let s = g.check_syndrome(&(0..g.vertex_count() as u32).filter(|&v| !g.is_virtual(v)).take(21).collect::<Vec<_>>()).unwrap();
        assert!(matches!(build_syndrome_graph(&g, &s, 20), Err(OracleError::TooManyDefects { count: 21, cap: 20 })));
    }

    #[test]
    fn brute_force_agrees_on_tiny_instances() {
        // all matchings of 4 defects enumerated by hand
        let w = [[0, 3, 8, 9], [3, 0, 4, 7], [8, 4, 0, 2], [9, 7, 2, 0]];
        let b = [5, 6, 6, 1];
        let sg = SyndromeGraph {
            defects: vec![0, 1, 2, 3],
            pairwise: w.iter().map(|r| r.iter().map(|&x| Some(x)).collect()).collect(),
            to_boundary: b.iter().enumerate().map(|(i, &x)| Some((10 + i as u32, x))).collect(),
        };
        let mut brute = INF;
        fn rec(left: &mut Vec<usize>, acc: Weight, w: &[[Weight; 4]; 4], b: &[Weight; 4], best: &mut Weight) {
            if left.is_empty() {
                *best = (*best).min(acc);
                return;
            }
            let i = left.remove(0);
            rec(left, acc + b[i], w, b, best);
            for k in 0..left.len() {
                let j = left.remove(k);
                rec(left, acc + w[i][j], w, b, best);
                left.insert(k, j);
            }
            left.insert(0, i);
        }
        rec(&mut vec![0, 1, 2, 3], 0, &w, &b, &mut brute);
        let (got, m) = exact_mwpm(&sg).unwrap();
        assert_eq!(got, brute);
        assert_eq!(m.weight(), brute);
    }
}
