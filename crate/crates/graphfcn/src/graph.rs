//! Graph model over the backbone's feature grid: Gaussian-weighted
//! nearest-neighbor adjacency, node annotations, and pooled node labels.

use std::collections::VecDeque;

use crate::data::{LabelMap, IGNORE};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

/// Node grid with adjacency, annotations and labels. Node n sits at grid
/// position (n / w, n % w).
#[derive(Debug, Clone)]
pub struct GridGraph {
    pub h: usize,
    pub w: usize,
    pub annotations: Tensor,
    pub adjacency: SparseMatrix,
    pub node_labels: Vec<Option<usize>>,
    pub node_stride: usize,
}

pub fn node_index(w: usize, row: usize, col: usize) -> usize {
    row * w + col
}

pub fn node_position(w: usize, node: usize) -> (usize, usize) {
    (node / w, node % w)
}

/// Gaussian-kernel adjacency over the h x w integer grid. Each node selects
/// its `l` nearest other nodes (Euclidean distance, ties broken by ascending
/// node index) with weight exp(-d^2 / (2 sigma^2)); the symmetric result
/// keeps an edge only where both endpoints selected each other (mutual
/// k-nearest neighbors). One-sided symmetrization would hand boundary-node
/// selections to interior nodes and inflate the 1-hop receptive field past
/// the 4-neighborhood that l=4 is meant to produce.
pub fn build_adjacency(h: usize, w: usize, l: usize, sigma: f64) -> Result<SparseMatrix> {
    let n = h * w;
    if n < 2 {
        return Err(Error::Parameter(format!("grid {h}x{w} has fewer than 2 nodes")));
    }
    if l == 0 || l >= n {
        return Err(Error::Parameter(format!(
            "neighbor count l={l} must satisfy 1 <= l < {n}"
        )));
    }
    if sigma <= 0.0 {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let mut chosen: Vec<std::collections::BTreeSet<usize>> = Vec::with_capacity(n);
    for a in 0..n {
        let (ar, ac) = node_position(w, a);
        // all pairwise squared distances, sorted by (d2, index)
        let mut cand: Vec<(i64, usize)> = (0..n)
            .filter(|&b| b != a)
            .map(|b| {
                let (br, bc) = node_position(w, b);
                let dr = ar as i64 - br as i64;
                let dc = ac as i64 - bc as i64;
                (dr * dr + dc * dc, b)
            })
            .collect();
        cand.sort();
        chosen.push(cand.iter().take(l).map(|&(_, b)| b).collect());
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for a in 0..n {
        let (ar, ac) = node_position(w, a);
        for &b in &chosen[a] {
            if !chosen[b].contains(&a) {
                continue;
            }
            let (br, bc) = node_position(w, b);
            let dr = ar as i64 - br as i64;
            let dc = ac as i64 - bc as i64;
            let d2 = (dr * dr + dc * dc) as f64;
            entries.push((a, b, (-d2 / (2.0 * sigma * sigma)).exp()));
        }
    }
    SparseMatrix::from_entries(n, n, entries)
}

/// Per-node annotation rows: concat(f1[:, i, j], f2[:, i, j], i/(h-1),
/// j/(w-1)). Coordinate terms are 0 when the extent is 1.
pub fn build_node_annotations(f1: &Tensor, f2: &Tensor) -> Result<Tensor> {
    if f1.shape().len() != 3 || f2.shape().len() != 3 || f1.shape()[1..] != f2.shape()[1..] {
        return Err(Error::ShapeMismatch {
            op: "build_node_annotations",
            lhs: f1.shape().to_vec(),
            rhs: f2.shape().to_vec(),
        });
    }
    let (c1, h, w) = (f1.shape()[0], f1.shape()[1], f1.shape()[2]);
    let c2 = f2.shape()[0];
    let s = c1 + c2 + 2;
    let mut out = Tensor::zeros(vec![h * w, s]);
    for i in 0..h {
        for j in 0..w {
            let row = i * w + j;
            for c in 0..c1 {
                out.data_mut()[row * s + c] = f1.at3(c, i, j);
            }
            for c in 0..c2 {
                out.data_mut()[row * s + c1 + c] = f2.at3(c, i, j);
            }
            out.data_mut()[row * s + c1 + c2] =
                if h > 1 { i as f64 / (h - 1) as f64 } else { 0.0 };
            out.data_mut()[row * s + c1 + c2 + 1] =
                if w > 1 { j as f64 / (w - 1) as f64 } else { 0.0 };
        }
    }
    Ok(out)
}

/// Majority-vote pooling of a raw label map into grid-node labels. IGNORE
/// pixels are excluded from the vote; an all-IGNORE cell yields None; vote
/// ties go to the lowest class index.
pub fn pool_node_labels(labels: &LabelMap, node_stride: usize) -> Result<Vec<Option<usize>>> {
    let (hh, ww) = (labels.height(), labels.width());
    if node_stride == 0 || hh < node_stride || ww < node_stride {
        return Err(Error::Parameter(format!(
            "node_stride {node_stride} invalid for {hh}x{ww} labels"
        )));
    }
    let gh = hh.div_ceil(node_stride);
    let gw = ww.div_ceil(node_stride);
    let mut out = Vec::with_capacity(gh * gw);
    for gi in 0..gh {
        for gj in 0..gw {
            let mut votes: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
            for i in gi * node_stride..((gi + 1) * node_stride).min(hh) {
                for j in gj * node_stride..((gj + 1) * node_stride).min(ww) {
                    let v = labels.at(i, j);
                    if v != IGNORE {
                        *votes.entry(v as usize).or_insert(0) += 1;
                    }
                }
            }
            // BTreeMap iteration is ascending, so > keeps the lowest index on ties
            let best = votes
                .iter()
                .fold(None, |acc: Option<(usize, usize)>, (&cls, &cnt)| match acc {
                    Some((_, bc)) if cnt <= bc => acc,
                    _ => Some((cls, cnt)),
                });
            out.push(best.map(|(cls, _)| cls));
        }
    }
    Ok(out)
}

/// Nodes within `hops` BFS steps of `node`, including itself.
pub fn receptive_field(
    adjacency: &SparseMatrix,
    node: usize,
    hops: usize,
) -> Result<std::collections::BTreeSet<usize>> {
    let n = adjacency.rows();
    if node >= n {
        return Err(Error::Parameter(format!("node {node} out of range for {n} nodes")));
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c, _) in adjacency.entries() {
        neighbors[r].push(c);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(node);
    queue.push_back((node, 0usize));
    while let Some((cur, d)) = queue.pop_front() {
        if d == hops {
            continue;
        }
        for &next in &neighbors[cur] {
            if seen.insert(next) {
                queue.push_back((next, d + 1));
            }
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_grid_weight() {
        let a = build_adjacency(1, 2, 1, 1.0).unwrap();
        assert_eq!(a.nnz(), 2);
        let expect = (-0.5f64).exp();
        for &(_, _, w) in a.entries() {
            assert!((w - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_l() {
        assert!(build_adjacency(2, 2, 4, 1.0).is_err());
        assert!(build_adjacency(2, 2, 0, 1.0).is_err());
    }

    #[test]
    fn center_node_links_four_neighborhood() {
        // 3x3 grid, l=4: center node 4 links exactly its 4-neighborhood
        let a = build_adjacency(3, 3, 4, 1.0).unwrap();
        let neigh: Vec<usize> = a
            .entries()
            .iter()
            .filter(|&&(r, _, _)| r == 4)
            .map(|&(_, c, _)| c)
            .collect();
        assert_eq!(neigh, vec![1, 3, 5, 7]);
        let expect = (-0.5f64).exp();
        for &(r, _, w) in a.entries() {
            if r == 4 {
                assert!((w - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjacency_matches_exhaustive_mutual_knn_oracle() {
        // oracle: enumerate every pairwise distance, take each node's 4
        // smallest with ascending-index tie-break, keep mutual pairs
        let (h, w, l) = (3usize, 3usize, 4usize);
        let n = h * w;
        let chosen: Vec<std::collections::BTreeSet<usize>> = (0..n)
            .map(|a| {
                let (ar, ac) = node_position(w, a);
                let mut cand: Vec<(i64, usize)> = (0..n)
                    .filter(|&b| b != a)
                    .map(|b| {
                        let (br, bc) = node_position(w, b);
                        let d2 = (ar as i64 - br as i64).pow(2) + (ac as i64 - bc as i64).pow(2);
                        (d2, b)
                    })
                    .collect();
                cand.sort();
                cand.into_iter().take(l).map(|(_, b)| b).collect()
            })
            .collect();
        // corner node 0's selection includes both d2=1 nodes, the center,
        // and the d2=4 tie resolved to the lower index
        assert_eq!(
            chosen[0],
            [1usize, 2, 3, 4].into_iter().collect::<std::collections::BTreeSet<_>>()
        );

        let a = build_adjacency(h, w, l, 1.0).unwrap();
        for r in 0..n {
            let got: std::collections::BTreeSet<usize> = a
                .entries()
                .iter()
                .filter(|&&(row, _, _)| row == r)
                .map(|&(_, c, _)| c)
                .collect();
            let expected: std::collections::BTreeSet<usize> = chosen[r]
                .iter()
                .copied()
                .filter(|&c| chosen[c].contains(&r))
                .collect();
            assert_eq!(got, expected, "row {r}");
        }
    }

    #[test]
    fn adjacency_symmetry_sweep() {
        for h in 1..=6usize {
            for w in 1..=6usize {
                if h * w < 2 {
                    continue;
                }
                for l in 1..=8.min(h * w - 1) {
                    for &sigma in &[0.5, 1.0, 2.0] {
                        let a = build_adjacency(h, w, l, sigma).unwrap();
                        assert!(a.is_symmetric(0.0), "h={h} w={w} l={l}");
                        assert!(a.entries().iter().all(|&(r, c, _)| r != c));
                        // weights are exp(-d^2/(2 sigma^2)) and in (0, 1]
                        for &(r, c, wgt) in a.entries() {
                            assert!(wgt > 0.0 && wgt <= 1.0);
                            let (rr, rc) = node_position(w, r);
                            let (cr, cc) = node_position(w, c);
                            let d2 = ((rr as i64 - cr as i64).pow(2)
                                + (rc as i64 - cc as i64).pow(2))
                                as f64;
                            let expect = (-d2 / (2.0 * sigma * sigma)).exp();
                            assert!((wgt - expect).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn annotations_corner_rows() {
        let f1 = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f2 = Tensor::new(vec![1, 2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let ann = build_node_annotations(&f1, &f2).unwrap();
        assert_eq!(ann.shape(), &[4, 4]);
        assert_eq!(&ann.data()[0..4], &[1.0, 5.0, 0.0, 0.0]);
        // node (1,1): coordinate tail (1, 1)
        assert_eq!(&ann.data()[12..16], &[4.0, 8.0, 1.0, 1.0]);
    }

    #[test]
    fn annotation_width_matches_channel_sum() {
        // S = C1 + C2 + 2 for any channel counts
        let f1 = Tensor::zeros(vec![5, 2, 3]);
        let f2 = Tensor::zeros(vec![7, 2, 3]);
        let ann = build_node_annotations(&f1, &f2).unwrap();
        assert_eq!(ann.shape(), &[6, 5 + 7 + 2]);
    }

    #[test]
    fn pool_constant_map() {
        let lm = LabelMap::filled(4, 4, 2);
        let pooled = pool_node_labels(&lm, 2).unwrap();
        assert_eq!(pooled, vec![Some(2); 4]);
    }

    #[test]
    fn pool_majority_and_tie() {
        let lm = LabelMap::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        assert_eq!(pool_node_labels(&lm, 2).unwrap(), vec![Some(1)]);
        let lm = LabelMap::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(pool_node_labels(&lm, 2).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn pool_ignore_handling() {
        let lm = LabelMap::new(2, 2, vec![IGNORE, IGNORE, IGNORE, 3]).unwrap();
        assert_eq!(pool_node_labels(&lm, 2).unwrap(), vec![Some(3)]);
        let lm = LabelMap::filled(2, 2, IGNORE);
        assert_eq!(pool_node_labels(&lm, 2).unwrap(), vec![None]);
    }

    #[test]
    fn pool_partial_border_cells() {
        // 3x3 map, stride 2 -> 2x2 grid with partial cells
        let lm = LabelMap::new(3, 3, vec![1, 1, 2, 1, 1, 2, 0, 0, 2]).unwrap();
        let pooled = pool_node_labels(&lm, 2).unwrap();
        assert_eq!(pooled, vec![Some(1), Some(2), Some(0), Some(2)]);
    }

    #[test]
    fn receptive_field_hops() {
        let a = build_adjacency(3, 3, 4, 1.0).unwrap();
        assert_eq!(receptive_field(&a, 4, 0).unwrap().len(), 1);
        let rf1 = receptive_field(&a, 4, 1).unwrap();
        assert_eq!(rf1.len(), 5, "center + 4-neighborhood");
        // sizes nondecreasing in hops, bounded by |N|
        let mut prev = 0;
        for hops in 0..5 {
            let rf = receptive_field(&a, 4, hops).unwrap();
            assert!(rf.len() >= prev && rf.len() <= 9);
            prev = rf.len();
        }
    }

    #[test]
    fn receptive_field_two_hops_interior() {
        // 5x5 grid, center node 12: 2 hops reach the 13-node diamond
        let a = build_adjacency(5, 5, 4, 1.0).unwrap();
        let rf = receptive_field(&a, 12, 2).unwrap();
        assert_eq!(rf.len(), 13);
        let expect: std::collections::BTreeSet<usize> =
            [2, 6, 7, 8, 10, 11, 12, 13, 14, 16, 17, 18, 22]
                .into_iter()
                .collect();
        assert_eq!(rf, expect);
    }

    #[test]
    fn receptive_field_path_graph() {
        // path 0-1-2; brute-force shortest paths say hops=2 from node 0
        // reaches everything
        let a = SparseMatrix::from_entries(
            3,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let rf = receptive_field(&a, 0, 2).unwrap();
        assert_eq!(rf.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
