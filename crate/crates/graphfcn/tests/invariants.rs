//! Property-based invariants over the sparse algebra, graph construction,
//! label pooling, and metrics.

use graphfcn::autodiff::Tape;
use graphfcn::data::{LabelMap, IGNORE};
use graphfcn::graph;
use graphfcn::metrics::ConfusionMatrix;
use graphfcn::tensor::matmul;
use graphfcn::{SparseMatrix, Tensor};
use proptest::prelude::*;

fn sparse_strategy(max_n: usize) -> impl Strategy<Value = (SparseMatrix, usize)> {
    (1..=max_n, 1..=max_n, 1usize..=4).prop_flat_map(|(n, m, c)| {
        let cell = prop_oneof![3 => Just(0.0), 2 => -1.0..1.0f64];
        (
            proptest::collection::vec(cell, n * m),
            Just(n),
            Just(m),
            Just(c),
        )
            .prop_map(move |(vals, n, m, c)| {
                let entries: Vec<(usize, usize, f64)> = vals
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i / m, i % m, *v))
                    .collect();
                (SparseMatrix::from_entries(n, m, entries).unwrap(), c)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 100,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn sparse_matmul_agrees_with_dense((s, c) in sparse_strategy(32),
                                       seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = s.cols();
        let x = Tensor::new(
            vec![m, c],
            (0..m * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let dense = matmul(&s.to_dense(), &x).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let fast = tape.sparse_dense_matmul(&s, xv).unwrap();
        prop_assert!(tape.value(fast).max_abs_diff(&dense) < 1e-12);
        prop_assert!(s.mul_dense(&x).unwrap().max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn adjacency_is_symmetric_and_loop_free(h in 1usize..7, w in 1usize..7,
                                            l in 1usize..9,
                                            sigma in 0.3f64..3.0) {
        prop_assume!(h * w >= 2);
        let l = l.min(h * w - 1);
        let a = graph::build_adjacency(h, w, l, sigma).unwrap();
        prop_assert!(a.is_symmetric(0.0));
        prop_assert!(a.entries().iter().all(|&(r, c, _)| r != c));
        // every weight is a Gaussian of a realizable squared distance
        for &(r, c, wgt) in a.entries() {
            let (ri, rj) = graph::node_position(w, r);
            let (ci, cj) = graph::node_position(w, c);
            let d2 = (ri as f64 - ci as f64).powi(2) + (rj as f64 - cj as f64).powi(2);
            let expect = (-d2 / (2.0 * sigma * sigma)).exp();
            prop_assert!((wgt - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_label_occurs_in_its_block(h in 1usize..20, w in 1usize..20,
                                        stride in 1usize..8,
                                        seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        prop_assume!(stride <= h && stride <= w);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut labels = LabelMap::filled(h, w, 0);
        for i in 0..h {
            for j in 0..w {
                let v = if rng.random_range(0.0..1.0) < 0.2 {
                    IGNORE
                } else {
                    rng.random_range(0..4u8)
                };
                labels.set(i, j, v);
            }
        }
        let pooled = graph::pool_node_labels(&labels, stride).unwrap();
        let (gh, gw) = (h.div_ceil(stride), w.div_ceil(stride));
        prop_assert_eq!(pooled.len(), gh * gw);
        for (node, lab) in pooled.iter().enumerate() {
            let (bi, bj) = graph::node_position(gw, node);
            let mut block = Vec::new();
            for i in bi * stride..((bi + 1) * stride).min(h) {
                for j in bj * stride..((bj + 1) * stride).min(w) {
                    if labels.at(i, j) != IGNORE {
                        block.push(labels.at(i, j) as usize);
                    }
                }
            }
            match lab {
                None => prop_assert!(block.is_empty()),
                Some(v) => {
                    let winners = block.iter().filter(|&&b| b == *v).count();
                    prop_assert!(winners > 0);
                    // majority: nothing occurs strictly more often
                    for other in 0..4 {
                        let n = block.iter().filter(|&&b| b == other).count();
                        prop_assert!(n <= winners);
                    }
                }
            }
        }
    }

    #[test]
    fn confusion_accumulation_is_order_invariant(seed in 0u64..1000,
                                                 chunks in 1usize..5) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ncl = 4usize;
        let maps: Vec<(LabelMap, LabelMap)> = (0..chunks)
            .map(|_| {
                let h = rng.random_range(1..6);
                let w = rng.random_range(1..6);
                let mut truth = LabelMap::filled(h, w, 0);
                let mut pred = LabelMap::filled(h, w, 0);
                for i in 0..h {
                    for j in 0..w {
                        let t = if rng.random_range(0.0..1.0) < 0.1 {
                            IGNORE
                        } else {
                            rng.random_range(0..ncl as u8)
                        };
                        truth.set(i, j, t);
                        pred.set(i, j, rng.random_range(0..ncl as u8));
                    }
                }
                (pred, truth)
            })
            .collect();

        let mut all = ConfusionMatrix::new(ncl);
        for (p, t) in &maps {
            all.accumulate(p, t).unwrap();
        }
        // merge per-sample matrices in reverse order
        let mut merged = ConfusionMatrix::new(ncl);
        for (p, t) in maps.iter().rev() {
            let mut one = ConfusionMatrix::new(ncl);
            one.accumulate(p, t).unwrap();
            merged.merge(&one);
        }
        for t in 0..ncl {
            for p in 0..ncl {
                prop_assert_eq!(all.count(t, p), merged.count(t, p));
            }
        }
        if all.total() > 0 {
            let acc = all.pixel_accuracy().unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            let miou = all.mean_iou().unwrap();
            prop_assert!((0.0..=1.0).contains(&miou));
            let fw = all.freq_weighted_iou().unwrap();
            prop_assert!((0.0..=1.0).contains(&fw));
        }
    }
}
