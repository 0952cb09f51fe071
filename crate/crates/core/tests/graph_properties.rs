mod common;

use common::{floyd_warshall, random_connected_graph, rng, walk_nnz};
use mgtnet::skeleton::{adjacency_power, hop_distances, k_adjacency, normalize_adjacency};
use mgtnet::{SkeletonGraph, Tensor};
use proptest::prelude::*;

fn graph(seed: u64, n: usize) -> SkeletonGraph {
    let mut r = rng(seed);
    random_connected_graph(&mut r, n, n / 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hop_levels_partition_all_pairs(seed in 0u64..10_000, n in 1usize..20) {
        let g = graph(seed, n);
        let d = hop_distances(&g);
        let diameter = d.diameter();
        let mut sum = Tensor::eye(n);
        for k in 0..=diameter {
            let a = k_adjacency(&d, k);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let v = sum.at(&[i, j]) + a.at(&[i, j]);
                        sum.set(&[i, j], v);
                    }
                }
            }
        }
        prop_assert_eq!(sum.data().iter().filter(|&&x| x != 1.0).count(), 0);
    }

    #[test]
    fn k_adjacency_supports_are_disjoint(seed in 0u64..10_000, n in 2usize..20, k1 in 1usize..6, k2 in 1usize..6) {
        prop_assume!(k1 != k2);
        let d = hop_distances(&graph(seed, n));
        let (a, b) = (k_adjacency(&d, k1), k_adjacency(&d, k2));
        for i in 0..n {
            for j in 0..n {
                prop_assert!(i == j || a.at(&[i, j]) == 0.0 || b.at(&[i, j]) == 0.0);
            }
        }
    }

    #[test]
    fn distances_match_floyd_warshall(seed in 0u64..10_000, n in 1usize..20) {
        let g = graph(seed, n);
        let fw = floyd_warshall(&g);
        let d = hop_distances(&g);
        for (i, row) in fw.iter().enumerate() {
            for (j, &dist) in row.iter().enumerate() {
                prop_assert_eq!(d.get(i, j), Some(dist));
            }
        }
    }

    #[test]
    fn normalization_entry_formula(seed in 0u64..10_000, n in 1usize..12, k in 0usize..4) {
        let a = k_adjacency(&hop_distances(&graph(seed, n)), k);
        let out = normalize_adjacency(&a).unwrap();
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(out.at(&[i, j]), a.at(&[i, j]) / (deg[i] * deg[j]).sqrt());
            }
        }
    }

    #[test]
    fn k_adjacency_pattern_within_power_pattern(seed in 0u64..10_000, n in 1usize..16, k in 0usize..6) {
        let g = graph(seed, n);
        let d = hop_distances(&g);
        let power = adjacency_power(&k_adjacency(&d, 1), k);
        let ak = k_adjacency(&d, k);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(ak.at(&[i, j]) == 0.0 || power.at(&[i, j]) != 0.0);
            }
        }
        prop_assert_eq!(power.nnz(0.0), walk_nnz(&g, k));
    }
}
