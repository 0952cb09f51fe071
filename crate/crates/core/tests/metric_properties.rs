mod common;

use common::{horn_pa_mpjpe, random_tensor, rng};
use mgtnet::metrics::{auc, default_auc_grid, joint_errors, mpjpe, pa_mpjpe, pck, procrustes_align};
use mgtnet::Tensor;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::Rng;

fn similarity(pose: &Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let mut v = || r.random_range(-1.0..1.0);
    let rot = Rotation3::new(Vector3::new(v(), v(), v()) * 2.5);
    let shift = Vector3::new(v(), v(), v()) * 3.0;
    let s = 0.2 + 2.0 * (v() + 1.0);
    let data = pose
        .data()
        .chunks(3)
        .flat_map(|c| {
            let p = s * (rot * Vector3::new(c[0], c[1], c[2])) + shift;
            [p.x, p.y, p.z]
        })
        .collect();
    Tensor::new(pose.shape(), data).unwrap()
}

fn squared_residual(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum()
}

fn permute(t: &Tensor, perm: &[usize]) -> Tensor {
    Tensor::new(t.shape(), perm.iter().flat_map(|&i| t.row(i).to_vec()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pa_mpjpe_ignores_similarity_of_pred(seed in 0u64..100_000, n in 3usize..20) {
        let mut r = rng(seed);
        let (p, g) = (random_tensor(&mut r, &[n, 3]), random_tensor(&mut r, &[n, 3]));
        let moved = similarity(&p, seed + 1);
        prop_assert!((pa_mpjpe(&moved, &g).unwrap() - pa_mpjpe(&p, &g).unwrap()).abs() < 1e-9);
        prop_assert!((pa_mpjpe(&p, &g).unwrap() - horn_pa_mpjpe(&p, &g)).abs() < 1e-9);
    }

    #[test]
    fn mpjpe_sees_translation(seed in 0u64..100_000, n in 1usize..20, dx in 0.1f64..5.0) {
        let g = random_tensor(&mut rng(seed), &[n, 3]);
        let shifted = Tensor::new(&[n, 3], g.data().iter().enumerate().map(|(i, v)| if i % 3 == 0 { v + dx } else { *v }).collect()).unwrap();
        prop_assert!((mpjpe(&shifted, &g).unwrap() - dx).abs() < 1e-12);
    }

    #[test]
    fn pck_is_monotone(seed in 0u64..100_000, n in 1usize..20, t1 in 0.01f64..2.0, t2 in 0.01f64..2.0, grow in 1.0f64..3.0) {
        let mut r = rng(seed);
        let (p, g) = (random_tensor(&mut r, &[n, 3]), random_tensor(&mut r, &[n, 3]));
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let (ps, gs) = (std::slice::from_ref(&p), std::slice::from_ref(&g));
        prop_assert!(pck(ps, gs, lo).unwrap() <= pck(ps, gs, hi).unwrap());
        let farther = Tensor::new(&[n, 3], p.data().iter().zip(g.data()).map(|(a, b)| b + grow * (a - b)).collect()).unwrap();
        prop_assert!(pck(std::slice::from_ref(&farther), gs, lo).unwrap() <= pck(ps, gs, lo).unwrap());
    }

    #[test]
    fn alignment_never_increases_residual(seed in 0u64..100_000, n in 3usize..20) {
        let mut r = rng(seed);
        let (p, g) = (random_tensor(&mut r, &[n, 3]), random_tensor(&mut r, &[n, 3]));
        let aligned = procrustes_align(&p, &g).unwrap();
        prop_assert!(squared_residual(&aligned, &g) <= squared_residual(&p, &g) + 1e-12);
    }

    #[test]
    fn metrics_are_permutation_covariant(seed in 0u64..100_000, n in 3usize..20) {
        let mut r = rng(seed);
        let (p, g) = (random_tensor(&mut r, &[n, 3]), random_tensor(&mut r, &[n, 3]));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let (pp, gp) = (permute(&p, &perm), permute(&g, &perm));
        prop_assert!((mpjpe(&pp, &gp).unwrap() - mpjpe(&p, &g).unwrap()).abs() < 1e-12);
        prop_assert!((pa_mpjpe(&pp, &gp).unwrap() - pa_mpjpe(&p, &g).unwrap()).abs() < 1e-9);
        let mut e1 = joint_errors(&pp, &gp).unwrap();
        let mut e2 = joint_errors(&p, &g).unwrap();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        prop_assert_eq!(e1, e2);
        let grid = default_auc_grid("m");
        let a1 = auc(std::slice::from_ref(&pp), std::slice::from_ref(&gp), &grid).unwrap();
        let a2 = auc(std::slice::from_ref(&p), std::slice::from_ref(&g), &grid).unwrap();
        prop_assert_eq!(a1, a2);
    }
}
