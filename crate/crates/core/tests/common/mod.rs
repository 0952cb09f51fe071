//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mgtnet::{SkeletonGraph, Tensor};
use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INF: usize = usize::MAX;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Connected graph on `n` joints: a random spanning tree plus `extra` chords.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: usize) -> SkeletonGraph {
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u, v));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    SkeletonGraph::new(
        (0..n).map(|i| format!("j{i}")).collect(),
        edges.into_iter().collect(),
        rng.random_range(0..n),
    )
    .unwrap()
}

/// All-pairs hop counts by Floyd–Warshall relaxation.
pub fn floyd_warshall(g: &SkeletonGraph) -> Vec<Vec<usize>> {
    let n = g.num_joints();
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in g.edges() {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] != INF && d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn k_adjacency_oracle(d: &[Vec<usize>], k: usize) -> Vec<Vec<f64>> {
    let n = d.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j || d[i][j] == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn normalize_oracle(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    a.iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, &x)| x / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

/// Nonzeros of `(A + I)^k` counted by expanding walk endpoints from every joint.
pub fn walk_nnz(g: &SkeletonGraph, k: usize) -> usize {
    let n = g.num_joints();
    let mut nbrs = vec![vec![]; n];
    for &(a, b) in g.edges() {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    let mut total = 0;
    for start in 0..n {
        let mut reach: BTreeSet<usize> = [start].into();
        for _ in 0..k {
            let mut next = reach.clone();
            for &v in &reach {
                next.extend(nbrs[v].iter().copied());
            }
            reach = next;
        }
        total += reach.len();
    }
    total
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| row.iter().enumerate().map(|(k, &x)| x * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (n, m) = t.dims2().unwrap();
    (0..n).map(|i| t.data()[i * m..(i + 1) * m].to_vec()).collect()
}

/// `ReLU(Σ_k S_k H W_k + b)`, one term at a time.
pub fn multi_hop_oracle(supports: &[Vec<Vec<f64>>], h: &[Vec<f64>], weights: &[Vec<Vec<f64>>], bias: &[f64]) -> Vec<Vec<f64>> {
    let n = h.len();
    let out_f = bias.len();
    let mut acc = vec![vec![0.0; out_f]; n];
    for (s, w) in supports.iter().zip(weights) {
        let term = matmul(&matmul(s, h), w);
        for i in 0..n {
            for j in 0..out_f {
                acc[i][j] += term[i][j];
            }
        }
    }
    acc.iter()
        .map(|r| r.iter().zip(bias).map(|(x, b)| (x + b).max(0.0)).collect())
        .collect()
}

/// Query, key and value projections of one attention head.
pub type HeadWeights = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Multi-head attention with explicit loops over rows, heads and columns.
pub fn msa_oracle(
    x: &[Vec<f64>],
    heads: &[HeadWeights],
    output: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = heads[0].0[0].len();
    let mut cat = vec![Vec::new(); n];
    for (wq, wk, wv) in heads {
        let q = matmul(x, wq);
        let k = matmul(x, wk);
        let v = matmul(x, wv);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..d {
                cat[i].push(e.iter().zip(&v).map(|(ej, vj)| ej / z * vj[c]).sum());
            }
        }
    }
    matmul(&cat, output)
}

/// Zero-padded dilated 2D convolution, summing only in-bounds taps.
pub fn dilated_conv_oracle(x: &[Vec<f64>], w: &[Vec<f64>], dilation: usize) -> Vec<Vec<f64>> {
    let (rows, cols) = (x.len() as i64, x[0].len() as i64);
    let m = (w.len() as i64 - 1) / 2;
    let d = dilation as i64;
    let mut out = vec![vec![0.0; cols as usize]; rows as usize];
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for r in -m..=m {
                for c in -m..=m {
                    let (a, b) = (i + d * r, j + d * c);
                    if (0..rows).contains(&a) && (0..cols).contains(&b) {
                        s += x[a as usize][b as usize] * w[(r + m) as usize][(c + m) as usize];
                    }
                }
            }
            out[i as usize][j as usize] = s;
        }
    }
    out
}

fn points(t: &Tensor) -> Vec<Vector3<f64>> {
    t.data().chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// PA-MPJPE by Horn's closed-form quaternion solution for the rotation,
/// followed by the least-squares scale and translation.
pub fn horn_pa_mpjpe(pred: &Tensor, gt: &Tensor) -> f64 {
    let p = points(pred);
    let g = points(gt);
    let n = p.len() as f64;
    let mp = p.iter().sum::<Vector3<f64>>() / n;
    let mg = g.iter().sum::<Vector3<f64>>() / n;
    let pc: Vec<_> = p.iter().map(|v| v - mp).collect();
    let gc: Vec<_> = g.iter().map(|v| v - mg).collect();
    let mut s = Matrix3::zeros();
    for (a, b) in pc.iter().zip(&gc) {
        s += a * b.transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let best = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(best);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let r = Matrix3::new(
        w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z,
    );
    let var_p: f64 = pc.iter().map(|v| v.norm_squared()).sum();
    let scale = if var_p > 0.0 {
        pc.iter().zip(&gc).map(|(a, b)| b.dot(&(r * a))).sum::<f64>() / var_p
    } else {
        0.0
    };
    pc.iter()
        .zip(&gc)
        .map(|(a, b)| (scale * (r * a) - b).norm())
        .sum::<f64>()
        / n
}

pub fn mpjpe_oracle(pred: &Tensor, gt: &Tensor) -> f64 {
    let p = points(pred);
    let g = points(gt);
    p.iter().zip(&g).map(|(a, b)| (a - b).norm()).sum::<f64>() / p.len() as f64
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
