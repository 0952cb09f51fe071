//! Skeleton graphs and the adjacency structures built on them.
//!
//! The central object is the *k-adjacency* matrix `Ã_k`: entry `(i, j)` is 1
//! when joints `i` and `j` are exactly `k` hops apart or when `i == j`. Unlike
//! the power `Ã^k`, which counts walks and therefore fills in every pair
//! within `k` hops, the `Ã_k` partition joint pairs by hop distance.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::SkeletonError;
use crate::tensor::Tensor;

/// Joint names of the conventional 17-joint Human3.6M skeleton.
pub const HUMAN36M_JOINTS: [&str; 17] = [
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
];

/// Bones of the conventional Human3.6M skeleton, rooted at the pelvis.
pub const HUMAN36M_EDGES: [(usize, usize); 16] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (5, 6),
    (0, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (8, 11),
    (11, 12),
    (12, 13),
    (8, 14),
    (14, 15),
    (15, 16),
];

/// Undirected joint graph with a designated root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonGraph {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    root: usize,
}

impl SkeletonGraph {
    /// Validates structure (indices, self-edges, duplicates). Connectivity is
    /// checked separately by [`SkeletonGraph::ensure_connected`].
    pub fn new(joint_names: Vec<String>, edges: Vec<(usize, usize)>, root: usize) -> Result<Self, SkeletonError> {
        let n = joint_names.len();
        if n == 0 {
            return Err(SkeletonError::Empty);
        }
        if root >= n {
            return Err(SkeletonError::RootOutOfRange { root, joints: n });
        }
        let mut seen = HashSet::new();
        for (index, &(a, b)) in edges.iter().enumerate() {
            for joint in [a, b] {
                if joint >= n {
                    return Err(SkeletonError::EdgeOutOfRange { index, joint, joints: n });
                }
            }
            if a == b {
                return Err(SkeletonError::SelfEdge { index, joint: a });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(SkeletonError::DuplicateEdge { index, a, b });
            }
        }
        Ok(Self {
            joint_names,
            edges,
            root,
        })
    }

    /// The conventional pelvis-rooted Human3.6M topology.
    pub fn human36m() -> Self {
        Self::new(
            HUMAN36M_JOINTS.iter().map(|s| s.to_string()).collect(),
            HUMAN36M_EDGES.to_vec(),
            0,
        )
        .expect("built-in skeleton is valid")
    }

    pub fn builtin(name: &str) -> Result<Self, SkeletonError> {
        match name {
            "human36m" | "h36m" => Ok(Self::human36m()),
            other => Err(SkeletonError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_joints()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        self.ensure_connected().is_ok()
    }

    pub fn ensure_connected(&self) -> Result<(), SkeletonError> {
        let d = hop_distances(self);
        match (0..self.num_joints()).find(|&j| d.get(self.root, j).is_none()) {
            Some(joint) => Err(SkeletonError::Disconnected {
                joint,
                name: self.joint_names[joint].clone(),
            }),
            None => Ok(()),
        }
    }

    /// Binary adjacency `A` (no self-loops).
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_joints();
        let mut a = Tensor::zeros(&[n, n]);
        for &(i, j) in &self.edges {
            a.set(&[i, j], 1.0);
            a.set(&[j, i], 1.0);
        }
        a
    }

    /// Parses a skeleton document:
    ///
    /// ```toml
    /// joints = ["pelvis", "hip", "knee"]
    /// edges = [[0, 1], [1, 2]]
    /// root = 0
    /// ```
    ///
    /// The graph must be connected.
    pub fn from_toml_str(text: &str) -> Result<Self, SkeletonError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            joints: Vec<String>,
            edges: Vec<toml::Spanned<[usize; 2]>>,
            root: toml::Spanned<usize>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            SkeletonError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let edge_lines: Vec<usize> = doc.edges.iter().map(|e| line_col(text, e.span().start).0).collect();
        let root_line = line_col(text, doc.root.span().start).0;
        let edges = doc.edges.iter().map(|e| (e.get_ref()[0], e.get_ref()[1])).collect();
        let at = |line: usize, err: SkeletonError| SkeletonError::AtLine {
            line,
            source: Box::new(err),
        };
        let graph = Self::new(doc.joints, edges, *doc.root.get_ref()).map_err(|e| match e {
            SkeletonError::SelfEdge { index, .. }
            | SkeletonError::DuplicateEdge { index, .. }
            | SkeletonError::EdgeOutOfRange { index, .. } => at(edge_lines[index], e),
            SkeletonError::RootOutOfRange { .. } => at(root_line, e),
            other => other,
        })?;
        graph.ensure_connected()?;
        Ok(graph)
    }

    pub fn load(path: &Path) -> Result<Self, SkeletonError> {
        let text = std::fs::read_to_string(path).map_err(|e| SkeletonError::Parse {
            line: 0,
            column: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml_str(&text)
    }

    /// Serialises to the document format accepted by [`SkeletonGraph::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let joints: Vec<String> = self
            .joint_names
            .iter()
            .map(|n| toml::Value::String(n.clone()).to_string())
            .collect();
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        format!(
            "joints = [{}]\nedges = [{}]\nroot = {}\n",
            joints.join(", "),
            edges.join(", "),
            self.root
        )
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// All-pairs shortest hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceMatrix {
    n: usize,
    d: Vec<usize>,
}

impl HopDistanceMatrix {
    /// Marker for unreachable pairs; exceeds any real hop count.
    pub const UNREACHABLE: usize = usize::MAX;

    pub fn from_raw(n: usize, d: Vec<usize>) -> Self {
        assert_eq!(d.len(), n * n);
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Hop count between `i` and `j`, `None` when unreachable.
    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.d[i * self.n + j];
        (v != Self::UNREACHABLE).then_some(v)
    }

    pub fn raw(&self) -> &[usize] {
        &self.d
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> usize {
        self.d.iter().copied().filter(|&v| v != Self::UNREACHABLE).max().unwrap_or(0)
    }

    pub fn eccentricity(&self, i: usize) -> usize {
        (0..self.n).filter_map(|j| self.get(i, j)).max().unwrap_or(0)
    }
}

impl fmt::Display for HopDistanceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| self.get(i, j).map_or_else(|| "inf".into(), |v| v.to_string()))
                .map(|s| format!("{s:>3}"))
                .collect();
            writeln!(f, "{}", row.join(""))?;
        }
        Ok(())
    }
}

/// Breadth-first search from every joint.
pub fn hop_distances(g: &SkeletonGraph) -> HopDistanceMatrix {
    let n = g.num_joints();
    let adj = g.neighbors();
    let mut d = vec![HopDistanceMatrix::UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut d[s * n..(s + 1) * n];
        row[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == HopDistanceMatrix::UNREACHABLE {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    HopDistanceMatrix { n, d }
}

/// `[Ã_k]_ij = 1` if `d_ij = k` or `i = j`, else 0.
pub fn k_adjacency(d: &HopDistanceMatrix, k: usize) -> Tensor {
    let n = d.len();
    let mut a = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if i == j || d.get(i, j) == Some(k) {
                a.set(&[i, j], 1.0);
            }
        }
    }
    a
}

/// Symmetric normalisation `D^{-1/2} A D^{-1/2}` with `D = diag(A·1)`.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor, SkeletonError> {
    let (n, m) = a.dims2().map_err(|_| SkeletonError::ZeroDegree { row: 0 })?;
    assert_eq!(n, m, "adjacency must be square");
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    if let Some(row) = deg.iter().position(|&d| d <= 0.0) {
        return Err(SkeletonError::ZeroDegree { row });
    }
    let mut out = a.clone();
    for i in 0..n {
        for j in 0..n {
            out.set(&[i, j], a.at(&[i, j]) / (deg[i] * deg[j]).sqrt());
        }
    }
    Ok(out)
}

/// `a^k` by repeated multiplication; `a^0 = I`.
pub fn adjacency_power(a: &Tensor, k: usize) -> Tensor {
    let (n, _) = a.dims2().expect("adjacency_power: square matrix");
    let mut out = Tensor::eye(n);
    for _ in 0..k {
        out = out.matmul(a).expect("square matrices");
    }
    out
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_eigen_range(a: &Tensor) -> (f64, f64) {
    let (n, _) = a.dims2().expect("square matrix");
    let m = DMatrix::from_row_slice(n, n, a.data());
    let eig = m.symmetric_eigen();
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// The stack `{Ã_k}` and `{Â_k}` for `k = 0..=max_hops`.
#[derive(Debug, Clone)]
pub struct DisentangledAdjacencySet {
    max_hops: usize,
    distances: HopDistanceMatrix,
    raw: Vec<Tensor>,
    normalized: Vec<Tensor>,
}

impl DisentangledAdjacencySet {
    pub fn new(g: &SkeletonGraph, max_hops: usize) -> Self {
        let distances = hop_distances(g);
        let raw: Vec<Tensor> = (0..=max_hops).map(|k| k_adjacency(&distances, k)).collect();
        let normalized = raw
            .iter()
            .map(|a| normalize_adjacency(a).expect("self-loops give positive degrees"))
            .collect();
        Self {
            max_hops,
            distances,
            raw,
            normalized,
        }
    }

    pub fn max_hops(&self) -> usize {
        self.max_hops
    }

    pub fn distances(&self) -> &HopDistanceMatrix {
        &self.distances
    }

    pub fn raw(&self) -> &[Tensor] {
        &self.raw
    }

    pub fn normalized(&self) -> &[Tensor] {
        &self.normalized
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

/// `Â` of the skeleton: normalised `A + I`.
pub fn normalized_adjacency(g: &SkeletonGraph) -> Tensor {
    let mut a = g.adjacency();
    for i in 0..g.num_joints() {
        a.set(&[i, i], 1.0);
    }
    normalize_adjacency(&a).expect("self-loops give positive degrees")
}

/// `Â^k` for `k = 0..=max_hops`, the supports of a high-order graph convolution.
pub fn normalized_adjacency_powers(g: &SkeletonGraph, max_hops: usize) -> Vec<Tensor> {
    let a_hat = normalized_adjacency(g);
    (0..=max_hops).map(|k| adjacency_power(&a_hat, k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparsityRow {
    pub k: usize,
    /// Nonzeros of `Ã^k` with `Ã = A + I`.
    pub power_nnz: usize,
    /// Nonzeros of the k-adjacency `Ã_k`.
    pub k_adjacency_nnz: usize,
}

/// Nonzero counts of `Ã^k` and `Ã_k` for `k = 1..=k_max`.
pub fn sparsity_report(g: &SkeletonGraph, k_max: usize) -> Vec<SparsityRow> {
    let d = hop_distances(g);
    let a_tilde = k_adjacency(&d, 1);
    (1..=k_max)
        .map(|k| SparsityRow {
            k,
            power_nnz: adjacency_power(&a_tilde, k).nnz(0.0),
            k_adjacency_nnz: k_adjacency(&d, k).nnz(0.0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> SkeletonGraph {
        SkeletonGraph::new(
            (0..n).map(|i| format!("j{i}")).collect(),
            (1..n).map(|i| (i - 1, i)).collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn two_node_distances() {
        let d = hop_distances(&path(2));
        assert_eq!(d.raw(), &[0, 1, 1, 0]);
    }

    #[test]
    fn pelvis_hops_reach_five() {
        let g = SkeletonGraph::human36m();
        let d = hop_distances(&g);
        let labels: Vec<usize> = (0..17).map(|j| d.get(0, j).unwrap()).collect();
        assert_eq!(*labels.iter().max().unwrap(), 5);
        assert!(labels.iter().all(|&l| l <= 5));
        assert_eq!(labels[13], 5);
        assert_eq!(labels[10], 4);
    }

    #[test]
    fn k_adjacency_edge_cases() {
        let g = SkeletonGraph::human36m();
        let d = hop_distances(&g);
        assert_eq!(k_adjacency(&d, 0), Tensor::eye(17));
        assert_eq!(k_adjacency(&d, d.diameter() + 1), Tensor::eye(17));

        let mut expected = g.adjacency();
        for i in 0..17 {
            expected.set(&[i, i], 1.0);
        }
        assert_eq!(k_adjacency(&d, 1), expected);
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_adjacency(&Tensor::eye(4)).unwrap(), Tensor::eye(4));
        let a = Tensor::filled(&[2, 2], 1.0);
        let n = normalize_adjacency(&a).unwrap();
        assert!(n.data().iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!(matches!(
            normalize_adjacency(&Tensor::zeros(&[2, 2])),
            Err(SkeletonError::ZeroDegree { row: 0 })
        ));
    }

    #[test]
    fn normalization_entry_formula() {
        let g = SkeletonGraph::human36m();
        let d = hop_distances(&g);
        let a = k_adjacency(&d, 2);
        let n = normalize_adjacency(&a).unwrap();
        let deg: Vec<f64> = (0..17).map(|i| a.row(i).iter().sum()).collect();
        for i in 0..17 {
            for j in 0..17 {
                let want = a.at(&[i, j]) / (deg[i] * deg[j]).sqrt();
                assert_eq!(n.at(&[i, j]), want);
            }
        }
        let (lo, hi) = symmetric_eigen_range(&n);
        assert!(lo >= -1.0 - 1e-12 && hi <= 1.0 + 1e-12, "{lo} {hi}");
        assert_eq!(n, n.transpose().unwrap());
    }

    #[test]
    fn powers() {
        let g = path(3);
        let a = k_adjacency(&hop_distances(&g), 1);
        assert_eq!(adjacency_power(&a, 0), Tensor::eye(3));
        assert_eq!(adjacency_power(&a, 1), a);
        // walks 0→1→2 only
        assert_eq!(adjacency_power(&a, 2).at(&[0, 2]), 1.0);
    }

    #[test]
    fn complete_graph_sparsity() {
        let g = SkeletonGraph::new(
            (0..5).map(|i| i.to_string()).collect(),
            (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect(),
            0,
        )
        .unwrap();
        let rows = sparsity_report(&g, 3);
        assert_eq!(rows[0].power_nnz, rows[0].k_adjacency_nnz);
        for r in &rows[1..] {
            assert_eq!(r.k_adjacency_nnz, 5);
            assert_eq!(r.power_nnz, 25);
        }
    }

    #[test]
    fn structural_validation() {
        let names = || vec!["a".to_string(), "b".to_string()];
        assert!(matches!(SkeletonGraph::new(vec![], vec![], 0), Err(SkeletonError::Empty)));
        assert!(matches!(
            SkeletonGraph::new(names(), vec![(0, 0)], 0),
            Err(SkeletonError::SelfEdge { index: 0, joint: 0 })
        ));
        assert!(matches!(
            SkeletonGraph::new(names(), vec![(0, 1), (1, 0)], 0),
            Err(SkeletonError::DuplicateEdge { index: 1, .. })
        ));
        assert!(matches!(
            SkeletonGraph::new(names(), vec![(0, 2)], 0),
            Err(SkeletonError::EdgeOutOfRange { joint: 2, .. })
        ));
        assert!(matches!(
            SkeletonGraph::new(names(), vec![], 3),
            Err(SkeletonError::RootOutOfRange { .. })
        ));
        let g = SkeletonGraph::new(names(), vec![], 0).unwrap();
        assert!(matches!(g.ensure_connected(), Err(SkeletonError::Disconnected { joint: 1, .. })));
        assert_eq!(hop_distances(&g).get(0, 1), None);
    }

    #[test]
    fn document_round_trip() {
        let g = SkeletonGraph::human36m();
        let text = g.to_toml_string();
        assert_eq!(SkeletonGraph::from_toml_str(&text).unwrap(), g);
    }

    #[test]
    fn document_errors_carry_lines() {
        let bad_edge = "joints = [\"a\", \"b\", \"c\"]\nedges = [\n  [0, 1],\n  [1, 7],\n]\nroot = 0\n";
        let err = SkeletonGraph::from_toml_str(bad_edge).unwrap_err();
        assert!(matches!(err, SkeletonError::AtLine { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("edges[1]"), "{err}");

        let unknown = "joints = [\"a\"]\nedges = []\nroot = 0\nextra = 1\n";
        let err = SkeletonGraph::from_toml_str(unknown).unwrap_err();
        assert!(matches!(err, SkeletonError::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("extra"), "{err}");

        let missing = "joints = [\"a\"]\nedges = []\n";
        assert!(matches!(SkeletonGraph::from_toml_str(missing), Err(SkeletonError::Parse { .. })));

        let disconnected = "joints = [\"a\", \"b\"]\nedges = []\nroot = 0\n";
        assert!(matches!(
            SkeletonGraph::from_toml_str(disconnected),
            Err(SkeletonError::Disconnected { .. })
        ));
    }
}
